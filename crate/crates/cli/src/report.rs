use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;

use altereval_core::eval::{improvement, load_report, write_file, Metric, RunReport, REPORT_HEADER};
use altereval_core::simulate::SimulatorSpec;
use altereval_core::Error;
use anyhow::{Context, Result};
use clap::Args;

use crate::UsageError;

const METRICS: [Metric; 3] = [Metric::Sr1, Metric::Ndcg10, Metric::Mrr10];

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Directory of report CSVs written by `simulate`.
    #[arg(long)]
    reports: PathBuf,
    /// Where to write table.csv, table.txt and curves.csv (defaults to the reports directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn is_report(path: &std::path::Path) -> Result<bool> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut first = String::new();
    BufReader::new(f).read_line(&mut first)?;
    Ok(first.trim_end() == REPORT_HEADER.join(","))
}

fn load_dir(dir: &std::path::Path) -> Result<Vec<RunReport>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.sort();
    let mut reports = Vec::new();
    for p in paths {
        if p.extension().is_some_and(|e| e == "csv") && is_report(&p)? {
            reports.push(load_report(&p)?);
        }
    }
    Ok(reports)
}

/// One row of the final-turn table.
struct Row {
    label: String,
    values: [f64; 3],
}

/// Table row label and grouping key of a simulator. MetaSimProb thresholds
/// share a row, which keeps the best value of each metric.
fn row_key(spec: &SimulatorSpec) -> (u8, usize, usize, String) {
    let cap = |m: Option<usize>| m.map_or(String::new(), |m| format!("-max{m}"));
    match spec {
        SimulatorSpec::Base => (0, 0, 0, "SimBase".into()),
        SimulatorSpec::Tolerance {
            tolerance,
            max_switches,
        } => (
            1,
            *tolerance,
            0,
            format!("MetaSimTol-tol{tolerance}{}", cap(*max_switches)),
        ),
        SimulatorSpec::GainLoss {
            tolerance,
            max_switches,
            ..
        } => (
            1,
            *tolerance,
            1,
            format!("MetaSimProb-tol{tolerance}{}", cap(*max_switches)),
        ),
    }
}

struct Table {
    sut: String,
    rows: Vec<Row>,
    improvement: [Option<f64>; 3],
}

fn build_table(sut: &str, reports: &[&RunReport]) -> Result<Table> {
    let base = reports
        .iter()
        .find(|r| r.simulator_spec == "simbase")
        .ok_or_else(|| UsageError(format!("no simbase report for `{sut}`")))?;
    let metas: Vec<RunReport> = reports
        .iter()
        .filter(|r| r.simulator_spec != "simbase")
        .map(|r| (*r).clone())
        .collect();
    if metas.is_empty() {
        return Err(UsageError(format!("no meta-simulator report to compare with simbase for `{sut}`")).into());
    }
    let turn = base.per_turn.len();
    if let Some(r) = reports.iter().find(|r| r.per_turn.len() != turn) {
        return Err(UsageError(format!("`{}` has {} turns, simbase has {turn}", r.simulator_spec, r.per_turn.len())).into());
    }
    let mut grouped: BTreeMap<(u8, usize, usize, String), [f64; 3]> = BTreeMap::new();
    for r in reports {
        let spec: SimulatorSpec = r.simulator_spec.parse()?;
        let last = r.final_row().expect("reports have rows");
        let values = METRICS.map(|m| last.get(m));
        grouped
            .entry(row_key(&spec))
            .and_modify(|v| {
                for i in 0..3 {
                    v[i] = v[i].max(values[i]);
                }
            })
            .or_insert(values);
    }
    let rows = grouped
        .into_iter()
        .map(|((_, _, _, label), values)| Row { label, values })
        .collect();
    let mut imp = [None; 3];
    for (i, m) in METRICS.iter().enumerate() {
        imp[i] = match improvement(base, &metas, *m, turn) {
            Ok(v) => Some(v),
            Err(Error::Undefined(_)) => None,
            Err(e) => return Err(e.into()),
        };
    }
    Ok(Table {
        sut: sut.to_string(),
        rows,
        improvement: imp,
    })
}

fn fmt_improvement(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |v| format!("{v:.1}"))
}

fn render_text(tables: &[Table]) -> String {
    let mut s = String::new();
    for t in tables {
        let width = t.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(10);
        let _ = writeln!(s, "{}", t.sut);
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}  {:>8}", "simulator", "SR@1", "NDCG@10", "MRR@10");
        for r in &t.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8.3}  {:>8.3}  {:>8.3}",
                r.label, r.values[0], r.values[1], r.values[2]
            );
        }
        let [a, b, c] = t.improvement.map(fmt_improvement);
        let _ = writeln!(s, "{:<width$}  {a:>8}  {b:>8}  {c:>8}", "% Improv.");
        s.push('\n');
    }
    s
}

fn render_csv(tables: &[Table]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sut", "simulator", "sr1", "ndcg10", "mrr10"])?;
    for t in tables {
        for r in &t.rows {
            let [a, b, c] = r.values.map(|v| format!("{v:.6}"));
            w.write_record([t.sut.as_str(), &r.label, &a, &b, &c])?;
        }
        let [a, b, c] = t.improvement.map(fmt_improvement);
        w.write_record([t.sut.as_str(), "% Improv.", &a, &b, &c])?;
    }
    Ok(w.into_inner()?)
}

fn render_curves(reports: &[RunReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sut", "simulator", "turn", "sr1", "ndcg10", "mrr10"])?;
    for r in reports {
        for row in &r.per_turn {
            w.write_record([
                r.sut_spec.clone(),
                r.simulator_spec.clone(),
                row.turn.to_string(),
                format!("{:.6}", row.sr1),
                format!("{:.6}", row.ndcg10),
                format!("{:.6}", row.mrr10),
            ])?;
        }
    }
    Ok(w.into_inner()?)
}

pub fn run(args: ReportArgs) -> Result<()> {
    let reports = load_dir(&args.reports)?;
    if reports.is_empty() {
        return Err(UsageError(format!("no reports in {}", args.reports.display())).into());
    }
    let mut by_sut: BTreeMap<&str, Vec<&RunReport>> = BTreeMap::new();
    for r in &reports {
        by_sut.entry(r.sut_spec.as_str()).or_default().push(r);
    }
    let tables: Vec<Table> = by_sut
        .iter()
        .map(|(sut, reps)| build_table(sut, reps))
        .collect::<Result<_>>()?;
    let out = args.out.unwrap_or(args.reports);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let text = render_text(&tables);
    write_file(&out.join("table.txt"), text.as_bytes())?;
    write_file(&out.join("table.csv"), &render_csv(&tables)?)?;
    write_file(&out.join("curves.csv"), &render_curves(&reports)?)?;
    print!("{text}");
    Ok(())
}
