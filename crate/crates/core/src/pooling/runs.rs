use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::catalog::ItemId;
use crate::error::{Error, Result};

/// Final-turn rankings of one system, per target. Lines use the six-column
/// run layout `target Q0 item rank score system`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub system: String,
    pub rankings: BTreeMap<ItemId, Vec<(ItemId, f64)>>,
}

impl Run {
    pub fn ranking(&self, target: &ItemId) -> Option<&[(ItemId, f64)]> {
        self.rankings.get(target).map(Vec::as_slice)
    }
}

pub fn load_run(path: &Path) -> Result<Run> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut rows: BTreeMap<ItemId, Vec<(usize, ItemId, f64)>> = BTreeMap::new();
    let mut system: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(path, lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let bad = |e: String| Error::parse(path, lineno, e);
        let target = ItemId::new(cols[0]).map_err(|e| bad(e.to_string()))?;
        let item = ItemId::new(cols[2]).map_err(|e| bad(e.to_string()))?;
        let rank: usize = cols[3].parse().map_err(|_| bad(format!("bad rank {:?}", cols[3])))?;
        let score: f64 = cols[4].parse().map_err(|_| bad(format!("bad score {:?}", cols[4])))?;
        match &system {
            None => system = Some(cols[5].to_string()),
            Some(s) if s != cols[5] => {
                return Err(bad(format!("mixed systems `{s}` and `{}` in one run", cols[5])))
            }
            _ => {}
        }
        rows.entry(target).or_default().push((rank, item, score));
    }
    let rankings = rows
        .into_iter()
        .map(|(t, mut r)| {
            r.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            (t, r.into_iter().map(|(_, i, s)| (i, s)).collect())
        })
        .collect();
    Ok(Run {
        system: system.unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        }),
        rankings,
    })
}

pub fn save_run(path: &Path, run: &Run) -> Result<()> {
    let mut out = String::new();
    for (target, ranking) in &run.rankings {
        for (rank, (item, score)) in ranking.iter().enumerate() {
            out.push_str(&format!("{target} Q0 {item} {} {score:?} {}\n", rank + 1, run.system));
        }
    }
    let mut f = fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
