use rand::Rng;

use crate::catalog::ItemId;
use crate::error::{Error, Result};

/// Number of leading retrieval scores considered by [`difficulty_score`].
pub const DIFFICULTY_DEPTH: usize = 100;

/// Score-dispersion difficulty predictor: population standard deviation of
/// the top retrieval scores over the absolute value of their mean. Higher
/// means a more discriminative ranking, i.e. an easier target.
pub fn difficulty_score(final_turn_scores: &[f64]) -> Result<f64> {
    if final_turn_scores.len() < 2 {
        return Err(Error::Input(format!(
            "difficulty needs at least 2 scores, got {}",
            final_turn_scores.len()
        )));
    }
    let top = &final_turn_scores[..final_turn_scores.len().min(DIFFICULTY_DEPTH)];
    if top.iter().any(|s| !s.is_finite()) {
        return Err(Error::Input("non-finite retrieval score".into()));
    }
    let n = top.len() as f64;
    let mean = top.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Degenerate("retrieval scores have zero mean".into()));
    }
    let var = top.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean.abs())
}

/// Splits `len` ranked items into `strata` contiguous half-open bands of
/// (near) equal width.
pub fn band_bounds(len: usize, strata: usize) -> Vec<(usize, usize)> {
    (0..strata)
        .map(|b| (b * len / strata, (b + 1) * len / strata))
        .collect()
}

/// Per-band quotas: `n / strata` each, the remainder going to the widest
/// bands first; quotas that exceed a band's size spill into bands with room.
fn band_quotas(bounds: &[(usize, usize)], n: usize) -> Vec<usize> {
    let strata = bounds.len();
    let sizes: Vec<usize> = bounds.iter().map(|(a, b)| b - a).collect();
    let mut quotas = vec![n / strata; strata];
    let mut order: Vec<usize> = (0..strata).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    for &b in order.iter().take(n % strata) {
        quotas[b] += 1;
    }
    let mut spill = 0;
    for b in 0..strata {
        if quotas[b] > sizes[b] {
            spill += quotas[b] - sizes[b];
            quotas[b] = sizes[b];
        }
    }
    for &b in &order {
        if spill == 0 {
            break;
        }
        let room = (sizes[b] - quotas[b]).min(spill);
        quotas[b] += room;
        spill -= room;
    }
    quotas
}

/// Difficulty-stratified sample of `n` targets.
///
/// Targets are sorted by score (ties by id), cut into `strata` equal-width
/// rank bands, and each band contributes `floor(n/strata)` or
/// `ceil(n/strata)` targets drawn uniformly without replacement. The result
/// is returned in ascending difficulty-rank order.
pub fn stratified_sample<R: Rng + ?Sized>(
    targets: &[(ItemId, f64)],
    n: usize,
    strata: usize,
    rng: &mut R,
) -> Result<Vec<ItemId>> {
    if strata == 0 {
        return Err(Error::Input("strata must be at least 1".into()));
    }
    if n > targets.len() {
        return Err(Error::Input(format!(
            "cannot sample {n} targets from {} candidates",
            targets.len()
        )));
    }
    let mut ranked: Vec<&(ItemId, f64)> = targets.iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let strata = strata.min(ranked.len().max(1));
    let bounds = band_bounds(ranked.len(), strata);
    let quotas = band_quotas(&bounds, n);
    let mut picked: Vec<usize> = Vec::with_capacity(n);
    for (&(lo, hi), &q) in bounds.iter().zip(&quotas) {
        let mut draws: Vec<usize> = rand::seq::index::sample(rng, hi - lo, q)
            .into_iter()
            .map(|i| lo + i)
            .collect();
        draws.sort_unstable();
        picked.extend(draws);
    }
    Ok(picked.into_iter().map(|i| ranked[i].0.clone()).collect())
}
