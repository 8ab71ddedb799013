//! Item catalog with embeddings and brute-force similarity search.
//!
//! Embedding file layout:
//!
//! ```text
//! #dim 4
//! #category shoes        (optional)
//! item_a<TAB>0.1 0.2 0.3 0.4
//! ```
//!
//! Items are stored in ascending id order; that order is the tie-breaker for
//! every ranking produced from a catalog.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque item identifier: non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ItemId(String);

impl ItemId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::Input(format!("invalid item id {id:?}")));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ItemId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        ItemId::new(value)
    }
}

impl From<ItemId> for String {
    fn from(value: ItemId) -> Self {
        value.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::str::FromStr for ItemId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ItemId::new(s)
    }
}

/// Cosine similarity of two equal-length, non-zero vectors, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero vector".into()));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Returns `None` for the zero vector.
pub(crate) fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| a.iter().map(|x| x / n).collect())
}

/// Ordering for `(index, score)` pairs: score descending, then index ascending.
fn by_score_then_index(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    category: String,
    dim: usize,
    ids: Vec<ItemId>,
    values: Vec<f64>,
    unit: Vec<f64>,
    index: HashMap<ItemId, usize>,
}

impl Catalog {
    /// Builds a catalog, validating dimension, finiteness, non-zero norm and id
    /// uniqueness. Insertion order does not matter.
    pub fn new<I>(category: impl Into<String>, dim: usize, items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ItemId, Vec<f64>)>,
    {
        if dim == 0 {
            return Err(Error::Input("catalog dimension must be positive".into()));
        }
        let mut items: Vec<(ItemId, Vec<f64>)> = items.into_iter().collect();
        if items.is_empty() {
            return Err(Error::Input("catalog is empty".into()));
        }
        items.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in items.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Input(format!("duplicate item id `{}`", pair[0].0)));
            }
        }
        let mut ids = Vec::with_capacity(items.len());
        let mut values = Vec::with_capacity(items.len() * dim);
        let mut unit = Vec::with_capacity(items.len() * dim);
        for (id, v) in items {
            check_vector(&id, &v, dim)?;
            let u = normalized(&v)
                .ok_or_else(|| Error::Degenerate(format!("zero embedding for `{id}`")))?;
            values.extend_from_slice(&v);
            unit.extend_from_slice(&u);
            ids.push(id);
        }
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(Self {
            category: category.into(),
            dim,
            ids,
            values,
            unit,
            index,
        })
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Item ids in ascending order.
    pub fn ids(&self) -> &[ItemId] {
        &self.ids
    }

    pub fn contains(&self, id: &ItemId) -> bool {
        self.index.contains_key(id)
    }

    pub fn position(&self, id: &ItemId) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::NotFound(id.to_string()))
    }

    pub fn embedding(&self, id: &ItemId) -> Result<&[f64]> {
        let i = self.position(id)?;
        Ok(&self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub(crate) fn unit_at(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    pub fn unit_embedding(&self, id: &ItemId) -> Result<&[f64]> {
        Ok(self.unit_at(self.position(id)?))
    }

    /// Cosine similarity between two catalog items.
    pub fn similarity(&self, a: &ItemId, b: &ItemId) -> Result<f64> {
        let (ua, ub) = (self.unit_embedding(a)?, self.unit_embedding(b)?);
        Ok(dot(ua, ub).clamp(-1.0, 1.0))
    }

    /// Top-`k` items by cosine similarity to an arbitrary query vector,
    /// ties broken by ascending id.
    pub fn rank_by_vector(&self, query: &[f64], k: usize) -> Result<Vec<(ItemId, f64)>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: query.len(),
            });
        }
        let q = normalized(query)
            .ok_or_else(|| Error::Degenerate("zero query vector".into()))?;
        let scored = (0..self.len()).map(|i| (i, dot(&q, self.unit_at(i)).clamp(-1.0, 1.0)));
        Ok(self.top_k(scored.collect(), k))
    }

    fn top_k(&self, mut scored: Vec<(usize, f64)>, k: usize) -> Vec<(ItemId, f64)> {
        let k = k.min(scored.len());
        if k == 0 {
            return Vec::new();
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by_score_then_index);
            scored.truncate(k);
        }
        scored.sort_by(by_score_then_index);
        scored
            .into_iter()
            .map(|(i, s)| (self.ids[i].clone(), s))
            .collect()
    }

    /// Writes the catalog in the embedding file format. Floats use Rust's
    /// shortest round-trip representation, so a reload is exact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("#dim {}\n", self.dim));
        if !self.category.is_empty() {
            out.push_str(&format!("#category {}\n", self.category));
        }
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id.as_str());
            out.push('\t');
            let row = &self.values[i * self.dim..(i + 1) * self.dim];
            let cols: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&cols.join(" "));
            out.push('\n');
        }
        let mut f = fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        f.write_all(out.as_bytes())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn check_vector(id: &ItemId, v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    if let Some(x) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Input(format!("non-finite value {x} in `{id}`")));
    }
    Ok(())
}

/// The `k` nearest neighbours of a catalog item by cosine similarity,
/// excluding the item itself. Ties are broken by ascending id.
pub fn nearest_neighbors(catalog: &Catalog, query: &ItemId, k: usize) -> Result<Vec<(ItemId, f64)>> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    let qi = catalog.position(query)?;
    let q = catalog.unit_at(qi);
    let scored: Vec<(usize, f64)> = (0..catalog.len())
        .filter(|&i| i != qi)
        .map(|i| (i, dot(q, catalog.unit_at(i)).clamp(-1.0, 1.0)))
        .collect();
    Ok(catalog.top_k(scored, k))
}

/// Parses an embedding file.
pub fn load_catalog(path: &Path) -> Result<Catalog> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_catalog(path, &text)
}

pub(crate) fn parse_catalog(path: &Path, text: &str) -> Result<Catalog> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty file, expected `#dim D` header"))?;
    let dim: usize = header
        .strip_prefix("#dim ")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::parse(path, 1, format!("expected `#dim D` header, got {header:?}")))?;

    let default_category = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut category = None;
    let mut items: Vec<(ItemId, Vec<f64>)> = Vec::new();
    let mut seen: HashMap<ItemId, usize> = HashMap::new();

    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix("#category ") {
            category = Some(c.trim().to_string());
            continue;
        }
        if line.starts_with('#') {
            return Err(Error::parse(path, lineno, format!("unknown directive {line:?}")));
        }
        let (id, rest) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, lineno, "expected `id<TAB>values`"))?;
        let id = ItemId::new(id).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let values = rest
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, lineno, format!("bad float: {e}")))?;
        if values.len() != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::parse(path, lineno, "non-finite value"));
        }
        if values.iter().all(|&x| x == 0.0) {
            return Err(Error::parse(path, lineno, format!("zero embedding for `{id}`")));
        }
        if let Some(first) = seen.insert(id.clone(), lineno) {
            return Err(Error::parse(
                path,
                lineno,
                format!("duplicate item id `{id}` (first seen at line {first})"),
            ));
        }
        items.push((id, values));
    }
    if items.is_empty() {
        return Err(Error::parse(path, 1, "catalog has no items"));
    }
    Catalog::new(category.unwrap_or(default_category), dim, items)
}
