//! Cosine similarity between items (matrix columns) and between users
//! (matrix rows), with an optional power-law exponent.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::InteractionMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Items,
    Users,
}

/// Dense cosine similarity of two nonnegative vectors.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>();
    let nv = v.iter().map(|b| b * b).sum::<f64>();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    // sqrt of the product so that identical vectors give exactly 1
    Ok((dot / (nu * nv).sqrt()).clamp(0.0, 1.0))
}

/// Sparse symmetric similarity matrix. The diagonal is implicitly 1 and is
/// not stored; every stored value lies in (0, 1] and already carries the
/// exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<String>,
    neighbors: Vec<Vec<(u32, f64)>>,
    exponent: f64,
}

impl SimilarityMatrix {
    /// Builds a matrix from explicit unordered pairs (mirrored internally).
    pub fn from_pairs(
        ids: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize, f64)>,
        exponent: f64,
    ) -> Result<Self> {
        let mut neighbors: Vec<Vec<(u32, f64)>> = vec![Vec::new(); ids.len()];
        for (a, b, s) in pairs {
            if a >= ids.len() || b >= ids.len() {
                return Err(Error::IdMismatch(format!("pair ({a}, {b}) out of range")));
            }
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::DomainError(format!("similarity {s} outside (0, 1]")));
            }
            if a == b {
                continue;
            }
            neighbors[a].push((b as u32, s));
            neighbors[b].push((a as u32, s));
        }
        for row in &mut neighbors {
            row.sort_by_key(|&(j, _)| j);
            row.dedup_by_key(|&mut (j, _)| j);
        }
        Ok(Self {
            ids,
            neighbors,
            exponent,
        })
    }

    pub fn empty(ids: Vec<String>) -> Self {
        let n = ids.len();
        Self {
            ids,
            neighbors: vec![Vec::new(); n],
            exponent: 1.0,
        }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Stored off-diagonal neighbors of `a`, sorted by index.
    pub fn neighbors(&self, a: usize) -> &[(u32, f64)] {
        &self.neighbors[a]
    }

    /// Neighbor indices of `a` from strongest to weakest, ties by index.
    pub fn neighbors_by_strength(&self, a: usize) -> Vec<u32> {
        let mut ns = self.neighbors[a].clone();
        ns.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        ns.into_iter().map(|(j, _)| j).collect()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let row = &self.neighbors[a];
        row.binary_search_by_key(&(b as u32), |&(j, _)| j)
            .map(|pos| row[pos].1)
            .unwrap_or(0.0)
    }

    /// Number of stored unordered pairs.
    pub fn n_pairs(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Writes `id_a,id_b,similarity` rows (each unordered pair once, `a < b`
    /// by index) with 12 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["id_a", "id_b", "similarity"]).map_err(io)?;
        for (a, row) in self.neighbors.iter().enumerate() {
            for &(b, s) in row.iter().filter(|&&(b, _)| b as usize > a) {
                w.write_record([
                    self.ids[a].as_str(),
                    self.ids[b as usize].as_str(),
                    &format_significant(s, 12),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads triples written by [`SimilarityMatrix::write_csv`] against a
    /// known id list.
    pub fn read_csv<R: Read>(reader: R, ids: Vec<String>, exponent: f64) -> Result<Self> {
        let index: std::collections::HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut pairs = Vec::new();
        let mut r = csv::Reader::from_reader(reader);
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::MalformedRow {
                line: line + 2,
                reason: e.to_string(),
            })?;
            let malformed = |reason: String| Error::MalformedRow {
                line: line + 2,
                reason,
            };
            let lookup = |k: usize| {
                let id = rec.get(k).unwrap_or("");
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::UnknownId(id.to_owned()))
            };
            let s: f64 = rec
                .get(2)
                .unwrap_or("")
                .parse()
                .map_err(|_| malformed("similarity is not a number".into()))?;
            pairs.push((lookup(0)?, lookup(1)?, s));
        }
        drop(index);
        Self::from_pairs(ids, pairs, exponent)
    }
}

/// Decimal rendering with `digits` significant digits.
pub fn format_significant(value: f64, digits: usize) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

type SparseVec = Vec<(u32, f64)>;

/// Pairwise cosine similarity over matrix columns (`Axis::Items`) or rows
/// (`Axis::Users`), each value raised to `exponent`.
///
/// With `top_m = Some(m)` each node keeps its `m` strongest neighbors; a pair
/// survives if either endpoint keeps it, so the result stays symmetric.
/// Selection happens before exponentiation, which is monotone on [0, 1] and
/// cannot change it.
pub fn build_similarity_matrix(
    m: &InteractionMatrix,
    axis: Axis,
    exponent: f64,
    top_m: Option<usize>,
) -> Result<SimilarityMatrix> {
    if !(exponent >= 1.0) || !exponent.is_finite() {
        return Err(Error::Config(format!(
            "similarity exponent must be >= 1, got {exponent}"
        )));
    }
    if m.n_users() == 0 || m.n_items() == 0 {
        return Err(Error::DomainError("interaction matrix is empty".into()));
    }
    let (vectors, transposed, ids): (Vec<SparseVec>, Vec<SparseVec>, Vec<String>) = match axis {
        Axis::Items => (
            m.columns(),
            m.rows().to_vec(),
            m.items().iter().map(|i| i.to_string()).collect(),
        ),
        Axis::Users => (
            m.rows().to_vec(),
            m.columns(),
            m.users().iter().map(|u| u.to_string()).collect(),
        ),
    };
    let n = vectors.len();
    let sq_norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.iter().map(|&(_, x)| x * x).sum::<f64>())
        .collect();

    let kept: Vec<Vec<(u32, f64)>> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n], Vec::<u32>::new()),
            |(acc, touched), a| {
                if sq_norms[a] == 0.0 {
                    return Vec::new();
                }
                for &(k, xa) in &vectors[a] {
                    for &(b, xb) in &transposed[k as usize] {
                        if b as usize == a {
                            continue;
                        }
                        if acc[b as usize] == 0.0 {
                            touched.push(b);
                        }
                        acc[b as usize] += xa * xb;
                    }
                }
                let mut row: Vec<(u32, f64)> = touched
                    .drain(..)
                    .filter_map(|b| {
                        let dot = std::mem::take(&mut acc[b as usize]);
                        let s = (dot / (sq_norms[a] * sq_norms[b as usize]).sqrt()).min(1.0);
                        (s > 0.0).then_some((b, s))
                    })
                    .collect();
                if let Some(cap) = top_m {
                    if row.len() > cap {
                        row.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
                        row.truncate(cap);
                    }
                }
                row.sort_by_key(|&(b, _)| b);
                row
            },
        )
        .collect();

    // union of kept pairs keeps the matrix symmetric under the cap
    let mut neighbors: Vec<Vec<(u32, f64)>> = kept.clone();
    if top_m.is_some() {
        for (a, row) in kept.iter().enumerate() {
            for &(b, s) in row {
                neighbors[b as usize].push((a as u32, s));
            }
        }
        for row in &mut neighbors {
            row.sort_by_key(|&(b, _)| b);
            row.dedup_by_key(|&mut (b, _)| b);
        }
    }
    if exponent != 1.0 {
        for row in &mut neighbors {
            for cell in row.iter_mut() {
                cell.1 = cell.1.powf(exponent);
            }
            row.retain(|&(_, s)| s > 0.0);
        }
    }
    Ok(SimilarityMatrix {
        ids,
        neighbors,
        exponent,
    })
}
