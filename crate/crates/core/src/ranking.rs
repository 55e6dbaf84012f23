//! Full-assortment rankings and their CSV form.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::FallbackRanking;
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};

/// A user's ranking of the whole assortment: a personalized prefix followed
/// by the remaining items in fallback order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRanking {
    pub user_id: UserId,
    pub items: Vec<ItemId>,
    pub prefix_len: usize,
    /// Scores of the prefix items (empty when the model has none).
    pub scores: Vec<f64>,
}

impl FullRanking {
    /// Appends every fallback item not already in `prefix`.
    pub fn complete(
        user_id: UserId,
        prefix: Vec<ItemId>,
        scores: Vec<f64>,
        fallback: &FallbackRanking,
    ) -> Self {
        debug_assert!(scores.is_empty() || scores.len() == prefix.len());
        let prefix_len = prefix.len();
        let taken: HashSet<&ItemId> = prefix.iter().collect();
        let rest: Vec<ItemId> = fallback
            .items()
            .iter()
            .filter(|i| !taken.contains(i))
            .cloned()
            .collect();
        let mut items = prefix;
        items.extend(rest);
        Self {
            user_id,
            items,
            prefix_len,
            scores,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn prefix(&self) -> &[ItemId] {
        &self.items[..self.prefix_len]
    }

    /// 1-based rank of every item.
    pub fn rank_lookup(&self) -> HashMap<&ItemId, u64> {
        self.items
            .iter()
            .enumerate()
            .map(|(pos, item)| (item, pos as u64 + 1))
            .collect()
    }

    /// Whether the ranking holds every item of `assortment` exactly once and
    /// nothing else.
    pub fn is_permutation_of(&self, assortment: &[ItemId]) -> bool {
        if self.items.len() != assortment.len() {
            return false;
        }
        let mut seen = HashSet::with_capacity(self.items.len());
        let expected: HashSet<&ItemId> = assortment.iter().collect();
        self.items
            .iter()
            .all(|i| expected.contains(i) && seen.insert(i))
    }
}

/// Writes `user_id,rank,item_id,score` rows; the score is empty outside the
/// personalized prefix.
pub fn write_rankings_csv<W: Write>(writer: W, rankings: &[FullRanking]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "rank", "item_id", "score"])
        .map_err(io)?;
    for r in rankings {
        for (pos, item) in r.items.iter().enumerate() {
            let score = r
                .scores
                .get(pos)
                .map(|s| format!("{s:e}"))
                .unwrap_or_default();
            w.write_record([
                r.user_id.as_str(),
                &(pos + 1).to_string(),
                item.as_str(),
                &score,
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rankings written by [`write_rankings_csv`]. Rows of one user must be
/// contiguous and in rank order; the prefix is the leading run of scored rows.
pub fn read_rankings_csv<R: Read>(reader: R) -> Result<Vec<FullRanking>> {
    let mut out: Vec<FullRanking> = Vec::new();
    let mut r = csv::Reader::from_reader(reader);
    for (idx, rec) in r.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            reason: e.to_string(),
        })?;
        let malformed = |reason: &str| Error::MalformedRow {
            line,
            reason: reason.to_owned(),
        };
        let user = rec.get(0).ok_or_else(|| malformed("missing user_id"))?;
        let rank: usize = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("rank is not a positive integer"))?;
        let item = rec.get(2).ok_or_else(|| malformed("missing item_id"))?;
        let score = rec.get(3).unwrap_or("");
        let starts_new = out.last().is_none_or(|last| last.user_id.as_str() != user);
        if starts_new {
            out.push(FullRanking {
                user_id: UserId::new(user),
                items: Vec::new(),
                prefix_len: 0,
                scores: Vec::new(),
            });
        }
        let current = out.last_mut().expect("pushed above");
        if rank != current.items.len() + 1 {
            return Err(malformed("ranks must be contiguous and start at 1"));
        }
        current.items.push(ItemId::new(item));
        if !score.is_empty() {
            if current.prefix_len != current.items.len() - 1 {
                return Err(malformed("scored row after the unscored tail"));
            }
            let s: f64 = score
                .parse()
                .map_err(|_| malformed("score is not a number"))?;
            current.scores.push(s);
            current.prefix_len += 1;
        }
    }
    Ok(out)
}

/// Hex SHA-256 digest.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
