//! Network-regression recommender producing long personalized rankings.
//!
//! The network joins three edge sets: user-user similarities, item-item
//! similarities and the user's purchases. For a (user, item) pair every node
//! on a two-step path from the user to the item contributes one evidence
//! pair `(x, y)`:
//!
//! * a similar user `v`: `x = sim(u, v)`, `y = purchase(v, i)`;
//! * a purchased item `j`: `x = purchase(u, j)`, `y = sim(j, i)`.
//!
//! A least-squares line through the origin is fitted to the pairs and the
//! item is scored by the p-value of the model F test (lower is better).
//! Pairs with no fit (fewer than two pairs, or all `x` zero) score 1 and are
//! left to the fallback ordering.

use std::cmp::Ordering;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::FallbackRanking;
use crate::error::{Error, Result};
use crate::ids::{ItemId, UserId};
use crate::ingest::{
    extract_item_matrix, extract_user_matrix, InteractionMatrix, MatrixSpec, TransactionLog,
    ValueMode,
};
use crate::ranking::FullRanking;
use crate::similarity::{build_similarity_matrix, Axis, SimilarityMatrix};
use crate::stats::ln_f_sf;

/// Residual sums below this fraction of `sum(y^2)` count as an exact fit.
const EXACT_FIT_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CousinConfig {
    /// Item-side window in days (`None` = all history).
    pub tau_days: Option<u32>,
    /// User-side order percentile in (0, 100].
    pub sigma_percent: f64,
    /// Exponent on item similarities.
    pub alpha: f64,
    /// Exponent on user similarities.
    pub beta: f64,
    /// Strongest neighbors kept per node.
    pub top_m: Option<usize>,
    /// Personalized prefix length N.
    pub n_prefix: usize,
    /// Drop the item itself as an intermediate node when the user bought it.
    pub leave_one_out: bool,
    pub value_mode: ValueMode,
}

impl Default for CousinConfig {
    fn default() -> Self {
        Self {
            tau_days: None,
            sigma_percent: 100.0,
            alpha: 1.0,
            beta: 1.0,
            top_m: Some(100),
            n_prefix: 4000,
            leave_one_out: false,
            value_mode: ValueMode::Binary,
        }
    }
}

impl CousinConfig {
    pub fn matrix_spec(&self, reference_date: NaiveDate) -> MatrixSpec {
        MatrixSpec {
            tau_days: self.tau_days,
            sigma_percent: self.sigma_percent,
            reference_date,
            value_mode: self.value_mode,
        }
    }
}

/// Evidence for one (user, item) pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidencePairs {
    pub pairs: Vec<(f64, f64)>,
}

impl EvidencePairs {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub ssr: f64,
    pub sse: f64,
    pub f_statistic: f64,
    pub df: (f64, f64),
    pub p_value: f64,
    /// `ln(p_value)`, finite even where the p-value underflows.
    pub ln_p_value: f64,
    pub n: usize,
}

/// Sufficient statistics of a no-intercept regression.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Moments {
    n: usize,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

impl Moments {
    fn fit(self) -> Result<RegressionResult> {
        let Moments { n, sxx, sxy, syy } = self;
        if n < 2 || !(sxx > 0.0) {
            return Err(Error::InsufficientEvidence { n });
        }
        let slope = sxy / sxx;
        let ssr = slope * slope * sxx;
        let mut sse = (syy - ssr).max(0.0);
        if sse <= EXACT_FIT_RTOL * syy {
            sse = 0.0;
        }
        let df2 = (n - 1) as f64;
        let (f, ln_p) = if ssr == 0.0 {
            (0.0, 0.0)
        } else if sse == 0.0 {
            (f64::INFINITY, f64::NEG_INFINITY)
        } else {
            let f = ssr / (sse / df2);
            (f, ln_f_sf(f, 1.0, df2)?)
        };
        Ok(RegressionResult {
            slope,
            ssr,
            sse,
            f_statistic: f,
            df: (1.0, df2),
            p_value: ln_p.exp().clamp(0.0, 1.0),
            ln_p_value: ln_p,
            n,
        })
    }
}

/// Least squares through the origin, `y = b x`, with the F test of the
/// single regressor: `b = sum(xy) / sum(x^2)`, `SSR = b^2 sum(x^2)`,
/// `SSE = sum(y^2) - SSR`, `F = SSR / (SSE / (n - 1))` on (1, n - 1)
/// degrees of freedom. An exact fit with `SSR > 0` has p = 0.
pub fn regress_through_origin(pairs: &EvidencePairs) -> Result<RegressionResult> {
    let mut m = Moments {
        n: pairs.len(),
        ..Moments::default()
    };
    for &(x, y) in &pairs.pairs {
        if !(x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite()) {
            return Err(Error::DomainError(format!("evidence pair ({x}, {y})")));
        }
        m.sxx += x * x;
        m.sxy += x * y;
        m.syy += y * y;
    }
    m.fit()
}

/// User similarities, item similarities and purchases over one id space.
#[derive(Debug, Clone)]
pub struct HeterogeneousNetwork {
    user_sim: SimilarityMatrix,
    item_sim: SimilarityMatrix,
    purchases: InteractionMatrix,
    // adjacency re-indexed into the purchase matrix's user / item indices
    user_adj: Vec<Vec<(u32, f64)>>,
    item_adj: Vec<Vec<(u32, f64)>>,
    leave_one_out: bool,
}

fn reindex(
    sim: &SimilarityMatrix,
    size: usize,
    lookup: impl Fn(&str) -> Option<usize>,
    what: &str,
) -> Result<Vec<Vec<(u32, f64)>>> {
    let map: Vec<usize> = sim
        .ids()
        .iter()
        .map(|id| {
            lookup(id).ok_or_else(|| {
                Error::IdMismatch(format!("{what} {id} is missing from the purchase matrix"))
            })
        })
        .collect::<Result<_>>()?;
    let mut adj = vec![Vec::new(); size];
    for (a, &target) in map.iter().enumerate() {
        let mut row: Vec<(u32, f64)> = sim
            .neighbors(a)
            .iter()
            .map(|&(b, s)| (map[b as usize] as u32, s))
            .collect();
        row.sort_by_key(|&(b, _)| b);
        adj[target] = row;
    }
    Ok(adj)
}

/// Assembles the network; every id of either similarity matrix must exist
/// in the purchase matrix.
pub fn build_network(
    user_sim: SimilarityMatrix,
    item_sim: SimilarityMatrix,
    purchases: InteractionMatrix,
) -> Result<HeterogeneousNetwork> {
    let user_adj = reindex(
        &user_sim,
        purchases.n_users(),
        |id| purchases.user_index(id),
        "user",
    )?;
    let item_adj = reindex(
        &item_sim,
        purchases.n_items(),
        |id| purchases.item_index(id),
        "item",
    )?;
    Ok(HeterogeneousNetwork {
        user_sim,
        item_sim,
        purchases,
        user_adj,
        item_adj,
        leave_one_out: false,
    })
}

impl HeterogeneousNetwork {
    pub fn with_leave_one_out(mut self, on: bool) -> Self {
        self.leave_one_out = on;
        self
    }

    pub fn user_sim(&self) -> &SimilarityMatrix {
        &self.user_sim
    }

    pub fn item_sim(&self) -> &SimilarityMatrix {
        &self.item_sim
    }

    pub fn purchases(&self) -> &InteractionMatrix {
        &self.purchases
    }

    /// Number of user-item purchase edges.
    pub fn n_purchase_edges(&self) -> usize {
        self.purchases.nnz()
    }

    fn user(&self, id: &str) -> Result<usize> {
        self.purchases
            .user_index(id)
            .ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    fn item(&self, id: &str) -> Result<usize> {
        self.purchases
            .item_index(id)
            .ok_or_else(|| Error::UnknownId(id.to_owned()))
    }

    fn item_similarity(&self, j: usize, i: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        let row = &self.item_adj[j];
        row.binary_search_by_key(&(i as u32), |&(b, _)| b)
            .map(|p| row[p].1)
            .unwrap_or(0.0)
    }

    /// Evidence pairs for (user, item): similar users first (by index), then
    /// the user's purchased items (by index).
    pub fn extract_subnetwork(&self, user: &str, item: &str) -> Result<EvidencePairs> {
        let u = self.user(user)?;
        let i = self.item(item)?;
        let mut pairs = Vec::new();
        for &(v, s) in &self.user_adj[u] {
            pairs.push((s, self.purchases.get(v as usize, i)));
        }
        for &(j, x) in self.purchases.row(u) {
            if self.leave_one_out && j as usize == i {
                continue;
            }
            pairs.push((x, self.item_similarity(j as usize, i)));
        }
        pairs.retain(|&(x, y)| x != 0.0 || y != 0.0);
        Ok(EvidencePairs { pairs })
    }

    /// p-value of the (user, item) regression; 1 when there is no fit.
    pub fn score_user_item(&self, user: &str, item: &str) -> Result<f64> {
        match regress_through_origin(&self.extract_subnetwork(user, item)?) {
            Ok(r) => Ok(r.p_value),
            Err(Error::InsufficientEvidence { .. }) => Ok(1.0),
            Err(e) => Err(e),
        }
    }

    /// Regression moments of `user` against every item at once, accumulated
    /// along the sparse edges instead of materializing each subnetwork.
    fn user_moments(&self, u: usize) -> Vec<Moments> {
        let n_items = self.purchases.n_items();
        let neighbors = &self.user_adj[u];
        let bought = self.purchases.row(u);
        let base = Moments {
            n: neighbors.len() + bought.len(),
            sxx: neighbors.iter().map(|&(_, s)| s * s).sum::<f64>()
                + bought.iter().map(|&(_, x)| x * x).sum::<f64>(),
            sxy: 0.0,
            syy: 0.0,
        };
        let mut moments = vec![base; n_items];
        for &(v, s) in neighbors {
            for &(i, p) in self.purchases.row(v as usize) {
                let m = &mut moments[i as usize];
                m.sxy += s * p;
                m.syy += p * p;
            }
        }
        for &(j, x) in bought {
            for &(i, t) in &self.item_adj[j as usize] {
                let m = &mut moments[i as usize];
                m.sxy += x * t;
                m.syy += t * t;
            }
            let m = &mut moments[j as usize];
            if self.leave_one_out {
                m.n -= 1;
                m.sxx -= x * x;
            } else {
                m.sxy += x;
                m.syy += 1.0;
            }
        }
        moments
    }

    /// Full-assortment ranking: items with p < 1 by ascending p-value (ties by
    /// fallback position, then item id), truncated to `n_prefix`, followed by
    /// the rest of the fallback ordering.
    pub fn rank_items_for_user(
        &self,
        user: &UserId,
        n_prefix: usize,
        fallback: &FallbackRanking,
    ) -> Result<FullRanking> {
        let u = self
            .purchases
            .user_index(user.as_str())
            .ok_or_else(|| Error::ColdStartUser(user.to_string()))?;
        if self.purchases.row(u).is_empty() {
            return Err(Error::ColdStartUser(user.to_string()));
        }
        let moments = self.user_moments(u);
        let items = self.purchases.items();
        let mut scored: Vec<(f64, usize, &ItemId)> = Vec::new();
        for (idx, m) in moments.iter().enumerate() {
            if m.sxy <= 0.0 {
                continue;
            }
            let Some(pos) = fallback.position(items[idx].as_str()) else {
                continue;
            };
            if let Ok(r) = m.fit() {
                if r.ln_p_value < 0.0 {
                    scored.push((r.ln_p_value, pos, &items[idx]));
                }
            }
        }
        scored.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(b.2))
        });
        scored.truncate(n_prefix);
        let scores = scored.iter().map(|s| s.0.exp()).collect();
        let prefix = scored.into_iter().map(|s| s.2.clone()).collect();
        Ok(FullRanking::complete(
            user.clone(),
            prefix,
            scores,
            fallback,
        ))
    }
}

/// The fitted recommender: both matrices, both similarity matrices and the
/// network built from them.
#[derive(Debug, Clone)]
pub struct CousinModel {
    cfg: CousinConfig,
    network: HeterogeneousNetwork,
}

impl CousinModel {
    /// Fits on `log` using data up to and including `reference_date`.
    pub fn fit(
        log: &TransactionLog,
        cfg: &CousinConfig,
        reference_date: NaiveDate,
    ) -> Result<Self> {
        let spec = cfg.matrix_spec(reference_date);
        let item_matrix = extract_item_matrix(log, &spec)?;
        let user_matrix = extract_user_matrix(log, &spec)?;
        let item_sim = build_similarity_matrix(&item_matrix, Axis::Items, cfg.alpha, cfg.top_m)?;
        let user_sim = build_similarity_matrix(&user_matrix, Axis::Users, cfg.beta, cfg.top_m)?;
        let network =
            build_network(user_sim, item_sim, user_matrix)?.with_leave_one_out(cfg.leave_one_out);
        Ok(Self {
            cfg: cfg.clone(),
            network,
        })
    }

    pub fn config(&self) -> &CousinConfig {
        &self.cfg
    }

    pub fn network(&self) -> &HeterogeneousNetwork {
        &self.network
    }

    pub fn rank(&self, user: &UserId, fallback: &FallbackRanking) -> Result<FullRanking> {
        self.network
            .rank_items_for_user(user, self.cfg.n_prefix, fallback)
    }

    /// Rankings for many users, computed in parallel; output order follows
    /// `users`.
    pub fn rank_all(
        &self,
        users: &[UserId],
        fallback: &FallbackRanking,
    ) -> Vec<Result<FullRanking>> {
        users.par_iter().map(|u| self.rank(u, fallback)).collect()
    }
}
