//! Seeded synthetic grocery logs with learnable preference structure.
//!
//! Items are split into category clusters with a within-cluster popularity
//! curve. Users belong to preference segments; a segment favors a few
//! clusters. Each basket is drawn without replacement from the user's item
//! weights. `preference_concentration` interpolates between uniform
//! purchasing (0) and purchasing driven by segment and popularity (1).

use chrono::{Duration, NaiveDate, NaiveTime};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Category, ItemId, OrderId, UserId};
use crate::ingest::{PurchaseEvent, TransactionLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    /// Number of user preference segments.
    pub n_segments: usize,
    /// Clusters favored by each segment.
    pub favored_clusters: usize,
    /// Mean orders per user (1 + Poisson).
    pub mean_orders_per_user: f64,
    /// Mean distinct items per order (1 + Poisson).
    pub mean_basket_size: f64,
    /// 0 = uniform purchasing, 1 = fully segment and popularity driven.
    pub preference_concentration: f64,
    pub start_date: NaiveDate,
    pub span_days: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 2000,
            n_clusters: 20,
            n_segments: 10,
            favored_clusters: 3,
            mean_orders_per_user: 20.0,
            mean_basket_size: 21.0,
            preference_concentration: 0.8,
            start_date: NaiveDate::from_ymd_opt(2016, 9, 1).expect("valid date"),
            span_days: 365,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("generator: {what}")));
        if self.n_users == 0 || self.n_items == 0 || self.n_clusters == 0 || self.n_segments == 0 {
            return bad("sizes must be at least 1");
        }
        if self.n_clusters > self.n_items {
            return bad("more clusters than items");
        }
        if self.favored_clusters == 0 || self.favored_clusters > self.n_clusters {
            return bad("favored_clusters must lie in 1..=n_clusters");
        }
        if !(self.mean_orders_per_user >= 1.0) || !(self.mean_basket_size >= 1.0) {
            return bad("means must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.preference_concentration) {
            return bad("preference_concentration must lie in [0, 1]");
        }
        if self.span_days == 0 {
            return bad("span_days must be positive");
        }
        Ok(())
    }
}

/// Draws `1 + Poisson(mean - 1)`.
fn one_plus_poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 1.0 {
        return 1;
    }
    let p = Poisson::new(mean - 1.0).expect("positive rate");
    1 + p.sample(rng) as usize
}

pub fn generate_synthetic_log(cfg: &GeneratorConfig, seed: u64) -> Result<TransactionLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conc = cfg.preference_concentration;

    let cluster_of: Vec<usize> = (0..cfg.n_items)
        .map(|k| k * cfg.n_clusters / cfg.n_items)
        .collect();
    let items: Vec<ItemId> = (0..cfg.n_items)
        .map(|k| ItemId::new(format!("i{k:05}")))
        .collect();
    let categories: Vec<Category> = (0..cfg.n_clusters)
        .map(|c| Category::new(format!("c{c:03}")))
        .collect();

    // Zipf popularity inside each cluster, normalized to unit mass per cluster
    let mut popularity = vec![0.0; cfg.n_items];
    for c in 0..cfg.n_clusters {
        let mut members: Vec<usize> = (0..cfg.n_items).filter(|&k| cluster_of[k] == c).collect();
        members.shuffle(&mut rng);
        let weights: Vec<f64> = (0..members.len())
            .map(|r| (r as f64 + 1.0).powf(-conc))
            .collect();
        let total: f64 = weights.iter().sum();
        for (k, w) in members.into_iter().zip(weights) {
            popularity[k] = w / total;
        }
    }

    let segments: Vec<Vec<usize>> = (0..cfg.n_segments)
        .map(|_| index::sample(&mut rng, cfg.n_clusters, cfg.favored_clusters).into_vec())
        .collect();

    let day_start = NaiveTime::from_hms_opt(7, 0, 0).expect("valid time");
    let mut events = Vec::new();
    for u in 0..cfg.n_users {
        let user = UserId::new(format!("u{u:05}"));
        let favored = &segments[rng.random_range(0..cfg.n_segments)];
        let mut cluster_weight = vec![(1.0 - conc) / cfg.n_clusters as f64; cfg.n_clusters];
        for &c in favored {
            cluster_weight[c] += conc / favored.len() as f64;
        }
        let weights: Vec<f64> = (0..cfg.n_items)
            .map(|k| cluster_weight[cluster_of[k]] * popularity[k])
            .collect();

        let n_orders = one_plus_poisson(&mut rng, cfg.mean_orders_per_user);
        let mut days: Vec<u32> = (0..n_orders)
            .map(|_| rng.random_range(0..cfg.span_days))
            .collect();
        days.sort_unstable();
        for (k, day) in days.into_iter().enumerate() {
            let order = OrderId::new(format!("o{u:05}-{k:03}"));
            let minutes = rng.random_range(0..15 * 60);
            let timestamp = (cfg.start_date + Duration::days(day as i64))
                .and_time(day_start + Duration::minutes(minutes))
                .and_utc();
            let size = one_plus_poisson(&mut rng, cfg.mean_basket_size).min(cfg.n_items);
            let basket = index::sample_weighted(&mut rng, cfg.n_items, |k| weights[k], size)
                .map_err(|e| Error::Config(format!("generator weights: {e}")))?;
            let mut basket = basket.into_vec();
            basket.sort_unstable();
            for k in basket {
                events.push(PurchaseEvent {
                    order_id: order.clone(),
                    user_id: user.clone(),
                    item_id: items[k].clone(),
                    quantity: rng.random_range(1..=3),
                    timestamp,
                    category: categories[cluster_of[k]].clone(),
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.order_id.cmp(&b.order_id))
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    TransactionLog::new(events)
}
