//! Repeat-purchase top-k benchmark and the cluster-popularity fallback.

use std::cmp::Reverse;
use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Category, ItemId, OrderId, UserId};
use crate::ingest::TransactionLog;
use crate::ranking::FullRanking;

/// Non-personalized ordering of the whole assortment, used to complete
/// every personalized prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct FallbackRanking {
    items: Vec<ItemId>,
    position: HashMap<ItemId, usize>,
}

impl FallbackRanking {
    pub fn new(items: Vec<ItemId>) -> Self {
        let position = items
            .iter()
            .enumerate()
            .map(|(p, i)| (i.clone(), p))
            .collect();
        Self { items, position }
    }

    pub fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 0-based position, `None` for items outside the assortment.
    pub fn position(&self, item: &str) -> Option<usize> {
        self.position.get(item).copied()
    }
}

/// Number of distinct orders containing each item.
pub fn purchase_counts(log: &TransactionLog) -> HashMap<ItemId, u64> {
    let mut seen: HashSet<(&OrderId, &ItemId)> = HashSet::new();
    let mut counts: HashMap<ItemId, u64> = HashMap::new();
    for ev in log.events() {
        if seen.insert((&ev.order_id, &ev.item_id)) {
            *counts.entry(ev.item_id.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Popularity ordering over `catalog` (item -> cluster) with counts taken
/// from `log`. Clustered: clusters by total count, items by count inside
/// each cluster. Ties fall back to cluster id and item id.
pub fn popularity_ranking_over(
    log: &TransactionLog,
    catalog: &BTreeMap<ItemId, Category>,
    by_cluster: bool,
) -> FallbackRanking {
    let counts = purchase_counts(log);
    let count = |i: &ItemId| counts.get(i).copied().unwrap_or(0);
    let mut items: Vec<&ItemId> = catalog.keys().collect();
    if by_cluster {
        let mut totals: HashMap<&Category, u64> = HashMap::new();
        for (item, cat) in catalog {
            *totals.entry(cat).or_insert(0) += count(item);
        }
        items.sort_by(|a, b| {
            let (ca, cb) = (&catalog[*a], &catalog[*b]);
            Reverse(totals[ca])
                .cmp(&Reverse(totals[cb]))
                .then_with(|| ca.cmp(cb))
                .then_with(|| Reverse(count(a)).cmp(&Reverse(count(b))))
                .then_with(|| a.cmp(b))
        });
    } else {
        items.sort_by(|a, b| {
            Reverse(count(a))
                .cmp(&Reverse(count(b)))
                .then_with(|| a.cmp(b))
        });
    }
    FallbackRanking::new(items.into_iter().cloned().collect())
}

/// Popularity ordering over the log's own assortment.
pub fn popularity_ranking(log: &TransactionLog, by_cluster: bool) -> FallbackRanking {
    popularity_ranking_over(log, &log.catalog(), by_cluster)
}

/// "Recently and repeatedly purchased": items bought in at least
/// `repeat_threshold` distinct orders within `lookback_days` of the
/// reference date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgnnConfig {
    pub lookback_days: u32,
    pub repeat_threshold: u32,
    /// Defaults to the last day in the log.
    #[serde(default)]
    pub reference_date: Option<NaiveDate>,
    /// Optional cap on the personalized prefix.
    #[serde(default)]
    pub max_prefix: Option<usize>,
}

impl Default for EgnnConfig {
    fn default() -> Self {
        Self {
            lookback_days: 365,
            repeat_threshold: 2,
            reference_date: None,
            max_prefix: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ItemHistory {
    orders: u64,
    last: DateTime<Utc>,
}

/// Per-user repeat-purchase histories, indexed once per log.
#[derive(Debug, Clone)]
pub struct EgnnModel {
    cfg: EgnnConfig,
    histories: HashMap<UserId, HashMap<ItemId, ItemHistory>>,
}

impl EgnnModel {
    pub fn fit(log: &TransactionLog, cfg: &EgnnConfig) -> Result<Self> {
        if cfg.lookback_days == 0 || cfg.repeat_threshold == 0 {
            return Err(Error::Config(
                "lookback_days and repeat_threshold must be positive".into(),
            ));
        }
        let reference = cfg.reference_date.or_else(|| log.last_date());
        let mut histories: HashMap<UserId, HashMap<ItemId, ItemHistory>> = HashMap::new();
        let mut seen: HashSet<(&OrderId, &ItemId)> = HashSet::new();
        for user in log.users() {
            histories.insert(user, HashMap::new());
        }
        if let Some(reference) = reference {
            let start = reference - Duration::days(cfg.lookback_days as i64);
            for ev in log.events() {
                let date = ev.date();
                if date <= start || date > reference || !seen.insert((&ev.order_id, &ev.item_id)) {
                    continue;
                }
                let h = histories
                    .get_mut(&ev.user_id)
                    .expect("every user indexed")
                    .entry(ev.item_id.clone())
                    .or_insert(ItemHistory {
                        orders: 0,
                        last: ev.timestamp,
                    });
                h.orders += 1;
                h.last = h.last.max(ev.timestamp);
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            histories,
        })
    }

    pub fn knows(&self, user: &str) -> bool {
        self.histories.contains_key(user)
    }

    /// The personalized prefix: qualifying items by purchase count desc,
    /// most recent purchase desc, item id.
    pub fn prefix(&self, user: &str) -> Result<Vec<ItemId>> {
        let history = self
            .histories
            .get(user)
            .ok_or_else(|| Error::UnknownId(user.to_owned()))?;
        let mut qualifying: Vec<(&ItemId, &ItemHistory)> = history
            .iter()
            .filter(|(_, h)| h.orders >= self.cfg.repeat_threshold as u64)
            .collect();
        qualifying.sort_by(|(ia, a), (ib, b)| {
            b.orders
                .cmp(&a.orders)
                .then_with(|| b.last.cmp(&a.last))
                .then_with(|| ia.cmp(ib))
        });
        if let Some(cap) = self.cfg.max_prefix {
            qualifying.truncate(cap);
        }
        Ok(qualifying.into_iter().map(|(i, _)| i.clone()).collect())
    }

    pub fn rank(&self, user: &UserId, fallback: &FallbackRanking) -> Result<FullRanking> {
        let prefix: Vec<ItemId> = self
            .prefix(user.as_str())?
            .into_iter()
            .filter(|i| fallback.position(i.as_str()).is_some())
            .collect();
        Ok(FullRanking::complete(
            user.clone(),
            prefix,
            Vec::new(),
            fallback,
        ))
    }
}

/// Top-k ranking where the user's own repeat purchases come first and the
/// rest of the assortment follows in fallback order. The prefix length `k`
/// depends on the user's history and may be 0.
pub fn egnn_ranking(
    log: &TransactionLog,
    user: &UserId,
    cfg: &EgnnConfig,
    fallback: &FallbackRanking,
) -> Result<FullRanking> {
    EgnnModel::fit(log, cfg)?.rank(user, fallback)
}
