//! Offline A/B replay.
//!
//! Users are split into two groups with a keyed hash, both models are
//! trained on the log up to a cutoff date, and every held-out order of an
//! eligible user is scored by the ranks its items hold in that user's
//! full-assortment ranking. One order is one observation.

mod report;
pub mod synth;

use std::collections::{BTreeMap, HashMap};

use chrono::{Duration, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{popularity_ranking_over, EgnnConfig, EgnnModel, FallbackRanking};
use crate::cousin::{CousinConfig, CousinModel};
use crate::error::{Error, Result};
use crate::ids::UserId;
use crate::ingest::{OrderSummary, TransactionLog};
use crate::metrics::{arc_aggregate, arc_reduction, ArcReport, OrderOutcome};
use crate::ranking::FullRanking;
use crate::stats::{
    chi_squared_independence, median, moods_median_test, normality_diagnostic, two_sample_t_test,
    welch_t_test, Alternative, NormalityDiagnostic, SampleSummary, TestResult,
};

pub use report::{render_report, ReportFormat};
pub use synth::{generate_synthetic_log, GeneratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

/// Deterministic group from a SHA-256 of the seed and the user id.
pub fn assign_group(user_id: &str, seed: u64) -> Group {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(user_id.as_bytes());
    let digest = hasher.finalize();
    if digest[0] & 1 == 0 {
        Group::A
    } else {
        Group::B
    }
}

/// Events on or before `cutoff` (by UTC date) train, later events are held out.
pub fn temporal_split(
    log: &TransactionLog,
    cutoff: NaiveDate,
) -> Result<(TransactionLog, TransactionLog)> {
    let train = log.filter(|e| e.date() <= cutoff);
    let holdout = log.filter(|e| e.date() > cutoff);
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if holdout.is_empty() {
        return Err(Error::EmptySplit("holdout"));
    }
    Ok((train, holdout))
}

/// Date of the last training order when the latest `fraction` of orders (by
/// first timestamp) are held out. Orders sharing that date stay in training.
pub fn cutoff_for_holdout_fraction(log: &TransactionLog, fraction: f64) -> Result<NaiveDate> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "holdout fraction {fraction} outside (0, 1)"
        )));
    }
    let orders = log.orders();
    if orders.len() < 2 {
        return Err(Error::EmptySplit("holdout"));
    }
    let keep = ((1.0 - fraction) * orders.len() as f64).floor() as usize;
    let idx = keep.clamp(1, orders.len() - 1) - 1;
    Ok(orders[idx].first_timestamp.date_naive())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Network-regression top-N ranking.
    Cousin(CousinConfig),
    /// Repeat-purchase top-k ranking.
    Egnn(EgnnConfig),
    /// Fallback ordering only.
    Popularity,
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::Cousin(_) => "top-N",
            ModelSpec::Egnn(_) => "top-k",
            ModelSpec::Popularity => "popularity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbConfig {
    pub seed: u64,
    pub cutoff: NaiveDate,
    pub group_a_model: ModelSpec,
    pub group_b_model: ModelSpec,
    /// Prefix length of arm A (cap on k for the top-k model).
    pub n_prefix_a: usize,
    /// Prefix length of arm B (N for the top-N model).
    pub n_prefix_b: usize,
    /// A user is eligible with a train order within this many days of the cutoff.
    pub activity_days: u32,
    pub fallback_by_cluster: bool,
    /// Optional single day reported separately.
    pub slice_date: Option<NaiveDate>,
}

impl AbConfig {
    /// Top-k repeat-purchase arm (A) against the top-4000 network arm (B).
    pub fn top_k_vs_top_n(seed: u64, cutoff: NaiveDate) -> Self {
        Self {
            seed,
            cutoff,
            group_a_model: ModelSpec::Egnn(EgnnConfig::default()),
            group_b_model: ModelSpec::Cousin(CousinConfig::default()),
            n_prefix_a: 30,
            n_prefix_b: 4000,
            activity_days: 365,
            fallback_by_cluster: true,
            slice_date: None,
        }
    }

    fn arm(&self, group: Group) -> (&ModelSpec, usize) {
        match group {
            Group::A => (&self.group_a_model, self.n_prefix_a),
            Group::B => (&self.group_b_model, self.n_prefix_b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: Group,
    pub ranking: String,
    /// Eligible users assigned to the group and ranked.
    pub users: usize,
    /// Held-out orders of those users.
    pub orders: usize,
    /// Users dropped because the model had no history for them.
    pub excluded_users: usize,
    pub mean_prefix_len: f64,
    pub arc: ArcReport,
    pub basket: SampleSummary,
    pub basket_median: f64,
    pub normality: Option<NormalityDiagnostic>,
    pub arc_slice: Option<ArcReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub orders_per_user_a: f64,
    pub orders_per_user_b: f64,
    /// `(orders_B / users_B) / (orders_A / users_A) - 1`.
    pub lift: f64,
    /// Rows: groups A, B. Columns: users with at least one held-out order, users without.
    pub table: [[u64; 2]; 2],
    pub chi_squared: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketReport {
    pub t_test: Option<TestResult>,
    pub moods_median: Option<TestResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbReport {
    pub seed: u64,
    pub cutoff: NaiveDate,
    pub groups: Vec<GroupReport>,
    /// One-sided Welch test, alternative: ARC of A exceeds ARC of B.
    pub welch: TestResult,
    /// `1 - ARC_B / ARC_A`.
    pub arc_reduction: f64,
    pub slice_date: Option<NaiveDate>,
    pub slice_welch: Option<TestResult>,
    pub conversion: ConversionReport,
    pub basket: BasketReport,
}

impl AbReport {
    pub fn group(&self, group: Group) -> &GroupReport {
        self.groups
            .iter()
            .find(|g| g.group == group)
            .expect("both groups present")
    }
}

/// Relative lift in orders per user of B over A.
pub fn conversion_lift(users_a: u64, orders_a: u64, users_b: u64, orders_b: u64) -> f64 {
    (orders_b as f64 / users_b as f64) / (orders_a as f64 / users_a as f64) - 1.0
}

enum Ranker {
    Cousin(Box<CousinModel>),
    Egnn(EgnnModel),
    Popularity,
}

impl Ranker {
    fn fit(
        spec: &ModelSpec,
        n_prefix: usize,
        train: &TransactionLog,
        cutoff: NaiveDate,
    ) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Cousin(cfg) => {
                let cfg = CousinConfig {
                    n_prefix,
                    ..cfg.clone()
                };
                Ranker::Cousin(Box::new(CousinModel::fit(train, &cfg, cutoff)?))
            }
            ModelSpec::Egnn(cfg) => {
                let cfg = EgnnConfig {
                    reference_date: Some(cfg.reference_date.unwrap_or(cutoff)),
                    max_prefix: Some(cfg.max_prefix.map_or(n_prefix, |m| m.min(n_prefix))),
                    ..cfg.clone()
                };
                Ranker::Egnn(EgnnModel::fit(train, &cfg)?)
            }
            ModelSpec::Popularity => Ranker::Popularity,
        })
    }

    fn rank(&self, user: &UserId, fallback: &FallbackRanking) -> Result<FullRanking> {
        match self {
            Ranker::Cousin(m) => m.rank(user, fallback),
            Ranker::Egnn(m) => {
                if !m.knows(user.as_str()) {
                    return Err(Error::ColdStartUser(user.to_string()));
                }
                m.rank(user, fallback)
            }
            Ranker::Popularity => Ok(FullRanking::complete(
                user.clone(),
                Vec::new(),
                Vec::new(),
                fallback,
            )),
        }
    }
}

fn outcome(
    order: &OrderSummary,
    ranking: &FullRanking,
    lookup: &HashMap<&crate::ids::ItemId, u64>,
) -> Result<OrderOutcome> {
    let ranks = order
        .items
        .iter()
        .map(|item| {
            lookup.get(item).copied().ok_or_else(|| {
                Error::UnknownId(format!(
                    "{item} missing from ranking of {}",
                    ranking.user_id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrderOutcome::new(order.order_id.clone(), ranks))
}

struct ArmOutcome {
    users: usize,
    excluded: usize,
    mean_prefix_len: f64,
    converted: u64,
    outcomes: Vec<(NaiveDate, OrderOutcome)>,
    baskets: Vec<f64>,
}

fn run_arm(
    group_users: &[UserId],
    holdout_orders: &BTreeMap<UserId, Vec<OrderSummary>>,
    ranker: &Ranker,
    fallback: &FallbackRanking,
) -> Result<ArmOutcome> {
    let ranked: Vec<Result<FullRanking>> = group_users
        .par_iter()
        .map(|u| ranker.rank(u, fallback))
        .collect();
    let mut arm = ArmOutcome {
        users: 0,
        excluded: 0,
        mean_prefix_len: 0.0,
        converted: 0,
        outcomes: Vec::new(),
        baskets: Vec::new(),
    };
    let mut prefix_total = 0usize;
    for (user, ranking) in group_users.iter().zip(ranked) {
        let ranking = match ranking {
            Ok(r) => r,
            Err(Error::ColdStartUser(_)) => {
                arm.excluded += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        arm.users += 1;
        prefix_total += ranking.prefix_len;
        let Some(orders) = holdout_orders.get(user) else {
            continue;
        };
        arm.converted += 1;
        let lookup = ranking.rank_lookup();
        for order in orders {
            arm.outcomes.push((
                order.first_timestamp.date_naive(),
                outcome(order, &ranking, &lookup)?,
            ));
        }
    }
    if arm.users > 0 {
        arm.mean_prefix_len = prefix_total as f64 / arm.users as f64;
    }
    arm.outcomes.sort_by(|a, b| a.1.order_id.cmp(&b.1.order_id));
    arm.baskets = arm.outcomes.iter().map(|(_, o)| o.size() as f64).collect();
    Ok(arm)
}

/// Replays a held-out period against both arms and runs the statistics.
pub fn replay_ab_test(
    train: &TransactionLog,
    holdout: &TransactionLog,
    cfg: &AbConfig,
) -> Result<AbReport> {
    if train.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if holdout.is_empty() {
        return Err(Error::EmptySplit("holdout"));
    }
    let mut catalog = train.catalog();
    for (item, cat) in holdout.catalog() {
        catalog.entry(item).or_insert(cat);
    }
    let fallback = popularity_ranking_over(train, &catalog, cfg.fallback_by_cluster);

    let active_from = cfg.cutoff - Duration::days(cfg.activity_days as i64);
    let mut eligible: Vec<UserId> = train
        .events()
        .iter()
        .filter(|e| {
            let d = e.date();
            d > active_from && d <= cfg.cutoff
        })
        .map(|e| e.user_id.clone())
        .collect();
    eligible.sort();
    eligible.dedup();

    let mut holdout_orders: BTreeMap<UserId, Vec<OrderSummary>> = BTreeMap::new();
    for order in holdout.orders() {
        if eligible.binary_search(&order.user_id).is_ok() {
            holdout_orders
                .entry(order.user_id.clone())
                .or_default()
                .push(order);
        }
    }

    let mut arms = Vec::with_capacity(2);
    for group in [Group::A, Group::B] {
        let (spec, n_prefix) = cfg.arm(group);
        let ranker = Ranker::fit(spec, n_prefix, train, cfg.cutoff)?;
        let users: Vec<UserId> = eligible
            .iter()
            .filter(|u| assign_group(u.as_str(), cfg.seed) == group)
            .cloned()
            .collect();
        arms.push((
            group,
            spec.label(),
            run_arm(&users, &holdout_orders, &ranker, &fallback)?,
        ));
    }

    let mut groups = Vec::with_capacity(2);
    for (group, label, arm) in &arms {
        let outcomes: Vec<OrderOutcome> = arm.outcomes.iter().map(|(_, o)| o.clone()).collect();
        let arc = arc_aggregate(&outcomes)?;
        let arc_slice = cfg.slice_date.and_then(|day| {
            let slice: Vec<OrderOutcome> = arm
                .outcomes
                .iter()
                .filter(|(d, _)| *d == day)
                .map(|(_, o)| o.clone())
                .collect();
            arc_aggregate(&slice).ok()
        });
        groups.push(GroupReport {
            group: *group,
            ranking: label.to_string(),
            users: arm.users,
            orders: arm.outcomes.len(),
            excluded_users: arm.excluded,
            mean_prefix_len: arm.mean_prefix_len,
            normality: normality_diagnostic(&arc.values()).ok(),
            arc,
            basket: SampleSummary::from_samples(&arm.baskets)?,
            basket_median: median(&arm.baskets).unwrap_or(0.0),
            arc_slice,
        });
    }
    let (a, b) = (&groups[0], &groups[1]);
    let welch = welch_t_test(
        &SampleSummary::from_samples(&a.arc.values())?,
        &SampleSummary::from_samples(&b.arc.values())?,
        Alternative::Greater,
    )?;
    let slice_welch = match (&a.arc_slice, &b.arc_slice) {
        (Some(sa), Some(sb)) => SampleSummary::from_samples(&sa.values())
            .and_then(|x| Ok((x, SampleSummary::from_samples(&sb.values())?)))
            .and_then(|(x, y)| welch_t_test(&x, &y, Alternative::Greater))
            .ok(),
        _ => None,
    };

    let (arm_a, arm_b) = (&arms[0].2, &arms[1].2);
    let table = [
        [arm_a.converted, arm_a.users as u64 - arm_a.converted],
        [arm_b.converted, arm_b.users as u64 - arm_b.converted],
    ];
    let conversion = ConversionReport {
        orders_per_user_a: a.orders as f64 / a.users as f64,
        orders_per_user_b: b.orders as f64 / b.users as f64,
        lift: conversion_lift(
            a.users as u64,
            a.orders as u64,
            b.users as u64,
            b.orders as u64,
        ),
        table,
        chi_squared: chi_squared_independence(table).ok(),
    };
    let basket = BasketReport {
        t_test: two_sample_t_test(&arm_a.baskets, &arm_b.baskets, Alternative::TwoSided).ok(),
        moods_median: moods_median_test(&arm_a.baskets, &arm_b.baskets).ok(),
    };

    Ok(AbReport {
        seed: cfg.seed,
        cutoff: cfg.cutoff,
        arc_reduction: arc_reduction(a.arc.mean, b.arc.mean),
        groups,
        welch,
        slice_date: cfg.slice_date,
        slice_welch,
        conversion,
        basket,
    })
}
