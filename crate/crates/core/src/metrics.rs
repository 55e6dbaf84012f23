//! Information-overload arithmetic.
//!
//! A shopper walking a shelf (or scrolling a ranking) makes one purchase
//! decision per item viewed; the rank of a purchased item is therefore the
//! number of decisions it cost. The functions here count decisions for the
//! best and worst shelf arrangements, give the shortest ranking that can
//! cover a shopping list at a given hit rate, and average purchased-item
//! ranks per order (ARC) and over orders.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::OrderId;

/// Decisions for a shopping list of size `s` when the shelf starts with
/// exactly the listed items: `sum_{i=0}^{s} (s - i)`.
pub fn decisions_best_case(s: u64) -> u64 {
    (0..=s).map(|i| s - i).sum()
}

/// Decisions when all `a - s` unlisted items come first.
pub fn decisions_worst_case(a: u64, s: u64) -> Result<u64> {
    if s > a {
        return Err(Error::SizeExceedsAssortment {
            size: s,
            assortment: a,
        });
    }
    Ok((a - s) * s + decisions_best_case(s))
}

/// Least integer ranking length `r` with `r >= s / accuracy`.
pub fn minimal_ranking_length(s: u64, accuracy: f64) -> Result<u64> {
    if s == 0 {
        return Err(Error::DomainError(
            "shopping list must hold at least one item".into(),
        ));
    }
    if !(accuracy > 0.0 && accuracy <= 1.0) {
        return Err(Error::DomainError(format!(
            "accuracy {accuracy} outside (0, 1]"
        )));
    }
    let bound = s as f64 / accuracy;
    let nearest = bound.round();
    // 21 / 0.12 evaluates to 175.00000000000003
    if (bound - nearest).abs() <= 1e-9 * bound.max(1.0) {
        return Ok(nearest as u64);
    }
    Ok(bound.ceil() as u64)
}

/// Ranks (1-based, full-assortment) of the distinct items bought in one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderOutcome {
    pub order_id: OrderId,
    pub ranks: Vec<u64>,
}

impl OrderOutcome {
    pub fn new(order_id: impl Into<OrderId>, ranks: Vec<u64>) -> Self {
        Self {
            order_id: order_id.into(),
            ranks,
        }
    }

    pub fn size(&self) -> usize {
        self.ranks.len()
    }
}

/// Average rank of the purchased items in one order.
pub fn arc_order(outcome: &OrderOutcome) -> Result<f64> {
    if outcome.ranks.is_empty() {
        return Err(Error::EmptyOrder);
    }
    let total: u64 = outcome.ranks.iter().sum();
    Ok(total as f64 / outcome.ranks.len() as f64)
}

/// Best possible per-order ARC: the order's items fill the first positions.
pub fn arc_lower_bound(size: usize) -> Result<f64> {
    if size == 0 {
        return Err(Error::EmptyOrder);
    }
    Ok((size as f64 + 1.0) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderArc {
    pub order_id: OrderId,
    /// Distinct items in the order.
    pub size: usize,
    pub arc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcReport {
    pub mean: f64,
    pub std: f64,
    pub n_orders: usize,
    pub per_order: Vec<OrderArc>,
}

impl ArcReport {
    pub fn values(&self) -> Vec<f64> {
        self.per_order.iter().map(|o| o.arc).collect()
    }
}

/// Unweighted mean of per-order ARC values; every order counts once
/// regardless of its size. `std` uses the n - 1 denominator (0 for one order).
pub fn arc_aggregate(outcomes: &[OrderOutcome]) -> Result<ArcReport> {
    if outcomes.is_empty() {
        return Err(Error::NoOrders);
    }
    let per_order = outcomes
        .iter()
        .map(|o| {
            Ok(OrderArc {
                order_id: o.order_id.clone(),
                size: o.size(),
                arc: arc_order(o)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_order.len() as f64;
    let mean = per_order.iter().map(|o| o.arc).sum::<f64>() / n;
    let std = if per_order.len() > 1 {
        (per_order
            .iter()
            .map(|o| (o.arc - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0))
            .sqrt()
    } else {
        0.0
    };
    Ok(ArcReport {
        mean,
        std,
        n_orders: per_order.len(),
        per_order,
    })
}

/// Relative ARC reduction of `treatment` against `control`, `1 - B / A`.
pub fn arc_reduction(control_mean: f64, treatment_mean: f64) -> f64 {
    1.0 - treatment_mean / control_mean
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionCounting {
    /// Each shelf item is compared against every item still on the list.
    Comparisons,
    /// Each shelf item viewed is one decision.
    ItemsViewed,
}

/// Walks a shelf in order until the shopping list is empty and counts the
/// decisions made on the way.
pub fn simulate_shelf_decisions<T: AsRef<str>>(
    shelf: &[T],
    shopping_list: &[T],
    counting: DecisionCounting,
) -> Result<u64> {
    let on_shelf: HashSet<&str> = shelf.iter().map(AsRef::as_ref).collect();
    if let Some(missing) = shopping_list
        .iter()
        .find(|i| !on_shelf.contains(i.as_ref()))
    {
        return Err(Error::UnreachableList(missing.as_ref().to_owned()));
    }
    let mut remaining: HashSet<&str> = shopping_list.iter().map(AsRef::as_ref).collect();
    let mut decisions = 0u64;
    for item in shelf {
        if remaining.is_empty() {
            break;
        }
        decisions += match counting {
            DecisionCounting::Comparisons => remaining.len() as u64,
            DecisionCounting::ItemsViewed => 1,
        };
        remaining.remove(item.as_ref());
    }
    Ok(decisions)
}
