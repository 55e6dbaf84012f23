//! Helpers shared by the integration test targets: independent reference
//! implementations of the hypothesis tests (textbook formulas on raw data,
//! distribution tails from statrs) and small fixture builders.

#![allow(dead_code)]

use chrono::NaiveDate;
use grocer_rank::ingest::PurchaseEvent;
use grocer_rank::TransactionLog;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn t_sf(t: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df).unwrap().sf(t)
}

/// (t, df, one-sided p for "a > b")
pub fn ref_welch(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (va, vb) = (var(a) / a.len() as f64, var(b) / b.len() as f64);
    let t = (mean(a) - mean(b)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (a.len() - 1) as f64 + vb * vb / (b.len() - 1) as f64);
    (t, df, t_sf(t, df))
}

pub fn ref_student(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let sp = ((na - 1.0) * var(a) + (nb - 1.0) * var(b)) / df;
    let t = (mean(a) - mean(b)) / (sp * (1.0 / na + 1.0 / nb)).sqrt();
    (t, df, t_sf(t, df))
}

pub fn two_sided(one_sided_greater: f64) -> f64 {
    (2.0 * one_sided_greater.min(1.0 - one_sided_greater)).min(1.0)
}

pub fn ref_chi2(table: [[u64; 2]; 2]) -> (f64, f64) {
    let t: Vec<Vec<f64>> = table
        .iter()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    let n: f64 = t.iter().flatten().sum();
    let mut stat = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            let e = (t[r][0] + t[r][1]) * (t[0][c] + t[1][c]) / n;
            stat += (t[r][c] - e).powi(2) / e;
        }
    }
    (stat, ChiSquared::new(1.0).unwrap().sf(stat))
}

/// Mood's median test by sorting the pooled sample directly.
pub fn ref_mood(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = pooled.len();
    let m = if n % 2 == 1 {
        pooled[n / 2]
    } else {
        (pooled[n / 2 - 1] + pooled[n / 2]) / 2.0
    };
    let above = |s: &[f64]| s.iter().filter(|&&x| x > m).count() as u64;
    let table = [
        [above(a), a.len() as u64 - above(a)],
        [above(b), b.len() as u64 - above(b)],
    ];
    let margins_ok = table[0][0] + table[1][0] > 0 && table[0][1] + table[1][1] > 0;
    margins_ok.then(|| ref_chi2(table))
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn event(order: &str, user: &str, item: &str, category: &str, day: NaiveDate) -> PurchaseEvent {
    PurchaseEvent {
        order_id: order.into(),
        user_id: user.into(),
        item_id: item.into(),
        quantity: 1,
        timestamp: day.and_hms_opt(10, 0, 0).unwrap().and_utc(),
        category: category.into(),
    }
}

/// A log where each `(user, day offset, items)` entry is one order.
pub fn log_from_orders(orders: &[(&str, i64, &[&str])]) -> TransactionLog {
    let start = date(2017, 1, 1);
    let mut events = Vec::new();
    for (k, (user, offset, items)) in orders.iter().enumerate() {
        for item in items.iter() {
            events.push(event(
                &format!("o{k:04}"),
                user,
                item,
                "c",
                start + chrono::Duration::days(*offset),
            ));
        }
    }
    TransactionLog::new(events).unwrap()
}
