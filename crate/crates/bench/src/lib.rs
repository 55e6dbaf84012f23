//! Shared workloads for the benchmarks.

use grocer_rank::experiment::{generate_synthetic_log, GeneratorConfig};
use grocer_rank::TransactionLog;

/// A seeded log of roughly `users * 12` orders over `items` products.
pub fn workload(users: usize, items: usize) -> TransactionLog {
    let cfg = GeneratorConfig {
        n_users: users,
        n_items: items,
        n_clusters: 10,
        mean_orders_per_user: 12.0,
        mean_basket_size: 12.0,
        ..GeneratorConfig::default()
    };
    generate_synthetic_log(&cfg, 42).expect("generator config is valid")
}
