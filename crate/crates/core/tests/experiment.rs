use grocer_rank::experiment::*;
use grocer_rank::metrics::arc_lower_bound;
use grocer_rank::{EgnnConfig, ModelSpec};

fn small() -> GeneratorConfig {
    GeneratorConfig {
        n_users: 120,
        n_items: 400,
        n_clusters: 8,
        n_segments: 4,
        favored_clusters: 2,
        mean_orders_per_user: 12.0,
        mean_basket_size: 12.0,
        ..GeneratorConfig::default()
    }
}

fn replay(gen: &GeneratorConfig, seed: u64, adjust: impl FnOnce(&mut AbConfig)) -> AbReport {
    let log = generate_synthetic_log(gen, seed).unwrap();
    let cutoff = cutoff_for_holdout_fraction(&log, 0.15).unwrap();
    let (train, holdout) = temporal_split(&log, cutoff).unwrap();
    let mut cfg = AbConfig::top_k_vs_top_n(seed, cutoff);
    adjust(&mut cfg);
    replay_ab_test(&train, &holdout, &cfg).unwrap()
}

#[test]
fn every_eligible_holdout_order_is_counted_once() {
    let gen = small();
    let log = generate_synthetic_log(&gen, 21).unwrap();
    let cutoff = cutoff_for_holdout_fraction(&log, 0.15).unwrap();
    let (train, holdout) = temporal_split(&log, cutoff).unwrap();
    assert_eq!(train.len() + holdout.len(), log.len());
    let report = replay_ab_test(&train, &holdout, &AbConfig::top_k_vs_top_n(21, cutoff)).unwrap();

    let train_users = train.users();
    let mut expected: Vec<String> = holdout
        .orders()
        .into_iter()
        .filter(|o| train_users.binary_search(&o.user_id).is_ok())
        .map(|o| o.order_id.to_string())
        .collect();
    expected.sort();
    let mut counted: Vec<String> = report
        .groups
        .iter()
        .flat_map(|g| g.arc.per_order.iter().map(|o| o.order_id.to_string()))
        .collect();
    counted.sort();
    assert_eq!(counted, expected);
}

#[test]
fn report_respects_rank_bounds() {
    let report = replay(&small(), 22, |_| {});
    let assortment = 400.0;
    for g in &report.groups {
        for o in &g.arc.per_order {
            assert!(o.arc <= assortment);
        }
        assert!(g.arc.mean >= arc_lower_bound(1).unwrap());
    }
    assert!(report.group(Group::B).mean_prefix_len > report.group(Group::A).mean_prefix_len);
}

#[test]
fn json_round_trips_and_markdown_has_rows() {
    let mut report = replay(&small(), 23, |c| c.slice_date = None);
    report.slice_date = Some(report.cutoff);
    let json = render_report(&report, ReportFormat::Json).unwrap();
    let back: AbReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);

    let md = render_report(&report, ReportFormat::Markdown).unwrap();
    assert!(md.lines().any(|l| l.starts_with("| A | top-k |")));
    assert!(md.lines().any(|l| l.starts_with("| B | top-N |")));
    assert!(md.lines().any(|l| l.starts_with("| p-value |")));
    assert!(md.contains("not computed from a purchase log"));
}

#[test]
fn single_day_slice_is_reported() {
    let gen = small();
    let log = generate_synthetic_log(&gen, 24).unwrap();
    let cutoff = cutoff_for_holdout_fraction(&log, 0.15).unwrap();
    let (train, holdout) = temporal_split(&log, cutoff).unwrap();
    let busiest = {
        let mut days: std::collections::BTreeMap<_, usize> = Default::default();
        for o in holdout.orders() {
            *days.entry(o.first_timestamp.date_naive()).or_default() += 1;
        }
        days.into_iter()
            .max_by_key(|&(d, n)| (n, std::cmp::Reverse(d)))
            .unwrap()
            .0
    };
    let cfg = AbConfig {
        slice_date: Some(busiest),
        ..AbConfig::top_k_vs_top_n(24, cutoff)
    };
    let report = replay_ab_test(&train, &holdout, &cfg).unwrap();
    let sliced: usize = report
        .groups
        .iter()
        .filter_map(|g| g.arc_slice.as_ref())
        .map(|s| s.n_orders)
        .sum();
    assert!(sliced > 0);
    assert!(sliced < report.groups.iter().map(|g| g.orders).sum::<usize>());
}

#[test]
fn no_preference_signal_leaves_both_arms_near_fallback() {
    let gen = GeneratorConfig {
        preference_concentration: 0.0,
        ..small()
    };
    let a_a = replay(&gen, 25, |c| {
        c.group_a_model = ModelSpec::Popularity;
        c.group_b_model = ModelSpec::Popularity;
    });
    let fallback_arc = (a_a.group(Group::A).arc.mean + a_a.group(Group::B).arc.mean) / 2.0;
    let report = replay(&gen, 25, |_| {});
    for g in &report.groups {
        let rel = (g.arc.mean - fallback_arc).abs() / fallback_arc;
        assert!(
            rel < 0.1,
            "{:?} ARC {} vs fallback {}",
            g.group,
            g.arc.mean,
            fallback_arc
        );
    }
    // with signal, the long ranking pulls well away from the fallback
    let signal = replay(&small(), 25, |_| {});
    assert!(signal.group(Group::B).arc.mean < 0.8 * fallback_arc);
}

#[test]
fn identical_arms_rarely_reject() {
    let mut rejections = 0;
    for seed in 0..20 {
        let report = replay(&small(), 100 + seed, |c| {
            c.group_b_model = ModelSpec::Egnn(EgnnConfig::default());
            c.n_prefix_b = c.n_prefix_a;
        });
        if report.welch.rejects(0.05) {
            rejections += 1;
        }
    }
    assert!(rejections <= 2, "{rejections} of 20 A/A runs rejected");
}
