mod config;
mod error;
mod output;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{ArgGroup, Args, Parser, Subcommand};
use rayon::prelude::*;

use grocer_rank::baseline::{popularity_ranking_over, EgnnModel};
use grocer_rank::experiment::{
    cutoff_for_holdout_fraction, generate_synthetic_log, render_report, replay_ab_test,
    temporal_split, ReportFormat,
};
use grocer_rank::ingest::parse_transaction_log;
use grocer_rank::metrics::{
    arc_aggregate, arc_lower_bound, decisions_best_case, decisions_worst_case,
    minimal_ranking_length, OrderOutcome,
};
use grocer_rank::ranking::{read_rankings_csv, write_rankings_csv};
use grocer_rank::{AbConfig, AbReport, CousinModel, Error, FullRanking, LogFormat, TransactionLog};

use config::RunConfig;
use error::CliError;
use output::{sidecar, write_atomic, Manifest};

const THREADS_ENV: &str = "GROCER_RANK_THREADS";

#[derive(Parser)]
#[command(
    name = "grocer-rank",
    version,
    about = "Personalized full-assortment grocery rankings"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for keys of the config file.
#[derive(Args)]
struct Common {
    /// TOML key-value config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reference / split date (YYYY-MM-DD)
    #[arg(long, global = true)]
    cutoff: Option<NaiveDate>,
    /// Item-side window in days
    #[arg(long, global = true)]
    tau: Option<u32>,
    /// User-side order percentile in (0, 100]
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Length of the personalized top-N prefix
    #[arg(long, global = true)]
    n_prefix: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// csv | jsonl for logs, json | markdown for reports
    #[arg(long, global = true)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a transaction log, print a summary
    IngestCheck,
    /// Build the similarity matrices and write them to the output directory
    Train,
    /// Write full-assortment rankings for every known user
    Rank {
        /// top-n, top-k or popularity
        #[arg(long, default_value = "top-n")]
        model: String,
        /// Restrict to these users (comma separated)
        #[arg(long, value_delimiter = ',')]
        users: Vec<String>,
    },
    /// Decision-count arithmetic, or ARC of a rankings file against a log
    #[command(group(ArgGroup::new("which").args(["eq1", "eq2", "eq3", "eq6", "rankings"]).required(true)))]
    Metrics {
        /// Decisions for a list-first shelf (needs --s)
        #[arg(long)]
        eq1: bool,
        /// Decisions for a list-last shelf (needs --a, --s)
        #[arg(long)]
        eq2: bool,
        /// Minimal ranking length (needs --s, --accuracy)
        #[arg(long)]
        eq3: bool,
        /// ARC lower bound of an order (needs --size)
        #[arg(long)]
        eq6: bool,
        #[arg(long = "s")]
        s: Option<u64>,
        #[arg(long = "a")]
        a: Option<u64>,
        #[arg(long)]
        accuracy: Option<f64>,
        #[arg(long)]
        size: Option<usize>,
        /// Rankings CSV; scored against the orders in --input
        #[arg(long)]
        rankings: Option<PathBuf>,
    },
    /// Replay an A/B comparison on a temporal split of the log
    Abtest {
        /// Share of orders held out when no cutoff is given
        #[arg(long)]
        holdout_fraction: Option<f64>,
        /// Day reported separately
        #[arg(long)]
        slice_date: Option<NaiveDate>,
    },
    /// Generate a seeded synthetic transaction log
    Synth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long)]
        orders_per_user: Option<f64>,
        #[arg(long)]
        basket_size: Option<f64>,
        #[arg(long)]
        concentration: Option<f64>,
    },
    /// Render an A/B report JSON as markdown or JSON
    Report,
}

fn resolve(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    macro_rules! overlay {
        ($($field:ident),*) => {$(
            if let Some(v) = &common.$field {
                cfg.$field = v.clone();
            }
        )*};
    }
    overlay!(seed, sigma, alpha, beta, n_prefix);
    if common.cutoff.is_some() {
        cfg.cutoff = common.cutoff;
    }
    if common.tau.is_some() {
        cfg.tau = common.tau;
    }
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    if common.input.is_some() {
        cfg.input = common.input.clone();
    }
    if common.format.is_some() {
        cfg.format = common.format.clone();
    }
    Ok(cfg)
}

fn log_format(cfg: &RunConfig, path: Option<&Path>) -> Result<LogFormat, CliError> {
    if let Some(f) = &cfg.format {
        return f.parse().map_err(CliError::from);
    }
    let jsonl = path
        .and_then(|p| p.extension())
        .is_some_and(|e| e == "jsonl" || e == "json");
    Ok(if jsonl {
        LogFormat::Jsonl
    } else {
        LogFormat::Csv
    })
}

fn load_log(cfg: &RunConfig, manifest: &mut Manifest) -> Result<TransactionLog, CliError> {
    let path = cfg.input()?;
    let bytes = std::fs::read(path)?;
    manifest.input(path, &bytes);
    Ok(parse_transaction_log(
        bytes.as_slice(),
        log_format(cfg, Some(path))?,
    )?)
}

fn reference_date(cfg: &RunConfig, log: &TransactionLog) -> Result<NaiveDate, CliError> {
    match cfg.cutoff {
        Some(d) => Ok(d),
        None => log
            .last_date()
            .ok_or_else(|| CliError::Data("the log holds no events".into())),
    }
}

fn emit_or_print(
    manifest: &mut Manifest,
    out: Option<&Path>,
    bytes: &[u8],
) -> Result<(), CliError> {
    match out {
        Some(path) => manifest.emit(path, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn finish(manifest: Manifest, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => manifest.finish(&sidecar(path)),
        None => Ok(()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn ingest_check(cfg: &RunConfig) -> Result<(), CliError> {
    let mut manifest = Manifest::new("ingest-check", cfg);
    let log = load_log(cfg, &mut manifest)?;
    let orders = log.orders();
    let summary = serde_json::json!({
        "events": log.len(),
        "orders": orders.len(),
        "users": log.users().len(),
        "items": log.assortment_size(),
        "categories": log.catalog().values().collect::<std::collections::BTreeSet<_>>().len(),
        "first_date": log.first_date(),
        "last_date": log.last_date(),
        "mean_distinct_items_per_order": orders.iter().map(|o| o.items.len()).sum::<usize>() as f64
            / orders.len().max(1) as f64,
        "sha256": manifest.inputs[0].sha256,
    });
    emit_or_print(&mut manifest, cfg.out.as_deref(), &to_json(&summary)?)?;
    finish(manifest, cfg.out.as_deref())
}

fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Config("train needs --out <directory>".into()))?;
    let mut manifest = Manifest::new("train", cfg);
    let log = load_log(cfg, &mut manifest)?;
    let reference = reference_date(cfg, &log)?;
    let model = CousinModel::fit(&log, &cfg.cousin(), reference)?;
    let net = model.network();
    for (name, sim) in [
        ("item_similarity.csv", net.item_sim()),
        ("user_similarity.csv", net.user_sim()),
    ] {
        let mut buf = Vec::new();
        sim.write_csv(&mut buf)?;
        manifest.emit(&out.join(name), &buf)?;
    }
    eprintln!(
        "trained on {} events up to {reference}: {} item pairs, {} user pairs, {} purchase edges",
        log.len(),
        net.item_sim().n_pairs(),
        net.user_sim().n_pairs(),
        net.n_purchase_edges()
    );
    manifest.finish(&out.join("manifest.json"))
}

fn rank(cfg: &RunConfig, model_name: &str, only: &[String]) -> Result<(), CliError> {
    let mut manifest = Manifest::new("rank", cfg);
    let log = load_log(cfg, &mut manifest)?;
    let reference = reference_date(cfg, &log)?;
    let train = log.filter(|e| e.date() <= reference);
    let fallback = popularity_ranking_over(&train, &log.catalog(), cfg.fallback_by_cluster);
    let users: Vec<grocer_rank::UserId> = if only.is_empty() {
        train.users()
    } else {
        only.iter()
            .map(|u| grocer_rank::UserId::new(u.as_str()))
            .collect()
    };
    let results: Vec<grocer_rank::Result<FullRanking>> =
        match model_name.to_ascii_lowercase().as_str() {
            "top-n" | "cousin" => {
                let model = CousinModel::fit(&train, &cfg.cousin(), reference)?;
                model.rank_all(&users, &fallback)
            }
            "top-k" | "egnn" => {
                let model = EgnnModel::fit(&train, &cfg.egnn(Some(reference)))?;
                users
                    .par_iter()
                    .map(|u| {
                        if model.knows(u.as_str()) {
                            model.rank(u, &fallback)
                        } else {
                            Err(Error::ColdStartUser(u.to_string()))
                        }
                    })
                    .collect()
            }
            "popularity" => users
                .iter()
                .map(|u| {
                    Ok(FullRanking::complete(
                        u.clone(),
                        Vec::new(),
                        Vec::new(),
                        &fallback,
                    ))
                })
                .collect(),
            other => return Err(CliError::Config(format!("unknown model {other:?}"))),
        };
    let mut rankings = Vec::with_capacity(results.len());
    let mut cold = 0;
    for r in results {
        match r {
            Ok(r) => rankings.push(r),
            Err(Error::ColdStartUser(_)) => cold += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if cold > 0 {
        eprintln!("skipped {cold} users without usable history");
    }
    let mut buf = Vec::new();
    write_rankings_csv(&mut buf, &rankings)?;
    emit_or_print(&mut manifest, cfg.out.as_deref(), &buf)?;
    finish(manifest, cfg.out.as_deref())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing --{flag}")))
}

#[allow(clippy::too_many_arguments)]
fn metrics(
    cfg: &RunConfig,
    (eq1, eq2, eq3, eq6): (bool, bool, bool, bool),
    s: Option<u64>,
    a: Option<u64>,
    accuracy: Option<f64>,
    size: Option<usize>,
    rankings: Option<&Path>,
) -> Result<(), CliError> {
    if eq1 {
        println!("{}", decisions_best_case(require(s, "s")?));
    } else if eq2 {
        println!(
            "{}",
            decisions_worst_case(require(a, "a")?, require(s, "s")?)?
        );
    } else if eq3 {
        println!(
            "{}",
            minimal_ranking_length(require(s, "s")?, require(accuracy, "accuracy")?)?
        );
    } else if eq6 {
        println!("{}", arc_lower_bound(require(size, "size")?)?);
    } else if let Some(path) = rankings {
        if !path.exists() {
            return Err(CliError::Config(format!(
                "rankings {} does not exist",
                path.display()
            )));
        }
        let mut manifest = Manifest::new("metrics", cfg);
        let bytes = std::fs::read(path)?;
        manifest.input(path, &bytes);
        let rankings = read_rankings_csv(bytes.as_slice())?;
        let log = load_log(cfg, &mut manifest)?;
        let by_user: HashMap<&str, &FullRanking> =
            rankings.iter().map(|r| (r.user_id.as_str(), r)).collect();
        let mut outcomes = Vec::new();
        let mut unranked = 0;
        for order in log.orders() {
            let Some(ranking) = by_user.get(order.user_id.as_str()) else {
                unranked += 1;
                continue;
            };
            let lookup = ranking.rank_lookup();
            let ranks = order
                .items
                .iter()
                .map(|i| {
                    lookup
                        .get(i)
                        .copied()
                        .ok_or_else(|| Error::UnknownId(format!("{i} is not ranked")))
                })
                .collect::<grocer_rank::Result<Vec<_>>>()?;
            outcomes.push(OrderOutcome::new(order.order_id.clone(), ranks));
        }
        if unranked > 0 {
            eprintln!("skipped {unranked} orders of users without a ranking");
        }
        let report = arc_aggregate(&outcomes)?;
        emit_or_print(&mut manifest, cfg.out.as_deref(), &to_json(&report)?)?;
        finish(manifest, cfg.out.as_deref())?;
    }
    Ok(())
}

fn abtest(cfg: &RunConfig) -> Result<(), CliError> {
    let mut manifest = Manifest::new("abtest", cfg);
    let log = load_log(cfg, &mut manifest)?;
    let cutoff = match cfg.cutoff {
        Some(d) => d,
        None => cutoff_for_holdout_fraction(&log, cfg.holdout_fraction)?,
    };
    let (train, holdout) = temporal_split(&log, cutoff)?;
    let ab = AbConfig {
        seed: cfg.seed,
        cutoff,
        group_a_model: cfg.model(&cfg.group_a)?,
        group_b_model: cfg.model(&cfg.group_b)?,
        n_prefix_a: cfg.prefix_for(&cfg.group_a),
        n_prefix_b: cfg.prefix_for(&cfg.group_b),
        activity_days: cfg.activity_days,
        fallback_by_cluster: cfg.fallback_by_cluster,
        slice_date: cfg.slice_date,
    };
    let report = replay_ab_test(&train, &holdout, &ab)?;
    let markdown = render_report(&report, ReportFormat::Markdown)?;
    match &cfg.out {
        Some(dir) => {
            manifest.emit(
                &dir.join("report.json"),
                render_report(&report, ReportFormat::Json)?.as_bytes(),
            )?;
            manifest.emit(&dir.join("report.md"), markdown.as_bytes())?;
            manifest.finish(&dir.join("manifest.json"))?;
            eprintln!(
                "ARC A {:.1} vs B {:.1}, one-sided p = {:.3e}; written to {}",
                report.groups[0].arc.mean,
                report.groups[1].arc.mean,
                report.welch.p_value,
                dir.display()
            );
        }
        None => print!("{markdown}"),
    }
    Ok(())
}

fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let mut manifest = Manifest::new("synth", cfg);
    let log = generate_synthetic_log(&cfg.generator(), cfg.seed)?;
    let mut buf = Vec::new();
    log.write(&mut buf, log_format(cfg, cfg.out.as_deref())?)?;
    emit_or_print(&mut manifest, cfg.out.as_deref(), &buf)?;
    finish(manifest, cfg.out.as_deref())
}

fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let path = cfg.input()?;
    let bytes = std::fs::read(path)?;
    let report: AbReport = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let format: ReportFormat = match &cfg.format {
        Some(f) => f.parse()?,
        None => ReportFormat::Markdown,
    };
    let text = render_report(&report, format)?;
    match &cfg.out {
        Some(out) => write_atomic(out, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let mut cfg = resolve(&cli.common)?;
    match cli.command {
        Command::IngestCheck => ingest_check(&cfg),
        Command::Train => {
            cfg.validate()?;
            train(&cfg)
        }
        Command::Rank { model, users } => {
            cfg.validate()?;
            rank(&cfg, &model, &users)
        }
        Command::Metrics {
            eq1,
            eq2,
            eq3,
            eq6,
            s,
            a,
            accuracy,
            size,
            rankings,
        } => metrics(
            &cfg,
            (eq1, eq2, eq3, eq6),
            s,
            a,
            accuracy,
            size,
            rankings.as_deref(),
        ),
        Command::Abtest {
            holdout_fraction,
            slice_date,
        } => {
            if let Some(f) = holdout_fraction {
                cfg.holdout_fraction = f;
            }
            if slice_date.is_some() {
                cfg.slice_date = slice_date;
            }
            cfg.validate()?;
            abtest(&cfg)
        }
        Command::Synth {
            users,
            items,
            clusters,
            orders_per_user,
            basket_size,
            concentration,
        } => {
            cfg.users = users.unwrap_or(cfg.users);
            cfg.items = items.unwrap_or(cfg.items);
            cfg.clusters = clusters.unwrap_or(cfg.clusters);
            cfg.orders_per_user = orders_per_user.unwrap_or(cfg.orders_per_user);
            cfg.basket_size = basket_size.unwrap_or(cfg.basket_size);
            cfg.concentration = concentration.unwrap_or(cfg.concentration);
            synth(&cfg)
        }
        Command::Report => report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("grocer-rank: {e}");
            e.exit_code()
        }
    }
}
