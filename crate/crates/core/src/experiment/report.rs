//! Human-readable rendering of an [`AbReport`].

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{AbReport, GroupReport};
use crate::error::{Error, Result};
use crate::stats::{DegreesOfFreedom, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

fn fmt_df(df: &DegreesOfFreedom) -> String {
    match df {
        DegreesOfFreedom::Single(d) => format!("{d:.2}"),
        DegreesOfFreedom::Pair(a, b) => format!("({a}, {b})"),
    }
}

fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.2e}")
    } else {
        format!("{p:.4}")
    }
}

fn test_line(out: &mut String, label: &str, t: Option<&TestResult>) {
    match t {
        Some(t) => {
            let _ = writeln!(
                out,
                "| {label} | {} | {:.4} | {} | {} |",
                t.test,
                t.statistic,
                fmt_df(&t.df),
                fmt_p(t.p_value)
            );
        }
        None => {
            let _ = writeln!(out, "| {label} | n/a | | | |");
        }
    }
}

fn group_row(out: &mut String, g: &GroupReport) {
    let _ = writeln!(
        out,
        "| {:?} | {} | {} | {} | {:.2} | {:.2} | {:.1} |",
        g.group, g.ranking, g.users, g.arc.n_orders, g.arc.mean, g.arc.std, g.mean_prefix_len
    );
}

fn markdown(r: &AbReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# A/B replay (seed {}, cutoff {})\n", r.seed, r.cutoff);
    let _ = writeln!(out, "## Average rank of chosen items\n");
    let _ = writeln!(
        out,
        "| Group | Ranking | Users | Orders | Mean ARC | Std ARC | Mean prefix |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    for g in &r.groups {
        group_row(&mut out, g);
    }
    let _ = writeln!(
        out,
        "| p-value | Welch, one-sided | | | {} | | |",
        fmt_p(r.welch.p_value)
    );
    let _ = writeln!(
        out,
        "\nWelch t = {:.3}, df = {}, one-sided p = {}. ARC reduction (1 - B/A): {:.1}%.",
        r.welch.statistic,
        fmt_df(&r.welch.df),
        fmt_p(r.welch.p_value),
        100.0 * r.arc_reduction
    );
    if let (Some(day), Some(t)) = (r.slice_date, &r.slice_welch) {
        let _ = writeln!(out, "\nSingle day {day}:\n");
        for g in &r.groups {
            if let Some(s) = &g.arc_slice {
                let _ = writeln!(
                    out,
                    "- {:?}: {} orders, mean ARC {:.2}, std {:.2}",
                    g.group, s.n_orders, s.mean, s.std
                );
            }
        }
        let _ = writeln!(
            out,
            "- Welch t = {:.3}, p = {}",
            t.statistic,
            fmt_p(t.p_value)
        );
    }

    let _ = writeln!(out, "\n## Conversion and basket size\n");
    let _ = writeln!(
        out,
        "| Group | Orders per user | Mean basket | Std basket | Median basket |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|");
    for (g, opu) in r.groups.iter().zip([
        r.conversion.orders_per_user_a,
        r.conversion.orders_per_user_b,
    ]) {
        let _ = writeln!(
            out,
            "| {:?} | {:.3} | {:.2} | {:.2} | {:.1} |",
            g.group, opu, g.basket.mean, g.basket.sd, g.basket_median
        );
    }
    let _ = writeln!(
        out,
        "\nConversion lift (B over A): {:.1}%.\n",
        100.0 * r.conversion.lift
    );
    let _ = writeln!(out, "| Comparison | Test | Statistic | df | p |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    test_line(&mut out, "ARC", Some(&r.welch));
    test_line(
        &mut out,
        "Converted users",
        r.conversion.chi_squared.as_ref(),
    );
    test_line(&mut out, "Basket size mean", r.basket.t_test.as_ref());
    test_line(
        &mut out,
        "Basket size median",
        r.basket.moods_median.as_ref(),
    );

    let _ = writeln!(out, "\n## ARC distribution\n");
    for g in &r.groups {
        match &g.normality {
            Some(n) => {
                let _ = writeln!(
                    out,
                    "- {:?}: skewness {:.3}, excess kurtosis {:.3}, {} bins of width {:.2}",
                    g.group,
                    n.skewness,
                    n.excess_kurtosis,
                    n.bins.len(),
                    n.bin_width
                );
            }
            None => {
                let _ = writeln!(out, "- {:?}: too few orders for a histogram", g.group);
            }
        }
    }
    let _ = writeln!(
        out,
        "\nSearch time and revenue per order need live sessions and prices; they are not computed from a purchase log."
    );
    out
}

pub fn render_report(report: &AbReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).map_err(|e| Error::Io(e.to_string()))
        }
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}
