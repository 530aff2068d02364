//! JSON and text renderings of verification reports.
//!
//! Both renderings print every real through [`format_real`], so the two
//! outputs of one run carry identical numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::json::Real;
use crate::observer::Outcome;
use crate::prob::{format_real, Distribution};
use crate::scenario::FORMAT_VERSION;
use crate::verify::VerificationReport;

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ReportDto<'a> {
    format_version: u32,
    scenario: &'a str,
    mode: String,
    distance: String,
    lhs: BTreeMap<String, Real>,
    rhs: BTreeMap<String, Real>,
    distance_value: Real,
    epsilon: Option<Real>,
    verdict: String,
    unmapped_mass: Real,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_stats: Option<McStatsDto>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct McStatsDto {
    samples: u64,
    runs: u64,
    seed: u64,
    mean: Real,
    std: Real,
    per_run: Vec<McRunDto>,
}

#[derive(Serialize)]
struct McRunDto {
    seed: u64,
    distance: Real,
    rhs: BTreeMap<String, Real>,
}

fn outcome_map<T: Ord + Clone + std::fmt::Debug>(
    d: &Distribution<T>,
    key: impl Fn(&T) -> String,
) -> BTreeMap<String, Real> {
    d.iter().map(|(k, p)| (key(k), Real(p))).collect()
}

/// Pretty-printed JSON report.
pub fn report_json(scenario: &str, report: &VerificationReport) -> String {
    let dto = ReportDto {
        format_version: FORMAT_VERSION,
        scenario,
        mode: report.mode.to_string(),
        distance: report.distance_kind.to_string(),
        lhs: outcome_map(&report.lhs, |s| s.key()),
        rhs: outcome_map(&report.rhs, Outcome::key),
        distance_value: Real(report.distance_value),
        epsilon: report.epsilon.map(Real),
        verdict: report.verdict.to_string(),
        unmapped_mass: Real(report.unmapped_mass),
        mc_stats: report.mc_stats.as_ref().map(|s| McStatsDto {
            samples: s.samples,
            runs: s.runs,
            seed: s.seed,
            mean: Real(s.mean),
            std: Real(s.std),
            per_run: s
                .per_run
                .iter()
                .map(|r| McRunDto {
                    seed: r.seed,
                    distance: Real(r.distance),
                    rhs: outcome_map(&r.rhs, Outcome::key),
                })
                .collect(),
        }),
    };
    let mut out = serde_json::to_string_pretty(&dto).expect("report serialization is infallible");
    out.push('\n');
    out
}

fn real(x: f64) -> String {
    if x.is_finite() {
        format_real(x)
    } else {
        x.to_string()
    }
}

/// Human-readable report with an aligned outcome table.
pub fn report_text(scenario: &str, report: &VerificationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario   {scenario}");
    let _ = writeln!(out, "mode       {}", report.mode);
    let _ = writeln!(
        out,
        "distance   {} = {}",
        report.distance_kind,
        real(report.distance_value)
    );
    match report.epsilon {
        Some(eps) => {
            let _ = writeln!(out, "epsilon    {}", real(eps));
        }
        None => {
            let _ = writeln!(out, "epsilon    none (exact equality)");
        }
    }
    let _ = writeln!(out, "verdict    {}", report.verdict);
    let _ = writeln!(out, "unmapped   {}", real(report.unmapped_mass));
    if let Some(stats) = &report.mc_stats {
        let _ = writeln!(
            out,
            "monte carlo: {} runs x {} samples, seed {}: {} ± {}",
            stats.runs,
            stats.samples,
            stats.seed,
            real(stats.mean),
            real(stats.std)
        );
    }

    let lhs = outcome_map(&report.lhs, |s| s.key());
    let rhs = outcome_map(&report.rhs, Outcome::key);
    let mut keys: Vec<&String> = lhs.keys().chain(rhs.keys()).collect();
    keys.sort();
    keys.dedup();
    let width = keys
        .iter()
        .map(|k| k.chars().count())
        .max()
        .unwrap_or(0)
        .max("outcome".len());
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<width$}  {:<20}  {:<20}", "outcome", "referent", "simulator");
    for key in keys {
        let cell = |m: &BTreeMap<String, Real>| real(m.get(key).map_or(0.0, |r| r.0));
        let pad = width - key.chars().count() + key.len();
        let _ = writeln!(out, "{key:<pad$}  {:<20}  {:<20}", cell(&lhs), cell(&rhs));
    }
    out
}
