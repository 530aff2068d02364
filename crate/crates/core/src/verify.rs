//! Simulation checks: exact equality of the referent-side and
//! simulator-side distributions, approximate agreement under a distance,
//! and repeated Monte Carlo estimates of that distance.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::observer::{tau_push, Observer, Outcome};
use crate::prob::{Distribution, TOLERANCE};
use crate::rng::derive_seed;
use crate::scm::EndogenousSetting;
use crate::token::{empirical, PaddedOutput, TokenSimulator};

pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_SAMPLES: u64 = 10_000;
pub const DEFAULT_RUNS: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DistanceKind {
    #[default]
    TotalVariation,
    KLDivergence,
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceKind::TotalVariation => "tvd",
            DistanceKind::KLDivergence => "kl",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    MonteCarlo,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "monte-carlo",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Simulates,
    Fails,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Simulates => "simulates",
            Verdict::Fails => "fails",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McConfig {
    pub samples: u64,
    pub runs: u64,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            runs: DEFAULT_RUNS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McRun {
    pub seed: u64,
    pub rhs: Distribution<Outcome>,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct McStats {
    pub samples: u64,
    pub runs: u64,
    pub seed: u64,
    pub mean: f64,
    pub std: f64,
    pub per_run: Vec<McRun>,
}

/// Which check to run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CheckSpec {
    /// Outcome-by-outcome equality.
    Exact,
    /// Exact distributions, verdict by `distance < epsilon`.
    Approx { epsilon: f64, distance: DistanceKind },
    /// Repeated Monte Carlo estimates, verdict on the mean distance.
    MonteCarlo {
        epsilon: f64,
        distance: DistanceKind,
        config: McConfig,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub mode: Mode,
    pub distance_kind: DistanceKind,
    pub lhs: Distribution<EndogenousSetting>,
    pub rhs: Distribution<Outcome>,
    pub distance_value: f64,
    pub epsilon: Option<f64>,
    pub verdict: Verdict,
    pub unmapped_mass: f64,
    pub mc_stats: Option<McStats>,
}

impl VerificationReport {
    /// Recomputes the distance from the embedded distributions: directly
    /// for exact reports, as the mean over runs for Monte Carlo reports.
    pub fn recompute_distance(&self) -> Result<f64> {
        let lhs = lift(&self.lhs);
        match &self.mc_stats {
            None => distance(self.distance_kind, &lhs, &self.rhs),
            Some(stats) => {
                let mut sum = 0.0;
                for run in &stats.per_run {
                    sum += distance(self.distance_kind, &lhs, &run.rhs)?;
                }
                Ok(sum / stats.per_run.len() as f64)
            }
        }
    }
}

fn lift(lhs: &Distribution<EndogenousSetting>) -> Distribution<Outcome> {
    lhs.map(|s| Outcome::State(s.clone()))
}

fn require_normalized<T: Ord + Clone + fmt::Debug>(d: &Distribution<T>) -> Result<()> {
    let total = d.total();
    if !d.is_normalized() || (total - 1.0).abs() > TOLERANCE {
        return Err(Error::NotNormalized { total });
    }
    Ok(())
}

/// Total variation distance `½ Σ |p(x) − q(x)|` over the union of supports.
pub fn tvd<T: Ord + Clone + fmt::Debug>(p: &Distribution<T>, q: &Distribution<T>) -> Result<f64> {
    require_normalized(p)?;
    require_normalized(q)?;
    let mut sum = 0.0;
    for (x, px) in p.iter() {
        sum += (px - q.prob(x)).abs();
    }
    for (x, qx) in q.iter() {
        if p.prob(x) == 0.0 {
            sum += qx;
        }
    }
    Ok((0.5 * sum).min(1.0))
}

/// `KL(p ‖ q)` in nats; infinite when `p` has mass where `q` has none.
pub fn kl_divergence<T: Ord + Clone + fmt::Debug>(p: &Distribution<T>, q: &Distribution<T>) -> Result<f64> {
    require_normalized(p)?;
    require_normalized(q)?;
    let mut sum = 0.0;
    for (x, px) in p.iter() {
        let qx = q.prob(x);
        if qx == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += px * (px / qx).ln();
    }
    Ok(sum.max(0.0))
}

pub fn distance<T: Ord + Clone + fmt::Debug>(
    kind: DistanceKind,
    p: &Distribution<T>,
    q: &Distribution<T>,
) -> Result<f64> {
    match kind {
        DistanceKind::TotalVariation => tvd(p, q),
        DistanceKind::KLDivergence => kl_divergence(p, q),
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && !epsilon.is_nan() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

struct Sides {
    lhs: Distribution<EndogenousSetting>,
    prompts: Distribution<Vec<String>>,
}

fn sides(obs: &Observer, sim: &TokenSimulator) -> Result<Sides> {
    let lhs = obs.referent_outcome_distribution()?;
    let prompts = obs.prompt_distribution()?;
    crate::observer::joint_input_distribution(&prompts, sim)?;
    Ok(Sides { lhs, prompts })
}

fn exact_report(obs: &Observer, sim: &TokenSimulator, distance_kind: DistanceKind) -> Result<VerificationReport> {
    let Sides { lhs, prompts } = sides(obs, sim)?;
    let outputs = sim.exact_output_distribution(&prompts)?;
    let rhs = tau_push(&outputs, obs.tau(), sim.vocab());
    let distance_value = distance(distance_kind, &lift(&lhs), &rhs)?;
    let verdict = if lift(&lhs).approx_eq(&rhs, TOLERANCE) {
        Verdict::Simulates
    } else {
        Verdict::Fails
    };
    Ok(VerificationReport {
        mode: Mode::Exact,
        distance_kind,
        unmapped_mass: rhs.prob(&Outcome::Unmapped),
        lhs,
        rhs,
        distance_value,
        epsilon: None,
        verdict,
        mc_stats: None,
    })
}

/// Exact commutativity check: the referent-side distribution must equal
/// the τ-image of the simulator's output distribution outcome by outcome.
pub fn check_exact(obs: &Observer, sim: &TokenSimulator) -> Result<VerificationReport> {
    exact_report(obs, sim, DistanceKind::TotalVariation)
}

/// Approximate check: simulates iff `d(lhs, rhs) < epsilon`.
pub fn check_approx(
    obs: &Observer,
    sim: &TokenSimulator,
    epsilon: f64,
    distance_kind: DistanceKind,
) -> Result<VerificationReport> {
    check_epsilon(epsilon)?;
    let mut report = exact_report(obs, sim, distance_kind)?;
    report.epsilon = Some(epsilon);
    report.verdict = verdict_for(report.distance_value, epsilon);
    Ok(report)
}

fn verdict_for(d: f64, epsilon: f64) -> Verdict {
    if d < epsilon {
        Verdict::Simulates
    } else {
        Verdict::Fails
    }
}

/// `runs` independent Monte Carlo estimates of the distance, each from
/// `samples` seeded trials. The verdict is taken on the mean.
pub fn mc_check(
    obs: &Observer,
    sim: &TokenSimulator,
    epsilon: f64,
    distance_kind: DistanceKind,
    config: McConfig,
) -> Result<VerificationReport> {
    check_epsilon(epsilon)?;
    if config.samples == 0 || config.runs == 0 {
        return Err(Error::InvalidParameter("samples and runs must be at least 1".into()));
    }
    let Sides { lhs, prompts } = sides(obs, sim)?;
    let lhs_lifted = lift(&lhs);
    let mut pooled: BTreeMap<PaddedOutput, u64> = BTreeMap::new();
    let mut per_run = Vec::with_capacity(config.runs as usize);
    for run in 0..config.runs {
        let seed = derive_seed(config.seed, run);
        let counts = sim.mc_output_counts(&prompts, config.samples, seed)?;
        for (k, c) in &counts {
            *pooled.entry(k.clone()).or_insert(0) += c;
        }
        let rhs = tau_push(&empirical(counts, config.samples), obs.tau(), sim.vocab());
        let distance = distance(distance_kind, &lhs_lifted, &rhs)?;
        per_run.push(McRun { seed, rhs, distance });
    }
    let (mean, std) = mean_std(per_run.iter().map(|r| r.distance));
    let rhs = tau_push(&empirical(pooled, config.samples * config.runs), obs.tau(), sim.vocab());
    Ok(VerificationReport {
        mode: Mode::MonteCarlo,
        distance_kind,
        unmapped_mass: rhs.prob(&Outcome::Unmapped),
        lhs,
        rhs,
        distance_value: mean,
        epsilon: Some(epsilon),
        verdict: verdict_for(mean, epsilon),
        mc_stats: Some(McStats {
            samples: config.samples,
            runs: config.runs,
            seed: config.seed,
            mean,
            std,
            per_run,
        }),
    })
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_std<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    if mean.is_infinite() {
        let all_inf = values.iter().all(|v| v.is_infinite());
        return (mean, if all_inf { 0.0 } else { f64::INFINITY });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_check(obs: &Observer, sim: &TokenSimulator, spec: &CheckSpec) -> Result<VerificationReport> {
    match *spec {
        CheckSpec::Exact => check_exact(obs, sim),
        CheckSpec::Approx { epsilon, distance } => check_approx(obs, sim, epsilon, distance),
        CheckSpec::MonteCarlo {
            epsilon,
            distance,
            config,
        } => mc_check(obs, sim, epsilon, distance, config),
    }
}

/// One turn of a dialogue: the observer's encodings produce the new user
/// text, which is appended to the transcript so far.
#[derive(Clone, Debug)]
pub struct Turn {
    pub observer: Observer,
    pub transcript_prefix: Vec<String>,
}

/// Checks every turn as its own single-turn interaction whose prompts are
/// the full transcripts.
pub fn multi_turn_trajectory(
    turns: &[Turn],
    sim: &TokenSimulator,
    spec: &CheckSpec,
) -> Result<Vec<VerificationReport>> {
    turns
        .iter()
        .enumerate()
        .map(|(i, turn)| {
            let obs = turn.observer.clone().with_prompt_prefix(&turn.transcript_prefix);
            run_check(&obs, sim, spec).map_err(|e| Error::Turn {
                turn: i,
                source: Box::new(e),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin;

    fn d(pairs: &[(&str, f64)]) -> Distribution<String> {
        Distribution::from_pairs(pairs.iter().map(|(k, p)| (k.to_string(), *p))).unwrap()
    }

    #[test]
    fn tvd_examples() {
        let fair = d(&[("H", 0.5), ("T", 0.5)]);
        assert_eq!(tvd(&d(&[("H", 1.0)]), &fair).unwrap(), 0.5);
        assert_eq!(tvd(&fair, &fair).unwrap(), 0.0);
        assert!((tvd(&d(&[("H", 0.51), ("T", 0.49)]), &fair).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(tvd(&d(&[("⊥", 1.0)]), &fair).unwrap(), 1.0);
    }

    #[test]
    fn tvd_rejects_sub_distributions() {
        let sub = Distribution::sub([("H".to_string(), 0.5)].into_iter().collect()).unwrap();
        assert!(tvd(&sub, &d(&[("H", 1.0)])).is_err());
    }

    #[test]
    fn kl_examples() {
        let fair = d(&[("H", 0.5), ("T", 0.5)]);
        assert_eq!(kl_divergence(&fair, &fair).unwrap(), 0.0);
        assert_eq!(kl_divergence(&fair, &d(&[("H", 1.0)])).unwrap(), f64::INFINITY);
        let k = kl_divergence(&fair, &d(&[("H", 0.9), ("T", 0.1)])).unwrap();
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((k - expected).abs() < 1e-12);
    }

    #[test]
    fn exact_verdicts_on_builtins() {
        let run = |name: &str| {
            let doc = builtin(name).unwrap();
            check_exact(&doc.observer, &doc.simulator).unwrap()
        };
        let r = run("example4");
        assert_eq!(r.verdict, Verdict::Simulates);
        assert!(r.distance_value.abs() < 1e-9);

        let r = run("example1-greedy");
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.distance_value - 0.5).abs() < 1e-12);

        let r = run("example3-mismatch");
        assert_eq!(r.verdict, Verdict::Fails);
        assert_eq!(r.unmapped_mass, 1.0);
        assert!((r.distance_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn approx_verdicts_on_builtins() {
        let run = |name: &str, eps: f64| {
            let doc = builtin(name).unwrap();
            check_approx(&doc.observer, &doc.simulator, eps, DistanceKind::TotalVariation).unwrap()
        };
        let r = run("example1-top2", 0.05);
        assert_eq!(r.verdict, Verdict::Simulates);
        assert!((r.distance_value - 0.01).abs() < 1e-9);
        let r = run("example2-biased", 0.05);
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.distance_value - 0.4).abs() < 1e-9);
        for eps in [1e-6, 0.05, 0.5] {
            assert_eq!(run("example2-fair", eps).verdict, Verdict::Simulates);
        }
        assert!(matches!(
            check_approx(
                &builtin("example4").unwrap().observer,
                &builtin("example4").unwrap().simulator,
                0.0,
                DistanceKind::TotalVariation
            ),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn kl_on_mismatch_is_infinite() {
        let doc = builtin("example3-mismatch").unwrap();
        let r = check_approx(&doc.observer, &doc.simulator, 1e9, DistanceKind::KLDivergence).unwrap();
        assert_eq!(r.distance_value, f64::INFINITY);
        assert_eq!(r.verdict, Verdict::Fails);
    }

    #[test]
    fn greedy_monte_carlo_has_no_spread() {
        let doc = builtin("example1-greedy").unwrap();
        let cfg = McConfig {
            samples: 500,
            runs: 4,
            seed: 99,
        };
        let r = mc_check(&doc.observer, &doc.simulator, 0.05, DistanceKind::TotalVariation, cfg).unwrap();
        let stats = r.mc_stats.as_ref().unwrap();
        assert_eq!(stats.mean, 0.5);
        assert_eq!(stats.std, 0.0);
        assert_eq!(r.verdict, Verdict::Fails);
        assert!((r.recompute_distance().unwrap() - r.distance_value).abs() < 1e-12);
        let again = mc_check(&doc.observer, &doc.simulator, 0.05, DistanceKind::TotalVariation, cfg).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std([2.0].into_iter()), (2.0, 0.0));
        let (m, s) = mean_std([1.0, 3.0].into_iter());
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
