use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context as _};
use casim_core::report::{report_json, report_text};
use casim_core::scenario::{builtin, builtin_names, load_scenario, save_scenario, ScenarioDoc};
use casim_core::verify::{run_check, DEFAULT_EPSILON, DEFAULT_RUNS, DEFAULT_SAMPLES};
use casim_core::{CheckSpec, DistanceKind, McConfig, Mode, Verdict};
use clap::{Parser, Subcommand, ValueEnum};

const SEED_ENV: &str = "CASIM_SEED";

/// Check whether a token-level simulator reproduces an observer's causal
/// model of a referent.
#[derive(Parser, Debug)]
#[command(name = "casim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation check. Exit 0 if the simulator simulates, 1 if not.
    Verify {
        /// Scenario file or built-in name.
        scenario: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Approximation threshold (default 0.05 in approximate checks).
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_enum)]
        distance: Option<DistanceArg>,
        /// Trials per Monte Carlo run.
        #[arg(long)]
        samples: Option<u64>,
        /// Independent Monte Carlo runs.
        #[arg(long)]
        runs: Option<u64>,
        /// Base seed (falls back to $CASIM_SEED).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
        #[arg(long)]
        out_path: Option<PathBuf>,
    },
    /// Print generated transcripts with their τ images.
    Sample {
        scenario: String,
        #[arg(long, default_value_t = 10)]
        count: u64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
        #[arg(long)]
        out_path: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListBuiltins,
    /// Validate and print a scenario.
    Show {
        scenario: String,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
        #[arg(long)]
        out_path: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DistanceArg {
    Tvd,
    Kl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load(scenario: &str) -> anyhow::Result<ScenarioDoc> {
    if builtin_names().contains(&scenario) {
        return Ok(builtin(scenario)?);
    }
    let path = Path::new(scenario);
    let text = std::fs::read_to_string(path).with_context(|| {
        format!(
            "cannot read scenario file {scenario} (built-ins: {})",
            builtin_names().join(", ")
        )
    })?;
    load_scenario(&text).with_context(|| format!("in {scenario}"))
}

fn emit(text: &str, out_path: Option<&Path>) -> anyhow::Result<()> {
    match out_path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn env_seed() -> anyhow::Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(Some(
            v.trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={v:?} is not a seed"))?,
        )),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, doc: &ScenarioDoc) -> anyhow::Result<u64> {
    Ok(match flag {
        Some(s) => s,
        None => env_seed()?.or(doc.check.seed).unwrap_or(0),
    })
}

#[allow(clippy::too_many_arguments)]
fn check_spec(
    doc: &ScenarioDoc,
    mode: Option<ModeArg>,
    epsilon: Option<f64>,
    distance: Option<DistanceArg>,
    samples: Option<u64>,
    runs: Option<u64>,
    seed: Option<u64>,
) -> anyhow::Result<CheckSpec> {
    let mode = match mode {
        Some(ModeArg::Exact) => Mode::Exact,
        Some(ModeArg::Mc) => Mode::MonteCarlo,
        None => doc.check.mode.unwrap_or(Mode::Exact),
    };
    let distance_flag = distance.map(|d| match d {
        DistanceArg::Tvd => DistanceKind::TotalVariation,
        DistanceArg::Kl => DistanceKind::KLDivergence,
    });
    let distance = distance_flag.or(doc.check.distance);
    let epsilon = epsilon.or(doc.check.epsilon);
    match mode {
        Mode::Exact => {
            if samples.is_some() || runs.is_some() || seed.is_some() {
                bail!("--samples, --runs and --seed are only valid with --mode mc");
            }
            if epsilon.is_none() && distance.is_none() {
                return Ok(CheckSpec::Exact);
            }
            Ok(CheckSpec::Approx {
                epsilon: epsilon.unwrap_or(DEFAULT_EPSILON),
                distance: distance.unwrap_or_default(),
            })
        }
        Mode::MonteCarlo => Ok(CheckSpec::MonteCarlo {
            epsilon: epsilon.unwrap_or(DEFAULT_EPSILON),
            distance: distance.unwrap_or_default(),
            config: McConfig {
                samples: samples.or(doc.check.samples).unwrap_or(DEFAULT_SAMPLES),
                runs: runs.or(doc.check.runs).unwrap_or(DEFAULT_RUNS),
                seed: resolve_seed(seed, doc)?,
            },
        }),
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Verify {
            scenario,
            mode,
            epsilon,
            distance,
            samples,
            runs,
            seed,
            output,
            out_path,
        } => {
            let doc = load(&scenario)?;
            let spec = check_spec(&doc, mode, epsilon, distance, samples, runs, seed)?;
            let report = run_check(&doc.observer, &doc.simulator, &spec)?;
            let text = match output {
                Output::Text => report_text(&doc.name, &report),
                Output::Json => report_json(&doc.name, &report),
            };
            emit(&text, out_path.as_deref())?;
            Ok(match report.verdict {
                Verdict::Simulates => ExitCode::SUCCESS,
                Verdict::Fails => ExitCode::from(1),
            })
        }
        Command::Sample {
            scenario,
            count,
            seed,
            output,
            out_path,
        } => {
            let doc = load(&scenario)?;
            let seed = resolve_seed(seed, &doc)?;
            emit(&sample(&doc, count, seed, output)?, out_path.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ListBuiltins => {
            let mut text = String::new();
            for name in builtin_names() {
                let doc = builtin(name)?;
                text.push_str(&format!(
                    "{name:<18} sampler {:<8} tau patterns {}\n",
                    doc.simulator.sampler().to_string(),
                    doc.observer.tau().entries().len()
                ));
            }
            emit(&text, None)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Show {
            scenario,
            output,
            out_path,
        } => {
            let doc = load(&scenario)?;
            let text = match output {
                Output::Json => save_scenario(&doc) + "\n",
                Output::Text => describe(&doc),
            };
            emit(&text, out_path.as_deref())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sample(doc: &ScenarioDoc, count: u64, seed: u64, output: Output) -> anyhow::Result<String> {
    let prompts = doc.observer.prompt_distribution()?;
    doc.simulator.check_prompts(&prompts)?;
    let support: Vec<_> = prompts.iter().collect();
    let vocab = doc.simulator.vocab();
    let mut lines = Vec::new();
    let mut records = Vec::new();
    for trial in 0..count {
        let (prompt, out) = doc.simulator.run_trial(&support, seed, trial)?;
        let image = doc.observer.tau().apply(&out, vocab);
        match output {
            Output::Text => lines.push(format!(
                "seed {seed} trial {trial:<4} prompt {:<24} output {:<16} tau {image}",
                prompt.join(" "),
                out.to_string()
            )),
            Output::Json => records.push(format!(
                "{{\"seed\": {seed}, \"trial\": {trial}, \"prompt\": {}, \"output\": {}, \"tau\": {}}}",
                json_string_array(&prompt),
                json_string_array(out.tokens()),
                json_string(&image.key())
            )),
        }
    }
    Ok(match output {
        Output::Text => lines.join("\n") + "\n",
        Output::Json => format!("[\n  {}\n]\n", records.join(",\n  ")),
    })
}

fn json_string(s: &str) -> String {
    format!("{s:?}")
}

fn json_string_array(items: &[String]) -> String {
    let parts: Vec<String> = items.iter().map(|s| json_string(s)).collect();
    format!("[{}]", parts.join(", "))
}

fn describe(doc: &ScenarioDoc) -> String {
    let obs = &doc.observer;
    let model = obs.model();
    let sim = &doc.simulator;
    let mut out = format!("scenario {}\n\nreferent model\n", doc.name);
    for (name, range) in model.exogenous() {
        out += &format!("  exogenous  {name} ∈ {{{}}}\n", range.values().join(", "));
    }
    for (name, range) in model.endogenous() {
        out += &format!("  endogenous {name} ∈ {{{}}}\n", range.values().join(", "));
    }
    for eq in model.equations() {
        for (inputs, value) in &eq.table {
            out += &format!("  {}({}) = {value}\n", eq.target, inputs.join(", "));
        }
    }
    out += "\ncontexts\n";
    for (ctx, p) in obs.context_dist().iter() {
        out += &format!("  {:<24} {p}\n", ctx.key());
    }
    out += "\nprompts\n";
    for ((ctx, iv), prompts) in obs.encoding_dist() {
        for (prompt, p) in prompts.iter() {
            out += &format!("  {:<12} {:<6} {:<24} {p}\n", ctx.key(), iv.key(), prompt.join(" "));
        }
    }
    out += "\ntau\n";
    for e in obs.tau().entries() {
        out += &format!(
            "  {:<24} -> {}\n",
            e.pattern.join(" "),
            model.describe_setting(&e.state)
        );
    }
    out += &format!(
        "\nsimulator: sampler {}, output length {}, context size {}\n",
        sim.sampler(),
        sim.max_output_len(),
        sim.context_size()
    );
    for (prefix, row) in sim.table().rows() {
        let cells: Vec<String> = row.iter().map(|(t, p)| format!("{t}: {p}")).collect();
        out += &format!("  {:<24} {}\n", prefix.join(" "), cells.join(", "));
    }
    out
}
