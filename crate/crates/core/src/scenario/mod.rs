//! Declarative scenario documents: a referent-model observer, a token
//! simulator and default check parameters, stored as a single JSON object.
//!
//! Loading validates every model invariant before anything is computed and
//! reports failures with a path into the document. Saving writes
//! probabilities with 17 significant digits so `load(save(doc)) == doc`.

mod builtins;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::json::{Prob, StrictMap};
use crate::observer::{Observer, TauEntry, TauMap};
use crate::prob::Distribution;
use crate::scm::{Assignment, CausalModel, FiniteRange, Intervention, StructuralEquation};
use crate::token::{ConditionalTable, Sampler, TokenSimulator, Vocabulary, DEFAULT_NODE_BUDGET};
use crate::verify::{DistanceKind, Mode};

pub use builtins::{
    builtin, builtin_names, coin_dialogue, coin_model, coin_observer, coin_simulator, CoinTau, COIN_PROMPTS,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at {path} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario at {path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: Error,
    },

    #[error("unknown built-in scenario {name:?}; available: {}", builtin_names().join(", "))]
    UnknownBuiltin { name: String },
}

impl ScenarioError {
    fn at(path: impl Into<String>) -> impl FnOnce(Error) -> ScenarioError {
        let path = path.into();
        move |source| ScenarioError::Invalid { path, source }
    }
}

type Result<T> = std::result::Result<T, ScenarioError>;

/// Check parameters a scenario may carry; command-line flags override them.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CheckDefaults {
    pub epsilon: Option<f64>,
    pub distance: Option<DistanceKind>,
    pub mode: Option<Mode>,
    pub samples: Option<u64>,
    pub runs: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDoc {
    pub name: String,
    /// Descriptive model of the referent itself. Never used by checks.
    pub referent: Option<CausalModel>,
    pub observer: Observer,
    pub simulator: TokenSimulator,
    pub check: CheckDefaults,
}

// ---------------------------------------------------------------------------
// Wire format

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct DocDto {
    format_version: u32,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    referent: Option<ModelDto>,
    observer: ObserverDto,
    simulator: SimulatorDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    check: Option<CheckDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VarDto {
    name: String,
    range: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ModelDto {
    exogenous: Vec<VarDto>,
    endogenous: Vec<VarDto>,
    equations: Vec<EquationDto>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    allowed_interventions: Vec<StrictMap<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EquationDto {
    target: String,
    inputs: Vec<String>,
    table: Vec<TableRowDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableRowDto {
    #[serde(rename = "in")]
    inputs: Vec<String>,
    out: String,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ObserverDto {
    model: ModelDto,
    context_dist: StrictMap<Prob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intervention_dist: Option<StrictMap<StrictMap<Prob>>>,
    encoding_dist: StrictMap<StrictMap<Vec<PromptMassDto>>>,
    tau: Vec<TauDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptMassDto {
    prompt: Vec<String>,
    p: Prob,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TauDto {
    pattern: Vec<String>,
    state: StrictMap<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SimulatorDto {
    vocab: Vec<String>,
    stop: String,
    pad: String,
    max_output_len: usize,
    context_size: usize,
    sampler: SamplerDto,
    table: Vec<RowDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    node_budget: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerDto {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Prob>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDto {
    prefix: Vec<String>,
    dist: StrictMap<Prob>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CheckDto {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Loading

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<ScenarioDoc> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let dto: DocDto = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        ScenarioError::Parse {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    from_dto(dto)
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        path: path.into(),
        source: Error::InvalidModel(message.into()),
    }
}

fn from_dto(dto: DocDto) -> Result<ScenarioDoc> {
    if dto.format_version != FORMAT_VERSION {
        return Err(invalid(
            "formatVersion",
            format!("unsupported format version {}", dto.format_version),
        ));
    }
    let referent = dto.referent.map(|m| build_model(m, "referent")).transpose()?;
    let simulator = build_simulator(dto.simulator)?;
    let observer = build_observer(dto.observer)?;
    let check = dto.check.map(build_check).transpose()?.unwrap_or_default();
    Ok(ScenarioDoc {
        name: dto.name,
        referent,
        observer,
        simulator,
        check,
    })
}

fn build_vars(vars: Vec<VarDto>, path: &str) -> Result<Vec<(String, FiniteRange)>> {
    vars.into_iter()
        .enumerate()
        .map(|(i, v)| {
            let range = FiniteRange::new(v.range).map_err(ScenarioError::at(format!("{path}[{i}].range")))?;
            Ok((v.name, range))
        })
        .collect()
}

fn build_intervention(map: &StrictMap<String>) -> Intervention {
    Intervention::set(map.iter().map(|(k, v)| (k.to_string(), v.clone())))
}

fn build_model(dto: ModelDto, path: &str) -> Result<CausalModel> {
    let exogenous = build_vars(dto.exogenous, &format!("{path}.exogenous"))?;
    let endogenous = build_vars(dto.endogenous, &format!("{path}.endogenous"))?;
    let mut equations = Vec::with_capacity(dto.equations.len());
    for (i, eq) in dto.equations.into_iter().enumerate() {
        let mut table = BTreeMap::new();
        for (j, row) in eq.table.into_iter().enumerate() {
            if table.insert(row.inputs, row.out).is_some() {
                return Err(invalid(
                    format!("{path}.equations[{i}].table[{j}]"),
                    "duplicate input tuple",
                ));
            }
        }
        equations.push(StructuralEquation::new(eq.target, eq.inputs, table));
    }
    let allowed = dto.allowed_interventions.iter().map(build_intervention).collect();
    CausalModel::new(exogenous, endogenous, equations, allowed).map_err(ScenarioError::at(path))
}

fn build_dist<T, F>(entries: &StrictMap<Prob>, path: &str, mut parse: F) -> Result<Distribution<T>>
where
    T: Ord + Clone + std::fmt::Debug,
    F: FnMut(&str) -> std::result::Result<T, Error>,
{
    let mut mass = BTreeMap::new();
    for (key, p) in entries.iter() {
        let outcome = parse(key).map_err(ScenarioError::at(format!("{path}.{key}")))?;
        if mass.insert(outcome, p.0).is_some() {
            return Err(invalid(format!("{path}.{key}"), "duplicate outcome"));
        }
    }
    Distribution::new(mass).map_err(ScenarioError::at(path))
}

fn build_observer(dto: ObserverDto) -> Result<Observer> {
    let model = build_model(dto.model, "observer.model")?;
    let parse_context = |key: &str| {
        let ctx = Assignment::parse_key(key);
        model.check_context(&ctx).map(|_| ctx)
    };
    let context_dist = build_dist(&dto.context_dist, "observer.contextDist", parse_context)?;

    let intervention_dist: BTreeMap<_, _> = match &dto.intervention_dist {
        Some(rows) => {
            let mut out = BTreeMap::new();
            for (ctx_key, row) in rows.iter() {
                let path = format!("observer.interventionDist.{ctx_key}");
                let ctx = parse_context(ctx_key).map_err(ScenarioError::at(&path))?;
                let dist = build_dist(row, &path, Intervention::parse_key)?;
                out.insert(ctx, dist);
            }
            out
        }
        None => context_dist
            .support()
            .map(|c| (c.clone(), Distribution::point(Intervention::Null)))
            .collect(),
    };

    let mut encoding_dist = BTreeMap::new();
    for (ctx_key, by_iv) in dto.encoding_dist.iter() {
        let ctx = parse_context(ctx_key).map_err(ScenarioError::at(format!("observer.encodingDist.{ctx_key}")))?;
        for (iv_key, prompts) in by_iv.iter() {
            let path = format!("observer.encodingDist.{ctx_key}.{iv_key}");
            let iv = Intervention::parse_key(iv_key).map_err(ScenarioError::at(&path))?;
            let mut mass = BTreeMap::new();
            for (i, pm) in prompts.iter().enumerate() {
                if mass.insert(pm.prompt.clone(), pm.p.0).is_some() {
                    return Err(invalid(format!("{path}[{i}]"), "duplicate prompt"));
                }
            }
            let dist = Distribution::new(mass).map_err(ScenarioError::at(&path))?;
            encoding_dist.insert((ctx.clone(), iv), dist);
        }
    }

    let mut entries = Vec::with_capacity(dto.tau.len());
    for (i, t) in dto.tau.iter().enumerate() {
        let path = format!("observer.tau[{i}].state");
        let state = model
            .setting(t.state.iter().map(|(k, v)| (k, v.as_str())))
            .map_err(ScenarioError::at(&path))?;
        entries.push(TauEntry {
            pattern: t.pattern.clone(),
            state,
        });
    }
    let tau = TauMap::new(entries).map_err(ScenarioError::at("observer.tau"))?;

    Observer::new(model, context_dist, intervention_dist, encoding_dist, tau).map_err(ScenarioError::at("observer"))
}

fn build_simulator(dto: SimulatorDto) -> Result<TokenSimulator> {
    let vocab = Vocabulary::new(dto.vocab, &dto.stop, &dto.pad).map_err(ScenarioError::at("simulator.vocab"))?;
    let sampler = match (dto.sampler.kind.as_str(), dto.sampler.k, dto.sampler.p) {
        ("greedy", None, None) => Sampler::Greedy,
        ("topK", Some(k), None) => Sampler::TopK(k),
        ("topP", None, Some(p)) => Sampler::TopP(p.0),
        (kind, _, _) => {
            return Err(invalid(
                "simulator.sampler",
                format!("expected greedy, topK with k, or topP with p; got {kind:?}"),
            ))
        }
    };
    let mut rows = Vec::with_capacity(dto.table.len());
    for (i, row) in dto.table.iter().enumerate() {
        let path = format!("simulator.table[{i}].dist");
        let dist = build_dist(&row.dist, &path, |t| Ok(t.to_string())).map_err(|e| match e {
            ScenarioError::Invalid { path, source } => {
                invalid(path, format!("row {:?}: {source}", row.prefix.join(" ")))
            }
            other => other,
        })?;
        rows.push((row.prefix.clone(), dist));
    }
    let table = ConditionalTable::new(&vocab, rows).map_err(ScenarioError::at("simulator.table"))?;
    let sim = TokenSimulator::new(vocab, table, sampler, dto.max_output_len, dto.context_size)
        .map_err(ScenarioError::at("simulator"))?;
    Ok(sim.with_node_budget(dto.node_budget.unwrap_or(DEFAULT_NODE_BUDGET)))
}

fn build_check(dto: CheckDto) -> Result<CheckDefaults> {
    let distance = match dto.distance.as_deref() {
        None => None,
        Some("tvd") => Some(DistanceKind::TotalVariation),
        Some("kl") => Some(DistanceKind::KLDivergence),
        Some(other) => return Err(invalid("check.distance", format!("unknown distance {other:?}"))),
    };
    let mode = match dto.mode.as_deref() {
        None => None,
        Some("exact") => Some(Mode::Exact),
        Some("mc") => Some(Mode::MonteCarlo),
        Some(other) => return Err(invalid("check.mode", format!("unknown mode {other:?}"))),
    };
    if let Some(eps) = dto.epsilon {
        if eps.is_nan() || eps <= 0.0 {
            return Err(invalid("check.epsilon", "epsilon must be positive"));
        }
    }
    if dto.samples == Some(0) || dto.runs == Some(0) {
        return Err(invalid("check", "samples and runs must be at least 1"));
    }
    Ok(CheckDefaults {
        epsilon: dto.epsilon,
        distance,
        mode,
        samples: dto.samples,
        runs: dto.runs,
        seed: dto.seed,
    })
}

// ---------------------------------------------------------------------------
// Saving

/// Serializes a scenario as pretty-printed JSON.
pub fn save_scenario(doc: &ScenarioDoc) -> String {
    let check = &doc.check;
    let check = (*check != CheckDefaults::default()).then(|| CheckDto {
        epsilon: check.epsilon,
        distance: check.distance.map(|d| d.to_string()),
        mode: check.mode.map(|m| match m {
            Mode::Exact => "exact".to_string(),
            Mode::MonteCarlo => "mc".to_string(),
        }),
        samples: check.samples,
        runs: check.runs,
        seed: check.seed,
    });
    let dto = DocDto {
        format_version: FORMAT_VERSION,
        name: doc.name.clone(),
        referent: doc.referent.as_ref().map(model_dto),
        observer: observer_dto(&doc.observer),
        simulator: simulator_dto(&doc.simulator),
        check,
    };
    serde_json::to_string_pretty(&dto).expect("scenario serialization is infallible")
}

fn model_dto(model: &CausalModel) -> ModelDto {
    let vars = |vars: &[(String, FiniteRange)]| {
        vars.iter()
            .map(|(name, range)| VarDto {
                name: name.clone(),
                range: range.values().to_vec(),
            })
            .collect()
    };
    ModelDto {
        exogenous: vars(model.exogenous()),
        endogenous: vars(model.endogenous()),
        equations: model
            .equations()
            .iter()
            .map(|eq| EquationDto {
                target: eq.target.clone(),
                inputs: eq.inputs.clone(),
                table: eq
                    .table
                    .iter()
                    .map(|(i, o)| TableRowDto {
                        inputs: i.clone(),
                        out: o.clone(),
                    })
                    .collect(),
            })
            .collect(),
        allowed_interventions: model
            .allowed_interventions()
            .iter()
            .filter_map(|iv| match iv {
                Intervention::Null => None,
                Intervention::Set(map) => Some(map.iter().map(|(k, v)| (k.clone(), v.clone())).collect()),
            })
            .collect(),
    }
}

fn prob_map<T: Ord + Clone + std::fmt::Debug>(d: &Distribution<T>, key: impl Fn(&T) -> String) -> StrictMap<Prob> {
    d.iter().map(|(k, p)| (key(k), Prob(p))).collect()
}

fn observer_dto(obs: &Observer) -> ObserverDto {
    let mut encoding: BTreeMap<&Assignment, StrictMap<Vec<PromptMassDto>>> = BTreeMap::new();
    for ((ctx, iv), prompts) in obs.encoding_dist() {
        let rows = prompts
            .iter()
            .map(|(prompt, p)| PromptMassDto {
                prompt: prompt.clone(),
                p: Prob(p),
            })
            .collect();
        encoding.entry(ctx).or_default().0.push((iv.key(), rows));
    }
    ObserverDto {
        model: model_dto(obs.model()),
        context_dist: prob_map(obs.context_dist(), Assignment::key),
        intervention_dist: Some(
            obs.intervention_dist()
                .iter()
                .map(|(ctx, d)| (ctx.key(), prob_map(d, Intervention::key)))
                .collect(),
        ),
        encoding_dist: encoding.into_iter().map(|(ctx, v)| (ctx.key(), v)).collect(),
        tau: obs
            .tau()
            .entries()
            .iter()
            .map(|e| TauDto {
                pattern: e.pattern.clone(),
                state: obs
                    .model()
                    .endogenous()
                    .iter()
                    .zip(e.state.values())
                    .map(|((n, _), v)| (n.clone(), v.clone()))
                    .collect(),
            })
            .collect(),
    }
}

fn simulator_dto(sim: &TokenSimulator) -> SimulatorDto {
    let sampler = match sim.sampler() {
        Sampler::Greedy => SamplerDto {
            kind: "greedy".into(),
            k: None,
            p: None,
        },
        Sampler::TopK(k) => SamplerDto {
            kind: "topK".into(),
            k: Some(k),
            p: None,
        },
        Sampler::TopP(p) => SamplerDto {
            kind: "topP".into(),
            k: None,
            p: Some(Prob(p)),
        },
    };
    let vocab = sim.vocab();
    SimulatorDto {
        vocab: vocab.tokens().to_vec(),
        stop: vocab.stop().to_string(),
        pad: vocab.pad().to_string(),
        max_output_len: sim.max_output_len(),
        context_size: sim.context_size(),
        sampler,
        table: sim
            .table()
            .rows()
            .map(|(prefix, dist)| RowDto {
                prefix: prefix.clone(),
                dist: prob_map(dist, String::clone),
            })
            .collect(),
        node_budget: (sim.node_budget() != DEFAULT_NODE_BUDGET).then_some(sim.node_budget()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example4_text() -> String {
        save_scenario(&builtin("example4").unwrap())
    }

    fn mutate(f: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(&example4_text()).unwrap();
        f(&mut v);
        serde_json::to_string(&v).unwrap()
    }

    #[test]
    fn example4_round_trips() {
        let doc = builtin("example4").unwrap();
        let text = save_scenario(&doc);
        assert_eq!(load_scenario(&text).unwrap(), doc);
        assert_eq!(save_scenario(&load_scenario(&text).unwrap()), text);
    }

    #[test]
    fn bad_row_mass_names_the_row() {
        let text = mutate(|v| {
            v["simulator"]["table"][0]["dist"] = serde_json::json!({"Heads": 0.6, "Tails": 0.6});
        });
        let err = load_scenario(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("simulator.table[0].dist"), "{msg}");
        assert!(msg.contains("flip a coin"), "{msg}");
        assert!(msg.contains("not normalized"), "{msg}");
    }

    #[test]
    fn rationals_are_accepted() {
        let text = mutate(|v| {
            v["observer"]["contextDist"] = serde_json::json!({"H-causing": "1/2", "T-causing": "1/2"});
        });
        assert!(load_scenario(&text).is_ok());
    }

    #[test]
    fn duplicate_keys_are_located() {
        let text = example4_text().replacen("\"contextDist\": {", "\"contextDist\": {\"H-causing\": 0.5,", 1);
        assert_ne!(text, example4_text());
        match load_scenario(&text).unwrap_err() {
            ScenarioError::Parse { path, message, .. } => {
                assert!(message.contains("duplicate key"), "{message}");
                assert!(path.starts_with("observer"), "{path}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cycles_are_rejected() {
        let text = mutate(|v| {
            let model = &mut v["observer"]["model"];
            model["endogenous"] =
                serde_json::json!([{"name": "X", "range": ["H", "T"]}, {"name": "Y", "range": ["H", "T"]}]);
            let copy = serde_json::json!([{"in": ["H"], "out": "H"}, {"in": ["T"], "out": "T"}]);
            model["equations"] = serde_json::json!([
                {"target": "X", "inputs": ["Y"], "table": copy},
                {"target": "Y", "inputs": ["X"], "table": copy},
            ]);
        });
        let err = load_scenario(&text).unwrap_err();
        assert!(
            matches!(
                err,
                ScenarioError::Invalid {
                    source: Error::Cycle(_),
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn tau_target_must_be_a_setting() {
        let text = mutate(|v| {
            v["observer"]["tau"][0]["state"] = serde_json::json!({"X": "Edge"});
        });
        let err = load_scenario(&text).unwrap_err();
        assert!(err.to_string().contains("observer.tau[0].state"), "{err}");
    }

    #[test]
    fn unknown_fields_and_versions_are_rejected() {
        assert!(load_scenario(&mutate(|v| v["extra"] = serde_json::json!(1))).is_err());
        assert!(load_scenario(&mutate(|v| v["formatVersion"] = serde_json::json!(2))).is_err());
        assert!(load_scenario("not json").is_err());
        assert!(load_scenario(&mutate(
            |v| v["simulator"]["sampler"] = serde_json::json!({"kind": "beam"})
        ))
        .is_err());
    }

    #[test]
    fn check_defaults_round_trip() {
        let mut doc = builtin("example1-top2").unwrap();
        doc.check = CheckDefaults {
            epsilon: Some(0.02),
            distance: Some(DistanceKind::KLDivergence),
            mode: Some(Mode::MonteCarlo),
            samples: Some(100),
            runs: Some(3),
            seed: Some(42),
        };
        assert_eq!(load_scenario(&save_scenario(&doc)).unwrap(), doc);
    }
}
