//! The coin-toss scenarios: one observer of a fair coin paired with token
//! simulators that fail through greedy decoding, through a biased
//! conditional table, or through output the observer does not recognise,
//! and one that succeeds.

use std::collections::BTreeMap;

use super::{CheckDefaults, ScenarioDoc, ScenarioError};
use crate::observer::{Observer, TauEntry, TauMap};
use crate::prob::Distribution;
use crate::scm::{Assignment, CausalModel, FiniteRange, Intervention, StructuralEquation};
use crate::token::{ConditionalTable, Sampler, TokenSimulator, Vocabulary};
use crate::verify::Turn;

/// The three prompts the observer uses, each with probability 1/3.
pub const COIN_PROMPTS: [&str; 3] = ["flip a coin", "toss a coin", "simulate a coin"];

const VOCAB: [&str; 11] = [
    "flip", "toss", "simulate", "a", "coin", "Heads", "Tails", "H", "T", "STOP", "ε",
];
const CONTEXT_SIZE: usize = 8;

/// Which output tokens the observer reads as heads and tails.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoinTau {
    /// `Heads → H`, `Tails → T`.
    Words,
    /// Words plus the letters `H → H`, `T → T`.
    WordsAndLetters,
}

fn words(s: &str) -> Vec<String> {
    s.split(' ').map(str::to_string).collect()
}

/// A coin whose landing side `X` is fully determined by the launch state `S`.
pub fn coin_model() -> CausalModel {
    let table = [("H-causing", "H"), ("T-causing", "T")]
        .into_iter()
        .map(|(s, x)| (vec![s.to_string()], x.to_string()))
        .collect();
    CausalModel::new(
        vec![(
            "S".into(),
            FiniteRange::new(["H-causing", "T-causing"]).expect("static range"),
        )],
        vec![("X".into(), FiniteRange::new(["H", "T"]).expect("static range"))],
        vec![StructuralEquation::new("X", vec!["S".into()], table)],
        vec![
            Intervention::set([("S", "H-causing")]),
            Intervention::set([("S", "T-causing")]),
        ],
    )
    .expect("coin model is well formed")
}

/// Uniform launch states, no interventions, and each of the three prompts
/// with probability 1/3 regardless of the launch state.
pub fn coin_observer(tau: CoinTau) -> Observer {
    let model = coin_model();
    let contexts = Distribution::uniform(model.contexts());
    let prompts = Distribution::uniform(COIN_PROMPTS.iter().map(|p| words(p)));
    let encoding: BTreeMap<_, _> = model.contexts().into_iter().map(|c| (c, prompts.clone())).collect();
    let mut pairs = vec![("Heads", "H"), ("Tails", "T")];
    if tau == CoinTau::WordsAndLetters {
        pairs.extend([("H", "H"), ("T", "T")]);
    }
    let entries = pairs
        .into_iter()
        .map(|(token, side)| TauEntry {
            pattern: vec![token.to_string()],
            state: Assignment::new([side]),
        })
        .collect();
    Observer::non_intervening(
        model,
        contexts,
        encoding,
        TauMap::new(entries).expect("distinct patterns"),
    )
    .expect("coin observer is well formed")
}

/// A single-token simulator whose row for every coin prompt is `row`.
pub fn coin_simulator(row: &[(&str, f64)], sampler: Sampler) -> crate::Result<TokenSimulator> {
    let vocab = Vocabulary::new(VOCAB, "STOP", "ε")?;
    let dist = Distribution::from_pairs(row.iter().map(|(t, p)| (t.to_string(), *p)))?;
    let rows = COIN_PROMPTS.iter().map(|p| (words(p), dist.clone()));
    let table = ConditionalTable::new(&vocab, rows)?;
    TokenSimulator::new(vocab, table, sampler, 1, CONTEXT_SIZE)
}

/// A two-turn coin dialogue. Turn one asks with the three coin prompts;
/// turn two says "again" after the transcript `flip a coin Heads`. The
/// simulator answers turn one from `first` and turn two from `second`.
pub fn coin_dialogue(
    first: &[(&str, f64)],
    second: &[(&str, f64)],
    sampler: Sampler,
) -> crate::Result<(Vec<Turn>, TokenSimulator)> {
    let vocab = Vocabulary::new(VOCAB.iter().copied().chain(["again"]), "STOP", "ε")?;
    let row = |r: &[(&str, f64)]| Distribution::from_pairs(r.iter().map(|(t, p)| (t.to_string(), *p)));
    let first = row(first)?;
    let transcript = words("flip a coin Heads");
    let mut rows: Vec<_> = COIN_PROMPTS.iter().map(|p| (words(p), first.clone())).collect();
    rows.push(([transcript.clone(), words("again")].concat(), row(second)?));
    let table = ConditionalTable::new(&vocab, rows)?;
    let sim = TokenSimulator::new(vocab, table, sampler, 1, CONTEXT_SIZE)?;

    let opening = coin_observer(CoinTau::Words);
    let model = opening.model().clone();
    let again = Distribution::point(words("again"));
    let encoding = model.contexts().into_iter().map(|c| (c, again.clone())).collect();
    let follow_up = Observer::non_intervening(model, opening.context_dist().clone(), encoding, opening.tau().clone())?;
    let turns = vec![
        Turn {
            observer: opening,
            transcript_prefix: Vec::new(),
        },
        Turn {
            observer: follow_up,
            transcript_prefix: transcript,
        },
    ];
    Ok((turns, sim))
}

const BUILTINS: [&str; 7] = [
    "example1-greedy",
    "example1-top2",
    "example2-biased",
    "example2-fair",
    "example3-mismatch",
    "example3-tauprime",
    "example4",
];

pub fn builtin_names() -> &'static [&'static str] {
    &BUILTINS
}

/// One of the built-in coin scenarios by name.
pub fn builtin(name: &str) -> Result<ScenarioDoc, ScenarioError> {
    let slight_bias: &[(&str, f64)] = &[("Heads", 0.51), ("Tails", 0.49)];
    let strong_bias: &[(&str, f64)] = &[("Heads", 0.9), ("Tails", 0.1)];
    let fair_words: &[(&str, f64)] = &[("Heads", 0.5), ("Tails", 0.5)];
    let fair_letters: &[(&str, f64)] = &[("H", 0.5), ("T", 0.5)];
    let top2 = Sampler::TopK(2);

    let (row, sampler, tau) = match name {
        "example1-greedy" => (slight_bias, Sampler::Greedy, CoinTau::Words),
        "example1-top2" => (slight_bias, top2, CoinTau::Words),
        "example2-biased" => (strong_bias, top2, CoinTau::Words),
        "example2-fair" => (fair_words, top2, CoinTau::Words),
        "example3-mismatch" => (fair_letters, top2, CoinTau::Words),
        "example3-tauprime" => (fair_letters, top2, CoinTau::WordsAndLetters),
        "example4" => (fair_words, top2, CoinTau::Words),
        _ => {
            return Err(ScenarioError::UnknownBuiltin { name: name.to_string() });
        }
    };
    Ok(ScenarioDoc {
        name: name.to_string(),
        referent: None,
        observer: coin_observer(tau),
        simulator: coin_simulator(row, sampler).expect("built-in tables are valid"),
        check: CheckDefaults::default(),
    })
}
