//! The observer: a causal model of the referent, distributions over
//! contexts, interventions and prompt encodings, and a map from simulator
//! outputs back to referent states.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::prob::{accumulate, Distribution, TOLERANCE};
use crate::scm::{CausalModel, Context, EndogenousSetting, Intervention};
use crate::token::{PaddedOutput, Prompt, TokenSeq, TokenSimulator, Vocabulary};

/// A referent state, or `Unmapped` (⊥) for simulator output the observer
/// does not interpret.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    State(EndogenousSetting),
    Unmapped,
}

pub const UNMAPPED_KEY: &str = "⊥";

impl Outcome {
    pub fn key(&self) -> String {
        match self {
            Outcome::State(s) => s.key(),
            Outcome::Unmapped => UNMAPPED_KEY.to_string(),
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TauEntry {
    pub pattern: TokenSeq,
    pub state: EndogenousSetting,
}

/// Ordered pattern table from de-padded output sequences to referent
/// states. The first matching entry wins.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct TauMap {
    entries: Vec<TauEntry>,
}

impl TauMap {
    pub fn new(entries: Vec<TauEntry>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|prev| prev.pattern == e.pattern) {
                return Err(Error::InvalidObserver(format!("duplicate tau pattern {:?}", e.pattern)));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TauEntry] {
        &self.entries
    }

    pub fn image(&self, tokens: &[String]) -> Outcome {
        self.entries
            .iter()
            .find(|e| e.pattern == tokens)
            .map_or(Outcome::Unmapped, |e| Outcome::State(e.state.clone()))
    }

    pub fn apply(&self, output: &PaddedOutput, vocab: &Vocabulary) -> Outcome {
        self.image(output.depadded(vocab))
    }
}

/// Maps a simulator output distribution to referent states. Mass on
/// outputs that match no pattern lands on [`Outcome::Unmapped`].
pub fn tau_push(outputs: &Distribution<PaddedOutput>, tau: &TauMap, vocab: &Vocabulary) -> Distribution<Outcome> {
    outputs.map(|o| tau.apply(o, vocab))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observer {
    model: CausalModel,
    context_dist: Distribution<Context>,
    intervention_dist: BTreeMap<Context, Distribution<Intervention>>,
    encoding_dist: BTreeMap<(Context, Intervention), Distribution<Prompt>>,
    tau: TauMap,
}

impl Observer {
    pub fn new(
        model: CausalModel,
        context_dist: Distribution<Context>,
        intervention_dist: BTreeMap<Context, Distribution<Intervention>>,
        encoding_dist: BTreeMap<(Context, Intervention), Distribution<Prompt>>,
        tau: TauMap,
    ) -> Result<Self> {
        if !context_dist.is_normalized() {
            return Err(Error::InvalidObserver("context distribution is not normalized".into()));
        }
        for ctx in context_dist.support() {
            model.check_context(ctx)?;
        }
        for (ctx, ivs) in &intervention_dist {
            model.check_context(ctx)?;
            if !ivs.is_normalized() {
                return Err(Error::InvalidObserver(format!(
                    "intervention distribution for {ctx} is not normalized"
                )));
            }
            for iv in ivs.support() {
                if !iv.is_null() && !model.allowed_interventions().contains(iv) {
                    return Err(Error::InterventionNotAllowed(iv.key()));
                }
            }
        }
        for ((ctx, _), prompts) in &encoding_dist {
            model.check_context(ctx)?;
            if !prompts.is_normalized() {
                return Err(Error::InvalidObserver(format!(
                    "encoding distribution for {ctx} is not normalized"
                )));
            }
        }
        for e in tau.entries() {
            model.check_setting(&e.state)?;
        }
        let obs = Self {
            model,
            context_dist,
            intervention_dist,
            encoding_dist,
            tau,
        };
        for (ctx, _) in obs.context_dist.iter() {
            for (iv, _) in obs.interventions(ctx)?.iter() {
                obs.encoding(ctx, iv)?;
            }
        }
        Ok(obs)
    }

    /// Observer that never intervenes.
    pub fn non_intervening(
        model: CausalModel,
        context_dist: Distribution<Context>,
        encoding: BTreeMap<Context, Distribution<Prompt>>,
        tau: TauMap,
    ) -> Result<Self> {
        let intervention_dist = context_dist
            .support()
            .map(|c| (c.clone(), Distribution::point(Intervention::Null)))
            .collect();
        let encoding_dist = encoding
            .into_iter()
            .map(|(c, d)| ((c, Intervention::Null), d))
            .collect();
        Self::new(model, context_dist, intervention_dist, encoding_dist, tau)
    }

    pub fn model(&self) -> &CausalModel {
        &self.model
    }

    pub fn context_dist(&self) -> &Distribution<Context> {
        &self.context_dist
    }

    pub fn intervention_dist(&self) -> &BTreeMap<Context, Distribution<Intervention>> {
        &self.intervention_dist
    }

    pub fn encoding_dist(&self) -> &BTreeMap<(Context, Intervention), Distribution<Prompt>> {
        &self.encoding_dist
    }

    pub fn tau(&self) -> &TauMap {
        &self.tau
    }

    pub fn with_tau(mut self, tau: TauMap) -> Result<Self> {
        for e in tau.entries() {
            self.model.check_setting(&e.state)?;
        }
        self.tau = tau;
        Ok(self)
    }

    /// Prepends `prefix` to every encoded prompt. Used for later turns of a
    /// dialogue, whose prompts are whole transcripts.
    pub fn with_prompt_prefix(mut self, prefix: &[String]) -> Self {
        if prefix.is_empty() {
            return self;
        }
        for prompts in self.encoding_dist.values_mut() {
            *prompts = prompts.map(|p| prefix.iter().chain(p).cloned().collect());
        }
        self
    }

    fn interventions(&self, ctx: &Context) -> Result<&Distribution<Intervention>> {
        self.intervention_dist
            .get(ctx)
            .ok_or_else(|| Error::MissingConditional {
                what: "interventions",
                key: ctx.key(),
            })
    }

    fn encoding(&self, ctx: &Context, iv: &Intervention) -> Result<&Distribution<Prompt>> {
        self.encoding_dist
            .get(&(ctx.clone(), iv.clone()))
            .ok_or_else(|| Error::MissingConditional {
                what: "prompt encoding",
                key: format!("{ctx}, {iv}"),
            })
    }

    /// The referent-side distribution: contexts and interventions weighted
    /// and pushed through the post-interventional model.
    pub fn referent_outcome_distribution(&self) -> Result<Distribution<EndogenousSetting>> {
        let mut pairs = Vec::new();
        let mut models: BTreeMap<&Intervention, CausalModel> = BTreeMap::new();
        for (ctx, p_ctx) in self.context_dist.iter() {
            for (iv, p_iv) in self.interventions(ctx)?.iter() {
                if !models.contains_key(iv) {
                    models.insert(iv, self.model.apply_intervention(iv)?);
                }
                pairs.push((models[iv].evaluate(ctx)?, p_ctx * p_iv));
            }
        }
        Distribution::new(accumulate(pairs))
    }

    /// Marginal law of the prompts the observer presents to the simulator.
    pub fn prompt_distribution(&self) -> Result<Distribution<Prompt>> {
        let mut pairs = Vec::new();
        for (ctx, p_ctx) in self.context_dist.iter() {
            for (iv, p_iv) in self.interventions(ctx)?.iter() {
                for (prompt, p_prompt) in self.encoding(ctx, iv)?.iter() {
                    pairs.push((prompt.clone(), p_prompt * p_iv * p_ctx));
                }
            }
        }
        Distribution::new(accumulate(pairs))
    }
}

/// The simulator's exogenous law: observer-supplied prompts independent of
/// the per-step uniform random numbers.
#[derive(Clone, Copy, Debug)]
pub struct JointInput<'a> {
    pub prompts: &'a Distribution<Prompt>,
    pub simulator: &'a TokenSimulator,
}

impl JointInput<'_> {
    /// Joint density of a prompt and a vector of random numbers.
    pub fn density(&self, prompt: &Prompt, randoms: &[f64]) -> f64 {
        let in_cube =
            randoms.len() == self.simulator.max_output_len() && randoms.iter().all(|r| (0.0..=1.0).contains(r));
        if in_cube {
            self.prompts.prob(prompt)
        } else {
            0.0
        }
    }

    pub fn exact_outputs(&self) -> Result<Distribution<PaddedOutput>> {
        self.simulator.exact_output_distribution(self.prompts)
    }

    pub fn mc_outputs(&self, samples: u64, seed: u64) -> Result<Distribution<PaddedOutput>> {
        self.simulator.mc_output_distribution(self.prompts, samples, seed)
    }
}

/// Pairs a prompt distribution with a simulator after checking that every
/// prompt fits the context window and that the simulator receives input.
pub fn joint_input_distribution<'a>(
    prompts: &'a Distribution<Prompt>,
    simulator: &'a TokenSimulator,
) -> Result<JointInput<'a>> {
    if prompts.is_empty() || prompts.total() < TOLERANCE {
        return Err(Error::SimulatorOff);
    }
    simulator.check_prompts(prompts)?;
    Ok(JointInput { prompts, simulator })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::MassKind;
    use crate::scenario::builtin;
    use crate::scm::Assignment;

    fn words(s: &str) -> Prompt {
        s.split(' ').map(str::to_string).collect()
    }

    fn coin_observer() -> Observer {
        builtin("example4").unwrap().observer
    }

    fn heads() -> EndogenousSetting {
        Assignment::new(["H"])
    }

    fn tails() -> EndogenousSetting {
        Assignment::new(["T"])
    }

    #[test]
    fn coin_referent_is_fair() {
        let d = coin_observer().referent_outcome_distribution().unwrap();
        assert_eq!(d.prob(&heads()), 0.5);
        assert_eq!(d.prob(&tails()), 0.5);
    }

    #[test]
    fn forced_heads_intervention() {
        let obs = coin_observer();
        let iv = Intervention::set([("S", "H-causing")]);
        let ivs: BTreeMap<_, _> = obs
            .model()
            .contexts()
            .into_iter()
            .map(|c| (c, Distribution::point(iv.clone())))
            .collect();
        let enc: BTreeMap<_, _> = obs
            .model()
            .contexts()
            .into_iter()
            .map(|c| ((c, iv.clone()), Distribution::point(words("flip a coin"))))
            .collect();
        let forced = Observer::new(
            obs.model().clone(),
            obs.context_dist().clone(),
            ivs,
            enc,
            obs.tau().clone(),
        )
        .unwrap();
        assert_eq!(
            forced.referent_outcome_distribution().unwrap(),
            Distribution::point(heads())
        );
    }

    #[test]
    fn point_context_gives_point_outcome() {
        let obs = coin_observer();
        let tc = Assignment::new(["T-causing"]);
        let enc = [(tc.clone(), Distribution::point(words("toss a coin")))]
            .into_iter()
            .collect();
        let o =
            Observer::non_intervening(obs.model().clone(), Distribution::point(tc), enc, obs.tau().clone()).unwrap();
        assert_eq!(o.referent_outcome_distribution().unwrap(), Distribution::point(tails()));
    }

    #[test]
    fn coin_prompts_are_thirds() {
        let d = coin_observer().prompt_distribution().unwrap();
        for p in ["flip a coin", "toss a coin", "simulate a coin"] {
            assert!((d.prob(&words(p)) - 1.0 / 3.0).abs() < 1e-9);
        }
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn prompt_marginal_two_term_sum() {
        let obs = coin_observer();
        let hc = Assignment::new(["H-causing"]);
        let tc = Assignment::new(["T-causing"]);
        let ctx = Distribution::from_pairs([(hc.clone(), 0.8), (tc.clone(), 0.2)]).unwrap();
        let enc = [
            (hc, Distribution::point(words("flip a coin"))),
            (tc, Distribution::point(words("toss a coin"))),
        ]
        .into_iter()
        .collect();
        let o = Observer::non_intervening(obs.model().clone(), ctx, enc, obs.tau().clone()).unwrap();
        let d = o.prompt_distribution().unwrap();
        assert!((d.prob(&words("flip a coin")) - 0.8).abs() < 1e-12);
        assert!((d.prob(&words("toss a coin")) - 0.2).abs() < 1e-12);

        let constant = [
            (
                Assignment::new(["H-causing"]),
                Distribution::point(words("flip a coin")),
            ),
            (
                Assignment::new(["T-causing"]),
                Distribution::point(words("flip a coin")),
            ),
        ]
        .into_iter()
        .collect();
        let o = Observer::non_intervening(
            obs.model().clone(),
            obs.context_dist().clone(),
            constant,
            TauMap::default(),
        )
        .unwrap();
        assert_eq!(
            o.prompt_distribution().unwrap(),
            Distribution::point(words("flip a coin"))
        );
    }

    #[test]
    fn missing_encoding_row_is_rejected() {
        let obs = coin_observer();
        let enc = [(
            Assignment::new(["H-causing"]),
            Distribution::point(words("flip a coin")),
        )]
        .into_iter()
        .collect();
        let err = Observer::non_intervening(obs.model().clone(), obs.context_dist().clone(), enc, TauMap::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingConditional { .. }), "{err}");
    }

    #[test]
    fn disallowed_intervention_is_rejected() {
        let obs = coin_observer();
        let bad = Intervention::set([("X", "H")]);
        let ivs = obs
            .model()
            .contexts()
            .into_iter()
            .map(|c| (c, Distribution::point(bad.clone())))
            .collect();
        let err = Observer::new(
            obs.model().clone(),
            obs.context_dist().clone(),
            ivs,
            BTreeMap::new(),
            TauMap::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InterventionNotAllowed(_)));
    }

    #[test]
    fn joint_input_checks() {
        let doc = builtin("example4").unwrap();
        let prompts = doc.observer.prompt_distribution().unwrap();
        let joint = joint_input_distribution(&prompts, &doc.simulator).unwrap();
        assert!((joint.density(&words("flip a coin"), &[0.3]) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(joint.density(&words("flip a coin"), &[1.3]), 0.0);

        let c = doc.simulator.context_size();
        let long = Distribution::point(vec!["coin".to_string(); c]);
        assert!(matches!(
            joint_input_distribution(&long, &doc.simulator),
            Err(Error::PromptTooLong { .. })
        ));

        let off: Distribution<Prompt> = Distribution::sub(BTreeMap::new()).unwrap();
        assert_eq!(off.kind(), MassKind::Sub);
        assert!(matches!(
            joint_input_distribution(&off, &doc.simulator),
            Err(Error::SimulatorOff)
        ));
    }

    #[test]
    fn tau_examples() {
        let v = Vocabulary::new(["Heads", "Tails", "H", "T", "STOP", "ε"], "STOP", "ε").unwrap();
        let out = |a: &str, b: &str| {
            Distribution::from_pairs([(PaddedOutput(vec![a.into()]), 0.5), (PaddedOutput(vec![b.into()]), 0.5)])
                .unwrap()
        };
        let tau = builtin("example4").unwrap().observer.tau().clone();
        let tau_prime = builtin("example3-tauprime").unwrap().observer.tau().clone();

        let d = tau_push(&out("Heads", "Tails"), &tau, &v);
        assert_eq!(d.prob(&Outcome::State(heads())), 0.5);
        assert_eq!(d.prob(&Outcome::State(tails())), 0.5);

        assert_eq!(
            tau_push(&out("H", "T"), &tau, &v),
            Distribution::point(Outcome::Unmapped)
        );

        let d = tau_push(&out("H", "T"), &tau_prime, &v);
        assert_eq!(d.prob(&Outcome::State(heads())), 0.5);
        assert_eq!(d.prob(&Outcome::State(tails())), 0.5);
    }

    #[test]
    fn tau_depads_before_matching() {
        let v = Vocabulary::new(["Heads", "STOP", "ε"], "STOP", "ε").unwrap();
        let tau = TauMap::new(vec![TauEntry {
            pattern: vec!["Heads".into()],
            state: heads(),
        }])
        .unwrap();
        let o = PaddedOutput(vec!["Heads".into(), "STOP".into(), "ε".into()]);
        assert_eq!(tau.apply(&o, &v), Outcome::State(heads()));
        assert!(TauMap::new(vec![tau.entries()[0].clone(), tau.entries()[0].clone()]).is_err());
    }
}
