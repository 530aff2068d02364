//! Language models viewed as probabilistic causal models.
//!
//! Prompt tokens and per-step uniform random numbers are the exogenous
//! variables; output tokens are endogenous, each produced by a sampler from
//! the conditional row keyed by everything generated so far. Outputs have a
//! fixed length: once `STOP` is emitted the remaining positions are padding.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::prob::{accumulate, Distribution, MassKind, TOLERANCE};
use crate::rng::trial_rng;

pub type Token = String;
pub type TokenSeq = Vec<Token>;
pub type Prompt = TokenSeq;

/// Default cap on the number of search-tree nodes exact enumeration may visit.
pub const DEFAULT_NODE_BUDGET: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    stop: Token,
    pad: Token,
    index: HashMap<Token, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I, stop: &str, pad: &str) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<Token> = tokens.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            crate::scm::check_symbol(t).map_err(|_| Error::InvalidVocabulary(format!("invalid token {t:?}")))?;
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        if stop == pad {
            return Err(Error::InvalidVocabulary("stop and pad must differ".into()));
        }
        for special in [stop, pad] {
            if !index.contains_key(special) {
                return Err(Error::InvalidVocabulary(format!(
                    "{special:?} is not in the vocabulary"
                )));
            }
        }
        Ok(Self {
            tokens,
            stop: stop.to_string(),
            pad: pad.to_string(),
            index,
        })
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn stop(&self) -> &str {
        &self.stop
    }

    pub fn pad(&self) -> &str {
        &self.pad
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    fn check_seq(&self, seq: &[Token]) -> Result<()> {
        match seq.iter().find(|t| !self.contains(t)) {
            Some(t) => Err(Error::UnknownToken(t.clone())),
            None => Ok(()),
        }
    }
}

/// Next-token distributions keyed by the full preceding sequence. The table
/// may be partial; looking up an absent row is an error.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable {
    rows: BTreeMap<TokenSeq, Distribution<Token>>,
}

impl ConditionalTable {
    pub fn new<I>(vocab: &Vocabulary, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (TokenSeq, Distribution<Token>)>,
    {
        let mut out = BTreeMap::new();
        for (prefix, row) in rows {
            vocab.check_seq(&prefix)?;
            if !row.is_normalized() {
                return Err(Error::NotNormalized { total: row.total() });
            }
            for token in row.support() {
                if !vocab.contains(token) {
                    return Err(Error::UnknownToken(token.clone()));
                }
                if token == vocab.pad() {
                    return Err(Error::InvalidVocabulary(format!("pad token in the row for {prefix:?}")));
                }
            }
            if out.insert(prefix.clone(), row).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate row for {prefix:?}")));
            }
        }
        Ok(Self { rows: out })
    }

    pub fn row(&self, prefix: &[Token]) -> Result<&Distribution<Token>> {
        self.rows.get(prefix).ok_or_else(|| Error::MissingRow(prefix.to_vec()))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&TokenSeq, &Distribution<Token>)> + '_ {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-step decoding rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampler {
    Greedy,
    TopK(usize),
    TopP(f64),
}

impl Sampler {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Sampler::TopK(0) => Err(Error::InvalidParameter("top-k needs k >= 1".into())),
            Sampler::TopP(p) if !(p > 0.0 && p <= 1.0) => {
                Err(Error::InvalidParameter(format!("top-p needs p in (0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }

    /// Kept tokens in sampling order with renormalized probabilities.
    fn kept<'a>(&self, row: &'a Distribution<Token>, vocab: &Vocabulary) -> Result<Vec<(&'a Token, f64)>> {
        let ranked = ranked(row, vocab)?;
        let keep = match *self {
            Sampler::Greedy => 1,
            Sampler::TopK(k) => k.max(1).min(ranked.len()),
            Sampler::TopP(p) => {
                let mut cum = 0.0;
                ranked
                    .iter()
                    .position(|(_, q)| {
                        cum += q;
                        cum >= p - TOLERANCE
                    })
                    .map_or(ranked.len(), |i| i + 1)
            }
        };
        let kept = &ranked[..keep];
        let mass: f64 = kept.iter().map(|(_, p)| p).sum();
        Ok(kept.iter().map(|(t, p)| (*t, p / mass)).collect())
    }
}

impl fmt::Display for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampler::Greedy => write!(f, "greedy"),
            Sampler::TopK(k) => write!(f, "top-{k}"),
            Sampler::TopP(p) => write!(f, "top-p({p})"),
        }
    }
}

/// Row entries sorted by descending probability, ties broken by vocabulary
/// order. Zero-mass tokens are never present.
fn ranked<'a>(row: &'a Distribution<Token>, vocab: &Vocabulary) -> Result<Vec<(&'a Token, f64)>> {
    if row.is_empty() {
        return Err(Error::EmptyRow);
    }
    let mut entries = row
        .iter()
        .map(|(t, p)| {
            let pos = vocab.position(t).ok_or_else(|| Error::UnknownToken(t.clone()))?;
            Ok((pos, t, p))
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    Ok(entries.into_iter().map(|(_, t, p)| (t, p)).collect())
}

/// The sampler's effective next-token law once the uniform random number is
/// marginalized out.
pub fn induced_step_distribution(
    row: &Distribution<Token>,
    sampler: Sampler,
    vocab: &Vocabulary,
) -> Result<Distribution<Token>> {
    let kept = sampler.kept(row, vocab)?;
    Ok(Distribution::from_unchecked(
        kept.into_iter().map(|(t, p)| (t.clone(), p)).collect(),
        MassKind::Normalized,
    ))
}

/// Inverse-CDF draw over the induced law, cumulating from the most probable
/// token. The first token is chosen iff `r` is at most its probability.
pub fn sample_step<'a>(
    row: &'a Distribution<Token>,
    sampler: Sampler,
    vocab: &Vocabulary,
    r: f64,
) -> Result<&'a Token> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::RandomOutOfRange(r));
    }
    let kept = sampler.kept(row, vocab)?;
    let mut cum = 0.0;
    for (token, p) in &kept {
        cum += p;
        if r <= cum {
            return Ok(token);
        }
    }
    Ok(kept.last().expect("non-empty").0)
}

/// A generated output of exactly `max_output_len` tokens.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PaddedOutput(pub TokenSeq);

impl PaddedOutput {
    pub fn tokens(&self) -> &[Token] {
        &self.0
    }

    /// The output with trailing padding and a final `STOP` removed.
    pub fn depadded(&self, vocab: &Vocabulary) -> &[Token] {
        let mut end = self.0.len();
        while end > 0 && self.0[end - 1] == vocab.pad() {
            end -= 1;
        }
        if end > 0 && self.0[end - 1] == vocab.stop() {
            end -= 1;
        }
        &self.0[..end]
    }

    /// Every position after the first `STOP` or pad is a pad.
    pub fn is_well_padded(&self, vocab: &Vocabulary) -> bool {
        match self.0.iter().position(|t| t == vocab.stop() || t == vocab.pad()) {
            Some(i) => self.0[i + 1..].iter().all(|t| t == vocab.pad()),
            None => true,
        }
    }

    pub fn key(&self) -> String {
        self.0.join(" ")
    }
}

impl fmt::Display for PaddedOutput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.0.join(" "))
    }
}

/// A conditional table paired with a sampler and length bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenSimulator {
    vocab: Vocabulary,
    table: ConditionalTable,
    sampler: Sampler,
    max_output_len: usize,
    context_size: usize,
    node_budget: u64,
}

impl TokenSimulator {
    pub fn new(
        vocab: Vocabulary,
        table: ConditionalTable,
        sampler: Sampler,
        max_output_len: usize,
        context_size: usize,
    ) -> Result<Self> {
        sampler.validate()?;
        if max_output_len == 0 || context_size == 0 {
            return Err(Error::InvalidParameter(
                "output length and context size must be positive".into(),
            ));
        }
        if max_output_len > context_size {
            return Err(Error::InvalidParameter(format!(
                "output length {max_output_len} exceeds context size {context_size}"
            )));
        }
        Ok(Self {
            vocab,
            table,
            sampler,
            max_output_len,
            context_size,
            node_budget: DEFAULT_NODE_BUDGET,
        })
    }

    pub fn with_node_budget(mut self, budget: u64) -> Self {
        self.node_budget = budget;
        self
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Result<Self> {
        sampler.validate()?;
        self.sampler = sampler;
        Ok(self)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn table(&self) -> &ConditionalTable {
        &self.table
    }

    pub fn sampler(&self) -> Sampler {
        self.sampler
    }

    pub fn max_output_len(&self) -> usize {
        self.max_output_len
    }

    pub fn context_size(&self) -> usize {
        self.context_size
    }

    pub fn node_budget(&self) -> u64 {
        self.node_budget
    }

    /// Checks that `prompt` uses known tokens and fits with the output in
    /// the context window.
    pub fn check_prompt(&self, prompt: &[Token]) -> Result<()> {
        self.vocab.check_seq(prompt)?;
        if prompt.len() + self.max_output_len > self.context_size {
            return Err(Error::PromptTooLong {
                prompt_len: prompt.len(),
                output_len: self.max_output_len,
                context_size: self.context_size,
            });
        }
        Ok(())
    }

    pub fn check_prompts(&self, prompts: &Distribution<Prompt>) -> Result<()> {
        if prompts.is_empty() {
            return Err(Error::SimulatorOff);
        }
        prompts.support().try_for_each(|p| self.check_prompt(p))
    }

    /// Runs the structural equations for one prompt and one vector of
    /// per-step random numbers.
    pub fn generate(&self, prompt: &[Token], randoms: &[f64]) -> Result<PaddedOutput> {
        self.check_prompt(prompt)?;
        if randoms.len() != self.max_output_len {
            return Err(Error::RandomCount {
                expected: self.max_output_len,
                got: randoms.len(),
            });
        }
        self.generate_checked(prompt, randoms)
    }

    fn generate_checked(&self, prompt: &[Token], randoms: &[f64]) -> Result<PaddedOutput> {
        let mut seq = prompt.to_vec();
        let mut stopped = false;
        for &r in randoms {
            if stopped {
                seq.push(self.vocab.pad.clone());
                continue;
            }
            let row = self.table.row(&seq)?;
            let token = sample_step(row, self.sampler, &self.vocab, r)?.clone();
            stopped = token == self.vocab.stop;
            seq.push(token);
        }
        Ok(PaddedOutput(seq.split_off(prompt.len())))
    }

    /// Exact output law by depth-first enumeration of the sampler's induced
    /// step distributions.
    pub fn exact_output_distribution(&self, prompts: &Distribution<Prompt>) -> Result<Distribution<PaddedOutput>> {
        self.check_prompts(prompts)?;
        let mut out: BTreeMap<PaddedOutput, f64> = BTreeMap::new();
        let mut nodes = 0u64;
        // (full sequence so far, prompt length, mass)
        let mut stack: Vec<(TokenSeq, usize, f64)> =
            prompts.iter().map(|(p, mass)| (p.clone(), p.len(), mass)).collect();
        stack.reverse();
        while let Some((seq, n, mass)) = stack.pop() {
            nodes += 1;
            if nodes > self.node_budget {
                return Err(Error::NodeBudgetExceeded(self.node_budget));
            }
            let generated = seq.len() - n;
            let stopped = seq[n..].last().is_some_and(|t| *t == self.vocab.stop);
            if generated == self.max_output_len || stopped {
                let mut tokens = seq[n..].to_vec();
                tokens.resize(self.max_output_len, self.vocab.pad.clone());
                *out.entry(PaddedOutput(tokens)).or_insert(0.0) += mass;
                continue;
            }
            let step = induced_step_distribution(self.table.row(&seq)?, self.sampler, &self.vocab)?;
            let children: Vec<_> = step.into_iter().collect();
            for (token, p) in children.into_iter().rev() {
                let mut next = seq.clone();
                next.push(token);
                stack.push((next, n, mass * p));
            }
        }
        Ok(Distribution::from_unchecked(out, prompts.kind()))
    }

    /// One Monte Carlo trial: draws a prompt and then one uniform number
    /// per output position from the trial's own stream. The prompts are
    /// assumed to have passed [`check_prompts`](Self::check_prompts).
    pub fn run_trial(&self, prompts: &[(&Prompt, f64)], seed: u64, trial: u64) -> Result<(Prompt, PaddedOutput)> {
        let mut rng = trial_rng(seed, trial);
        let u: f64 = rng.random();
        let total: f64 = prompts.iter().map(|(_, p)| p).sum();
        let mut cum = 0.0;
        let mut chosen = prompts.last().expect("non-empty prompt support").0;
        for (prompt, p) in prompts {
            cum += p / total;
            if u < cum {
                chosen = prompt;
                break;
            }
        }
        let randoms: Vec<f64> = (0..self.max_output_len).map(|_| rng.random()).collect();
        let output = self.generate_checked(chosen, &randoms)?;
        Ok((chosen.clone(), output))
    }

    /// Raw outcome counts from `samples` seeded trials.
    pub fn mc_output_counts(
        &self,
        prompts: &Distribution<Prompt>,
        samples: u64,
        seed: u64,
    ) -> Result<BTreeMap<PaddedOutput, u64>> {
        if samples == 0 {
            return Err(Error::InvalidParameter("samples must be at least 1".into()));
        }
        self.check_prompts(prompts)?;
        let support: Vec<(&Prompt, f64)> = prompts.iter().collect();
        let trial = |t: u64| self.run_trial(&support, seed, t).map(|(_, out)| out);
        count_trials(samples, trial)
    }

    /// Empirical output law from `samples` seeded trials.
    pub fn mc_output_distribution(
        &self,
        prompts: &Distribution<Prompt>,
        samples: u64,
        seed: u64,
    ) -> Result<Distribution<PaddedOutput>> {
        let counts = self.mc_output_counts(prompts, samples, seed)?;
        Ok(empirical(counts, samples))
    }
}

pub(crate) fn empirical<T: Ord + Clone + fmt::Debug>(counts: BTreeMap<T, u64>, samples: u64) -> Distribution<T> {
    let n = samples as f64;
    Distribution::from_unchecked(
        accumulate(counts.into_iter().map(|(k, c)| (k, c as f64 / n))),
        MassKind::Normalized,
    )
}

#[cfg(feature = "parallel")]
fn count_trials<F>(samples: u64, trial: F) -> Result<BTreeMap<PaddedOutput, u64>>
where
    F: Fn(u64) -> Result<PaddedOutput> + Sync,
{
    use rayon::prelude::*;
    (0..samples)
        .into_par_iter()
        .try_fold(BTreeMap::new, |mut acc, t| {
            *acc.entry(trial(t)?).or_insert(0) += 1;
            Ok(acc)
        })
        .try_reduce(BTreeMap::new, |mut a, b| {
            for (k, c) in b {
                *a.entry(k).or_insert(0) += c;
            }
            Ok(a)
        })
}

#[cfg(not(feature = "parallel"))]
fn count_trials<F>(samples: u64, trial: F) -> Result<BTreeMap<PaddedOutput, u64>>
where
    F: Fn(u64) -> Result<PaddedOutput>,
{
    let mut acc = BTreeMap::new();
    for t in 0..samples {
        *acc.entry(trial(t)?).or_insert(0) += 1;
    }
    Ok(acc)
}
