//! Finite probability distributions and probability literals.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Global comparison tolerance for probability mass.
pub const TOLERANCE: f64 = 1e-9;

/// Whether a distribution carries full unit mass or is an explicitly
/// flagged sub-distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassKind {
    Normalized,
    Sub,
}

/// A map from finitely many outcomes to probabilities.
///
/// Outcomes are kept in a `BTreeMap`, so iteration order is the outcome's
/// `Ord` order and two distributions over canonical outcomes can be compared
/// entry by entry. Zero-mass entries are dropped on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Distribution<T: Ord> {
    mass: BTreeMap<T, f64>,
    kind: MassKind,
}

impl<T: Ord + Clone + fmt::Debug> Distribution<T> {
    /// Builds a normalized distribution. Fails on negative or non-finite
    /// entries, and on total mass outside `1 ± TOLERANCE`.
    pub fn new(mass: BTreeMap<T, f64>) -> Result<Self> {
        let total = check_entries(&mass)?;
        if (total - 1.0).abs() > TOLERANCE {
            return Err(Error::NotNormalized { total });
        }
        Ok(Self::from_unchecked(mass, MassKind::Normalized))
    }

    /// Builds a sub-distribution: total mass may be anywhere in `[0, 1]`.
    pub fn sub(mass: BTreeMap<T, f64>) -> Result<Self> {
        let total = check_entries(&mass)?;
        if total > 1.0 + TOLERANCE {
            return Err(Error::NotNormalized { total });
        }
        Ok(Self::from_unchecked(mass, MassKind::Sub))
    }

    /// Builds a distribution from (outcome, mass) pairs, summing repeated
    /// outcomes.
    pub fn from_pairs<I: IntoIterator<Item = (T, f64)>>(pairs: I) -> Result<Self> {
        Self::new(accumulate(pairs))
    }

    pub fn point(outcome: T) -> Self {
        let mut mass = BTreeMap::new();
        mass.insert(outcome, 1.0);
        Self::from_unchecked(mass, MassKind::Normalized)
    }

    /// Uniform distribution over the given outcomes. Panics on an empty list.
    pub fn uniform<I: IntoIterator<Item = T>>(outcomes: I) -> Self {
        let outcomes: Vec<T> = outcomes.into_iter().collect();
        assert!(!outcomes.is_empty(), "uniform distribution over no outcomes");
        let p = 1.0 / outcomes.len() as f64;
        Self::from_unchecked(accumulate(outcomes.into_iter().map(|o| (o, p))), MassKind::Normalized)
    }

    pub(crate) fn from_unchecked(mut mass: BTreeMap<T, f64>, kind: MassKind) -> Self {
        mass.retain(|_, p| *p > 0.0);
        Self { mass, kind }
    }

    pub fn kind(&self) -> MassKind {
        self.kind
    }

    pub fn is_normalized(&self) -> bool {
        self.kind == MassKind::Normalized
    }

    pub fn prob(&self, outcome: &T) -> f64 {
        self.mass.get(outcome).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.mass.values().sum()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> + '_ {
        self.mass.iter().map(|(k, v)| (k, *v))
    }

    pub fn support(&self) -> impl Iterator<Item = &T> + '_ {
        self.mass.keys()
    }

    pub fn as_map(&self) -> &BTreeMap<T, f64> {
        &self.mass
    }

    /// Pushes the distribution through `f`, summing mass that lands on the
    /// same image. Preserves total mass and the normalization flag.
    pub fn map<U, F>(&self, mut f: F) -> Distribution<U>
    where
        U: Ord + Clone + fmt::Debug,
        F: FnMut(&T) -> U,
    {
        Distribution::from_unchecked(accumulate(self.iter().map(|(k, p)| (f(k), p))), self.kind)
    }

    /// Same as [`Distribution::map`] for a fallible `f`.
    pub fn try_map<U, F>(&self, mut f: F) -> Result<Distribution<U>>
    where
        U: Ord + Clone + fmt::Debug,
        F: FnMut(&T) -> Result<U>,
    {
        let mut pairs = Vec::with_capacity(self.len());
        for (k, p) in self.iter() {
            pairs.push((f(k)?, p));
        }
        Ok(Distribution::from_unchecked(accumulate(pairs), self.kind))
    }

    /// Outcome-by-outcome equality within `tol` over the union of supports.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.mass
            .keys()
            .chain(other.mass.keys())
            .all(|k| (self.prob(k) - other.prob(k)).abs() <= tol)
    }
}

impl<T: Ord> IntoIterator for Distribution<T> {
    type Item = (T, f64);
    type IntoIter = std::collections::btree_map::IntoIter<T, f64>;

    fn into_iter(self) -> Self::IntoIter {
        self.mass.into_iter()
    }
}

fn check_entries<T: fmt::Debug>(mass: &BTreeMap<T, f64>) -> Result<f64> {
    for (k, p) in mass {
        if !p.is_finite() || *p < 0.0 {
            return Err(Error::InvalidProbability {
                outcome: format!("{k:?}"),
                value: *p,
            });
        }
    }
    Ok(mass.values().sum())
}

pub(crate) fn accumulate<T: Ord, I: IntoIterator<Item = (T, f64)>>(pairs: I) -> BTreeMap<T, f64> {
    let mut out = BTreeMap::new();
    for (k, p) in pairs {
        *out.entry(k).or_insert(0.0) += p;
    }
    out
}

/// Parses a probability literal: a decimal (`"0.51"`) or a rational
/// (`"1/3"`). The value must lie in `[0, 1]`.
pub fn parse_probability(text: &str) -> std::result::Result<f64, String> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad numerator in {text:?}"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad denominator in {text:?}"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in {text:?}"));
            }
            num / den
        }
        None => text.parse().map_err(|_| format!("not a probability: {text:?}"))?,
    };
    check_unit(value)
}

pub(crate) fn check_unit(value: f64) -> std::result::Result<f64, String> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("probability {value} outside [0, 1]"))
    }
}

/// Formats a real with 17 significant digits, which round-trips every `f64`.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).unwrap_or(0);
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}
