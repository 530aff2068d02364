//! Finite, acyclic structural causal models.
//!
//! Variables take values from explicitly enumerated ranges and every
//! structural equation is an extensional table, so evaluation is a sequence
//! of table lookups in topological order and pushforwards are exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::prob::Distribution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Exogenous,
    Endogenous,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId {
    pub name: String,
    pub role: Role,
}

/// Ordered, non-empty list of distinct value symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteRange(Vec<String>);

impl FiniteRange {
    pub fn new<I, S>(values: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(Error::InvalidModel("empty range".into()));
        }
        let mut seen = BTreeSet::new();
        for v in &values {
            check_symbol(v)?;
            if !seen.insert(v) {
                return Err(Error::InvalidModel(format!("duplicate range value {v:?}")));
            }
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    pub fn contains(&self, value: &str) -> bool {
        self.0.iter().any(|v| v == value)
    }
}

/// Symbols are joined with `|` in canonical keys and `⊥` denotes unmapped
/// output, so neither may appear inside a symbol.
pub(crate) fn check_symbol(s: &str) -> Result<()> {
    if s.is_empty() || s.contains('|') || s.contains('⊥') {
        return Err(Error::InvalidModel(format!("invalid symbol {s:?}")));
    }
    Ok(())
}

/// A total table from input-value tuples to a value of `target`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructuralEquation {
    pub target: String,
    pub inputs: Vec<String>,
    pub table: BTreeMap<Vec<String>, String>,
}

impl StructuralEquation {
    pub fn new<S: Into<String>>(target: S, inputs: Vec<String>, table: BTreeMap<Vec<String>, String>) -> Self {
        Self {
            target: target.into(),
            inputs,
            table,
        }
    }

    pub fn constant<S: Into<String>>(target: S, value: String) -> Self {
        let mut table = BTreeMap::new();
        table.insert(Vec::new(), value);
        Self::new(target, Vec::new(), table)
    }
}

/// A full assignment of values to a model's exogenous or endogenous
/// variables, stored in declared variable order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Assignment(pub Vec<String>);

pub type Context = Assignment;
pub type EndogenousSetting = Assignment;

impl Assignment {
    pub fn new<I, S>(values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(values.into_iter().map(Into::into).collect())
    }

    pub fn values(&self) -> &[String] {
        &self.0
    }

    /// Canonical key: values joined with `|`.
    pub fn key(&self) -> String {
        self.0.join("|")
    }

    pub fn parse_key(key: &str) -> Self {
        Self(key.split('|').map(str::to_string).collect())
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// The null intervention, or a partial assignment that overrides the
/// normal causes of the assigned variables.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Intervention {
    Null,
    Set(BTreeMap<String, String>),
}

impl Intervention {
    pub fn set<I, K, V>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self::Set(pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Self::Null)
    }

    /// Canonical key: `null`, or `var=value` pairs joined with `|`.
    pub fn key(&self) -> String {
        match self {
            Self::Null => "null".to_string(),
            Self::Set(map) => map
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join("|"),
        }
    }

    pub fn parse_key(key: &str) -> Result<Self> {
        if key == "null" {
            return Ok(Self::Null);
        }
        let mut map = BTreeMap::new();
        for part in key.split('|') {
            let (var, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidModel(format!("malformed intervention {key:?}")))?;
            if map.insert(var.to_string(), value.to_string()).is_some() {
                return Err(Error::InvalidModel(format!("intervention {key:?} assigns {var} twice")));
            }
        }
        Ok(Self::Set(map))
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Exo(usize),
    Endo(usize),
}

/// A finite acyclic causal model with its set of allowed interventions.
#[derive(Clone, Debug, PartialEq)]
pub struct CausalModel {
    exogenous: Vec<(String, FiniteRange)>,
    endogenous: Vec<(String, FiniteRange)>,
    /// One per endogenous variable, in declared order.
    equations: Vec<StructuralEquation>,
    allowed: Vec<Intervention>,
    /// Exogenous variables pinned by an applied intervention.
    pinned: BTreeMap<usize, String>,
    resolved: Vec<Vec<Slot>>,
    order: Vec<usize>,
}

impl CausalModel {
    pub fn new(
        exogenous: Vec<(String, FiniteRange)>,
        endogenous: Vec<(String, FiniteRange)>,
        equations: Vec<StructuralEquation>,
        allowed: Vec<Intervention>,
    ) -> Result<Self> {
        let mut names = BTreeSet::new();
        for (name, _) in exogenous.iter().chain(&endogenous) {
            check_var_name(name)?;
            if !names.insert(name.as_str()) {
                return Err(Error::InvalidModel(format!("duplicate variable {name}")));
            }
        }

        let mut by_target: BTreeMap<String, StructuralEquation> = BTreeMap::new();
        for eq in equations {
            if !endogenous.iter().any(|(n, _)| *n == eq.target) {
                return Err(Error::InvalidModel(format!(
                    "equation target {} is not an endogenous variable",
                    eq.target
                )));
            }
            let target = eq.target.clone();
            if by_target.insert(target.clone(), eq).is_some() {
                return Err(Error::InvalidModel(format!("two equations for {target}")));
            }
        }
        let mut ordered = Vec::with_capacity(endogenous.len());
        for (name, _) in &endogenous {
            let eq = by_target
                .remove(name)
                .ok_or_else(|| Error::InvalidModel(format!("no equation for {name}")))?;
            ordered.push(eq);
        }

        let mut model = Self {
            exogenous,
            endogenous,
            equations: ordered,
            allowed: Vec::new(),
            pinned: BTreeMap::new(),
            resolved: Vec::new(),
            order: Vec::new(),
        };
        model.resolve()?;
        for eq in &model.equations {
            model.check_equation(eq)?;
        }
        for iv in &allowed {
            model.check_intervention_values(iv)?;
        }
        model.allowed = allowed;
        Ok(model)
    }

    fn resolve(&mut self) -> Result<()> {
        let mut resolved = Vec::with_capacity(self.equations.len());
        for eq in &self.equations {
            let slots = eq
                .inputs
                .iter()
                .map(|name| {
                    self.slot(name).ok_or_else(|| {
                        Error::InvalidModel(format!("equation for {} uses undeclared variable {name}", eq.target))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            resolved.push(slots);
        }
        self.order = topological_order(&resolved)
            .map_err(|cycle| Error::Cycle(cycle.into_iter().map(|i| self.endogenous[i].0.clone()).collect()))?;
        self.resolved = resolved;
        Ok(())
    }

    fn slot(&self, name: &str) -> Option<Slot> {
        if let Some(i) = self.exogenous.iter().position(|(n, _)| n == name) {
            return Some(Slot::Exo(i));
        }
        self.endogenous.iter().position(|(n, _)| n == name).map(Slot::Endo)
    }

    fn check_equation(&self, eq: &StructuralEquation) -> Result<()> {
        let target_range = self.range(&eq.target).expect("target resolved");
        let input_ranges: Vec<&FiniteRange> = eq
            .inputs
            .iter()
            .map(|n| self.range(n).expect("inputs resolved"))
            .collect();
        for (inputs, out) in &eq.table {
            if inputs.len() != eq.inputs.len() {
                return Err(Error::InvalidModel(format!(
                    "equation for {}: row {inputs:?} has the wrong arity",
                    eq.target
                )));
            }
            for (value, range) in inputs.iter().zip(&input_ranges) {
                if !range.contains(value) {
                    return Err(Error::InvalidModel(format!(
                        "equation for {}: input value {value:?} out of range",
                        eq.target
                    )));
                }
            }
            if !target_range.contains(out) {
                return Err(Error::OutOfRange {
                    variable: eq.target.clone(),
                    value: out.clone(),
                });
            }
        }
        for inputs in cross_product(&input_ranges) {
            if !eq.table.contains_key(&inputs) {
                return Err(Error::InvalidModel(format!(
                    "equation for {} is not total: missing inputs {inputs:?}",
                    eq.target
                )));
            }
        }
        Ok(())
    }

    fn check_intervention_values(&self, iv: &Intervention) -> Result<()> {
        if let Intervention::Set(map) = iv {
            if map.is_empty() {
                return Err(Error::InvalidModel("empty intervention; use null".into()));
            }
            for (var, value) in map {
                let range = self
                    .range(var)
                    .ok_or_else(|| Error::InvalidModel(format!("intervention on undeclared variable {var}")))?;
                if !range.contains(value) {
                    return Err(Error::OutOfRange {
                        variable: var.clone(),
                        value: value.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn exogenous(&self) -> &[(String, FiniteRange)] {
        &self.exogenous
    }

    pub fn endogenous(&self) -> &[(String, FiniteRange)] {
        &self.endogenous
    }

    pub fn variables(&self) -> impl Iterator<Item = VariableId> + '_ {
        let exo = self.exogenous.iter().map(|(n, _)| VariableId {
            name: n.clone(),
            role: Role::Exogenous,
        });
        let endo = self.endogenous.iter().map(|(n, _)| VariableId {
            name: n.clone(),
            role: Role::Endogenous,
        });
        exo.chain(endo)
    }

    pub fn equations(&self) -> &[StructuralEquation] {
        &self.equations
    }

    pub fn allowed_interventions(&self) -> &[Intervention] {
        &self.allowed
    }

    /// Exogenous values pinned by previously applied interventions.
    pub fn pinned_exogenous(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.pinned
            .iter()
            .map(|(i, v)| (self.exogenous[*i].0.as_str(), v.as_str()))
    }

    pub fn range(&self, name: &str) -> Option<&FiniteRange> {
        self.exogenous
            .iter()
            .chain(&self.endogenous)
            .find(|(n, _)| n == name)
            .map(|(_, r)| r)
    }

    /// Builds a context from named exogenous values.
    pub fn context<'a, I>(&self, pairs: I) -> Result<Context>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let named = assignment_from_named(&self.exogenous, pairs, Role::Exogenous)?;
        self.check_context(&named)?;
        Ok(named)
    }

    /// Builds an endogenous setting from named values, requiring every
    /// endogenous variable to be assigned an in-range value.
    pub fn setting<'a, I>(&self, pairs: I) -> Result<EndogenousSetting>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        assignment_from_named(&self.endogenous, pairs, Role::Endogenous)
    }

    pub fn check_context(&self, ctx: &Context) -> Result<()> {
        check_assignment(&self.exogenous, ctx)
    }

    pub fn check_setting(&self, setting: &EndogenousSetting) -> Result<()> {
        check_assignment(&self.endogenous, setting)
    }

    /// All contexts, in lexicographic order of declared ranges.
    pub fn contexts(&self) -> Vec<Context> {
        let ranges: Vec<&FiniteRange> = self.exogenous.iter().map(|(_, r)| r).collect();
        cross_product(&ranges).into_iter().map(Assignment).collect()
    }

    /// Names an endogenous setting as `X=H, Y=...`.
    pub fn describe_setting(&self, setting: &EndogenousSetting) -> String {
        self.endogenous
            .iter()
            .zip(setting.values())
            .map(|((n, _), v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }

    /// Solves the structural equations under `ctx`.
    pub fn evaluate(&self, ctx: &Context) -> Result<EndogenousSetting> {
        if ctx.0.len() < self.exogenous.len() {
            return Err(Error::MissingExogenous(self.exogenous[ctx.0.len()].0.clone()));
        }
        self.check_context(ctx)?;
        let exo: Vec<&str> = (0..self.exogenous.len())
            .map(|i| self.pinned.get(&i).unwrap_or(&ctx.0[i]).as_str())
            .collect();
        let mut endo: Vec<Option<String>> = vec![None; self.endogenous.len()];
        for &i in &self.order {
            let eq = &self.equations[i];
            let inputs: Vec<String> = self.resolved[i]
                .iter()
                .map(|slot| match *slot {
                    Slot::Exo(j) => exo[j].to_string(),
                    Slot::Endo(j) => endo[j].clone().expect("topological order"),
                })
                .collect();
            let out = eq.table.get(&inputs).ok_or_else(|| Error::TableMiss {
                target: eq.target.clone(),
                inputs: inputs.clone(),
            })?;
            endo[i] = Some(out.clone());
        }
        Ok(Assignment(
            endo.into_iter().map(|v| v.expect("all evaluated")).collect(),
        ))
    }

    /// Returns the post-interventional model. Exogenous assignments pin the
    /// variable for every context; endogenous assignments replace the
    /// variable's equation with a constant.
    pub fn apply_intervention(&self, iv: &Intervention) -> Result<CausalModel> {
        let map = match iv {
            Intervention::Null => return Ok(self.clone()),
            Intervention::Set(map) => map,
        };
        self.check_intervention_values(iv)?;
        if !self.allowed.contains(iv) {
            return Err(Error::InterventionNotAllowed(iv.key()));
        }
        let mut out = self.clone();
        let mut equations_changed = false;
        for (var, value) in map {
            match out.slot(var).expect("checked above") {
                Slot::Exo(i) => {
                    out.pinned.insert(i, value.clone());
                }
                Slot::Endo(i) => {
                    out.equations[i] = StructuralEquation::constant(var.clone(), value.clone());
                    equations_changed = true;
                }
            }
        }
        if equations_changed {
            out.resolve()?;
        }
        Ok(out)
    }

    /// Distribution over endogenous settings induced by a context
    /// distribution.
    pub fn push_forward(&self, contexts: &Distribution<Context>) -> Result<Distribution<EndogenousSetting>> {
        contexts.try_map(|ctx| self.evaluate(ctx))
    }
}

fn check_var_name(name: &str) -> Result<()> {
    check_symbol(name)?;
    if name.contains('=') {
        return Err(Error::InvalidModel(format!("invalid variable name {name:?}")));
    }
    Ok(())
}

fn check_assignment(vars: &[(String, FiniteRange)], a: &Assignment) -> Result<()> {
    if a.0.len() != vars.len() {
        return Err(Error::InvalidModel(format!(
            "assignment {a} has {} values for {} variables",
            a.0.len(),
            vars.len()
        )));
    }
    for ((name, range), value) in vars.iter().zip(&a.0) {
        if !range.contains(value) {
            return Err(Error::OutOfRange {
                variable: name.clone(),
                value: value.clone(),
            });
        }
    }
    Ok(())
}

fn assignment_from_named<'a, I>(vars: &[(String, FiniteRange)], pairs: I, role: Role) -> Result<Assignment>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut named: BTreeMap<&str, &str> = BTreeMap::new();
    for (k, v) in pairs {
        if named.insert(k, v).is_some() {
            return Err(Error::InvalidModel(format!("{k} assigned twice")));
        }
    }
    let mut values = Vec::with_capacity(vars.len());
    for (name, range) in vars {
        let value = named.remove(name.as_str()).ok_or_else(|| match role {
            Role::Exogenous => Error::MissingExogenous(name.clone()),
            Role::Endogenous => Error::InvalidModel(format!("no value for endogenous variable {name}")),
        })?;
        if !range.contains(value) {
            return Err(Error::OutOfRange {
                variable: name.clone(),
                value: value.to_string(),
            });
        }
        values.push(value.to_string());
    }
    if let Some(extra) = named.keys().next() {
        return Err(Error::InvalidModel(format!("unknown variable {extra}")));
    }
    Ok(Assignment(values))
}

fn cross_product(ranges: &[&FiniteRange]) -> Vec<Vec<String>> {
    ranges.iter().fold(vec![Vec::new()], |acc, range| {
        acc.iter()
            .flat_map(|prefix| {
                range.values().iter().map(move |v| {
                    let mut row = prefix.clone();
                    row.push(v.clone());
                    row
                })
            })
            .collect()
    })
}

/// Kahn's algorithm over endogenous dependencies. On a cycle, returns the
/// variables that could not be ordered.
fn topological_order(resolved: &[Vec<Slot>]) -> std::result::Result<Vec<usize>, Vec<usize>> {
    let n = resolved.len();
    let mut indegree = vec![0usize; n];
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, slots) in resolved.iter().enumerate() {
        for slot in slots {
            if let Slot::Endo(j) = *slot {
                indegree[i] += 1;
                dependents[j].push(i);
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for &d in &dependents[i] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(d);
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).filter(|&i| indegree[i] > 0).collect())
    }
}
