//! Exact joint transition tables for small finite programs.
//!
//! Each factor's conditional distribution is enumerated once per assignment
//! of its scope (and per action, for controllers), independently of the rest
//! of the state. A phase's next-state distribution is the product of its
//! factors' distributions; phases compose in evaluation order. This is a
//! separate route from the runtime, which enumerates whole steps.

use std::collections::{BTreeMap, HashMap};

use crate::eval::{apply_effects, exec_body, Effect, StateMap};
use crate::ir::{Factor, FactorKind, FactoredPomdp, IrError};
use crate::rng::{enumerate_outcomes, ChoicePath};
use crate::value::Value;

/// Default bound on `|S| × |A|`.
pub const DEFAULT_CAP: u64 = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct FlatTable {
    pub variables: Vec<String>,
    pub actions: Vec<String>,
    /// Joint states in mixed-radix order, first variable most significant.
    pub states: Vec<Vec<Value>>,
    radices: Vec<u64>,
    domains: Vec<crate::value::Domain>,
    /// `rows[s * |A| + a]`: sparse next-state distribution, sorted by index.
    rows: Vec<Vec<(usize, f64)>>,
    score_pos: usize,
}

impl FlatTable {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.rows[s * self.actions.len() + a]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a).iter().find(|(i, _)| *i == next).map_or(0.0, |(_, p)| *p)
    }

    pub fn action_index(&self, action: &str) -> Option<usize> {
        self.actions.iter().position(|a| a == action)
    }

    pub fn state_map(&self, s: usize) -> StateMap {
        self.variables.iter().cloned().zip(self.states[s].iter().cloned()).collect()
    }

    /// Index of a joint state given as a map over all variables.
    pub fn state_index(&self, values: &StateMap) -> Option<usize> {
        let mut idx: u64 = 0;
        for ((var, dom), radix) in self.variables.iter().zip(&self.domains).zip(&self.radices) {
            idx = idx * radix + dom.index_of(values.get(var)?)?;
        }
        usize::try_from(idx).ok()
    }

    /// Reward of a transition: the change in the score variable.
    pub fn reward(&self, s: usize, next: usize) -> f64 {
        let score = |i: usize| self.states[i][self.score_pos].as_f64().unwrap_or(0.0);
        score(next) - score(s)
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.row(s, a).iter().map(|(n, p)| p * self.reward(s, *n)).sum()
    }
}

pub fn flatten_enumerate(p: &FactoredPomdp) -> Result<FlatTable, IrError> {
    flatten_with_cap(p, DEFAULT_CAP)
}

/// Outcomes of one factor: effect lists with probabilities.
type Outcomes = Vec<(Vec<Effect>, f64)>;

struct FactorTables<'p> {
    pomdp: &'p FactoredPomdp,
    cache: HashMap<(String, String, Option<usize>), Outcomes>,
}

impl FactorTables<'_> {
    fn outcomes(&mut self, f: &Factor, state: &StateMap, action: Option<usize>) -> Result<&Outcomes, IrError> {
        let restricted: StateMap = f.scope.iter().map(|id| (id.to_string(), state[id].clone())).collect();
        let key = (f.id.clone(), serde_json::to_string(&restricted).expect("values serialise"), action);
        if !self.cache.contains_key(&key) {
            let act = action.map(|a| self.pomdp.actions[a].as_str());
            let outs = enumerate_outcomes(|path: &mut ChoicePath| exec_body(&f.body, &restricted, act, path).map(|o| o.effects))
                .map_err(|e| IrError::Enumeration { factor: f.id.clone(), message: e.to_string() })?;
            self.cache.insert(key.clone(), outs);
        }
        Ok(&self.cache[&key])
    }
}

pub fn flatten_with_cap(p: &FactoredPomdp, cap: u64) -> Result<FlatTable, IrError> {
    let mut radices = Vec::new();
    for v in &p.variables {
        radices.push(v.domain.size().ok_or_else(|| IrError::NotFinite(v.id.clone()))?);
    }
    let n_states = radices.iter().fold(1u128, |acc, r| acc.saturating_mul(u128::from(*r)));
    let size = n_states.saturating_mul(p.actions.len() as u128);
    if size > u128::from(cap) {
        return Err(IrError::CapExceeded { size, cap });
    }
    let domains: Vec<_> = p.variables.iter().map(|v| v.domain.clone()).collect();
    let values: Vec<Vec<Value>> = domains.iter().map(|d| d.values().expect("finite domain")).collect();
    let states: Vec<Vec<Value>> = (0..n_states as u64)
        .map(|mut idx| {
            let mut digits = vec![0u64; radices.len()];
            for (d, r) in digits.iter_mut().zip(&radices).rev() {
                *d = idx % r;
                idx /= r;
            }
            digits.iter().zip(&values).map(|(d, vs)| vs[*d as usize].clone()).collect()
        })
        .collect();
    let score_pos = p.variables.iter().position(|v| v.id == p.score_id).unwrap_or(0);
    let mut table = FlatTable {
        variables: p.variables.iter().map(|v| v.id.clone()).collect(),
        actions: p.actions.clone(),
        states,
        radices,
        domains,
        rows: Vec::new(),
        score_pos,
    };

    let mut tables = FactorTables { pomdp: p, cache: HashMap::new() };
    let mut rows = Vec::with_capacity(table.states.len() * p.actions.len());
    for s in 0..table.num_states() {
        for a in 0..p.actions.len() {
            let mut dist: BTreeMap<usize, f64> = BTreeMap::from([(s, 1.0)]);
            for kind in [FactorKind::Controller, FactorKind::Model, FactorKind::Reward] {
                dist = phase(&table, &mut tables, kind, &dist, a)?;
            }
            rows.push(dist.into_iter().filter(|(_, pr)| *pr > 0.0).collect());
        }
    }
    table.rows = rows;
    Ok(table)
}

/// Pushes a distribution over joint states through one phase.
fn phase(
    table: &FlatTable,
    tables: &mut FactorTables<'_>,
    kind: FactorKind,
    dist: &BTreeMap<usize, f64>,
    action: usize,
) -> Result<BTreeMap<usize, f64>, IrError> {
    let p = tables.pomdp;
    let factors: Vec<&Factor> = p.factors_of(kind).collect();
    if factors.is_empty() {
        return Ok(dist.clone());
    }
    let mut out = BTreeMap::new();
    for (&s, &ps) in dist {
        let state = table.state_map(s);
        let per_factor: Vec<Outcomes> = factors
            .iter()
            .map(|f| {
                let act = (kind == FactorKind::Controller).then_some(action);
                tables.outcomes(f, &state, act).cloned()
            })
            .collect::<Result<_, _>>()?;
        // Independent product over the factors of this phase.
        let mut combos: Vec<(Vec<Effect>, f64)> = vec![(Vec::new(), ps)];
        for outs in &per_factor {
            let mut next = Vec::with_capacity(combos.len() * outs.len());
            for (effs, pr) in &combos {
                for (more, q) in outs {
                    let mut e = effs.clone();
                    e.extend(more.iter().cloned());
                    next.push((e, pr * q));
                }
            }
            combos = next;
        }
        for (effects, pr) in combos {
            let mut warnings = Vec::new();
            let next = apply_effects(p, &state, &effects, &mut warnings)
                .map_err(|e| IrError::Enumeration { factor: format!("{kind} phase"), message: e.to_string() })?;
            let idx = table.state_index(&next).expect("coerced states lie in the joint domain");
            *out.entry(idx).or_insert(0.0) += pr;
        }
    }
    Ok(out)
}
