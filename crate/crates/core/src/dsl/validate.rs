//! Turns a parsed [`Program`] into a checked [`FactoredPomdp`].

use std::collections::BTreeMap;

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::ir::{check, Factor, FactorKind, FactoredPomdp, Metadata, ScopeSet, StateVariable, NOOP};

use super::parser::{Decl, Program};

/// Validates `prog`, returning every violation rather than the first.
pub fn validate(prog: &Program) -> Result<FactoredPomdp, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut metadata: Option<(Metadata, Span)> = None;
    let mut actions: Option<(Vec<String>, Span)> = None;
    let mut max_steps: Option<(u64, Span)> = None;
    let mut score: Option<(String, Span)> = None;
    let mut variables = Vec::new();
    let mut factors = Vec::new();
    let mut next_order: BTreeMap<FactorKind, i64> = BTreeMap::new();

    fn once<T>(slot: &mut Option<(T, Span)>, value: T, span: Span, what: &str, diags: &mut Vec<Diagnostic>) {
        if slot.is_some() {
            diags.push(Diagnostic::error(DiagCode::DuplicateDeclaration, span, format!("{what} is declared more than once")));
        } else {
            *slot = Some((value, span));
        }
    }

    for d in &prog.decls {
        match d {
            Decl::Simulation { name, description, span } => once(
                &mut metadata,
                Metadata { name: name.clone(), description: description.clone() },
                *span,
                "`simulation`",
                &mut diags,
            ),
            Decl::Actions { names, span } => {
                once(&mut actions, names.iter().map(|(n, _)| n.clone()).collect(), *span, "`actions`", &mut diags)
            }
            Decl::MaxSteps { value, span } => once(&mut max_steps, *value, *span, "`max_steps`", &mut diags),
            Decl::Score { id, span } => once(&mut score, id.clone(), *span, "`score`", &mut diags),
            Decl::Var(v) => {
                let mut sv = StateVariable::new(&v.id, v.domain.clone(), v.init.clone());
                if let Some(l) = &v.label {
                    sv.name = l.clone();
                }
                sv.span = v.span;
                variables.push(sv);
            }
            Decl::Factor(f) => {
                let counter = next_order.entry(f.kind).or_insert(0);
                let order_index = f.order.unwrap_or(*counter);
                *counter = (*counter).max(order_index.saturating_add(1));
                factors.push(Factor {
                    id: f.id.clone(),
                    kind: f.kind,
                    scope: ScopeSet::new(f.scope.iter().map(|(v, _)| v.clone())),
                    targets: ScopeSet::new(f.targets.iter().map(|(v, _)| v.clone())),
                    body: f.body.clone(),
                    order_index,
                    span: f.span,
                });
            }
        }
    }

    let whole = Span::new(0, 0);
    let missing = |what: &str| Diagnostic::error(DiagCode::MissingDeclaration, whole, format!("missing `{what}` declaration"));
    if actions.is_none() {
        diags.push(missing("actions"));
    }
    if score.is_none() {
        diags.push(missing("score"));
    }
    if max_steps.is_none() {
        diags.push(missing("max_steps"));
    }
    let (Some((mut actions, _)), Some((score_id, _)), Some((max_steps, _))) = (actions, score, max_steps) else {
        return Err(diags);
    };
    if !actions.iter().any(|a| a == NOOP) {
        actions.insert(0, NOOP.to_string());
    }
    let mut pomdp = FactoredPomdp {
        variables,
        actions,
        factors,
        score_id,
        max_steps,
        metadata: metadata.map(|(m, _)| m).unwrap_or_default(),
    };
    pomdp.sort_factors();
    diags.extend(check(&pomdp));
    if diags.is_empty() {
        Ok(pomdp)
    } else {
        Err(diags)
    }
}
