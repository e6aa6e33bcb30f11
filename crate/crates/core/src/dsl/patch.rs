//! JSON interchange for structural edits.
//!
//! ```json
//! {"new_variables": [{"id": "x", "domain": "int[0, 9]", "init": "= 0"}],
//!  "factors": [{"id": "m", "kind": "model", "scope": ["x"], "targets": ["x"],
//!               "body_source": "x := x + 1", "replace": false}]}
//! ```
//!
//! Domains, initial values and bodies use the `.fsim` concrete syntax.

use serde::{Deserialize, Serialize};

use crate::diag::{DiagCode, Diagnostic, Span};
use crate::ir::{Factor, FactorEdit, FactorKind, Patch, ScopeSet, StateVariable};

use super::format::format_body;
use super::parser::{parse_body, parse_domain, parse_init};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchDoc {
    #[serde(default)]
    pub new_variables: Vec<VariableSpec>,
    #[serde(default)]
    pub factors: Vec<FactorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub domain: String,
    pub init: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub id: String,
    pub kind: String,
    #[serde(default)]
    pub scope: Vec<String>,
    #[serde(default)]
    pub targets: Vec<String>,
    pub body_source: String,
    #[serde(default)]
    pub replace: bool,
}

/// Byte offset of a 1-based line/column pair.
fn offset_of(src: &str, line: usize, column: usize) -> usize {
    let mut off = 0;
    for (i, l) in src.split_inclusive('\n').enumerate() {
        if i + 1 == line {
            return (off + column.saturating_sub(1)).min(src.len());
        }
        off += l.len();
    }
    src.len()
}

fn prefixed(mut diags: Vec<Diagnostic>, prefix: &str, factor: Option<&str>) -> Vec<Diagnostic> {
    for d in &mut diags {
        d.message = format!("{prefix}: {}", d.message);
        if let Some(f) = factor {
            d.factor = Some(f.to_string());
        }
    }
    diags
}

/// Parses a patch document. Returns every problem found.
pub fn parse_patch(json: &str) -> Result<Patch, Vec<Diagnostic>> {
    let doc: PatchDoc = serde_json::from_str(json).map_err(|e| {
        let at = offset_of(json, e.line(), e.column());
        vec![Diagnostic::error(DiagCode::InvalidPatch, Span::new(at, at), format!("invalid patch JSON: {e}"))]
    })?;
    patch_from_doc(&doc)
}

pub fn patch_from_doc(doc: &PatchDoc) -> Result<Patch, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut patch = Patch::default();
    for v in &doc.new_variables {
        let domain = parse_domain(&v.domain).map_err(|d| prefixed(d, &format!("variable `{}` domain", v.id), None));
        let init = parse_init(&v.init).map_err(|d| prefixed(d, &format!("variable `{}` init", v.id), None));
        match (domain, init) {
            (Ok(domain), Ok(init)) => {
                let mut sv = StateVariable::new(&v.id, domain, init);
                if let Some(n) = &v.name {
                    sv.name = n.clone();
                }
                patch.new_variables.push(sv);
            }
            (a, b) => {
                diags.extend(a.err().unwrap_or_default());
                diags.extend(b.err().unwrap_or_default());
            }
        }
    }
    for f in &doc.factors {
        let Some(kind) = FactorKind::from_keyword(&f.kind) else {
            diags.push(
                Diagnostic::error(DiagCode::InvalidPatch, Span::default(), format!("factor `{}`: unknown kind `{}`", f.id, f.kind)).in_factor(&f.id),
            );
            continue;
        };
        match parse_body(&f.body_source) {
            Ok(body) => patch.factors.push(FactorEdit {
                factor: Factor {
                    id: f.id.clone(),
                    kind,
                    scope: ScopeSet::new(f.scope.iter().cloned()),
                    targets: ScopeSet::new(f.targets.iter().cloned()),
                    body,
                    order_index: 0,
                    span: Span::default(),
                },
                replace: f.replace,
            }),
            Err(d) => diags.extend(prefixed(d, &format!("factor `{}` body", f.id), Some(&f.id))),
        }
    }
    if diags.is_empty() {
        Ok(patch)
    } else {
        Err(diags)
    }
}

pub fn patch_to_doc(patch: &Patch) -> PatchDoc {
    PatchDoc {
        new_variables: patch
            .new_variables
            .iter()
            .map(|v| VariableSpec {
                id: v.id.clone(),
                name: (v.name != v.id).then(|| v.name.clone()),
                domain: v.domain.to_string(),
                init: v.init.to_string(),
            })
            .collect(),
        factors: patch
            .factors
            .iter()
            .map(|e| FactorSpec {
                id: e.factor.id.clone(),
                kind: e.factor.kind.keyword().to_string(),
                scope: e.factor.scope.ids().to_vec(),
                targets: e.factor.targets.ids().to_vec(),
                body_source: format_body(&e.factor.body, 0),
                replace: e.replace,
            })
            .collect(),
    }
}

pub fn patch_to_json(patch: &Patch) -> String {
    serde_json::to_string_pretty(&patch_to_doc(patch)).expect("patch documents serialise")
}
