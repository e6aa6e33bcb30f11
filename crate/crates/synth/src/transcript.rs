//! Full record of one synthesis run.

use serde::{Deserialize, Serialize};

use fsim_core::diag::Diagnostic;
use fsim_core::dsl::{format_factor, format_variable, patch_from_doc, PatchDoc, VariableSpec};
use fsim_core::ir::{FactoredPomdp, IrError};

use crate::cassette::{Cassette, CassetteRecord};
use crate::pipeline::{initial_program, Plan};
use crate::provider::{fingerprint, Message, Purpose, TokenCounts};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExchangeOutcome {
    Accepted,
    Rejected { diagnostics: Vec<Diagnostic> },
    Unparsable { error: String },
}

/// One provider call and what the pipeline made of the reply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    /// Position of the call within the run, counting from 0.
    pub seq: u32,
    pub purpose: Purpose,
    /// 1 for the first try, then one more per repair reprompt.
    pub attempt: u32,
    pub messages: Vec<Message>,
    pub response: String,
    pub tokens: TokenCounts,
    pub outcome: ExchangeOutcome,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub z: Vec<String>,
    pub new_variables: Vec<VariableSpec>,
    pub retrieved_factors: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Completed,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub index: usize,
    pub step_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<ContextRecord>,
    pub exchanges: Vec<Exchange>,
    /// Everything the step added: its new variables and accepted factors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<PatchDoc>,
    pub status: StepStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_attempts: u32,
    pub plan_samples: u32,
    pub template_version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub settings: RunSettings,
    pub spec_text: String,
    pub plan_exchanges: Vec<Exchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    pub steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_program: Option<String>,
    /// Runs for the plans that were not chosen when several were sampled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternatives: Vec<Transcript>,
    pub token_totals: TokenCounts,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextViolation {
    pub step: usize,
    pub purpose: Purpose,
    pub attempt: u32,
    /// `factor <id>` or `variable <id>`.
    pub leaked: String,
}

impl Transcript {
    pub fn new(settings: RunSettings, spec_text: &str) -> Self {
        Self {
            settings,
            spec_text: spec_text.to_string(),
            plan_exchanges: Vec::new(),
            plan: None,
            steps: Vec::new(),
            final_program: None,
            alternatives: Vec::new(),
            token_totals: TokenCounts::default(),
        }
    }

    /// Every exchange of this run and its alternatives, in call order.
    pub fn exchanges(&self) -> Vec<&Exchange> {
        let mut all: Vec<&Exchange> = self.plan_exchanges.iter().chain(self.steps.iter().flat_map(|s| s.exchanges.iter())).collect();
        for alt in &self.alternatives {
            all.extend(alt.exchanges());
        }
        all.sort_by_key(|e| e.seq);
        all
    }

    /// Sum of the token counts of every recorded response.
    pub fn recount_tokens(&self) -> TokenCounts {
        let mut t = TokenCounts::default();
        for e in self.exchanges() {
            t += e.tokens;
        }
        t
    }

    /// A cassette that replays this run exactly.
    pub fn to_cassette(&self) -> Cassette {
        Cassette::new(
            self.exchanges()
                .into_iter()
                .map(|e| CassetteRecord {
                    purpose: Some(e.purpose),
                    request_fingerprint: fingerprint(&e.messages),
                    response_text: e.response.clone(),
                    token_counts: e.tokens,
                })
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcripts serialise");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Re-derives the program before each completed step and after the
    /// last one from the plan and the accepted patches alone.
    pub fn rebuild(&self) -> Result<Vec<FactoredPomdp>, RebuildError> {
        let plan = self.plan.as_ref().ok_or(RebuildError::NoPlan)?;
        let mut m = initial_program(plan).map_err(|e| RebuildError::Invalid { step: 0, source: e })?;
        let mut out = vec![m.clone()];
        for s in self.steps.iter().filter(|s| s.status == StepStatus::Completed) {
            let doc = s.patch.as_ref().ok_or(RebuildError::MissingPatch(s.index))?;
            let patch = patch_from_doc(doc).map_err(|d| RebuildError::Invalid { step: s.index, source: IrError::Invalid(d) })?;
            m = m.apply_structural_edit(&patch).map_err(|e| RebuildError::Invalid { step: s.index, source: e })?;
            out.push(m.clone());
        }
        Ok(out)
    }

    /// Prompts that show a factor outside the step's retrieved set, or a
    /// variable outside its scope set. Context-selection prompts may list
    /// every variable but no factor at all.
    pub fn context_violations(&self) -> Result<Vec<ContextViolation>, RebuildError> {
        let programs = self.rebuild()?;
        let mut out = Vec::new();
        for (k, step) in self.steps.iter().enumerate() {
            let Some(before) = programs.get(k) else { break };
            let ctx = step.context.clone().unwrap_or_default();
            for e in &step.exchanges {
                let shown = |needle: &str| e.messages.iter().any(|m| m.content.contains(needle));
                let gen = e.purpose != Purpose::SelectContext;
                for f in &before.factors {
                    let allowed = gen && ctx.retrieved_factors.contains(&f.id);
                    if !allowed && shown(&format_factor(f)) {
                        out.push(ContextViolation { step: step.index, purpose: e.purpose, attempt: e.attempt, leaked: format!("factor {}", f.id) });
                    }
                }
                if gen {
                    for v in before.variables.iter().filter(|v| !ctx.z.contains(&v.id)) {
                        if shown(&format_variable(v)) {
                            out.push(ContextViolation { step: step.index, purpose: e.purpose, attempt: e.attempt, leaked: format!("variable {}", v.id) });
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RebuildError {
    #[error("transcript has no plan")]
    NoPlan,
    #[error("step {0} completed without a recorded patch")]
    MissingPatch(usize),
    #[error("step {step} does not apply: {source}")]
    Invalid { step: usize, source: IrError },
}
