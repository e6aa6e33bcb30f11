//! The step-wise synthesis loop.
//!
//! A run decomposes the specification into a plan, starts from a program
//! holding only the score variable, and then for every plan step:
//! selects the variables the step concerns (declaring new ones), retrieves
//! the factors touching them, and asks for controller, model and view
//! factors in turn. Each reply is validated against the current program and
//! reprompted with its diagnostics until it applies or attempts run out.

use serde::{Deserialize, Serialize};

use fsim_core::diag::{DiagCode, Diagnostic, Span};
use fsim_core::dsl::{format_factor, format_program, format_variable, parse_patch, patch_from_doc, patch_to_doc, PatchDoc, VariableSpec};
use fsim_core::ir::{Factor, FactorKind, FactoredPomdp, IrError, Metadata, Patch, ScopeSet, StateVariable};
use fsim_core::value::{Domain, Init, Value};

use crate::provider::{Message, Provider, ProviderError, ProviderRequest, Purpose, TokenCounts};
use crate::templates::{render, Templates};
use crate::transcript::{ContextRecord, Exchange, ExchangeOutcome, RunSettings, StepRecord, StepStatus, Transcript};

pub const SCORE_ID: &str = "score";
const SCORE_BOUND: f64 = 1_000_000.0;
/// Attempts allowed for plan parsing and for variable proposals.
const PROPOSAL_ATTEMPTS: u32 = 2;

/// Output of the decomposition call: program header plus ordered steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub actions: Vec<String>,
    pub max_steps: u64,
    pub steps: Vec<String>,
}

impl Plan {
    pub fn check(&self) -> Result<(), String> {
        if self.steps.is_empty() {
            return Err("the plan has no steps".into());
        }
        if let Some(i) = self.steps.iter().position(|s| s.trim().is_empty()) {
            return Err(format!("step {} is empty", i + 1));
        }
        if self.name.trim().is_empty() {
            return Err("the simulation needs a name".into());
        }
        Ok(())
    }
}

pub fn score_variable() -> StateVariable {
    StateVariable::new(SCORE_ID, Domain::Real { lo: -SCORE_BOUND, hi: SCORE_BOUND }, Init::Point { value: Value::Real(0.0) })
}

/// The program a run starts from: the score variable, the plan's actions
/// and no factors.
pub fn initial_program(plan: &Plan) -> Result<FactoredPomdp, IrError> {
    FactoredPomdp::initial(
        score_variable(),
        plan.actions.clone(),
        plan.max_steps,
        Metadata { name: plan.name.clone(), description: plan.description.clone() },
    )
}

/// What one step may see: its text, the selected variables and the factors
/// that read or write any of them.
#[derive(Clone, Debug, PartialEq)]
pub struct StepContext {
    pub step: usize,
    pub step_text: String,
    pub z: ScopeSet,
    pub new_variables: Vec<StateVariable>,
    /// Declarations of the variables in `z`.
    pub variables: Vec<StateVariable>,
    pub retrieved_factors: Vec<Factor>,
    pub actions: Vec<String>,
    pub score_id: String,
}

impl StepContext {
    pub fn record(&self) -> ContextRecord {
        let doc = patch_to_doc(&Patch { new_variables: self.new_variables.clone(), factors: Vec::new() });
        ContextRecord {
            z: self.z.ids().to_vec(),
            new_variables: doc.new_variables,
            retrieved_factors: self.retrieved_factors.iter().map(|f| f.id.clone()).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Tries per generation call, the first included.
    pub max_attempts: u32,
    /// Plans sampled; with more than one, the plan whose run completes the
    /// most steps is kept.
    pub plan_samples: u32,
    pub templates: Templates,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { model: "default".into(), temperature: 0.0, max_tokens: 2048, max_attempts: 3, plan_samples: 1, templates: Templates::builtin() }
    }
}

impl SynthConfig {
    pub fn settings(&self) -> RunSettings {
        RunSettings {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            max_attempts: self.max_attempts,
            plan_samples: self.plan_samples,
            template_version: self.templates.version.clone(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("the specification is empty")]
    EmptySpec,
    #[error("could not parse a plan: {message}")]
    UnparsablePlan { message: String },
    #[error("step {step}: invalid variable proposal: {}", join(.diagnostics))]
    InvalidVariableProposal { step: usize, diagnostics: Vec<Diagnostic> },
    #[error("step {step}: {purpose} generation failed after {} attempt(s); last problems: {}", .attempts.len(), join(.attempts.last().map(Vec::as_slice).unwrap_or_default()))]
    StepFailed { step: usize, purpose: Purpose, attempts: Vec<Vec<Diagnostic>> },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A failed run together with everything recorded before the failure.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct SynthFailure {
    pub error: SynthError,
    pub transcript: Box<Transcript>,
}

/// A generation reply that has not been applied yet.
#[derive(Clone, Debug)]
pub struct PatchAttempt {
    pub purpose: Purpose,
    pub attempt: u32,
    pub seq: u32,
    pub messages: Vec<Message>,
    pub response: String,
    pub tokens: TokenCounts,
    pub parsed: Result<Patch, Vec<Diagnostic>>,
}

/// Runs the pipeline against one provider, logging every exchange.
pub struct Synthesizer<'a> {
    provider: &'a dyn Provider,
    cfg: &'a SynthConfig,
    seq: u32,
    log: Vec<Exchange>,
}

/// Slice from the first `{` to the last `}`, so fenced or annotated replies
/// still parse.
pub fn extract_json(text: &str) -> Result<&str, String> {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => Ok(&text[a..=b]),
        _ => Err("the reply contains no JSON object".into()),
    }
}

fn invalid(message: impl Into<String>) -> Diagnostic {
    Diagnostic::error(DiagCode::InvalidPatch, Span::default(), message)
}

fn ir_diagnostics(e: IrError) -> Vec<Diagnostic> {
    match e {
        IrError::Invalid(d) => d,
        other => vec![invalid(other.to_string())],
    }
}

pub fn parse_plan(text: &str) -> Result<Plan, String> {
    let json = extract_json(text)?;
    let plan: Plan = serde_json::from_str(json).map_err(|e| format!("invalid plan JSON: {e}"))?;
    plan.check()?;
    initial_program(&plan).map_err(|e| format!("the plan header is invalid: {e}"))?;
    Ok(plan)
}

#[derive(Deserialize)]
struct Proposal {
    #[serde(default)]
    new_variables: Vec<VariableSpec>,
    #[serde(default)]
    relevant: Vec<String>,
}

/// Declares the proposed variables and resolves the scope set.
fn apply_proposal(pomdp: &FactoredPomdp, text: &str) -> Result<(FactoredPomdp, Vec<StateVariable>, ScopeSet), Vec<Diagnostic>> {
    let json = extract_json(text).map_err(|e| vec![invalid(e)])?;
    let prop: Proposal = serde_json::from_str(json).map_err(|e| vec![invalid(format!("invalid context JSON: {e}"))])?;
    let patch = patch_from_doc(&PatchDoc { new_variables: prop.new_variables, factors: Vec::new() })?;
    let mut next = pomdp.clone();
    let mut diags = Vec::new();
    for v in &patch.new_variables {
        match next.add_variable(v.clone()) {
            Ok(n) => next = n,
            Err(e) => diags.extend(ir_diagnostics(e)),
        }
    }
    for id in &prop.relevant {
        if next.variable(id).is_none() {
            diags.push(Diagnostic::error(DiagCode::UndeclaredVariable, Span::default(), format!("relevant variable `{id}` is not declared")));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    let new_ids: Vec<&str> = patch.new_variables.iter().map(|v| v.id.as_str()).collect();
    let z = ScopeSet::new(
        next.variables.iter().map(|v| v.id.as_str()).filter(|id| new_ids.contains(id) || prop.relevant.iter().any(|r| r == id)),
    );
    let added = patch.new_variables.iter().map(|v| next.variable(&v.id).cloned().expect("just added")).collect();
    Ok((next, added, z))
}

fn allowed_kinds(purpose: Purpose) -> &'static [FactorKind] {
    match purpose {
        Purpose::Controller => &[FactorKind::Controller],
        Purpose::Model => &[FactorKind::Model, FactorKind::Reward],
        Purpose::View => &[FactorKind::View],
        Purpose::Decompose | Purpose::SelectContext => &[],
    }
}

/// Parses a generation reply and checks it only adds factors of the kinds
/// the call is for.
pub fn parse_generated(purpose: Purpose, text: &str) -> Result<Patch, Vec<Diagnostic>> {
    let json = extract_json(text).map_err(|e| vec![invalid(e)])?;
    let patch = parse_patch(json)?;
    let mut diags = Vec::new();
    if !patch.new_variables.is_empty() {
        diags.push(invalid("new variables are declared during context selection, not in factor replies"));
    }
    let allowed = allowed_kinds(purpose);
    for e in &patch.factors {
        if !allowed.contains(&e.factor.kind) {
            let names: Vec<&str> = allowed.iter().map(|k| k.keyword()).collect();
            diags.push(
                Diagnostic::error(
                    DiagCode::WrongFactorKind,
                    Span::default(),
                    format!("factor `{}` is a {}, but this reply may only contain {}", e.factor.id, e.factor.kind, names.join(" or ")),
                )
                .in_factor(&e.factor.id),
            );
        }
    }
    if diags.is_empty() {
        Ok(patch)
    } else {
        Err(diags)
    }
}

fn bullet_list(d: &[Diagnostic]) -> String {
    d.iter().map(|d| format!("- {d}")).collect::<Vec<_>>().join("\n")
}

fn or_none(s: String) -> String {
    if s.is_empty() {
        "(none)".into()
    } else {
        s
    }
}

impl<'a> Synthesizer<'a> {
    pub fn new(provider: &'a dyn Provider, cfg: &'a SynthConfig) -> Self {
        Self { provider, cfg, seq: 0, log: Vec::new() }
    }

    /// Exchanges recorded since the last call.
    pub fn take_log(&mut self) -> Vec<Exchange> {
        std::mem::take(&mut self.log)
    }

    fn call(&mut self, purpose: Purpose, messages: &[Message]) -> Result<(u32, crate::provider::ProviderResponse), SynthError> {
        let request = ProviderRequest {
            purpose,
            model: self.cfg.model.clone(),
            messages: messages.to_vec(),
            temperature: self.cfg.temperature,
            max_tokens: self.cfg.max_tokens,
        };
        let response = self.provider.complete(&request)?;
        let seq = self.seq;
        self.seq += 1;
        Ok((seq, response))
    }

    fn opening(&self, user: String) -> Vec<Message> {
        vec![Message::system(self.cfg.templates.system.clone()), Message::user(user)]
    }

    pub fn decompose(&mut self, spec_text: &str) -> Result<Plan, SynthError> {
        if spec_text.trim().is_empty() {
            return Err(SynthError::EmptySpec);
        }
        let t = &self.cfg.templates;
        let mut messages = self.opening(render(&t.decompose, &[("spec", spec_text.trim())]));
        let mut attempt = 1;
        loop {
            let (seq, resp) = self.call(Purpose::Decompose, &messages)?;
            let parsed = parse_plan(&resp.text);
            let outcome = match &parsed {
                Ok(_) => ExchangeOutcome::Accepted,
                Err(e) => ExchangeOutcome::Unparsable { error: e.clone() },
            };
            self.log.push(Exchange { seq, purpose: Purpose::Decompose, attempt, messages: messages.clone(), response: resp.text.clone(), tokens: resp.tokens, outcome });
            match parsed {
                Ok(plan) => return Ok(plan),
                Err(message) if attempt >= PROPOSAL_ATTEMPTS => return Err(SynthError::UnparsablePlan { message }),
                Err(message) => {
                    messages.push(Message::assistant(resp.text));
                    messages.push(Message::user(render(&self.cfg.templates.plan_repair, &[("error", &message)])));
                    attempt += 1;
                }
            }
        }
    }

    /// Declares the step's new variables and computes its context. Returns
    /// the program with the new variables added.
    pub fn select_context(&mut self, pomdp: &FactoredPomdp, step: usize, step_text: &str) -> Result<(FactoredPomdp, StepContext), SynthError> {
        let variables = pomdp.variables.iter().map(format_variable).collect::<Vec<_>>().join("\n");
        let mut messages = self.opening(render(&self.cfg.templates.select_context, &[("step", step_text), ("variables", &variables)]));
        let mut attempt = 1;
        loop {
            let (seq, resp) = self.call(Purpose::SelectContext, &messages)?;
            let result = apply_proposal(pomdp, &resp.text);
            let outcome = match &result {
                Ok(_) => ExchangeOutcome::Accepted,
                Err(d) => ExchangeOutcome::Rejected { diagnostics: d.clone() },
            };
            self.log.push(Exchange { seq, purpose: Purpose::SelectContext, attempt, messages: messages.clone(), response: resp.text.clone(), tokens: resp.tokens, outcome });
            match result {
                Ok((next, new_variables, z)) => {
                    let retrieved_factors = next.scope_overlap_query(&z).expect("z is declared").into_iter().cloned().collect();
                    let ctx = StepContext {
                        step,
                        step_text: step_text.to_string(),
                        variables: z.iter().map(|id| next.variable(id).cloned().expect("z is declared")).collect(),
                        z,
                        new_variables,
                        retrieved_factors,
                        actions: next.actions.clone(),
                        score_id: next.score_id.clone(),
                    };
                    return Ok((next, ctx));
                }
                Err(diagnostics) if attempt >= PROPOSAL_ATTEMPTS => return Err(SynthError::InvalidVariableProposal { step, diagnostics }),
                Err(diagnostics) => {
                    messages.push(Message::assistant(resp.text));
                    messages.push(Message::user(render(&self.cfg.templates.repair, &[("diagnostics", &bullet_list(&diagnostics))])));
                    attempt += 1;
                }
            }
        }
    }

    /// The prompt for one generation call: step text, the scoped variable
    /// declarations and the retrieved factors of the matching kinds.
    pub fn generation_prompt(&self, purpose: Purpose, ctx: &StepContext) -> Vec<Message> {
        let t = &self.cfg.templates;
        let kinds = allowed_kinds(purpose);
        let variables = or_none(ctx.variables.iter().map(format_variable).collect::<Vec<_>>().join("\n"));
        let factors = or_none(
            ctx.retrieved_factors.iter().filter(|f| kinds.contains(&f.kind)).map(format_factor).collect::<Vec<_>>().join("\n"),
        );
        let actions = ctx.actions.join(", ");
        let (template, values): (&str, Vec<(&str, &str)>) = match purpose {
            Purpose::Controller => (&t.controller, vec![("actions", &actions)]),
            Purpose::Model => (&t.model, vec![("score", &ctx.score_id)]),
            Purpose::View => (&t.view, vec![]),
            Purpose::Decompose | Purpose::SelectContext => panic!("{purpose} is not a generation call"),
        };
        let mut values = values;
        values.extend([("step", ctx.step_text.as_str()), ("variables", &variables), ("factors", &factors)]);
        self.opening(render(template, &values))
    }

    fn request_patch(&mut self, purpose: Purpose, messages: Vec<Message>, attempt: u32) -> Result<PatchAttempt, SynthError> {
        let (seq, resp) = self.call(purpose, &messages)?;
        let parsed = parse_generated(purpose, &resp.text);
        Ok(PatchAttempt { purpose, attempt, seq, messages, response: resp.text, tokens: resp.tokens, parsed })
    }

    /// First reply for one generation call. The exchange is logged once
    /// [`Synthesizer::apply_with_repair`] has judged it.
    pub fn generate(&mut self, purpose: Purpose, ctx: &StepContext) -> Result<PatchAttempt, SynthError> {
        let messages = self.generation_prompt(purpose, ctx);
        self.request_patch(purpose, messages, 1)
    }

    pub fn gen_controller(&mut self, ctx: &StepContext) -> Result<PatchAttempt, SynthError> {
        self.generate(Purpose::Controller, ctx)
    }

    pub fn gen_model(&mut self, ctx: &StepContext) -> Result<PatchAttempt, SynthError> {
        self.generate(Purpose::Model, ctx)
    }

    pub fn gen_view(&mut self, ctx: &StepContext) -> Result<PatchAttempt, SynthError> {
        self.generate(Purpose::View, ctx)
    }

    /// Applies `first`; on failure reprompts with the diagnostics appended
    /// until a reply applies or `max_attempts` replies have been rejected.
    pub fn apply_with_repair(&mut self, pomdp: &FactoredPomdp, first: PatchAttempt, ctx: &StepContext) -> Result<(FactoredPomdp, Patch), SynthError> {
        let max = self.cfg.max_attempts;
        if max == 0 {
            return Err(SynthError::Config("max_attempts must be at least 1".into()));
        }
        let mut current = first;
        let mut failures = Vec::new();
        loop {
            let result = current
                .parsed
                .clone()
                .and_then(|patch| pomdp.apply_structural_edit(&patch).map(|m| (m, patch)).map_err(ir_diagnostics));
            let outcome = match &result {
                Ok(_) => ExchangeOutcome::Accepted,
                Err(d) => ExchangeOutcome::Rejected { diagnostics: d.clone() },
            };
            self.log.push(Exchange {
                seq: current.seq,
                purpose: current.purpose,
                attempt: current.attempt,
                messages: current.messages.clone(),
                response: current.response.clone(),
                tokens: current.tokens,
                outcome,
            });
            match result {
                Ok(done) => return Ok(done),
                Err(diags) => {
                    failures.push(diags.clone());
                    if current.attempt >= max {
                        return Err(SynthError::StepFailed { step: ctx.step, purpose: current.purpose, attempts: failures });
                    }
                    let mut messages = current.messages.clone();
                    messages.push(Message::assistant(current.response.clone()));
                    messages.push(Message::user(render(&self.cfg.templates.repair, &[("diagnostics", &bullet_list(&diags))])));
                    current = self.request_patch(current.purpose, messages, current.attempt + 1)?;
                }
            }
        }
    }

    /// One plan step. On failure the context is returned when it was
    /// selected, so the transcript can show it.
    #[allow(clippy::type_complexity, clippy::result_large_err)]
    fn run_step(&mut self, pomdp: &FactoredPomdp, step: usize, text: &str) -> Result<(FactoredPomdp, StepContext, PatchDoc), (Option<StepContext>, SynthError)> {
        let (mut current, ctx) = self.select_context(pomdp, step, text).map_err(|e| (None, e))?;
        let mut combined = Patch { new_variables: ctx.new_variables.clone(), factors: Vec::new() };
        for purpose in [Purpose::Controller, Purpose::Model, Purpose::View] {
            let attempt = self.generate(purpose, &ctx).map_err(|e| (Some(ctx.clone()), e))?;
            let (next, patch) = self.apply_with_repair(&current, attempt, &ctx).map_err(|e| (Some(ctx.clone()), e))?;
            combined.factors.extend(patch.factors);
            current = next;
        }
        Ok((current, ctx, patch_to_doc(&combined)))
    }

    fn build(&mut self, plan: &Plan, transcript: &mut Transcript) -> Result<FactoredPomdp, SynthError> {
        let mut m = initial_program(plan).map_err(|e| SynthError::UnparsablePlan { message: e.to_string() })?;
        for (i, text) in plan.steps.iter().enumerate() {
            let index = i + 1;
            let result = self.run_step(&m, index, text);
            let exchanges = self.take_log();
            match result {
                Ok((next, ctx, patch)) => {
                    transcript.steps.push(StepRecord {
                        index,
                        step_text: text.clone(),
                        context: Some(ctx.record()),
                        exchanges,
                        patch: Some(patch),
                        status: StepStatus::Completed,
                    });
                    m = next;
                }
                Err((ctx, e)) => {
                    transcript.steps.push(StepRecord {
                        index,
                        step_text: text.clone(),
                        context: ctx.map(|c| c.record()),
                        exchanges,
                        patch: None,
                        status: StepStatus::Failed,
                    });
                    return Err(e);
                }
            }
        }
        transcript.final_program = Some(format_program(&m));
        Ok(m)
    }

    fn plan_and_build(&mut self, plan: Result<Plan, SynthError>, transcript: &mut Transcript) -> Result<FactoredPomdp, SynthError> {
        let plan = plan?;
        transcript.plan = Some(plan.clone());
        self.build(&plan, transcript)
    }

    /// The whole pipeline. Failures carry the transcript recorded so far.
    pub fn synthesize(&mut self, spec_text: &str) -> Result<(FactoredPomdp, Transcript), SynthFailure> {
        let settings = self.cfg.settings();
        let fail = |error: SynthError, mut transcript: Transcript| {
            transcript.token_totals = transcript.recount_tokens();
            SynthFailure { error, transcript: Box::new(transcript) }
        };
        if self.cfg.plan_samples == 0 {
            return Err(fail(SynthError::Config("plan_samples must be at least 1".into()), Transcript::new(settings, spec_text)));
        }
        let mut plans = Vec::new();
        for _ in 0..self.cfg.plan_samples {
            let mut t = Transcript::new(settings.clone(), spec_text);
            let plan = self.decompose(spec_text);
            t.plan_exchanges = self.take_log();
            if matches!(plan, Err(SynthError::EmptySpec | SynthError::Provider(_))) {
                return Err(fail(plan.unwrap_err(), t));
            }
            plans.push((plan, t));
        }
        let mut runs = Vec::new();
        for (plan, mut t) in plans {
            let result = self.plan_and_build(plan, &mut t);
            if let Err(SynthError::Provider(_)) = result {
                return Err(fail(result.unwrap_err(), t));
            }
            runs.push((result, t));
        }
        // First run with the most completed steps, successful runs first.
        let rank = |(r, t): &(Result<FactoredPomdp, SynthError>, Transcript)| {
            (r.is_ok(), t.steps.iter().filter(|s| s.status == StepStatus::Completed).count())
        };
        let best = (0..runs.len()).fold(0, |best, i| if rank(&runs[i]) > rank(&runs[best]) { i } else { best });
        let (result, mut transcript) = runs.remove(best);
        transcript.alternatives = runs.into_iter().map(|(_, t)| t).collect();
        for alt in &mut transcript.alternatives {
            alt.token_totals = alt.recount_tokens();
        }
        match result {
            Ok(m) => {
                transcript.token_totals = transcript.recount_tokens();
                Ok((m, transcript))
            }
            Err(e) => Err(fail(e, transcript)),
        }
    }
}

/// Convenience wrapper over [`Synthesizer::synthesize`].
pub fn synthesize(spec_text: &str, provider: &dyn Provider, cfg: &SynthConfig) -> Result<(FactoredPomdp, Transcript), SynthFailure> {
    Synthesizer::new(provider, cfg).synthesize(spec_text)
}
