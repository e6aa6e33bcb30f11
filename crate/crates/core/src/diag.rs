//! Source spans and diagnostics shared by the parser, the validator and the
//! structural-edit checks.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Byte range into a source string.
///
/// Spans are carried on every AST node but never take part in structural
/// equality: two spans always compare equal, so programs that differ only in
/// layout are `==`. Compare `start`/`end` directly when the position matters.
#[derive(Clone, Copy, Debug, Default, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl std::hash::Hash for Span {
    fn hash<H: std::hash::Hasher>(&self, _state: &mut H) {}
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }

    /// 1-based line and column of `start` within `source`.
    pub fn line_col(&self, source: &str) -> (usize, usize) {
        let upto = &source[..self.start.min(source.len())];
        let line = upto.matches('\n').count() + 1;
        let col = upto.rfind('\n').map_or(upto.len(), |i| upto.len() - i - 1) + 1;
        (line, col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

/// Machine-readable diagnostic class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    Syntax,
    MissingDeclaration,
    DuplicateDeclaration,
    UndeclaredVariable,
    DuplicateId,
    ScopeViolation,
    UnknownTarget,
    NonNormalizedInit,
    InitOutOfDomain,
    InvalidDomain,
    ActionOutsideController,
    ViewWritesState,
    EmitOutsideView,
    InvalidRewardWrite,
    ScoreWriteOutsideReward,
    InvalidScore,
    InvalidMaxSteps,
    MissingNoop,
    UnknownAction,
    ReservedName,
    InvalidIndex,
    WrongFactorKind,
    UnknownFactor,
    InvalidPatch,
}

impl DiagCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiagCode::Syntax => "Syntax",
            DiagCode::MissingDeclaration => "MissingDeclaration",
            DiagCode::DuplicateDeclaration => "DuplicateDeclaration",
            DiagCode::UndeclaredVariable => "UndeclaredVariable",
            DiagCode::DuplicateId => "DuplicateId",
            DiagCode::ScopeViolation => "ScopeViolation",
            DiagCode::UnknownTarget => "UnknownTarget",
            DiagCode::NonNormalizedInit => "NonNormalizedInit",
            DiagCode::InitOutOfDomain => "InitOutOfDomain",
            DiagCode::InvalidDomain => "InvalidDomain",
            DiagCode::ActionOutsideController => "ActionOutsideController",
            DiagCode::ViewWritesState => "ViewWritesState",
            DiagCode::EmitOutsideView => "EmitOutsideView",
            DiagCode::InvalidRewardWrite => "InvalidRewardWrite",
            DiagCode::ScoreWriteOutsideReward => "ScoreWriteOutsideReward",
            DiagCode::InvalidScore => "InvalidScore",
            DiagCode::InvalidMaxSteps => "InvalidMaxSteps",
            DiagCode::MissingNoop => "MissingNoop",
            DiagCode::UnknownAction => "UnknownAction",
            DiagCode::ReservedName => "ReservedName",
            DiagCode::InvalidIndex => "InvalidIndex",
            DiagCode::WrongFactorKind => "WrongFactorKind",
            DiagCode::UnknownFactor => "UnknownFactor",
            DiagCode::InvalidPatch => "InvalidPatch",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    pub message: String,
    pub span: Span,
    /// Factor the diagnostic belongs to, when there is one. Patch bodies are
    /// parsed separately, so their spans are relative to that factor's body.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<String>,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, code, message: message.into(), span, factor: None }
    }

    pub fn in_factor(mut self, id: &str) -> Self {
        self.factor = Some(id.to_string());
        self
    }

    /// `line:col: Code: message` against the source the span points into.
    pub fn render(&self, source: &str) -> String {
        let (line, col) = self.span.line_col(source);
        format!("{line}:{col}: {}: {}", self.code, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}..{}", self.code, self.span.start, self.span.end)?;
        if let Some(factor) = &self.factor {
            write!(f, " (factor {factor})")?;
        }
        write!(f, ": {}", self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(|d| d.severity == Severity::Error)
}
