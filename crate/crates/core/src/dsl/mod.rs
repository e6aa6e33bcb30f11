//! The `.fsim` simulation language.

mod format;
pub mod lexer;
mod parser;
mod patch;
mod validate;

pub use format::{format_body, format_expr, format_factor, format_program, format_variable, quote};
pub use parser::{parse, parse_body, parse_domain, parse_init, Decl, FactorDecl, Program, VarDecl, KEYWORDS, MAX_DEPTH};
pub use patch::{parse_patch, patch_from_doc, patch_to_doc, patch_to_json, FactorSpec, PatchDoc, VariableSpec};
pub use validate::validate;

use crate::diag::Diagnostic;
use crate::ir::FactoredPomdp;

/// Parses and validates a source text.
pub fn load(src: &str) -> Result<FactoredPomdp, Vec<Diagnostic>> {
    validate(&parse(src)?)
}
