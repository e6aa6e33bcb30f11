use std::fmt;
use std::path::Path;

use anyhow::Context;
use fsim_core::dsl;
use fsim_core::ir::FactoredPomdp;

/// Process exit statuses by failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Validation = 2,
    Synthesis = 3,
    TestFailures = 4,
    Provider = 5,
}

pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {:#}", self.exit, self.error)
    }
}

pub type CmdResult = Result<(), Failure>;

pub trait OrExit<T> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, exit: Exit) -> Result<T, Failure> {
        self.map_err(|e| Failure { exit, error: e.into() })
    }
}

pub fn fail(exit: Exit, message: impl fmt::Display) -> Failure {
    Failure { exit, error: anyhow::anyhow!("{message}") }
}

pub fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).or_exit(Exit::Usage)
}

pub fn write(path: &Path, contents: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).or_exit(Exit::Usage)?;
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display())).or_exit(Exit::Usage)
}

/// Parses and validates a program, printing diagnostics to stderr.
pub fn load_program(path: &Path) -> Result<FactoredPomdp, Failure> {
    let src = read(path)?;
    dsl::load(&src).map_err(|diags| {
        for d in &diags {
            eprintln!("{}:{}", path.display(), d.render(&src));
        }
        fail(Exit::Validation, format!("{}: {} diagnostic(s)", path.display(), diags.len()))
    })
}
