use std::path::PathBuf;

use clap::Args;

use crate::util::{fail, load_program, CmdResult, Exit};

#[derive(Args)]
pub struct CheckArgs {
    /// Programs to parse and validate.
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

pub fn run(args: CheckArgs) -> CmdResult {
    let mut failed = 0;
    for path in &args.files {
        match load_program(path) {
            Ok(p) => println!(
                "{}: ok ({} variables, {} factors, {} actions)",
                path.display(),
                p.variables.len(),
                p.factors.len(),
                p.actions.len()
            ),
            Err(f) if f.exit == Exit::Validation => failed += 1,
            Err(f) => return Err(f),
        }
    }
    if failed > 0 {
        Err(fail(Exit::Validation, format!("{failed} of {} program(s) failed validation", args.files.len())))
    } else {
        Ok(())
    }
}
