//! Prompt templates with `{{name}}` placeholders.
//!
//! The built-in set is compiled in; a directory holding the same file names
//! can replace it at run time.

use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("template `{template}` uses unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: &'static str },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Templates {
    pub version: String,
    pub system: String,
    pub decompose: String,
    pub plan_repair: String,
    pub select_context: String,
    pub controller: String,
    pub model: String,
    pub view: String,
    pub repair: String,
}

/// (file stem, placeholders it may use)
const SCHEMA: [(&str, &[&str]); 8] = [
    ("system", &[]),
    ("decompose", &["spec"]),
    ("plan_repair", &["error"]),
    ("select_context", &["step", "variables"]),
    ("controller", &["step", "actions", "variables", "factors"]),
    ("model", &["step", "score", "variables", "factors"]),
    ("view", &["step", "variables", "factors"]),
    ("repair", &["diagnostics"]),
];

impl Templates {
    pub fn builtin() -> Self {
        Self {
            version: "v1".into(),
            system: include_str!("../templates/v1/system.txt").into(),
            decompose: include_str!("../templates/v1/decompose.txt").into(),
            plan_repair: include_str!("../templates/v1/plan_repair.txt").into(),
            select_context: include_str!("../templates/v1/select_context.txt").into(),
            controller: include_str!("../templates/v1/controller.txt").into(),
            model: include_str!("../templates/v1/model.txt").into(),
            view: include_str!("../templates/v1/view.txt").into(),
            repair: include_str!("../templates/v1/repair.txt").into(),
        }
    }

    /// Loads `<stem>.txt` for every template from `dir`. The directory name
    /// becomes the version recorded in transcripts.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let read = |stem: &str| {
            let path = dir.join(format!("{stem}.txt"));
            std::fs::read_to_string(&path).map_err(|source| TemplateError::Io { path: path.display().to_string(), source })
        };
        let t = Self {
            version: dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| dir.display().to_string()),
            system: read("system")?,
            decompose: read("decompose")?,
            plan_repair: read("plan_repair")?,
            select_context: read("select_context")?,
            controller: read("controller")?,
            model: read("model")?,
            view: read("view")?,
            repair: read("repair")?,
        };
        t.check()?;
        Ok(t)
    }

    fn get(&self, stem: &str) -> &str {
        match stem {
            "system" => &self.system,
            "decompose" => &self.decompose,
            "plan_repair" => &self.plan_repair,
            "select_context" => &self.select_context,
            "controller" => &self.controller,
            "model" => &self.model,
            "view" => &self.view,
            "repair" => &self.repair,
            _ => unreachable!("template stems come from SCHEMA"),
        }
    }

    /// Every placeholder used is one the pipeline fills.
    pub fn check(&self) -> Result<(), TemplateError> {
        for (stem, allowed) in SCHEMA {
            for name in placeholders(self.get(stem), stem)? {
                if !allowed.contains(&name.as_str()) {
                    return Err(TemplateError::UnknownPlaceholder { template: stem, name });
                }
            }
        }
        Ok(())
    }
}

fn placeholders(template: &str, stem: &'static str) -> Result<Vec<String>, TemplateError> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or(TemplateError::Unterminated { template: stem })?;
        out.push(after[..close].trim().to_string());
        rest = &after[close + 2..];
    }
    Ok(out)
}

/// Substitutes placeholders in one pass; substituted text is never rescanned.
/// Placeholders without a value are left as written, which [`Templates::check`]
/// rules out for loaded sets.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = after[..close].trim();
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[open..open + 4 + close]),
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
