use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Instruction sentence every template must contain verbatim.
pub const SINGLE_SENTENCE_INSTRUCTION: &str = "Output exactly one sentence.";
/// Markers of the three prompting principles.
pub const PRINCIPLES: [&str; 3] = ["Anchor fidelity", "Minimal additions", "Single sentence"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Naive,
    Cot,
    Rag,
    CotRag,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Naive, Mode::Cot, Mode::Rag, Mode::CotRag];

    pub fn uses_references(self) -> bool {
        matches!(self, Mode::Rag | Mode::CotRag)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Naive => "naive",
            Mode::Cot => "cot",
            Mode::Rag => "rag",
            Mode::CotRag => "cot_rag",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s || (s == "cot-rag" && *m == Mode::CotRag))
            .ok_or_else(|| validation(format!("unknown mode {s:?} (naive, cot, rag, cot_rag)")))
    }
}

/// A prompt template. The first line may be `#id <name>`; the body uses the
/// `{anchors}` and `{references}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub id: String,
    pub body: String,
}

impl Template {
    pub fn parse(text: &str, fallback_id: &str) -> Result<Self> {
        let (id, body) = match text.strip_prefix("#id ") {
            Some(rest) => {
                let (first, body) = rest.split_once('\n').unwrap_or((rest, ""));
                (first.trim().to_string(), body.to_string())
            }
            None => (fallback_id.to_string(), text.to_string()),
        };
        if !body.contains("{anchors}") {
            return Err(validation(format!("template {id} lacks the {{anchors}} placeholder")));
        }
        if !body.contains(SINGLE_SENTENCE_INSTRUCTION) {
            return Err(validation(format!("template {id} lacks the single-sentence instruction")));
        }
        Ok(Template { id, body })
    }

    pub fn builtin(mode: Mode) -> Template {
        let text = match mode {
            Mode::Naive => include_str!("../../templates/naive.txt"),
            Mode::Cot => include_str!("../../templates/cot.txt"),
            Mode::Rag => include_str!("../../templates/rag.txt"),
            Mode::CotRag => include_str!("../../templates/cot_rag.txt"),
        };
        Template::parse(text, mode.as_str()).expect("built-in templates are valid")
    }

    /// `<dir>/<mode>.txt`, falling back to the built-in template.
    pub fn load(dir: Option<&Path>, mode: Mode) -> Result<Template> {
        let Some(dir) = dir else {
            return Ok(Template::builtin(mode));
        };
        let path = dir.join(format!("{}.txt", mode.as_str()));
        if !path.exists() {
            return Ok(Template::builtin(mode));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Template::parse(&text, mode.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: Mode,
    pub anchors: Vec<String>,
    pub references: Vec<String>,
    pub template_id: String,
}

pub fn build_prompt(spec: &PromptSpec, template: &Template) -> Result<String> {
    if spec.anchors.is_empty() {
        return Err(validation("no anchors to build a prompt from"));
    }
    if !spec.mode.uses_references() && !spec.references.is_empty() {
        return Err(validation(format!("mode {} takes no references", spec.mode)));
    }
    if spec.mode.uses_references() && !template.body.contains("{references}") {
        return Err(validation(format!(
            "template {} lacks the {{references}} placeholder required by {}",
            template.id, spec.mode
        )));
    }
    let references = if spec.references.is_empty() {
        "(none)".to_string()
    } else {
        spec.references
            .iter()
            .enumerate()
            .map(|(i, r)| format!("[{}] {}", i + 1, r))
            .collect::<Vec<_>>()
            .join("\n")
    };
    // references first so anchor text cannot inject a placeholder
    Ok(template
        .body
        .replace("{references}", &references)
        .replace("{anchors}", &spec.anchors.join(", ")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: Mode, refs: &[&str]) -> PromptSpec {
        PromptSpec {
            mode,
            anchors: vec!["win".into(), "medal".into(), "president".into()],
            references: refs.iter().map(|s| s.to_string()).collect(),
            template_id: Template::builtin(mode).id,
        }
    }

    #[test]
    fn anchors_listed_in_order() {
        let p = build_prompt(&spec(Mode::Naive, &[]), &Template::builtin(Mode::Naive)).unwrap();
        let at: Vec<usize> = ["win", "medal", "president"].iter().map(|a| p.find(a).unwrap()).collect();
        assert!(at.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn every_mode_has_instruction_and_principles() {
        for mode in Mode::ALL {
            let refs: &[&str] = if mode.uses_references() { &["A b.", "C d."] } else { &[] };
            let t = Template::builtin(mode);
            assert_eq!(t.id, format!("{mode}-v1"));
            let p = build_prompt(&spec(mode, refs), &t).unwrap();
            assert!(p.contains(SINGLE_SENTENCE_INSTRUCTION));
            for pr in PRINCIPLES {
                assert!(p.contains(pr), "{mode} lacks {pr}");
            }
            assert!(!p.contains("{anchors}") && !p.contains("{references}"));
        }
    }

    #[test]
    fn cot_rag_numbers_references_and_plans() {
        let p = build_prompt(
            &spec(Mode::CotRag, &["First.", "Second.", "Third."]),
            &Template::builtin(Mode::CotRag),
        )
        .unwrap();
        for line in ["[1] First.", "[2] Second.", "[3] Third."] {
            assert!(p.contains(line));
        }
        assert!(p.contains("compatibility") && p.contains("Organize the keywords"));
        let cot = build_prompt(&spec(Mode::Cot, &[]), &Template::builtin(Mode::Cot)).unwrap();
        assert!(cot.contains("Hypothesize the relations"));
    }

    #[test]
    fn mode_reference_mismatch() {
        assert!(build_prompt(&spec(Mode::Naive, &["x."]), &Template::builtin(Mode::Naive)).is_err());
        let empty = PromptSpec { anchors: vec![], ..spec(Mode::Naive, &[]) };
        assert!(build_prompt(&empty, &Template::builtin(Mode::Naive)).is_err());
        assert_eq!("cot_rag".parse::<Mode>().unwrap(), Mode::CotRag);
        assert!("beam".parse::<Mode>().is_err());
    }
}
