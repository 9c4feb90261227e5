//! Prompt builders for every strategy. Template text lives in `prompts/*.txt`
//! so wording changes show up as reviewable diffs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const STRUCTURED_SYSTEM: &str = include_str!("../prompts/structured_system.txt");
const STRUCTURED_USER: &str = include_str!("../prompts/structured_user.txt");
const INSTRUCTIONAL: &str = include_str!("../prompts/instructional.txt");
const STORY: &str = include_str!("../prompts/story.txt");
const BBOX_GEMINI: &str = include_str!("../prompts/bbox_gemini.txt");
const BBOX_OPENAI_STYLE: &str = include_str!("../prompts/bbox_openai_style.txt");
const GDINO: &str = include_str!("../prompts/gdino.txt");
const GDINO_NO_ITEM: &str = include_str!("../prompts/gdino_no_item.txt");
const KOSMOS: &str = include_str!("../prompts/kosmos.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStrategy {
    Structured,
    Instructional,
    Story,
    BboxGemini,
    BboxOpenaiStyle,
    Gdino,
    GdinoNoItem,
    Kosmos,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 8] = [
        PromptStrategy::Structured,
        PromptStrategy::Instructional,
        PromptStrategy::Story,
        PromptStrategy::BboxGemini,
        PromptStrategy::BboxOpenaiStyle,
        PromptStrategy::Gdino,
        PromptStrategy::GdinoNoItem,
        PromptStrategy::Kosmos,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptStrategy::Structured => "structured",
            PromptStrategy::Instructional => "instructional",
            PromptStrategy::Story => "story",
            PromptStrategy::BboxGemini => "bbox_gemini",
            PromptStrategy::BboxOpenaiStyle => "bbox_openai_style",
            PromptStrategy::Gdino => "gdino",
            PromptStrategy::GdinoNoItem => "gdino_no_item",
            PromptStrategy::Kosmos => "kosmos",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown prompt strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BboxFlavor {
    Gemini,
    OpenaiStyle,
}

impl FromStr for BboxFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gemini" => Ok(BboxFlavor::Gemini),
            "openai_style" | "openai-style" => Ok(BboxFlavor::OpenaiStyle),
            other => Err(Error::InvalidInput(format!(
                "unknown bbox flavor `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub strategy: PromptStrategy,
    pub system_text: Option<String>,
    pub user_text: String,
}

/// The structured system prompt; identical for every item and scene.
pub fn structured_system_prompt() -> &'static str {
    STRUCTURED_SYSTEM
}

/// Substitutes `{name}` placeholders in one pass, so inserted values are
/// never re-expanded.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = tail.find('}').and_then(|close| {
            let name = &tail[1..close];
            vars.iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &tail[close + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn clean_item(item: &str) -> Result<&str> {
    let trimmed = item.trim();
    if trimmed.is_empty() {
        return Err(Error::InvalidInput("item name is empty".to_string()));
    }
    Ok(trimmed)
}

fn bullet_lines(descriptions: &[String]) -> Result<String> {
    if descriptions.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(descriptions
        .iter()
        .map(|d| format!("- {d}"))
        .collect::<Vec<_>>()
        .join("\n"))
}

pub fn build_structured(item: &str, descriptions: &[String]) -> Result<PromptBundle> {
    let item = clean_item(item)?;
    let containers = bullet_lines(descriptions)?;
    Ok(PromptBundle {
        strategy: PromptStrategy::Structured,
        system_text: Some(STRUCTURED_SYSTEM.to_string()),
        user_text: render(
            STRUCTURED_USER,
            &[("item", item), ("containers", &containers)],
        ),
    })
}

pub fn build_instructional(items: &[String], descriptions: &[String]) -> Result<PromptBundle> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no items given".to_string()));
    }
    let items = items
        .iter()
        .map(|i| clean_item(i))
        .collect::<Result<Vec<_>>>()?
        .join(", ");
    let containers = bullet_lines(descriptions)?;
    Ok(PromptBundle {
        strategy: PromptStrategy::Instructional,
        system_text: None,
        user_text: render(
            INSTRUCTIONAL,
            &[("containers", &containers), ("items", &items)],
        ),
    })
}

pub fn build_story(item: &str, descriptions: &[String]) -> Result<PromptBundle> {
    let item = clean_item(item)?.to_lowercase();
    let containers = bullet_lines(descriptions)?;
    Ok(PromptBundle {
        strategy: PromptStrategy::Story,
        system_text: None,
        user_text: render(STORY, &[("item", &item), ("containers", &containers)]),
    })
}

pub fn build_bbox_prompt(item: &str, flavor: BboxFlavor) -> Result<PromptBundle> {
    let item = clean_item(item)?;
    let (strategy, template) = match flavor {
        BboxFlavor::Gemini => (PromptStrategy::BboxGemini, BBOX_GEMINI),
        BboxFlavor::OpenaiStyle => (PromptStrategy::BboxOpenaiStyle, BBOX_OPENAI_STYLE),
    };
    Ok(PromptBundle {
        strategy,
        system_text: None,
        user_text: render(template, &[("item", item)]),
    })
}

/// Detector text prompt; `None` gives the item-free variant used for bulk
/// container detection.
pub fn build_gdino_prompt(item: Option<&str>) -> Result<String> {
    match item {
        Some(item) => Ok(render(GDINO, &[("item", clean_item(item)?)])),
        None => Ok(GDINO_NO_ITEM.to_string()),
    }
}

pub fn build_kosmos_prompt(item: &str) -> Result<String> {
    Ok(render(KOSMOS, &[("item", clean_item(item)?)]))
}

/// Builds the prompt for any strategy. `descriptions` is ignored by the
/// image-only strategies.
pub fn build_prompt(
    strategy: PromptStrategy,
    item: &str,
    descriptions: &[String],
) -> Result<PromptBundle> {
    let text_only = |user_text: String| PromptBundle {
        strategy,
        system_text: None,
        user_text,
    };
    match strategy {
        PromptStrategy::Structured => build_structured(item, descriptions),
        PromptStrategy::Instructional => build_instructional(&[item.to_string()], descriptions),
        PromptStrategy::Story => build_story(item, descriptions),
        PromptStrategy::BboxGemini => build_bbox_prompt(item, BboxFlavor::Gemini),
        PromptStrategy::BboxOpenaiStyle => build_bbox_prompt(item, BboxFlavor::OpenaiStyle),
        PromptStrategy::Gdino => build_gdino_prompt(Some(item)).map(text_only),
        PromptStrategy::GdinoNoItem => build_gdino_prompt(None).map(text_only),
        PromptStrategy::Kosmos => build_kosmos_prompt(item).map(text_only),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn descs() -> Vec<String> {
        vec![
            "Container 1: drawer.".into(),
            "Container 2: cabinet door.".into(),
        ]
    }

    #[test]
    fn render_is_single_pass() {
        assert_eq!(render("a {x} b", &[("x", "{x}")]), "a {x} b");
        assert_eq!(render("{unknown} {x}", &[("x", "1")]), "{unknown} 1");
        assert_eq!(render("{", &[]), "{");
    }

    #[test]
    fn structured_trims_item() {
        let b = build_structured("  Fork \n", &descs()).unwrap();
        assert!(b
            .user_text
            .starts_with("Item: Fork\nContainers:\n- Container 1"));
        assert!(b.system_text.as_deref().is_some_and(|s| !s.is_empty()));
        assert!(matches!(
            build_structured("Fork", &[]),
            Err(Error::EmptyScene)
        ));
    }

    #[test]
    fn instructional_errors() {
        assert!(build_instructional(&[], &descs()).is_err());
        assert!(build_instructional(&["Mug".into()], &[]).is_err());
    }

    #[test]
    fn story_lowercases() {
        let b = build_story("Mug", &descs()).unwrap();
        assert!(b.user_text.contains("searching for a mug, scanning"));
        assert!(build_story("Mug", &[]).is_err());
    }

    #[test]
    fn detector_prompts() {
        assert_eq!(
            build_gdino_prompt(Some("spoon")).unwrap(),
            "drawer for spoon . cabinet door for spoon"
        );
        assert_eq!(build_gdino_prompt(None).unwrap(), "drawer . cabinet door");
        assert_eq!(
            build_gdino_prompt(Some("Cutting Board")).unwrap(),
            "drawer for Cutting Board . cabinet door for Cutting Board"
        );
        assert!(build_kosmos_prompt(" ").is_err());
        assert!("laser".parse::<BboxFlavor>().is_err());
    }

    #[test]
    fn gdino_bundles_have_no_system_text() {
        for s in [PromptStrategy::Gdino, PromptStrategy::GdinoNoItem] {
            assert!(build_prompt(s, "mug", &[]).unwrap().system_text.is_none());
        }
    }
}
