//! Prompt templates for the skill scenes and the neutral prompt corpus used
//! for bias evaluation.
//!
//! Both tables live in `data/` as JSON and are embedded at compile time;
//! [`TemplateTable::from_json`] and [`NeutralWordList::from_json`] accept
//! replacements so corrections do not need a code change.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CountValue, ObjectClass, RelationKind, SkillKind};

const SKILL_TEMPLATES_JSON: &str = include_str!("../data/skill_templates.json");
const NEUTRAL_PROMPTS_JSON: &str = include_str!("../data/neutral_prompts.json");

pub const OBJ_A: &str = "<objA>";
pub const OBJ_B: &str = "<objB>";
pub const NUM: &str = "<N>";
pub const NUM_EN: &str = "<N_EN>";
pub const REL: &str = "<rel>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillTemplate {
    pub skill: SkillKind,
    pub template_id: usize,
    pub pattern: String,
}

impl SkillTemplate {
    fn check_placeholders(&self) -> Result<()> {
        let has = |p: &str| self.pattern.contains(p);
        let ok = match self.skill {
            SkillKind::Object => has(OBJ_A) && !has(OBJ_B) && !has(NUM) && !has(NUM_EN) && !has(REL),
            SkillKind::Count => has(OBJ_A) && (has(NUM) ^ has(NUM_EN)) && !has(OBJ_B) && !has(REL),
            SkillKind::Spatial => has(OBJ_A) && has(OBJ_B) && has(REL) && !has(NUM) && !has(NUM_EN),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "template",
                format!("{} template {:?} has the wrong placeholders", self.skill, self.pattern),
            ))
        }
    }
}

/// Keyword values for template placeholders.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Keywords {
    pub obj_a: Option<ObjectClass>,
    pub obj_b: Option<ObjectClass>,
    pub count: Option<CountValue>,
    pub relation: Option<RelationKind>,
}

impl Keywords {
    pub fn object(class: ObjectClass) -> Self {
        Keywords {
            obj_a: Some(class),
            ..Default::default()
        }
    }

    pub fn count(class: ObjectClass, count: CountValue) -> Self {
        Keywords {
            obj_a: Some(class),
            count: Some(count),
            ..Default::default()
        }
    }

    pub fn spatial(obj_a: ObjectClass, obj_b: ObjectClass, relation: RelationKind) -> Self {
        Keywords {
            obj_a: Some(obj_a),
            obj_b: Some(obj_b),
            relation: Some(relation),
            count: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    object: Vec<String>,
    count: Vec<String>,
    spatial: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct TemplateTable {
    object: Vec<SkillTemplate>,
    count: Vec<SkillTemplate>,
    spatial: Vec<SkillTemplate>,
}

impl TemplateTable {
    pub fn from_json(json: &str) -> Result<Self> {
        let file: TemplateFile =
            serde_json::from_str(json).map_err(|e| Error::invalid("template table", e.to_string()))?;
        let build = |skill, patterns: Vec<String>| -> Result<Vec<SkillTemplate>> {
            patterns
                .into_iter()
                .enumerate()
                .map(|(template_id, pattern)| {
                    let t = SkillTemplate {
                        skill,
                        template_id,
                        pattern,
                    };
                    t.check_placeholders()?;
                    Ok(t)
                })
                .collect()
        };
        Ok(TemplateTable {
            object: build(SkillKind::Object, file.object)?,
            count: build(SkillKind::Count, file.count)?,
            spatial: build(SkillKind::Spatial, file.spatial)?,
        })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static TemplateTable {
        static TABLE: OnceLock<TemplateTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            TemplateTable::from_json(SKILL_TEMPLATES_JSON).expect("embedded template table is valid")
        })
    }

    pub fn templates(&self, skill: SkillKind) -> &[SkillTemplate] {
        match skill {
            SkillKind::Object => &self.object,
            SkillKind::Count => &self.count,
            SkillKind::Spatial => &self.spatial,
        }
    }
}

pub fn skill_templates(skill: SkillKind) -> &'static [SkillTemplate] {
    TemplateTable::builtin().templates(skill)
}

pub fn skill_template(skill: SkillKind, template_id: usize) -> Option<&'static SkillTemplate> {
    skill_templates(skill).get(template_id)
}

/// Noun form of `class` for a count of `n`.
pub fn pluralize(class: ObjectClass, n: u32) -> String {
    if n == 1 {
        return class.name().to_string();
    }
    match class {
        ObjectClass::Person => "people".to_string(),
        ObjectClass::Bench => "benches".to_string(),
        other => format!("{}s", other.name()),
    }
}

/// Literal placeholder substitution. Articles in the template are left as
/// written ("a airplane"); `<objA>` is pluralized when a count above one is
/// given.
pub fn expand_skill_prompt(template: &SkillTemplate, keywords: &Keywords) -> Result<String> {
    let pattern = template.pattern.as_str();
    let need = |placeholder: &'static str, present: bool| -> Result<()> {
        if pattern.contains(placeholder) && !present {
            Err(Error::MissingPlaceholder(placeholder))
        } else {
            Ok(())
        }
    };
    need(OBJ_A, keywords.obj_a.is_some())?;
    need(OBJ_B, keywords.obj_b.is_some())?;
    need(NUM, keywords.count.is_some())?;
    need(NUM_EN, keywords.count.is_some())?;
    need(REL, keywords.relation.is_some())?;

    let mut out = pattern.to_string();
    if let Some(a) = keywords.obj_a {
        let n = keywords.count.map_or(1, CountValue::value);
        out = out.replace(OBJ_A, &pluralize(a, n));
    }
    if let Some(b) = keywords.obj_b {
        out = out.replace(OBJ_B, b.name());
    }
    if let Some(c) = keywords.count {
        out = out
            .replace(NUM_EN, c.english_word())
            .replace(NUM, &c.value().to_string());
    }
    if let Some(r) = keywords.relation {
        out = out.replace(REL, r.surface());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasCategory {
    Profession,
    Political,
    Object,
    Other,
}

impl BiasCategory {
    pub const ALL: [BiasCategory; 4] = [
        BiasCategory::Profession,
        BiasCategory::Political,
        BiasCategory::Object,
        BiasCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BiasCategory::Profession => "profession",
            BiasCategory::Political => "political",
            BiasCategory::Object => "object",
            BiasCategory::Other => "other",
        }
    }
}

impl fmt::Display for BiasCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiasPromptSpec {
    pub category: BiasCategory,
    pub word: String,
    pub prompt: String,
}

impl BiasPromptSpec {
    /// Stable identifier, `<category>/<word>`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.category, self.word)
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CategoryWords {
    category: BiasCategory,
    template: String,
    words: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct NeutralWordList {
    categories: Vec<CategoryWords>,
}

impl NeutralWordList {
    pub fn from_json(json: &str) -> Result<Self> {
        let list: NeutralWordList =
            serde_json::from_str(json).map_err(|e| Error::invalid("neutral word list", e.to_string()))?;
        for c in &list.categories {
            if !c.template.contains("a/an [X]") {
                return Err(Error::invalid(
                    "neutral word list",
                    format!("template {:?} lacks \"a/an [X]\"", c.template),
                ));
            }
        }
        Ok(list)
    }

    pub fn builtin() -> &'static NeutralWordList {
        static LIST: OnceLock<NeutralWordList> = OnceLock::new();
        LIST.get_or_init(|| NeutralWordList::from_json(NEUTRAL_PROMPTS_JSON).expect("embedded word list is valid"))
    }

    pub fn corpus(&self) -> Vec<BiasPromptSpec> {
        self.categories
            .iter()
            .flat_map(|c| {
                c.words.iter().map(move |word| BiasPromptSpec {
                    category: c.category,
                    word: word.clone(),
                    prompt: c
                        .template
                        .replace("a/an [X]", &format!("{} {word}", indefinite_article(word))),
                })
            })
            .collect()
    }
}

/// "an" before a leading vowel letter, "a" otherwise.
pub fn indefinite_article(phrase: &str) -> &'static str {
    match phrase.trim_start().chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// The 145 gender/skin-tone neutral prompts.
pub fn neutral_prompt_corpus() -> Vec<BiasPromptSpec> {
    NeutralWordList::builtin().corpus()
}
