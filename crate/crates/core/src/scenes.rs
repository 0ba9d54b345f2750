//! Scene configuration generation.
//!
//! Each skill has a keyword space (classes, counts, class pairs and
//! relations) that is crossed with the skill's templates. A split contains
//! every combination exactly `multiplicity` times, so object, attribute and
//! relation marginals are uniform by construction. Per-scene render
//! parameters are drawn from ChaCha8 seeded with [`GenerationSpec::seed`],
//! which gives identical output on every platform.

use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::model::{
    CountValue, ObjectClass, ObjectSpec, RelationKind, SceneConfig, SkillKind, Split, MAX_BACKGROUND_ID,
    SCALE_RANGE,
};
use crate::prompts::{self, Keywords};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub skill: SkillKind,
    pub split: Split,
    pub seed: u64,
    pub multiplicity: u32,
}

impl GenerationSpec {
    /// Spec with the standard multiplicity for `(skill, split)`.
    pub fn standard(skill: SkillKind, split: Split, seed: u64) -> Self {
        GenerationSpec {
            skill,
            split,
            seed,
            multiplicity: default_multiplicity(skill, split),
        }
    }
}

/// Copies per combination that yield the published split sizes:
/// 23,250 / 21,600 / 13,500 train and 2,325 / 2,160 / 2,700 test.
pub fn default_multiplicity(skill: SkillKind, split: Split) -> u32 {
    match (skill, split) {
        (SkillKind::Object, Split::Train) => 50,
        (SkillKind::Object, Split::Test) => 5,
        (SkillKind::Count, Split::Train) => 10,
        (SkillKind::Count, Split::Test) => 1,
        (SkillKind::Spatial, Split::Train) => 5,
        (SkillKind::Spatial, Split::Test) => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Combination {
    pub keywords: Keywords,
    pub template_id: usize,
}

/// Keyword x template product for `skill`, in canonical order (keywords
/// outermost, template innermost).
pub fn enumerate_combinations(skill: SkillKind) -> Vec<Combination> {
    let keyword_space: Vec<Keywords> = match skill {
        SkillKind::Object => ObjectClass::ALL.into_iter().map(Keywords::object).collect(),
        SkillKind::Count => ObjectClass::ALL
            .into_iter()
            .flat_map(|c| CountValue::all().map(move |n| Keywords::count(c, n)))
            .collect(),
        SkillKind::Spatial => ObjectClass::ALL
            .into_iter()
            .flat_map(|a| {
                ObjectClass::ALL.into_iter().flat_map(move |b| {
                    RelationKind::ALL
                        .into_iter()
                        .map(move |r| Keywords::spatial(a, b, r))
                })
            })
            .collect(),
    };
    let n_templates = prompts::skill_templates(skill).len();
    keyword_space
        .into_iter()
        .flat_map(|keywords| {
            (0..n_templates).map(move |template_id| Combination {
                keywords,
                template_id,
            })
        })
        .collect()
}

fn sample_object(rng: &mut ChaCha8Rng, class: ObjectClass, count: u32) -> ObjectSpec {
    ObjectSpec {
        class,
        count,
        yaw_radians: Some(rng.random_range(0.0..=TAU)),
        scale: Some(rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1)),
        position: None,
    }
}

pub fn generate_scenes(spec: &GenerationSpec) -> Result<Vec<SceneConfig>> {
    if spec.multiplicity == 0 {
        return Err(Error::invalid("multiplicity", "must be at least 1"));
    }
    let combos = enumerate_combinations(spec.skill);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut scenes = Vec::with_capacity(combos.len() * spec.multiplicity as usize);

    for combo in &combos {
        let template = prompts::skill_template(spec.skill, combo.template_id)
            .expect("combination template ids come from the table");
        let prompt = prompts::expand_skill_prompt(template, &combo.keywords)?;
        let kw = combo.keywords;
        let obj_a = kw.obj_a.expect("every skill has objA");

        for _ in 0..spec.multiplicity {
            let objects = match spec.skill {
                SkillKind::Object => vec![sample_object(&mut rng, obj_a, 1)],
                SkillKind::Count => {
                    let n = kw.count.expect("count keywords carry N").value();
                    vec![sample_object(&mut rng, obj_a, n)]
                }
                SkillKind::Spatial => {
                    let obj_b = kw.obj_b.expect("spatial keywords carry objB");
                    vec![sample_object(&mut rng, obj_a, 1), sample_object(&mut rng, obj_b, 1)]
                }
            };
            let background_id = Some(rng.random_range(0..=MAX_BACKGROUND_ID));
            scenes.push(SceneConfig {
                id: format!("{}_{}_{:05}", spec.skill, spec.split, scenes.len()),
                skill: spec.skill,
                split: spec.split,
                objects,
                relation: kw.relation,
                background_id,
                template_id: combo.template_id,
                prompt: prompt.clone(),
            });
        }
    }
    Ok(scenes)
}

/// Writes the renderer's JSONL input, one scene per line.
pub fn export_simulator_batch(scenes: &[SceneConfig], path: &Path) -> Result<()> {
    jsonl::write(path, scenes)
}
