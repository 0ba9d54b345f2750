//! Detection-based skill accuracy for object recognition, counting and
//! spatial relations.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest;
use crate::model::{
    BBox, CountMode, Detection, DetectionRecord, ObjectClass, RelationKind, SceneConfig, ScorerConfig,
    SkillKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Pass,
    ClassAbsent,
    BelowThreshold,
    UnderCount,
    OverCount,
    MissingObject,
    WrongRelation,
    AxisMismatch,
    AmbiguousDirection,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::Pass => "pass",
            Reason::ClassAbsent => "class absent",
            Reason::BelowThreshold => "below threshold",
            Reason::UnderCount => "under-count",
            Reason::OverCount => "over-count",
            Reason::MissingObject => "missing object",
            Reason::WrongRelation => "wrong relation",
            Reason::AxisMismatch => "axis mismatch",
            Reason::AmbiguousDirection => "ambiguous direction",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outcome {
    pub passed: bool,
    pub reason: Reason,
}

impl Outcome {
    fn pass() -> Self {
        Outcome {
            passed: true,
            reason: Reason::Pass,
        }
    }

    fn fail(reason: Reason) -> Self {
        Outcome { passed: false, reason }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneResult {
    pub scene_id: String,
    pub image_id: String,
    pub passed: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillScoreReport {
    pub skill: SkillKind,
    pub n_images: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub threshold_used: f64,
    pub count_mode: CountMode,
    /// Scenes of this skill that had no detection record.
    pub unscored_scene_ids: Vec<String>,
    pub per_scene: Vec<SceneResult>,
}

fn expect_skill(scene: &SceneConfig, skill: SkillKind) -> Result<()> {
    if scene.skill != skill {
        return Err(Error::SkillMismatch {
            scene_id: scene.id.clone(),
            expected: skill,
            found: scene.skill,
        });
    }
    Ok(())
}

fn target(scene: &SceneConfig, i: usize) -> Result<ObjectClass> {
    scene
        .objects
        .get(i)
        .map(|o| o.class)
        .ok_or_else(|| Error::invalid("scene", format!("{} is missing object {i}", scene.id)))
}

fn above<'a>(
    rec: &'a DetectionRecord,
    class: ObjectClass,
    threshold: f64,
) -> impl Iterator<Item = &'a Detection> + 'a {
    rec.detections
        .iter()
        .filter(move |d| d.class() == Some(class) && d.confidence > threshold)
}

fn any_of_class(rec: &DetectionRecord, class: ObjectClass) -> bool {
    rec.detections.iter().any(|d| d.class() == Some(class))
}

/// Above-threshold detections of `class`, best first: confidence, then box
/// area, then order of appearance.
fn ranked(rec: &DetectionRecord, class: ObjectClass, threshold: f64) -> Vec<&Detection> {
    let mut v: Vec<&Detection> = above(rec, class, threshold).collect();
    v.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
            .then(b.bbox.area().partial_cmp(&a.bbox.area()).unwrap_or(Ordering::Equal))
    });
    v
}

pub fn score_object(scene: &SceneConfig, rec: &DetectionRecord, cfg: &ScorerConfig) -> Result<Outcome> {
    expect_skill(scene, SkillKind::Object)?;
    let class = target(scene, 0)?;
    Ok(if above(rec, class, cfg.confidence_threshold).next().is_some() {
        Outcome::pass()
    } else if any_of_class(rec, class) {
        Outcome::fail(Reason::BelowThreshold)
    } else {
        Outcome::fail(Reason::ClassAbsent)
    })
}

pub fn score_count(scene: &SceneConfig, rec: &DetectionRecord, cfg: &ScorerConfig) -> Result<Outcome> {
    expect_skill(scene, SkillKind::Count)?;
    let class = target(scene, 0)?;
    let wanted = scene.objects[0].count as usize;
    let found = above(rec, class, cfg.confidence_threshold).count();
    let ok = match cfg.count_mode {
        CountMode::Exact => found == wanted,
        CountMode::AtLeast => found >= wanted,
    };
    Ok(if ok {
        Outcome::pass()
    } else if found > wanted {
        Outcome::fail(Reason::OverCount)
    } else if found == 0 && !any_of_class(rec, class) {
        Outcome::fail(Reason::ClassAbsent)
    } else {
        Outcome::fail(Reason::UnderCount)
    })
}

/// Relation of `b` relative to `a` from box centers, by dominant axis in
/// image coordinates (y down).
pub fn infer_relation(a: &BBox, b: &BBox) -> Result<RelationKind> {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let (dx, dy) = (bx - ax, by - ay);
    match dx.abs().partial_cmp(&dy.abs()) {
        Some(Ordering::Greater) => Ok(if dx > 0.0 { RelationKind::Right } else { RelationKind::Left }),
        Some(Ordering::Less) => Ok(if dy < 0.0 { RelationKind::Above } else { RelationKind::Below }),
        _ => Err(Error::AmbiguousDirection(dx.abs())),
    }
}

pub fn score_spatial(scene: &SceneConfig, rec: &DetectionRecord, cfg: &ScorerConfig) -> Result<Outcome> {
    expect_skill(scene, SkillKind::Spatial)?;
    let class_a = target(scene, 0)?;
    let class_b = target(scene, 1)?;
    let wanted = scene
        .relation
        .ok_or_else(|| Error::invalid("scene", format!("{} has no relation", scene.id)))?;
    let thr = cfg.confidence_threshold;

    let (box_a, box_b) = if class_a == class_b {
        let top = ranked(rec, class_a, thr);
        if top.len() < 2 {
            return Ok(Outcome::fail(Reason::MissingObject));
        }
        (top[0].bbox, top[1].bbox)
    } else {
        match (ranked(rec, class_a, thr).first(), ranked(rec, class_b, thr).first()) {
            (Some(a), Some(b)) => (a.bbox, b.bbox),
            _ => return Ok(Outcome::fail(Reason::MissingObject)),
        }
    };

    let found = match infer_relation(&box_a, &box_b) {
        Ok(r) => r,
        Err(Error::AmbiguousDirection(_)) => return Ok(Outcome::fail(Reason::AmbiguousDirection)),
        Err(e) => return Err(e),
    };

    Ok(if class_a == class_b {
        // Two instances of one class can always be ordered to satisfy the
        // relation; only the axis is falsifiable.
        if found.is_horizontal() == wanted.is_horizontal() {
            Outcome::pass()
        } else {
            Outcome::fail(Reason::AxisMismatch)
        }
    } else if found == wanted {
        Outcome::pass()
    } else {
        Outcome::fail(Reason::WrongRelation)
    })
}

pub fn score_scene(scene: &SceneConfig, rec: &DetectionRecord, cfg: &ScorerConfig) -> Result<Outcome> {
    match scene.skill {
        SkillKind::Object => score_object(scene, rec, cfg),
        SkillKind::Count => score_count(scene, rec, cfg),
        SkillKind::Spatial => score_spatial(scene, rec, cfg),
    }
}

/// Mean pass rate over the records of `skill`. Every record must resolve to
/// a scene and no scene may have two records; scenes of `skill` without a
/// record are listed in the report but not scored.
pub fn score_split(
    scenes: &[SceneConfig],
    records: &[DetectionRecord],
    cfg: &ScorerConfig,
    skill: SkillKind,
) -> Result<SkillScoreReport> {
    cfg.validate()?;
    let joined = ingest::join(scenes, records)?;
    if let Some(id) = joined.unmatched_records.first() {
        return Err(Error::UnmatchedScene(id.clone()));
    }

    let mut per_scene = joined
        .pairs
        .par_iter()
        .filter(|(scene, _)| scene.skill == skill)
        .map(|(scene, rec)| {
            score_scene(scene, rec, cfg).map(|o| SceneResult {
                scene_id: scene.id.clone(),
                image_id: rec.image_id.clone(),
                passed: o.passed,
                reason: o.reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    per_scene.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));

    if per_scene.is_empty() {
        return Err(Error::EmptyInput("no scored scenes for skill"));
    }
    let n_images = per_scene.len();
    let n_correct = per_scene.iter().filter(|r| r.passed).count();
    let mut unscored_scene_ids: Vec<String> = joined
        .unmatched_scenes
        .iter()
        .filter(|s| s.skill == skill)
        .map(|s| s.id.clone())
        .collect();
    unscored_scene_ids.sort();

    Ok(SkillScoreReport {
        skill,
        n_images,
        n_correct,
        accuracy: n_correct as f64 / n_images as f64,
        threshold_used: cfg.confidence_threshold,
        count_mode: cfg.count_mode,
        unscored_scene_ids,
        per_scene,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectSpec, Split};

    fn scene(id: &str, skill: SkillKind, objects: Vec<ObjectSpec>, relation: Option<RelationKind>) -> SceneConfig {
        SceneConfig {
            id: id.into(),
            skill,
            split: Split::Test,
            objects,
            relation,
            background_id: None,
            template_id: 0,
            prompt: String::new(),
        }
    }

    fn det(label: &str, conf: f64, cx: f64, cy: f64) -> Detection {
        Detection::new(label, conf, BBox::centered(cx, cy, 20.0, 20.0))
    }

    fn rec(scene_id: &str, detections: Vec<Detection>) -> DetectionRecord {
        DetectionRecord {
            image_id: format!("img-{scene_id}"),
            scene_id: scene_id.into(),
            detections,
        }
    }

    fn object_scene(class: ObjectClass) -> SceneConfig {
        scene("o", SkillKind::Object, vec![ObjectSpec::new(class, 1)], None)
    }

    fn count_scene(class: ObjectClass, n: u32) -> SceneConfig {
        scene("c", SkillKind::Count, vec![ObjectSpec::new(class, n)], None)
    }

    fn spatial_scene(a: ObjectClass, b: ObjectClass, r: RelationKind) -> SceneConfig {
        scene(
            "s",
            SkillKind::Spatial,
            vec![ObjectSpec::new(a, 1), ObjectSpec::new(b, 1)],
            Some(r),
        )
    }

    #[test]
    fn object_examples() {
        let cfg = ScorerConfig::default();
        let s = object_scene(ObjectClass::Airplane);
        let o = score_object(&s, &rec("o", vec![det("airplane", 0.95, 0.0, 0.0)]), &cfg).unwrap();
        assert!(o.passed);
        let o = score_object(&s, &rec("o", vec![det("airplane", 0.5, 0.0, 0.0)]), &cfg).unwrap();
        assert_eq!(o, Outcome::fail(Reason::BelowThreshold));
        let o = score_object(&s, &rec("o", vec![det("car", 0.99, 0.0, 0.0)]), &cfg).unwrap();
        assert_eq!(o, Outcome::fail(Reason::ClassAbsent));
        // Strictly greater than the threshold.
        let o = score_object(&s, &rec("o", vec![det("airplane", 0.7, 0.0, 0.0)]), &cfg).unwrap();
        assert!(!o.passed);
    }

    #[test]
    fn bicycle_label_scores_bike() {
        let s = object_scene(ObjectClass::Bike);
        let o = score_object(&s, &rec("o", vec![det("bicycle", 0.9, 0.0, 0.0)]), &ScorerConfig::default()).unwrap();
        assert!(o.passed);
    }

    #[test]
    fn skill_mismatch_is_error() {
        let s = count_scene(ObjectClass::Dog, 2);
        assert!(matches!(
            score_object(&s, &rec("c", vec![]), &ScorerConfig::default()),
            Err(Error::SkillMismatch { .. })
        ));
    }

    #[test]
    fn count_examples() {
        let cfg = ScorerConfig::default();
        let s = count_scene(ObjectClass::Dog, 2);
        let two = vec![det("dog", 0.9, 0.0, 0.0), det("dog", 0.9, 50.0, 0.0)];
        assert!(score_count(&s, &rec("c", two.clone()), &cfg).unwrap().passed);
        let mut three = two.clone();
        three.push(det("dog", 0.9, 100.0, 0.0));
        assert_eq!(
            score_count(&s, &rec("c", three.clone()), &cfg).unwrap(),
            Outcome::fail(Reason::OverCount)
        );
        let lenient = ScorerConfig {
            count_mode: CountMode::AtLeast,
            ..cfg
        };
        assert!(score_count(&s, &rec("c", three), &lenient).unwrap().passed);

        let s = count_scene(ObjectClass::PottedPlant, 4);
        let mut dets: Vec<_> = (0..4).map(|i| det("potted plant", 0.8, i as f64 * 40.0, 0.0)).collect();
        dets.push(det("car", 0.9, 0.0, 100.0));
        assert!(score_count(&s, &rec("c", dets), &cfg).unwrap().passed);

        assert_eq!(
            score_count(&s, &rec("c", vec![]), &cfg).unwrap(),
            Outcome::fail(Reason::ClassAbsent)
        );
    }

    #[test]
    fn relation_examples() {
        let r = |ax, ay, bx, by| infer_relation(&BBox::centered(ax, ay, 4.0, 4.0), &BBox::centered(bx, by, 4.0, 4.0));
        assert_eq!(r(10.0, 50.0, 60.0, 50.0).unwrap(), RelationKind::Right);
        assert_eq!(r(50.0, 80.0, 50.0, 20.0).unwrap(), RelationKind::Above);
        assert_eq!(r(0.0, 0.0, 30.0, -40.0).unwrap(), RelationKind::Above);
        assert!(matches!(r(0.0, 0.0, 5.0, 5.0), Err(Error::AmbiguousDirection(_))));
        assert!(matches!(r(3.0, 3.0, 3.0, 3.0), Err(Error::AmbiguousDirection(_))));
    }

    #[test]
    fn spatial_examples() {
        let cfg = ScorerConfig::default();
        let s = spatial_scene(ObjectClass::Bench, ObjectClass::Dog, RelationKind::Left);
        let dets = vec![det("bench", 0.9, 200.0, 100.0), det("dog", 0.9, 40.0, 100.0)];
        assert!(score_spatial(&s, &rec("s", dets), &cfg).unwrap().passed);

        let s = spatial_scene(ObjectClass::Bench, ObjectClass::Dog, RelationKind::Right);
        let dets = vec![det("bench", 0.9, 200.0, 100.0), det("dog", 0.9, 40.0, 100.0)];
        assert_eq!(
            score_spatial(&s, &rec("s", dets), &cfg).unwrap(),
            Outcome::fail(Reason::WrongRelation)
        );

        let s = spatial_scene(ObjectClass::Dog, ObjectClass::Dog, RelationKind::Left);
        let dets = vec![det("dog", 0.9, 40.0, 100.0), det("dog", 0.9, 200.0, 100.0)];
        assert!(score_spatial(&s, &rec("s", dets.clone()), &cfg).unwrap().passed);
        let s = spatial_scene(ObjectClass::Dog, ObjectClass::Dog, RelationKind::Above);
        assert_eq!(
            score_spatial(&s, &rec("s", dets), &cfg).unwrap(),
            Outcome::fail(Reason::AxisMismatch)
        );

        let s = spatial_scene(ObjectClass::Bench, ObjectClass::Dog, RelationKind::Left);
        let dets = vec![det("bench", 0.9, 0.0, 0.0), det("dog", 0.9, 10.0, 10.0)];
        assert_eq!(
            score_spatial(&s, &rec("s", dets), &cfg).unwrap(),
            Outcome::fail(Reason::AmbiguousDirection)
        );
        let dets = vec![det("bench", 0.9, 0.0, 0.0), det("dog", 0.6, 10.0, 10.0)];
        assert_eq!(
            score_spatial(&s, &rec("s", dets), &cfg).unwrap(),
            Outcome::fail(Reason::MissingObject)
        );
    }

    #[test]
    fn highest_confidence_instance_is_used() {
        let cfg = ScorerConfig::default();
        let s = spatial_scene(ObjectClass::Bench, ObjectClass::Dog, RelationKind::Left);
        let dets = vec![
            det("bench", 0.9, 200.0, 100.0),
            det("dog", 0.75, 400.0, 100.0),
            det("dog", 0.95, 40.0, 100.0),
        ];
        assert!(score_spatial(&s, &rec("s", dets), &cfg).unwrap().passed);
        // Equal confidence: the larger box wins.
        let dets = vec![
            det("bench", 0.9, 200.0, 100.0),
            det("dog", 0.9, 400.0, 100.0),
            Detection::new("dog", 0.9, BBox::centered(40.0, 100.0, 50.0, 50.0)),
        ];
        assert!(score_spatial(&s, &rec("s", dets), &cfg).unwrap().passed);
    }

    #[test]
    fn split_accuracy() {
        let cfg = ScorerConfig::default();
        let scenes: Vec<_> = (0..4)
            .map(|i| scene(&format!("s{i}"), SkillKind::Object, vec![ObjectSpec::new(ObjectClass::Car, 1)], None))
            .collect();
        let records: Vec<_> = (0..4)
            .map(|i| rec(&format!("s{i}"), vec![det("car", if i < 3 { 0.9 } else { 0.1 }, 0.0, 0.0)]))
            .collect();
        let report = score_split(&scenes, &records, &cfg, SkillKind::Object).unwrap();
        assert_eq!(report.accuracy, 0.75);
        assert_eq!(report.n_correct, 3);
        assert_eq!(report.per_scene[3].reason, Reason::BelowThreshold);

        let err = score_split(&scenes, &[rec("nope", vec![])], &cfg, SkillKind::Object).unwrap_err();
        assert!(matches!(err, Error::UnmatchedScene(ref id) if id == "nope"));
        let dup = vec![records[0].clone(), records[0].clone()];
        assert!(matches!(
            score_split(&scenes, &dup, &cfg, SkillKind::Object),
            Err(Error::DuplicateRecord(_))
        ));
        let partial = score_split(&scenes, &records[..2], &cfg, SkillKind::Object).unwrap();
        assert_eq!(partial.unscored_scene_ids, vec!["s2", "s3"]);
    }
}
