//! Human annotation records and multi-worker aggregation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{CountValue, ObjectClass, RelationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationTask {
    SkillObject,
    SkillCount,
    SkillSpatial,
    Gender,
    SkinPoint,
}

impl fmt::Display for AnnotationTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AnnotationTask::SkillObject => "skill_object",
            AnnotationTask::SkillCount => "skill_count",
            AnnotationTask::SkillSpatial => "skill_spatial",
            AnnotationTask::Gender => "gender",
            AnnotationTask::SkinPoint => "skin_point",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenderChoice {
    Male,
    Female,
    NotHuman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectAnswer {
    pub class: ObjectClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountAnswer {
    pub class: ObjectClass,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialAnswer {
    pub class_a: ObjectClass,
    pub class_b: ObjectClass,
    pub relation: RelationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenderAnswer {
    pub choice: GenderChoice,
}

/// Click position in native image pixels. `rgb` and `tone` are filled in
/// server-side from the stored image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinPointAnswer {
    pub x: u32,
    pub y: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<[u8; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Answer {
    Object(ObjectAnswer),
    Count(CountAnswer),
    Spatial(SpatialAnswer),
    Gender(GenderAnswer),
    SkinPoint(SkinPointAnswer),
}

impl Answer {
    pub fn task(&self) -> AnnotationTask {
        match self {
            Answer::Object(_) => AnnotationTask::SkillObject,
            Answer::Count(_) => AnnotationTask::SkillCount,
            Answer::Spatial(_) => AnnotationTask::SkillSpatial,
            Answer::Gender(_) => AnnotationTask::Gender,
            Answer::SkinPoint(_) => AnnotationTask::SkinPoint,
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            Answer::Object(a) => serde_json::to_value(a),
            Answer::Count(a) => serde_json::to_value(a),
            Answer::Spatial(a) => serde_json::to_value(a),
            Answer::Gender(a) => serde_json::to_value(a),
            Answer::SkinPoint(a) => serde_json::to_value(a),
        };
        v.expect("answer types serialize")
    }

    /// Two answers agree when their keys are equal. Skin points agree on
    /// their assigned tone rather than the exact pixel.
    fn consensus_key(&self) -> String {
        match self {
            Answer::SkinPoint(SkinPointAnswer { tone: Some(t), .. }) => format!("tone:{t}"),
            other => other.to_value().to_string(),
        }
    }

    fn is_not_human(&self) -> bool {
        matches!(
            self,
            Answer::Gender(GenderAnswer {
                choice: GenderChoice::NotHuman
            })
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub worker_id: String,
    pub item_id: String,
    pub task: AnnotationTask,
    pub answer: Value,
}

impl AnnotationRecord {
    pub fn new(worker_id: impl Into<String>, item_id: impl Into<String>, answer: &Answer) -> Self {
        AnnotationRecord {
            worker_id: worker_id.into(),
            item_id: item_id.into(),
            task: answer.task(),
            answer: answer.to_value(),
        }
    }

    /// Parses `answer` against the shape required by `task`. Errors are
    /// `(field, message)` pairs.
    pub fn parse_answer(&self) -> std::result::Result<Answer, Vec<(String, String)>> {
        fn parse<T: serde::de::DeserializeOwned>(v: &Value) -> std::result::Result<T, Vec<(String, String)>> {
            serde_json::from_value(v.clone()).map_err(|e| vec![("answer".to_string(), e.to_string())])
        }
        let mut errors = Vec::new();
        if self.worker_id.trim().is_empty() {
            errors.push(("worker_id".to_string(), "must not be empty".to_string()));
        }
        if self.item_id.trim().is_empty() {
            errors.push(("item_id".to_string(), "must not be empty".to_string()));
        }
        let answer = match self.task {
            AnnotationTask::SkillObject => parse(&self.answer).map(Answer::Object),
            AnnotationTask::SkillCount => parse::<CountAnswer>(&self.answer).and_then(|a| {
                if CountValue::new(a.count).is_some() {
                    Ok(Answer::Count(a))
                } else {
                    Err(vec![("answer.count".to_string(), format!("{} outside [1,4]", a.count))])
                }
            }),
            AnnotationTask::SkillSpatial => parse(&self.answer).map(Answer::Spatial),
            AnnotationTask::Gender => parse(&self.answer).map(Answer::Gender),
            AnnotationTask::SkinPoint => parse::<SkinPointAnswer>(&self.answer).and_then(|a| match a.tone {
                Some(t) if !(1..=10).contains(&t) => Err(vec![("answer.tone".to_string(), format!("{t} outside [1,10]"))]),
                _ => Ok(Answer::SkinPoint(a)),
            }),
        };
        match answer {
            Ok(a) if errors.is_empty() => Ok(a),
            Ok(_) => Err(errors),
            Err(mut e) => {
                errors.append(&mut e);
                Err(errors)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Aggregate {
    /// Strict-majority answer.
    Answer { answer: Value, votes: usize, n_workers: usize },
    /// No answer reached a strict majority.
    Abstain { n_workers: usize },
    /// Majority said the images show no human; not used for metrics.
    Excluded { votes: usize, n_workers: usize },
}

/// Strict-majority vote over the records of one item. A worker who
/// submitted more than once counts with their last record.
pub fn aggregate_workers(records: &[AnnotationRecord]) -> Result<Aggregate> {
    let first = records.first().ok_or(Error::EmptyInput("aggregate_workers"))?;
    if let Some(r) = records.iter().find(|r| r.item_id != first.item_id || r.task != first.task) {
        return Err(Error::invalid(
            "annotations",
            format!("mixed items or tasks: {}/{} vs {}/{}", first.item_id, first.task, r.item_id, r.task),
        ));
    }

    let mut latest: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
    for r in records {
        latest.insert(r.worker_id.as_str(), r);
    }
    let mut groups: BTreeMap<String, Vec<Answer>> = BTreeMap::new();
    for r in latest.values() {
        let answer = r.parse_answer().map_err(|errs| {
            Error::invalid(
                "annotation",
                errs.into_iter().map(|(f, m)| format!("{f}: {m}")).collect::<Vec<_>>().join("; "),
            )
        })?;
        groups.entry(answer.consensus_key()).or_default().push(answer);
    }

    let n_workers = latest.len();
    let winner = groups.values().find(|answers| 2 * answers.len() > n_workers);
    Ok(match winner {
        None => Aggregate::Abstain { n_workers },
        Some(answers) if answers[0].is_not_human() => Aggregate::Excluded {
            votes: answers.len(),
            n_workers,
        },
        Some(answers) => {
            // Smallest serialization as representative, independent of worker order.
            let answer = answers
                .iter()
                .map(Answer::to_value)
                .min_by_key(|v| v.to_string())
                .expect("non-empty group");
            Aggregate::Answer {
                answer,
                votes: answers.len(),
                n_workers,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gender(worker: &str, choice: GenderChoice) -> AnnotationRecord {
        AnnotationRecord::new(worker, "p1", &Answer::Gender(GenderAnswer { choice }))
    }

    #[test]
    fn strict_majority() {
        use GenderChoice::*;
        let recs: Vec<_> = [Male, Male, Male, Male, Female]
            .iter()
            .enumerate()
            .map(|(i, &c)| gender(&format!("w{i}"), c))
            .collect();
        match aggregate_workers(&recs).unwrap() {
            Aggregate::Answer { answer, votes, n_workers } => {
                assert_eq!(answer["choice"], "male");
                assert_eq!((votes, n_workers), (4, 5));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_vote_abstains() {
        use GenderChoice::*;
        let recs: Vec<_> = [Male, Male, Female, Female, NotHuman]
            .iter()
            .enumerate()
            .map(|(i, &c)| gender(&format!("w{i}"), c))
            .collect();
        assert_eq!(aggregate_workers(&recs).unwrap(), Aggregate::Abstain { n_workers: 5 });
    }

    #[test]
    fn not_human_majority_excluded() {
        use GenderChoice::*;
        let recs: Vec<_> = [NotHuman, NotHuman, NotHuman, Male, Female]
            .iter()
            .enumerate()
            .map(|(i, &c)| gender(&format!("w{i}"), c))
            .collect();
        assert!(matches!(aggregate_workers(&recs).unwrap(), Aggregate::Excluded { votes: 3, .. }));
    }

    #[test]
    fn resubmission_replaces() {
        use GenderChoice::*;
        let recs = vec![gender("w0", Female), gender("w1", Male), gender("w0", Male)];
        assert!(matches!(aggregate_workers(&recs).unwrap(), Aggregate::Answer { votes: 2, n_workers: 2, .. }));
    }

    #[test]
    fn payload_shape_checked() {
        let r = AnnotationRecord {
            worker_id: "w".into(),
            item_id: "i".into(),
            task: AnnotationTask::SkillCount,
            answer: serde_json::json!({"class": "dog", "count": 7}),
        };
        let errs = r.parse_answer().unwrap_err();
        assert_eq!(errs[0].0, "answer.count");
        let r = AnnotationRecord {
            worker_id: "".into(),
            item_id: "i".into(),
            task: AnnotationTask::Gender,
            answer: serde_json::json!({"choice": "robot"}),
        };
        assert_eq!(r.parse_answer().unwrap_err().len(), 2);
        let r = AnnotationRecord {
            worker_id: "w".into(),
            item_id: "i".into(),
            task: AnnotationTask::SkillSpatial,
            answer: serde_json::json!({"class_a": "dog", "class_b": "bicycle", "relation": "left"}),
        };
        assert!(r.parse_answer().is_ok());
    }

    #[test]
    fn skin_points_agree_on_tone() {
        let rec = |w: &str, x: u32, tone: u8| {
            AnnotationRecord::new(
                w,
                "img",
                &Answer::SkinPoint(SkinPointAnswer {
                    x,
                    y: 0,
                    rgb: Some([200, 150, 120]),
                    tone: Some(tone),
                }),
            )
        };
        let recs = vec![rec("a", 1, 4), rec("b", 5, 4), rec("c", 9, 7)];
        assert!(matches!(aggregate_workers(&recs).unwrap(), Aggregate::Answer { votes: 2, .. }));
    }

    #[test]
    fn mixed_items_rejected() {
        let mut b = gender("w1", GenderChoice::Male);
        b.item_id = "other".into();
        assert!(aggregate_workers(&[gender("w0", GenderChoice::Male), b]).is_err());
        assert!(aggregate_workers(&[]).is_err());
    }
}
