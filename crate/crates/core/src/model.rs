//! Shared domain types: skills, object classes, relations, scenes and detections.
//!
//! Everything here is a plain value type. Scene and detection records use the
//! JSON field names of the wire format directly.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::prompts::{self, Keywords};

/// Largest background index the renderer ships (13 backgrounds).
pub const MAX_BACKGROUND_ID: u32 = 12;
/// Scale range the renderer samples from.
pub const SCALE_RANGE: (f64, f64) = (13.0, 16.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillKind {
    #[serde(alias = "object_recognition")]
    Object,
    #[serde(alias = "counting")]
    Count,
    #[serde(alias = "spatial_relation")]
    Spatial,
}

impl SkillKind {
    pub const ALL: [SkillKind; 3] = [SkillKind::Object, SkillKind::Count, SkillKind::Spatial];

    pub fn as_str(self) -> &'static str {
        match self {
            SkillKind::Object => "object",
            SkillKind::Count => "count",
            SkillKind::Spatial => "spatial",
        }
    }
}

impl fmt::Display for SkillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkillKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "object" | "object_recognition" => Ok(SkillKind::Object),
            "count" | "counting" => Ok(SkillKind::Count),
            "spatial" | "spatial_relation" => Ok(SkillKind::Spatial),
            other => Err(Error::invalid("skill", other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid("split", other)),
        }
    }
}

/// The 15 object classes the scenes are built from.
///
/// Serialized by prompt-side name (`"fire hydrant"`); detectors speak the
/// COCO vocabulary, see [`ObjectClass::coco_label`] and [`map_label`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectClass {
    #[serde(rename = "airplane")]
    Airplane,
    #[serde(rename = "bear")]
    Bear,
    #[serde(rename = "bench")]
    Bench,
    #[serde(rename = "bike", alias = "bicycle")]
    Bike,
    #[serde(rename = "bird")]
    Bird,
    #[serde(rename = "boat")]
    Boat,
    #[serde(rename = "car")]
    Car,
    #[serde(rename = "dog")]
    Dog,
    #[serde(rename = "fire hydrant")]
    FireHydrant,
    #[serde(rename = "person")]
    Person,
    #[serde(rename = "potted plant")]
    PottedPlant,
    #[serde(rename = "stop sign")]
    StopSign,
    #[serde(rename = "suitcase")]
    Suitcase,
    #[serde(rename = "traffic light")]
    TrafficLight,
    #[serde(rename = "umbrella")]
    Umbrella,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 15] = [
        ObjectClass::Airplane,
        ObjectClass::Bear,
        ObjectClass::Bench,
        ObjectClass::Bike,
        ObjectClass::Bird,
        ObjectClass::Boat,
        ObjectClass::Car,
        ObjectClass::Dog,
        ObjectClass::FireHydrant,
        ObjectClass::Person,
        ObjectClass::PottedPlant,
        ObjectClass::StopSign,
        ObjectClass::Suitcase,
        ObjectClass::TrafficLight,
        ObjectClass::Umbrella,
    ];

    /// Name used in prompts and scene files.
    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Airplane => "airplane",
            ObjectClass::Bear => "bear",
            ObjectClass::Bench => "bench",
            ObjectClass::Bike => "bike",
            ObjectClass::Bird => "bird",
            ObjectClass::Boat => "boat",
            ObjectClass::Car => "car",
            ObjectClass::Dog => "dog",
            ObjectClass::FireHydrant => "fire hydrant",
            ObjectClass::Person => "person",
            ObjectClass::PottedPlant => "potted plant",
            ObjectClass::StopSign => "stop sign",
            ObjectClass::Suitcase => "suitcase",
            ObjectClass::TrafficLight => "traffic light",
            ObjectClass::Umbrella => "umbrella",
        }
    }

    /// Detector-side (COCO) label.
    pub fn coco_label(self) -> &'static str {
        match self {
            ObjectClass::Bike => "bicycle",
            other => other.name(),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ObjectClass::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .or_else(|| map_label(s))
            .ok_or_else(|| Error::invalid("object class", s))
    }
}

/// Case-insensitive lookup of a detector label. Labels outside the 15
/// classes map to `None`.
pub fn map_label(label: &str) -> Option<ObjectClass> {
    let label = label.trim();
    ObjectClass::ALL
        .into_iter()
        .find(|c| c.coco_label().eq_ignore_ascii_case(label))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Above,
    Below,
    Left,
    Right,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::Above,
        RelationKind::Below,
        RelationKind::Left,
        RelationKind::Right,
    ];

    pub fn inverse(self) -> RelationKind {
        match self {
            RelationKind::Above => RelationKind::Below,
            RelationKind::Below => RelationKind::Above,
            RelationKind::Left => RelationKind::Right,
            RelationKind::Right => RelationKind::Left,
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, RelationKind::Left | RelationKind::Right)
    }

    /// Surface form substituted for `<rel>` in prompts.
    pub fn surface(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::Left => "left to",
            RelationKind::Right => "right to",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Above => "above",
            RelationKind::Below => "below",
            RelationKind::Left => "left",
            RelationKind::Right => "right",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Object count in `[1, 4]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CountValue(u8);

impl CountValue {
    pub const MIN: u32 = 1;
    pub const MAX: u32 = 4;

    pub fn new(value: u32) -> Option<Self> {
        (Self::MIN..=Self::MAX)
            .contains(&value)
            .then_some(CountValue(value as u8))
    }

    pub fn all() -> impl Iterator<Item = CountValue> {
        (Self::MIN..=Self::MAX).map(|v| CountValue(v as u8))
    }

    pub fn value(self) -> u32 {
        self.0 as u32
    }

    pub fn english_word(self) -> &'static str {
        match self.0 {
            1 => "one",
            2 => "two",
            3 => "three",
            _ => "four",
        }
    }

    pub fn from_word(word: &str) -> Option<Self> {
        CountValue::all().find(|c| c.english_word().eq_ignore_ascii_case(word))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: ObjectClass,
    pub count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_radians: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 3]>,
}

impl ObjectSpec {
    pub fn new(class: ObjectClass, count: u32) -> Self {
        ObjectSpec {
            class,
            count,
            yaw_radians: None,
            scale: None,
            position: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub id: String,
    pub skill: SkillKind,
    pub split: Split,
    pub objects: Vec<ObjectSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<RelationKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_id: Option<u32>,
    pub template_id: usize,
    pub prompt: String,
}

impl SceneConfig {
    /// Prompt keywords implied by the scene's objects and relation, or `None`
    /// when the scene is too malformed to supply them.
    pub fn keywords(&self) -> Option<Keywords> {
        match self.skill {
            SkillKind::Object => Some(Keywords::object(self.objects.first()?.class)),
            SkillKind::Count => {
                let spec = self.objects.first()?;
                Some(Keywords::count(spec.class, CountValue::new(spec.count)?))
            }
            SkillKind::Spatial => {
                let [a, b] = self.objects.as_slice() else {
                    return None;
                };
                Some(Keywords::spatial(a.class, b.class, self.relation?))
            }
        }
    }
}

/// Pixel-space box, top-left origin with y growing downward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BBox { x, y, w, h }
    }

    /// Box of size `w`x`h` centered on `(cx, cy)`.
    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn new(label: impl Into<String>, confidence: f64, bbox: BBox) -> Self {
        Detection {
            label: label.into(),
            confidence,
            bbox,
        }
    }

    pub fn class(&self) -> Option<ObjectClass> {
        map_label(&self.label)
    }

    /// First schema violation, if any.
    pub fn violation(&self) -> Option<String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Some(format!("confidence {} outside [0,1]", self.confidence));
        }
        if !self.bbox.is_valid() {
            return Some(format!(
                "bbox extent must be positive and finite (w={}, h={})",
                self.bbox.w, self.bbox.h
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub scene_id: String,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

/// How the count skill compares detected and requested counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    #[default]
    Exact,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    #[serde(default = "ScorerConfig::default_threshold")]
    pub confidence_threshold: f64,
    #[serde(default)]
    pub count_mode: CountMode,
}

impl ScorerConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.7;

    fn default_threshold() -> f64 {
        Self::DEFAULT_THRESHOLD
    }

    pub fn with_threshold(confidence_threshold: f64) -> Self {
        ScorerConfig {
            confidence_threshold,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::invalid(
                "confidence_threshold",
                format!("{} outside [0,1]", self.confidence_threshold),
            ));
        }
        Ok(())
    }
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            confidence_threshold: Self::DEFAULT_THRESHOLD,
            count_mode: CountMode::Exact,
        }
    }
}

/// Every invariant violation of `config`; empty means valid.
pub fn validate_scene(config: &SceneConfig) -> Vec<String> {
    let mut out = Vec::new();
    let objects = &config.objects;

    match config.skill {
        SkillKind::Object => {
            if objects.len() != 1 {
                out.push("object scene requires exactly 1 object".to_string());
            } else if objects[0].count != 1 {
                out.push("object scene requires count 1".to_string());
            }
        }
        SkillKind::Count => {
            if objects.len() != 1 {
                out.push("count scene requires exactly 1 object".to_string());
            } else if CountValue::new(objects[0].count).is_none() {
                out.push("count out of range [1,4]".to_string());
            }
        }
        SkillKind::Spatial => {
            if objects.len() != 2 {
                out.push("spatial scene requires exactly 2 objects".to_string());
            } else if objects.iter().any(|o| o.count != 1) {
                out.push("spatial scene objects require count 1".to_string());
            }
        }
    }

    match (config.skill, config.relation) {
        (SkillKind::Spatial, None) => out.push("spatial scene requires a relation".to_string()),
        (SkillKind::Object | SkillKind::Count, Some(_)) => {
            out.push(format!("{} scene must not carry a relation", config.skill))
        }
        _ => {}
    }

    if let Some(bg) = config.background_id {
        if bg > MAX_BACKGROUND_ID {
            out.push(format!("background_id {bg} out of range [0,{MAX_BACKGROUND_ID}]"));
        }
    }

    for (i, spec) in objects.iter().enumerate() {
        if let Some(yaw) = spec.yaw_radians {
            if !(0.0..=TAU).contains(&yaw) {
                out.push(format!("object {i}: yaw {yaw} out of range [0,2pi]"));
            }
        }
        if let Some(scale) = spec.scale {
            if !(SCALE_RANGE.0..=SCALE_RANGE.1).contains(&scale) {
                out.push(format!("object {i}: scale {scale} out of range [13,16]"));
            }
        }
        if let Some(pos) = spec.position {
            if pos.iter().any(|v| !v.is_finite()) {
                out.push(format!("object {i}: position must be finite"));
            }
        }
    }

    match prompts::skill_template(config.skill, config.template_id) {
        None => out.push(format!(
            "unknown template_id {} for {} skill",
            config.template_id, config.skill
        )),
        Some(template) => {
            // Only meaningful once the keywords themselves are well-formed.
            if let Some(keywords) = config.keywords() {
                match prompts::expand_skill_prompt(template, &keywords) {
                    Ok(expected) if expected != config.prompt => out.push(format!(
                        "prompt {:?} does not match template expansion {:?}",
                        config.prompt, expected
                    )),
                    Ok(_) => {}
                    Err(e) => out.push(e.to_string()),
                }
            }
        }
    }

    out
}
