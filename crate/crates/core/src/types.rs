//! Domain types shared by every stage of the pipeline: person and scene
//! state, the two label taxonomies, and the 28-value frame encoding.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};

/// Number of person slots in every scene.
pub const PERSONS: usize = 4;
/// Attributes per person row in the encoded frame.
pub const PERSON_FEATURES: usize = 7;
/// Width of one encoded frame.
pub const FEATURES: usize = PERSONS * PERSON_FEATURES;
/// Home bearings of the four persons, left to right, in degrees.
pub const HOME_BEARINGS: [f64; PERSONS] = [-60.0, -30.0, 30.0, 60.0];
/// The box sits straight ahead of the viewer.
pub const BOX_ANGLE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Movement {
    #[default]
    Standing = 0,
    Entering = 1,
    Leaving = 2,
}

impl Movement {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Movement::Standing),
            1 => Ok(Movement::Entering),
            2 => Ok(Movement::Leaving),
            other => Err(GazeError::validation(
                "movement",
                format!("unknown movement code {other}"),
            )),
        }
    }
}

/// State of one person slot in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PersonState {
    pub present: bool,
    /// Meters from the viewer.
    pub distance: f64,
    pub waving: bool,
    pub pointing: bool,
    pub talking: bool,
    /// Bearing in degrees, negative to the left.
    pub angle: f64,
    pub movement: Movement,
}

impl PersonState {
    pub fn absent() -> Self {
        Self::default()
    }

    /// A present, idle person standing at `angle`.
    pub fn standing(distance: f64, angle: f64) -> Self {
        PersonState {
            present: true,
            distance,
            angle,
            ..Self::default()
        }
    }

    pub fn with_talking(mut self, on: bool) -> Self {
        self.talking = on;
        self
    }

    pub fn with_waving(mut self, on: bool) -> Self {
        self.waving = on;
        self
    }

    pub fn with_pointing(mut self, on: bool) -> Self {
        self.pointing = on;
        self
    }

    /// Checks the per-person invariants; `slot` is only used in messages.
    pub fn validate(&self, slot: usize) -> Result<()> {
        let field = |name: &str| format!("persons[{slot}].{name}");
        if !self.distance.is_finite() || self.distance < 0.0 {
            return Err(GazeError::validation(
                field("distance"),
                format!("must be finite and >= 0, got {}", self.distance),
            ));
        }
        if !self.angle.is_finite() || !(-90.0..=90.0).contains(&self.angle) {
            return Err(GazeError::validation(
                field("angle"),
                format!("must lie in [-90, 90], got {}", self.angle),
            ));
        }
        if !self.present {
            for (name, on) in [
                ("waving", self.waving),
                ("pointing", self.pointing),
                ("talking", self.talking),
            ] {
                if on {
                    return Err(GazeError::validation(
                        field(name),
                        "absent person cannot have an active cue",
                    ));
                }
            }
            if self.movement != Movement::Standing {
                return Err(GazeError::validation(
                    field("movement"),
                    "absent person must be Standing",
                ));
            }
            return Ok(());
        }
        if self.distance <= 0.0 {
            return Err(GazeError::validation(
                field("distance"),
                "present person needs a positive distance",
            ));
        }
        if self.movement == Movement::Standing && !HOME_BEARINGS.contains(&self.angle) {
            return Err(GazeError::validation(
                field("angle"),
                format!(
                    "standing person must be at a home bearing {HOME_BEARINGS:?}, got {}",
                    self.angle
                ),
            ));
        }
        Ok(())
    }
}

/// Scene state for one video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub frame_index: usize,
    /// Ordered by home bearing, left to right.
    pub persons: [PersonState; PERSONS],
    pub box_angle: f64,
}

impl SceneFrame {
    pub fn empty(frame_index: usize) -> Self {
        SceneFrame {
            frame_index,
            persons: [PersonState::absent(); PERSONS],
            box_angle: BOX_ANGLE,
        }
    }

    /// Builds a frame from a slice, rejecting anything but exactly four slots.
    pub fn from_persons(frame_index: usize, persons: &[PersonState]) -> Result<Self> {
        let persons: [PersonState; PERSONS] = persons.try_into().map_err(|_| {
            GazeError::validation(
                "persons",
                format!(
                    "expected exactly {PERSONS} person slots, got {}",
                    persons.len()
                ),
            )
        })?;
        Ok(SceneFrame {
            frame_index,
            persons,
            box_angle: BOX_ANGLE,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.box_angle != BOX_ANGLE {
            return Err(GazeError::validation(
                "box_angle",
                format!(
                    "box is fixed at {BOX_ANGLE} degrees, got {}",
                    self.box_angle
                ),
            ));
        }
        for (slot, p) in self.persons.iter().enumerate() {
            p.validate(slot)?;
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.persons.iter().all(|p| !p.present)
    }
}

/// Scales mapping raw attributes into the encoded ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub distance: f64,
    pub angle: f64,
    pub movement: f64,
}

impl Normalization {
    pub const DEFAULT: Normalization = Normalization {
        distance: 5.0,
        angle: 60.0,
        movement: 2.0,
    };
}

impl Default for Normalization {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// One encoded frame: four rows of
/// `[present, distance, waving, pointing, talking, angle, movement]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURES]);

impl Default for FeatureVector {
    fn default() -> Self {
        FeatureVector([0.0; FEATURES])
    }
}

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn row(&self, person: usize) -> &[f64] {
        &self.0[person * PERSON_FEATURES..(person + 1) * PERSON_FEATURES]
    }

    /// Inverse of the encoding. Distances and bearings beyond the clamp decode
    /// to the clamp value.
    pub fn decode(&self, frame_index: usize, norm: Normalization) -> Result<SceneFrame> {
        let mut persons = [PersonState::absent(); PERSONS];
        for (slot, p) in persons.iter_mut().enumerate() {
            let r = self.row(slot);
            let flag = |v: f64, name: &str| -> Result<bool> {
                if v == 0.0 {
                    Ok(false)
                } else if v == 1.0 {
                    Ok(true)
                } else {
                    Err(GazeError::validation(
                        format!("persons[{slot}].{name}"),
                        format!("flag must be 0 or 1, got {v}"),
                    ))
                }
            };
            let movement_code = (r[6] * norm.movement).round();
            if !(0.0..=2.0).contains(&movement_code) {
                return Err(GazeError::validation(
                    format!("persons[{slot}].movement"),
                    format!("movement value {} out of range", r[6]),
                ));
            }
            *p = PersonState {
                present: flag(r[0], "present")?,
                distance: r[1] * norm.distance,
                waving: flag(r[2], "waving")?,
                pointing: flag(r[3], "pointing")?,
                talking: flag(r[4], "talking")?,
                angle: r[5] * norm.angle,
                movement: Movement::from_code(movement_code as u8)?,
            };
        }
        let frame = SceneFrame {
            frame_index,
            persons,
            box_angle: BOX_ANGLE,
        };
        frame.validate()?;
        Ok(frame)
    }
}

fn flag(on: bool) -> f64 {
    if on {
        1.0
    } else {
        0.0
    }
}

/// Encodes a frame with the default normalization.
pub fn encode_frame(frame: &SceneFrame) -> Result<FeatureVector> {
    encode_frame_with(frame, Normalization::DEFAULT)
}

pub fn encode_frame_with(frame: &SceneFrame, norm: Normalization) -> Result<FeatureVector> {
    frame.validate()?;
    let mut out = [0.0; FEATURES];
    for (slot, p) in frame.persons.iter().enumerate() {
        if !p.present {
            continue;
        }
        let row = &mut out[slot * PERSON_FEATURES..(slot + 1) * PERSON_FEATURES];
        row[0] = 1.0;
        row[1] = (p.distance / norm.distance).min(1.0);
        row[2] = flag(p.waving);
        row[3] = flag(p.pointing);
        row[4] = flag(p.talking);
        row[5] = (p.angle / norm.angle).clamp(-1.0, 1.0);
        row[6] = f64::from(p.movement.code()) / norm.movement;
    }
    Ok(FeatureVector(out))
}

/// Label taxonomies: persons plus box, or bodies, hands and box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Taxonomy {
    Coarse5,
    Fine13,
}

impl Taxonomy {
    pub fn size(self) -> usize {
        match self {
            Taxonomy::Coarse5 => 5,
            Taxonomy::Fine13 => 13,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Taxonomy::Coarse5 => "Coarse5",
            Taxonomy::Fine13 => "Fine13",
        }
    }

    pub fn labels(self) -> impl Iterator<Item = Label> {
        (0..self.size()).map(move |i| Label::from_index(i, self).expect("in range"))
    }
}

impl fmt::Display for Taxonomy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Taxonomy {
    type Err = GazeError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "coarse5" | "coarse" | "5" => Ok(Taxonomy::Coarse5),
            "fine13" | "fine" | "13" => Ok(Taxonomy::Fine13),
            _ => Err(GazeError::validation(
                "taxonomy",
                format!("unknown taxonomy `{s}`"),
            )),
        }
    }
}

/// What is being looked at. Person indices are 0-based slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Target {
    Body(u8),
    RightHand(u8),
    LeftHand(u8),
    Box,
}

impl Target {
    pub fn person(self) -> Option<usize> {
        match self {
            Target::Body(p) | Target::RightHand(p) | Target::LeftHand(p) => Some(p as usize),
            Target::Box => None,
        }
    }

    pub fn is_hand(self) -> bool {
        matches!(self, Target::RightHand(_) | Target::LeftHand(_))
    }

    /// Hands fold into their owner's body.
    pub fn collapse(self) -> Target {
        match self {
            Target::RightHand(p) | Target::LeftHand(p) => Target::Body(p),
            t => t,
        }
    }
}

/// A gaze label under a specific taxonomy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    taxonomy: Taxonomy,
    target: Target,
}

impl Label {
    pub fn new(taxonomy: Taxonomy, target: Target) -> Result<Self> {
        if let Some(p) = target.person() {
            if p >= PERSONS {
                return Err(GazeError::validation(
                    "label",
                    format!("person index {p} out of range"),
                ));
            }
        }
        if taxonomy == Taxonomy::Coarse5 && target.is_hand() {
            return Err(GazeError::validation(
                "label",
                "hand targets do not exist in Coarse5",
            ));
        }
        Ok(Label { taxonomy, target })
    }

    /// Builds a label, collapsing hands when the taxonomy is coarse.
    pub fn project(taxonomy: Taxonomy, target: Target) -> Self {
        let target = match taxonomy {
            Taxonomy::Coarse5 => target.collapse(),
            Taxonomy::Fine13 => target,
        };
        Label { taxonomy, target }
    }

    pub fn boxed(taxonomy: Taxonomy) -> Self {
        Label {
            taxonomy,
            target: Target::Box,
        }
    }

    pub fn taxonomy(self) -> Taxonomy {
        self.taxonomy
    }

    pub fn target(self) -> Target {
        self.target
    }

    pub fn to_coarse(self) -> Label {
        Label::project(Taxonomy::Coarse5, self.target)
    }

    pub fn index(self) -> usize {
        let n = PERSONS;
        match (self.taxonomy, self.target) {
            (_, Target::Body(p)) => p as usize,
            (Taxonomy::Fine13, Target::RightHand(p)) => n + p as usize,
            (Taxonomy::Fine13, Target::LeftHand(p)) => 2 * n + p as usize,
            (Taxonomy::Coarse5, Target::Box) => n,
            (Taxonomy::Fine13, Target::Box) => 3 * n,
            (Taxonomy::Coarse5, _) => unreachable!("constructor rejects coarse hands"),
        }
    }

    pub fn from_index(index: usize, taxonomy: Taxonomy) -> Result<Self> {
        let size = taxonomy.size();
        if index >= size {
            return Err(GazeError::LabelIndex {
                index,
                taxonomy: taxonomy.name(),
                size,
            });
        }
        let n = PERSONS;
        let target = if index == size - 1 {
            Target::Box
        } else {
            let p = (index % n) as u8;
            match index / n {
                0 => Target::Body(p),
                1 => Target::RightHand(p),
                _ => Target::LeftHand(p),
            }
        };
        Ok(Label { taxonomy, target })
    }

    /// Short name used in files and on the wire.
    pub fn name(self) -> String {
        match (self.taxonomy, self.target) {
            (_, Target::Box) => "Box".to_string(),
            (Taxonomy::Coarse5, Target::Body(p)) => format!("P{}", p + 1),
            (_, Target::Body(p)) => format!("P{}-body", p + 1),
            (_, Target::RightHand(p)) => format!("P{}-right", p + 1),
            (_, Target::LeftHand(p)) => format!("P{}-left", p + 1),
        }
    }

    /// Parses a label name in the given taxonomy. Bare person names (`P2`)
    /// are accepted as bodies in both taxonomies; hand names are collapsed
    /// under Coarse5.
    pub fn parse(s: &str, taxonomy: Taxonomy) -> Result<Self> {
        let bad = || GazeError::validation("label", format!("unknown label `{s}`"));
        if s.eq_ignore_ascii_case("box") {
            return Ok(Label::boxed(taxonomy));
        }
        let rest = s.strip_prefix(['P', 'p']).ok_or_else(bad)?;
        let (num, part) = match rest.split_once('-') {
            Some((n, part)) => (n, part),
            None => (rest, "body"),
        };
        let person: u8 = num.parse().map_err(|_| bad())?;
        if !(1..=PERSONS as u8).contains(&person) {
            return Err(bad());
        }
        let p = person - 1;
        let target = match part {
            "body" => Target::Body(p),
            "right" => Target::RightHand(p),
            "left" => Target::LeftHand(p),
            _ => return Err(bad()),
        };
        Ok(Label::project(taxonomy, target))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

pub fn label_index(label: Label) -> usize {
    label.index()
}

pub fn index_label(index: usize, taxonomy: Taxonomy) -> Result<Label> {
    Label::from_index(index, taxonomy)
}

const FRAMES_MAGIC: &str = "# gaze-frames v1";
const ROW_NAMES: [&str; PERSON_FEATURES] = [
    "present", "distance", "waving", "pointing", "talking", "angle", "movement",
];

/// Contents of a feature-frame file.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub taxonomy: Taxonomy,
    pub normalization: Normalization,
    pub frames: Vec<FeatureVector>,
}

/// Writes the feature-frame format:
///
/// ```text
/// # gaze-frames v1
/// # taxonomy=Fine13 distance_scale=5 angle_scale=60 movement_scale=2
/// frame,p1_present,p1_distance,...,p4_movement
/// 0,1,0.3,0,0,1,-1,0,...
/// ```
pub fn write_frames<W: Write>(mut w: W, file: &FrameFile) -> Result<()> {
    let n = file.normalization;
    writeln!(w, "{FRAMES_MAGIC}")?;
    writeln!(
        w,
        "# taxonomy={} distance_scale={} angle_scale={} movement_scale={}",
        file.taxonomy, n.distance, n.angle, n.movement
    )?;
    let mut header = vec!["frame".to_string()];
    for p in 1..=PERSONS {
        header.extend(ROW_NAMES.iter().map(|name| format!("p{p}_{name}")));
    }
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for (i, fv) in file.frames.iter().enumerate() {
        line.clear();
        line.push_str(&i.to_string());
        for v in fv.as_slice() {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_frames<R: BufRead>(r: R) -> Result<FrameFile> {
    let mut lines = r.lines();
    let magic = lines
        .next()
        .transpose()?
        .ok_or_else(|| GazeError::Format("empty frame file".into()))?;
    if magic.trim() != FRAMES_MAGIC {
        return Err(GazeError::Format(format!(
            "expected `{FRAMES_MAGIC}`, got `{magic}`"
        )));
    }
    let meta = lines
        .next()
        .transpose()?
        .ok_or_else(|| GazeError::Format("missing metadata line".into()))?;
    let mut taxonomy = Taxonomy::Fine13;
    let mut normalization = Normalization::DEFAULT;
    for kv in meta.trim_start_matches('#').split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| GazeError::Format(format!("bad metadata entry `{kv}`")))?;
        let num = || {
            v.parse::<f64>()
                .map_err(|_| GazeError::Format(format!("bad number in `{kv}`")))
        };
        match k {
            "taxonomy" => taxonomy = v.parse()?,
            "distance_scale" => normalization.distance = num()?,
            "angle_scale" => normalization.angle = num()?,
            "movement_scale" => normalization.movement = num()?,
            _ => {}
        }
    }
    // column header
    lines.next().transpose()?;
    let mut frames = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        cells.next();
        let mut fv = [0.0; FEATURES];
        let mut count = 0;
        for (slot, cell) in cells.enumerate() {
            if slot >= FEATURES {
                count = FEATURES + 1;
                break;
            }
            fv[slot] = cell.trim().parse().map_err(|_| {
                GazeError::Format(format!("row {}: bad number `{cell}`", lineno + 1))
            })?;
            count += 1;
        }
        if count != FEATURES {
            return Err(GazeError::Format(format!(
                "row {}: expected {FEATURES} values",
                lineno + 1
            )));
        }
        frames.push(FeatureVector(fv));
    }
    Ok(FrameFile {
        taxonomy,
        normalization,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_scene_encodes_to_zeros() {
        let fv = encode_frame(&SceneFrame::empty(0)).unwrap();
        assert_eq!(fv.as_slice(), &[0.0; FEATURES]);
    }

    #[test]
    fn talking_person_row() {
        let mut frame = SceneFrame::empty(0);
        frame.persons[1] = PersonState::standing(2.5, -30.0).with_talking(true);
        let fv = encode_frame(&frame).unwrap();
        assert_eq!(fv.row(1), &[1.0, 0.5, 0.0, 0.0, 1.0, -0.5, 0.0]);
    }

    #[test]
    fn waving_and_pointing_scene_flags() {
        // P1 near and idle, P3 near, waving and pointing, others absent.
        let mut frame = SceneFrame::empty(1140);
        frame.persons[0] = PersonState::standing(1.5, -60.0);
        frame.persons[2] = PersonState::standing(1.5, 30.0)
            .with_waving(true)
            .with_pointing(true);
        let fv = encode_frame(&frame).unwrap();
        let flags = |r: &[f64]| [r[0], r[2], r[3], r[4], r[6]];
        assert_eq!(flags(fv.row(0)), [1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(fv.row(1), &[0.0; 7]);
        assert_eq!(flags(fv.row(2)), [1.0, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(fv.row(3), &[0.0; 7]);
        assert_eq!(fv.row(0)[1], 0.3);
        assert_eq!(fv.row(0)[5], -1.0);
    }

    #[test]
    fn invariant_violations_name_the_field() {
        let mut frame = SceneFrame::empty(0);
        frame.persons[3].waving = true;
        let err = encode_frame(&frame).unwrap_err().to_string();
        assert!(err.contains("persons[3].waving"), "{err}");

        frame = SceneFrame::empty(0);
        frame.persons[0] = PersonState::standing(2.0, 45.0);
        let err = encode_frame(&frame).unwrap_err().to_string();
        assert!(err.contains("persons[0].angle"), "{err}");

        let five = [PersonState::absent(); 5];
        assert!(SceneFrame::from_persons(0, &five).is_err());

        frame = SceneFrame::empty(0);
        frame.persons[2] = PersonState::standing(0.0, 30.0);
        assert!(encode_frame(&frame).is_err());
    }

    #[test]
    fn distance_is_clamped() {
        let mut frame = SceneFrame::empty(0);
        frame.persons[0] = PersonState::standing(8.0, -60.0);
        assert_eq!(encode_frame(&frame).unwrap().row(0)[1], 1.0);
    }

    #[test]
    fn label_indices() {
        assert_eq!(label_index(Label::boxed(Taxonomy::Coarse5)), 4);
        assert_eq!(label_index(Label::boxed(Taxonomy::Fine13)), 12);
        let p2_left = Label::new(Taxonomy::Fine13, Target::LeftHand(1)).unwrap();
        assert_eq!(label_index(p2_left), 9);
        assert!(index_label(5, Taxonomy::Coarse5).is_err());
        assert!(index_label(13, Taxonomy::Fine13).is_err());
        assert!(Label::new(Taxonomy::Coarse5, Target::RightHand(0)).is_err());
    }

    #[test]
    fn label_bijection_and_names() {
        for tax in [Taxonomy::Coarse5, Taxonomy::Fine13] {
            for i in 0..tax.size() {
                let l = index_label(i, tax).unwrap();
                assert_eq!(label_index(l), i);
                assert_eq!(Label::parse(&l.name(), tax).unwrap(), l);
            }
        }
        assert_eq!(
            Label::parse("P3-left", Taxonomy::Coarse5).unwrap().name(),
            "P3"
        );
    }

    #[test]
    fn frame_file_roundtrip() {
        let mut frame = SceneFrame::empty(0);
        frame.persons[2] = PersonState::standing(1.7, 30.0).with_waving(true);
        let file = FrameFile {
            taxonomy: Taxonomy::Coarse5,
            normalization: Normalization::DEFAULT,
            frames: vec![encode_frame(&frame).unwrap(); 3],
        };
        let mut buf = Vec::new();
        write_frames(&mut buf, &file).unwrap();
        let back = read_frames(buf.as_slice()).unwrap();
        assert_eq!(back, file);
    }

    fn person_strategy() -> impl Strategy<Value = PersonState> {
        let standing = (0.1f64..10.0, 0usize..4, any::<[bool; 3]>()).prop_map(|(d, b, f)| {
            PersonState::standing(d, HOME_BEARINGS[b])
                .with_waving(f[0])
                .with_pointing(f[1])
                .with_talking(f[2])
        });
        let moving = (0.1f64..10.0, -90.0f64..=90.0, any::<bool>(), any::<bool>()).prop_map(
            |(d, a, enter, talk)| PersonState {
                present: true,
                distance: d,
                angle: a,
                talking: talk,
                movement: if enter {
                    Movement::Entering
                } else {
                    Movement::Leaving
                },
                ..PersonState::default()
            },
        );
        prop_oneof![Just(PersonState::absent()), standing, moving]
    }

    proptest! {
        #[test]
        fn encoded_values_stay_in_range(persons in proptest::array::uniform4(person_strategy())) {
            let frame = SceneFrame { frame_index: 0, persons, box_angle: 0.0 };
            let fv = encode_frame(&frame).unwrap();
            for slot in 0..PERSONS {
                let r = fv.row(slot);
                for f in [r[0], r[2], r[3], r[4]] {
                    prop_assert!(f == 0.0 || f == 1.0);
                }
                prop_assert!((0.0..=1.0).contains(&r[1]));
                prop_assert!((-1.0..=1.0).contains(&r[5]));
                prop_assert!([0.0, 0.5, 1.0].contains(&r[6]));
                if !persons[slot].present {
                    prop_assert_eq!(r, &[0.0; 7]);
                }
            }
            let in_range = |p: &PersonState| {
                p.distance <= Normalization::DEFAULT.distance
                    && p.angle.abs() <= Normalization::DEFAULT.angle
            };
            if persons.iter().all(in_range) {
                let back = fv.decode(0, Normalization::DEFAULT).unwrap();
                for (a, b) in back.persons.iter().zip(persons.iter()) {
                    if b.present {
                        prop_assert!((a.distance - b.distance).abs() < 1e-12);
                        prop_assert!((a.angle - b.angle).abs() < 1e-12);
                        prop_assert_eq!((a.waving, a.pointing, a.talking, a.movement),
                            (b.waving, b.pointing, b.talking, b.movement));
                    } else {
                        prop_assert!(!a.present);
                    }
                }
            }
        }
    }
}
