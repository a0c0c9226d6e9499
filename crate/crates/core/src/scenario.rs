//! Scripted social scenes: segment schedules, continuous rendering at 30 fps
//! and the screen-space areas of interest for every gaze target.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::types::{
    Label, Movement, PersonState, SceneFrame, Target, Taxonomy, BOX_ANGLE, HOME_BEARINGS, PERSONS,
};

pub const SCREEN_WIDTH: f64 = 1920.0;
pub const SCREEN_HEIGHT: f64 = 1080.0;
pub const NEAR_DISTANCE: f64 = 1.5;
pub const FAR_DISTANCE: f64 = 3.0;
/// Bearing at which walkers appear and disappear.
pub const OFFSCREEN_ANGLE: f64 = 90.0;
const FINE: usize = 13;

/// Scene attributes for one person in a config segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonSpec {
    /// Home bearing; selects the slot.
    pub angle: f64,
    #[serde(default = "default_distance")]
    pub distance: f64,
    #[serde(default)]
    pub waving: bool,
    #[serde(default)]
    pub pointing: bool,
    #[serde(default)]
    pub talking: bool,
}

fn default_distance() -> f64 {
    NEAR_DISTANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    #[serde(default)]
    pub persons: Vec<PersonSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SegmentSource {
    /// The built-in 24-segment schedule.
    Canonical,
    /// Segments drawn from the attribute space with the script seed.
    Random {
        count: usize,
    },
    Explicit {
        segments: Vec<SegmentSpec>,
    },
}

/// Script configuration file (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default = "default_fps")]
    pub fps: u32,
    #[serde(default = "default_segment_seconds")]
    pub segment_seconds: f64,
    #[serde(default = "default_transition_seconds")]
    pub transition_seconds: f64,
    pub source: SegmentSource,
}

fn default_fps() -> u32 {
    30
}
fn default_segment_seconds() -> f64 {
    5.0
}
fn default_transition_seconds() -> f64 {
    1.0
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fps: default_fps(),
            segment_seconds: default_segment_seconds(),
            transition_seconds: default_transition_seconds(),
            source: SegmentSource::Canonical,
        }
    }
}

impl ScenarioConfig {
    pub fn random(count: usize) -> Self {
        ScenarioConfig {
            source: SegmentSource::Random { count },
            ..Self::default()
        }
    }
}

/// Target state of all four slots during one segment. Every present person
/// stands at its home bearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub persons: [PersonState; PERSONS],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub fps: u32,
    pub segment_frames: usize,
    pub transition_frames: usize,
    pub segments: Vec<Segment>,
}

impl ScenarioScript {
    pub fn total_frames(&self) -> usize {
        self.segment_frames * self.segments.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(GazeError::validation("segments", "script has no segments"));
        }
        if self.transition_frames == 0 || self.transition_frames > self.segment_frames {
            return Err(GazeError::validation(
                "transition_seconds",
                "transition must be positive and fit inside a segment",
            ));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            for (slot, p) in seg.persons.iter().enumerate() {
                p.validate(slot)
                    .map_err(|e| GazeError::validation(format!("segments[{i}]"), e.to_string()))?;
                if p.present && (p.movement != Movement::Standing || p.angle != HOME_BEARINGS[slot])
                {
                    return Err(GazeError::validation(
                        format!("segments[{i}].persons[{slot}]"),
                        "segment targets must stand at their home bearing",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Compact segment notation used for the canonical schedule: four
/// space-separated slots, `.` for absent, otherwise `N`/`F` (near/far)
/// followed by any of `T` (talking), `W` (waving), `P` (pointing).
fn parse_compact(code: &str) -> Segment {
    let mut persons = [PersonState::absent(); PERSONS];
    for (slot, tok) in code.split_whitespace().enumerate() {
        if tok == "." {
            continue;
        }
        let mut chars = tok.chars();
        let distance = match chars.next() {
            Some('N') => NEAR_DISTANCE,
            Some('F') => FAR_DISTANCE,
            other => panic!("bad compact distance {other:?}"),
        };
        let mut p = PersonState::standing(distance, HOME_BEARINGS[slot]);
        for c in chars {
            match c {
                'T' => p.talking = true,
                'W' => p.waving = true,
                'P' => p.pointing = true,
                other => panic!("bad compact cue {other}"),
            }
        }
        persons[slot] = p;
    }
    Segment { persons }
}

/// A representative 24-segment, two-minute schedule with entries, exits,
/// conversation and gestures.
pub const CANONICAL_SCHEDULE: [&str; 24] = [
    "N . N .",
    "N . NT .",
    "N . NWP .",
    "N F NW .",
    "NT F N .",
    "N FT N F",
    "N F . F",
    ". FW . FT",
    ". N . F",
    "F NT . F",
    "F N N F",
    "F N NP FW",
    "FT N N .",
    "F . NT .",
    "F NW N N",
    ". N N NT",
    ". NP F N",
    "N N F NW",
    "NT N . N",
    "N . . NT",
    "NW . F N",
    "N F FT .",
    "NP F F .",
    ". . N .",
];

pub fn canonical_segments() -> Vec<Segment> {
    CANONICAL_SCHEDULE
        .iter()
        .map(|c| parse_compact(c))
        .collect()
}

fn random_segment(rng: &mut ChaCha8Rng) -> Segment {
    let mut persons = [PersonState::absent(); PERSONS];
    for (slot, p) in persons.iter_mut().enumerate() {
        if rng.random_bool(0.6) {
            let distance = if rng.random_bool(0.5) {
                NEAR_DISTANCE
            } else {
                FAR_DISTANCE
            };
            *p = PersonState::standing(distance, HOME_BEARINGS[slot])
                .with_talking(rng.random_bool(0.2))
                .with_waving(rng.random_bool(0.15))
                .with_pointing(rng.random_bool(0.15));
        }
    }
    Segment { persons }
}

fn segment_from_spec(index: usize, spec: &SegmentSpec) -> Result<Segment> {
    let field = || format!("segments[{index}].persons");
    if spec.persons.len() > PERSONS {
        return Err(GazeError::validation(
            field(),
            format!("at most {PERSONS} persons, got {}", spec.persons.len()),
        ));
    }
    let mut persons = [PersonState::absent(); PERSONS];
    for p in &spec.persons {
        let slot = HOME_BEARINGS
            .iter()
            .position(|&b| b == p.angle)
            .ok_or_else(|| {
                GazeError::validation(
                    field(),
                    format!("angle {} is not a home bearing {HOME_BEARINGS:?}", p.angle),
                )
            })?;
        if persons[slot].present {
            return Err(GazeError::validation(
                field(),
                format!("two persons at bearing {}", p.angle),
            ));
        }
        persons[slot] = PersonState::standing(p.distance, p.angle)
            .with_waving(p.waving)
            .with_pointing(p.pointing)
            .with_talking(p.talking);
        persons[slot].validate(slot)?;
    }
    Ok(Segment { persons })
}

/// Builds a script; random sources draw from `seed`.
pub fn build_script(config: &ScenarioConfig, seed: u64) -> Result<ScenarioScript> {
    if config.fps == 0 {
        return Err(GazeError::validation("fps", "must be positive"));
    }
    let fps = f64::from(config.fps);
    let segment_frames = (config.segment_seconds * fps).round() as usize;
    let transition_frames = (config.transition_seconds * fps).round() as usize;
    let segments = match &config.source {
        SegmentSource::Canonical => canonical_segments(),
        SegmentSource::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..*count).map(|_| random_segment(&mut rng)).collect()
        }
        SegmentSource::Explicit { segments } => segments
            .iter()
            .enumerate()
            .map(|(i, s)| segment_from_spec(i, s))
            .collect::<Result<_>>()?,
    };
    let script = ScenarioScript {
        fps: config.fps,
        segment_frames,
        transition_frames,
        segments,
    };
    script.validate()?;
    Ok(script)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn offscreen(slot: usize) -> f64 {
    OFFSCREEN_ANGLE * HOME_BEARINGS[slot].signum()
}

/// Axis-aligned screen rectangle, half-open `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Clips to the screen; `None` when nothing is left.
    fn clip(self) -> Option<Rect> {
        let r = Rect {
            x0: self.x0.max(0.0),
            y0: self.y0.max(0.0),
            x1: self.x1.min(SCREEN_WIDTH),
            y1: self.y1.min(SCREEN_HEIGHT),
        };
        (r.x1 - r.x0 >= 1.0 && r.y1 - r.y0 >= 1.0).then_some(r)
    }
}

/// Fixed pinhole projection constants.
pub mod projection {
    /// Half of the horizontal field of view, in degrees.
    pub const HALF_FOV_DEG: f64 = 70.0;
    /// Body height in pixels at the near distance.
    pub const BODY_HEIGHT_AT_NEAR: f64 = 600.0;
    pub const BODY_ASPECT: f64 = 0.4;
    /// Hand square side as a fraction of the body height.
    pub const HAND_FRACTION: f64 = 0.15;
    /// Hand top edge above the body centre, as a fraction of the body height.
    pub const HAND_RAISE: f64 = 0.1;
    pub const BOX_CENTER: (f64, f64) = (960.0, 800.0);
    pub const BOX_SIZE: (f64, f64) = (240.0, 160.0);
}

/// Per-frame screen regions, indexed by Fine13 label index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiMap {
    pub regions: [Option<Rect>; FINE],
}

impl AoiMap {
    pub fn get(&self, target: Target) -> Option<Rect> {
        self.regions[Label::project(Taxonomy::Fine13, target).index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Target, Rect)> + '_ {
        self.regions.iter().enumerate().filter_map(|(i, r)| {
            r.map(|r| {
                let label = Label::from_index(i, Taxonomy::Fine13).expect("13 regions");
                (label.target(), r)
            })
        })
    }

    /// Fine target whose region contains the point; overlaps resolve to the
    /// smallest region, then to the lower label index.
    pub fn locate(&self, x: f64, y: f64) -> Option<Target> {
        let mut best: Option<(f64, Target)> = None;
        for (target, rect) in self.iter() {
            if rect.contains(x, y) && best.is_none_or(|(a, _)| rect.area() < a) {
                best = Some((rect.area(), target));
            }
        }
        best.map(|(_, t)| t)
    }
}

pub fn project_aoi(frame: &SceneFrame) -> AoiMap {
    use projection::*;
    let mut regions = [None; FINE];
    let scale = (HALF_FOV_DEG.to_radians()).tan();
    for (slot, p) in frame.persons.iter().enumerate() {
        if !p.present {
            continue;
        }
        let angle = p.angle.clamp(-89.0, 89.0).to_radians();
        let cx = SCREEN_WIDTH / 2.0 + SCREEN_WIDTH / 2.0 * angle.tan() / scale;
        let h = (BODY_HEIGHT_AT_NEAR * NEAR_DISTANCE / p.distance).min(SCREEN_HEIGHT * 0.9);
        let w = h * BODY_ASPECT;
        let cy = SCREEN_HEIGHT / 2.0;
        let body = Rect {
            x0: cx - w / 2.0,
            y0: cy - h / 2.0,
            x1: cx + w / 2.0,
            y1: cy + h / 2.0,
        };
        let hs = h * HAND_FRACTION;
        let hy = cy - h * HAND_RAISE;
        // The person faces the viewer: their right hand is on screen left.
        let right = Rect {
            x0: body.x0,
            y0: hy,
            x1: body.x0 + hs,
            y1: hy + hs,
        };
        let left = Rect {
            x0: body.x1 - hs,
            y0: hy,
            x1: body.x1,
            y1: hy + hs,
        };
        let s = slot as u8;
        for (target, rect) in [
            (Target::Body(s), body),
            (Target::RightHand(s), right),
            (Target::LeftHand(s), left),
        ] {
            regions[Label::project(Taxonomy::Fine13, target).index()] = rect.clip();
        }
    }
    let (bx, by) = BOX_CENTER;
    let (bw, bh) = BOX_SIZE;
    regions[FINE - 1] = Some(Rect {
        x0: bx - bw / 2.0,
        y0: by - bh / 2.0,
        x1: bx + bw / 2.0,
        y1: by + bh / 2.0,
    });
    AoiMap { regions }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub frames: Vec<SceneFrame>,
    pub aoi: Vec<AoiMap>,
}

/// Renders the script at its frame rate. Entries, exits and distance
/// changes are interpolated linearly over the first `transition_frames`
/// frames of the segment that introduces them.
pub fn render_frames(script: &ScenarioScript) -> Result<Rendered> {
    script.validate()?;
    let n = script.transition_frames;
    let mut frames = Vec::with_capacity(script.total_frames());
    for (si, seg) in script.segments.iter().enumerate() {
        let prev = if si == 0 {
            seg
        } else {
            &script.segments[si - 1]
        };
        for k in 0..script.segment_frames {
            let frame_index = si * script.segment_frames + k;
            let alpha = if k < n {
                (k + 1) as f64 / n as f64
            } else {
                1.0
            };
            let mut persons = [PersonState::absent(); PERSONS];
            for slot in 0..PERSONS {
                let (from, to) = (prev.persons[slot], seg.persons[slot]);
                persons[slot] = match (from.present, to.present) {
                    (false, false) => PersonState::absent(),
                    (true, true) => PersonState {
                        distance: lerp(from.distance, to.distance, alpha),
                        ..to
                    },
                    (false, true) if alpha < 1.0 => PersonState {
                        angle: lerp(offscreen(slot), to.angle, alpha),
                        movement: Movement::Entering,
                        ..to
                    },
                    (false, true) => to,
                    (true, false) if alpha < 1.0 => PersonState {
                        angle: lerp(from.angle, offscreen(slot), alpha),
                        movement: Movement::Leaving,
                        ..PersonState::standing(from.distance, from.angle)
                    },
                    (true, false) => PersonState::absent(),
                };
            }
            frames.push(SceneFrame {
                frame_index,
                persons,
                box_angle: BOX_ANGLE,
            });
        }
    }
    let aoi = frames.iter().map(project_aoi).collect();
    Ok(Rendered { frames, aoi })
}

/// Writes the AOI sidecar: `frame,label,x0,y0,x1,y1`, one row per region.
pub fn write_aoi<W: Write>(w: W, aoi: &[AoiMap]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame", "label", "x0", "y0", "x1", "y1"])?;
    for (i, map) in aoi.iter().enumerate() {
        for (target, r) in map.iter() {
            out.write_record([
                i.to_string(),
                Label::project(Taxonomy::Fine13, target).name(),
                r.x0.to_string(),
                r.y0.to_string(),
                r.x1.to_string(),
                r.y1.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads an AOI sidecar. `frames` sets the output length; frames without
/// rows get an empty map.
pub fn read_aoi<R: BufRead>(r: R, frames: usize) -> Result<Vec<AoiMap>> {
    let mut maps = vec![
        AoiMap {
            regions: [None; FINE]
        };
        frames
    ];
    let mut rdr = csv::Reader::from_reader(r);
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let frame: usize = get(0)
            .parse()
            .map_err(|_| GazeError::Format(format!("bad AOI frame `{}`", get(0))))?;
        if frame >= frames {
            return Err(GazeError::Format(format!(
                "AOI frame {frame} beyond {frames} frames"
            )));
        }
        let label = Label::parse(get(1), Taxonomy::Fine13)?;
        let num = |i: usize| -> Result<f64> {
            get(i)
                .parse()
                .map_err(|_| GazeError::Format(format!("bad AOI coordinate `{}`", get(i))))
        };
        maps[frame].regions[label.index()] = Some(Rect {
            x0: num(2)?,
            y0: num(3)?,
            x1: num(4)?,
            y1: num(5)?,
        });
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::encode_frame;

    #[test]
    fn canonical_script_is_two_minutes() {
        let script = build_script(&ScenarioConfig::default(), 0).unwrap();
        assert_eq!(script.segments.len(), 24);
        assert_eq!(script.total_frames(), 3600);
        assert_eq!(script.total_frames(), 30 * 120);
        let r = render_frames(&script).unwrap();
        assert_eq!(r.frames.len(), 3600);
        assert_eq!(r.aoi.len(), 3600);
        for f in &r.frames {
            f.validate().unwrap();
        }
    }

    #[test]
    fn single_static_segment_is_constant() {
        let config = ScenarioConfig {
            source: SegmentSource::Explicit {
                segments: vec![SegmentSpec {
                    persons: vec![PersonSpec {
                        angle: 30.0,
                        distance: 1.5,
                        waving: false,
                        pointing: false,
                        talking: true,
                    }],
                }],
            },
            ..ScenarioConfig::default()
        };
        let r = render_frames(&build_script(&config, 1).unwrap()).unwrap();
        assert_eq!(r.frames.len(), 150);
        let first = encode_frame(&r.frames[0]).unwrap();
        assert!(r.frames.iter().all(|f| encode_frame(f).unwrap() == first));
        assert!(r.aoi.iter().all(|a| *a == r.aoi[0]));
    }

    #[test]
    fn random_scripts_are_seeded() {
        let c = ScenarioConfig::random(24);
        assert_eq!(build_script(&c, 9).unwrap(), build_script(&c, 9).unwrap());
        assert_ne!(build_script(&c, 9).unwrap(), build_script(&c, 10).unwrap());
    }

    #[test]
    fn config_validation() {
        let p = |angle| PersonSpec {
            angle,
            distance: 1.5,
            waving: false,
            pointing: false,
            talking: false,
        };
        let five = ScenarioConfig {
            source: SegmentSource::Explicit {
                segments: vec![SegmentSpec {
                    persons: vec![p(-60.0), p(-30.0), p(30.0), p(60.0), p(60.0)],
                }],
            },
            ..ScenarioConfig::default()
        };
        assert!(build_script(&five, 0).is_err());
        let off_bearing = ScenarioConfig {
            source: SegmentSource::Explicit {
                segments: vec![SegmentSpec {
                    persons: vec![p(45.0)],
                }],
            },
            ..ScenarioConfig::default()
        };
        let err = build_script(&off_bearing, 0).unwrap_err().to_string();
        assert!(err.contains("home bearing"), "{err}");
    }

    #[test]
    fn entering_trace_is_monotone_and_lands_home() {
        let spec = |present: bool| SegmentSpec {
            persons: if present {
                vec![PersonSpec {
                    angle: 30.0,
                    distance: 1.5,
                    waving: false,
                    pointing: false,
                    talking: false,
                }]
            } else {
                vec![]
            },
        };
        let config = ScenarioConfig {
            source: SegmentSource::Explicit {
                segments: vec![spec(false), spec(true), spec(false)],
            },
            ..ScenarioConfig::default()
        };
        let r = render_frames(&build_script(&config, 0).unwrap()).unwrap();
        let trace: Vec<f64> = r.frames[150..180]
            .iter()
            .map(|f| f.persons[2].angle)
            .collect();
        assert!(trace.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(trace[29], 30.0);
        assert!((trace[0] - (90.0 - 60.0 / 30.0)).abs() < 1e-12);
        assert!(r.frames[150..179]
            .iter()
            .all(|f| f.persons[2].movement == Movement::Entering));
        assert_eq!(r.frames[179].persons[2].movement, Movement::Standing);
        // leaving from the third segment on
        let leave: Vec<f64> = r.frames[300..329]
            .iter()
            .map(|f| f.persons[2].angle)
            .collect();
        assert!(leave.windows(2).all(|w| w[1] > w[0]));
        assert!(r.frames[300..329]
            .iter()
            .all(|f| f.persons[2].movement == Movement::Leaving));
        assert!(!r.frames[329].persons[2].present);
    }

    #[test]
    fn attribute_traces_are_continuous() {
        let script = build_script(&ScenarioConfig::random(40), 3).unwrap();
        let r = render_frames(&script).unwrap();
        let max_angle_step = (OFFSCREEN_ANGLE - 30.0) / script.transition_frames as f64;
        let max_dist_step = (FAR_DISTANCE - NEAR_DISTANCE) / script.transition_frames as f64;
        for w in r.frames.windows(2) {
            for slot in 0..PERSONS {
                let (a, b) = (w[0].persons[slot], w[1].persons[slot]);
                if a.present && b.present {
                    assert!((a.angle - b.angle).abs() <= max_angle_step + 1e-9);
                    assert!((a.distance - b.distance).abs() <= max_dist_step + 1e-9);
                }
            }
        }
    }

    #[test]
    fn aoi_geometry() {
        let mut frame = SceneFrame::empty(0);
        frame.persons[0] = PersonState::standing(1.5, -60.0);
        frame.persons[3] = PersonState::standing(3.0, 60.0);
        let map = project_aoi(&frame);
        let near = map.get(Target::Body(0)).unwrap();
        let far = map.get(Target::Body(3)).unwrap();
        assert!((near.height() - 2.0 * far.height()).abs() < 1e-9);
        assert!(map.get(Target::Body(1)).is_none());
        assert!(map.get(Target::RightHand(1)).is_none());
        for (_, r) in map.iter() {
            assert!(r.x0 >= 0.0 && r.x1 <= SCREEN_WIDTH && r.y0 >= 0.0 && r.y1 <= SCREEN_HEIGHT);
        }
        let (cx, cy) = near.center();
        assert_eq!(map.locate(cx, cy), Some(Target::Body(0)));
        let (hx, hy) = map.get(Target::LeftHand(0)).unwrap().center();
        assert_eq!(map.locate(hx, hy), Some(Target::LeftHand(0)));
        assert_eq!(map.locate(960.0, 800.0), Some(Target::Box));
        assert_eq!(map.locate(5.0, 5.0), None);
    }

    #[test]
    fn aoi_file_roundtrip() {
        let r = render_frames(&build_script(&ScenarioConfig::default(), 0).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_aoi(&mut buf, &r.aoi[..200]).unwrap();
        let back = read_aoi(buf.as_slice(), 200).unwrap();
        assert_eq!(back, r.aoi[..200]);
    }
}
