//! Synthetic attention: a salience-driven gaze policy that labels every
//! rendered frame, plus a 1000 Hz eye-tracker simulator built on top of it.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::preprocess::GazeSample;
use crate::scenario::{AoiMap, Rendered};
use crate::types::{Label, Movement, SceneFrame, Target, Taxonomy, PERSONS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SalienceWeights {
    pub talking: f64,
    pub waving: f64,
    pub pointing: f64,
    /// Applies to walkers, entering or leaving.
    pub entering: f64,
    /// Multiplies `1 / distance`.
    pub proximity: f64,
    /// Constant pull of the box.
    pub box_weight: f64,
}

impl Default for SalienceWeights {
    fn default() -> Self {
        SalienceWeights {
            talking: 4.0,
            waving: 3.0,
            pointing: 2.0,
            entering: 1.5,
            proximity: 1.0,
            box_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePolicy {
    pub mode: OracleMode,
    #[serde(default)]
    pub weights: SalienceWeights,
    /// Fixation length is uniform over `min..=max` frames.
    pub fixation_min_frames: usize,
    pub fixation_max_frames: usize,
    /// Standard deviation of the fixation point around a region centre, as a
    /// fraction of the region size.
    pub point_spread: f64,
    pub seed: u64,
}

impl OraclePolicy {
    pub fn deterministic() -> Self {
        OraclePolicy {
            mode: OracleMode::Deterministic,
            weights: SalienceWeights::default(),
            fixation_min_frames: 1,
            fixation_max_frames: 1,
            point_spread: 0.0,
            seed: 0,
        }
    }

    pub fn stochastic(seed: u64) -> Self {
        OraclePolicy {
            mode: OracleMode::Stochastic,
            weights: SalienceWeights::default(),
            fixation_min_frames: 6,
            fixation_max_frames: 30,
            point_spread: 0.15,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        for (name, v) in [
            ("talking", w.talking),
            ("waving", w.waving),
            ("pointing", w.pointing),
            ("entering", w.entering),
            ("proximity", w.proximity),
            ("box_weight", w.box_weight),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(GazeError::validation(
                    format!("weights.{name}"),
                    format!("must be finite and >= 0, got {v}"),
                ));
            }
        }
        if self.fixation_min_frames == 0 || self.fixation_min_frames > self.fixation_max_frames {
            return Err(GazeError::validation(
                "fixation_min_frames",
                "need 1 <= min <= max",
            ));
        }
        if !(0.0..=1.0).contains(&self.point_spread) {
            return Err(GazeError::validation("point_spread", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Salience of each visible Fine13 target, in label-index order.
pub fn salience(frame: &SceneFrame, aoi: &AoiMap, w: &SalienceWeights) -> Vec<(Target, f64)> {
    let mut out = Vec::with_capacity(13);
    let cue = |on: bool, weight: f64| if on { weight } else { 0.0 };
    for (target, _) in aoi.iter() {
        let s = match target {
            Target::Body(p) => {
                let p = &frame.persons[p as usize];
                if !p.present {
                    continue;
                }
                cue(p.talking, w.talking)
                    + cue(p.movement != Movement::Standing, w.entering)
                    + w.proximity / p.distance
            }
            Target::RightHand(p) => {
                let p = &frame.persons[p as usize];
                if !p.present || !p.waving {
                    continue;
                }
                w.waving
            }
            Target::LeftHand(p) => {
                let p = &frame.persons[p as usize];
                if !p.present || !p.pointing {
                    continue;
                }
                w.pointing
            }
            Target::Box => w.box_weight,
        };
        out.push((target, s));
    }
    out
}

/// Tie-break order: lowest person first, body before hands, box last.
fn priority(t: Target) -> (usize, u8) {
    match t {
        Target::Body(p) => (p as usize, 0),
        Target::RightHand(p) => (p as usize, 1),
        Target::LeftHand(p) => (p as usize, 2),
        Target::Box => (PERSONS, 0),
    }
}

fn most_salient(cands: &[(Target, f64)]) -> Option<Target> {
    cands
        .iter()
        .copied()
        .reduce(|best, c| {
            if c.1 > best.1 || (c.1 == best.1 && priority(c.0) < priority(best.0)) {
                c
            } else {
                best
            }
        })
        .map(|(t, _)| t)
}

fn sample_target(cands: &[(Target, f64)], rng: &mut ChaCha8Rng) -> Option<Target> {
    let total: f64 = cands.iter().map(|c| c.1).sum();
    if cands.is_empty() {
        return None;
    }
    if total <= 0.0 {
        return Some(cands[rng.random_range(0..cands.len())].0);
    }
    let mut u = rng.random::<f64>() * total;
    for &(t, s) in cands {
        if u < s {
            return Some(t);
        }
        u -= s;
    }
    cands.iter().rev().find(|c| c.1 > 0.0).map(|c| c.0)
}

/// One oracle decision. `target == None` is the explicit no-target marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub frame_index: usize,
    pub target: Option<Target>,
    pub point: Option<(f64, f64)>,
}

impl OracleSample {
    pub fn label(&self, taxonomy: Taxonomy) -> Option<Label> {
        self.target.map(|t| Label::project(taxonomy, t))
    }
}

fn fixation_point(aoi: &AoiMap, target: Target, spread: f64, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let rect = aoi.get(target).expect("target is visible");
    let center = rect.center();
    if spread <= 0.0 {
        return center;
    }
    let nx = Normal::new(0.0, spread * rect.width()).expect("finite spread");
    let ny = Normal::new(0.0, spread * rect.height()).expect("finite spread");
    for _ in 0..16 {
        let p = (center.0 + nx.sample(rng), center.1 + ny.sample(rng));
        if aoi.locate(p.0, p.1) == Some(target) {
            return p;
        }
    }
    center
}

/// Labels every frame with the policy's gaze target and a point inside that
/// target's region.
pub fn oracle_gaze(
    frames: &[SceneFrame],
    aoi: &[AoiMap],
    policy: &OraclePolicy,
) -> Result<Vec<OracleSample>> {
    if frames.is_empty() {
        return Err(GazeError::Empty("oracle needs at least one frame".into()));
    }
    if frames.len() != aoi.len() {
        return Err(GazeError::LengthMismatch(format!(
            "{} frames vs {} AOI maps",
            frames.len(),
            aoi.len()
        )));
    }
    policy.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut held: Option<(Target, usize)> = None;
    let mut out = Vec::with_capacity(frames.len());
    for (frame, map) in frames.iter().zip(aoi) {
        let cands = salience(frame, map, &policy.weights);
        let target = match policy.mode {
            OracleMode::Deterministic => most_salient(&cands),
            OracleMode::Stochastic => {
                let still_visible = |t: Target| cands.iter().any(|c| c.0 == t);
                match held {
                    Some((t, left)) if left > 0 && still_visible(t) => {
                        held = Some((t, left - 1));
                        Some(t)
                    }
                    _ => {
                        let t = sample_target(&cands, &mut rng);
                        let dur = rng
                            .random_range(policy.fixation_min_frames..=policy.fixation_max_frames);
                        held = t.map(|t| (t, dur - 1));
                        t
                    }
                }
            }
        };
        let point = target.map(|t| fixation_point(map, t, policy.point_spread, &mut rng));
        out.push(OracleSample {
            frame_index: frame.frame_index,
            target,
            point,
        });
    }
    Ok(out)
}

/// Convenience wrapper over a rendered scene.
pub fn oracle_for(rendered: &Rendered, policy: &OraclePolicy) -> Result<Vec<OracleSample>> {
    oracle_gaze(&rendered.frames, &rendered.aoi, policy)
}

/// Oracle label CSV: `frame_index,label,x,y`; no-target rows carry `none`
/// and empty coordinates.
pub fn write_oracle_csv<W: Write>(w: W, samples: &[OracleSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frame_index", "label", "x", "y"])?;
    for s in samples {
        let (label, x, y) = match (s.target, s.point) {
            (Some(t), Some((x, y))) => (
                Label::project(Taxonomy::Fine13, t).name(),
                x.to_string(),
                y.to_string(),
            ),
            _ => ("none".to_string(), String::new(), String::new()),
        };
        out.write_record([s.frame_index.to_string(), label, x, y])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_oracle_csv<R: BufRead>(r: R) -> Result<Vec<OracleSample>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let get = |i: usize| row.get(i).unwrap_or("").trim();
        let frame_index = get(0)
            .parse()
            .map_err(|_| GazeError::Format(format!("bad frame index `{}`", get(0))))?;
        let (target, point) = if get(1) == "none" {
            (None, None)
        } else {
            let t = Label::parse(get(1), Taxonomy::Fine13)?.target();
            let num = |i: usize| -> Result<f64> {
                get(i)
                    .parse()
                    .map_err(|_| GazeError::Format(format!("bad coordinate `{}`", get(i))))
            };
            (Some(t), Some((num(2)?, num(3)?)))
        };
        out.push(OracleSample {
            frame_index,
            target,
            point,
        });
    }
    Ok(out)
}

/// Parameters of the simulated eye tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Per-sample measurement noise, pixels.
    pub noise_px: f64,
    /// Expected blinks per second.
    pub blink_rate: f64,
    pub blink_min_ms: usize,
    pub blink_max_ms: usize,
    /// Where the eye rests when the oracle has no target; outside every AOI.
    pub idle_point: (f64, f64),
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            noise_px: 4.0,
            blink_rate: 0.1,
            blink_min_ms: 100,
            blink_max_ms: 300,
            idle_point: (40.0, 40.0),
            seed: 0,
        }
    }
}

/// Simulates a 1000 Hz recording of the oracle's gaze. Each 100 ms block
/// covers three frames split 33/33/34 samples, matching the resampler.
/// Blinks produce missing samples.
pub fn simulate_tracker(oracle: &[OracleSample], config: &TrackerConfig) -> Vec<GazeSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_px.max(0.0)).expect("finite noise");
    let blocks = oracle.len() / 3;
    let total = blocks * 100;
    let blink_p = config.blink_rate / 1000.0;
    let mut blink_left = 0usize;
    let mut out = Vec::with_capacity(total);
    for t in 0..total {
        let block = t / 100;
        let within = t % 100;
        let sub = (within / 33).min(2);
        let frame = block * 3 + sub;
        if blink_left == 0 && rng.random::<f64>() < blink_p {
            blink_left = rng
                .random_range(config.blink_min_ms..=config.blink_max_ms.max(config.blink_min_ms));
        }
        let (x, y) = if blink_left > 0 {
            blink_left -= 1;
            (None, None)
        } else {
            let base = oracle[frame].point.unwrap_or(config.idle_point);
            (
                Some(base.0 + noise.sample(&mut rng)),
                Some(base.1 + noise.sample(&mut rng)),
            )
        };
        out.push(GazeSample {
            t_ms: t as u64,
            x,
            y,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_script, project_aoi, render_frames, ScenarioConfig};
    use crate::types::PersonState;

    fn static_frames(frame: SceneFrame, n: usize) -> (Vec<SceneFrame>, Vec<AoiMap>) {
        let frames: Vec<SceneFrame> = (0..n)
            .map(|i| SceneFrame {
                frame_index: i,
                ..frame.clone()
            })
            .collect();
        let aoi = frames.iter().map(project_aoi).collect();
        (frames, aoi)
    }

    #[test]
    fn single_talking_person_gets_every_frame() {
        let mut f = SceneFrame::empty(0);
        f.persons[1] = PersonState::standing(3.0, -30.0).with_talking(true);
        let (frames, aoi) = static_frames(f, 50);
        let out = oracle_gaze(&frames, &aoi, &OraclePolicy::deterministic()).unwrap();
        assert!(out.iter().all(|s| s.target == Some(Target::Body(1))));
        for (s, map) in out.iter().zip(&aoi) {
            let (x, y) = s.point.unwrap();
            assert_eq!(map.locate(x, y), Some(Target::Body(1)));
        }
    }

    #[test]
    fn talking_beats_waving_when_weighted_higher() {
        let mut f = SceneFrame::empty(0);
        f.persons[1] = PersonState::standing(1.5, -30.0).with_talking(true);
        f.persons[2] = PersonState::standing(1.5, 30.0).with_waving(true);
        let (frames, aoi) = static_frames(f, 3);
        let policy = OraclePolicy::deterministic();
        // P2 body: 4 + 1/1.5 = 4.67; P3 right hand: 3; P3 body: 0.67
        assert!(policy.weights.talking > policy.weights.waving);
        let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
        assert_eq!(out[0].target, Some(Target::Body(1)));
    }

    #[test]
    fn ties_prefer_lowest_person_then_box_last() {
        let mut f = SceneFrame::empty(0);
        f.persons[0] = PersonState::standing(2.0, -60.0);
        f.persons[3] = PersonState::standing(2.0, 60.0);
        let mut policy = OraclePolicy::deterministic();
        policy.weights.box_weight = 0.5; // equals 1 / 2.0
        let (frames, aoi) = static_frames(f, 1);
        let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
        assert_eq!(out[0].target, Some(Target::Body(0)));

        let (frames, aoi) = static_frames(SceneFrame::empty(0), 1);
        let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
        assert_eq!(out[0].target, Some(Target::Box));
    }

    #[test]
    fn empty_scene_without_box_is_no_target() {
        let (frames, mut aoi) = static_frames(SceneFrame::empty(0), 4);
        for a in &mut aoi {
            a.regions[12] = None;
        }
        for policy in [OraclePolicy::deterministic(), OraclePolicy::stochastic(3)] {
            let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
            assert!(out.iter().all(|s| s.target.is_none() && s.point.is_none()));
        }
    }

    #[test]
    fn stochastic_is_seeded_and_only_targets_visible_things() {
        let script = build_script(&ScenarioConfig::default(), 0).unwrap();
        let r = render_frames(&script).unwrap();
        let a = oracle_for(&r, &OraclePolicy::stochastic(11)).unwrap();
        let b = oracle_for(&r, &OraclePolicy::stochastic(11)).unwrap();
        let c = oracle_for(&r, &OraclePolicy::stochastic(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (s, f) in a.iter().zip(&r.frames) {
            match s.target.unwrap() {
                Target::Box => {}
                t => assert!(f.persons[t.person().unwrap()].present),
            }
            let (x, y) = s.point.unwrap();
            assert_eq!(r.aoi[s.frame_index].locate(x, y), s.target);
        }
    }

    #[test]
    fn oracle_csv_roundtrip() {
        let r = render_frames(&build_script(&ScenarioConfig::default(), 0).unwrap()).unwrap();
        let a = oracle_for(&r, &OraclePolicy::stochastic(2)).unwrap();
        let mut buf = Vec::new();
        write_oracle_csv(&mut buf, &a).unwrap();
        assert_eq!(read_oracle_csv(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn tracker_length_and_blinks() {
        let r = render_frames(&build_script(&ScenarioConfig::default(), 0).unwrap()).unwrap();
        let o = oracle_for(&r, &OraclePolicy::deterministic()).unwrap();
        let samples = simulate_tracker(&o, &TrackerConfig::default());
        assert_eq!(samples.len(), 120_000);
        let missing = samples.iter().filter(|s| s.x.is_none()).count();
        assert!(missing > 0 && missing < 12_000, "{missing}");
        let again = simulate_tracker(&o, &TrackerConfig::default());
        assert_eq!(samples, again);
    }
}
