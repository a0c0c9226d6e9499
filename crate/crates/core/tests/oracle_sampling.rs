use gaze_core::oracle::{oracle_gaze, OraclePolicy};
use gaze_core::scenario::project_aoi;
use gaze_core::types::{PersonState, SceneFrame, Target};

fn static_scene(n: usize) -> (Vec<SceneFrame>, Vec<gaze_core::scenario::AoiMap>) {
    let mut f = SceneFrame::empty(0);
    f.persons[0] = PersonState::standing(1.5, -60.0).with_talking(true);
    f.persons[2] = PersonState::standing(3.0, 30.0).with_waving(true);
    f.persons[3] = PersonState::standing(3.0, 60.0).with_pointing(true);
    let frames: Vec<SceneFrame> = (0..n)
        .map(|i| SceneFrame {
            frame_index: i,
            ..f.clone()
        })
        .collect();
    let aoi = frames.iter().map(project_aoi).collect();
    (frames, aoi)
}

/// Salience of each candidate under the default weights, by hand:
/// talking 4, waving 3, pointing 2, proximity 1/d, box 0.5.
fn expected() -> Vec<(Target, f64)> {
    vec![
        (Target::Body(0), 4.0 + 1.0 / 1.5),
        (Target::Body(2), 1.0 / 3.0),
        (Target::RightHand(2), 3.0),
        (Target::Body(3), 1.0 / 3.0),
        (Target::LeftHand(3), 2.0),
        (Target::Box, 0.5),
    ]
}

#[test]
fn single_frame_fixations_follow_salience() {
    let n = 30_000;
    let (frames, aoi) = static_scene(n);
    let mut policy = OraclePolicy::stochastic(17);
    policy.fixation_min_frames = 1;
    policy.fixation_max_frames = 1;
    let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
    let exp = expected();
    let total: f64 = exp.iter().map(|e| e.1).sum();
    let mut chi2 = 0.0;
    for (target, w) in &exp {
        let observed = out.iter().filter(|s| s.target == Some(*target)).count() as f64;
        let e = n as f64 * w / total;
        chi2 += (observed - e).powi(2) / e;
    }
    let stray = out
        .iter()
        .filter(|s| !exp.iter().any(|e| Some(e.0) == s.target))
        .count();
    assert_eq!(stray, 0);
    // 5 degrees of freedom; upper 0.1% point is 20.515
    assert!(chi2 < 20.515, "chi2 = {chi2}");
}

#[test]
fn fixations_hold_for_the_minimum_duration() {
    let (frames, aoi) = static_scene(3000);
    let policy = OraclePolicy::stochastic(4);
    let out = oracle_gaze(&frames, &aoi, &policy).unwrap();
    let mut runs = Vec::new();
    let mut len = 1;
    for w in out.windows(2) {
        if w[0].target == w[1].target {
            len += 1;
        } else {
            runs.push(len);
            len = 1;
        }
    }
    // the final run may be cut by the end of the scene
    assert!(
        runs.iter().all(|&r| r >= policy.fixation_min_frames),
        "{runs:?}"
    );
    // every fixation point lies inside its target's region
    for (s, map) in out.iter().zip(&aoi) {
        let (x, y) = s.point.unwrap();
        assert!(map.get(s.target.unwrap()).unwrap().contains(x, y));
    }
}

#[test]
fn same_seed_same_gaze() {
    let (frames, aoi) = static_scene(500);
    let a = oracle_gaze(&frames, &aoi, &OraclePolicy::stochastic(9)).unwrap();
    let b = oracle_gaze(&frames, &aoi, &OraclePolicy::stochastic(9)).unwrap();
    let c = oracle_gaze(&frames, &aoi, &OraclePolicy::stochastic(10)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
