//! Oracles shared by several test targets.
#![allow(dead_code)]

use gaze_core::models::{Architecture, Model, Sample};
use gaze_core::scenario::{build_script, render_frames, ScenarioConfig};
use gaze_core::types::{encode_frame, FeatureVector, Taxonomy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Entries checked per block; smaller blocks are checked exhaustively.
pub const PER_BLOCK: usize = 48;

pub fn windows() -> Vec<Vec<FeatureVector>> {
    let script = build_script(&ScenarioConfig::default(), 0).unwrap();
    let frames: Vec<FeatureVector> = render_frames(&script)
        .unwrap()
        .frames
        .iter()
        .map(|f| encode_frame(f).unwrap())
        .collect();
    // starts chosen to span an entry, a distance change and a gesture onset
    [140usize, 1040, 1480]
        .iter()
        .map(|&s| frames[s..s + 30].to_vec())
        .collect()
}

pub struct BlockReport {
    pub name: &'static str,
    pub checked: usize,
    pub worst: f64,
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    let scale = a.abs().max(n.abs());
    // Below this scale the central difference is dominated by rounding in the
    // loss (a few times 1e-16 / STEP), so compare against the floor instead.
    if scale < 1e-6 {
        (a - n).abs() / 1e-6
    } else {
        (a - n).abs() / scale
    }
}

pub fn check(arch: Architecture, taxonomy: Taxonomy) -> Vec<BlockReport> {
    let ws = windows();
    let batch: Vec<Sample> = ws
        .iter()
        .zip([0usize, 2, taxonomy.size() - 1])
        .map(|(w, t)| Sample {
            window: w,
            target: t,
        })
        .collect();
    let mut model = Model::new(arch, taxonomy, 7);
    let (_, grads) = model.loss_and_grad(&batch).unwrap();
    let names = model.block_names();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut out = Vec::new();
    for (bi, name) in names.iter().enumerate() {
        let len = model.params()[bi].len();
        let picks: Vec<usize> = if len <= PER_BLOCK {
            (0..len).collect()
        } else {
            (0..PER_BLOCK).map(|_| rng.random_range(0..len)).collect()
        };
        let mut worst = 0.0f64;
        for &flat in &picks {
            let orig = model.params()[bi].as_slice().unwrap()[flat];
            model.params_mut()[bi].as_slice_mut().unwrap()[flat] = orig + STEP;
            let plus = model.loss(&batch).unwrap();
            model.params_mut()[bi].as_slice_mut().unwrap()[flat] = orig - STEP;
            let minus = model.loss(&batch).unwrap();
            model.params_mut()[bi].as_slice_mut().unwrap()[flat] = orig;
            let numeric = (plus - minus) / (2.0 * STEP);
            let analytic = grads[bi].as_slice().unwrap()[flat];
            worst = worst.max(relative_error(analytic, numeric));
        }
        out.push(BlockReport {
            name,
            checked: picks.len(),
            worst,
        });
    }
    out
}

/// Two-sided Student-t tail by quadrature. With `t = sqrt(df) tan(theta)` the
/// density becomes `cos(theta)^(df - 1)`, so the tail is a ratio of two
/// integrals over `[theta_t, pi/2]` and `[0, pi/2]`; smooth enough for
/// Simpson to reach 1e-9 once df >= 2.
pub fn tail_by_quadrature(t: f64, df: f64) -> f64 {
    let f = |th: f64| th.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    let theta = (t.abs() / df.sqrt()).atan();
    simpson(theta, half) / simpson(0.0, half)
}

/// Welch statistic and df written out directly.
pub fn welch_by_hand(m1: f64, s1: f64, n1: f64, m2: f64, s2: f64, n2: f64) -> (f64, f64) {
    let a = s1 * s1 / n1;
    let b = s2 * s2 / n2;
    let t = (m1 - m2) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
    (t, df)
}
