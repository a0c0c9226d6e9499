//! Gaze-behaviour features per recording and the t-tests used to compare
//! cohorts.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{GazeError, Result};
use crate::preprocess::{Cohort, FrameLabel, Stimulus};

/// Run statistics over a per-frame label sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazeFeatureSet {
    pub max_label_frame: usize,
    pub total_label_shifts: usize,
    pub mean_label_frame: f64,
}

impl GazeFeatureSet {
    pub const ZERO: GazeFeatureSet = GazeFeatureSet {
        max_label_frame: 0,
        total_label_shifts: 0,
        mean_label_frame: 0.0,
    };
}

/// Runs are maximal blocks of one repeated label. `None` frames end a run
/// and are not counted; a shift is a change between two adjacent labelled
/// frames.
pub fn gaze_features<T: PartialEq>(labels: &[Option<T>]) -> GazeFeatureSet {
    let mut runs: Vec<usize> = Vec::new();
    let mut shifts = 0;
    let mut prev: Option<&T> = None;
    for l in labels {
        match (l.as_ref(), prev) {
            (None, _) => prev = None,
            (Some(cur), Some(p)) if cur == p => *runs.last_mut().expect("open run") += 1,
            (Some(cur), p) => {
                if p.is_some() {
                    shifts += 1;
                }
                runs.push(1);
                prev = Some(cur);
            }
        }
    }
    if runs.is_empty() {
        return GazeFeatureSet::ZERO;
    }
    GazeFeatureSet {
        max_label_frame: *runs.iter().max().expect("non-empty"),
        total_label_shifts: shifts,
        mean_label_frame: runs.iter().sum::<usize>() as f64 / runs.len() as f64,
    }
}

/// Features of a preprocessed label stream; invalid and unlabelled frames
/// are both gaps.
pub fn frame_label_features(labels: &[FrameLabel]) -> GazeFeatureSet {
    let seq: Vec<_> = labels.iter().map(|l| l.label()).collect();
    gaze_features(&seq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
}

/// Two-sided tail probability `P(|T| >= |t|)` of Student's t with `df`
/// degrees of freedom.
pub fn t_two_sided_p(t: f64, df: f64) -> Result<f64> {
    if df.is_nan() || df <= 0.0 {
        return Err(GazeError::validation(
            "df",
            format!("must be positive, got {df}"),
        ));
    }
    if t.is_nan() {
        return Err(GazeError::validation("t", "statistic is NaN"));
    }
    if t.is_infinite() {
        return Ok(0.0);
    }
    let x = df / (df + t * t);
    Ok(beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0))
}

fn check_summary(name: &str, sd: f64, n: usize) -> Result<()> {
    if n < 2 {
        return Err(GazeError::validation(
            name,
            format!("needs n >= 2, got {n}"),
        ));
    }
    if !sd.is_finite() || sd < 0.0 {
        return Err(GazeError::validation(
            name,
            format!("sd must be finite and >= 0, got {sd}"),
        ));
    }
    Ok(())
}

/// Welch's unequal-variance test from summary statistics. With both SDs
/// zero the result is `p = 1` for equal means and `p = 0` otherwise.
pub fn welch_ttest_summary(
    m1: f64,
    sd1: f64,
    n1: usize,
    m2: f64,
    sd2: f64,
    n2: usize,
) -> Result<TTestResult> {
    check_summary("sample 1", sd1, n1)?;
    check_summary("sample 2", sd2, n2)?;
    let v1 = sd1 * sd1 / n1 as f64;
    let v2 = sd2 * sd2 / n2 as f64;
    let se2 = v1 + v2;
    if se2 == 0.0 {
        let df = (n1 + n2 - 2) as f64;
        return Ok(if m1 == m2 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: (m1 - m2).signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = (m1 - m2) / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (n1 - 1) as f64 + v2 * v2 / (n2 - 1) as f64);
    Ok(TTestResult {
        t,
        df,
        p: t_two_sided_p(t, df)?,
    })
}

/// Mean and sample standard deviation (`n - 1` denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

pub fn welch_ttest_samples(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(GazeError::validation(
            "samples",
            format!(
                "each sample needs >= 2 values, got {} and {}",
                xs.len(),
                ys.len()
            ),
        ));
    }
    let (m1, s1) = mean_sd(xs);
    let (m2, s2) = mean_sd(ys);
    welch_ttest_summary(m1, s1, xs.len(), m2, s2, ys.len())
}

/// One-sample test on `after - before`, `df = n - 1`.
pub fn paired_ttest(before: &[f64], after: &[f64]) -> Result<TTestResult> {
    if before.len() != after.len() {
        return Err(GazeError::LengthMismatch(format!(
            "paired samples of length {} and {}",
            before.len(),
            after.len()
        )));
    }
    if before.len() < 2 {
        return Err(GazeError::validation(
            "samples",
            "paired test needs >= 2 pairs",
        ));
    }
    let diffs: Vec<f64> = after.iter().zip(before).map(|(a, b)| a - b).collect();
    let n = diffs.len();
    let df = (n - 1) as f64;
    let (mean, sd) = mean_sd(&diffs);
    if sd == 0.0 {
        return Ok(if mean == 0.0 {
            TTestResult { t: 0.0, df, p: 1.0 }
        } else {
            TTestResult {
                t: mean.signum() * f64::INFINITY,
                df,
                p: 0.0,
            }
        });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTestResult {
        t,
        df,
        p: t_two_sided_p(t, df)?,
    })
}

/// One row of the per-participant feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub participant: String,
    pub cohort: Cohort,
    pub stimulus: Stimulus,
    #[serde(flatten)]
    pub features: GazeFeatureSet,
}

pub fn write_feature_table<W: Write>(w: W, rows: &[FeatureRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "participant",
        "cohort",
        "stimulus",
        "max_label_frame",
        "total_label_shifts",
        "mean_label_frame",
    ])?;
    for r in rows {
        out.write_record([
            r.participant.clone(),
            r.cohort.to_string(),
            r.stimulus.to_string(),
            r.features.max_label_frame.to_string(),
            r.features.total_label_shifts.to_string(),
            format!("{:.6}", r.features.mean_label_frame),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A cohort comparison of one feature under one stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub stimulus: String,
    pub feature: String,
    pub m1: f64,
    pub sd1: f64,
    pub n1: usize,
    pub m2: f64,
    pub sd2: f64,
    pub n2: usize,
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

impl ComparisonRow {
    pub fn from_summary(
        stimulus: &str,
        feature: &str,
        (m1, sd1, n1): (f64, f64, usize),
        (m2, sd2, n2): (f64, f64, usize),
    ) -> Result<Self> {
        let r = welch_ttest_summary(m1, sd1, n1, m2, sd2, n2)?;
        Ok(ComparisonRow {
            stimulus: stimulus.into(),
            feature: feature.into(),
            m1,
            sd1,
            n1,
            m2,
            sd2,
            n2,
            t: r.t,
            df: r.df,
            p: r.p,
        })
    }
}

pub const FEATURE_NAMES: [&str; 3] = ["max_label_frame", "total_label_shifts", "mean_label_frame"];

fn feature_value(f: &GazeFeatureSet, name: &str) -> f64 {
    match name {
        "max_label_frame" => f.max_label_frame as f64,
        "total_label_shifts" => f.total_label_shifts as f64,
        _ => f.mean_label_frame,
    }
}

/// Child versus adult Welch comparisons for every stimulus and feature
/// present in the table. Groups with fewer than two rows are skipped.
pub fn compare_cohorts(rows: &[FeatureRow]) -> Result<Vec<ComparisonRow>> {
    let mut out = Vec::new();
    for stimulus in [Stimulus::Animation, Stimulus::LiveAction] {
        for name in FEATURE_NAMES {
            let pick = |c: Cohort| -> Vec<f64> {
                rows.iter()
                    .filter(|r| r.cohort == c && r.stimulus == stimulus)
                    .map(|r| feature_value(&r.features, name))
                    .collect()
            };
            let (a, b) = (pick(Cohort::Child), pick(Cohort::Adult));
            if a.len() < 2 || b.len() < 2 {
                continue;
            }
            let (m1, s1) = mean_sd(&a);
            let (m2, s2) = mean_sd(&b);
            out.push(ComparisonRow::from_summary(
                &stimulus.to_string(),
                name,
                (m1, s1, a.len()),
                (m2, s2, b.len()),
            )?);
        }
    }
    Ok(out)
}

pub fn write_comparisons<W: Write>(w: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean, standard deviation and size of one group.
pub type Summary = (f64, f64, usize);

/// Summary rows of the published cohort comparison as (stimulus, feature,
/// children, adults), n = 12 each.
pub fn published_summaries() -> Vec<(&'static str, &'static str, Summary, Summary)> {
    vec![
        (
            "animation",
            "max_label_frame",
            (203.3, 79.6, 12),
            (286.0, 119.0, 12),
        ),
        (
            "animation",
            "total_label_shifts",
            (108.2, 22.2, 12),
            (79.0, 31.6, 12),
        ),
        (
            "animation",
            "mean_label_frame",
            (26.4, 7.1, 12),
            (44.9, 20.6, 12),
        ),
        (
            "live-action",
            "total_label_shifts",
            (103.2, 25.3, 12),
            (78.5, 33.7, 12),
        ),
        (
            "live-action",
            "mean_label_frame",
            (30.0, 8.0, 12),
            (49.0, 28.9, 12),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_rules() {
        let (a, b) = (Some('A'), Some('B'));
        let f = gaze_features(&[a, a, a, b, b]);
        assert_eq!(
            (f.max_label_frame, f.total_label_shifts, f.mean_label_frame),
            (3, 1, 2.5)
        );
        let f = gaze_features(&[a]);
        assert_eq!(
            (f.max_label_frame, f.total_label_shifts, f.mean_label_frame),
            (1, 0, 1.0)
        );
        let f = gaze_features(&[a, a, None, a, b, a]);
        assert_eq!(
            (f.max_label_frame, f.total_label_shifts, f.mean_label_frame),
            (2, 2, 1.25)
        );
        assert_eq!(gaze_features::<char>(&[]), GazeFeatureSet::ZERO);
        assert_eq!(gaze_features::<char>(&[None, None]), GazeFeatureSet::ZERO);
    }

    #[test]
    fn t_tail_reference_points() {
        assert!((t_two_sided_p(1.0, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((t_two_sided_p(1.959963984540054, 1e7).unwrap() - 0.05).abs() < 1e-6);
        assert!((t_two_sided_p(2.228, 10.0).unwrap() - 0.05).abs() < 1e-3);
        assert!(t_two_sided_p(1.0, 0.0).is_err());
        assert_eq!(t_two_sided_p(0.0, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_conventions() {
        let r = welch_ttest_summary(3.0, 0.0, 4, 3.0, 0.0, 4).unwrap();
        assert_eq!((r.t, r.p), (0.0, 1.0));
        let r = welch_ttest_summary(3.0, 0.0, 4, 5.0, 0.0, 4).unwrap();
        assert_eq!(r.p, 0.0);
        let r = paired_ttest(&[1.0, 2.0, 3.0], &[3.0, 4.0, 5.0]).unwrap();
        assert_eq!(r.p, 0.0);
        let r = paired_ttest(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.p, 1.0);
        assert!(paired_ttest(&[1.0], &[1.0]).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[1.0]).is_err());
        assert!(welch_ttest_samples(&[1.0], &[1.0, 2.0]).is_err());
    }
}
