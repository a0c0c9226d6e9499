//! Participant-grouped cross-validation, top-k accuracy and cross-cohort
//! model agreement.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::models::{rank, train, Architecture, History, Model, Sample, TrainConfig};
use crate::preprocess::Dataset;
use crate::stats::mean_sd;
use crate::types::{FeatureVector, Taxonomy};

pub const DEFAULT_FOLDS: usize = 6;
const CHUNK: usize = 256;

/// Assignment of every participant to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_members(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.fold_members(f).len()).collect()
    }
}

/// Seeded round-robin deal of shuffled participants; fold sizes differ by at
/// most one.
pub fn make_folds(participants: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(GazeError::validation("folds", "k must be positive"));
    }
    let unique: BTreeSet<&String> = participants.iter().collect();
    if unique.len() != participants.len() {
        return Err(GazeError::validation(
            "participants",
            "duplicate participant id",
        ));
    }
    if participants.len() < k {
        return Err(GazeError::validation(
            "participants",
            format!("{} participants cannot fill {k} folds", participants.len()),
        ));
    }
    // sort first so the plan does not depend on input order
    let mut order: Vec<String> = unique.into_iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, i % k))
        .collect();
    Ok(FoldPlan { k, assignment })
}

/// Fraction of targets found among the first `k` entries of their ranking.
pub fn topk_accuracy(rankings: &[Vec<usize>], targets: &[usize], k: usize) -> Result<f64> {
    if rankings.len() != targets.len() {
        return Err(GazeError::LengthMismatch(format!(
            "{} rankings vs {} targets",
            rankings.len(),
            targets.len()
        )));
    }
    if k == 0 {
        return Err(GazeError::validation("k", "must be at least 1"));
    }
    if targets.is_empty() {
        return Err(GazeError::Empty("no predictions to score".into()));
    }
    let hits = rankings
        .iter()
        .zip(targets)
        .filter(|(r, t)| r.iter().take(k).any(|x| x == *t))
        .count();
    Ok(hits as f64 / targets.len() as f64)
}

/// Ranked label indices for each window, best first.
pub fn rank_windows(model: &Model, windows: &[&[FeatureVector]]) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(CHUNK) {
        let probs = model.forward(chunk)?;
        for row in probs.rows() {
            out.push(rank(row.as_slice().expect("contiguous")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub train: TrainConfig,
    /// Worker threads for fold training.
    pub jobs: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: DEFAULT_FOLDS,
            seed: 0,
            train: TrainConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub test_participants: Vec<String>,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Entry `k - 1` is top-k accuracy, for k = 1..=L.
    pub topk: Vec<f64>,
    pub history: History,
    /// Participants found on both sides of the split; must be empty.
    pub leaked: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub architecture: Architecture,
    pub taxonomy: Taxonomy,
    pub plan: FoldPlan,
    pub folds: Vec<FoldReport>,
    pub topk_mean: Vec<f64>,
    pub topk_sd: Vec<f64>,
    /// Rows are true labels, columns top-1 predictions, summed over folds.
    pub confusion: Vec<Vec<usize>>,
    /// Share of the most frequent label among all test examples.
    pub majority_baseline: f64,
}

impl EvalReport {
    pub fn audit_clean(&self) -> bool {
        self.folds.iter().all(|f| f.leaked.is_empty())
    }
}

pub struct CvOutcome {
    pub report: EvalReport,
    pub models: Vec<Model>,
}

struct FoldResult {
    report: FoldReport,
    model: Model,
    confusion: Vec<Vec<usize>>,
    label_counts: Vec<usize>,
}

fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    arch: Architecture,
    config: &CvConfig,
) -> Result<FoldResult> {
    let labels = dataset.taxonomy.size();
    let mut train_set = Vec::new();
    let mut test_set = Vec::new();
    let mut train_people = BTreeSet::new();
    let mut test_people = BTreeSet::new();
    for ex in dataset.iter() {
        let sample = Sample {
            window: ex.features,
            target: ex.target.index(),
        };
        let held_out = plan.assignment.get(ex.participant).copied() == Some(fold);
        if held_out {
            test_set.push(sample);
            test_people.insert(ex.participant.to_string());
        } else {
            train_set.push(sample);
            train_people.insert(ex.participant.to_string());
        }
    }
    if test_set.is_empty() || train_set.is_empty() {
        return Err(GazeError::Empty(format!(
            "fold {fold} has {} train and {} test examples",
            train_set.len(),
            test_set.len()
        )));
    }
    let fold_seed = config.seed.wrapping_add(fold as u64);
    let tc = TrainConfig {
        seed: fold_seed,
        ..config.train.clone()
    };
    let (model, history) = train(
        Model::new(arch, dataset.taxonomy, fold_seed),
        &train_set,
        &test_set,
        &tc,
    )?;
    let windows: Vec<_> = test_set.iter().map(|s| s.window).collect();
    let targets: Vec<usize> = test_set.iter().map(|s| s.target).collect();
    let rankings = rank_windows(&model, &windows)?;
    let topk = (1..=labels)
        .map(|k| topk_accuracy(&rankings, &targets, k))
        .collect::<Result<Vec<_>>>()?;
    let mut confusion = vec![vec![0usize; labels]; labels];
    let mut label_counts = vec![0usize; labels];
    for (r, &t) in rankings.iter().zip(&targets) {
        confusion[t][r[0]] += 1;
        label_counts[t] += 1;
    }
    Ok(FoldResult {
        report: FoldReport {
            fold,
            test_participants: plan
                .fold_members(fold)
                .iter()
                .map(|s| s.to_string())
                .collect(),
            train_examples: train_set.len(),
            test_examples: test_set.len(),
            topk,
            history,
            leaked: train_people.intersection(&test_people).cloned().collect(),
        },
        model,
        confusion,
        label_counts,
    })
}

/// Trains one model per fold on the other folds' participants and scores it
/// on the held-out ones.
pub fn run_cv(dataset: &Dataset, arch: Architecture, config: &CvConfig) -> Result<CvOutcome> {
    let plan = make_folds(&dataset.participants(), config.folds, config.seed)?;
    let slots: Vec<Mutex<Option<Result<FoldResult>>>> =
        (0..config.folds).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let fold = next.fetch_add(1, Ordering::SeqCst);
        if fold >= config.folds {
            break;
        }
        let r = run_fold(dataset, &plan, fold, arch, config);
        *slots[fold].lock().expect("slot lock") = Some(r);
    };
    let jobs = config.jobs.clamp(1, config.folds);
    if jobs == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let labels = dataset.taxonomy.size();
    let mut folds = Vec::new();
    let mut models = Vec::new();
    let mut confusion = vec![vec![0usize; labels]; labels];
    let mut counts = vec![0usize; labels];
    for slot in slots {
        let r = slot
            .into_inner()
            .expect("slot lock")
            .expect("every fold ran")?;
        for (row, add) in confusion.iter_mut().zip(&r.confusion) {
            for (c, a) in row.iter_mut().zip(add) {
                *c += a;
            }
        }
        for (c, a) in counts.iter_mut().zip(&r.label_counts) {
            *c += a;
        }
        folds.push(r.report);
        models.push(r.model);
    }
    let (topk_mean, topk_sd) = (0..labels)
        .map(|k| {
            let xs: Vec<f64> = folds.iter().map(|f| f.topk[k]).collect();
            if xs.len() < 2 {
                (xs[0], 0.0)
            } else {
                mean_sd(&xs)
            }
        })
        .unzip();
    let total: usize = counts.iter().sum();
    let majority_baseline = *counts.iter().max().expect("labels") as f64 / total as f64;
    Ok(CvOutcome {
        report: EvalReport {
            architecture: arch,
            taxonomy: dataset.taxonomy,
            plan,
            folds,
            topk_mean,
            topk_sd,
            confusion,
            majority_baseline,
        },
        models,
    })
}

/// Per-fold CSV: fold, participants, counts, top-1..3, kept epoch.
pub fn write_report_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "fold",
        "test_participants",
        "train_examples",
        "test_examples",
        "top1",
        "top2",
        "top3",
        "best_epoch",
    ])?;
    let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(1.0);
    for f in &report.folds {
        out.write_record([
            f.fold.to_string(),
            f.test_participants.join(" "),
            f.train_examples.to_string(),
            f.test_examples.to_string(),
            format!("{:.6}", at(&f.topk, 0)),
            format!("{:.6}", at(&f.topk, 1)),
            format!("{:.6}", at(&f.topk, 2)),
            f.history.best_epoch.to_string(),
        ])?;
    }
    out.write_record([
        "mean".to_string(),
        String::new(),
        String::new(),
        String::new(),
        format!("{:.6}", at(&report.topk_mean, 0)),
        format!("{:.6}", at(&report.topk_mean, 1)),
        format!("{:.6}", at(&report.topk_mean, 2)),
        String::new(),
    ])?;
    out.flush()?;
    Ok(())
}

/// Accuracy against number of attempts: `attempts,mean,sd`.
pub fn write_plot_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["attempts", "mean_accuracy", "sd"])?;
    for (k, (m, s)) in report.topk_mean.iter().zip(&report.topk_sd).enumerate() {
        out.write_record([(k + 1).to_string(), format!("{m:.6}"), format!("{s:.6}")])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    /// `scores[i][j]` compares model `i` of the first set with model `j` of
    /// the second.
    pub scores: Vec<Vec<f64>>,
    pub mean: f64,
    pub sd: f64,
}

impl Similarity {
    pub fn pair_count(&self) -> usize {
        self.scores.iter().map(Vec::len).sum()
    }
}

/// Argmax agreement of every model pair across the two sets over the probe
/// windows.
pub fn model_similarity(
    a: &[Model],
    b: &[Model],
    probes: &[&[FeatureVector]],
) -> Result<Similarity> {
    if a.is_empty() || b.is_empty() {
        return Err(GazeError::Empty("model sets must be non-empty".into()));
    }
    if probes.is_empty() {
        return Err(GazeError::Empty("no probe windows".into()));
    }
    let taxonomy = a[0].taxonomy();
    if a.iter().chain(b).any(|m| m.taxonomy() != taxonomy) {
        return Err(GazeError::validation(
            "models",
            "model sets use different taxonomies",
        ));
    }
    let top1 = |m: &Model| -> Result<Vec<usize>> {
        Ok(rank_windows(m, probes)?.into_iter().map(|r| r[0]).collect())
    };
    let pa = a.iter().map(top1).collect::<Result<Vec<_>>>()?;
    let pb = b.iter().map(top1).collect::<Result<Vec<_>>>()?;
    let scores: Vec<Vec<f64>> = pa
        .iter()
        .map(|x| {
            pb.iter()
                .map(|y| {
                    x.iter().zip(y).filter(|(p, q)| p == q).count() as f64 / probes.len() as f64
                })
                .collect()
        })
        .collect();
    let flat: Vec<f64> = scores.iter().flatten().copied().collect();
    let (mean, sd) = if flat.len() < 2 {
        (flat[0], 0.0)
    } else {
        mean_sd(&flat)
    };
    Ok(Similarity { scores, mean, sd })
}

/// Every next-frame window of an encoded stream: starts `0..=len - window - 1`.
pub fn probe_windows(frames: &[FeatureVector], window: usize) -> Vec<&[FeatureVector]> {
    if frames.len() <= window {
        return Vec::new();
    }
    (0..frames.len() - window)
        .map(|s| &frames[s..s + window])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i:02}")).collect()
    }

    #[test]
    fn fold_shapes() {
        let p = make_folds(&ids(12), 6, 3).unwrap();
        assert_eq!(p.fold_sizes(), vec![2; 6]);
        let p = make_folds(&ids(6), 6, 3).unwrap();
        assert_eq!(p.fold_sizes(), vec![1; 6]);
        let p = make_folds(&ids(13), 6, 3).unwrap();
        let sizes = p.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_eq!(
            make_folds(&ids(12), 6, 9).unwrap(),
            make_folds(&ids(12), 6, 9).unwrap()
        );
        let mut rev = ids(12);
        rev.reverse();
        assert_eq!(
            make_folds(&rev, 6, 9).unwrap(),
            make_folds(&ids(12), 6, 9).unwrap()
        );
        assert!(make_folds(&ids(5), 6, 0).is_err());
    }

    #[test]
    fn topk_by_hand() {
        // targets A,B,C = 0,1,2
        let r = vec![vec![0, 1, 2], vec![2, 1, 0], vec![0, 2, 1]];
        let t = [0, 1, 2];
        assert!((topk_accuracy(&r, &t, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // the third ranking has C in second place, so every target is in the top 2
        assert_eq!(topk_accuracy(&r, &t, 2).unwrap(), 1.0);
        let r2 = vec![vec![0, 1, 2], vec![2, 1, 0], vec![0, 1, 2]];
        assert!((topk_accuracy(&r2, &t, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(topk_accuracy(&r2, &t, 3).unwrap(), 1.0);
        assert!(topk_accuracy(&r, &t[..2], 1).is_err());
    }

    #[test]
    fn probe_window_count() {
        let frames = vec![FeatureVector([0.0; 28]); 3600];
        assert_eq!(probe_windows(&frames, 30).len(), 3570);
    }
}
