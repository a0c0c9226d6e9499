//! Training loop mechanics and cross-validation on small synthetic sets.

use gaze_core::eval::{run_cv, CvConfig};
use gaze_core::models::{
    accuracy, read_model, train, write_model, Architecture, Model, Sample, TrainConfig,
};
use gaze_core::preprocess::{Cohort, Dataset, Recording, Stimulus};
use gaze_core::types::{FeatureVector, Label, Taxonomy, FEATURES};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `people` recordings of random frames with `per` examples each; labels
/// come from `label(example_number)`.
fn synthetic(
    people: usize,
    per: usize,
    taxonomy: Taxonomy,
    label: impl Fn(usize) -> usize,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ds = Dataset::new(taxonomy);
    let mut n = 0;
    for p in 0..people {
        let frames: Vec<FeatureVector> = (0..per + 30)
            .map(|_| {
                let mut f = [0.0; FEATURES];
                f.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                FeatureVector(f)
            })
            .collect();
        let examples = (0..per)
            .map(|s| {
                n += 1;
                (s, Label::from_index(label(n - 1), taxonomy).unwrap())
            })
            .collect();
        ds.recordings.push(Recording {
            participant: format!("p{p}"),
            cohort: Cohort::Adult,
            stimulus: Stimulus::Animation,
            frames,
            examples,
        });
    }
    ds
}

fn quick(epochs: usize, patience: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        patience,
        ..TrainConfig::default()
    }
}

#[test]
fn constant_label_is_learned_exactly() {
    let ds = synthetic(6, 20, Taxonomy::Coarse5, |_| 2);
    let cfg = CvConfig {
        train: quick(3, 3),
        ..CvConfig::default()
    };
    let out = run_cv(&ds, Architecture::Lstm, &cfg).unwrap();
    assert_eq!(out.report.topk_mean[0], 1.0);
    assert_eq!(out.models.len(), 6);
    assert_eq!(out.report.majority_baseline, 1.0);
}

#[test]
fn shuffled_labels_stay_at_chance() {
    let l = Taxonomy::Coarse5.size();
    let people = 6;
    let per = 60;
    let mut labels: Vec<usize> = (0..people * per).map(|i| i % l).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let ds = synthetic(people, per, Taxonomy::Coarse5, |i| labels[i]);
    let cfg = CvConfig {
        train: quick(4, 2),
        ..CvConfig::default()
    };
    let out = run_cv(&ds, Architecture::Lstm, &cfg).unwrap();
    let chance = 1.0 / l as f64;
    let n = (people * per) as f64;
    let sd = (chance * (1.0 - chance) / n).sqrt();
    // pooled top-1 over every held-out example
    let correct: usize = (0..l).map(|i| out.report.confusion[i][i]).sum();
    let pooled = correct as f64 / n;
    assert!(
        (pooled - chance).abs() < 3.0 * sd,
        "pooled top-1 {pooled}, chance {chance} +- {}",
        3.0 * sd
    );
    for f in &out.report.folds {
        assert!(f.topk.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*f.topk.last().unwrap(), 1.0);
    }
}

#[test]
fn early_stopping_restores_best_weights() {
    let ds = synthetic(2, 40, Taxonomy::Fine13, |i| (i * 7) % 13);
    let (tr, te): (Vec<Sample>, Vec<Sample>) = {
        let all: Vec<_> = ds
            .iter()
            .map(|e| {
                (
                    e.participant == "p0",
                    Sample {
                        window: e.features,
                        target: e.target.index(),
                    },
                )
            })
            .collect();
        (
            all.iter().filter(|x| x.0).map(|x| x.1).collect(),
            all.iter().filter(|x| !x.0).map(|x| x.1).collect(),
        )
    };
    let cfg = quick(40, 3);
    let (model, history) = train(
        Model::new(Architecture::Lstm, Taxonomy::Fine13, 0),
        &tr,
        &te,
        &cfg,
    )
    .unwrap();
    let n = history.epochs.len();
    let best = history
        .epochs
        .iter()
        .map(|e| e.test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(history.best_accuracy, best);
    // the kept epoch is the first to reach the best accuracy
    let first_best = history
        .epochs
        .iter()
        .position(|e| e.test_accuracy == best)
        .unwrap()
        + 1;
    assert_eq!(history.best_epoch, first_best);
    if n < cfg.max_epochs {
        assert_eq!(n, history.best_epoch + cfg.patience);
    }
    let (acc, _) = accuracy(&model, &te).unwrap();
    assert_eq!(acc, history.best_accuracy);
}

#[test]
fn training_is_bit_reproducible() {
    let ds = synthetic(2, 30, Taxonomy::Coarse5, |i| i % 5);
    let samples: Vec<Sample> = ds
        .iter()
        .map(|e| Sample {
            window: e.features,
            target: e.target.index(),
        })
        .collect();
    let (tr, te) = samples.split_at(30);
    for arch in [Architecture::Lstm, Architecture::Transformer] {
        let run = |seed: u64| {
            let cfg = TrainConfig {
                seed,
                ..quick(2, 2)
            };
            train(Model::new(arch, Taxonomy::Coarse5, seed), tr, te, &cfg).unwrap()
        };
        let (a, ha) = run(3);
        let (b, hb) = run(3);
        let (c, _) = run(4);
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert_ne!(a, c);

        let mut buf = Vec::new();
        write_model(&mut buf, &a, &TrainConfig::default()).unwrap();
        let (back, _) = read_model(buf.as_slice()).unwrap();
        let windows: Vec<_> = te.iter().map(|s| s.window).collect();
        assert_eq!(
            back.forward(&windows).unwrap(),
            a.forward(&windows).unwrap()
        );
    }
}

#[test]
fn parallel_folds_match_serial() {
    let ds = synthetic(6, 10, Taxonomy::Coarse5, |i| i % 3);
    let serial = CvConfig {
        train: quick(2, 2),
        ..CvConfig::default()
    };
    let parallel = CvConfig {
        jobs: 3,
        ..serial.clone()
    };
    let a = run_cv(&ds, Architecture::Lstm, &serial).unwrap();
    let b = run_cv(&ds, Architecture::Lstm, &parallel).unwrap();
    assert_eq!(a.report, b.report);
    assert_eq!(a.models, b.models);
}

#[test]
fn empty_fold_is_an_error() {
    let mut ds = synthetic(6, 5, Taxonomy::Coarse5, |_| 0);
    ds.recordings[3].examples.clear();
    let cfg = CvConfig {
        train: quick(1, 1),
        ..CvConfig::default()
    };
    assert!(run_cv(&ds, Architecture::Lstm, &cfg).is_err());
}
