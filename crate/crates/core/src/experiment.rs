//! End-to-end synthetic cohort: scenario, per-participant oracle gaze, a
//! simulated tracker recording, resampling, AOI labelling and windowing.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::oracle::{oracle_for, OracleMode, OraclePolicy, SalienceWeights, TrackerConfig};
use crate::preprocess::{
    build_dataset, label_frames, resample, Cohort, Dataset, FrameLabel, RecordingMeta, Stimulus,
    WINDOW,
};
use crate::scenario::{build_script, render_frames, Rendered, ScenarioConfig};
use crate::stats::{frame_label_features, FeatureRow};
use crate::types::Taxonomy;

/// SplitMix64 finaliser; mixes a base seed with a stream index.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub cohort: Cohort,
    pub stimulus: Stimulus,
    pub participants: usize,
    pub taxonomy: Taxonomy,
    pub oracle: OracleMode,
    #[serde(default)]
    pub weights: SalienceWeights,
    pub scenario: ScenarioConfig,
    pub scenario_seed: u64,
    /// Participant oracles and trackers derive their seeds from this.
    pub seed: u64,
    #[serde(default)]
    pub tracker_noise_px: Option<f64>,
    /// Keep every `thin`-th window per recording (1 keeps all).
    pub thin: usize,
}

impl CohortConfig {
    pub fn new(cohort: Cohort, participants: usize, oracle: OracleMode, seed: u64) -> Self {
        CohortConfig {
            cohort,
            stimulus: Stimulus::Animation,
            participants,
            taxonomy: Taxonomy::Fine13,
            oracle,
            weights: SalienceWeights::default(),
            scenario: ScenarioConfig::default(),
            scenario_seed: 0,
            seed,
            tracker_noise_px: None,
            thin: 1,
        }
    }

    pub fn participant_id(&self, i: usize) -> String {
        format!("{}-{}-{:02}", self.cohort, self.stimulus, i + 1)
    }

    pub fn policy(&self, i: usize) -> OraclePolicy {
        let seed = derive_seed(self.seed, 2 * i as u64);
        let mut p = match self.oracle {
            OracleMode::Deterministic => OraclePolicy::deterministic(),
            OracleMode::Stochastic => OraclePolicy::stochastic(seed),
        };
        p.seed = seed;
        p.weights = self.weights;
        p
    }

    pub fn tracker(&self, i: usize) -> TrackerConfig {
        let mut t = TrackerConfig {
            seed: derive_seed(self.seed, 2 * i as u64 + 1),
            ..TrackerConfig::default()
        };
        if let Some(n) = self.tracker_noise_px {
            t.noise_px = n;
        }
        t
    }
}

/// One simulated participant after preprocessing.
#[derive(Debug, Clone)]
pub struct ParticipantRun {
    pub id: String,
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub rendered: Rendered,
    pub runs: Vec<ParticipantRun>,
    pub dataset: Dataset,
}

impl SimulatedCohort {
    pub fn feature_rows(&self, config: &CohortConfig) -> Vec<FeatureRow> {
        self.runs
            .iter()
            .map(|r| FeatureRow {
                participant: r.id.clone(),
                cohort: config.cohort,
                stimulus: config.stimulus,
                features: frame_label_features(&r.labels),
            })
            .collect()
    }
}

/// Renders the scene once and runs every participant through the oracle,
/// the simulated tracker and preprocessing.
pub fn simulate_cohort(config: &CohortConfig) -> Result<SimulatedCohort> {
    let script = build_script(&config.scenario, config.scenario_seed)?;
    let rendered = render_frames(&script)?;
    let mut dataset = Dataset::new(config.taxonomy);
    let mut runs = Vec::with_capacity(config.participants);
    for i in 0..config.participants {
        let oracle = oracle_for(&rendered, &config.policy(i))?;
        let samples = crate::oracle::simulate_tracker(&oracle, &config.tracker(i));
        let mut frames = resample(&samples)?;
        // the tracker covers whole 100 ms blocks; trailing frames stay unseen
        frames.truncate(rendered.frames.len());
        let scene = &rendered.frames[..frames.len()];
        let labels = label_frames(&frames, &rendered.aoi[..frames.len()], config.taxonomy);
        let id = config.participant_id(i);
        let meta = RecordingMeta {
            participant: id.clone(),
            cohort: config.cohort,
            stimulus: config.stimulus,
        };
        dataset.merge(build_dataset(
            scene,
            &labels,
            meta,
            config.taxonomy,
            WINDOW,
            1,
        )?)?;
        runs.push(ParticipantRun { id, labels });
    }
    dataset.thin(config.thin);
    Ok(SimulatedCohort {
        rendered,
        runs,
        dataset,
    })
}
