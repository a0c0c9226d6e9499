//! Eye-tracker preprocessing: 1000 Hz samples to 30 fps frames, AOI
//! labelling, and sliding-window dataset construction.

use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::scenario::{AoiMap, SCREEN_HEIGHT, SCREEN_WIDTH};
use crate::types::{
    encode_frame_with, FeatureVector, Label, Normalization, SceneFrame, Taxonomy, FEATURES,
};

/// Frames in one model input window (one second at 30 fps).
pub const WINDOW: usize = 30;
/// Samples per resampling block, and how they split into three frames.
pub const BLOCK: usize = 100;
const SPLITS: [(usize, usize); 3] = [(0, 33), (33, 66), (66, 100)];

/// One raw tracker sample. Missing coordinates are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeSample {
    pub t_ms: u64,
    pub x: Option<f64>,
    pub y: Option<f64>,
}

impl GazeSample {
    /// On screen and complete.
    pub fn point(&self) -> Option<(f64, f64)> {
        match (self.x, self.y) {
            (Some(x), Some(y))
                if x.is_finite()
                    && y.is_finite()
                    && (0.0..SCREEN_WIDTH).contains(&x)
                    && (0.0..SCREEN_HEIGHT).contains(&y) =>
            {
                Some((x, y))
            }
            _ => None,
        }
    }
}

/// A 30 fps gaze frame. Invalid frames carry NaN coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeFrame {
    pub frame_index: usize,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
}

/// Averages every 100-sample block into three frames (samples 1-33, 34-66
/// and 67-100). A sub-window holding any missing or off-screen sample yields
/// an invalid frame. A trailing partial block is dropped.
pub fn resample(samples: &[GazeSample]) -> Result<Vec<GazeFrame>> {
    if let Some(w) = samples.windows(2).find(|w| w[1].t_ms != w[0].t_ms + 1) {
        return Err(GazeError::validation(
            "t_ms",
            format!(
                "samples must be contiguous at 1 ms, found {} -> {}",
                w[0].t_ms, w[1].t_ms
            ),
        ));
    }
    let mut out = Vec::with_capacity(samples.len() / BLOCK * 3);
    for block in samples.chunks_exact(BLOCK) {
        for &(lo, hi) in &SPLITS {
            let frame_index = out.len();
            let sub = &block[lo..hi];
            let points: Option<Vec<(f64, f64)>> = sub.iter().map(GazeSample::point).collect();
            out.push(match points {
                Some(points) => {
                    let n = points.len() as f64;
                    let (sx, sy) = points
                        .iter()
                        .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
                    GazeFrame {
                        frame_index,
                        x: sx / n,
                        y: sy / n,
                        valid: true,
                    }
                }
                None => GazeFrame {
                    frame_index,
                    x: f64::NAN,
                    y: f64::NAN,
                    valid: false,
                },
            });
        }
    }
    Ok(out)
}

/// Maps a valid frame to the AOI label containing it. Overlaps resolve to
/// the smallest region; Coarse5 folds hands into their person.
pub fn assign_label(frame: &GazeFrame, aoi: &AoiMap, taxonomy: Taxonomy) -> Result<Option<Label>> {
    if !frame.valid {
        return Err(GazeError::validation(
            "frame",
            format!(
                "frame {} is invalid and cannot be labelled",
                frame.frame_index
            ),
        ));
    }
    Ok(aoi
        .locate(frame.x, frame.y)
        .map(|t| Label::project(taxonomy, t)))
}

/// Per-frame outcome of labelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameLabel {
    /// Tracker data missing or off screen.
    Invalid,
    /// Valid gaze outside every AOI.
    NoLabel,
    Label(Label),
}

impl FrameLabel {
    pub fn label(self) -> Option<Label> {
        match self {
            FrameLabel::Label(l) => Some(l),
            _ => None,
        }
    }
}

/// Labels a whole recording; frames beyond the AOI stream are invalid.
pub fn label_frames(frames: &[GazeFrame], aoi: &[AoiMap], taxonomy: Taxonomy) -> Vec<FrameLabel> {
    frames
        .iter()
        .map(|f| match aoi.get(f.frame_index) {
            Some(map) if f.valid => match assign_label(f, map, taxonomy).expect("valid frame") {
                Some(l) => FrameLabel::Label(l),
                None => FrameLabel::NoLabel,
            },
            _ => FrameLabel::Invalid,
        })
        .collect()
}

/// Window start positions that qualify as examples, with their targets.
///
/// A start `s` qualifies when frames `s..s + window` are all valid and frame
/// `s + window` carries a label.
pub fn window_positions(labels: &[FrameLabel], window: usize, step: usize) -> Vec<(usize, Label)> {
    assert!(window > 0 && step > 0);
    if labels.len() <= window {
        return Vec::new();
    }
    // invalid[i] = number of invalid frames in labels[..i]
    let mut invalid = Vec::with_capacity(labels.len() + 1);
    invalid.push(0usize);
    for l in labels {
        let last = *invalid.last().unwrap();
        invalid.push(last + usize::from(*l == FrameLabel::Invalid));
    }
    (0..labels.len() - window)
        .step_by(step)
        .filter_map(|s| {
            let clean = invalid[s + window] == invalid[s];
            match (clean, labels[s + window]) {
                (true, FrameLabel::Label(l)) => Some((s, l)),
                _ => None,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Child,
    Adult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stimulus {
    Animation,
    #[serde(rename = "live-action")]
    LiveAction,
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Cohort::Child => "child",
            Cohort::Adult => "adult",
        })
    }
}

impl FromStr for Cohort {
    type Err = GazeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "child" | "children" => Ok(Cohort::Child),
            "adult" | "adults" => Ok(Cohort::Adult),
            _ => Err(GazeError::validation(
                "cohort",
                format!("unknown cohort `{s}`"),
            )),
        }
    }
}

impl fmt::Display for Stimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stimulus::Animation => "animation",
            Stimulus::LiveAction => "live-action",
        })
    }
}

impl FromStr for Stimulus {
    type Err = GazeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "animation" => Ok(Stimulus::Animation),
            "live-action" | "liveaction" | "live" => Ok(Stimulus::LiveAction),
            _ => Err(GazeError::validation(
                "stimulus",
                format!("unknown stimulus `{s}`"),
            )),
        }
    }
}

/// One participant watching one stimulus: the encoded scene stream and the
/// qualifying window starts.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub participant: String,
    pub cohort: Cohort,
    pub stimulus: Stimulus,
    pub frames: Vec<FeatureVector>,
    pub examples: Vec<(usize, Label)>,
}

/// A 30-frame input window with its next-frame target and tags.
#[derive(Debug, Clone, Copy)]
pub struct WindowedExample<'a> {
    pub features: &'a [FeatureVector],
    pub target: Label,
    pub participant: &'a str,
    pub cohort: Cohort,
    pub stimulus: Stimulus,
}

/// Index of an example inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExampleRef {
    pub recording: usize,
    pub example: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub taxonomy: Taxonomy,
    pub window: usize,
    pub normalization: Normalization,
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn new(taxonomy: Taxonomy) -> Self {
        Dataset {
            taxonomy,
            window: WINDOW,
            normalization: Normalization::DEFAULT,
            recordings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.recordings.iter().map(|r| r.examples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn refs(&self) -> impl Iterator<Item = ExampleRef> + '_ {
        self.recordings.iter().enumerate().flat_map(|(ri, r)| {
            (0..r.examples.len()).map(move |ei| ExampleRef {
                recording: ri,
                example: ei,
            })
        })
    }

    pub fn get(&self, at: ExampleRef) -> WindowedExample<'_> {
        let rec = &self.recordings[at.recording];
        let (start, target) = rec.examples[at.example];
        WindowedExample {
            features: &rec.frames[start..start + self.window],
            target,
            participant: &rec.participant,
            cohort: rec.cohort,
            stimulus: rec.stimulus,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = WindowedExample<'_>> + '_ {
        self.refs().map(move |r| self.get(r))
    }

    /// Distinct participants in first-seen order.
    pub fn participants(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.recordings {
            if !out.contains(&r.participant) {
                out.push(r.participant.clone());
            }
        }
        out
    }

    /// Keeps every `stride`-th example of each recording, starting at a
    /// per-recording offset so different participants sample different
    /// positions.
    pub fn thin(&mut self, stride: usize) {
        if stride <= 1 {
            return;
        }
        for (i, rec) in self.recordings.iter_mut().enumerate() {
            let offset = i % stride;
            rec.examples = rec
                .examples
                .iter()
                .copied()
                .skip(offset)
                .step_by(stride)
                .collect();
        }
    }

    pub fn merge(&mut self, other: Dataset) -> Result<()> {
        if other.taxonomy != self.taxonomy || other.window != self.window {
            return Err(GazeError::validation(
                "dataset",
                "cannot merge datasets with different taxonomy or window",
            ));
        }
        self.recordings.extend(other.recordings);
        Ok(())
    }

    /// Re-labels every example under Coarse5.
    pub fn to_coarse(&self) -> Dataset {
        let mut out = self.clone();
        out.taxonomy = Taxonomy::Coarse5;
        for r in &mut out.recordings {
            for e in &mut r.examples {
                e.1 = e.1.to_coarse();
            }
        }
        out
    }
}

/// Tags describing where a recording came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub participant: String,
    pub cohort: Cohort,
    pub stimulus: Stimulus,
}

/// Builds the windowed examples of one recording. Scene and label streams
/// are aligned by position.
pub fn build_dataset(
    frames: &[SceneFrame],
    labels: &[FrameLabel],
    meta: RecordingMeta,
    taxonomy: Taxonomy,
    window: usize,
    step: usize,
) -> Result<Dataset> {
    if frames.len() != labels.len() {
        return Err(GazeError::LengthMismatch(format!(
            "{} scene frames vs {} labels",
            frames.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels
        .iter()
        .filter_map(|l| l.label())
        .find(|l| l.taxonomy() != taxonomy)
    {
        return Err(GazeError::validation(
            "labels",
            format!("label {l} is not in {taxonomy}"),
        ));
    }
    let norm = Normalization::DEFAULT;
    let encoded = frames
        .iter()
        .map(|f| encode_frame_with(f, norm))
        .collect::<Result<Vec<_>>>()?;
    let examples = window_positions(labels, window, step);
    Ok(Dataset {
        taxonomy,
        window,
        normalization: norm,
        recordings: vec![Recording {
            participant: meta.participant,
            cohort: meta.cohort,
            stimulus: meta.stimulus,
            frames: encoded,
            examples,
        }],
    })
}

/// Reads raw tracker CSV (`t_ms,x,y`, empty cells for missing values).
pub fn read_raw_csv<R: Read>(r: R) -> Result<Vec<GazeSample>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let cell = |k: usize| row.get(k).map(str::trim).unwrap_or("");
        let t_ms = cell(0).parse().map_err(|_| {
            GazeError::Format(format!("row {}: bad timestamp `{}`", i + 1, cell(0)))
        })?;
        let coord = |k: usize| -> Result<Option<f64>> {
            let c = cell(k);
            if c.is_empty() || c.eq_ignore_ascii_case("nan") || c == "." {
                Ok(None)
            } else {
                c.parse()
                    .map(Some)
                    .map_err(|_| GazeError::Format(format!("row {}: bad coordinate `{c}`", i + 1)))
            }
        };
        out.push(GazeSample {
            t_ms,
            x: coord(1)?,
            y: coord(2)?,
        });
    }
    Ok(out)
}

pub fn write_raw_csv<W: Write>(w: W, samples: &[GazeSample]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t_ms", "x", "y"])?;
    let fmt = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
    for s in samples {
        out.write_record([s.t_ms.to_string(), fmt(s.x), fmt(s.y)])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RecordingFile {
    participant: String,
    cohort: Cohort,
    stimulus: Stimulus,
    frames: Vec<Vec<f64>>,
    /// `[start, label_index]` pairs.
    examples: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    taxonomy: Taxonomy,
    window: usize,
    normalization: Normalization,
    recordings: Vec<RecordingFile>,
}

const DATASET_FORMAT: &str = "gaze-dataset";
const DATASET_VERSION: u32 = 1;

/// Writes the JSON dataset container. Frames are stored once per
/// recording; examples are `[start, label_index]` pairs into them.
pub fn write_dataset<W: Write>(w: W, ds: &Dataset) -> Result<()> {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        taxonomy: ds.taxonomy,
        window: ds.window,
        normalization: ds.normalization,
        recordings: ds
            .recordings
            .iter()
            .map(|r| RecordingFile {
                participant: r.participant.clone(),
                cohort: r.cohort,
                stimulus: r.stimulus,
                frames: r.frames.iter().map(|f| f.0.to_vec()).collect(),
                examples: r.examples.iter().map(|(s, l)| (*s, l.index())).collect(),
            })
            .collect(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_reader(r)?;
    if file.format != DATASET_FORMAT || file.version != DATASET_VERSION {
        return Err(GazeError::Format(format!(
            "unsupported dataset `{}` v{}",
            file.format, file.version
        )));
    }
    let mut recordings = Vec::with_capacity(file.recordings.len());
    for r in file.recordings {
        let frames = r
            .frames
            .into_iter()
            .map(|v| {
                <[f64; FEATURES]>::try_from(v.as_slice())
                    .map(FeatureVector)
                    .map_err(|_| {
                        GazeError::Format(format!("frame width {} != {FEATURES}", v.len()))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let examples = r
            .examples
            .into_iter()
            .map(|(s, i)| {
                if s + file.window > frames.len() {
                    return Err(GazeError::Format(format!("window at {s} overruns frames")));
                }
                Ok((s, Label::from_index(i, file.taxonomy)?))
            })
            .collect::<Result<Vec<_>>>()?;
        recordings.push(Recording {
            participant: r.participant,
            cohort: r.cohort,
            stimulus: r.stimulus,
            frames,
            examples,
        });
    }
    Ok(Dataset {
        taxonomy: file.taxonomy,
        window: file.window,
        normalization: file.normalization,
        recordings,
    })
}
