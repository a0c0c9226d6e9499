//! Streaming head-pose controller.
//!
//! Input is newline-delimited JSON. An optional first record declares the
//! schema, `{"schema":"gaze-wire","version":1}`. Every other record is one
//! frame:
//!
//! ```text
//! {"t": 1033, "persons": [null, {"present": true, "distance": 1.5,
//!   "waving": false, "pointing": false, "talking": true, "angle": -30.0,
//!   "movement": "standing"}, null, null]}
//! ```
//!
//! `t` is milliseconds. `persons` holds up to four slots in bearing order;
//! `null` or a missing trailing entry is an absent person. `movement` is one
//! of `standing`, `entering`, `leaving`. Unknown fields are ignored.
//!
//! Output is one JSON object per input frame with keys `t`, `yaw`, `pitch`,
//! `target`, `say` (a string or `null`) and `source` (`warmup` or `model`).

use std::collections::VecDeque;
use std::io::{BufRead, Write};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{GazeError, Result};
use crate::models::{rank, Model, SEQ_LEN};
use crate::types::{
    encode_frame, FeatureVector, Label, PersonState, SceneFrame, Target, Taxonomy, PERSONS,
};

pub const WIRE_SCHEMA: &str = "gaze-wire";
pub const WIRE_VERSION: u32 = 1;
pub const BODY_PITCH: f64 = 0.0;
pub const HAND_PITCH: f64 = -10.0;
pub const BOX_PITCH: f64 = -15.0;
pub const DEFAULT_COOLDOWN_MS: u64 = 5000;
/// Frame budget at 30 fps, milliseconds.
pub const FRAME_BUDGET_MS: f64 = 1000.0 / 30.0;

#[derive(Debug, Deserialize)]
struct WireHeader {
    schema: String,
    version: u32,
}

#[derive(Debug, Deserialize)]
struct WireRecord {
    t: u64,
    persons: Vec<Option<PersonState>>,
}

/// A validated input frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WireFrame {
    pub t: u64,
    pub scene: SceneFrame,
}

/// What one input line turned out to be.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Header,
    Frame(WireFrame),
}

/// Parses one record. `index` becomes the frame index of the scene.
pub fn ingest(line: &str, index: usize) -> Result<Ingested> {
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| GazeError::Format(format!("malformed record: {e}")))?;
    if value.get("schema").is_some() {
        let h: WireHeader = serde_json::from_value(value)
            .map_err(|e| GazeError::Format(format!("malformed header: {e}")))?;
        if h.schema != WIRE_SCHEMA || h.version != WIRE_VERSION {
            return Err(GazeError::Config(format!(
                "unsupported wire schema `{}` v{}",
                h.schema, h.version
            )));
        }
        return Ok(Ingested::Header);
    }
    let rec: WireRecord = serde_json::from_value(value)
        .map_err(|e| GazeError::Format(format!("malformed frame: {e}")))?;
    if rec.persons.len() > PERSONS {
        return Err(GazeError::validation(
            "persons",
            format!("at most {PERSONS} persons, got {}", rec.persons.len()),
        ));
    }
    let mut scene = SceneFrame::empty(index);
    for (slot, p) in rec.persons.into_iter().enumerate() {
        scene.persons[slot] = p.unwrap_or_default();
    }
    scene.validate()?;
    Ok(Ingested::Frame(WireFrame { t: rec.t, scene }))
}

/// Wire header line.
pub fn wire_header() -> String {
    format!("{{\"schema\":\"{WIRE_SCHEMA}\",\"version\":{WIRE_VERSION}}}")
}

/// Serialises a scene frame as one wire record; absent persons become `null`.
pub fn wire_record(t: u64, frame: &SceneFrame) -> String {
    let persons: Vec<Option<&PersonState>> = frame
        .persons
        .iter()
        .map(|p| p.present.then_some(p))
        .collect();
    serde_json::json!({ "t": t, "persons": persons }).to_string()
}

/// Writes a header and one record per frame, timestamped at 30 fps.
pub fn write_wire_stream<W: Write>(mut w: W, frames: &[SceneFrame]) -> Result<()> {
    writeln!(w, "{}", wire_header())?;
    for f in frames {
        writeln!(w, "{}", wire_record(frame_time_ms(f.frame_index), f))?;
    }
    Ok(())
}

pub fn frame_time_ms(frame_index: usize) -> u64 {
    (frame_index as u64 * 1000) / 30
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandSource {
    Warmup,
    Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeCommand {
    pub t: u64,
    pub yaw: f64,
    pub pitch: f64,
    pub target: Label,
    pub say: Option<String>,
    pub source: CommandSource,
}

#[derive(Serialize)]
struct CommandRecord<'a> {
    t: u64,
    yaw: f64,
    pitch: f64,
    target: String,
    say: Option<&'a str>,
    source: CommandSource,
}

impl GazeCommand {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&CommandRecord {
            t: self.t,
            yaw: self.yaw,
            pitch: self.pitch,
            target: self.target.name(),
            say: self.say.as_deref(),
            source: self.source,
        })
        .expect("command serialises")
    }
}

/// Head pose for a label in the current frame. A target whose person is
/// absent falls back to the box; the flag reports that.
pub fn label_to_pose(label: Label, frame: &SceneFrame) -> (f64, f64, bool) {
    match label.target() {
        Target::Box => (frame.box_angle, BOX_PITCH, false),
        t => {
            let person = &frame.persons[t.person().expect("person target")];
            if !person.present {
                return (frame.box_angle, BOX_PITCH, true);
            }
            let pitch = if t.is_hand() { HAND_PITCH } else { BODY_PITCH };
            (person.angle.clamp(-90.0, 90.0), pitch, false)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub taxonomy: Taxonomy,
    pub cooldown_ms: u64,
    pub greeting: String,
}

impl ControllerConfig {
    pub fn new(taxonomy: Taxonomy) -> Self {
        ControllerConfig {
            taxonomy,
            cooldown_ms: DEFAULT_COOLDOWN_MS,
            greeting: "Hello".into(),
        }
    }
}

/// Per-session state: the last 30 encoded frames, wave edge detectors and
/// the greeting timer.
pub struct Controller {
    model: Model,
    config: ControllerConfig,
    buffer: VecDeque<FeatureVector>,
    waving: [bool; PERSONS],
    last_greeting: Option<u64>,
    pub fallbacks: usize,
    pub greetings: usize,
}

impl Controller {
    pub fn new(model: Model, config: ControllerConfig) -> Result<Self> {
        if model.taxonomy() != config.taxonomy {
            return Err(GazeError::Config(format!(
                "model predicts {} labels but the controller is configured for {}",
                model.taxonomy(),
                config.taxonomy
            )));
        }
        Ok(Controller {
            model,
            config,
            buffer: VecDeque::with_capacity(SEQ_LEN + 1),
            waving: [false; PERSONS],
            last_greeting: None,
            fallbacks: 0,
            greetings: 0,
        })
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Emits the command for `frame`. The target is predicted from the 30
    /// frames before it; until those exist the command is neutral.
    pub fn step(&mut self, frame: &WireFrame) -> Result<GazeCommand> {
        let scene = &frame.scene;
        let mut rising = false;
        for (was, p) in self.waving.iter_mut().zip(&scene.persons) {
            let now = p.present && p.waving;
            rising |= now && !*was;
            *was = now;
        }
        let say = if rising
            && self
                .last_greeting
                .is_none_or(|g| frame.t.saturating_sub(g) >= self.config.cooldown_ms)
        {
            self.last_greeting = Some(frame.t);
            self.greetings += 1;
            Some(self.config.greeting.clone())
        } else {
            None
        };

        let command = if self.buffer.len() == SEQ_LEN {
            let window: Vec<FeatureVector> = self.buffer.iter().copied().collect();
            let probs = self.model.predict(&window)?;
            let label = Label::from_index(rank(&probs)[0], self.config.taxonomy)?;
            let (yaw, pitch, fell_back) = label_to_pose(label, scene);
            self.fallbacks += usize::from(fell_back);
            GazeCommand {
                t: frame.t,
                yaw,
                pitch,
                target: if fell_back {
                    Label::boxed(self.config.taxonomy)
                } else {
                    label
                },
                say,
                source: CommandSource::Model,
            }
        } else {
            GazeCommand {
                t: frame.t,
                yaw: 0.0,
                pitch: 0.0,
                target: Label::boxed(self.config.taxonomy),
                say,
                source: CommandSource::Warmup,
            }
        };

        self.buffer.push_back(encode_frame(scene)?);
        if self.buffer.len() > SEQ_LEN {
            self.buffer.pop_front();
        }
        Ok(command)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionStats {
    pub frames: usize,
    pub commands: usize,
    pub warmup_commands: usize,
    pub predicted_commands: usize,
    /// Lines that were not parseable records.
    pub malformed: usize,
    /// Parseable records that failed validation.
    pub invalid: usize,
    /// Frames discarded by the bounded live queue.
    pub dropped: usize,
    pub greetings: usize,
    pub fallbacks: usize,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
    /// Set when the output sink failed and the session stopped early.
    pub sink_error: Option<String>,
    /// First few per-line diagnostics.
    pub diagnostics: Vec<String>,
}

const MAX_DIAGNOSTICS: usize = 20;

struct Session<'c, W: Write> {
    controller: &'c mut Controller,
    out: W,
    stats: SessionStats,
    latency_sum: f64,
    index: usize,
}

impl<W: Write> Session<'_, W> {
    fn diagnose(&mut self, msg: String) {
        if self.stats.diagnostics.len() < MAX_DIAGNOSTICS {
            self.stats.diagnostics.push(msg);
        }
    }

    /// Returns false once the sink has failed.
    fn handle(&mut self, line_no: usize, line: &str) -> Result<bool> {
        if line.trim().is_empty() {
            return Ok(true);
        }
        let started = Instant::now();
        let frame = match ingest(line, self.index) {
            Ok(Ingested::Header) => return Ok(true),
            Ok(Ingested::Frame(f)) => f,
            Err(e @ GazeError::Config(_)) => return Err(e),
            Err(e @ GazeError::Format(_)) => {
                self.stats.malformed += 1;
                self.diagnose(format!("line {line_no}: {e}"));
                return Ok(true);
            }
            Err(e) => {
                self.stats.invalid += 1;
                self.diagnose(format!("line {line_no}: {e}"));
                return Ok(true);
            }
        };
        self.index += 1;
        let fallbacks = self.controller.fallbacks;
        let cmd = self.controller.step(&frame)?;
        if self.controller.fallbacks > fallbacks {
            self.diagnose(format!(
                "line {line_no}: predicted target absent, looking at the box"
            ));
        }
        let written = writeln!(self.out, "{}", cmd.to_json());
        let ms = started.elapsed().as_secs_f64() * 1000.0;
        self.latency_sum += ms;
        self.stats.max_latency_ms = self.stats.max_latency_ms.max(ms);
        self.stats.frames += 1;
        if let Err(e) = written {
            self.stats.sink_error = Some(e.to_string());
            return Ok(false);
        }
        self.stats.commands += 1;
        match cmd.source {
            CommandSource::Warmup => self.stats.warmup_commands += 1,
            CommandSource::Model => self.stats.predicted_commands += 1,
        }
        Ok(true)
    }

    fn finish(mut self) -> SessionStats {
        if let Err(e) = self.out.flush() {
            self.stats.sink_error.get_or_insert(e.to_string());
        }
        self.stats.greetings = self.controller.greetings;
        self.stats.fallbacks = self.controller.fallbacks;
        if self.stats.frames > 0 {
            self.stats.mean_latency_ms = self.latency_sum / self.stats.frames as f64;
        }
        self.stats
    }
}

/// Processes every input line in order, one command per valid frame.
pub fn run_stream<R: BufRead, W: Write>(
    input: R,
    output: W,
    controller: &mut Controller,
) -> Result<SessionStats> {
    let mut session = Session {
        controller,
        out: output,
        stats: SessionStats::default(),
        latency_sum: 0.0,
        index: 0,
    };
    for (i, line) in input.lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) if e.kind() == std::io::ErrorKind::InvalidData => {
                session.stats.malformed += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if !session.handle(i + 1, &line)? {
            break;
        }
    }
    Ok(session.finish())
}

/// Queued lines, the closed flag and the drop count.
type QueueState = (VecDeque<(usize, String)>, bool, usize);

/// Bounded line queue that discards its oldest entry when full.
struct DropQueue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
}

impl DropQueue {
    fn push(&self, item: (usize, String)) {
        let mut g = self.state.lock().expect("queue lock");
        if g.0.len() == self.capacity {
            g.0.pop_front();
            g.2 += 1;
        }
        g.0.push_back(item);
        self.ready.notify_one();
    }

    fn close(&self) {
        self.state.lock().expect("queue lock").1 = true;
        self.ready.notify_all();
    }

    fn pop(&self) -> Option<(usize, String)> {
        let mut g = self.state.lock().expect("queue lock");
        loop {
            if let Some(item) = g.0.pop_front() {
                return Some(item);
            }
            if g.1 {
                return None;
            }
            g = self.ready.wait(g).expect("queue lock");
        }
    }

    fn dropped(&self) -> usize {
        self.state.lock().expect("queue lock").2
    }
}

/// Like [`run_stream`], but a reader thread feeds a bounded queue so a slow
/// consumer sheds the oldest frames instead of falling behind.
pub fn run_queued<R: BufRead + Send + 'static, W: Write>(
    input: R,
    output: W,
    controller: &mut Controller,
    capacity: usize,
) -> Result<SessionStats> {
    let queue = Arc::new(DropQueue {
        state: Mutex::new((VecDeque::new(), false, 0)),
        ready: Condvar::new(),
        capacity: capacity.max(1),
    });
    let producer = Arc::clone(&queue);
    let reader = std::thread::spawn(move || {
        for (i, line) in input.lines().enumerate() {
            match line {
                Ok(l) => producer.push((i + 1, l)),
                Err(_) => break,
            }
        }
        producer.close();
    });
    let mut session = Session {
        controller,
        out: output,
        stats: SessionStats::default(),
        latency_sum: 0.0,
        index: 0,
    };
    let mut result = Ok(());
    while let Some((n, line)) = queue.pop() {
        match session.handle(n, &line) {
            Ok(true) => {}
            Ok(false) => break,
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    // The reader ends when its source closes; a stopped consumer does not
    // wait for that.
    let finished = reader.is_finished();
    if finished {
        reader.join().ok();
    }
    result?;
    session.stats.dropped = queue.dropped();
    Ok(session.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Movement;

    #[test]
    fn all_absent_record_encodes_to_zero() {
        let line = r#"{"t": 5, "persons": [null, null, null, null], "extra": 1}"#;
        let Ingested::Frame(f) = ingest(line, 0).unwrap() else {
            panic!("expected a frame")
        };
        assert_eq!(encode_frame(&f.scene).unwrap().0, [0.0; 28]);
        let Ingested::Frame(g) = ingest(r#"{"t": 5, "persons": []}"#, 0).unwrap() else {
            panic!("expected a frame")
        };
        assert_eq!(f, g);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(matches!(
            ingest(r#"{"t": 5, "pers"#, 0),
            Err(GazeError::Format(_))
        ));
        let five = r#"{"t":0,"persons":[null,null,null,null,null]}"#;
        assert!(matches!(ingest(five, 0), Err(GazeError::Validation { .. })));
        let bad_header = r#"{"schema":"gaze-wire","version":9}"#;
        assert!(matches!(ingest(bad_header, 0), Err(GazeError::Config(_))));
        assert_eq!(ingest(&wire_header(), 0).unwrap(), Ingested::Header);
    }

    #[test]
    fn record_roundtrip() {
        let mut f = SceneFrame::empty(3);
        f.persons[1] = PersonState::standing(1.5, -30.0).with_talking(true);
        f.persons[3] = PersonState {
            movement: Movement::Entering,
            ..PersonState::standing(3.0, 71.5)
        };
        let Ingested::Frame(back) = ingest(&wire_record(100, &f), 3).unwrap() else {
            panic!("expected a frame")
        };
        assert_eq!(back.scene, f);
        assert_eq!(back.t, 100);
    }

    #[test]
    fn poses() {
        let mut f = SceneFrame::empty(0);
        f.persons[3] = PersonState::standing(3.0, 60.0);
        f.persons[0] = PersonState {
            movement: Movement::Entering,
            ..PersonState::standing(3.0, -47.3)
        };
        let fine = Taxonomy::Fine13;
        assert_eq!(label_to_pose(Label::boxed(fine), &f), (0.0, -15.0, false));
        assert_eq!(
            label_to_pose(Label::new(fine, Target::Body(3)).unwrap(), &f),
            (60.0, 0.0, false)
        );
        assert_eq!(
            label_to_pose(Label::new(fine, Target::Body(0)).unwrap(), &f),
            (-47.3, 0.0, false)
        );
        assert_eq!(
            label_to_pose(Label::new(fine, Target::RightHand(3)).unwrap(), &f),
            (60.0, -10.0, false)
        );
        assert_eq!(
            label_to_pose(Label::new(fine, Target::Body(1)).unwrap(), &f),
            (0.0, -15.0, true)
        );
    }
}
