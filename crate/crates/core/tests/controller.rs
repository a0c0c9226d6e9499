use std::io::{self, Write};

use gaze_core::controller::{
    ingest, run_queued, run_stream, wire_header, wire_record, write_wire_stream, Controller,
    ControllerConfig, Ingested, WireFrame,
};
use gaze_core::experiment::{simulate_cohort, CohortConfig};
use gaze_core::models::{train, Architecture, Model, Sample, TrainConfig};
use gaze_core::oracle::OracleMode;
use gaze_core::preprocess::Cohort;
use gaze_core::scenario::{build_script, render_frames, ScenarioConfig};
use gaze_core::types::{encode_frame, PersonState, SceneFrame, Taxonomy};
use gaze_core::GazeError;

fn zero_controller(taxonomy: Taxonomy) -> Controller {
    let mut m = Model::new(Architecture::Lstm, taxonomy, 0);
    m.zero();
    Controller::new(m, ControllerConfig::new(taxonomy)).unwrap()
}

fn frame(t: u64, persons: &[(usize, PersonState)]) -> WireFrame {
    let mut scene = SceneFrame::empty(0);
    for (slot, p) in persons {
        scene.persons[*slot] = *p;
    }
    WireFrame { t, scene }
}

fn lines(out: &[u8]) -> Vec<serde_json::Value> {
    std::str::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn warmup_is_neutral() {
    let mut c = zero_controller(Taxonomy::Fine13);
    for i in 0..30 {
        let cmd = c
            .step(&frame(i * 33, &[(0, PersonState::standing(1.5, -60.0))]))
            .unwrap();
        assert_eq!(
            (cmd.yaw, cmd.pitch, cmd.target.name().as_str()),
            (0.0, 0.0, "Box")
        );
        assert_eq!(cmd.say, None);
    }
    assert_eq!(c.buffered(), 30);
    let cmd = c
        .step(&frame(990, &[(0, PersonState::standing(1.5, -60.0))]))
        .unwrap();
    assert_eq!(cmd.source, gaze_core::controller::CommandSource::Model);
    assert_eq!(c.buffered(), 30);
}

#[test]
fn greeting_cooldown_and_edges() {
    let mut c = zero_controller(Taxonomy::Coarse5);
    let idle = PersonState::standing(3.0, 30.0);
    let waving = idle.with_waving(true);
    let mut said = Vec::new();
    // (time ms, waving?): rise at 0, rise at 2000 (inside the cooldown), steady wave,
    // rise at 6000 (allowed), rise at 9000 (blocked), rise at 11500 (allowed)
    let script = [
        (0, true),
        (500, false),
        (2000, true),
        (3000, true),
        (5500, true),
        (5600, false),
        (6000, true),
        (8000, false),
        (9000, true),
        (10000, false),
        (11500, true),
    ];
    for (t, w) in script {
        let p = if w { waving } else { idle };
        if c.step(&frame(t, &[(2, p)])).unwrap().say.is_some() {
            said.push(t);
        }
    }
    assert_eq!(said, vec![0, 6000, 11500]);
    assert_eq!(c.greetings, 3);
}

#[test]
fn absent_model_target_falls_back_to_box() {
    let taxonomy = Taxonomy::Coarse5;
    let mut m = Model::new(Architecture::Lstm, taxonomy, 0);
    m.zero();
    // bias the head towards P1
    let last = m.params().len() - 1;
    m.params_mut()[last][[0, 0]] = 5.0;
    let mut c = Controller::new(m, ControllerConfig::new(taxonomy)).unwrap();
    let only_p3 = [(2, PersonState::standing(1.5, 30.0))];
    for i in 0..31 {
        c.step(&frame(i * 33, &only_p3)).unwrap();
    }
    assert_eq!(c.fallbacks, 1);
    let cmd = c
        .step(&frame(2000, &[(0, PersonState::standing(3.0, -60.0))]))
        .unwrap();
    assert_eq!(
        (cmd.yaw, cmd.pitch, cmd.target.name().as_str()),
        (-60.0, 0.0, "P1")
    );
}

#[test]
fn taxonomy_mismatch_is_fatal() {
    let m = Model::new(Architecture::Lstm, Taxonomy::Coarse5, 0);
    assert!(matches!(
        Controller::new(m, ControllerConfig::new(Taxonomy::Fine13)),
        Err(GazeError::Config(_))
    ));
}

#[test]
fn figure_scene_record_encodes_like_the_frame() {
    let mut scene = SceneFrame::empty(0);
    scene.persons[0] = PersonState::standing(1.5, -60.0);
    scene.persons[2] = PersonState::standing(1.5, 30.0)
        .with_waving(true)
        .with_pointing(true);
    let Ingested::Frame(f) = ingest(&wire_record(38_000, &scene), 0).unwrap() else {
        panic!("frame expected")
    };
    let fv = encode_frame(&f.scene).unwrap();
    assert_eq!(fv, encode_frame(&scene).unwrap());
    assert_eq!(fv.row(0), &[1.0, 0.3, 0.0, 0.0, 0.0, -1.0, 0.0]);
    assert_eq!(fv.row(1), &[0.0; 7]);
    assert_eq!(fv.row(2), &[1.0, 0.3, 1.0, 1.0, 0.0, 0.5, 0.0]);
    assert_eq!(fv.row(3), &[0.0; 7]);
}

#[test]
fn stream_resilience() {
    let mut input = String::new();
    input.push_str(&wire_header());
    input.push('\n');
    let p = PersonState::standing(1.5, -30.0);
    for i in 0..40u64 {
        let mut s = SceneFrame::empty(0);
        s.persons[1] = p;
        input.push_str(&wire_record(i * 33, &s));
        input.push('\n');
        if i == 10 {
            input.push_str("{\"t\": 1, \"pers\n");
        }
        if i == 20 {
            input.push_str("{\"t\":1,\"persons\":[null,null,null,null,null]}\n");
        }
        if i == 25 {
            input.push('\n');
        }
    }
    let mut c = zero_controller(Taxonomy::Fine13);
    let mut out = Vec::new();
    let stats = run_stream(input.as_bytes(), &mut out, &mut c).unwrap();
    assert_eq!(stats.frames, 40);
    assert_eq!(stats.commands, 40);
    assert_eq!(stats.malformed, 1);
    assert_eq!(stats.invalid, 1);
    assert_eq!((stats.warmup_commands, stats.predicted_commands), (30, 10));
    let cmds = lines(&out);
    assert_eq!(cmds.len(), 40);
    let times: Vec<u64> = cmds.iter().map(|c| c["t"].as_u64().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[0] < w[1]));

    let mut empty_out = Vec::new();
    let stats = run_stream(
        &b""[..],
        &mut empty_out,
        &mut zero_controller(Taxonomy::Fine13),
    )
    .unwrap();
    assert!(empty_out.is_empty());
    assert_eq!(stats.frames, 0);
    assert_eq!(stats.mean_latency_ms, 0.0);
}

struct FailingSink {
    budget: usize,
}

impl Write for FailingSink {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        if self.budget < buf.len() {
            return Err(io::Error::new(io::ErrorKind::BrokenPipe, "sink closed"));
        }
        self.budget -= buf.len();
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[test]
fn sink_failure_stops_cleanly() {
    let frames: Vec<SceneFrame> = (0..50).map(SceneFrame::empty).collect();
    let mut wire = Vec::new();
    write_wire_stream(&mut wire, &frames).unwrap();
    let mut c = zero_controller(Taxonomy::Fine13);
    let stats = run_stream(wire.as_slice(), FailingSink { budget: 600 }, &mut c).unwrap();
    assert!(stats.sink_error.is_some());
    assert!(stats.commands < 50 && stats.commands > 0);
}

#[test]
fn queued_transport_accounts_for_every_frame() {
    let rendered = render_frames(&build_script(&ScenarioConfig::random(4), 2).unwrap()).unwrap();
    let mut wire = Vec::new();
    write_wire_stream(&mut wire, &rendered.frames).unwrap();
    let n = rendered.frames.len();

    let mut serial = Vec::new();
    run_stream(
        wire.as_slice(),
        &mut serial,
        &mut zero_controller(Taxonomy::Fine13),
    )
    .unwrap();
    let mut queued = Vec::new();
    let stats = run_queued(
        io::Cursor::new(wire.clone()),
        &mut queued,
        &mut zero_controller(Taxonomy::Fine13),
        n + 10,
    )
    .unwrap();
    assert_eq!(stats.dropped, 0);
    assert_eq!(serial, queued);

    let mut tight = Vec::new();
    let stats = run_queued(
        io::Cursor::new(wire),
        &mut tight,
        &mut zero_controller(Taxonomy::Fine13),
        2,
    )
    .unwrap();
    assert_eq!(stats.frames + stats.dropped, n);
    assert_eq!(lines(&tight).len(), stats.frames);
}

#[test]
fn talking_person_model_tracks_p2() {
    // deterministic-oracle data over a varied random scenario
    let mut cfg = CohortConfig::new(Cohort::Adult, 3, OracleMode::Deterministic, 21);
    cfg.scenario = ScenarioConfig::random(40);
    cfg.scenario_seed = 8;
    cfg.thin = 8;
    let sim = simulate_cohort(&cfg).unwrap();
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for ex in sim.dataset.iter() {
        let s = Sample {
            window: ex.features,
            target: ex.target.index(),
        };
        if ex.participant.ends_with("03") {
            te.push(s)
        } else {
            tr.push(s)
        }
    }
    let tc = TrainConfig {
        max_epochs: 15,
        patience: 4,
        ..TrainConfig::default()
    };
    let (model, history) = train(
        Model::new(Architecture::Lstm, Taxonomy::Fine13, 1),
        &tr,
        &te,
        &tc,
    )
    .unwrap();
    assert!(history.best_accuracy > 0.85, "{}", history.best_accuracy);

    let mut c = Controller::new(model, ControllerConfig::new(Taxonomy::Fine13)).unwrap();
    let p2 = PersonState::standing(1.5, -30.0).with_talking(true);
    for i in 0..60u64 {
        let cmd = c.step(&frame(i * 33, &[(1, p2)])).unwrap();
        if i >= 30 {
            assert_eq!(cmd.target.name(), "P2-body", "frame {i}");
            assert_eq!((cmd.yaw, cmd.pitch), (-30.0, 0.0));
        }
    }
}
