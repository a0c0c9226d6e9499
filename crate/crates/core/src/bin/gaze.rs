//! `gaze`: command-line front end for the toolkit.
//!
//! Every subcommand writes into `--out DIR` and echoes its own arguments to
//! `DIR/config.json`. Exit codes: 0 success, 1 invalid arguments, input or
//! configuration, 2 I/O failure.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use gaze_core::controller::{
    run_queued, run_stream, write_wire_stream, Controller, ControllerConfig, DEFAULT_COOLDOWN_MS,
};
use gaze_core::eval::{
    make_folds, model_similarity, probe_windows, run_cv, write_plot_csv, write_report_csv, CvConfig,
};
use gaze_core::experiment::{derive_seed, simulate_cohort, CohortConfig};
use gaze_core::models::{load_model, save_model, train, Architecture, Model, Sample, TrainConfig};
use gaze_core::oracle::{
    oracle_for, simulate_tracker, write_oracle_csv, OracleMode, OraclePolicy, TrackerConfig,
};
use gaze_core::preprocess::{
    build_dataset, label_frames, read_dataset, read_raw_csv, resample, write_dataset,
    write_raw_csv, Cohort, Dataset, RecordingMeta, Stimulus, WINDOW,
};
use gaze_core::scenario::{build_script, read_aoi, render_frames, write_aoi, ScenarioConfig};
use gaze_core::stats::{
    compare_cohorts, published_summaries, write_comparisons, write_feature_table, ComparisonRow,
};
use gaze_core::types::{
    encode_frame, read_frames, write_frames, FrameFile, Normalization, Taxonomy,
};
use gaze_core::{GazeError, Result};

#[derive(Parser, Serialize)]
#[command(name = "gaze", version, about = "Gaze-target prediction toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct Common {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (cross-validation folds only).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Render a scenario with its AOI maps, oracle gaze and one simulated
    /// tracker recording.
    Generate(GenerateArgs),
    /// Turn a raw tracker recording into a windowed dataset.
    Preprocess(PreprocessArgs),
    /// Simulate a whole cohort straight to a dataset.
    Cohort(CohortArgs),
    /// Train one model with a participant hold-out for early stopping.
    Train(TrainArgs),
    /// Six-fold participant-grouped cross-validation.
    Eval(EvalArgs),
    /// Argmax agreement between two sets of fold models.
    Similarity(SimilarityArgs),
    /// Gaze features and cohort t-tests.
    Stats(StatsArgs),
    /// Stream frames through the controller.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum OracleArg {
    Deterministic,
    Stochastic,
}

impl From<OracleArg> for OracleMode {
    fn from(o: OracleArg) -> Self {
        match o {
            OracleArg::Deterministic => OracleMode::Deterministic,
            OracleArg::Stochastic => OracleMode::Stochastic,
        }
    }
}

#[derive(Args)]
struct OutDir {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct GenerateArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    /// Use this many random segments instead of the canonical schedule.
    #[arg(long)]
    segments: Option<usize>,
    /// Scenario JSON config; overrides --segments.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "stochastic")]
    oracle: OracleArg,
    #[arg(long, default_value = "fine13")]
    taxonomy: Taxonomy,
}

#[derive(Args, Serialize)]
struct PreprocessArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    /// Raw tracker CSV (`t_ms,x,y`).
    #[arg(long)]
    raw: PathBuf,
    /// Feature-frame file of the stimulus.
    #[arg(long)]
    frames: PathBuf,
    /// AOI sidecar CSV.
    #[arg(long)]
    aoi: PathBuf,
    #[arg(long, default_value = "fine13")]
    taxonomy: Taxonomy,
    #[arg(long, default_value = "p01")]
    participant: String,
    #[arg(long, default_value = "child")]
    cohort: Cohort,
    #[arg(long, default_value = "animation")]
    stimulus: Stimulus,
}

#[derive(Args, Serialize)]
struct CohortArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    #[arg(long, default_value = "child")]
    cohort: Cohort,
    #[arg(long, default_value = "animation")]
    stimulus: Stimulus,
    #[arg(long, default_value_t = 12)]
    participants: usize,
    #[arg(long, value_enum, default_value = "stochastic")]
    oracle: OracleArg,
    #[arg(long, default_value = "fine13")]
    taxonomy: Taxonomy,
    /// Keep every N-th window per recording.
    #[arg(long, default_value_t = 1)]
    thin: usize,
}

#[derive(Args, Serialize, Clone)]
struct TrainOpts {
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 20)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch,
            max_epochs: self.epochs,
            patience: self.patience,
            learning_rate: self.lr,
            seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    /// Dataset files; merged in order.
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = "lstm")]
    arch: Architecture,
    /// Participants held out for early stopping.
    #[arg(long, default_value_t = 2)]
    holdout: usize,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    #[arg(long, required = true, num_args = 1..)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = "lstm")]
    arch: Architecture,
    #[arg(long, default_value_t = 6)]
    folds: usize,
    #[command(flatten)]
    train: TrainOpts,
}

#[derive(Args, Serialize)]
struct SimilarityArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    /// Directory of fold models from one cohort (`eval --out`).
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Feature-frame file to probe; defaults to the canonical scenario.
    #[arg(long)]
    frames: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct StatsArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    /// Test the published cohort summary rows instead of simulating.
    #[arg(long)]
    published: bool,
    /// Participants per cohort when simulating.
    #[arg(long, default_value_t = 12)]
    participants: usize,
    #[arg(long, value_enum, default_value = "stochastic")]
    oracle: OracleArg,
}

#[derive(Args, Serialize)]
struct RunArgs {
    #[command(flatten)]
    #[serde(skip)]
    out: OutDir,
    #[arg(long)]
    model: PathBuf,
    /// NDJSON frame file to replay; without it and without --listen the
    /// canonical scenario is replayed.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Accept one TCP client at this address and stream live.
    #[arg(long, conflicts_with = "replay")]
    listen: Option<String>,
    #[arg(long, default_value_t = DEFAULT_COOLDOWN_MS)]
    cooldown_ms: u64,
    /// Live queue capacity in frames (oldest dropped on overflow).
    #[arg(long, default_value_t = 8)]
    queue: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| GazeError::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare_out(out: &Path, cli: &Cli) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("config.json"), cli)
}

/// One machine-readable summary line on stdout.
fn report(value: serde_json::Value) {
    println!("{value}");
}

fn load_datasets(paths: &[PathBuf]) -> Result<Dataset> {
    let mut iter = paths.iter();
    let first = iter
        .next()
        .ok_or_else(|| GazeError::Empty("no dataset given".into()))?;
    let mut ds = read_dataset(open(first)?)?;
    for p in iter {
        ds.merge(read_dataset(open(p)?)?)?;
    }
    if ds.is_empty() {
        return Err(GazeError::Empty("datasets hold no examples".into()));
    }
    Ok(ds)
}

fn cmd_generate(a: &GenerateArgs, common: &Common) -> Result<serde_json::Value> {
    let out = &a.out.out;
    let config = match (&a.scenario, a.segments) {
        (Some(path), _) => serde_json::from_reader(open(path)?)?,
        (None, Some(n)) => ScenarioConfig::random(n),
        (None, None) => ScenarioConfig::default(),
    };
    let script = build_script(&config, common.seed)?;
    let rendered = render_frames(&script)?;
    write_json(&out.join("script.json"), &script)?;
    let encoded = rendered
        .frames
        .iter()
        .map(encode_frame)
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(&out.join("frames.csv"))?;
    write_frames(
        &mut w,
        &FrameFile {
            taxonomy: a.taxonomy,
            normalization: Normalization::DEFAULT,
            frames: encoded,
        },
    )?;
    w.flush()?;
    let mut w = create(&out.join("aoi.csv"))?;
    write_aoi(&mut w, &rendered.aoi)?;
    w.flush()?;
    let mut policy = match OracleMode::from(a.oracle) {
        OracleMode::Deterministic => OraclePolicy::deterministic(),
        OracleMode::Stochastic => OraclePolicy::stochastic(0),
    };
    policy.seed = derive_seed(common.seed, 0);
    let oracle = oracle_for(&rendered, &policy)?;
    let mut w = create(&out.join("oracle.csv"))?;
    write_oracle_csv(&mut w, &oracle)?;
    w.flush()?;
    let tracker = TrackerConfig {
        seed: derive_seed(common.seed, 1),
        ..TrackerConfig::default()
    };
    let samples = simulate_tracker(&oracle, &tracker);
    let mut w = create(&out.join("raw.csv"))?;
    write_raw_csv(&mut w, &samples)?;
    w.flush()?;
    let mut w = create(&out.join("wire.ndjson"))?;
    write_wire_stream(&mut w, &rendered.frames)?;
    w.flush()?;
    Ok(json!({
        "command": "generate",
        "frames": rendered.frames.len(),
        "segments": script.segments.len(),
        "raw_samples": samples.len(),
    }))
}

fn cmd_preprocess(a: &PreprocessArgs) -> Result<serde_json::Value> {
    let frame_file = read_frames(open(&a.frames)?)?;
    let n = frame_file.frames.len();
    let scenes = frame_file
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| f.decode(i, frame_file.normalization))
        .collect::<Result<Vec<_>>>()?;
    let aoi = read_aoi(open(&a.aoi)?, n)?;
    let samples = read_raw_csv(open(&a.raw)?)?;
    let mut gaze = resample(&samples)?;
    if gaze.len() < n {
        return Err(GazeError::LengthMismatch(format!(
            "recording covers {} frames, stimulus has {n}",
            gaze.len()
        )));
    }
    gaze.truncate(n);
    let labels = label_frames(&gaze, &aoi, a.taxonomy);
    let meta = RecordingMeta {
        participant: a.participant.clone(),
        cohort: a.cohort,
        stimulus: a.stimulus,
    };
    let ds = build_dataset(&scenes, &labels, meta, a.taxonomy, WINDOW, 1)?;
    if ds.is_empty() {
        eprintln!("warning: no frame qualified as a training example; dataset is empty");
    }
    let mut w = create(&a.out.out.join("dataset.json"))?;
    write_dataset(&mut w, &ds)?;
    w.flush()?;
    let valid = gaze.iter().filter(|g| g.valid).count();
    Ok(json!({
        "command": "preprocess",
        "frames": n,
        "valid_frames": valid,
        "examples": ds.len(),
    }))
}

fn cmd_cohort(a: &CohortArgs, common: &Common) -> Result<serde_json::Value> {
    let mut config = CohortConfig::new(a.cohort, a.participants, a.oracle.into(), common.seed);
    config.stimulus = a.stimulus;
    config.taxonomy = a.taxonomy;
    config.thin = a.thin;
    let sim = simulate_cohort(&config)?;
    let out = &a.out.out;
    let mut w = create(&out.join("dataset.json"))?;
    write_dataset(&mut w, &sim.dataset)?;
    w.flush()?;
    let mut w = create(&out.join("features.csv"))?;
    write_feature_table(&mut w, &sim.feature_rows(&config))?;
    w.flush()?;
    Ok(json!({
        "command": "cohort",
        "participants": a.participants,
        "examples": sim.dataset.len(),
    }))
}

fn write_history(path: &Path, history: &gaze_core::models::History) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for e in &history.epochs {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_train(a: &TrainArgs, common: &Common) -> Result<serde_json::Value> {
    let ds = load_datasets(&a.data)?;
    let people = ds.participants();
    if a.holdout == 0 || a.holdout >= people.len() {
        return Err(GazeError::validation(
            "holdout",
            format!(
                "must be between 1 and {} for {} participants",
                people.len().saturating_sub(1),
                people.len()
            ),
        ));
    }
    // one participant per fold gives a seeded ordering; the first folds are held out
    let plan = make_folds(&people, people.len(), common.seed)?;
    let held: Vec<String> = plan
        .assignment
        .iter()
        .filter(|(_, &f)| f < a.holdout)
        .map(|(p, _)| p.clone())
        .collect();
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for ex in ds.iter() {
        let s = Sample {
            window: ex.features,
            target: ex.target.index(),
        };
        if held.iter().any(|h| h == ex.participant) {
            te.push(s);
        } else {
            tr.push(s);
        }
    }
    let cfg = a.train.config(common.seed);
    let (model, history) = train(Model::new(a.arch, ds.taxonomy, common.seed), &tr, &te, &cfg)?;
    let out = &a.out.out;
    save_model(&out.join("model.json"), &model, &cfg)?;
    write_history(&out.join("history.csv"), &history)?;
    Ok(json!({
        "command": "train",
        "architecture": a.arch.to_string(),
        "taxonomy": ds.taxonomy.to_string(),
        "parameters": model.param_count(),
        "train_examples": tr.len(),
        "holdout_examples": te.len(),
        "holdout": held,
        "best_epoch": history.best_epoch,
        "best_accuracy": history.best_accuracy,
    }))
}

fn cmd_eval(a: &EvalArgs, common: &Common) -> Result<serde_json::Value> {
    let ds = load_datasets(&a.data)?;
    let config = CvConfig {
        folds: a.folds,
        seed: common.seed,
        train: a.train.config(common.seed),
        jobs: common.jobs,
    };
    let outcome = run_cv(&ds, a.arch, &config)?;
    let out = &a.out.out;
    let r = &outcome.report;
    let mut w = create(&out.join("report.csv"))?;
    write_report_csv(&mut w, r)?;
    w.flush()?;
    let mut w = create(&out.join("plot.csv"))?;
    write_plot_csv(&mut w, r)?;
    w.flush()?;
    write_json(&out.join("report.json"), r)?;
    let models = out.join("models");
    fs::create_dir_all(&models)?;
    for (i, m) in outcome.models.iter().enumerate() {
        save_model(&models.join(format!("fold-{i}.json")), m, &config.train)?;
    }
    Ok(json!({
        "command": "eval",
        "architecture": a.arch.to_string(),
        "examples": ds.len(),
        "top1": r.topk_mean[0],
        "top2": r.topk_mean.get(1),
        "top3": r.topk_mean.get(2),
        "majority_baseline": r.majority_baseline,
        "audit_clean": r.audit_clean(),
    }))
}

fn load_model_dir(dir: &Path) -> Result<Vec<Model>> {
    let dir = if dir.join("models").is_dir() {
        dir.join("models")
    } else {
        dir.to_path_buf()
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(GazeError::Empty(format!(
            "no model files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_model(p).map(|(m, _)| m))
        .collect()
}

fn cmd_similarity(a: &SimilarityArgs) -> Result<serde_json::Value> {
    let ma = load_model_dir(&a.a)?;
    let mb = load_model_dir(&a.b)?;
    let frames = match &a.frames {
        Some(p) => read_frames(open(p)?)?.frames,
        None => render_frames(&build_script(&ScenarioConfig::default(), 0)?)?
            .frames
            .iter()
            .map(encode_frame)
            .collect::<Result<Vec<_>>>()?,
    };
    let probes = probe_windows(&frames, WINDOW);
    let sim = model_similarity(&ma, &mb, &probes)?;
    let out = &a.out.out;
    write_json(&out.join("similarity.json"), &sim)?;
    let mut w = csv::Writer::from_writer(create(&out.join("similarity.csv"))?);
    w.write_record(["model_a", "model_b", "agreement"])?;
    for (i, row) in sim.scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            w.write_record([i.to_string(), j.to_string(), format!("{s:.6}")])?;
        }
    }
    w.flush()?;
    Ok(json!({
        "command": "similarity",
        "pairs": sim.pair_count(),
        "probes": probes.len(),
        "mean": sim.mean,
        "sd": sim.sd,
    }))
}

fn cmd_stats(a: &StatsArgs, common: &Common) -> Result<serde_json::Value> {
    let out = &a.out.out;
    let rows: Vec<ComparisonRow> = if a.published {
        published_summaries()
            .into_iter()
            .map(|(s, f, x, y)| ComparisonRow::from_summary(s, f, x, y))
            .collect::<Result<_>>()?
    } else {
        let mut features = Vec::new();
        for (ci, cohort) in [Cohort::Child, Cohort::Adult].into_iter().enumerate() {
            for (si, stimulus) in [Stimulus::Animation, Stimulus::LiveAction]
                .into_iter()
                .enumerate()
            {
                let mut c = CohortConfig::new(
                    cohort,
                    a.participants,
                    a.oracle.into(),
                    derive_seed(common.seed, (ci * 2 + si) as u64),
                );
                c.stimulus = stimulus;
                features.extend(simulate_cohort(&c)?.feature_rows(&c));
            }
        }
        let mut w = create(&out.join("features.csv"))?;
        write_feature_table(&mut w, &features)?;
        w.flush()?;
        compare_cohorts(&features)?
    };
    let mut w = create(&out.join("tests.csv"))?;
    write_comparisons(&mut w, &rows)?;
    w.flush()?;
    Ok(json!({
        "command": "stats",
        "comparisons": rows.iter().map(|r| json!({
            "stimulus": r.stimulus, "feature": r.feature, "t": r.t, "df": r.df, "p": r.p
        })).collect::<Vec<_>>(),
    }))
}

fn cmd_run(a: &RunArgs) -> Result<serde_json::Value> {
    let (model, _) = load_model(&a.model)?;
    let mut config = ControllerConfig::new(model.taxonomy());
    config.cooldown_ms = a.cooldown_ms;
    let mut controller = Controller::new(model, config)?;
    let out = &a.out.out;
    let sink = create(&out.join("commands.ndjson"))?;
    let stats = if let Some(addr) = &a.listen {
        let listener = TcpListener::bind(addr)?;
        eprintln!("listening on {}", listener.local_addr()?);
        let (stream, peer) = listener.accept()?;
        eprintln!("client {peer} connected");
        run_queued(BufReader::new(stream), sink, &mut controller, a.queue)?
    } else if let Some(path) = &a.replay {
        run_stream(open(path)?, sink, &mut controller)?
    } else {
        let rendered = render_frames(&build_script(&ScenarioConfig::default(), 0)?)?;
        let mut wire = Vec::new();
        write_wire_stream(&mut wire, &rendered.frames)?;
        run_stream(wire.as_slice(), sink, &mut controller)?
    };
    write_json(&out.join("session.json"), &stats)?;
    for d in &stats.diagnostics {
        eprintln!("diagnostic: {d}");
    }
    Ok(json!({ "command": "run", "session": stats }))
}

fn dispatch(cli: &Cli) -> Result<serde_json::Value> {
    let out = match &cli.command {
        Command::Generate(a) => &a.out.out,
        Command::Preprocess(a) => &a.out.out,
        Command::Cohort(a) => &a.out.out,
        Command::Train(a) => &a.out.out,
        Command::Eval(a) => &a.out.out,
        Command::Similarity(a) => &a.out.out,
        Command::Stats(a) => &a.out.out,
        Command::Run(a) => &a.out.out,
    };
    prepare_out(out, cli)?;
    let c = &cli.common;
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, c),
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Cohort(a) => cmd_cohort(a, c),
        Command::Train(a) => cmd_train(a, c),
        Command::Eval(a) => cmd_eval(a, c),
        Command::Similarity(a) => cmd_similarity(a),
        Command::Stats(a) => cmd_stats(a, c),
        Command::Run(a) => cmd_run(a),
    }
}

fn main() -> ExitCode {
    // Argument errors are validation failures (exit 1); clap would use 2,
    // which is reserved for I/O.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli) {
        Ok(summary) => {
            report(summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
