//! `raceline` command line: train a policy, evaluate checkpoints, race one
//! deterministic episode to a replay file, attribute policy outputs back to
//! pixels, and generate or inspect track files. All behavior is driven by a
//! TOML run configuration; flags override individual fields.

use clap::{Args, Parser, Subcommand, ValueEnum};
use raceline::attrib::{
    export_attribution, integrated_gradients, temporal_attribution, AttribTarget, Frame,
};
use raceline::config::RunConfig;
use raceline::dist::{
    channel_pair, load_actor, run_trainer, run_worker, Link, TrainerConfig, WorkerConfig,
};
use raceline::env::{image_to_f32, replay, RaceConfig, RaceEnv};
use raceline::eval::{
    export_results, run_eval_episode, run_eval_episode_observed, select_checkpoint,
    EpisodeResult, SelectionRule,
};
use raceline::nn::nets::ActorNet;
use raceline::qrsac::{Learner, ReplayBuffer};
use raceline::track::{make_oval, to_track_file, TrackDef};
use raceline::vehicle::VehicleState;
use std::error::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "raceline", version, about = "Vision-based racing RL stack")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy with the in-process trainer/worker harness.
    Train(TrainArgs),
    /// Evaluate checkpoints and apply the selection rule.
    Eval(EvalArgs),
    /// Run one deterministic episode and record a replay.
    Race(RaceArgs),
    /// Integrated-gradients attribution over a recorded replay.
    Attribute(AttributeArgs),
    /// Generate or inspect `track v1` files.
    Track(TrackArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration; omitted = all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override `[run] seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override `[run] out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Named ablations (no_rnn, symmetric_critic, zero_hidden_init,
    /// hidden_128); repeatable.
    #[arg(long)]
    ablation: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Box<dyn Error>> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)
                .map_err(|e| format!("config {}: {e}", path.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.run.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.run.out_dir = out.clone();
        }
        for name in &self.ablation {
            cfg.apply_ablation(name)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Override `[harness] epochs`.
    #[arg(long)]
    epochs: Option<u64>,
    /// Override `[harness] workers`.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Checkpoint files to evaluate (at least one).
    #[arg(long, required = true, num_args = 1..)]
    checkpoint: Vec<PathBuf>,
    /// Override `[eval] episodes` per checkpoint.
    #[arg(long)]
    episodes: Option<usize>,
    /// Override `[eval] collision_ceiling_s`.
    #[arg(long)]
    collision_ceiling: Option<f64>,
}

#[derive(Args)]
struct RaceArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Episode seed; default `[eval] seed_base`.
    #[arg(long)]
    episode_seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Steer,
    ThrottleBrake,
    CombinedNorm,
}

impl From<TargetArg> for AttribTarget {
    fn from(t: TargetArg) -> AttribTarget {
        match t {
            TargetArg::Steer => AttribTarget::Steer,
            TargetArg::ThrottleBrake => AttribTarget::ThrottleBrake,
            TargetArg::CombinedNorm => AttribTarget::CombinedNorm,
        }
    }
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Replay file recorded by `raceline race` under the same config.
    #[arg(long)]
    replay: PathBuf,
    /// Half-open frame range `a..b` within the replay.
    #[arg(long, default_value = "0..1")]
    frames: String,
    #[arg(long, value_enum, default_value = "steer")]
    target: TargetArg,
    /// Riemann steps along the interpolation path.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Attribute every frame in the range to the action at the final frame
    /// (through the recurrent chain) instead of frame-by-frame.
    #[arg(long)]
    temporal: bool,
}

#[derive(Args)]
struct TrackArgs {
    #[command(subcommand)]
    cmd: TrackCmd,
}

#[derive(Subcommand)]
enum TrackCmd {
    /// Write an oval circuit in the `track v1` format.
    MakeOval {
        #[arg(long, default_value_t = 60.0)]
        straight: f64,
        #[arg(long, default_value_t = 20.0)]
        radius: f64,
        #[arg(long, default_value_t = 6.0)]
        half_width: f64,
        #[arg(long, default_value_t = 2.0)]
        spacing: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a track file and print its stats.
    Info { file: PathBuf },
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Race(a) => cmd_race(a),
        Cmd::Attribute(a) => cmd_attribute(a),
        Cmd::Track(a) => cmd_track(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn load_actor_file(path: &Path) -> Result<ActorNet<f32>, Box<dyn Error>> {
    let bytes =
        std::fs::read(path).map_err(|e| format!("checkpoint {}: {e}", path.display()))?;
    Ok(load_actor(&bytes).map_err(|e| format!("checkpoint {}: {e}", path.display()))?)
}

fn checkpoint_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_train(args: TrainArgs) -> Result<(), Box<dyn Error>> {
    let mut cfg = args.common.resolve()?;
    if let Some(epochs) = args.epochs {
        cfg.harness.epochs = epochs;
    }
    if let Some(workers) = args.workers {
        cfg.harness.workers = workers;
    }
    cfg.validate()?;

    let out_dir = cfg.run.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("config.resolved.toml"), cfg.to_toml())?;
    let mut metrics_file =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("metrics.jsonl"))?);

    let track = Arc::new(cfg.load_track()?);
    let spec = cfg.load_car()?;
    let hash = cfg.config_hash();
    eprintln!(
        "track length {:.1} m, {} workers, {} epochs, config hash {hash:016x}",
        track.total_length, cfg.harness.workers, cfg.harness.epochs
    );

    let mut learner = Learner::<f32>::new(cfg.learner_config());
    let mut buffer = ReplayBuffer::new(cfg.learner.replay_capacity);

    let mut links: Vec<Box<dyn Link>> = Vec::new();
    let mut joins = Vec::new();
    for i in 0..cfg.harness.workers as u32 {
        let (trainer_end, mut worker_end) = channel_pair();
        links.push(Box::new(trainer_end));
        let wcfg = WorkerConfig {
            worker_id: i,
            seed: cfg.worker_seed(i),
            config_hash: hash,
            race: cfg.train_race_config(),
            opponent_counts: cfg.scenario.opponent_counts.clone(),
            episodes_per_update: cfg.harness.episodes_per_worker_per_epoch,
            flush_every: cfg.harness.flush_every,
        };
        let wtrack = track.clone();
        let wspec = spec.clone();
        joins.push(std::thread::spawn(move || {
            run_worker(wtrack, wspec, &wcfg, &mut worker_end)
        }));
    }

    let tcfg = TrainerConfig {
        epochs: cfg.harness.epochs,
        episodes_per_worker_per_epoch: cfg.harness.episodes_per_worker_per_epoch,
        checkpoint_every: cfg.harness.checkpoint_every,
        out_dir: Some(out_dir.clone()),
        config_hash: hash,
    };
    let report_every = (cfg.harness.epochs / 20).max(1);
    let outcome = run_trainer(&mut learner, &mut buffer, &mut links, &tcfg, &mut |m| {
        metrics_file
            .write_all(format!("{}\n", m.to_json_line()).as_bytes())
            .expect("metrics write");
        if m.epoch % report_every == 0 || m.reinit_fired {
            eprintln!(
                "epoch {:>6}  critic {:>10.4}  actor {:>10.4}  entropy {:>8.4}  fill {:>5.3}{}",
                m.epoch,
                m.critic_loss,
                m.actor_loss,
                m.entropy,
                m.buffer_fill,
                if m.reinit_fired { "  [reinit]" } else { "" }
            );
        }
    });
    drop(links);
    for j in joins {
        match j.join() {
            Ok(Ok(_)) => {}
            Ok(Err(e)) => eprintln!("worker error: {e}"),
            Err(_) => eprintln!("worker thread panicked"),
        }
    }
    let outcome = outcome?;
    metrics_file.flush()?;
    println!(
        "trained {} epochs: {} episodes committed, {} dropped, {} sequence violations",
        outcome.metrics.len(),
        outcome.audit.episodes_committed,
        outcome.audit.episodes_dropped,
        outcome.audit.sequence_violations
    );
    println!(
        "final checkpoint: {}",
        out_dir.join("checkpoints/final.ckpt").display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Box<dyn Error>> {
    let mut cfg = args.common.resolve()?;
    if let Some(episodes) = args.episodes {
        cfg.eval.episodes = episodes;
    }
    if let Some(c) = args.collision_ceiling {
        cfg.eval.collision_ceiling_s = c;
    }
    cfg.validate()?;
    let track = Arc::new(cfg.load_track()?);
    let spec = cfg.load_car()?;
    let race = cfg.eval_race_config();

    let mut results: Vec<EpisodeResult> = Vec::new();
    for path in &args.checkpoint {
        let actor = load_actor_file(path)?;
        let label = checkpoint_label(path);
        for i in 0..cfg.eval.episodes as u64 {
            results.push(run_eval_episode(
                &actor,
                track.clone(),
                &spec,
                &race,
                cfg.eval.seed_base + i,
                &label,
            )?);
        }
        eprintln!("evaluated {label}: {} episodes", cfg.eval.episodes);
    }

    std::fs::create_dir_all(&cfg.run.out_dir)?;
    let csv = cfg.run.out_dir.join("results.csv");
    export_results(&results, &csv)?;
    println!("results: {}", csv.display());

    let rule = SelectionRule {
        collision_time_ceiling_s: cfg.eval.collision_ceiling_s,
    };
    let sel = select_checkpoint(&results, &rule)?;
    println!(
        "selected: {} (mean margin {:.3} m, mean collision {:.3} s{})",
        sel.checkpoint,
        sel.mean_winning_margin_m,
        sel.mean_collision_time_s,
        if sel.fallback {
            "; FALLBACK: no checkpoint met the collision ceiling"
        } else {
            ""
        }
    );
    Ok(())
}

fn track_label(cfg: &RunConfig) -> String {
    match &cfg.track.file {
        Some(p) => p.display().to_string(),
        None => format!(
            "oval:{}x{}",
            cfg.track.oval_straight_m, cfg.track.oval_radius_m
        ),
    }
}

fn cmd_race(args: RaceArgs) -> Result<(), Box<dyn Error>> {
    let cfg = args.common.resolve()?;
    let track = Arc::new(cfg.load_track()?);
    let spec = cfg.load_car()?;
    let race = cfg.eval_race_config();
    let seed = args.episode_seed.unwrap_or(cfg.eval.seed_base);
    let actor = load_actor_file(&args.checkpoint)?;
    let label = checkpoint_label(&args.checkpoint);

    let replay_dir = cfg.run.out_dir.join("replays");
    std::fs::create_dir_all(&replay_dir)?;
    let replay_path = replay_dir.join(format!("race_seed{seed}.jsonl"));
    let header = replay::ReplayHeader {
        format: String::new(), // set by the writer
        version: 0,
        track: track_label(&cfg),
        n_cars: race.n_opponents + 1,
        laps: race.laps,
        seed,
    };
    let file = std::io::BufWriter::new(std::fs::File::create(&replay_path)?);
    let mut writer = Some(replay::ReplayWriter::new(file, &header)?);
    let mut replay_err: Option<replay::ReplayError> = None;

    let result = run_eval_episode_observed(
        &actor,
        track,
        &spec,
        &race,
        seed,
        &label,
        &mut |env: &RaceEnv, action, breakdown| {
            if replay_err.is_some() {
                return;
            }
            let states: Vec<&VehicleState> =
                (0..env.n_cars()).map(|i| env.car_state(i)).collect();
            if let Err(e) = writer
                .as_mut()
                .expect("writer live during episode")
                .record(&states, action, breakdown, env.progress(0))
            {
                replay_err = Some(e);
            }
        },
    )?;
    if let Some(e) = replay_err {
        return Err(format!("replay write failed: {e}").into());
    }
    writer.expect("writer still present").finish()?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    println!("replay: {}", replay_path.display());
    Ok(())
}

fn parse_frame_range(s: &str) -> Result<(usize, usize), Box<dyn Error>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("frame range must look like 'a..b', got '{s}'"))?;
    let a: usize = a.parse()?;
    let b: usize = b.parse()?;
    if a >= b {
        return Err(format!("empty frame range {a}..{b}").into());
    }
    Ok((a, b))
}

fn cmd_attribute(args: AttributeArgs) -> Result<(), Box<dyn Error>> {
    let cfg = args.common.resolve()?;
    let (start, end) = parse_frame_range(&args.frames)?;
    let target: AttribTarget = args.target.into();

    let reader = std::io::BufReader::new(
        std::fs::File::open(&args.replay)
            .map_err(|e| format!("replay {}: {e}", args.replay.display()))?,
    );
    let (header, steps) = replay::read_replay(reader)?;
    if end > steps.len() {
        return Err(format!(
            "frame range {start}..{end} out of range: replay has {} frames",
            steps.len()
        )
        .into());
    }

    let track = Arc::new(cfg.load_track()?);
    let spec = cfg.load_car()?;
    // Rebuild the recorded scenario; the start mode and derates come from
    // the same `[eval]` section `raceline race` used.
    let race = RaceConfig {
        n_opponents: header.n_cars - 1,
        laps: header.laps,
        ..cfg.eval_race_config()
    };
    let mut actor = load_actor_file(&args.checkpoint)?;

    // Deterministically re-run the episode to regenerate observations,
    // cross-checking the ego trajectory against the recorded poses so a
    // config/checkpoint mismatch cannot silently attribute the wrong run.
    let mut env = RaceEnv::new(track, spec, race)?;
    let mut obs = env.reset_with_seed(header.seed)?;
    let mut hidden = actor.zero_hidden(1);
    let mut frames: Vec<Frame> = Vec::with_capacity(end);
    let mut hiddens: Vec<Vec<f32>> = Vec::with_capacity(end);
    for rec in steps.iter().take(end) {
        frames.push(Frame {
            image: image_to_f32(&obs.image),
            proprio: obs.proprio.iter().map(|&v| v as f32).collect(),
        });
        hiddens.push(hidden.clone());
        let (a, next_hidden) = raceline::eval::eval_action(&actor, &obs, &hidden);
        let (next_obs, _, done, _) = env.step(raceline::dist::to_env_action(a))?;
        let ego = env.car_state(0);
        let pose = &rec.poses[0];
        if (ego.position[0] - pose.x).abs() > 1e-6 || (ego.position[1] - pose.y).abs() > 1e-6 {
            return Err(format!(
                "replay diverges at frame {}: recorded ({:.6}, {:.6}), re-run \
                 ({:.6}, {:.6}) — wrong checkpoint or config for this replay?",
                rec.step, pose.x, pose.y, ego.position[0], ego.position[1]
            )
            .into());
        }
        obs = next_obs;
        hidden = next_hidden;
        if done && frames.len() < end {
            return Err(format!(
                "episode terminated at frame {} before the requested range",
                frames.len()
            )
            .into());
        }
    }

    let out_dir = cfg.run.out_dir.join("attributions");
    std::fs::create_dir_all(&out_dir)?;
    if args.temporal {
        let maps = temporal_attribution(
            &mut actor,
            &frames[start..end],
            &hiddens[start],
            target,
            args.steps,
        )?;
        for (i, map) in maps.iter().enumerate() {
            let base = out_dir.join(format!("frame_{:05}_to_{:05}", start + i, end - 1));
            export_attribution(map, &base)?;
            println!("{} (residual {:.3e})", base.display(), map.completeness_residual);
        }
    } else {
        for t in start..end {
            let map = integrated_gradients(
                &mut actor,
                &frames[t].image,
                &frames[t].proprio,
                &hiddens[t],
                target,
                args.steps,
            )?;
            let base = out_dir.join(format!("frame_{t:05}"));
            export_attribution(&map, &base)?;
            println!("{} (residual {:.3e})", base.display(), map.completeness_residual);
        }
    }
    Ok(())
}

fn cmd_track(args: TrackArgs) -> Result<(), Box<dyn Error>> {
    match args.cmd {
        TrackCmd::MakeOval {
            straight,
            radius,
            half_width,
            spacing,
            out,
        } => {
            let (points, widths) = make_oval(straight, radius, half_width, spacing);
            let text = to_track_file(&points, &widths);
            let track = TrackDef::parse(&text)?; // validate before writing
            std::fs::write(&out, text)?;
            println!(
                "{}: {} points, length {:.2} m",
                out.display(),
                track.centerline.len(),
                track.total_length
            );
        }
        TrackCmd::Info { file } => {
            let track = TrackDef::load(&file)?;
            let (wmin, wmax) = track
                .half_width
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                    (lo.min(w), hi.max(w))
                });
            println!("{}: valid closed loop", file.display());
            println!("  points:       {}", track.centerline.len());
            println!("  length:       {:.2} m", track.total_length);
            println!("  half-width:   {wmin:.2}..{wmax:.2} m");
        }
    }
    Ok(())
}
