mod plot;

use std::collections::hash_map::DefaultHasher;
use std::convert::Infallible;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fabricore::engine::{Action, FabricState};
use fabricore::env::{audit_episode, read_episode_csv, write_episode_csv, RewardConfig, SyntheticEpisode};
use fabricore::kinematics::KinematicModel;
use fabricore::retarget::synth::{synthetic_traces, SynthConfig};
use fabricore::retarget::{
    fit_pca, read_dataset_csv, retarget_trace, stack_rows, write_dataset_csv, HumanGraspTrace, RetargetConfig, RetargetHand,
};
use fabricore::scenario::Scenario;
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

/// Limit slack used when counting violations in a rollout summary (rad).
const LIMIT_TOL: f64 = 1e-6;

#[derive(Parser)]
#[command(name = "fabricore", version, about = "Geometric-fabric rollouts, eigengrasp fitting and RL-environment audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario and write the trajectory CSV and summary JSON.
    Rollout(RolloutArgs),
    /// Measure batched stepping throughput.
    Bench(BenchArgs),
    /// Write synthetic human grasp traces.
    GenTraces(GenTracesArgs),
    /// Retarget grasp traces onto the hand model.
    Retarget(RetargetArgs),
    /// Fit a PCA basis to a retargeted joint dataset.
    FitPca(FitPcaArgs),
    /// Write a scripted approach-lift-carry-hold episode CSV.
    GenEpisode(GenEpisodeArgs),
    /// Replay an episode CSV through the reward and print a per-term ledger.
    EnvAudit(EnvAuditArgs),
}

#[derive(Args)]
struct RolloutArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the scenario's step count.
    #[arg(long)]
    steps: Option<usize>,
    /// Also write an SVG chart of the joint positions.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Batch sizes to measure; repeat the flag for several.
    #[arg(long, default_values_t = vec![1usize, 1024])]
    batch: Vec<usize>,
    /// Integration steps per batch size.
    #[arg(long, default_value_t = 60)]
    steps: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTracesArgs {
    /// Hand model JSON; the bundled 16-joint hand when omitted.
    #[arg(long)]
    hand: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RetargetArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    hand: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitPcaArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenEpisodeArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EnvAuditArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// Reward configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the ledger as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), |p| read_json(p))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_hand(path: Option<&PathBuf>) -> CliResult<KinematicModel> {
    match path {
        Some(p) => KinematicModel::from_json_file(p).map_err(config_err),
        None => KinematicModel::from_json_str(fabricore::assets::HAND_16DOF).map_err(config_err),
    }
}

fn rollout(args: RolloutArgs) -> CliResult<()> {
    let scenario = Scenario::load(&args.scenario).map_err(config_err)?;
    let steps = args.steps.unwrap_or(scenario.file.steps);
    let engine = &scenario.engine;
    let mut source = scenario.action_source(args.seed, 0);
    info!("rollout of {} steps, seed {}", steps, args.seed);
    let (traj, fault) = engine.run_policy_rate(
        scenario.initial.clone(),
        |pull, _: &FabricState| Ok::<_, Infallible>(source.next_action(pull)),
        steps,
    );

    let model = engine.model();
    let (lo, hi) = (model.lower_limits(), model.upper_limits());
    let limits = engine.effective_limits();
    let mut violations = 0usize;
    let mut max_ratio = 0.0f64;
    for r in &traj.rows {
        for j in 0..traj.dof {
            if r.q[j] < lo[j] - LIMIT_TOL || r.q[j] > hi[j] + LIMIT_TOL {
                violations += 1;
            }
            max_ratio = max_ratio.max(r.qdd[j].abs() / limits[j]);
        }
    }
    let summary = json!({
        "scenario": args.scenario.display().to_string(),
        "seed": args.seed,
        "steps_requested": steps,
        "steps_completed": traj.steps(),
        "min_distance": traj.min_distance(),
        "limit_violations": violations,
        "clamp_count": traj.total_clamps(),
        "max_accel_ratio": max_ratio,
        "fault": fault.as_ref().map(|e| e.to_string()),
    });

    let out = &args.out;
    write_file(&out.join(&scenario.file.output.trajectory), &traj.to_csv())?;
    write_file(&out.join(&scenario.file.output.summary), &to_json(&summary))?;
    if args.plot {
        let svg = out.join(Path::new(&scenario.file.output.trajectory).with_extension("svg"));
        plot::joint_svg(&traj, &svg).map_err(|e| CliError::Runtime(format!("plot: {e}")))?;
    }
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    match fault {
        Some(e) => Err(CliError::Runtime(e.to_string())),
        None => Ok(()),
    }
}

fn state_checksum(states: &[FabricState]) -> u64 {
    let mut h = DefaultHasher::new();
    for s in states {
        for v in s.q.iter().chain(s.qd.iter()).chain(s.qdd.iter()) {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn bench(args: BenchArgs) -> CliResult<()> {
    let scenario = Scenario::load(&args.scenario).map_err(config_err)?;
    if args.batch.iter().any(|b| *b == 0) {
        return Err(CliError::Config("batch sizes must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let engine = &scenario.engine;
    let repeat = engine.config().action_repeat;
    let mut results = Vec::new();
    for &batch in &args.batch {
        let mut sources: Vec<_> = (0..batch).map(|i| scenario.action_source(args.seed, i as u64)).collect();
        let mut states = vec![scenario.initial.clone(); batch];
        let mut actions: Vec<Action> = Vec::with_capacity(batch);
        let mut seconds = 0.0;
        for k in 0..args.steps {
            if k % repeat == 0 {
                actions = sources.iter_mut().map(|s| s.next_action(k / repeat)).collect();
            }
            let start = Instant::now();
            let stepped = pool.install(|| engine.step_batch(&states, &actions));
            seconds += start.elapsed().as_secs_f64();
            for (slot, r) in states.iter_mut().zip(stepped) {
                *slot = r.map_err(|e| CliError::Runtime(e.to_string()))?.0;
            }
        }
        let total = batch * args.steps;
        let rate = total as f64 / seconds.max(1e-12);
        info!("batch {batch}: {rate:.0} steps/s");
        results.push(json!({
            "batch": batch,
            "steps": args.steps,
            "fabric_steps": total,
            "seconds": seconds,
            "steps_per_second": rate,
            "state_checksum": format!("{:016x}", state_checksum(&states)),
        }));
    }
    let report = json!({
        "scenario": args.scenario.display().to_string(),
        "seed": args.seed,
        "dof": engine.model().dof(),
        "machine": {
            "os": std::env::consts::OS,
            "arch": std::env::consts::ARCH,
            "available_parallelism": std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            "threads": pool.current_num_threads(),
        },
        "results": results,
    });
    let text = to_json(&report);
    if let Some(p) = &args.out {
        write_file(p, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn gen_traces(args: GenTracesArgs) -> CliResult<()> {
    let synth: SynthConfig = read_json_or_default(args.config.as_ref())?;
    let cfg = RetargetConfig::default();
    let hand = RetargetHand::new(load_hand(args.hand.as_ref())?, &cfg).map_err(config_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let traces = synthetic_traces(&mut rng, &hand, &cfg, &synth);
    fs::create_dir_all(&args.out).map_err(|e| CliError::Runtime(e.to_string()))?;
    for (i, t) in traces.iter().enumerate() {
        write_file(&args.out.join(format!("trace_{i:03}.json")), &to_json(t))?;
    }
    println!("wrote {} traces to {}", traces.len(), args.out.display());
    Ok(())
}

fn retarget(args: RetargetArgs) -> CliResult<()> {
    let cfg: RetargetConfig = read_json_or_default(args.config.as_ref())?;
    let hand = RetargetHand::new(load_hand(args.hand.as_ref())?, &cfg).map_err(config_err)?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.traces)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.traces.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no .json traces in {}", args.traces.display())));
    }
    let mut parts = Vec::with_capacity(paths.len());
    for p in &paths {
        let trace: HumanGraspTrace = read_json(p)?;
        trace.validate().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        let q = retarget_trace(&trace, &hand, &cfg).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))?;
        info!("{}: {} frames", p.display(), q.nrows());
        parts.push(q);
    }
    let data = stack_rows(&parts);
    write_file(&args.out, &write_dataset_csv(&data))?;
    println!("retargeted {} traces into {} samples", paths.len(), data.nrows());
    Ok(())
}

fn fit(args: FitPcaArgs) -> CliResult<()> {
    let data = read_dataset_csv(&read_text(&args.dataset)?).map_err(config_err)?;
    let basis = fit_pca(&data, args.k).map_err(config_err)?;
    write_file(&args.out, &basis.to_json())?;
    let ratio = basis.explained_variance_ratio();
    if ratio < 0.9 {
        warn!("top-{} components explain only {:.3} of the variance", args.k, ratio);
    }
    println!(
        "{}",
        json!({"samples": data.nrows(), "k": args.k, "explained_variance_ratio": ratio})
    );
    Ok(())
}

fn gen_episode(args: GenEpisodeArgs) -> CliResult<()> {
    let ep: SyntheticEpisode = read_json_or_default(args.config.as_ref())?;
    let rows = ep.generate();
    write_file(&args.out, &write_episode_csv(&rows))?;
    println!("wrote {} observations to {}", rows.len(), args.out.display());
    Ok(())
}

fn env_audit(args: EnvAuditArgs) -> CliResult<()> {
    let cfg: RewardConfig = read_json_or_default(args.config.as_ref())?;
    let rows = read_episode_csv(&read_text(&args.trajectory)?).map_err(config_err)?;
    let report = audit_episode(&rows, &cfg);
    println!(
        "{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "step", "to_obj", "lift", "lifted", "to_goal", "reached", "success", "total"
    );
    for (i, r) in report.steps.iter().enumerate() {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            i,
            r.to_obj,
            r.lift,
            r.lifted,
            r.to_goal,
            r.reached,
            r.success,
            r.total()
        );
    }
    let t = &report.totals;
    println!(
        "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
        "sum",
        t.to_obj,
        t.lift,
        t.lifted,
        t.to_goal,
        t.reached,
        t.success,
        t.total()
    );
    match report.reset_at {
        Some(i) => println!("reset at step {i}"),
        None => println!("no reset within {} observations", rows.len()),
    }
    if let Some(p) = &args.out {
        write_file(p, &to_json(&report))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FABRICORE_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Rollout(a) => rollout(a),
        Command::Bench(a) => bench(a),
        Command::GenTraces(a) => gen_traces(a),
        Command::Retarget(a) => retarget(a),
        Command::FitPca(a) => fit(a),
        Command::GenEpisode(a) => gen_episode(a),
        Command::EnvAudit(a) => env_audit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Config(m) => ("configuration error", m),
                CliError::Runtime(m) => ("runtime fault", m),
            };
            eprintln!("fabricore: {kind}: {msg}");
            ExitCode::from(e.code())
        }
    }
}
