use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use vinenav::bench::run_bench;
use vinenav::eval::compute_midline;
use vinenav::replay::{load_manifest, replay, ReplayConfig};
use vinenav::report::{episode_svg, write_command_csv};
use vinenav::scenario::{run_scenario, write_artifacts, ScenarioOverrides, ScenarioSpec};
use vinenav::simworld::{generate_world, Layout};

/// Vineyard row-following experiments: closed-loop simulation, replay of
/// recorded frames and pipeline benchmarks.
#[derive(Parser)]
#[command(name = "vinenav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episodes of a scenario and write logs, plots and metrics.
    Run(RunArgs),
    /// Stream recorded mask and depth frames through the controller.
    Replay(ReplayArgs),
    /// Time each pipeline stage at several resolutions.
    Bench(BenchArgs),
    /// Generate a world and write it as JSON and SVG.
    GenWorld(GenWorldArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Straight,
    Curved,
}

impl From<Profile> for Layout {
    fn from(p: Profile) -> Self {
        match p {
            Profile::Straight => Layout::Straight,
            Profile::Curved => Layout::Curved,
        }
    }
}

/// Controller and preprocessing flags shared by `run` and `replay`.
#[derive(Args, Clone, Default)]
struct PipelineFlags {
    /// Number of consecutive masks fused per command.
    #[arg(long)]
    s_window: Option<usize>,
    /// Fraction of the farthest depth kept as line of sight.
    #[arg(long, allow_negative_numbers = true)]
    l_depth: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha_ema: Option<f64>,
    /// Maximum linear velocity, m/s.
    #[arg(long, allow_negative_numbers = true)]
    vmax: Option<f64>,
    /// Maximum angular velocity, rad/s.
    #[arg(long, allow_negative_numbers = true)]
    wmax: Option<f64>,
    /// Rows with fewer obstacle cells than this fraction of the fullest row are dropped.
    #[arg(long, allow_negative_numbers = true)]
    noise_frac: Option<f64>,
    /// Shortest accepted free corridor, columns.
    #[arg(long)]
    min_cluster: Option<usize>,
    /// Minimum fused count for a cell to count as vine.
    #[arg(long)]
    fusion_threshold: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON; without it the --profile preset is used.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[command(flatten)]
    pipeline: PipelineFlags,
    /// Exit with status 3 when any episode ends in a collision.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct ReplayArgs {
    /// Manifest listing `frame mask depth [class] [sequence]` per line.
    #[arg(long = "replay", value_name = "MANIFEST")]
    manifest: PathBuf,
    /// Directory for commands.csv and stats.json.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated WxH list.
    #[arg(long, default_value = "32x32,64x64,128x128,224x224")]
    resolutions: String,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Write the report as JSON here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenWorldArgs {
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

/// Failure split by exit status.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
    Collision(usize),
}

type CmdResult = Result<(), Failure>;

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors; bad usage is a config error.
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Bench(args) => cmd_bench(args),
        Command::GenWorld(args) => cmd_gen_world(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Collision(n)) => {
            eprintln!("error: {n} episode(s) ended in a collision");
            ExitCode::from(3)
        }
    }
}

fn load_spec(path: Option<&Path>, profile: Option<Profile>) -> Result<ScenarioSpec, Failure> {
    match path {
        Some(p) => ScenarioSpec::load(p).map_err(|e| if e.is_config() { config(e) } else { runtime(e) }),
        None => Ok(ScenarioSpec::preset(profile.unwrap_or(Profile::Straight).into())),
    }
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut spec = load_spec(args.scenario.as_deref(), args.profile)?;
    let p = &args.pipeline;
    spec.apply(&ScenarioOverrides {
        seed: args.seed,
        out: args.out.clone(),
        profile: args.profile.map(Into::into),
        s_window: p.s_window,
        l_depth: p.l_depth,
        alpha_ema: p.alpha_ema,
        v_max: p.vmax,
        omega_max: p.wmax,
        noise_frac: p.noise_frac,
        min_cluster: p.min_cluster,
        fusion_threshold: p.fusion_threshold,
    });
    spec.validate().map_err(|(key, msg)| config(anyhow!("{key}: {msg} (after command-line overrides)")))?;
    let out = spec.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&spec.name));

    let results = run_scenario(&spec).map_err(runtime)?;
    let summary = write_artifacts(&spec, &results, &out).map_err(runtime)?;
    for r in &results {
        let m = &r.metrics;
        println!(
            "episode {:3}  seed {:6}  {:9}  mae {:.4} m  fault rate {:.2}%  steps {}",
            r.index,
            r.world_seed,
            m.outcome.as_str(),
            m.mae,
            m.fault_rate,
            m.steps
        );
    }
    println!(
        "{} episodes, mean mae {:.4} m, max mae {:.4} m, mean fault rate {:.2}%, collisions {}; artifacts in {}",
        summary.episodes,
        summary.mean_mae,
        summary.max_mae,
        summary.mean_fault_rate,
        summary.collisions,
        out.display()
    );
    if args.strict && summary.collisions > 0 {
        return Err(Failure::Collision(summary.collisions));
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> CmdResult {
    let mut cfg = ReplayConfig::default();
    let p = &args.pipeline;
    if let Some(v) = p.s_window {
        cfg.raster.s_window = v;
    }
    if let Some(v) = p.l_depth {
        cfg.raster.l_depth = v;
    }
    if let Some(v) = p.fusion_threshold {
        cfg.raster.fusion_threshold = v;
    }
    if let Some(v) = p.alpha_ema {
        cfg.spc.alpha_ema = v;
    }
    if let Some(v) = p.vmax {
        cfg.spc.v_max = v;
    }
    if let Some(v) = p.wmax {
        cfg.spc.omega_max = v;
    }
    if let Some(v) = p.noise_frac {
        cfg.spc.noise_frac = v;
    }
    if let Some(v) = p.min_cluster {
        cfg.spc.min_cluster_len = Some(v);
    }
    let classify = |e: vinenav::replay::ReplayError| if e.is_config() { config(e) } else { runtime(e) };
    let entries = load_manifest(&args.manifest).map_err(classify)?;
    let result = replay(&entries, &cfg).map_err(classify)?;

    let commands: Vec<_> = result.commands().copied().collect();
    let faults = commands.iter().filter(|c| c.fault).count();
    println!("{} frames, {} commands, {} faults", entries.len(), commands.len(), faults);
    if let Some(stats) = &result.stats {
        for (class, s) in stats {
            println!(
                "{class:6}  x_c {:.2} ± {:.2}  v_raw {:.4} ± {:.4}  w_raw {:.4} ± {:.4}  v_ema {:.4}  w_ema {:.4}  FR {:.2}%",
                s.abscissa.mean,
                s.abscissa.std,
                s.v_raw.mean,
                s.v_raw.std,
                s.omega_raw.mean,
                s.omega_raw.std,
                s.v_ema.mean,
                s.omega_ema.mean,
                s.fault_rate
            );
        }
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(runtime)?;
        let metadata = vec![
            ("manifest".to_string(), args.manifest.display().to_string()),
            ("raster".to_string(), serde_json::to_string(&cfg.raster).expect("serializable")),
            ("spc".to_string(), serde_json::to_string(&cfg.spc).expect("serializable")),
        ];
        let path = out.join("commands.csv");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display())).map_err(runtime)?;
        write_command_csv(std::io::BufWriter::new(file), &commands, &metadata)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(runtime)?;
        if let Some(stats) = &result.stats {
            let path = out.join("stats.json");
            let text = serde_json::to_string_pretty(stats).expect("serializable") + "\n";
            fs::write(&path, text).with_context(|| format!("writing {}", path.display())).map_err(runtime)?;
        }
    }
    Ok(())
}

fn parse_resolutions(text: &str) -> anyhow::Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|item| {
            let (w, h) = item.trim().split_once('x').ok_or_else(|| anyhow!("resolution '{item}' is not WxH"))?;
            Ok((w.parse().context("bad width")?, h.parse().context("bad height")?))
        })
        .collect()
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let resolutions = parse_resolutions(&args.resolutions).map_err(config)?;
    let spec = ScenarioSpec::default();
    let reports = run_bench(&resolutions, args.iterations, &spec.raster, &spec.spc).map_err(|e| config(anyhow!(e)))?;
    for r in &reports {
        println!("{}x{} ({} iterations)", r.width, r.height, r.iterations);
        for s in &r.stages {
            println!("  {:16} {:10.4} ms ± {:.4}", s.stage, s.latency_ms.mean, s.latency_ms.std);
        }
    }
    if let Some(path) = &args.out {
        let text = serde_json::to_string_pretty(&reports).expect("serializable") + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display())).map_err(runtime)?;
    }
    Ok(())
}

fn cmd_gen_world(args: GenWorldArgs) -> CmdResult {
    let mut spec = load_spec(args.scenario.as_deref(), args.profile)?;
    spec.apply(&ScenarioOverrides { seed: args.seed, profile: args.profile.map(Into::into), ..Default::default() });
    spec.world.validate().map_err(config)?;
    let world = generate_world(&spec.world, spec.seed).map_err(config)?;
    let midline = compute_midline(&world).map_err(runtime)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display())).map_err(runtime)?;
    let json = serde_json::to_string_pretty(&world).expect("serializable") + "\n";
    let write = |name: &str, text: String| {
        let path = args.out.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display())).map_err(runtime)
    };
    write("world.json", json)?;
    write("world.svg", episode_svg(&world, Some(&midline), None))?;
    println!(
        "world seed {} curvature {:.5} 1/m, {} rows, midline residual {:.4} m; written to {}",
        spec.seed,
        world.curvature,
        world.rows.len(),
        midline.max_residual,
        args.out.display()
    );
    Ok(())
}
