use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use cfb_cli::cache::Cache;
use cfb_cli::config::{parse_config, parse_config_over, serialize_config, DelayConvention, ScenarioConfig};
use cfb_cli::error::{CliError, Result};
use cfb_cli::export::write_atomic;
use cfb_cli::presets;
use cfb_cli::run::{self, Context, Outcome};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cfb", version, about = "Coherent-feedback cooling and entanglement scenarios")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario file (TOML). With --preset it is layered over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in figure scenario.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed of the optimizer's start points.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// How `path.delay_s` is read.
    #[arg(long, global = true, value_enum)]
    delay_convention: Option<DelayConvention>,
    /// Result cache directory.
    #[arg(long, global = true, default_value = ".cfb-cache")]
    cache_dir: PathBuf,
    /// Neither read nor write the result cache.
    #[arg(long, global = true)]
    no_cache: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stationary phonon number, spectrum and model dump.
    Steadystate,
    /// Effective-model parameters and cooperativities.
    Effective,
    /// Stability of the configured model (exit 3 when unstable).
    Stability,
    /// Sweep one parameter, optionally optimizing at every point.
    Sweep,
    /// Minimize the phonon number over the configured free parameters.
    OptimizeCooling,
    /// Run the pulsed entanglement protocol.
    Entangle,
    /// Minimize the EPR variance of the protocol.
    OptimizeEntangle,
    /// Render a sweep table with the layout of --preset.
    Plot {
        /// Sweep CSV; defaults to `<out>/sweep.csv`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Result cache maintenance.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Subcommand, Debug)]
enum CacheAction {
    /// Remove partial and corrupt entries, and optionally old ones.
    Gc {
        #[arg(long)]
        max_age_days: Option<f64>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn find_preset(name: &str) -> Result<presets::Preset> {
    presets::find(name)
        .ok_or_else(|| CliError::Config(format!("unknown preset `{name}` (known: {})", presets::names().join(", "))))
}

fn load_config(g: &Global) -> Result<ScenarioConfig> {
    let overlay = g.config.as_deref().map(read).transpose()?;
    let mut cfg = match (&g.preset, overlay) {
        (Some(name), overlay) => {
            let p = find_preset(name)?;
            parse_config_over(p.config, overlay.as_deref().unwrap_or(""))?
        }
        (None, Some(text)) => parse_config(&text)?,
        (None, None) => ScenarioConfig::default(),
    };
    if let Some(seed) = g.seed {
        if let Some(o) = &mut cfg.optimize {
            o.seed = seed;
        }
    }
    if let Some(dc) = g.delay_convention {
        cfg.path.delay_convention = dc;
    }
    Ok(cfg)
}

fn report(o: &Outcome) {
    let note = if o.cache_hit { " (cached)" } else { "" };
    println!("{}{note}", o.record.display());
}

fn execute(cli: Cli) -> Result<()> {
    let g = &cli.global;
    if let Some(n) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let cache = (!g.no_cache).then(|| Cache::new(&g.cache_dir));
    if let Command::Cache {
        action: CacheAction::Gc { max_age_days },
    } = &cli.command
    {
        let max_age = max_age_days
            .map(|d| {
                Duration::try_from_secs_f64(d * 86_400.0)
                    .map_err(|_| CliError::Config(format!("--max-age-days must be non-negative, got {d}")))
            })
            .transpose()?;
        let r = Cache::new(&g.cache_dir).gc(max_age)?;
        println!(
            "kept {}, removed {} temporary, {} corrupt, {} expired",
            r.kept, r.removed_temp, r.removed_corrupt, r.removed_old
        );
        return Ok(());
    }

    let preset = g.preset.as_deref().map(find_preset).transpose()?;
    if let Command::Plot { input } = &cli.command {
        let p = preset.ok_or_else(|| CliError::Config("plot needs --preset to choose the layout".into()))?;
        let input = input.clone().unwrap_or_else(|| g.out.join("sweep.csv"));
        let output = g.out.join(format!("{}.svg", p.name));
        run::plot_file(&input, &p.plot, &output)?;
        println!("{}", output.display());
        return Ok(());
    }

    let cfg = load_config(g)?;
    let ctx = Context {
        out: g.out.clone(),
        cache,
    };
    write_atomic(&g.out.join("config.toml"), serialize_config(&cfg)?.as_bytes())?;
    match &cli.command {
        Command::Steadystate => report(&run::steadystate(&ctx, &cfg)?),
        Command::Effective => report(&run::effective(&ctx, &cfg)?),
        Command::Stability => report(&run::stability(&ctx, &cfg)?),
        Command::Entangle => report(&run::entangle(&ctx, &cfg)?),
        Command::OptimizeCooling => report(&run::optimize_cooling(&ctx, &cfg)?),
        Command::OptimizeEntangle => report(&run::optimize_entangle(&ctx, &cfg)?),
        Command::Sweep => {
            let figure = preset.as_ref().map(|p| (p.name, &p.plot));
            let table = run::sweep(&ctx, &cfg, figure)?;
            let status = table.column("status").expect("sweep tables carry a status column");
            let failed = table.rows.iter().filter(|r| r[status] == "failed".into()).count();
            println!(
                "{}: {} points, {failed} failed",
                g.out.join("sweep.csv").display(),
                table.rows.len()
            );
        }
        Command::Plot { .. } | Command::Cache { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
