//! Command-line front end for the estimation library: single-shot
//! estimation, ambiguity audits, and Monte Carlo sweeps, driven by flags or
//! a flat config file, with a run manifest written next to every CSV.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::Utc;
use clap::{Args, Parser, Subcommand};
use subnyq::harness::{
    default_pipeline_window, run_mse_sweep, run_scenario, run_success_sweep, ExperimentConfig,
    FreqGen, ScenarioConfig,
};
use subnyq::unfold::DEFAULT_INTEGRALITY_TOL;
use subnyq::{audit_ambiguity, SelectionMode, SignalSpec, Sinusoid};

use crate::config::FileConfig;

/// Every key a config file may set. Grouped by dotted prefix; commands read
/// the subset they need and flags always win over file values.
const KNOWN_KEYS: &[&str] = &[
    "audit.tol",
    "channels.factors",
    "pipeline.mode",
    "pipeline.snapshots",
    "pipeline.window",
    "signal.amps",
    "signal.fh",
    "signal.freqs",
    "signal.noiseless",
    "signal.phases",
    "signal.seed",
    "signal.snr_db",
    "sweep.k",
    "sweep.out",
    "sweep.seed",
    "sweep.snr_db",
    "sweep.trials",
];

#[derive(Parser)]
#[command(
    name = "subnyq",
    version,
    about = "Frequency estimation from three channels sampled below the Nyquist rate",
    after_help = "Exit codes: 0 success, 1 configuration error, \
                  2 estimation finished but flagged a fold collision."
)]
struct Cli {
    /// Config file with `key = value` lines; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one signal and run the estimation pipeline once.
    Estimate(EstimateArgs),
    /// Check a frequency set for pairwise channel ambiguities.
    Audit(AuditArgs),
    /// Run a Monte Carlo sweep and write its CSV plus a manifest.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Band edge in Hz; every tone lies strictly below it.
    #[arg(long)]
    fh: Option<f64>,
    /// Three pairwise coprime undersampling factors, e.g. 3,4,5.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<u32>>,
    /// True tone frequencies in Hz.
    #[arg(long, value_delimiter = ',')]
    freqs: Option<Vec<f64>>,
    /// Tone amplitudes; defaults to 1 each.
    #[arg(long, value_delimiter = ',')]
    amps: Option<Vec<f64>>,
    /// Tone phases in radians; defaults to 0 each.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,
    /// Signal-to-noise ratio in dB.
    #[arg(long, conflicts_with = "noiseless", allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Synthesize without noise (the default when no SNR is given).
    #[arg(long)]
    noiseless: bool,
    /// Snapshots for the covariance estimates (default 100).
    #[arg(long)]
    snapshots: Option<usize>,
    /// Snapshot window; must be a multiple of the smallest factor.
    #[arg(long)]
    window: Option<usize>,
    /// Noise seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate selection: combined | intersect.
    #[arg(long)]
    mode: Option<String>,
    /// Print one frequency per line and nothing else.
    #[arg(long)]
    porcelain: bool,
    /// Directory to write the candidate score table and manifest into.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    /// Band edge in Hz.
    #[arg(long)]
    fh: Option<f64>,
    /// Three pairwise coprime undersampling factors.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<u32>>,
    /// Frequencies to audit, in Hz.
    #[arg(long, value_delimiter = ',')]
    freqs: Option<Vec<f64>>,
    /// How close to an integer the spacing multiple must be to conflict.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(subcommand)]
    kind: SweepKind,
}

#[derive(Subcommand)]
enum SweepKind {
    /// Success probability per tone count at one SNR.
    Success(SweepCommon),
    /// Average estimation error per SNR at one tone count.
    Mse(SweepCommon),
}

#[derive(Args)]
struct SweepCommon {
    /// Band edge in Hz; tones are drawn uniformly below it.
    #[arg(long)]
    fh: Option<f64>,
    /// Three pairwise coprime undersampling factors.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<u32>>,
    /// Tone counts to sweep (success) or the single tone count (mse).
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Trials per grid point.
    #[arg(long)]
    trials: Option<usize>,
    /// SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    /// Snapshots for the covariance estimates.
    #[arg(long)]
    snapshots: Option<usize>,
    /// Snapshot window; must be a multiple of the smallest factor.
    #[arg(long)]
    window: Option<usize>,
    /// Master seed; trial seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Candidate selection: combined | intersect.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for the CSV and manifest (default: current dir).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };

    if let Ok(raw) = std::env::var("SUBNYQ_THREADS") {
        match raw.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("ignoring SUBNYQ_THREADS = {raw}: not a positive integer"),
        }
    }

    let outcome = load_file_config(cli.config.as_deref()).and_then(|file| match cli.command {
        Command::Estimate(args) => cmd_estimate(args, &file),
        Command::Audit(args) => cmd_audit(args, &file),
        Command::Sweep(args) => cmd_sweep(args, &file),
    });
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, String> {
    let file = match path {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::empty(),
    };
    file.reject_unknown_keys(KNOWN_KEYS)?;
    Ok(file)
}

fn require<T>(value: Option<T>, hint: &str) -> Result<T, String> {
    value.ok_or_else(|| format!("missing {hint}"))
}

fn triple(factors: Vec<u32>) -> Result<(u32, u32, u32), String> {
    if factors.len() == 3 {
        Ok((factors[0], factors[1], factors[2]))
    } else {
        Err(format!(
            "expected exactly three factors, got {}",
            factors.len()
        ))
    }
}

fn parse_mode(raw: &str) -> Result<SelectionMode, String> {
    match raw {
        "combined" => Ok(SelectionMode::CombinedScore),
        "intersect" => Ok(SelectionMode::StageIntersection),
        other => Err(format!(
            "selection mode `{other}` is neither `combined` nor `intersect`"
        )),
    }
}

fn mode_name(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::CombinedScore => "combined",
        SelectionMode::StageIntersection => "intersect",
    }
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Provenance record written next to every CSV, itself in config syntax so
/// a run can be reproduced from its manifest.
struct RunManifest {
    command: String,
    seed: u64,
    started_utc: String,
    finished_utc: String,
    config_echo: Vec<(&'static str, String)>,
    outputs: Vec<String>,
}

impl RunManifest {
    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "command = {}", self.command);
        let _ = writeln!(out, "started_utc = {}", self.started_utc);
        let _ = writeln!(out, "finished_utc = {}", self.finished_utc);
        let _ = writeln!(out, "seed = {}", self.seed);
        for path in &self.outputs {
            let _ = writeln!(out, "output = {path}");
        }
        let _ = writeln!(out, "\n# resolved configuration");
        for (key, value) in &self.config_echo {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn timestamp() -> String {
    Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Writes through a temp file in the target directory so a crash can never
/// leave a partial file under the final name.
fn write_atomic(dir: &Path, name: &str, content: &str) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| format!("cannot create temp file in {}: {e}", dir.display()))?;
    tmp.write_all(content.as_bytes())
        .map_err(|e| format!("cannot write {name}: {e}"))?;
    let path = dir.join(name);
    tmp.persist(&path)
        .map_err(|e| format!("cannot finalize {}: {e}", path.display()))?;
    Ok(path)
}

fn cmd_estimate(args: EstimateArgs, file: &FileConfig) -> Result<i32, String> {
    let started = timestamp();
    let f_h = require(
        args.fh.or(file.get_f64("signal.fh")?),
        "--fh (or signal.fh)",
    )?;
    let factors = triple(require(
        args.factors.or(file.get_u32_list("channels.factors")?),
        "--factors (or channels.factors)",
    )?)?;
    let freqs = require(
        args.freqs.or(file.get_f64_list("signal.freqs")?),
        "--freqs (or signal.freqs)",
    )?;
    let amps = args
        .amps
        .or(file.get_f64_list("signal.amps")?)
        .unwrap_or_else(|| vec![1.0; freqs.len()]);
    let phases = args
        .phases
        .or(file.get_f64_list("signal.phases")?)
        .unwrap_or_else(|| vec![0.0; freqs.len()]);
    if amps.len() != freqs.len() {
        return Err(format!(
            "{} amplitudes for {} tones",
            amps.len(),
            freqs.len()
        ));
    }
    if phases.len() != freqs.len() {
        return Err(format!("{} phases for {} tones", phases.len(), freqs.len()));
    }

    let file_noiseless = file.get_bool("signal.noiseless")?.unwrap_or(false);
    let file_snr = file.get_f64("signal.snr_db")?;
    let snr_db = if args.noiseless {
        None
    } else if args.snr_db.is_some() {
        args.snr_db
    } else if file_noiseless && file_snr.is_some() {
        return Err("config sets both signal.noiseless and signal.snr_db".into());
    } else if file_noiseless {
        None
    } else {
        file_snr
    };

    let seed = args.seed.or(file.get_u64("signal.seed")?).unwrap_or(0);
    let snapshots = args
        .snapshots
        .or(file.get_usize("pipeline.snapshots")?)
        .unwrap_or(100);
    let window = args.window.or(file.get_usize("pipeline.window")?);
    let mode = match args.mode.as_deref().or(file.get_str("pipeline.mode")) {
        Some(raw) => parse_mode(raw)?,
        None => SelectionMode::CombinedScore,
    };

    let components: Vec<Sinusoid> = freqs
        .iter()
        .zip(&amps)
        .zip(&phases)
        .map(|((&f, &a), &p)| Sinusoid::new(f, a, p))
        .collect();
    let draft = SignalSpec::new(components.clone(), f_h, 0.0, seed).map_err(|e| e.to_string())?;
    let noise_variance = snr_db.map_or(0.0, |db| draft.variance_for_snr(db));
    let spec = SignalSpec::new(components, f_h, noise_variance, seed).map_err(|e| e.to_string())?;

    let scenario = ScenarioConfig {
        spec,
        factors,
        snapshots,
        window,
        mode,
    };
    let result = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let finished = timestamp();

    if args.porcelain {
        for f in &result.pipeline.final_freqs {
            println!("{f:.9}");
        }
    } else {
        let line: Vec<String> = result
            .pipeline
            .final_freqs
            .iter()
            .map(|f| format!("{f:.9}"))
            .collect();
        println!("{}", line.join(" "));
        println!("mse_hz {:.9}", result.mse_hz);
    }

    if let Some(dir) = &args.out {
        let min_factor = factors.0.min(factors.1).min(factors.2);
        let mut echo: Vec<(&'static str, String)> = vec![
            ("signal.fh", f_h.to_string()),
            (
                "channels.factors",
                format!("{},{},{}", factors.0, factors.1, factors.2),
            ),
            ("signal.freqs", join(&freqs)),
            ("signal.amps", join(&amps)),
            ("signal.phases", join(&phases)),
            ("signal.seed", seed.to_string()),
            ("pipeline.snapshots", snapshots.to_string()),
            (
                "pipeline.window",
                window
                    .unwrap_or_else(|| default_pipeline_window(min_factor, snapshots))
                    .to_string(),
            ),
            ("pipeline.mode", mode_name(mode).to_string()),
        ];
        match snr_db {
            Some(db) => echo.push(("signal.snr_db", db.to_string())),
            None => echo.push(("signal.noiseless", "true".to_string())),
        }
        let csv_path = write_atomic(dir, "scenario.csv", &result.to_csv())?;
        let manifest = RunManifest {
            command: "estimate".into(),
            seed,
            started_utc: started,
            finished_utc: finished,
            config_echo: echo,
            outputs: vec![csv_path.display().to_string()],
        };
        write_atomic(dir, "scenario.manifest.txt", &manifest.render())?;
    }

    Ok(if result.pipeline.collision_flag { 2 } else { 0 })
}

fn cmd_audit(args: AuditArgs, file: &FileConfig) -> Result<i32, String> {
    let f_h = require(
        args.fh.or(file.get_f64("signal.fh")?),
        "--fh (or signal.fh)",
    )?;
    let factors = triple(require(
        args.factors.or(file.get_u32_list("channels.factors")?),
        "--factors (or channels.factors)",
    )?)?;
    let freqs = require(
        args.freqs.or(file.get_f64_list("signal.freqs")?),
        "--freqs (or signal.freqs)",
    )?;
    let tol = args
        .tol
        .or(file.get_f64("audit.tol")?)
        .unwrap_or(DEFAULT_INTEGRALITY_TOL);

    let report = audit_ambiguity(&freqs, factors, f_h, tol).map_err(|e| e.to_string())?;
    if report.is_clean() {
        println!("no conflicts");
    } else {
        println!("f_low_hz f_high_hz channels multiple");
        for conflict in &report.conflicts {
            let (i, j) = conflict.pair;
            let (x, y) = conflict.channel_pair;
            println!(
                "{:.9} {:.9} {x}x{y} {}",
                freqs[i], freqs[j], conflict.multiple
            );
        }
    }
    Ok(0)
}

fn cmd_sweep(args: SweepArgs, file: &FileConfig) -> Result<i32, String> {
    let started = timestamp();
    let (kind, common) = match args.kind {
        SweepKind::Success(common) => ("success", common),
        SweepKind::Mse(common) => ("mse", common),
    };
    let mut cfg = match kind {
        "success" => ExperimentConfig::success_defaults(),
        _ => ExperimentConfig::mse_defaults(),
    };

    if let Some(f_h) = common.fh.or(file.get_f64("signal.fh")?) {
        cfg.f_h = f_h;
    }
    // Tones are always drawn over the full band, so an overridden band edge
    // moves the draw range with it.
    cfg.freq_gen = FreqGen::Uniform {
        band: (0.0, cfg.f_h),
        min_sep_hz: 0.1,
        amp_range: (0.1, 1.0),
    };
    if let Some(factors) = common.factors.or(file.get_u32_list("channels.factors")?) {
        cfg.factors = triple(factors)?;
    }
    if let Some(k) = common.k.or(file.get_usize_list("sweep.k")?) {
        cfg.k_values = k;
    }
    if let Some(trials) = common.trials.or(file.get_usize("sweep.trials")?) {
        cfg.num_trials = trials;
    }
    if let Some(snr) = common.snr_db.or(file.get_f64_list("sweep.snr_db")?) {
        cfg.snr_db = snr;
    }
    if let Some(snapshots) = common.snapshots.or(file.get_usize("pipeline.snapshots")?) {
        cfg.snapshots = snapshots;
    }
    if let Some(window) = common.window.or(file.get_usize("pipeline.window")?) {
        cfg.window = Some(window);
    }
    if let Some(seed) = common.seed.or(file.get_u64("sweep.seed")?) {
        cfg.seed = seed;
    }
    if let Some(raw) = common.mode.as_deref().or(file.get_str("pipeline.mode")) {
        cfg.mode = parse_mode(raw)?;
    }
    let out_dir = common
        .out
        .or(file.get_str("sweep.out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));

    eprintln!(
        "running {kind} sweep: K = {}, snr_db = {}, {} trials per point",
        join(&cfg.k_values),
        if cfg.snr_db.is_empty() {
            "noiseless".into()
        } else {
            join(&cfg.snr_db)
        },
        cfg.num_trials,
    );
    let csv = match kind {
        "success" => run_success_sweep(&cfg).map_err(|e| e.to_string())?.to_csv(),
        _ => run_mse_sweep(&cfg).map_err(|e| e.to_string())?.to_csv(),
    };
    let finished = timestamp();

    let csv_name = format!("{kind}.csv");
    let csv_path = write_atomic(&out_dir, &csv_name, &csv)?;
    let manifest = RunManifest {
        command: format!("sweep {kind}"),
        seed: cfg.seed,
        started_utc: started,
        finished_utc: finished,
        config_echo: vec![
            ("signal.fh", cfg.f_h.to_string()),
            (
                "channels.factors",
                format!("{},{},{}", cfg.factors.0, cfg.factors.1, cfg.factors.2),
            ),
            ("sweep.k", join(&cfg.k_values)),
            ("sweep.trials", cfg.num_trials.to_string()),
            ("sweep.snr_db", join(&cfg.snr_db)),
            ("pipeline.snapshots", cfg.snapshots.to_string()),
            ("pipeline.window", cfg.window_len().to_string()),
            ("pipeline.mode", mode_name(cfg.mode).to_string()),
            ("sweep.seed", cfg.seed.to_string()),
        ],
        outputs: vec![csv_path.display().to_string()],
    };
    let manifest_path = write_atomic(
        &out_dir,
        &format!("{kind}.manifest.txt"),
        &manifest.render(),
    )?;
    eprintln!(
        "wrote {} and {}",
        csv_path.display(),
        manifest_path.display()
    );
    Ok(0)
}
