//! The `rsf` command line: build, convert, verify and trace.
//!
//! Exit codes: 0 on success, 1 when verification fails (or a conversion is
//! numerically impossible), 2 for config and input errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, Check, GridHeights, InvariantOptions};
use crate::config::{self, SEED_ENV};
use crate::construction::{self, BuildConfig};
use crate::error::{Error, Result};
use crate::network::ModifiedNetwork;
use crate::weights;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub const MODIFIED_FILE: &str = "modified.json";
pub const RELU_FILE: &str = "relu.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const VERIFY_MANIFEST_FILE: &str = "verify_manifest.json";
pub const INVARIANTS_FILE: &str = "invariants.json";
pub const ERROR_REPORT_FILE: &str = "error_report.json";
pub const HEIGHTS_FILE: &str = "heights.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Parser)]
#[command(name = "rsf", version, about = "Build and check ReLU networks whose decision boundary approximates a smooth surface")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Build config (.json or .toml).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Seed; overrides RSF_SEED and the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Grid points per axis for the sup-error scan (default 201 in d = 2,
    /// 41 in d = 3, 11 above).
    #[arg(long, global = true)]
    pub grid: Option<usize>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the modified network from a config.
    Build,
    /// Convert a modified network into standard ReLU weights.
    Convert {
        /// Modified-form weights (default: <out>/modified.json).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Bias slack of the non-active cone rows (default: config value or 1).
        #[arg(long)]
        margin: Option<f64>,
        /// Radius of the realization ball (default: from the weight metadata).
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Run the invariant suite and the sup-error scan.
    Verify {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Standard-form weights to check for equivalence.
        #[arg(long)]
        relu: Option<PathBuf>,
        /// Also write heights.csv.
        #[arg(long)]
        heights: bool,
        /// Traced starts per stage.
        #[arg(long, default_value_t = 1000)]
        starts: usize,
        /// Monte-Carlo samples per stage for net coverage.
        #[arg(long, default_value_t = 100_000)]
        coverage: usize,
        /// Samples for graph-image, sign and equivalence checks.
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
    /// Record the trajectory of one point through the modified network.
    Trace {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Comma-separated coordinates of x.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        x: Vec<f64>,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        y: f64,
    },
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub layers: usize,
    pub stages: usize,
    pub layer_bound: f64,
    pub stage_bound: f64,
    pub error_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sup_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

/// Record of one run: what went in, what came out.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: BuildConfig,
    pub seed: u64,
    pub created_unix: u64,
    pub outputs: Vec<String>,
    pub summary: Summary,
}

enum Failure {
    Config(Error),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::IllConditioned { .. } | Error::SingularMatrix | Error::SlopeCheck { .. } => {
                Failure::Failed(e.to_string())
            }
            other => Failure::Config(other),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Parses `args` and runs the command. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // Fails only if a global pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let result = match &cli.command {
        Command::Build => cmd_build(&cli),
        Command::Convert {
            weights,
            margin,
            rho,
        } => cmd_convert(&cli, weights.as_deref(), *margin, *rho),
        Command::Verify {
            weights,
            relu,
            heights,
            starts,
            coverage,
            samples,
        } => cmd_verify(
            &cli,
            weights.as_deref(),
            relu.as_deref(),
            *heights,
            InvariantOptions {
                starts_per_stage: *starts,
                coverage_samples: *coverage,
                graph_samples: *samples,
                nesting_samples: *samples,
                seed: 0,
            },
        ),
        Command::Trace { weights, x, y } => cmd_trace(&cli, weights.as_deref(), x, *y),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("failed: {msg}");
            EXIT_FAILED
        }
    }
}

fn require_config(cli: &Cli) -> Result<BuildConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config <path> is required".into()))?;
    config::load_config(path)
}

fn effective_seed(cli: &Cli, config_seed: u64) -> Result<u64> {
    let env = std::env::var(SEED_ENV).ok();
    config::resolve_seed(cli.seed, env.as_deref(), config_seed)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<String> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path.display().to_string())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn summary(net: &ModifiedNetwork) -> Result<Summary> {
    let m = net.meta();
    Ok(Summary {
        layers: net.layers().len(),
        stages: net.stages().len(),
        layer_bound: construction::layer_count_bound(net.dim(), m.radius, m.delta),
        stage_bound: construction::stage_count_bound(m.radius, m.delta),
        error_bound: construction::error_bound(net.dim(), m.radius, m.delta, m.d_bound)?,
        sup_error: None,
        passed: None,
    })
}

fn cmd_build(cli: &Cli) -> CmdResult {
    let mut config = require_config(cli)?;
    config.seed = effective_seed(cli, config.seed)?;
    let (net, _) = ModifiedNetwork::build(&config)?;
    let weights_path = write(&cli.out, MODIFIED_FILE, &weights::modified_to_json(&net))?;
    let manifest = RunManifest {
        tool: "rsf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "build".into(),
        seed: config.seed,
        config,
        created_unix: unix_now(),
        outputs: vec![weights_path.clone()],
        summary: summary(&net)?,
    };
    write(&cli.out, MANIFEST_FILE, &to_json(&manifest))?;
    println!(
        "built {} layers in {} stages -> {weights_path}",
        manifest.summary.layers, manifest.summary.stages
    );
    Ok(())
}

fn load_modified(cli: &Cli, weights: Option<&Path>) -> Result<ModifiedNetwork> {
    let path = weights
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cli.out.join(MODIFIED_FILE));
    weights::modified_from_json(&read(&path)?)
}

fn cmd_convert(cli: &Cli, weights: Option<&Path>, margin: Option<f64>, rho: Option<f64>) -> CmdResult {
    let net = load_modified(cli, weights)?;
    let margin = match (margin, &cli.config) {
        (Some(m), _) => m,
        (None, Some(_)) => require_config(cli)?.margin,
        (None, None) => 1.0,
    };
    let rho = rho.unwrap_or_else(|| net.evaluation_radius());
    let relu = net.convert(rho, margin)?;
    let path = write(&cli.out, RELU_FILE, &weights::relu_to_json(&relu))?;
    println!(
        "converted {} layers (rho = {rho:.6}, max cond = {:.3e}) -> {path}",
        relu.layers.len(),
        relu.max_cond()
    );
    Ok(())
}

fn default_grid(d: usize) -> usize {
    match d {
        2 => 201,
        3 => 41,
        _ => 11,
    }
}

fn cmd_verify(
    cli: &Cli,
    weights: Option<&Path>,
    relu: Option<&Path>,
    write_heights: bool,
    mut opts: InvariantOptions,
) -> CmdResult {
    let config = require_config(cli)?;
    let net = load_modified(cli, weights)?;
    let phi = config.surface()?;
    let m = net.meta();
    if net.dim() != config.d
        || m.radius != config.radius
        || m.delta != config.delta
        || m.d_bound != phi.second_derivative_bound()
    {
        return Err(Failure::Config(Error::Config(
            "weights were built for a different config (d, R, delta or surface differ)".into(),
        )));
    }
    opts.seed = effective_seed(cli, config.seed)?;

    let mut report = analysis::invariant_suite(&net, &phi, &opts);
    let c = net.evaluation_height();
    let eb = construction::error_bound(net.dim(), m.radius, m.delta, m.d_bound)?;
    let sign = analysis::sign_check(&net, &phi, eb, c, opts.graph_samples, opts.seed)?;
    report.push(Check::at_least("sign_check", sign.fraction, 1.0, sign.samples));
    if let Some(path) = relu {
        let relu = weights::relu_from_json(&read(path)?)?;
        let eq = analysis::equivalence(&net, &relu, c, opts.graph_samples, 1e-6, opts.seed);
        report.push(Check::at_most("equivalence", eq.max_rel_diff, eq.tolerance, eq.samples));
    }

    let grid = analysis::Grid::new(net.dim(), cli.grid.unwrap_or(default_grid(net.dim())), m.radius)?;
    let heights = GridHeights::compute(&net, &phi, grid);
    let error = analysis::error_report(&net, &heights)?;

    let mut outputs = vec![
        write(&cli.out, INVARIANTS_FILE, &to_json(&report))?,
        write(&cli.out, ERROR_REPORT_FILE, &to_json(&error))?,
    ];
    if write_heights {
        outputs.push(write(&cli.out, HEIGHTS_FILE, &heights.to_csv())?);
    }
    let passed = report.passed && error.within_bound && error.slope_ok;
    let mut sum = summary(&net)?;
    sum.sup_error = Some(error.sup_error);
    sum.passed = Some(passed);
    let manifest = RunManifest {
        tool: "rsf".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "verify".into(),
        seed: opts.seed,
        config,
        created_unix: unix_now(),
        outputs,
        summary: sum,
    };
    write(&cli.out, VERIFY_MANIFEST_FILE, &to_json(&manifest))?;

    for check in &report.checks {
        println!(
            "{:<20} {}  measured {:.6e}  bound {:.6e}",
            check.name,
            if check.passed { "PASS" } else { "FAIL" },
            check.measured,
            check.bound
        );
    }
    println!(
        "sup_error            {}  measured {:.6e}  bound {:.6e}",
        if error.within_bound { "PASS" } else { "FAIL" },
        error.sup_error,
        error.bound
    );
    if passed {
        Ok(())
    } else {
        let mut failed: Vec<String> = report.failed().into_iter().map(String::from).collect();
        if !error.within_bound {
            failed.push("sup_error".into());
        }
        if !error.slope_ok {
            failed.push("slope".into());
        }
        Err(Failure::Failed(format!("checks failed: {}", failed.join(", "))))
    }
}

fn cmd_trace(cli: &Cli, weights: Option<&Path>, x: &[f64], y: f64) -> CmdResult {
    let net = load_modified(cli, weights)?;
    if x.len() != net.dim() {
        return Err(Failure::Config(Error::DimensionMismatch {
            expected: net.dim(),
            found: x.len(),
        }));
    }
    let traj = net.trace(x, y);
    let stage_of: Vec<usize> = net
        .stages()
        .iter()
        .flat_map(|s| s.layers.clone().map(move |_| s.k))
        .collect();
    let d = net.dim();
    let mut csv = String::from("step,layer,stage,t");
    for i in 0..d {
        csv.push_str(&format!(",x{i}"));
    }
    csv.push_str(",y,norm_x\n");
    let row = |csv: &mut String, step: usize, layer: String, stage: String, t: f64, p: &(Vec<f64>, f64)| {
        csv.push_str(&format!("{step},{layer},{stage},{t}"));
        for v in &p.0 {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(",{},{}\n", p.1, crate::linalg::norm(&p.0)));
    };
    row(&mut csv, 0, String::new(), String::new(), 0.0, &traj.points[0]);
    let mut step = 0;
    for (i, &t) in traj.steps.iter().enumerate() {
        if t > 0.0 {
            step += 1;
            row(&mut csv, step, i.to_string(), stage_of[i].to_string(), t, &traj.points[i + 1]);
        }
    }
    let path = write(&cli.out, TRAJECTORY_FILE, &csv)?;
    let (xf, yf) = traj.points.last().expect("trajectory has a start");
    println!(
        "{step} active layers, path length {:.6e}, F = {:.12e} -> {path}",
        traj.path_length,
        net.head().apply(xf, *yf)
    );
    Ok(())
}
