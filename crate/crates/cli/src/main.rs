//! `gvs`: command-line experiments on generalised vector systems.

mod commands;
mod config;
mod error;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::commands::*;
use crate::config::{Params, RunConfig, SystemParams, SystemSpec, DEFAULT_SEED};
use crate::error::CliError;
use crate::output::{envelope_json, table_csv};

const AFTER_HELP: &str = "\
Systems: --builtin constant --G g1,..,gk   (psi(x) = x + G)
         --builtin sine --r R             (planar sine-coupled map)
Config:  --config FILE reads {\"system\": {\"builtin\": .., \"params\": {..}}, \"rng_seed\": .., \"params\": {..}};
         flags override the file, the file overrides defaults.
RNG:     ChaCha8 (rand_chacha) seeded with --seed, default 42; stable across runs and platforms.
Output:  JSON envelope by default; --csv prints one table (--table NAME to choose).
         Floats carry 17 significant digits.
Exit:    0 success, 2 usage, 3 validation failure, 4 evaluation error.";

#[derive(Parser, Debug)]
#[command(name = "gvs", version, about = "Experiments on generalised vector systems on the k-torus", after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// JSON config file ('-' for stdin); command-line flags override its values
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Built-in system: constant | sine [required unless given in --config]
    #[arg(long, global = true)]
    builtin: Option<String>,
    /// Translation vector of the constant system, comma separated
    #[arg(long = "G", global = true, value_delimiter = ',', allow_hyphen_values = true, value_name = "G1,..")]
    g: Option<Vec<f64>>,
    /// Coupling of the sine system
    #[arg(long, global = true, allow_hyphen_values = true)]
    r: Option<f64>,
    /// Use the straight-line interpolant x + t (psi(x) - x) [default: off]
    #[arg(long, global = true)]
    auto_interpolant: bool,
    /// Seed of the ChaCha8 generator [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit a CSV table instead of the JSON envelope
    #[arg(long, global = true)]
    csv: bool,
    /// Table to emit with --csv [default: the command's first table]
    #[arg(long, global = true)]
    table: Option<String>,
    /// Write output to FILE instead of stdout
    #[arg(long, short, global = true, value_name = "FILE")]
    output: Option<PathBuf>,
    /// Worker threads for parallel scans [default: all cores]
    #[arg(long, global = true, env = "GVS_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check shift equivariance, interpolant endpoints and the displacement bound
    Validate(ValidateArgs),
    /// Iterate the time-one map and list the orbit with displacement sums
    Orbit(OrbitArgs),
    /// Estimate the rotation set from psi_n(eta)/n and cross-check the continuous mean motion
    Rotate(RotateArgs),
    /// Detect periodic points psi_m(eta) = eta + q and their rational rotation vectors q/m
    Periodic(PeriodicArgs),
    /// Rebuild phi(t, eta) from (psi, phi_unit) and probe continuity and the shift identity
    Reconstruct(ReconstructArgs),
    /// Tabulate the bounded remainder phi(t, eta) - psi_floor(t)(eta) with dyadic-window maxima
    Remainder(RemainderArgs),
    /// Scan det J(psi) over the fundamental domain and refine singular points
    SingularScan(ScanArgs),
    /// Sample the contraction criterion |a(x) - a(p)| < |x - p|
    InjectCheck(InjectArgs),
    /// Extremal images of psi over a box and where their preimages lie
    Bounds(BoundsArgs),
    /// Torus-surface plot data for a one-dimensional system
    Embed(EmbedArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate(_) => "validate",
            Command::Orbit(_) => "orbit",
            Command::Rotate(_) => "rotate",
            Command::Periodic(_) => "periodic",
            Command::Reconstruct(_) => "reconstruct",
            Command::Remainder(_) => "remainder",
            Command::SingularScan(_) => "singular-scan",
            Command::InjectCheck(_) => "inject-check",
            Command::Bounds(_) => "bounds",
            Command::Embed(_) => "embed",
        }
    }

    fn apply(&self, p: &mut Params) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if let Some(v) = v {
                *slot = Some(v.clone());
            }
        }
        match self {
            Command::Validate(a) => {
                set(&mut p.samples, &a.samples);
                set(&mut p.q_trials, &a.q_trials);
                set(&mut p.tol, &a.tol);
                set(&mut p.grid, &a.grid);
            }
            Command::Orbit(a) => {
                set(&mut p.eta, &a.eta);
                set(&mut p.n, &a.n);
            }
            Command::Rotate(a) => {
                set(&mut p.eta, &a.eta);
                set(&mut p.n, &a.n);
                set(&mut p.tail_fraction, &a.tail_fraction);
                set(&mut p.epsilon, &a.epsilon);
                set(&mut p.source, &a.source);
            }
            Command::Periodic(a) => {
                set(&mut p.seeds, &a.seeds);
                set(&mut p.m_max, &a.m_max);
                set(&mut p.tol, &a.tol);
            }
            Command::Reconstruct(a) => {
                set(&mut p.eta, &a.eta);
                set(&mut p.t, &a.t);
                set(&mut p.tol, &a.tol);
                set(&mut p.delta, &a.delta);
                set(&mut p.probe_steps, &a.probe_steps);
            }
            Command::Remainder(a) => {
                set(&mut p.eta, &a.eta);
                set(&mut p.t_max, &a.t_max);
                set(&mut p.t_step, &a.t_step);
            }
            Command::SingularScan(a) => {
                set(&mut p.grid, &a.grid);
                set(&mut p.threshold, &a.threshold);
            }
            Command::InjectCheck(a) => {
                set(&mut p.pairs, &a.pairs);
                set(&mut p.box_size, &a.box_size);
            }
            Command::Bounds(a) => {
                set(&mut p.lower, &a.lower);
                set(&mut p.upper, &a.upper);
                set(&mut p.grid, &a.grid);
                set(&mut p.threshold, &a.threshold);
            }
            Command::Embed(a) => {
                set(&mut p.eta, &a.eta);
                set(&mut p.t_max, &a.t_max);
                set(&mut p.t_step, &a.t_step);
                set(&mut p.torus_a, &a.a);
                set(&mut p.torus_b, &a.b);
            }
        }
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Random sample points in [0,1)^k [default: 1000]
    #[arg(long)]
    samples: Option<usize>,
    /// Integer shifts (entries in -2..=2) tried per sample [default: 4]
    #[arg(long)]
    q_trials: Option<usize>,
    /// Largest accepted violation [default: 1e-9]
    #[arg(long)]
    tol: Option<f64>,
    /// Nodes per axis for the displacement bound [default: 64 for k<=2, 16 for k=3]
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args, Debug)]
struct OrbitArgs {
    /// Initial point, comma separated [default: origin]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Number of map applications [default: 100]
    #[arg(long = "N")]
    n: Option<usize>,
}

#[derive(Args, Debug)]
struct RotateArgs {
    /// Initial point, comma separated [default: origin]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Orbit length [default: 1000]
    #[arg(long = "N")]
    n: Option<usize>,
    /// Share of the sequence clustered, taken from the end [default: 0.5]
    #[arg(long)]
    tail_fraction: Option<f64>,
    /// Cluster radius [default: 10/N]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Sequence to cluster: points (psi_n/n) | displacements (a_n/n) [default: points]
    #[arg(long)]
    source: Option<String>,
}

fn parse_seed_list(s: &str) -> Result<Vec<Vec<f64>>, String> {
    s.split(';')
        .map(|v| {
            v.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number '{x}': {e}")))
                .collect()
        })
        .collect()
}

#[derive(Args, Debug)]
struct PeriodicArgs {
    /// Seed points, ';' between points and ',' between components [default: origin]
    #[arg(long, value_parser = parse_seed_list, allow_hyphen_values = true)]
    seeds: Option<Vec<Vec<f64>>>,
    /// Largest period searched [default: 10]
    #[arg(long)]
    m_max: Option<usize>,
    /// Distance from an integer shift counted as a hit [default: 1e-9]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// Initial point, comma separated [default: origin]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Times t >= 0, comma separated [default: 0,0.5,1,1.5,2]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    t: Option<Vec<f64>>,
    /// Tolerance for endpoint and shift-identity checks [default: 1e-9]
    #[arg(long)]
    tol: Option<f64>,
    /// Offset used to probe jumps at integer times [default: 1e-4]
    #[arg(long)]
    delta: Option<f64>,
    /// Integer times probed for continuity [default: 5]
    #[arg(long)]
    probe_steps: Option<usize>,
}

#[derive(Args, Debug)]
struct RemainderArgs {
    /// Initial point, comma separated [default: origin]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Last sampled time [default: 100]
    #[arg(long)]
    t_max: Option<f64>,
    /// Time step [default: 0.01]
    #[arg(long)]
    t_step: Option<f64>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Nodes per axis, at least 8 [default: 128 for k<=2, 32 for k=3]
    #[arg(long)]
    grid: Option<usize>,
    /// Flag nodes with |det| at or below this value [default: 1e-2]
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct InjectArgs {
    /// Random pairs sampled [default: 10000]
    #[arg(long)]
    pairs: Option<usize>,
    /// Pairs are drawn from [0, BOX)^k [default: 2]
    #[arg(long = "box")]
    box_size: Option<f64>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Lower box corner [default: origin]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lower: Option<Vec<f64>>,
    /// Upper box corner [default: all ones]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    upper: Option<Vec<f64>>,
    /// Nodes per axis [default: 33]
    #[arg(long)]
    grid: Option<usize>,
    /// det J below this marks the check inapplicable [default: 1e-3]
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    /// Initial point [default: 0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Option<Vec<f64>>,
    /// Last sampled time [default: 10]
    #[arg(long)]
    t_max: Option<f64>,
    /// Time step [default: 0.01]
    #[arg(long)]
    t_step: Option<f64>,
    /// Major torus radius [default: 2]
    #[arg(long)]
    a: Option<f64>,
    /// Minor torus radius, 0 < b < a [default: 1]
    #[arg(long)]
    b: Option<f64>,
}

fn build_config(global: &GlobalArgs, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig {
            system: SystemSpec {
                builtin: global
                    .builtin
                    .clone()
                    .ok_or_else(|| CliError::usage_at("system.builtin", "--builtin is required without --config"))?,
                params: SystemParams::default(),
                auto_interpolant: false,
            },
            rng_seed: DEFAULT_SEED,
            params: Params::default(),
        },
    };
    if let Some(b) = &global.builtin {
        cfg.system.builtin = b.clone();
    }
    if global.g.is_some() {
        cfg.system.params.g = global.g.clone();
    }
    if global.r.is_some() {
        cfg.system.params.r = global.r;
    }
    if global.auto_interpolant {
        cfg.system.auto_interpolant = true;
    }
    if let Some(s) = global.seed {
        cfg.rng_seed = s;
    }
    command.apply(&mut cfg.params);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::usage_at("threads", "must be at least 1"));
        }
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut cfg = build_config(&cli.global, &cli.command)?;
    let sys = cfg.build_system()?;
    let name = cli.command.name();

    let start = Instant::now();
    let outcome = dispatch(name, &sys, &mut cfg)?;
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;

    let text = if cli.global.csv {
        let tables = &outcome.payload.tables;
        let table = match &cli.global.table {
            Some(t) => tables.iter().find(|x| &x.name == t).ok_or_else(|| {
                let names: Vec<&str> = tables.iter().map(|x| x.name.as_str()).collect();
                CliError::usage_at("table", format!("no table '{t}' (available: {})", names.join(", ")))
            })?,
            None => tables
                .first()
                .ok_or_else(|| CliError::usage("command produced no table"))?,
        };
        table_csv(table)?
    } else {
        let mut s = envelope_json(name, &cfg, elapsed_ms, &outcome.payload);
        s.push('\n');
        s
    };
    match &cli.global.output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::usage_at("output", format!("cannot write {}: {e}", path.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            // a closed pipe is not worth a panic
            let _ = out.write_all(text.as_bytes());
        }
    }
    match outcome.failure {
        Some(msg) => {
            eprintln!("{}", CliError::validation(msg).to_record());
            Ok(3)
        }
        None => Ok(0),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            let _ = e.print();
            let record = CliError::usage(e.kind().to_string());
            eprintln!("{}", record.to_record());
            std::process::exit(2);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_record());
            e.kind.exit_code()
        }
    };
    std::process::exit(code);
}
