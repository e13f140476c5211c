use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hrg_core::experiments::{
    limit_constants, limit_params, run_experiment, write_count_rows, write_counts_header, ExperimentConfig,
    ExperimentError,
};
use hrg_core::graph::{build_bruteforce, build_fast, GraphError, HrgGraph, BRUTEFORCE_LIMIT};
use hrg_core::measures::{sigma_ext_constant, SigmaTruncation};
use hrg_core::model::{make_params, ModelParams};
use hrg_core::quadrature::QuadratureSpec;
use hrg_core::sampler::{read_points, sample_band, sample_disc, write_points, ProcessKind, SampleError};

/// Hyperbolic random geometric graphs: sampling, graphs, limit constants and Monte Carlo runs.
#[derive(Parser)]
#[command(name = "hrg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a Poisson point set and write it as CSV, with a `<out>.json` params sidecar.
    Generate {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Sample the infinite-limit band process up to this height instead of the disc.
        #[arg(long)]
        band_height: Option<f64>,
        #[arg(long)]
        slack_height: Option<f64>,
    },
    /// Build the graph of a point CSV and write its edge list.
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Builder::Fast)]
        builder: Builder,
        /// Cross-check the fast builder against the all-pairs one.
        #[arg(long)]
        verify: bool,
        /// Model parameters, when the input has no `<in>.json` sidecar.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        n: Option<f64>,
    },
    /// Print the limit constants for (alpha, nu) as JSON.
    Constants {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        nu: f64,
        /// Also compute the extreme-count variance constant.
        #[arg(long)]
        sigma2: bool,
        #[arg(long)]
        ycut: Option<f64>,
        #[arg(long)]
        zcut: Option<f64>,
    },
    /// Run a Monte Carlo experiment from a TOML or JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Builder {
    Fast,
    Brute,
}

impl Builder {
    fn name(self) -> &'static str {
        match self {
            Builder::Fast => "fast",
            Builder::Brute => "brute",
        }
    }
}

enum Failure {
    Usage(String),
    Io(String),
    Invariant(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Invariant(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Invariant(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn from_sample(e: SampleError) -> Failure {
    match e {
        SampleError::BadHeightLimit(_) | SampleError::BadMean(_) => usage(e),
        SampleError::Csv(_) | SampleError::Malformed { .. } => Failure::Io(e.to_string()),
    }
}

fn from_experiment(e: ExperimentError) -> Failure {
    match e {
        ExperimentError::Csv(_) => Failure::Io(e.to_string()),
        _ => usage(e),
    }
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    fs::write(path, text + "\n").map_err(io_at(path))
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values always serialize"));
}

fn generate(
    alpha: f64,
    nu: f64,
    n: f64,
    seed: u64,
    out: &Path,
    band_height: Option<f64>,
    slack_height: Option<f64>,
) -> Result<(), Failure> {
    let params = make_params(alpha, nu, n, slack_height).map_err(usage)?;
    let ps = match band_height {
        Some(y) => sample_band(&params, seed, y),
        None => sample_disc(&params, seed),
    }
    .map_err(from_sample)?;
    let file = File::create(out).map_err(io_at(out))?;
    write_points(&ps, BufWriter::new(file)).map_err(from_sample)?;
    let side = json!({
        "alpha": alpha,
        "nu": nu,
        "n": n,
        "seed": seed,
        "slack_height": slack_height,
        "kind": ps.kind,
    });
    write_json(&sidecar_path(out), &side)?;
    print_json(&json!({
        "N": ps.len(),
        "R": params.radius(),
        "H": params.cutoff_height(),
        "seed": seed,
        "out": out,
    }));
    Ok(())
}

struct GraphInput {
    params: ModelParams,
    seed: Option<u64>,
    kind: ProcessKind,
}

fn graph_input(input: &Path, alpha: Option<f64>, nu: Option<f64>, n: Option<f64>) -> Result<GraphInput, Failure> {
    let side_path = sidecar_path(input);
    let side: Option<Value> = if side_path.exists() {
        let text = fs::read_to_string(&side_path).map_err(io_at(&side_path))?;
        Some(serde_json::from_str(&text).map_err(|e| Failure::Io(format!("{}: {e}", side_path.display())))?)
    } else {
        None
    };
    let field = |name: &str| side.as_ref().and_then(|s| s.get(name)).and_then(Value::as_f64);
    let pick = |flag: Option<f64>, name: &str| {
        flag.or_else(|| field(name))
            .ok_or_else(|| usage(format!("no --{name} given and no {} sidecar", side_path.display())))
    };
    let (alpha, nu, n) = (pick(alpha, "alpha")?, pick(nu, "nu")?, pick(n, "n")?);
    let params = make_params(alpha, nu, n, field("slack_height")).map_err(usage)?;
    let kind = side
        .as_ref()
        .and_then(|s| s.get("kind"))
        .and_then(|k| serde_json::from_value(k.clone()).ok())
        .unwrap_or(ProcessKind::Disc);
    Ok(GraphInput {
        params,
        seed: side.as_ref().and_then(|s| s.get("seed")).and_then(Value::as_u64),
        kind,
    })
}

fn same_edges(a: &HrgGraph, b: &HrgGraph) -> bool {
    a.n_vertices() == b.n_vertices() && a.edges().eq(b.edges())
}

fn graph(
    input: &Path,
    out: &Path,
    builder: Builder,
    verify: bool,
    alpha: Option<f64>,
    nu: Option<f64>,
    n: Option<f64>,
) -> Result<(), Failure> {
    let meta = graph_input(input, alpha, nu, n)?;
    let file = File::open(input).map_err(io_at(input))?;
    let ps = read_points(BufReader::new(file), &meta.params, meta.seed.unwrap_or(0), meta.kind)
        .map_err(from_sample)?;
    let brute = |ps| {
        build_bruteforce(ps).map_err(|e: GraphError| usage(format!("{e}; use --builder fast")))
    };
    let g = match builder {
        Builder::Fast => build_fast(&ps),
        Builder::Brute => brute(&ps)?,
    };
    if verify {
        if ps.len() > BRUTEFORCE_LIMIT {
            return Err(usage(format!(
                "--verify needs at most {BRUTEFORCE_LIMIT} points, input has {}",
                ps.len()
            )));
        }
        let other = match builder {
            Builder::Fast => brute(&ps)?,
            Builder::Brute => build_fast(&ps),
        };
        if !same_edges(&g, &other) {
            return Err(Failure::Invariant(format!(
                "fast and all-pairs builders disagree: {} vs {} edges",
                g.n_edges(),
                other.n_edges()
            )));
        }
    }
    let file = File::create(out).map_err(io_at(out))?;
    let mut w = BufWriter::new(file);
    let write_all = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "source,target")?;
        for (u, v) in g.edges() {
            writeln!(w, "{u},{v}")?;
        }
        w.flush()
    };
    write_all(&mut w).map_err(io_at(out))?;
    let p = &meta.params;
    let side = json!({
        "n_vertices": g.n_vertices(),
        "n_edges": g.n_edges(),
        "builder": builder.name(),
        "verified": verify,
        "seed": meta.seed,
        "alpha": p.alpha(),
        "nu": p.nu(),
        "n": p.n(),
    });
    write_json(&sidecar_path(out), &side)?;
    print_json(&side);
    Ok(())
}

fn constants(alpha: f64, nu: f64, sigma2: bool, ycut: Option<f64>, zcut: Option<f64>) -> Result<(), Failure> {
    let (iso, ext) = limit_constants(alpha, nu, &QuadratureSpec::default()).map_err(from_experiment)?;
    let mut out = json!({
        "alpha": alpha,
        "nu": nu,
        "iso_constant": iso,
        "ext_constant": ext,
    });
    if sigma2 {
        let mut trunc = SigmaTruncation::default();
        if let Some(y) = ycut {
            trunc.y_cut = y;
            trunc.z_cut = 4.0 * y.exp();
        }
        if let Some(z) = zcut {
            trunc.z_cut = z;
        }
        let params = limit_params(alpha, nu).map_err(from_experiment)?;
        let rep = sigma_ext_constant(&params, &trunc).map_err(usage)?;
        out["sigma2"] = json!(rep.sigma2);
        out["truncation_report"] = json!({
            "y_cut": rep.y_cut,
            "z_cut": rep.z_cut,
            "diagonal": rep.diagonal,
            "pair": rep.pair,
            "truncation_bound": rep.truncation_bound,
        });
    } else if ycut.is_some() || zcut.is_some() {
        return Err(usage("--ycut and --zcut need --sigma2"));
    }
    print_json(&out);
    Ok(())
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        ExperimentConfig::from_json(&text)
    } else {
        ExperimentConfig::from_toml(&text)
    };
    let config = parsed.map_err(from_experiment)?;
    config.validate().map_err(from_experiment)?;
    Ok(config)
}

/// Counts go to `counts.csv.partial` cell by cell and are renamed once the run completes,
/// so an interrupted run leaves every finished cell on disk under the `.partial` name.
fn experiment(config_path: &Path, out_dir: &Path, threads: Option<usize>) -> Result<(), Failure> {
    let config = load_config(config_path)?;
    if threads == Some(0) {
        return Err(usage("--threads must be positive"));
    }
    fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let counts = out_dir.join("counts.csv");
    let partial = out_dir.join("counts.csv.partial");
    let file = File::create(&partial).map_err(io_at(&partial))?;
    let mut w = csv::Writer::from_writer(file);
    write_counts_header(&mut w).map_err(from_experiment)?;
    w.flush().map_err(io_at(&partial))?;
    let mut write_err = None;
    let (rows, report) = run_experiment(&config, threads, |cell| {
        if write_err.is_none() {
            write_err = write_count_rows(&mut w, cell).err();
        }
        eprintln!("alpha = {}, n = {}: {} replicates done", cell[0].alpha, cell[0].n, cell.len());
    })
    .map_err(from_experiment)?;
    if let Some(e) = write_err {
        return Err(Failure::Io(format!("{}: {e}", partial.display())));
    }
    drop(w);
    fs::rename(&partial, &counts).map_err(io_at(&counts))?;
    let report_path = out_dir.join("report.json");
    write_json(&report_path, &serde_json::to_value(&report).expect("report serializes"))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    print_json(&json!({
        "rows": rows.len(),
        "cells": report.cells.len(),
        "counts": counts,
        "report": report_path,
        "warnings": report.warnings.len(),
    }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            alpha,
            nu,
            n,
            seed,
            out,
            band_height,
            slack_height,
        } => generate(alpha, nu, n, seed, &out, band_height, slack_height),
        Command::Graph {
            input,
            out,
            builder,
            verify,
            alpha,
            nu,
            n,
        } => graph(&input, &out, builder, verify, alpha, nu, n),
        Command::Constants {
            alpha,
            nu,
            sigma2,
            ycut,
            zcut,
        } => constants(alpha, nu, sigma2, ycut, zcut),
        Command::Experiment {
            config,
            out_dir,
            threads,
        } => experiment(&config, &out_dir, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
