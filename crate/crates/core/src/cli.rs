//! `ringwalk` command line: stationary distributions, pseudo-potentials,
//! heat-capacity sweeps, the oracle cross-check and the continuum limit.
//!
//! Every command writes a CSV (header row, preceded by `#` comment lines)
//! and a JSON manifest next to it at `<out>.manifest.json`. CSV bodies are
//! deterministic; the timestamp only appears in the manifest.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::diffusion::{
    continuum_pseudopotential, write_continuum_csv, ContinuumModel, FiniteComparison, DEFAULT_PANELS,
};
use crate::error::Error;
use crate::forest::{forest_pseudopotential, Centering};
use crate::mc::{estimate_occupation, relaxation_time, simulate_excess, SimConfig};
use crate::model::{build_generator, ModelConfig, RateFamily, TransitionRates};
use crate::pseudo_inverse::{dense_stationary, drazin_apply, resolvent_apply, time_integral};
use crate::thermo::{
    capacity_sweep, dissipative_source_with, stationary, write_capacity_csv, SizeSpec, SweepSpec,
    TemperatureGrid,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ringwalk",
    version,
    about = "Exact stationary distributions, pseudo-potentials and heat capacities of driven walks on a ring"
)]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Seed for Monte-Carlo checks.
    #[arg(long, global = true, default_value_t = 20_240_611)]
    pub seed: u64,
    /// Override the config's rate family (1, 2, 3 or its name).
    #[arg(long, global = true, value_parser = parse_family)]
    pub family: Option<RateFamily>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// Model config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary distribution from spanning-tree weights.
    Stationary(IoArgs),
    /// Pseudo-potential V solving L V = f with <V> = 0.
    Potential {
        #[command(flatten)]
        io: IoArgs,
        /// Source values (JSON array or numbers separated by commas or
        /// whitespace), centered automatically. Default: dissipative source.
        #[arg(long)]
        source: Option<PathBuf>,
    },
    /// Heat capacity C(T) over a temperature grid.
    HeatCapacity {
        #[command(flatten)]
        io: IoArgs,
        /// Temperatures as T0:T1:steps[:log].
        #[arg(long, value_parser = parse_grid)]
        grid: TemperatureGrid,
        /// Fixed finite-difference step (default max(1e-4, 1e-3 T)).
        #[arg(long)]
        fd_step: Option<f64>,
        /// Driving values to sweep (default: the config's epsilon).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        epsilons: Vec<f64>,
        /// Ring sizes to sweep (default: the config's n_sites).
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Tie the ring size to the driving, N = ratio * |eps|.
        #[arg(long)]
        ratio_mode: bool,
        #[arg(long, default_value_t = 10.0)]
        ratio: f64,
    },
    /// Cross-check forest formula, dense solves, resolvent, time integral and
    /// Monte-Carlo on one model.
    Verify {
        /// Model config (default: six sites, T = 1, eps = 1, family 1).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional CSV copy of the result table.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte-Carlo trajectories per start site.
        #[arg(long, default_value_t = 20_000)]
        trajectories: usize,
    },
    /// Continuum limit (family 2) of the stationary density and
    /// pseudo-potential, compared with the finite ring of the config's size.
    Diffusion {
        #[command(flatten)]
        io: IoArgs,
        /// Quadrature panels per unit length.
        #[arg(long, default_value_t = DEFAULT_PANELS)]
        panels: usize,
    },
}

fn parse_family(s: &str) -> Result<RateFamily, String> {
    let quoted = format!("\"{}\"", s.trim());
    serde_json::from_str(&quoted).map_err(|_| format!("unknown rate family `{s}` (use 1, 2 or 3)"))
}

fn parse_grid(s: &str) -> Result<TemperatureGrid, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::LengthMismatch { .. }
            | Error::RingTooSmall { .. }
            | Error::SiteOutOfRange { .. } => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub version: String,
    pub unix_time: u64,
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, parameters: serde_json::Value) -> Self {
        RunManifest {
            command: command.to_string(),
            parameters,
            version: env!("CARGO_PKG_VERSION").to_string(),
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn write_manifest(out: &Path, mut manifest: RunManifest) -> CliResult<()> {
    manifest.outputs.push(out.display().to_string());
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = manifest_path(out);
    fs::write(&path, text + "\n").map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn open_out(out: &Path) -> CliResult<fs::File> {
    fs::File::create(out).map_err(|e| CliError::Input(format!("cannot write {}: {e}", out.display())))
}

fn load_config(path: &Path, family: Option<RateFamily>) -> CliResult<ModelConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let mut cfg: ModelConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        if key == "." {
            CliError::Input(format!("config {}: {}", path.display(), e.inner()))
        } else {
            CliError::Input(format!("config {}: key `{key}`: {}", path.display(), e.inner()))
        }
    })?;
    if let Some(f) = family {
        cfg.rate_family = f;
    }
    Ok(cfg)
}

/// Either the family formulas or the config's explicit table.
fn rates_of(cfg: &ModelConfig) -> CliResult<Box<dyn TransitionRates>> {
    match cfg.rate_table() {
        Some(table) => Ok(Box::new(table.map_err(|e| match e {
            Error::InvalidRate { .. } => CliError::Numerical(format!("rate validation failed: {e}")),
            other => CliError::from(other),
        })?)),
        None => Ok(Box::new(cfg.model()?)),
    }
}

fn model_comment(cfg: &ModelConfig) -> String {
    format!(
        "n_sites={} temperature={} epsilon={} family={}{}",
        cfg.n_sites,
        cfg.temperature,
        cfg.epsilon,
        cfg.rate_family.number(),
        if cfg.rates.is_some() { " rates=table" } else { "" }
    )
}

fn write_rows(out: &Path, comments: &[String], header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut file = open_out(out)?;
    let io = |e: std::io::Error| CliError::Input(format!("cannot write {}: {e}", out.display()));
    for c in comments {
        writeln!(file, "# {c}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(file);
    let cio = |e: csv::Error| CliError::Input(format!("cannot write {}: {e}", out.display()));
    w.write_record(header).map_err(cio)?;
    for r in rows {
        w.write_record(r).map_err(cio)?;
    }
    w.flush().map_err(io)
}

fn cmd_stationary(cli: &Cli, io: &IoArgs) -> CliResult<()> {
    let cfg = load_config(&io.config, cli.family)?;
    let rates = rates_of(&cfg)?;
    let rho = stationary(rates.as_ref())?;
    let n = cfg.n_sites;
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| vec![(i as f64 / n as f64).to_string(), rho.probs()[i].to_string()])
        .collect();
    let comments = vec![
        "ringwalk stationary".to_string(),
        format!("manifest: {}", file_name(&manifest_path(&io.out))),
        model_comment(&cfg),
    ];
    write_rows(&io.out, &comments, &["x", "rho"], &rows)?;
    let mut manifest = RunManifest::new("stationary", json!({ "config": cfg }));
    manifest.notes.push(if n >= 3 {
        "spanning-tree weights".into()
    } else {
        "two sites: dense null-space solve".into()
    });
    write_manifest(&io.out, manifest)
}

fn parse_numbers(text: &str) -> Option<Vec<f64>> {
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(text) {
        return Some(v);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

fn cmd_potential(cli: &Cli, io: &IoArgs, source: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(&io.config, cli.family)?;
    let rates = rates_of(&cfg)?;
    let n = cfg.n_sites;
    let rho = stationary(rates.as_ref())?;
    let mut manifest = RunManifest::new("potential", json!({ "config": cfg, "source": source }));
    let f = match source {
        None => {
            manifest.notes.push("source: dissipative power".into());
            dissipative_source_with(rates.as_ref(), cfg.epsilon, &rho)?.values
        }
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read source {}: {e}", path.display())))?;
            let raw = parse_numbers(&text)
                .ok_or_else(|| CliError::Input(format!("source {}: not a list of numbers", path.display())))?;
            if raw.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    actual: raw.len(),
                }
                .into());
            }
            let mean = rho.expectation(&raw)?;
            manifest
                .notes
                .push(format!("source table centered: subtracted stationary mean {mean:e}"));
            rho.center(&raw)?
        }
    };
    let values = if n >= 3 {
        forest_pseudopotential(rates.as_ref(), &f, Centering::Require)?.values
    } else {
        manifest.notes.push("two sites: dense bordered solve".into());
        drazin_apply(&build_generator(rates.as_ref())?, &f)?
    };
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| vec![(i as f64 / n as f64).to_string(), (values[i] + 0.0).to_string()])
        .collect();
    let comments = vec![
        "ringwalk potential".to_string(),
        format!("manifest: {}", file_name(&manifest_path(&io.out))),
        model_comment(&cfg),
    ];
    write_rows(&io.out, &comments, &["x", "V"], &rows)?;
    write_manifest(&io.out, manifest)
}

#[allow(clippy::too_many_arguments)]
fn cmd_heat_capacity(
    cli: &Cli,
    io: &IoArgs,
    grid: &TemperatureGrid,
    fd_step: Option<f64>,
    epsilons: &[f64],
    sizes: &[usize],
    ratio_mode: bool,
    ratio: f64,
) -> CliResult<()> {
    let cfg = load_config(&io.config, cli.family)?;
    if cfg.rates.is_some() {
        return Err(CliError::Input(
            "an explicit rate table has no temperature dependence; remove `rates` to sweep".into(),
        ));
    }
    if ratio_mode && !sizes.is_empty() {
        return Err(CliError::Input("--sizes and --ratio-mode are exclusive".into()));
    }
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(CliError::Input("--ratio must be positive".into()));
    }
    let spec = SweepSpec {
        family: cfg.rate_family,
        landscape: cfg.energy.clone(),
        temperatures: grid.values(),
        epsilons: if epsilons.is_empty() { vec![cfg.epsilon] } else { epsilons.to_vec() },
        sizes: if ratio_mode {
            SizeSpec::Ratio(ratio)
        } else if sizes.is_empty() {
            SizeSpec::List(vec![cfg.n_sites])
        } else {
            SizeSpec::List(sizes.to_vec())
        },
        fd_step,
    };
    let curves = capacity_sweep(&spec)?;
    let comments = vec![
        "ringwalk heat-capacity".to_string(),
        format!("manifest: {}", file_name(&manifest_path(&io.out))),
        format!("family={} energy={}", cfg.rate_family.number(), serde_json::to_string(&cfg.energy).expect("serializes")),
    ];
    let mut file = open_out(&io.out)?;
    write_capacity_csv(&mut file, &curves, &comments)?;
    let mut manifest = RunManifest::new(
        "heat-capacity",
        json!({
            "config": cfg,
            "grid": { "start": grid.start, "end": grid.end, "points": grid.points, "log": grid.log },
            "fd_step": fd_step,
            "epsilons": spec.epsilons,
            "sizes": curves.iter().map(|c| c.n_sites).collect::<Vec<_>>(),
            "ratio_mode": ratio_mode.then_some(ratio),
        }),
    );
    let mut failed = 0;
    for c in &curves {
        for (i, e) in &c.failures {
            failed += 1;
            manifest.notes.push(format!(
                "failed point N={} epsilon={} T={}: {e}",
                c.n_sites, c.epsilon, c.temperatures[*i]
            ));
        }
    }
    write_manifest(&io.out, manifest)?;
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} sweep point(s) failed; see manifest")));
    }
    Ok(())
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn cmd_verify(cli: &Cli, config: Option<&Path>, out: Option<&Path>, trajectories: usize) -> CliResult<()> {
    let cfg = match config {
        Some(path) => load_config(path, cli.family)?,
        None => {
            let mut cfg = ModelConfig::default();
            if let Some(f) = cli.family {
                cfg.rate_family = f;
            }
            cfg
        }
    };
    let rates = rates_of(&cfg)?;
    let rates = rates.as_ref();
    let n = cfg.n_sites;
    let l = build_generator(rates)?;
    let dense_rho = dense_stationary(&l)?;
    let mut notes = Vec::new();
    let mut checks = Vec::new();
    let mut push = |name, value: f64, tolerance: f64| {
        checks.push(Check {
            name,
            value,
            tolerance,
            pass: value <= tolerance,
        })
    };

    let mut f = dissipative_source_with(rates, cfg.epsilon, &dense_rho)?.values;
    if max_abs(&f) < 1e-12 {
        notes.push("dissipative source vanishes; using centered cos(2 pi x) instead".to_string());
        let raw: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * i as f64 / n as f64).cos())
            .collect();
        f = dense_rho.center(&raw)?;
    }
    let v_dense = drazin_apply(&l, &f)?;
    let scale = max_abs(&v_dense).max(1e-300);

    if n >= 3 {
        let rho = stationary(rates)?;
        push(
            "stationary: trees vs null space",
            max_abs_diff(rho.probs(), dense_rho.probs()),
            1e-12,
        );
        let v = forest_pseudopotential(rates, &f, Centering::Require)?;
        push("potential: forests vs bordered solve (rel)", max_abs_diff(&v.values, &v_dense) / scale, 1e-9);
        push("potential: residual |LV - f|", v.residual / max_abs(&f).max(1e-300), 1e-9);
        push("potential: |<V>|", rho.expectation(&v.values)?.abs(), 1e-11);
    } else {
        notes.push("N = 2: spanning-forest route skipped (needs N >= 3); dense routes only".to_string());
        let lv = l.apply(&v_dense)?;
        push("potential: residual |LV - f|", max_abs_diff(&lv, &f) / max_abs(&f).max(1e-300), 1e-9);
    }
    let res = resolvent_apply(&l, 1e8, &f)?;
    push("resolvent at alpha = 1e8", max_abs_diff(&res, &v_dense), 1e-6);
    if n <= 8 {
        let w = time_integral(&l, &f, 1e-12)?;
        let minus_v: Vec<f64> = v_dense.iter().map(|x| -x).collect();
        push("time integral vs -V", max_abs_diff(&w, &minus_v), 1e-8);
    } else {
        notes.push("time integral skipped for N > 8".to_string());
    }

    let tau = relaxation_time(&l)?;
    let sim = SimConfig {
        seed: cli.seed,
        trajectories,
        horizon: 25.0 * tau,
        burn_in: 5.0 * tau,
    };
    let est = simulate_excess(rates, &f, &sim)?;
    let outside = (0..n)
        .filter(|&i| (est.estimates[i] + v_dense[i]).abs() > 3.0 * est.stderr[i])
        .count();
    push("monte-carlo: fraction of sites outside 3 stderr", outside as f64 / n as f64, 0.05);
    let (occ, occ_err) = estimate_occupation(rates, &sim)?;
    let outside = (0..n)
        .filter(|&i| (occ[i] - dense_rho.probs()[i]).abs() > 3.0 * occ_err[i])
        .count();
    push("occupation: fraction of sites outside 3 stderr", outside as f64 / n as f64, 0.05);

    let mut table = String::new();
    let _ = writeln!(table, "{:<48} {:>12} {:>10}  result", "check", "value", "tolerance");
    for c in &checks {
        let _ = writeln!(
            table,
            "{:<48} {:>12.3e} {:>10.1e}  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    for note in &notes {
        println!("note: {note}");
    }
    print!("{table}");
    let failed = checks.iter().filter(|c| !c.pass).count();
    if let Some(out) = out {
        let rows: Vec<Vec<String>> = checks
            .iter()
            .map(|c| {
                vec![
                    c.name.to_string(),
                    c.value.to_string(),
                    c.tolerance.to_string(),
                    if c.pass { "pass" } else { "fail" }.to_string(),
                ]
            })
            .collect();
        let comments = vec![
            "ringwalk verify".to_string(),
            format!("manifest: {}", file_name(&manifest_path(out))),
            model_comment(&cfg),
        ];
        write_rows(out, &comments, &["check", "value", "tolerance", "result"], &rows)?;
        let mut manifest = RunManifest::new(
            "verify",
            json!({ "config": cfg, "seed": cli.seed, "trajectories": trajectories }),
        );
        manifest.notes = notes;
        write_manifest(out, manifest)?;
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!("{failed} check(s) failed")));
    }
    Ok(())
}

fn cmd_diffusion(cli: &Cli, io: &IoArgs, panels: usize) -> CliResult<()> {
    let cfg = load_config(&io.config, cli.family)?;
    if cfg.rate_family != RateFamily::Unbounded2 {
        return Err(CliError::Input("continuum limit defined for family 2 only".into()));
    }
    if cfg.rates.is_some() {
        return Err(CliError::Input("continuum limit needs the energy landscape, not a rate table".into()));
    }
    let ring = cfg.model()?;
    let n = ring.n_sites();
    if n < 3 {
        return Err(Error::RingTooSmall { n, min: 3 }.into());
    }
    let cm = ContinuumModel::from_ring(&ring, cfg.energy.clone(), panels)?;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let profile = continuum_pseudopotential(&cm, &xs)?;
    let rho = stationary(&ring)?;
    let src = dissipative_source_with(&ring, ring.driving(), &rho)?;
    let v = forest_pseudopotential(&ring, &src.values, Centering::Require)?;
    let finite = FiniteComparison {
        n_sites: n,
        rho_scaled: rho.probs().iter().map(|p| p * n as f64).collect(),
        potential_scaled: v.values.iter().map(|x| x / n as f64).collect(),
    };
    let rho_err = max_abs_diff(&finite.rho_scaled, &profile.rho);
    let v_err = max_abs_diff(&finite.potential_scaled, &profile.potential);
    let comments = vec![
        "ringwalk diffusion".to_string(),
        format!("manifest: {}", file_name(&manifest_path(&io.out))),
        format!(
            "beta={} epsilon={} panels={} energy={}",
            cm.beta(),
            cm.epsilon(),
            panels,
            serde_json::to_string(&cfg.energy).expect("serializes")
        ),
        format!("rho_N = N * rho, V_N = V / N for the family-2 ring with N={n}"),
        format!("sup |rho_N - rho_inf| = {rho_err:e}"),
        format!("sup |V_N - V_inf| = {v_err:e}"),
    ];
    let mut file = open_out(&io.out)?;
    write_continuum_csv(&mut file, &profile, Some(&finite), &comments)?;
    let mut manifest = RunManifest::new("diffusion", json!({ "config": cfg, "panels": panels }));
    manifest.notes.push(format!("sup error rho: {rho_err:e}"));
    manifest.notes.push(format!("sup error V: {v_err:e}"));
    write_manifest(&io.out, manifest)
}

fn execute(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Stationary(io) => cmd_stationary(cli, io),
        Command::Potential { io, source } => cmd_potential(cli, io, source.as_deref()),
        Command::HeatCapacity {
            io,
            grid,
            fd_step,
            epsilons,
            sizes,
            ratio_mode,
            ratio,
        } => cmd_heat_capacity(cli, io, grid, *fd_step, epsilons, sizes, *ratio_mode, *ratio),
        Command::Verify {
            config,
            out,
            trajectories,
        } => cmd_verify(cli, config.as_deref(), out.as_deref(), *trajectories),
        Command::Diffusion { io, panels } => cmd_diffusion(cli, io, *panels),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    if cli.threads > 0 {
        // a pool may already exist when called repeatedly in-process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            EXIT_NUMERICAL
        }
    }
}
