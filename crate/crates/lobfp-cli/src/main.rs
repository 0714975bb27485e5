//! Command-line pipeline: profile fitting, calibration, stationary solves,
//! drift-field decomposition, first-passage simulation, and synthetic
//! stream generation. Every command writes a run manifest next to its
//! outputs; seeded commands reproduce bit-identically.

mod manifest;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lobfp_core::calib1d::{self, CalibConfig};
use lobfp_core::calib2d::{self, Calib2DConfig};
use lobfp_core::error::CoreError;
use lobfp_core::events::{
    classify, parse_events, ClassifyConfig, QuoteEvent, Side, StreamFormat, Tally,
};
use lobfp_core::fpsolve::{self, Solve2DOptions};
use lobfp_core::grid::{Grid1D, Grid2D};
use lobfp_core::helmholtz::{decompose_drift, ridge_diagnostic, DecompOptions};
use lobfp_core::model::{Coef1, Dens1, ModelSpec1D, ModelSpec2D};
use lobfp_core::plot;
use lobfp_core::seasonality::{compute_profile, GapPolicy, IntradayProfile};
use lobfp_core::simulate::{self, SimConfig, SimConfig2D, StopSet};
use lobfp_core::synth::{self, GenConfig};
use manifest::{emit, ManifestBuilder};
use serde::Deserialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "lobfp",
    version,
    about = "Calibrate, solve and simulate state-dependent queue dynamics at the best quotes"
)]
struct Cli {
    /// Optional TOML config with a [defaults] table; flags win over file
    /// values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for calibration and simulation.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Calibration bins per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Upper edge of the rescaled-volume domain.
    #[arg(long, global = true)]
    xmax: Option<f64>,

    /// Minimum samples before a bin estimate is reported.
    #[arg(long, global = true)]
    min_count: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute per-bin intraday averages and the three-parameter fit.
    Profile(ProfileArgs),
    /// Estimate drift, diffusion and jump quantities from event files.
    Calibrate(CalibrateArgs),
    /// Solve the stationary equation from a model spec or calibration.
    Solve(SolveArgs),
    /// Decompose a calibrated 2D drift field into potentials.
    Decompose(DecomposeArgs),
    /// First-passage Monte Carlo from a model spec.
    Simulate(SimulateArgs),
    /// Generate a synthetic best-quote event stream from a model spec.
    Synth(SynthArgs),
}

#[derive(Args)]
struct ProfileArgs {
    /// Event files (NDJSON or CSV); each file is one session.
    events: Vec<PathBuf>,
    /// Interpolate empty bins instead of erroring.
    #[arg(long)]
    allow_gaps: bool,
    /// Reject sessions that do not cover all 78 bins.
    #[arg(long)]
    strict_sessions: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    events: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dims: u8,
    /// Reuse a previously computed profile instead of recomputing it.
    #[arg(long)]
    profile: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Model spec JSON (1D or 2D depending on --dims).
    #[arg(long, conflicts_with = "calib")]
    spec: Option<PathBuf>,
    /// 1D calibration JSON to solve directly.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dims: u8,
    /// Event files for the empirical-vs-reconstructed overlay plot.
    #[arg(long, num_args = 1..)]
    events: Vec<PathBuf>,
    /// Profile for rescaling the overlay events (defaults to flat 20000).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Solver cells per axis (defaults to the model's).
    #[arg(long)]
    cells: Option<usize>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// 2D calibration JSON holding the drift field.
    #[arg(long)]
    calib: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 1)]
    dims: u8,
    #[arg(long, default_value_t = 1.0)]
    x0: f64,
    /// 2D start state as "x,y".
    #[arg(long)]
    start: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    n_paths: u64,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 1e6)]
    horizon: f64,
    /// Jumps redraw the state and the path continues.
    #[arg(long)]
    free_running: bool,
    /// Depletions that refill continue instead of stopping.
    #[arg(long)]
    refill_continues: bool,
    /// Absorb at x_max instead of reflecting.
    #[arg(long)]
    upper_absorbing: bool,
    /// Disable the queue-empty stop.
    #[arg(long)]
    no_queue_empty: bool,
    /// Also dump one sample path as CSV (1D only).
    #[arg(long)]
    dump_path: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 2)]
    dims_guess: u8,
    #[arg(long, default_value_t = 100_000)]
    n_events: u64,
    /// Flat intraday profile at this average volume.
    #[arg(long, default_value_t = 20_000.0)]
    vbar: f64,
    /// Seasonal profile coefficients "a0,a1,a2" (overrides --vbar).
    #[arg(long)]
    profile_fit: Option<String>,
    /// Output stream path; NDJSON in the canonical field order.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
struct FileDefaults {
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: Option<String>,
    grid: Option<usize>,
    xmax: Option<f64>,
    min_count: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    defaults: FileDefaults,
}

struct Resolved {
    seed: u64,
    jobs: usize,
    out_dir: PathBuf,
    grid: Option<usize>,
    xmax: Option<f64>,
    min_count: Option<u64>,
}

fn resolve(cli: &Cli) -> Result<Resolved> {
    let file: ConfigFile = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str(&text).with_context(|| "parsing config TOML")?
        }
        None => ConfigFile::default(),
    };
    let d = file.defaults;
    Ok(Resolved {
        seed: cli.seed.or(d.seed).unwrap_or(1),
        jobs: cli.jobs.or(d.jobs).unwrap_or(1),
        out_dir: cli
            .out_dir
            .clone()
            .or(d.out_dir.map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(".")),
        grid: cli.grid.or(d.grid),
        xmax: cli.xmax.or(d.xmax),
        min_count: cli.min_count.or(d.min_count),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // clap help/version are not usage errors
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = match err.downcast_ref::<CoreError>() {
                Some(CoreError::Numerical(_)) => 3,
                Some(_) => 2,
                None => 2,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let rv = resolve(&cli)?;
    fs::create_dir_all(&rv.out_dir)
        .with_context(|| format!("creating {}", rv.out_dir.display()))?;
    match &cli.cmd {
        Cmd::Profile(a) => cmd_profile(a, &rv),
        Cmd::Calibrate(a) => cmd_calibrate(a, &rv),
        Cmd::Solve(a) => cmd_solve(a, &rv),
        Cmd::Decompose(a) => cmd_decompose(a, &rv),
        Cmd::Simulate(a) => cmd_simulate(a, &rv),
        Cmd::Synth(a) => cmd_synth(a, &rv),
    }
}

/// Parse one event file, classify it as a session, and fold the events.
fn load_sessions(
    paths: &[PathBuf],
    strict: bool,
    mb: &mut ManifestBuilder,
) -> Result<(Vec<QuoteEvent>, Tally)> {
    if paths.is_empty() {
        bail!(CoreError::data("no event files given"));
    }
    let mut events = Vec::new();
    let mut tally = Tally::default();
    let cfg = ClassifyConfig {
        session_open_ns: None,
        allow_partial: !strict,
    };
    for path in paths {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        mb.input(path, text.as_bytes());
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => StreamFormat::Csv,
            _ => StreamFormat::Ndjson,
        };
        let records =
            parse_events(&text, format).with_context(|| format!("parsing {}", path.display()))?;
        let out =
            classify(&records, &cfg).with_context(|| format!("classifying {}", path.display()))?;
        // event-time indices continue across sessions for downstream use
        let offset = events.len() as u64;
        events.extend(out.events.into_iter().map(|mut ev| {
            ev.t += offset;
            ev
        }));
        tally.merge(&out.tally);
    }
    if events.is_empty() {
        bail!(CoreError::data(
            "event files contained no classifiable events"
        ));
    }
    Ok((events, tally))
}

fn profile_from_events(
    events: &[QuoteEvent],
    sessions: u64,
    allow_gaps: bool,
) -> Result<IntradayProfile> {
    let gaps = if allow_gaps {
        GapPolicy::Interpolate
    } else {
        GapPolicy::Error
    };
    Ok(compute_profile(events, sessions, gaps)?)
}

fn cmd_profile(a: &ProfileArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("profile", format!("{:?}", rv.out_dir), None);
    let (events, tally) = load_sessions(&a.events, a.strict_sessions, &mut mb)?;
    let profile = profile_from_events(&events, tally.sessions.max(1), a.allow_gaps)?;
    let json_path = rv.out_dir.join("profile.json");
    emit(
        &mut mb,
        &json_path,
        &serde_json::to_string_pretty(&profile)?,
    )?;
    let mut csv = String::from("bin,vbar,nbar,fit\n");
    for b in 1..=78u32 {
        csv.push_str(&format!(
            "{b},{},{},{}\n",
            profile.vbar_at(b)?,
            profile.nbar_at(b)?,
            profile.fit_value(b)
        ));
    }
    emit(&mut mb, &rv.out_dir.join("profile.csv"), &csv)?;
    let pts: Vec<(f64, f64)> = (1..=78u32)
        .map(|b| (b as f64, profile.vbar_at(b).unwrap()))
        .collect();
    let fit: Vec<(f64, f64)> = (1..=78u32)
        .map(|b| (b as f64, profile.fit_value(b)))
        .collect();
    let svg = plot::line_plot(
        "intraday average volume",
        "bin",
        &[
            plot::Series {
                label: "vbar",
                color: "steelblue",
                points: pts,
            },
            plot::Series {
                label: "fit",
                color: "crimson",
                points: fit,
            },
        ],
    );
    emit(&mut mb, &rv.out_dir.join("profile.svg"), &svg)?;
    emit(
        &mut mb,
        &rv.out_dir.join("diagnostics.json"),
        &serde_json::to_string_pretty(&tally)?,
    )?;
    println!(
        "profile: rmse {:.3} over {} sessions; outputs in {}",
        profile.fit.rmse,
        tally.sessions,
        rv.out_dir.display()
    );
    mb.write(&rv.out_dir)?;
    Ok(())
}

fn grid1_csv(g: &Grid1D) -> String {
    let mut s = String::from("x_lo,x_hi,value,count\n");
    for b in 0..g.bins() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            g.edges[b],
            g.edges[b + 1],
            g.values[b].map(|v| v.to_string()).unwrap_or_default(),
            g.counts[b]
        ));
    }
    s
}

fn grid2_csv(g: &Grid2D) -> String {
    let mut s = String::new();
    for i in 0..g.nx() {
        let row: Vec<String> = (0..g.ny())
            .map(|j| g.values[i][j].map(|v| v.to_string()).unwrap_or_default())
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn series_from_grid<'a>(g: &Grid1D, label: &'a str, color: &'a str) -> plot::Series<'a> {
    plot::Series {
        label,
        color,
        points: g.defined().collect(),
    }
}

fn cmd_calibrate(a: &CalibrateArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new(
        "calibrate",
        format!("dims={} jobs={}", a.dims, rv.jobs),
        None,
    );
    let (events, tally) = load_sessions(&a.events, false, &mut mb)?;
    let profile = match &a.profile {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            mb.input(p, text.as_bytes());
            serde_json::from_str(&text)?
        }
        None => profile_from_events(&events, tally.sessions.max(1), true)?,
    };
    match a.dims {
        1 => {
            let cfg = CalibConfig {
                bins: rv.grid.unwrap_or(50),
                x_max: rv.xmax.unwrap_or(5.0),
                min_count: rv.min_count.unwrap_or(100),
                ..Default::default()
            };
            let calib = calib1d::calibrate_parallel(&events, &profile, &cfg, rv.jobs)?;
            let diag = calib1d::diagnostics(&events, &profile)?;
            emit(
                &mut mb,
                &rv.out_dir.join("calib1d.json"),
                &serde_json::to_string_pretty(&calib)?,
            )?;
            for (name, g) in [
                ("f", &calib.f),
                ("d", &calib.d),
                ("pi0", &calib.pi0),
                ("qplus", &calib.qplus),
                ("qminus", &calib.qminus),
                ("pplus", &calib.pplus),
                ("pminus", &calib.pminus),
            ] {
                emit(
                    &mut mb,
                    &rv.out_dir.join(format!("calib1d_{name}.csv")),
                    &grid1_csv(g),
                )?;
            }
            let fd = plot::line_plot(
                "drift and diffusion",
                "x",
                &[
                    series_from_grid(&calib.f, "f", "crimson"),
                    series_from_grid(&calib.d, "d", "steelblue"),
                ],
            );
            emit(&mut mb, &rv.out_dir.join("calib1d_fd.svg"), &fd)?;
            let jumps = plot::line_plot(
                "jump probabilities",
                "x",
                &[
                    series_from_grid(&calib.pi0, "pi0", "black"),
                    series_from_grid(&calib.qplus, "q+", "seagreen"),
                    series_from_grid(&calib.qminus, "q-", "darkorange"),
                ],
            );
            emit(&mut mb, &rv.out_dir.join("calib1d_jumps.svg"), &jumps)?;
            let dens = plot::line_plot(
                "replacement densities",
                "x",
                &[
                    series_from_grid(&calib.pplus, "P+", "seagreen"),
                    series_from_grid(&calib.pminus, "P-", "darkorange"),
                ],
            );
            emit(&mut mb, &rv.out_dir.join("calib1d_densities.svg"), &dens)?;
            emit(
                &mut mb,
                &rv.out_dir.join("calib1d_diagnostics.json"),
                &serde_json::to_string_pretty(&diag)?,
            )?;
            println!(
                "calibrated {} events; pi+ = {:?}; outputs in {}",
                events.len(),
                calib.pi_plus,
                rv.out_dir.display()
            );
        }
        2 => {
            let has_bid = events.iter().any(|e| e.side == Side::Bid);
            let has_ask = events.iter().any(|e| e.side == Side::Ask);
            if !has_bid || !has_ask {
                bail!(CoreError::data(
                    "two-dimensional calibration needs events on both sides"
                ));
            }
            let cfg = Calib2DConfig {
                nx: rv.grid.unwrap_or(32),
                ny: rv.grid.unwrap_or(32),
                x_max: rv.xmax.unwrap_or(4.0),
                y_max: rv.xmax.unwrap_or(4.0),
                min_count: rv.min_count.unwrap_or(100),
                ..Default::default()
            };
            let calib = calib2d::estimate_2d_parallel(&events, &profile, &cfg, rv.jobs)?;
            emit(
                &mut mb,
                &rv.out_dir.join("calib2d.json"),
                &serde_json::to_string_pretty(&calib)?,
            )?;
            for (name, g) in [
                ("fx", &calib.fx),
                ("fy", &calib.fy),
                ("dx", &calib.dx),
                ("dy", &calib.dy),
                ("rho_ab", &calib.rho_ab),
                ("qplus_xy", &calib.qplus_xy),
                ("qminus_xy", &calib.qminus_xy),
                ("pst_xy", &calib.pst_xy),
            ] {
                emit(
                    &mut mb,
                    &rv.out_dir.join(format!("calib2d_{name}.csv")),
                    &grid2_csv(g),
                )?;
            }
            emit(
                &mut mb,
                &rv.out_dir.join("calib2d_quiver.svg"),
                &plot::quiver("drift field", &calib.fx, &calib.fy),
            )?;
            match decompose_drift(&calib.fx, &calib.fy, &DecompOptions::default()) {
                Ok(dp) => {
                    emit(
                        &mut mb,
                        &rv.out_dir.join("calib2d_u.svg"),
                        &plot::heatmap("scalar potential u", &dp.u),
                    )?;
                    emit(
                        &mut mb,
                        &rv.out_dir.join("calib2d_w.svg"),
                        &plot::heatmap("rotational potential w", &dp.w),
                    )?;
                }
                Err(e) => eprintln!("note: drift decomposition skipped: {e}"),
            }
            println!(
                "calibrated {} events on a {}x{} grid; outputs in {}",
                events.len(),
                cfg.nx,
                cfg.ny,
                rv.out_dir.display()
            );
        }
        other => bail!(anyhow!("--dims must be 1 or 2, got {other}")),
    }
    mb.write(&rv.out_dir)?;
    Ok(())
}

fn spec_from_calib(path: &Path, rv: &Resolved, mb: &mut ManifestBuilder) -> Result<ModelSpec1D> {
    let text = fs::read_to_string(path)?;
    mb.input(path, text.as_bytes());
    let calib: calib1d::Calib1D = serde_json::from_str(&text)?;
    let hist = |g: &Grid1D| -> Dens1 {
        Dens1::Histogram {
            edges: g.edges.clone(),
            masses: (0..g.bins())
                .map(|b| g.values[b].unwrap_or(0.0) * g.width(b))
                .collect(),
        }
    };
    Ok(ModelSpec1D {
        drift: Coef1::from_grid(&calib.f)?,
        diffusion: Coef1::from_grid(&calib.d)?,
        q_plus: Coef1::from_grid(&calib.qplus).unwrap_or(Coef1::constant(0.0)),
        q_minus: Coef1::from_grid(&calib.qminus).unwrap_or(Coef1::constant(0.0)),
        p_plus: hist(&calib.pplus),
        p_minus: hist(&calib.pminus),
        pi_plus: calib.pi_plus.unwrap_or(0.0),
        x_max: rv.xmax.unwrap_or(8.0),
        n_cells: rv.grid.unwrap_or(512),
        drift_correction: None,
    })
}

fn cmd_solve(a: &SolveArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("solve", format!("dims={}", a.dims), None);
    match a.dims {
        1 => {
            let spec = match (&a.spec, &a.calib) {
                (Some(p), None) => {
                    let text = fs::read_to_string(p)?;
                    mb.input(p, text.as_bytes());
                    let mut spec: ModelSpec1D = serde_json::from_str(&text)?;
                    if let Some(cells) = a.cells {
                        spec.n_cells = cells;
                    }
                    spec
                }
                (None, Some(p)) => spec_from_calib(p, rv, &mut mb)?,
                _ => bail!(anyhow!("exactly one of --spec or --calib is required")),
            };
            let sol = fpsolve::stationary_1d(&spec)?;
            for w in &sol.warnings {
                eprintln!("warning: {w}");
            }
            emit(
                &mut mb,
                &rv.out_dir.join("stationary1d.json"),
                &serde_json::to_string_pretty(&sol)?,
            )?;
            let mut csv = String::from("x,pst,potential\n");
            for (i, x) in sol.centers().iter().enumerate() {
                csv.push_str(&format!("{x},{},{}\n", sol.pst[i], sol.potential[i]));
            }
            emit(&mut mb, &rv.out_dir.join("stationary1d.csv"), &csv)?;
            // empirical overlay if an event stream is supplied
            let mut series = vec![plot::Series {
                label: "reconstructed pdf",
                color: "crimson",
                points: sol
                    .centers()
                    .iter()
                    .zip(&sol.pst)
                    .map(|(x, p)| (*x, *p))
                    .collect(),
            }];
            let mut cdf_series = vec![plot::Series {
                label: "reconstructed cdf",
                color: "crimson",
                points: sol.centers().iter().map(|&x| (x, sol.cdf(x))).collect(),
            }];
            let empirical;
            let empirical_cdf;
            if !a.events.is_empty() {
                let (events, tally) = load_sessions(&a.events, false, &mut mb)?;
                let profile = match &a.profile {
                    Some(p) => {
                        let text = fs::read_to_string(p)?;
                        mb.input(p, text.as_bytes());
                        serde_json::from_str(&text)?
                    }
                    None => profile_from_events(&events, tally.sessions.max(1), true)?,
                };
                let mut hist = vec![0u64; sol.pst.len()];
                let dx = spec.x_max / sol.pst.len() as f64;
                let mut n = 0u64;
                for ev in &events {
                    let (s, _) = lobfp_core::events::rescale(ev, &profile)?;
                    let x = match ev.side {
                        Side::Bid => s.x,
                        Side::Ask => s.y,
                    };
                    if x >= 0.0 && x < spec.x_max {
                        hist[(x / dx) as usize] += 1;
                        n += 1;
                    }
                }
                empirical = plot::Series {
                    label: "empirical pdf",
                    color: "steelblue",
                    points: sol
                        .centers()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| (x, hist[i] as f64 / n as f64 / dx))
                        .collect(),
                };
                let mut acc = 0.0;
                empirical_cdf = plot::Series {
                    label: "empirical cdf",
                    color: "steelblue",
                    points: sol
                        .centers()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| {
                            acc += hist[i] as f64 / n as f64;
                            (x, acc)
                        })
                        .collect(),
                };
                series.push(empirical);
                cdf_series.push(empirical_cdf);
            }
            emit(
                &mut mb,
                &rv.out_dir.join("stationary1d_pdf.svg"),
                &plot::line_plot("stationary density", "x", &series),
            )?;
            emit(
                &mut mb,
                &rv.out_dir.join("stationary1d_cdf.svg"),
                &plot::line_plot("stationary distribution", "x", &cdf_series),
            )?;
            println!(
                "stationary solve: residual {:.2e}; outputs in {}",
                sol.flux_residual,
                rv.out_dir.display()
            );
        }
        2 => {
            let p = a
                .spec
                .as_ref()
                .ok_or_else(|| anyhow!("--dims 2 requires --spec with a 2D model"))?;
            let text = fs::read_to_string(p)?;
            mb.input(p, text.as_bytes());
            let spec: ModelSpec2D = serde_json::from_str(&text)?;
            let sol = fpsolve::stationary_2d(&spec, &Solve2DOptions::default())?;
            emit(
                &mut mb,
                &rv.out_dir.join("stationary2d.json"),
                &serde_json::to_string_pretty(&sol)?,
            )?;
            emit(
                &mut mb,
                &rv.out_dir.join("stationary2d.csv"),
                &grid2_csv(&sol.density),
            )?;
            emit(
                &mut mb,
                &rv.out_dir.join("stationary2d.svg"),
                &plot::heatmap("stationary density", &sol.density),
            )?;
            println!(
                "2D stationary solve: {} iterations, residual {:.2e}",
                sol.iterations, sol.residual
            );
        }
        other => bail!(anyhow!("--dims must be 1 or 2, got {other}")),
    }
    mb.write(&rv.out_dir)?;
    Ok(())
}

fn cmd_decompose(a: &DecomposeArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new("decompose", String::new(), None);
    let text = fs::read_to_string(&a.calib)?;
    mb.input(&a.calib, text.as_bytes());
    let calib: calib2d::Calib2D = serde_json::from_str(&text)?;
    let dp = decompose_drift(&calib.fx, &calib.fy, &DecompOptions::default())?;
    let ridge = ridge_diagnostic(&dp.u)?;
    emit(
        &mut mb,
        &rv.out_dir.join("potentials.json"),
        &serde_json::to_string_pretty(&dp)?,
    )?;
    emit(
        &mut mb,
        &rv.out_dir.join("potential_u.csv"),
        &grid2_csv(&dp.u),
    )?;
    emit(
        &mut mb,
        &rv.out_dir.join("potential_w.csv"),
        &grid2_csv(&dp.w),
    )?;
    emit(
        &mut mb,
        &rv.out_dir.join("potential_u.svg"),
        &plot::heatmap("scalar potential u", &dp.u),
    )?;
    emit(
        &mut mb,
        &rv.out_dir.join("potential_w.svg"),
        &plot::heatmap("rotational potential w", &dp.w),
    )?;
    emit(
        &mut mb,
        &rv.out_dir.join("ridge.json"),
        &serde_json::to_string_pretty(&ridge)?,
    )?;
    println!(
        "decomposition residual {:.3e}; anisotropy {:.3}; outputs in {}",
        dp.residual,
        ridge.anisotropy,
        rv.out_dir.display()
    );
    mb.write(&rv.out_dir)?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new(
        "simulate",
        format!(
            "dims={} x0={} n={} dt={} horizon={}",
            a.dims, a.x0, a.n_paths, a.dt, a.horizon
        ),
        Some(rv.seed),
    );
    let text = fs::read_to_string(&a.spec)?;
    mb.input(&a.spec, text.as_bytes());
    let est = match a.dims {
        1 => {
            let spec: ModelSpec1D = serde_json::from_str(&text)?;
            let cfg = SimConfig {
                x0: a.x0,
                dt: a.dt,
                horizon: a.horizon,
                n_paths: a.n_paths,
                seed: rv.seed,
                stops: StopSet {
                    queue_empty: !a.no_queue_empty,
                    price_up: true,
                    price_down: true,
                },
                free_running: a.free_running,
                refill_continues: a.refill_continues,
                upper_absorbing: a.upper_absorbing,
                eps: 1e-3,
                jobs: rv.jobs,
            };
            if a.dump_path {
                let path = simulate::sample_path_1d(&spec, &cfg, 1)?;
                let mut csv = String::from("t,x\n");
                for (t, x) in &path {
                    csv.push_str(&format!("{t},{x}\n"));
                }
                emit(&mut mb, &rv.out_dir.join("path.csv"), &csv)?;
            }
            simulate::simulate_paths(&spec, &cfg)?
        }
        2 => {
            let spec: ModelSpec2D = serde_json::from_str(&text)?;
            let start = match &a.start {
                Some(s) => {
                    let parts: Vec<&str> = s.split(',').collect();
                    if parts.len() != 2 {
                        bail!(anyhow!("--start must be \"x,y\""));
                    }
                    (parts[0].trim().parse()?, parts[1].trim().parse()?)
                }
                None => (1.0, 1.0),
            };
            simulate::simulate_2d(
                &spec,
                &SimConfig2D {
                    start,
                    dt: a.dt,
                    horizon: a.horizon,
                    n_paths: a.n_paths,
                    seed: rv.seed,
                    free_running: a.free_running,
                    eps: 1e-3,
                    jobs: rv.jobs,
                },
            )?
        }
        other => bail!(anyhow!("--dims must be 1 or 2, got {other}")),
    };
    emit(
        &mut mb,
        &rv.out_dir.join("passage.json"),
        &serde_json::to_string_pretty(&est)?,
    )?;
    for (o, s) in &est.outcomes {
        println!(
            "{o:?}: p = {:.4} +- {:.4}, mean time {:.2}",
            s.p, s.se, s.mean_time
        );
    }
    mb.write(&rv.out_dir)?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, rv: &Resolved) -> Result<()> {
    let mut mb = ManifestBuilder::new(
        "synth",
        format!("n={} vbar={}", a.n_events, a.vbar),
        Some(rv.seed),
    );
    let text = fs::read_to_string(&a.spec)?;
    mb.input(&a.spec, text.as_bytes());
    let profile = match &a.profile_fit {
        Some(s) => {
            let parts: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| anyhow!("--profile-fit must be \"a0,a1,a2\": {e}"))?;
            if parts.len() != 3 {
                bail!(anyhow!("--profile-fit must have three coefficients"));
            }
            IntradayProfile::from_coefficients(parts[0], parts[1], parts[2], 0.0)
        }
        None => IntradayProfile::flat(a.vbar, 0.0),
    };
    let gcfg = GenConfig {
        n_events: a.n_events,
        seed: rv.seed,
        ..Default::default()
    };
    // a 1D spec parses as 1D; anything else must be a 2D spec
    let records = match serde_json::from_str::<ModelSpec1D>(&text) {
        Ok(spec) => synth::generate_events_1d(&spec, &profile, &gcfg)?,
        Err(_) => {
            let spec: ModelSpec2D = serde_json::from_str(&text)
                .map_err(|e| anyhow!("spec is neither a 1D nor a 2D model: {e}"))?;
            synth::generate_events_2d(&spec, &profile, &gcfg)?
        }
    };
    let out_path = a
        .out
        .clone()
        .unwrap_or_else(|| rv.out_dir.join("events.ndjson"));
    let ndjson = synth::to_ndjson(&records);
    fs::write(&out_path, &ndjson)?;
    mb.output(&out_path);
    println!(
        "generated {} records ({} events) into {}",
        records.len(),
        a.n_events,
        out_path.display()
    );
    mb.write(&rv.out_dir)?;
    Ok(())
}
