//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figure against its pinned tolerance. Criteria are
//! serialized on a global lock so the runtime bounds are measured on an
//! unloaded process; run with `--nocapture` to see every line.

mod common;

use common::*;
use lobfp_core::calib1d::{self, CalibConfig};
use lobfp_core::calib2d::{self, Calib2DConfig};
use lobfp_core::events::{classify, ClassifyConfig, EventKind};
use lobfp_core::fpsolve::{
    self, gibbs_boltzmann, hitting_probabilities_1d, race_probabilities_2d, stationary_1d,
    Boundary, Generator1D, HittingProblem, Solve2DOptions,
};
use lobfp_core::grid::Grid2D;
use lobfp_core::helmholtz::{decompose_drift, reconstruct_field, DecompOptions};
use lobfp_core::model::{Coef1, Coef2, Dens1, Dens2, ModelSpec1D, ModelSpec2D};
use lobfp_core::seasonality::{fit_profile, T_975_DF75};
use lobfp_core::simulate::{self, occupancy_1d, simulate_2d, SimConfig, SimConfig2D};
use lobfp_core::stats::{binomial_se, ks_between_masses, ks_sample_vs_cdf};
use lobfp_core::synth::{generate_events_1d, generate_events_2d, GenConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

fn lock() -> std::sync::MutexGuard<'static, ()> {
    static GATE: OnceLock<Mutex<()>> = OnceLock::new();
    GATE.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "{} [{id}] {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

/// Criterion 1: closed-form stationary solution for f = kappa (1 - x),
/// d = d0 with (kappa, d0) = (1, 0.5) matches the analytic truncated
/// Gaussian (mean 1, variance 0.5) with L1 <= 1e-3 at N = 1000 in < 1 s.
#[test]
fn criterion_1_zero_current_exactness() {
    let _g = lock();
    let t0 = Instant::now();
    let mut spec = ou_nojump(1.0, 0.5);
    spec.x_max = 8.0;
    spec.n_cells = 1000;
    let r = gibbs_boltzmann(&spec).expect("solve");
    // independent normalization of the analytic density by fine quadrature
    let var = 0.5;
    let m = 400_000;
    let h = spec.x_max / m as f64;
    let z: f64 = (0..m)
        .map(|k| {
            let x = (k as f64 + 0.5) * h;
            (-(x - 1.0) * (x - 1.0) / (2.0 * var)).exp() * h
        })
        .sum();
    let dx = spec.x_max / 1000.0;
    let mut l1 = 0.0;
    for (i, x) in r.centers().iter().enumerate() {
        let want = (-(x - 1.0) * (x - 1.0) / (2.0 * var)).exp() / z;
        l1 += (r.pst[i] - want).abs() * dx;
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        1,
        "zero-current stationary solution vs analytic law",
        l1 <= 1e-3 && elapsed < 1.0,
        &format!("L1 = {l1:.2e} (tol 1e-3), runtime {elapsed:.2}s (< 1s)"),
    );
}

/// Criterion 2: calibrate f, d from a 1e6-event jump-free stream and
/// reconstruct the stationary density with no extra fitting factor;
/// KS distance to the stream's own stationary histogram <= 0.02 in < 2 min.
#[test]
fn criterion_2_reconstruction_from_calibrated_coefficients() {
    let _g = lock();
    let t0 = Instant::now();
    let truth = ModelSpec1D {
        x_max: 5.0,
        n_cells: 1000,
        ..ou_nojump(0.05, 0.0025)
    };
    let out = synth_classified(&truth, 1_000_000, 2024);
    let profile = flat_profile();
    let cfg = CalibConfig::default();
    let calib = calib1d::calibrate(&out.events, &profile, &cfg).expect("calibration");
    let spec = ModelSpec1D {
        drift: Coef1::from_grid(&calib.f).expect("f grid"),
        diffusion: Coef1::from_grid(&calib.d).expect("d grid"),
        q_plus: Coef1::constant(0.0),
        q_minus: Coef1::constant(0.0),
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 5.0,
        n_cells: 1000,
        drift_correction: None,
    };
    let gb = gibbs_boltzmann(&spec).expect("reconstruction");
    let mut xs = x_samples(&out.events, 20_000.0);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ks = ks_sample_vs_cdf(&xs, |x| gb.cdf(x));
    let elapsed = t0.elapsed().as_secs_f64();
    report(
        2,
        "calibrated reconstruction vs empirical stationary histogram",
        ks <= 0.02 && elapsed < 120.0,
        &format!("KS = {ks:.4} (tol 0.02), runtime {elapsed:.1}s (< 120s)"),
    );
}

fn criterion3_specs() -> Vec<(&'static str, ModelSpec1D)> {
    let a = ModelSpec1D {
        drift: Coef1::reverting(0.08, 1.0),
        diffusion: Coef1::constant(0.004),
        q_plus: Coef1::constant(0.02),
        q_minus: Coef1::PiecewiseLinear {
            xs: vec![0.0, 0.5, 6.0],
            ys: vec![0.25, 0.02, 0.02],
        },
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 6.0,
        n_cells: 512,
        drift_correction: None,
    };
    let b = ModelSpec1D {
        drift: Coef1::reverting(0.05, 1.0),
        diffusion: Coef1::constant(0.0025),
        q_plus: Coef1::constant(0.01),
        q_minus: Coef1::constant(0.01),
        p_plus: Dens1::Exponential { mean: 0.3 },
        p_minus: Dens1::TruncNormal { mean: 0.8, sd: 0.3 },
        pi_plus: 0.5,
        x_max: 5.0,
        n_cells: 512,
        drift_correction: None,
    };
    let c = ModelSpec1D {
        drift: Coef1::reverting(0.12, 1.0),
        diffusion: Coef1::Linear {
            intercept: 0.006,
            slope: 0.001,
        },
        q_plus: Coef1::PiecewiseLinear {
            xs: vec![0.0, 6.0],
            ys: vec![0.005, 0.05],
        },
        q_minus: Coef1::PiecewiseLinear {
            xs: vec![0.0, 0.4, 6.0],
            ys: vec![0.08, 0.01, 0.01],
        },
        p_plus: Dens1::Exponential { mean: 0.25 },
        p_minus: Dens1::TruncNormal {
            mean: 1.1,
            sd: 0.35,
        },
        pi_plus: 0.35,
        x_max: 6.0,
        n_cells: 512,
        drift_correction: None,
    };
    vec![
        ("pi+=0.2 reference scale", a),
        ("mild constant hazards", b),
        ("state-dependent", c),
    ]
}

/// Criterion 3: the full 1D steady state with birth-death terms matches
/// free-running simulator occupancy, KS <= 0.02 over 1e6 event-time units,
/// for three distinct specs including one at pi+ = 0.2.
#[test]
fn criterion_3_steady_state_with_jumps_vs_simulator() {
    let _g = lock();
    for (name, spec) in criterion3_specs() {
        let sol = stationary_1d(&spec).expect("stationary solve");
        let occ = occupancy_1d(
            &spec,
            &SimConfig {
                x0: 1.0,
                dt: 0.05,
                horizon: 1_000_000.0,
                seed: 7,
                free_running: true,
                ..Default::default()
            },
            spec.n_cells,
        )
        .expect("occupancy");
        let ks = ks_between_masses(&sol.cell_masses(), &occ.masses);
        report(
            3,
            &format!("steady state vs simulator occupancy ({name})"),
            ks <= 0.02,
            &format!("KS = {ks:.4} (tol 0.02)"),
        );
    }
}

/// Criterion 4: calibration round trip at typical large-tick scales. Drift
/// recovered with RMSE <= 0.02 on bins holding >= 1e3 samples, zero
/// crossing at 1 +- 0.05, pi0 and pi+ within binomial 3 sigma of the
/// configured 0.90 / 0.20, in < 1 min.
#[test]
fn criterion_4_calibration_round_trip() {
    let _g = lock();
    let t0 = Instant::now();
    let truth = reference_scale_spec();
    let out = synth_classified(&truth, 1_000_000, 31);
    let profile = flat_profile();
    let calib =
        calib1d::calibrate(&out.events, &profile, &CalibConfig::default()).expect("calibration");
    // drift RMSE on well-populated bins
    let mut sq = 0.0;
    let mut n = 0.0;
    for b in 0..calib.f.bins() {
        if calib.f.counts[b] >= 1000 {
            if let Some(fhat) = calib.f.values[b] {
                let x = calib.f.center(b);
                let want = 0.5 * (1.0 - x);
                sq += (fhat - want) * (fhat - want);
                n += 1.0;
            }
        }
    }
    let rmse = (sq / n).sqrt();
    // zero crossing of the binned drift
    let mut crossing = f64::NAN;
    let pts: Vec<(f64, f64)> = calib
        .f
        .defined()
        .filter(|(x, _)| {
            let b = calib.f.bin_of(*x).unwrap();
            calib.f.counts[b] >= 1000
        })
        .collect();
    for w in pts.windows(2) {
        let ((x0, f0), (x1, f1)) = (w[0], w[1]);
        if f0 > 0.0 && f1 <= 0.0 {
            crossing = x0 + (x1 - x0) * f0 / (f0 - f1);
            break;
        }
    }
    // pooled frequencies
    let total = out.events.len() as f64;
    let pi0_hat = kind_fraction(&out.events, EventKind::VolumeChange);
    let se_pi0 = binomial_se(0.90, total as u64);
    let n_dep = out
        .events
        .iter()
        .filter(|e| {
            matches!(
                e.kind,
                EventKind::DepletedRecede | EventKind::DepletedRefill
            )
        })
        .count() as u64;
    let pi_plus_hat = out
        .events
        .iter()
        .filter(|e| e.kind == EventKind::DepletedRefill)
        .count() as f64
        / n_dep as f64;
    let se_pip = binomial_se(0.20, n_dep);
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = rmse <= 0.02
        && (crossing - 1.0).abs() <= 0.05
        && (pi0_hat - 0.90).abs() <= 3.0 * se_pi0
        && (pi_plus_hat - 0.20).abs() <= 3.0 * se_pip
        && elapsed < 60.0;
    report(
        4,
        "calibration round trip",
        ok,
        &format!(
            "drift RMSE = {rmse:.4} (tol 0.02), zero crossing = {crossing:.3} (1 +- 0.05), \
             pi0 = {pi0_hat:.4} (0.90 +- {:.4}), pi+ = {pi_plus_hat:.4} (0.20 +- {:.4}), \
             runtime {elapsed:.1}s (< 60s)",
            3.0 * se_pi0,
            3.0 * se_pip
        ),
    );
}

fn grid_from_fn(n: usize, hi: f64, f: impl Fn(f64, f64) -> f64) -> Grid2D {
    let mut g = Grid2D::uniform(n, n, hi, hi);
    for i in 0..n {
        for j in 0..n {
            g.values[i][j] = Some(f(g.x_center(i), g.y_center(j)));
            g.counts[i][j] = 1;
        }
    }
    g
}

/// Criterion 5: drift-field decomposition. Pure gradient and pure
/// rotational fields recover |w| <= 1e-8 and |u - const| <= 1e-8; a random
/// smooth 64x64 field reconstructs with interior relative L2 residual
/// <= 1e-6, all in < 5 s.
#[test]
fn criterion_5_field_decomposition() {
    let _g = lock();
    let t0 = Instant::now();
    let n = 64;
    // pure gradient: f = -grad u0, u0 = (x^2 + y^2)/2
    let u0 = grid_from_fn(n, 4.0, |x, y| 0.5 * (x * x + y * y));
    let zero = grid_from_fn(n, 4.0, |_, _| 0.0);
    let (fx, fy) = reconstruct_field(&u0, &zero).unwrap();
    let dg = decompose_drift(&fx, &fy, &DecompOptions::default()).unwrap();
    let wmax =
        dg.w.values
            .iter()
            .flatten()
            .map(|v| v.unwrap().abs())
            .fold(0.0f64, f64::max);
    // pure rotational: f = curl w0
    let w0 = grid_from_fn(n, 4.0, |x, y| -0.5 * (x * x + y * y));
    let (gx, gy) = reconstruct_field(&zero, &w0).unwrap();
    let dr = decompose_drift(&gx, &gy, &DecompOptions::default()).unwrap();
    let umax =
        dr.u.values
            .iter()
            .flatten()
            .map(|v| v.unwrap().abs())
            .fold(0.0f64, f64::max);
    // random smooth field built from smooth potentials
    let ru = grid_from_fn(n, 4.0, |x, y| {
        (0.8 * x).sin() * (0.6 * y + 0.3).cos() + 0.2 * (x - 1.0) * (y - 1.5)
    });
    let rw = grid_from_fn(n, 4.0, |x, y| (0.5 * x * x - 0.4 * y).cos() + 0.1 * x * y);
    let (rx, ry) = reconstruct_field(&ru, &rw).unwrap();
    let drand = decompose_drift(&rx, &ry, &DecompOptions::default()).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = wmax <= 1e-8
        && dg.residual <= 1e-6
        && umax <= 1e-8
        && dr.residual <= 1e-6
        && drand.residual <= 1e-6
        && elapsed < 5.0;
    report(
        5,
        "drift-field decomposition",
        ok,
        &format!(
            "max|w| = {wmax:.2e} (tol 1e-8), max|u - const| = {umax:.2e} (tol 1e-8), \
             random-field residual = {:.2e} (tol 1e-6), runtime {elapsed:.2}s (< 5s)",
            drand.residual
        ),
    );
}

fn symmetric_2d_spec() -> ModelSpec2D {
    ModelSpec2D {
        own_drift_x: Coef2::sum(vec![
            Coef2::of_x(Coef1::reverting(0.4, 1.0)),
            Coef2::of_y(Coef1::Linear {
                intercept: -0.05,
                slope: 0.05,
            }),
        ]),
        own_drift_y: Coef2::sum(vec![
            Coef2::of_y(Coef1::reverting(0.4, 1.0)),
            Coef2::of_x(Coef1::Linear {
                intercept: -0.05,
                slope: 0.05,
            }),
        ]),
        own_diff_x: Coef2::of_x(Coef1::Linear {
            intercept: 0.02,
            slope: 0.004,
        }),
        own_diff_y: Coef2::of_y(Coef1::Linear {
            intercept: 0.02,
            slope: 0.004,
        }),
        q_plus: Coef2::constant(0.01),
        q_minus: Coef2::of_x(Coef1::PiecewiseLinear {
            xs: vec![0.0, 0.4, 4.0],
            ys: vec![0.15, 0.015, 0.015],
        }),
        p_plus: Dens2::Product {
            x: Dens1::Exponential { mean: 0.25 },
            y: Dens1::TruncNormal {
                mean: 1.0,
                sd: 0.45,
            },
        },
        p_minus: Dens2::Product {
            x: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            y: Dens1::TruncNormal {
                mean: 1.0,
                sd: 0.45,
            },
        },
        pi_plus: 0.2,
        x_max: 4.0,
        y_max: 4.0,
        nx: 32,
        ny: 32,
    }
}

/// Bid/ask-symmetric generator with flat jump hazards and diffusion that
/// depends on the own queue only; the structure criterion needs the
/// per-event side shares to be state-independent so that any variation of
/// the diffusion estimate across the opposite volume is estimator error.
fn independent_2d_spec() -> ModelSpec2D {
    // drift per event well below the step noise, as in real queue data,
    // so the second moment is not contaminated by the squared mean
    ModelSpec2D {
        own_drift_x: Coef2::sum(vec![
            Coef2::of_x(Coef1::reverting(0.05, 1.0)),
            Coef2::of_y(Coef1::Linear {
                intercept: -0.002,
                slope: 0.002,
            }),
        ]),
        own_drift_y: Coef2::sum(vec![
            Coef2::of_y(Coef1::reverting(0.05, 1.0)),
            Coef2::of_x(Coef1::Linear {
                intercept: -0.002,
                slope: 0.002,
            }),
        ]),
        own_diff_x: Coef2::of_x(Coef1::Linear {
            intercept: 0.02,
            slope: 0.002,
        }),
        own_diff_y: Coef2::of_y(Coef1::Linear {
            intercept: 0.02,
            slope: 0.002,
        }),
        q_plus: Coef2::constant(0.01),
        q_minus: Coef2::constant(0.04),
        p_plus: Dens2::Product {
            x: Dens1::Exponential { mean: 0.25 },
            y: Dens1::TruncNormal {
                mean: 1.0,
                sd: 0.45,
            },
        },
        p_minus: Dens2::Product {
            x: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
            y: Dens1::TruncNormal {
                mean: 1.0,
                sd: 0.45,
            },
        },
        pi_plus: 0.2,
        x_max: 4.0,
        y_max: 4.0,
        nx: 32,
        ny: 32,
    }
}

/// Criterion 6: on a bid/ask-symmetric generator the drift estimates obey
/// the mirror symmetry within 3 pooled standard errors cell-wise, the
/// diffusion estimate varies across the opposite volume by <= 5% relative,
/// and the cross-covariance is within 3 sigma of zero cell-wise.
#[test]
fn criterion_6_two_dimensional_structure() {
    let _g = lock();
    let spec = independent_2d_spec();
    let profile = flat_profile();
    let records = generate_events_2d(
        &spec,
        &profile,
        &GenConfig {
            n_events: 4_000_000,
            seed: 915,
            ..Default::default()
        },
    )
    .expect("2d generation");
    let out = classify(&records, &ClassifyConfig::default()).expect("classification");
    let cfg = Calib2DConfig {
        min_count: 400,
        ..Default::default()
    };
    let c = calib2d::estimate_2d(&out.events, &profile, &cfg).expect("2d calibration");
    // (a) mirror symmetry of the drift components, on cells whose sample
    // counts make the per-cell standard errors meaningful
    let mut worst_z = 0.0f64;
    let mut checked = 0;
    for i in 0..32 {
        for j in 0..32 {
            if c.fx.counts[i][j] < 15_000 || c.fy.counts[j][i] < 15_000 {
                continue;
            }
            let (a, sa) = match (c.fx.values[i][j], c.fx_se.values[i][j]) {
                (Some(a), Some(s)) => (a, s),
                _ => continue,
            };
            let (b, sb) = match (c.fy.values[j][i], c.fy_se.values[j][i]) {
                (Some(b), Some(s)) => (b, s),
                _ => continue,
            };
            let se = (sa * sa + sb * sb).sqrt();
            if se > 0.0 {
                worst_z = worst_z.max((a - b).abs() / se);
                checked += 1;
            }
        }
    }
    report(
        6,
        "bid/ask symmetry of the drift field",
        checked > 30 && worst_z <= 3.0,
        &format!("max |fx(x,y) - fy(y,x)| = {worst_z:.2} pooled SE over {checked} cells (tol 3)"),
    );
    // (b) diffusion independent of the opposite queue: compare the pooled
    // estimate over the thin-ask and thick-ask halves of the occupied
    // region at each x
    let mut worst_rel = 0.0f64;
    let mut cols = 0;
    for i in 0..32 {
        let mut pool = [(0.0f64, 0u64), (0.0f64, 0u64)];
        for j in 0..32 {
            let (v, n) = (c.dx.values[i][j], c.dx.counts[i][j]);
            if let Some(v) = v {
                let half = usize::from(c.dx.y_center(j) >= 1.0);
                pool[half].0 += v * n as f64;
                pool[half].1 += n;
            }
        }
        if pool[0].1 >= 40_000 && pool[1].1 >= 40_000 {
            let lo = pool[0].0 / pool[0].1 as f64;
            let hi = pool[1].0 / pool[1].1 as f64;
            let rel = (lo - hi).abs() / (0.5 * (lo + hi));
            worst_rel = worst_rel.max(rel);
            cols += 1;
        }
    }
    report(
        6,
        "diffusion independent of the opposite queue",
        cols >= 5 && worst_rel <= 0.05,
        &format!(
            "max relative variation across y = {:.3} over {cols} x-columns (tol 0.05)",
            worst_rel
        ),
    );
    // (c) cross-covariance consistent with zero
    let mut worst_rho_z = 0.0f64;
    let mut rho_cells = 0;
    for i in 0..32 {
        for j in 0..32 {
            if let (Some(v), Some(se)) = (c.rho_ab.values[i][j], c.rho_ab_se.values[i][j]) {
                if c.rho_ab.counts[i][j] >= 10_000 && se > 0.0 {
                    worst_rho_z = worst_rho_z.max(v.abs() / se);
                    rho_cells += 1;
                }
            }
        }
    }
    report(
        6,
        "no bid/ask cross-covariance",
        rho_cells > 30 && worst_rho_z <= 3.0,
        &format!("max |rho| = {worst_rho_z:.2} sigma over {rho_cells} cells (tol 3)"),
    );
}

/// Criterion 7: Monte Carlo hitting probabilities match absorbing-generator
/// linear solves within 1% absolute at 1e5 paths, and the driftless
/// two-barrier identity gives 0.75 within 3 sigma.
#[test]
fn criterion_7_first_passage_oracles() {
    let _g = lock();
    // (a) gambler's ruin identity
    let ruin_spec = ModelSpec1D {
        drift: Coef1::constant(0.0),
        diffusion: Coef1::constant(0.5),
        q_plus: Coef1::constant(0.0),
        q_minus: Coef1::constant(0.0),
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 2.0,
        n_cells: 512,
        drift_correction: None,
    };
    let est = simulate::simulate_paths(
        &ruin_spec,
        &SimConfig {
            x0: 0.5,
            dt: 1e-4,
            horizon: 1e9,
            n_paths: 100_000,
            seed: 12,
            upper_absorbing: true,
            jobs: 4,
            ..Default::default()
        },
    )
    .expect("ruin simulation");
    let p_ruin = est.probability(simulate::Outcome::QueueEmpty);
    let se = binomial_se(0.75, 100_000);
    report(
        7,
        "driftless two-barrier first passage",
        (p_ruin - 0.75).abs() <= 3.0 * se,
        &format!("P(hit 0 first) = {p_ruin:.4} vs 0.75 +- {:.4}", 3.0 * se),
    );
    // (b) full spec: queue-empty / price-up / price-down from x0 = 1
    let spec = ModelSpec1D {
        drift: Coef1::reverting(0.1, 1.0),
        diffusion: Coef1::constant(0.05),
        q_plus: Coef1::constant(0.015),
        q_minus: Coef1::PiecewiseLinear {
            xs: vec![0.0, 0.5, 5.0],
            ys: vec![0.10, 0.015, 0.015],
        },
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 5.0,
        n_cells: 512,
        drift_correction: None,
    };
    let mc = simulate::simulate_paths(
        &spec,
        &SimConfig {
            x0: 1.0,
            dt: 0.01,
            horizon: 1e6,
            n_paths: 100_000,
            seed: 40,
            jobs: 4,
            ..Default::default()
        },
    )
    .expect("simulation");
    let oracle = hitting_probabilities_1d(
        &spec,
        1.0,
        &HittingProblem {
            lower: Boundary::Absorbing,
            upper: Boundary::Reflecting,
            n: 4000,
        },
    )
    .expect("oracle");
    let pairs = [
        (
            "queue empty",
            mc.probability(simulate::Outcome::QueueEmpty),
            oracle.queue_empty,
        ),
        (
            "price up",
            mc.probability(simulate::Outcome::PriceUp),
            oracle.price_up,
        ),
        (
            "price down",
            mc.probability(simulate::Outcome::PriceDown),
            oracle.price_down,
        ),
    ];
    for (name, got, want) in pairs {
        report(
            7,
            &format!("1D hitting vs linear solve ({name})"),
            (got - want).abs() <= 0.01,
            &format!("MC {got:.4} vs oracle {want:.4} (tol 0.01 absolute)"),
        );
    }
    // (c) 2D race from (1,1) and (0.2,1)
    let spec2 = symmetric_2d_spec();
    for (start, label) in [((1.0, 1.0), "(1,1)"), ((0.2, 1.0), "(0.2,1)")] {
        let mc2 = simulate_2d(
            &spec2,
            &SimConfig2D {
                start,
                dt: 0.01,
                horizon: 1e5,
                n_paths: 100_000,
                seed: 77,
                jobs: 4,
                ..Default::default()
            },
        )
        .expect("2d race");
        let (ob, oa) = race_probabilities_2d(&spec2, start, 128).expect("2d oracle");
        let gb = mc2.probability(simulate::Outcome::BidDown);
        let ga = mc2.probability(simulate::Outcome::AskUp);
        report(
            7,
            &format!("2D race vs linear solve at {label}"),
            (gb - ob).abs() <= 0.01 && (ga - oa).abs() <= 0.01,
            &format!("bid-down MC {gb:.4} vs {ob:.4}; ask-up MC {ga:.4} vs {oa:.4} (tol 0.01)"),
        );
        if start.0 < 0.9 {
            let sep = (gb - ga)
                / (mc2.stat(simulate::Outcome::BidDown).unwrap().se.powi(2)
                    + mc2.stat(simulate::Outcome::AskUp).unwrap().se.powi(2))
                .sqrt();
            report(
                7,
                "bid-down dominates from a thin bid queue",
                sep >= 5.0,
                &format!("separation {sep:.1} sigma (need >= 5)"),
            );
        }
    }
}

/// Criterion 8: conservation and determinism. Generator columns sum to
/// zero at 1e-12, stationary densities are nonnegative, and seeded
/// commands are bit-reproducible across reruns and job counts.
#[test]
fn criterion_8_conservation_and_determinism() {
    let _g = lock();
    let mut worst_col = 0.0f64;
    for (_, spec) in criterion3_specs() {
        let gen = Generator1D::build(&spec, 400).expect("generator");
        for s in gen.column_sums() {
            worst_col = worst_col.max(s.abs());
        }
        let sol = stationary_1d(&spec).expect("solve");
        assert!(sol.pst.iter().all(|p| *p >= -1e-12));
    }
    report(
        8,
        "generator mass conservation",
        worst_col <= 1e-12,
        &format!("max |column sum| = {worst_col:.2e} (tol 1e-12)"),
    );
    // seeded reruns and job counts
    let truth = reference_scale_spec();
    let profile = flat_profile();
    let gcfg = GenConfig {
        n_events: 100_000,
        seed: 555,
        ..Default::default()
    };
    let s1 = generate_events_1d(&truth, &profile, &gcfg).unwrap();
    let s2 = generate_events_1d(&truth, &profile, &gcfg).unwrap();
    let same_stream = s1 == s2;
    let events = classify(&s1, &ClassifyConfig::default()).unwrap().events;
    let ccfg = CalibConfig::default();
    let c1 = calib1d::calibrate_parallel(&events, &profile, &ccfg, 1).unwrap();
    let c4 = calib1d::calibrate_parallel(&events, &profile, &ccfg, 4).unwrap();
    let sim = |jobs| {
        simulate::simulate_paths(
            &truth,
            &SimConfig {
                x0: 1.0,
                dt: 0.05,
                horizon: 2_000.0,
                n_paths: 5_000,
                seed: 9,
                jobs,
                ..Default::default()
            },
        )
        .unwrap()
    };
    let m1 = serde_json::to_string(&sim(1)).unwrap();
    let m4 = serde_json::to_string(&sim(4)).unwrap();
    report(
        8,
        "seeded bit-reproducibility",
        same_stream && c1 == c4 && m1 == m4,
        "generator, calibration and simulation identical across reruns and --jobs",
    );
}

/// Criterion 9: profile fit. Exact recovery of (a0, a1, a2) to 1e-9 on a
/// noiseless profile; under 5% multiplicative noise the true coefficients
/// fall inside their 95% confidence intervals in >= 90 of 100 seeded
/// trials, per coefficient.
#[test]
fn criterion_9_profile_fit_recovery_and_coverage() {
    let _g = lock();
    let (a0, a1, a2) = (100.0, 20.0, 300.0);
    let truth: Vec<f64> = (1..=78)
        .map(|b| a0 + a1 * (b as f64).ln() + a2 / (79.0 - b as f64))
        .collect();
    let exact = fit_profile(&truth).expect("fit");
    let exact_ok = (exact.a0 - a0).abs() < 1e-9
        && (exact.a1 - a1).abs() < 1e-9
        && (exact.a2 - a2).abs() < 1e-9;
    report(
        9,
        "noiseless profile recovery",
        exact_ok,
        &format!(
            "|da0| = {:.1e}, |da1| = {:.1e}, |da2| = {:.1e} (tol 1e-9)",
            (exact.a0 - a0).abs(),
            (exact.a1 - a1).abs(),
            (exact.a2 - a2).abs()
        ),
    );
    let mut cover = [0u32; 3];
    let trials = 100;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial as u64);
        let noisy: Vec<f64> = truth
            .iter()
            .map(|v| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                v * (1.0 + 0.05 * z)
            })
            .collect();
        let fit = fit_profile(&noisy).expect("fit");
        let est = [fit.a0, fit.a1, fit.a2];
        for (k, want) in [a0, a1, a2].iter().enumerate() {
            if (est[k] - want).abs() <= T_975_DF75 * fit.se[k] {
                cover[k] += 1;
            }
        }
    }
    report(
        9,
        "coefficient confidence-interval coverage",
        cover.iter().all(|c| *c >= 90),
        &format!(
            "coverage over {trials} trials: a0 {}, a1 {}, a2 {} (need >= 90 each)",
            cover[0], cover[1], cover[2]
        ),
    );
}

/// The separable-factorization and symmetry checks of the 2D solver used by
/// the criteria above; kept here so the acceptance binary exercises the 2D
/// relaxation end to end.
#[test]
fn criterion_3_supplement_2d_solver_consistency() {
    let _g = lock();
    let spec = symmetric_2d_spec();
    let sol = fpsolve::stationary_2d(&spec, &Solve2DOptions::default()).expect("2d solve");
    let occ = simulate::occupancy_2d(
        &spec,
        &SimConfig2D {
            start: (1.0, 1.0),
            dt: 0.05,
            horizon: 400_000.0,
            seed: 5,
            free_running: true,
            ..Default::default()
        },
        32,
    )
    .expect("2d occupancy");
    // the solver's mode should sit where the simulator spends its time
    let mode = |g: &Grid2D| {
        let mut best = (0usize, 0usize);
        let mut bv = f64::NEG_INFINITY;
        for i in 0..g.nx() {
            for j in 0..g.ny() {
                if let Some(v) = g.values[i][j] {
                    if v > bv {
                        bv = v;
                        best = (i, j);
                    }
                }
            }
        }
        best
    };
    let ms = mode(&sol.density);
    let mo = mode(&occ);
    let close = ms.0.abs_diff(mo.0) <= 1 && ms.1.abs_diff(mo.1) <= 1;
    report(
        3,
        "2D stationary mode matches Monte Carlo occupancy",
        close,
        &format!("solver mode {ms:?}, occupancy mode {mo:?} (within one cell)"),
    );
    // quantitative agreement in L1 of cell masses
    let mut l1 = 0.0;
    for i in 0..32 {
        for j in 0..32 {
            let a = sol.density.values[i][j].unwrap() * sol.density.cell_area(i, j);
            let b = occ.values[i][j].unwrap() * occ.cell_area(i, j);
            l1 += (a - b).abs();
        }
    }
    report(
        3,
        "2D stationary vs occupancy L1",
        l1 <= 0.08,
        &format!("L1 = {l1:.4} (tol 0.08)"),
    );
    let sym = {
        let mut worst = 0.0f64;
        for i in 0..32 {
            for j in 0..32 {
                let a = sol.density.values[i][j].unwrap();
                let b = sol.density.values[j][i].unwrap();
                worst = worst.max((a - b).abs());
            }
        }
        worst
    };
    report(
        3,
        "2D stationary symmetry under (x,y) -> (y,x)",
        sym <= 1e-10,
        &format!("max asymmetry = {sym:.2e} (tol 1e-10)"),
    );
}
