//! Shared fixtures for the integration suites: reference model
//! specifications and pipeline glue. Each test binary uses its own subset.
#![allow(dead_code)]

use lobfp_core::events::{classify, ClassifyConfig, ClassifyOutput, EventKind, QuoteEvent, Side};
use lobfp_core::model::{Coef1, Dens1, ModelSpec1D};
use lobfp_core::seasonality::IntradayProfile;
use lobfp_core::synth::{generate_events_1d, GenConfig};

/// Ornstein-Uhlenbeck-style spec without jumps; gentle per-event steps so
/// the diffusion description is accurate.
pub fn ou_nojump(kappa: f64, d: f64) -> ModelSpec1D {
    ModelSpec1D {
        drift: Coef1::reverting(kappa, 1.0),
        diffusion: Coef1::constant(d),
        q_plus: Coef1::constant(0.0),
        q_minus: Coef1::constant(0.0),
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 5.0,
        n_cells: 512,
        drift_correction: None,
    }
}

/// Full model with jumps at typical large-tick scales:
/// pi0 ~ 0.90 pooled, pi+ = 0.20.
pub fn reference_scale_spec() -> ModelSpec1D {
    ModelSpec1D {
        drift: Coef1::reverting(0.5, 1.0),
        diffusion: Coef1::constant(0.05),
        q_plus: Coef1::constant(0.04),
        q_minus: Coef1::constant(0.06),
        p_plus: Dens1::Exponential { mean: 0.2 },
        p_minus: Dens1::TruncNormal { mean: 1.0, sd: 0.4 },
        pi_plus: 0.2,
        x_max: 5.0,
        n_cells: 512,
        drift_correction: None,
    }
}

pub fn flat_profile() -> IntradayProfile {
    IntradayProfile::flat(20_000.0, 100.0)
}

/// Generate a stream and classify it.
pub fn synth_classified(spec: &ModelSpec1D, n: u64, seed: u64) -> ClassifyOutput {
    let profile = flat_profile();
    let cfg = GenConfig {
        n_events: n,
        seed,
        ..Default::default()
    };
    let records = generate_events_1d(spec, &profile, &cfg).expect("generation");
    classify(&records, &ClassifyConfig::default()).expect("classification")
}

/// Pre-event rescaled volume of the side each event touched.
pub fn x_samples(events: &[QuoteEvent], vbar: f64) -> Vec<f64> {
    events
        .iter()
        .map(|ev| match ev.side {
            Side::Bid => ev.pre.0 as f64 / vbar,
            Side::Ask => ev.pre.1 as f64 / vbar,
        })
        .collect()
}

/// Fraction of events of a kind.
pub fn kind_fraction(events: &[QuoteEvent], kind: EventKind) -> f64 {
    events.iter().filter(|e| e.kind == kind).count() as f64 / events.len() as f64
}
