//! Nanopositioner damping scenario: a 14.86 kHz collocated mode sampled at
//! 1.25 MHz and damped with `Γ = 0.010`, `D = −3`.
//!
//! The damping ratio and DC gain of the plant are not published; they are fixed
//! here at `ζ = 0.005` and `G(0) = 1` and marked synthetic in every output.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::discretize::{build_modal_plant, zoh_sample, ModalSpec};
use crate::error::{Error, Result};
use crate::interconnect::{self, ClosedLoopCertificate};
use crate::irc::{build_irc, IrcParams};
use crate::ni_cert::{find_certificate, NiCertificate, SearchOptions, SearchOutcome};
use crate::sim::{self, DampingReport, FrfCurve, Signal, Trajectory};
use crate::state_space::DiscreteStateSpace;

/// Resonance-peak reduction reported for the hardware experiment.
pub const PUBLISHED_REDUCTION_DB: f64 = 14.4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoConfig {
    pub freq_hz: f64,
    pub zeta: f64,
    pub dc_gain: f64,
    pub sample_period: f64,
    pub gamma: f64,
    pub d: f64,
    /// Peak search band (Hz).
    pub band: (f64, f64),
    /// Exported FRF band (Hz).
    pub frf_band: (f64, f64),
    pub step_samples: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            freq_hz: 14860.0,
            zeta: 0.005,
            dc_gain: 1.0,
            sample_period: 8e-7,
            gamma: 0.010,
            d: -3.0,
            band: (10e3, 20e3),
            frf_band: (1e3, 1e5),
            step_samples: 20_000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoSummary {
    pub resonance_hz: f64,
    pub sample_period: f64,
    pub zeta: f64,
    pub dc_gain: f64,
    /// Plant parameters chosen here rather than taken from the experiment.
    pub synthetic: Vec<String>,
    pub gamma: f64,
    pub d: f64,
    pub ni_search_iterations: usize,
    pub margin_nonsingular_i_minus_a: f64,
    pub margin_d_above_minus_two_gamma_inv: f64,
    pub margin_d_below_minus_dc_gain: f64,
    pub min_eig_q: f64,
    pub max_eig_decrement: f64,
    pub spectral_radius: f64,
    pub certified: bool,
    pub damping: DampingReport,
    pub published_reduction_db: f64,
}

impl DemoSummary {
    /// Side-by-side comparison with the reported hardware figure.
    pub fn comparison(&self) -> String {
        format!(
            "resonance peak reduction: computed {:.2} dB (synthetic plant), published {:.1} dB (hardware)",
            self.damping.reduction_db, self.published_reduction_db
        )
    }
}

#[derive(Debug, Clone)]
pub struct DemoOutcome {
    pub spec: ModalSpec,
    pub plant: DiscreteStateSpace,
    pub ni_certificate: NiCertificate,
    pub params: IrcParams,
    pub closed_loop: ClosedLoopCertificate,
    pub open_frf: FrfCurve,
    pub closed_frf: FrfCurve,
    pub open_step: Trajectory,
    pub closed_step: Trajectory,
    pub summary: DemoSummary,
}

pub fn demo_plant(cfg: &DemoConfig) -> Result<(ModalSpec, DiscreteStateSpace)> {
    let spec = ModalSpec::single(cfg.freq_hz, cfg.zeta, Some(cfg.dc_gain));
    let plant = zoh_sample(&build_modal_plant(&spec)?, cfg.sample_period)?;
    Ok((spec, plant))
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoOutcome> {
    let (spec, plant) = demo_plant(cfg)?;
    let found = match find_certificate(&plant, &SearchOptions::default())? {
        SearchOutcome::Found(f) => f,
        SearchOutcome::Stalled(r) => {
            return Err(Error::Numerical(format!(
                "no NI certificate found for the sampled plant after {} iterations",
                r.iterations
            )))
        }
    };
    let params = IrcParams::scalar(cfg.gamma, cfg.d)?;
    let closed_loop = interconnect::certify_closed_loop(&plant, &found.certificate, &params, interconnect::DEFAULT_TOL)?;
    let ctrl = build_irc(&params);
    let grid = sim::log_grid(cfg.frf_band.0, cfg.frf_band.1, sim::DEFAULT_POINTS_PER_DECADE)?;
    let open_frf = sim::frf(&plant, &grid)?;
    let closed_frf = sim::closed_loop_frf(&plant, &ctrl, &grid)?;
    let damping = sim::damping_report(&plant, &ctrl, cfg.band)?;
    let open_step = sim::simulate(&plant, &Signal::unit_step(), &DVector::zeros(plant.n()), cfg.step_samples)?;
    let closed_step = sim::step_disturbance_response(&plant, &ctrl, cfg.step_samples)?;

    let cr = &closed_loop.conditions_report;
    let summary = DemoSummary {
        resonance_hz: cfg.freq_hz,
        sample_period: cfg.sample_period,
        zeta: cfg.zeta,
        dc_gain: cfg.dc_gain,
        synthetic: vec!["zeta".into(), "dc_gain".into()],
        gamma: cfg.gamma,
        d: cfg.d,
        ni_search_iterations: found.iterations,
        margin_nonsingular_i_minus_a: cr.nonsingular_i_minus_a.margin,
        margin_d_above_minus_two_gamma_inv: cr.d_above_minus_two_gamma_inv.margin,
        margin_d_below_minus_dc_gain: cr.d_below_minus_dc_gain.margin,
        min_eig_q: closed_loop.min_eig_q,
        max_eig_decrement: closed_loop.max_eig_decrement,
        spectral_radius: closed_loop.spectral_radius,
        certified: closed_loop.accepted,
        damping,
        published_reduction_db: PUBLISHED_REDUCTION_DB,
    };
    Ok(DemoOutcome {
        spec,
        plant,
        ni_certificate: found.certificate,
        params,
        closed_loop,
        open_frf,
        closed_frf,
        open_step,
        closed_step,
        summary,
    })
}

/// `D` of the demo as a 1×1 matrix, for sweeps.
pub fn demo_d(cfg: &DemoConfig) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, cfg.d)
}
