use std::path::Path;

use nalgebra::DMatrix;
use ni_irc::demo::{self, DemoConfig};
use ni_irc::discretize::{build_modal_plant, zoh_sample, ModalSpec};
use ni_irc::interconnect::{self, conditions_report, ConditionsReport};
use ni_irc::io::{self, csv_string, to_json_string};
use ni_irc::irc::{build_irc, synthesize_params, IrcParams, SynthesisOptions};
use ni_irc::ni_cert::{self, find_certificate, verify_candidate, CandidateVerdict, NiCertificate, SearchOptions, SearchOutcome};
use ni_irc::sim::{self, FrfCurve, Trajectory};
use ni_irc::state_space::ModelFile;
use ni_irc::DiscreteStateSpace;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::bundle::Bundle;
use crate::settings::Settings;
use crate::CliError;

/// What a command produced: files to write, human-readable text, and whether the
/// certification it performed was accepted.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Bundle,
    pub text: String,
    pub rejected: bool,
}

impl Outcome {
    fn line(&mut self, s: impl AsRef<str>) {
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }
}

const DEFAULT_STEPS: usize = 20_000;

fn plant(s: &Settings) -> Result<DiscreteStateSpace, CliError> {
    match (&s.model, &s.modal) {
        (Some(_), Some(_)) => Err(CliError::Input("give exactly one of --model and --modal".into())),
        (Some(path), None) => {
            let model: ModelFile = load(path)?;
            let sys = DiscreteStateSpace::from_model(model)?;
            match (sys.sample_period(), s.ts) {
                (None, Some(ts)) => Ok(sys.with_sample_period(ts)?),
                _ => Ok(sys),
            }
        }
        (None, Some(path)) => {
            let spec: ModalSpec = load(path)?;
            let ts = s
                .ts
                .ok_or_else(|| CliError::Input("--modal needs a sample period (--ts)".into()))?;
            Ok(zoh_sample(&build_modal_plant(&spec)?, ts)?)
        }
        (None, None) => Err(CliError::Input("no plant given (--model or --modal)".into())),
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    io::read_json(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn params(s: &Settings) -> Result<IrcParams, CliError> {
    let path = s
        .params
        .as_ref()
        .ok_or_else(|| CliError::Input("no IRC parameters given (--params)".into()))?;
    load(path)
}

/// Either a bare `P` (nested array) or an object with a `P` field.
#[derive(Deserialize)]
#[serde(untagged)]
enum CandidateFile {
    Object {
        #[serde(rename = "P", with = "ni_irc::io::rows")]
        p: DMatrix<f64>,
    },
    Bare(#[serde(with = "ni_irc::io::rows")] DMatrix<f64>),
}

fn read_candidate(path: &Path) -> Result<DMatrix<f64>, CliError> {
    Ok(match load::<CandidateFile>(path)? {
        CandidateFile::Object { p } | CandidateFile::Bare(p) => p,
    })
}

fn tol(s: &Settings) -> f64 {
    s.tol.unwrap_or(ni_cert::DEFAULT_TOL)
}

/// Verifies `--cert` when given, otherwise searches. `Err(text)` carries the
/// explanation of a rejection.
fn certificate(s: &Settings, sys: &DiscreteStateSpace) -> Result<Result<NiCertificate, String>, CliError> {
    let tol = tol(s);
    if let Some(path) = &s.cert {
        let p = read_candidate(path)?;
        return Ok(match verify_candidate(sys, &p, tol)? {
            CandidateVerdict::Accepted(c) => Ok(c),
            CandidateVerdict::Rejected { residuals, reasons } => {
                let mut msg = String::from("candidate P rejected:");
                for r in reasons {
                    msg.push_str(&format!("\n  - {r}"));
                }
                msg.push_str(&format!(
                    "\n  min eig P = {:.3e}, max eig (AᵀPA − P) = {:.3e}, equality residual = {:.3e}",
                    residuals.min_eig_p, residuals.max_eig_lyap, residuals.equality_residual
                ));
                Err(msg)
            }
        });
    }
    let opts = SearchOptions {
        tol,
        ..SearchOptions::default()
    };
    Ok(match find_certificate(sys, &opts)? {
        SearchOutcome::Found(f) => Ok(f.certificate),
        SearchOutcome::Stalled(r) => Err(format!(
            "no certificate found after {} iterations ({:?}); {}",
            r.iterations, r.method, r.note
        )),
    })
}

fn residual_lines(out: &mut Outcome, c: &NiCertificate) {
    out.line(format!("  min eig P               {:.3e}", c.min_eig_p()));
    out.line(format!("  max eig (AᵀPA − P)      {:.3e}", c.max_eig_lyap()));
    out.line(format!("  equality residual       {:.3e}", c.equality_residual()));
}

pub fn design(s: &Settings) -> Result<Outcome, CliError> {
    let sources = [s.model.is_some(), s.modal.is_some(), s.g1.is_some()];
    if sources.iter().filter(|b| **b).count() != 1 {
        return Err(CliError::Input("give exactly one plant source: --model, --modal or --g1".into()));
    }
    let (g1, sys) = match &s.g1 {
        Some(g1) => (g1.clone(), None),
        None => {
            let sys = plant(s)?;
            (ni_irc::linalg::symmetrize(&sys.dc_gain()?), Some(sys))
        }
    };
    let defaults = SynthesisOptions::defaults_for(&g1);
    let opts = SynthesisOptions {
        delta: s.delta.unwrap_or(defaults.delta),
        beta: s.beta.unwrap_or(defaults.beta),
    };
    let p = synthesize_params(&g1, opts)?;
    let mut out = Outcome::default();
    out.line(format!("G(1)  = {}", fmt_matrix(&g1)));
    out.line(format!("delta = {}, beta = {}", opts.delta, opts.beta));
    out.line(format!("Gamma = {}", fmt_matrix(p.gamma())));
    out.line(format!("D     = {}", fmt_matrix(p.d())));
    out.line(format!("lambda_min(D + 2 Gamma^-1) = {:.3e}", p.admissibility_margin()));
    out.line(format!(
        "lambda_min(-D - G(1))      = {:.3e}",
        ni_irc::linalg::min_eigenvalue(&(-p.d() - &g1))
    ));
    if let Some(sys) = &sys {
        out.text.push_str(&conditions_report(sys, &p)?.table());
    }
    out.files.add("params.json", to_json_string(&p)?);
    Ok(out)
}

pub fn verify_ni(s: &Settings) -> Result<Outcome, CliError> {
    let sys = plant(s)?;
    let mut out = Outcome::default();
    match certificate(s, &sys)? {
        Ok(c) => {
            out.line("NI certificate accepted");
            residual_lines(&mut out, &c);
            out.files.add("ni_certificate.json", to_json_string(&c)?);
        }
        Err(msg) => {
            out.line(msg);
            out.rejected = true;
        }
    }
    Ok(out)
}

fn conditions_lines(out: &mut Outcome, report: &ConditionsReport) {
    out.text.push_str(&report.table());
    for w in &report.warnings {
        out.line(format!("warning: {w}"));
    }
}

pub fn verify_cl(s: &Settings) -> Result<Outcome, CliError> {
    let sys = plant(s)?;
    let p = params(s)?;
    let mut out = Outcome::default();
    let cert = match certificate(s, &sys)? {
        Ok(c) => c,
        Err(msg) => {
            out.line(format!("plant is not certified NI: {msg}"));
            out.text.push_str(&conditions_report(&sys, &p)?.table());
            out.rejected = true;
            return Ok(out);
        }
    };
    let cl = interconnect::certify_closed_loop(&sys, &cert, &p, s.tol.unwrap_or(interconnect::DEFAULT_TOL))?;
    conditions_lines(&mut out, &cl.conditions_report);
    out.line(format!("min eig Q                {:.3e}", cl.min_eig_q));
    out.line(format!("max eig (ÂᵀQÂ − Q)       {:.3e}", cl.max_eig_decrement));
    out.line(format!("spectral radius of Â     {:.9}", cl.spectral_radius));
    out.line(if cl.accepted {
        "closed loop certified asymptotically stable"
    } else {
        "closed loop NOT certified"
    });
    out.rejected = !cl.accepted;
    out.files.add("closed_loop_certificate.json", to_json_string(&cl)?);
    Ok(out)
}

fn trajectory_csv(t: &Trajectory) -> Result<String, CliError> {
    Ok(csv_string(&t.csv_header(), &t.csv_rows())?)
}

fn frf_csv(c: &FrfCurve) -> Result<String, CliError> {
    if c.flagged.len() == c.len() {
        return Err(CliError::Core(ni_irc::Error::Numerical(
            "no finite frequency-response samples on the grid".into(),
        )));
    }
    Ok(csv_string(&FrfCurve::csv_header(), &c.csv_rows())?)
}

pub fn simulate(s: &Settings) -> Result<Outcome, CliError> {
    let sys = plant(s)?;
    let steps = s.steps.unwrap_or(DEFAULT_STEPS);
    let x0 = nalgebra::DVector::zeros(sys.n());
    let open = sim::simulate(&sys, &sim::Signal::unit_step(), &x0, steps)?;
    let mut out = Outcome::default();
    out.line(format!("open-loop step response: {steps} samples"));
    out.files.add("step_open.csv", trajectory_csv(&open)?);
    if s.params.is_some() {
        let ctrl = build_irc(&params(s)?);
        let closed = sim::step_disturbance_response(&sys, &ctrl, steps)?;
        let y = closed.output_channel(0);
        out.line(format!(
            "closed-loop step disturbance response: final output {:.9}",
            y.last().copied().unwrap_or(f64::NAN)
        ));
        out.files.add("step_closed.csv", trajectory_csv(&closed)?);
    }
    Ok(out)
}

fn default_band(sys: &DiscreteStateSpace) -> Result<(f64, f64), CliError> {
    let ts = sys
        .sample_period()
        .ok_or_else(|| CliError::Input("frequency analysis needs a sample period (--ts)".into()))?;
    let nyquist = 0.5 / ts;
    Ok((nyquist * 1e-4, nyquist * 0.99))
}

pub fn frf(s: &Settings) -> Result<Outcome, CliError> {
    let sys = plant(s)?;
    let (lo, hi) = match s.band {
        Some(b) => b,
        None => default_band(&sys)?,
    };
    let grid = sim::log_grid(lo, hi, sim::DEFAULT_POINTS_PER_DECADE)?;
    let open = sim::frf(&sys, &grid)?;
    let mut out = Outcome::default();
    let peak = open.peak();
    out.line(format!("{} grid points in [{lo}, {hi}] Hz", grid.len()));
    if let Some((i, db)) = peak {
        out.line(format!("open-loop peak {db:.3} dB at {:.3} Hz", grid[i]));
    }
    out.files.add("frf_open.csv", frf_csv(&open)?);
    if s.params.is_some() {
        let closed = sim::closed_loop_frf(&sys, &build_irc(&params(s)?), &grid)?;
        if let Some((i, db)) = closed.peak() {
            out.line(format!("closed-loop peak {db:.3} dB at {:.3} Hz", grid[i]));
        }
        if !closed.flagged.is_empty() {
            out.line(format!("warning: {} grid points near a loop singularity", closed.flagged.len()));
        }
        out.files.add("frf_closed.csv", frf_csv(&closed)?);
    }
    Ok(out)
}

pub fn report(s: &Settings) -> Result<Outcome, CliError> {
    let sys = plant(s)?;
    let p = params(s)?;
    let band = s
        .band
        .ok_or_else(|| CliError::Input("report needs a peak search band (--band lo,hi)".into()))?;
    let damping = sim::damping_report(&sys, &build_irc(&p), band)?;
    let mut out = Outcome::default();
    out.line(format!(
        "open-loop peak   {:8.3} dB at {:.3} Hz",
        damping.open_peak_db, damping.open_peak_hz
    ));
    out.line(format!(
        "closed-loop peak {:8.3} dB at {:.3} Hz",
        damping.closed_peak_db, damping.closed_peak_hz
    ));
    out.line(format!("reduction        {:8.3} dB", damping.reduction_db));
    out.files.add("damping.json", to_json_string(&damping)?);
    if let Some(gammas) = &s.gammas {
        let cert = match certificate(s, &sys)? {
            Ok(c) => c,
            Err(msg) => return Err(CliError::Rejected(format!("gamma sweep needs an NI certificate: {msg}"))),
        };
        let sweep = sim::gamma_sweep(&sys, &cert, p.d(), gammas, band)?;
        for e in &sweep {
            match (&e.report, &e.reason) {
                (Some(r), None) => out.line(format!("  Gamma = {:<10} reduction {:8.3} dB", e.gamma, r.reduction_db)),
                (_, reason) => out.line(format!(
                    "  Gamma = {:<10} {}",
                    e.gamma,
                    reason.as_deref().unwrap_or("rejected")
                )),
            }
        }
        out.files.add("gamma_sweep.json", to_json_string(&sweep)?);
    }
    Ok(out)
}

pub fn demo(s: &Settings) -> Result<Outcome, CliError> {
    let mut cfg = DemoConfig::default();
    if let Some(ts) = s.ts {
        cfg.sample_period = ts;
    }
    if let Some(band) = s.band {
        cfg.band = band;
    }
    if let Some(steps) = s.steps {
        cfg.step_samples = steps;
    }
    let run = demo::run_demo(&cfg)?;
    let sm = &run.summary;
    let mut out = Outcome::default();
    out.line(format!(
        "plant: {} Hz mode, zeta = {} (synthetic), G(0) = {} (synthetic), Ts = {} s",
        sm.resonance_hz, sm.zeta, sm.dc_gain, sm.sample_period
    ));
    out.line(format!("IRC: Gamma = {}, D = {}", sm.gamma, sm.d));
    conditions_lines(&mut out, &run.closed_loop.conditions_report);
    out.line(format!("spectral radius of Â     {:.9}", sm.spectral_radius));
    out.line(format!(
        "open-loop peak {:.3} dB at {:.3} Hz, closed-loop peak {:.3} dB at {:.3} Hz",
        sm.damping.open_peak_db, sm.damping.open_peak_hz, sm.damping.closed_peak_db, sm.damping.closed_peak_hz
    ));
    out.line(sm.comparison());
    out.line(if sm.certified {
        "closed loop certified asymptotically stable"
    } else {
        "closed loop NOT certified"
    });
    out.rejected = !sm.certified;
    out.files.add("plant.json", to_json_string(&run.plant.to_model())?);
    out.files.add("params.json", to_json_string(&run.params)?);
    out.files.add("ni_certificate.json", to_json_string(&run.ni_certificate)?);
    out.files.add("closed_loop_certificate.json", to_json_string(&run.closed_loop)?);
    out.files.add("frf_open.csv", frf_csv(&run.open_frf)?);
    out.files.add("frf_closed.csv", frf_csv(&run.closed_frf)?);
    out.files.add("step_open.csv", trajectory_csv(&run.open_step)?);
    out.files.add("step_closed.csv", trajectory_csv(&run.closed_step)?);
    out.files.add("summary.json", to_json_string(sm)?);
    Ok(out)
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    serde_json::to_string(&io::matrix_to_rows(m)).unwrap_or_default()
}
