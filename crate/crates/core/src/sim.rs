//! Time-domain simulation, frequency responses and damping reports.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interconnect;
use crate::irc::{build_irc, IrcParams, SaniController};
use crate::linalg;
use crate::ni_cert::NiCertificate;
use crate::state_space::{DiscreteStateSpace, FeedthroughStateSpace};

/// Scalar excitation, applied identically to every input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Signal {
    Zero,
    Step { amplitude: f64 },
    Impulse { amplitude: f64 },
    Sine { freq_hz: f64, amplitude: f64 },
    /// Explicit samples; zero after the last one.
    Samples { values: Vec<f64> },
}

impl Signal {
    pub fn unit_step() -> Self {
        Signal::Step { amplitude: 1.0 }
    }

    fn validate(&self, ts: Option<f64>) -> Result<()> {
        match self {
            Signal::Sine { freq_hz, amplitude } => {
                let ts = ts.ok_or_else(|| {
                    Error::InvalidInput("a sine input needs a sample period".into())
                })?;
                if !(freq_hz.is_finite() && *freq_hz >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::InvalidInput("sine parameters must be finite".into()));
                }
                let nyquist = 0.5 / ts;
                if *freq_hz >= nyquist {
                    return Err(Error::InvalidInput(format!(
                        "sine frequency {freq_hz} Hz is not below the Nyquist frequency {nyquist} Hz"
                    )));
                }
            }
            Signal::Step { amplitude } | Signal::Impulse { amplitude } if !amplitude.is_finite() => {
                return Err(Error::InvalidInput("signal amplitude must be finite".into()));
            }
            Signal::Samples { values } if values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidInput("signal samples must be finite".into()));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn value(&self, k: usize, ts: Option<f64>) -> f64 {
        match self {
            Signal::Zero => 0.0,
            Signal::Step { amplitude } => *amplitude,
            Signal::Impulse { amplitude } => {
                if k == 0 {
                    *amplitude
                } else {
                    0.0
                }
            }
            Signal::Sine { freq_hz, amplitude } => {
                amplitude * (2.0 * PI * freq_hz * k as f64 * ts.unwrap_or(1.0)).sin()
            }
            Signal::Samples { values } => values.get(k).copied().unwrap_or(0.0),
        }
    }
}

/// Sampled trajectory stored row-per-step: `x[k]`, `u[k]`, `y[k]` for
/// `k = 0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    sample_period: Option<f64>,
    n: usize,
    m: usize,
    p: usize,
    states: Vec<f64>,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl Trajectory {
    fn with_capacity(sample_period: Option<f64>, n: usize, m: usize, p: usize, steps: usize) -> Self {
        Self {
            sample_period,
            n,
            m,
            p,
            states: Vec::with_capacity(steps * n),
            inputs: Vec::with_capacity(steps * m),
            outputs: Vec::with_capacity(steps * p),
        }
    }

    pub fn len(&self) -> usize {
        self.states
            .len()
            .checked_div(self.n)
            .unwrap_or_else(|| self.outputs.len() / self.p.max(1))
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn sample_period(&self) -> Option<f64> {
        self.sample_period
    }
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.sample_period.unwrap_or(1.0)
    }
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n..(k + 1) * self.n]
    }
    pub fn input(&self, k: usize) -> &[f64] {
        &self.inputs[k * self.m..(k + 1) * self.m]
    }
    pub fn output(&self, k: usize) -> &[f64] {
        &self.outputs[k * self.p..(k + 1) * self.p]
    }
    /// Output channel `i` over the whole trajectory.
    pub fn output_channel(&self, i: usize) -> Vec<f64> {
        self.outputs.iter().skip(i).step_by(self.p).copied().collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["k".to_string(), "t".to_string()];
        h.extend((0..self.m).map(|i| format!("u{i}")));
        h.extend((0..self.p).map(|i| format!("y{i}")));
        h
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|k| {
                let mut row = vec![k as f64, self.time(k)];
                row.extend_from_slice(self.input(k));
                row.extend_from_slice(self.output(k));
                row
            })
            .collect()
    }

    fn check_finite(&self) -> Result<()> {
        let bad = |v: &[f64], w: usize| v.iter().position(|x| !x.is_finite()).map(|i| i / w.max(1));
        match bad(&self.states, self.n).into_iter().chain(bad(&self.outputs, self.p)).min() {
            Some(k) => Err(Error::Numerical(format!("trajectory left the floating-point range at step {k}"))),
            None => Ok(()),
        }
    }

    fn push(&mut self, x: &DVector<f64>, u: &DVector<f64>, y: &DVector<f64>) {
        self.states.extend_from_slice(x.as_slice());
        self.inputs.extend_from_slice(u.as_slice());
        self.outputs.extend_from_slice(y.as_slice());
    }
}

/// Anything that can be stepped as `x⁺ = A x + B u`, `y = C x + D u`.
pub trait Simulate {
    fn a(&self) -> &DMatrix<f64>;
    fn b(&self) -> &DMatrix<f64>;
    fn c(&self) -> &DMatrix<f64>;
    fn d(&self) -> Option<&DMatrix<f64>>;
    fn sample_period(&self) -> Option<f64>;
}

impl Simulate for DiscreteStateSpace {
    fn a(&self) -> &DMatrix<f64> {
        DiscreteStateSpace::a(self)
    }
    fn b(&self) -> &DMatrix<f64> {
        DiscreteStateSpace::b(self)
    }
    fn c(&self) -> &DMatrix<f64> {
        DiscreteStateSpace::c(self)
    }
    fn d(&self) -> Option<&DMatrix<f64>> {
        None
    }
    fn sample_period(&self) -> Option<f64> {
        DiscreteStateSpace::sample_period(self)
    }
}

impl Simulate for FeedthroughStateSpace {
    fn a(&self) -> &DMatrix<f64> {
        FeedthroughStateSpace::a(self)
    }
    fn b(&self) -> &DMatrix<f64> {
        FeedthroughStateSpace::b(self)
    }
    fn c(&self) -> &DMatrix<f64> {
        FeedthroughStateSpace::c(self)
    }
    fn d(&self) -> Option<&DMatrix<f64>> {
        Some(FeedthroughStateSpace::d(self))
    }
    fn sample_period(&self) -> Option<f64> {
        None
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::InvalidInput("number of steps must be positive".into()));
    }
    Ok(())
}

fn check_x0(n: usize, x0: &DVector<f64>) -> Result<()> {
    if x0.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has length {}, system has {n} states",
            x0.len()
        )));
    }
    Ok(())
}

/// Runs the recursion for `steps` samples.
pub fn simulate<S: Simulate>(sys: &S, input: &Signal, x0: &DVector<f64>, steps: usize) -> Result<Trajectory> {
    check_steps(steps)?;
    let ts = sys.sample_period();
    input.validate(ts)?;
    let (a, b, c) = (sys.a(), sys.b(), sys.c());
    let (n, m, p) = (a.nrows(), b.ncols(), c.nrows());
    check_x0(n, x0)?;
    let mut traj = Trajectory::with_capacity(ts, n, m, p, steps);
    let mut x = x0.clone();
    let mut next = DVector::zeros(n);
    let mut u = DVector::zeros(m);
    let mut y = DVector::zeros(p);
    for k in 0..steps {
        u.fill(input.value(k, ts));
        y.gemv(1.0, c, &x, 0.0);
        if let Some(d) = sys.d() {
            y.gemv(1.0, d, &u, 1.0);
        }
        traj.push(&x, &u, &y);
        next.gemv(1.0, a, &x, 0.0);
        next.gemv(1.0, b, &u, 1.0);
        std::mem::swap(&mut x, &mut next);
    }
    traj.check_finite()?;
    Ok(traj)
}

/// States `ξ[0..=steps]` of `ξ[k+1] = Â ξ[k]`.
pub fn simulate_autonomous(a_hat: &DMatrix<f64>, xi0: &DVector<f64>, steps: usize) -> Result<Vec<DVector<f64>>> {
    linalg::require_square("A_hat", a_hat)?;
    check_x0(a_hat.nrows(), xi0)?;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(xi0.clone());
    for k in 0..steps {
        out.push(a_hat * &out[k]);
    }
    Ok(out)
}

/// Monolithic loop model with the disturbance entering at the plant input:
/// state `[x; x̃]`, matrix `Â`, input `[B; 0]`, output `[C 0]`.
pub fn closed_loop_system(plant: &DiscreteStateSpace, ctrl: &SaniController) -> Result<DiscreteStateSpace> {
    let a_hat = interconnect::close_loop(plant, ctrl)?;
    let (n, nc, p) = (plant.n(), ctrl.realization().n(), plant.p());
    let mut b = DMatrix::zeros(n + nc, p);
    b.view_mut((0, 0), (n, p)).copy_from(plant.b());
    let mut c = DMatrix::zeros(p, n + nc);
    c.view_mut((0, 0), (p, n)).copy_from(plant.c());
    let sys = DiscreteStateSpace::new(a_hat, b, c)?;
    match plant.sample_period() {
        Some(ts) => sys.with_sample_period(ts),
        None => Ok(sys),
    }
}

/// Plant and controller stepped separately and coupled through `ũ = y`,
/// `u = ỹ + w`. The trajectory stores the stacked state `[x; x̃]`, the
/// disturbance `w` and the plant output `y`.
pub fn simulate_coupled(
    plant: &DiscreteStateSpace,
    ctrl: &SaniController,
    disturbance: &Signal,
    xi0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory> {
    check_steps(steps)?;
    let r = ctrl.realization();
    if r.p() != plant.p() {
        return Err(Error::Dimension(format!(
            "plant has {} ports, controller has {}",
            plant.p(),
            r.p()
        )));
    }
    let ts = plant.sample_period();
    disturbance.validate(ts)?;
    let (n, nc, p) = (plant.n(), r.n(), plant.p());
    check_x0(n + nc, xi0)?;
    let mut traj = Trajectory::with_capacity(ts, n + nc, p, p, steps);
    let mut x = xi0.rows(0, n).into_owned();
    let mut xc = xi0.rows(n, nc).into_owned();
    let (mut y, mut yc, mut u, mut w) = (DVector::zeros(p), DVector::zeros(p), DVector::zeros(p), DVector::zeros(p));
    let (mut xn, mut xcn) = (DVector::zeros(n), DVector::zeros(nc));
    let mut stacked = DVector::zeros(n + nc);
    for k in 0..steps {
        w.fill(disturbance.value(k, ts));
        y.gemv(1.0, plant.c(), &x, 0.0);
        yc.gemv(1.0, r.c(), &xc, 0.0);
        yc.gemv(1.0, r.d(), &y, 1.0);
        u.copy_from(&yc);
        u += &w;
        stacked.rows_mut(0, n).copy_from(&x);
        stacked.rows_mut(n, nc).copy_from(&xc);
        traj.push(&stacked, &w, &y);
        xn.gemv(1.0, plant.a(), &x, 0.0);
        xn.gemv(1.0, plant.b(), &u, 1.0);
        xcn.gemv(1.0, r.a(), &xc, 0.0);
        xcn.gemv(1.0, r.b(), &y, 1.0);
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut xc, &mut xcn);
    }
    traj.check_finite()?;
    Ok(traj)
}

/// Response of the closed loop to a unit step disturbance at the plant input,
/// from rest.
pub fn step_disturbance_response(plant: &DiscreteStateSpace, ctrl: &SaniController, steps: usize) -> Result<Trajectory> {
    let cl = closed_loop_system(plant, ctrl)?;
    simulate(&cl, &Signal::unit_step(), &DVector::zeros(cl.n()), steps)
}

/// Frequency response of channel `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrfCurve {
    pub freq_hz: Vec<f64>,
    #[serde(skip)]
    pub response: Vec<Complex64>,
    pub magnitude_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
    /// Grid indices where the response could not be evaluated reliably.
    pub flagged: Vec<usize>,
}

impl FrfCurve {
    fn from_samples(freq_hz: Vec<f64>, samples: Vec<Option<Complex64>>) -> Self {
        let mut flagged = Vec::new();
        let response: Vec<Complex64> = samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.filter(|g| g.is_finite()).unwrap_or_else(|| {
                    flagged.push(i);
                    Complex64::new(f64::NAN, f64::NAN)
                })
            })
            .collect();
        let magnitude_db = response.iter().map(|g| 20.0 * g.norm().log10()).collect();
        let phase_deg = response.iter().map(|g| g.arg().to_degrees()).collect();
        Self {
            freq_hz,
            response,
            magnitude_db,
            phase_deg,
            flagged,
        }
    }

    pub fn len(&self) -> usize {
        self.freq_hz.len()
    }
    pub fn is_empty(&self) -> bool {
        self.freq_hz.is_empty()
    }

    /// Index and value of the largest magnitude, ignoring flagged samples.
    pub fn peak(&self) -> Option<(usize, f64)> {
        self.magnitude_db
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, v)| (i, *v))
    }

    pub fn csv_header() -> Vec<String> {
        ["freq_hz", "re", "im", "mag_db", "phase_deg"].map(String::from).to_vec()
    }

    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                vec![
                    self.freq_hz[i],
                    self.response[i].re,
                    self.response[i].im,
                    self.magnitude_db[i],
                    self.phase_deg[i],
                ]
            })
            .collect()
    }
}

/// `points_per_decade` log-spaced points per decade covering `[f_lo, f_hi]`,
/// both ends included.
pub fn log_grid(f_lo: f64, f_hi: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(f_lo > 0.0 && f_hi > f_lo && f_hi.is_finite()) || points_per_decade == 0 {
        return Err(Error::InvalidInput(format!(
            "log grid needs 0 < f_lo < f_hi (got [{f_lo}, {f_hi}])"
        )));
    }
    let (l0, l1) = (f_lo.log10(), f_hi.log10());
    let count = ((l1 - l0) * points_per_decade as f64).ceil().max(1.0) as usize + 1;
    let step = (l1 - l0) / (count - 1) as f64;
    let mut g: Vec<f64> = (0..count).map(|i| 10f64.powf(l0 + step * i as f64)).collect();
    g[0] = f_lo;
    g[count - 1] = f_hi;
    Ok(g)
}

pub const DEFAULT_POINTS_PER_DECADE: usize = 2000;

fn check_grid(grid: &[f64], ts: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("frequency grid is empty".into()));
    }
    let nyquist = 0.5 / ts;
    if grid.iter().any(|f| !(f.is_finite() && *f >= 0.0 && *f < nyquist)) {
        return Err(Error::InvalidInput(format!(
            "frequency grid must lie in [0, {nyquist}) Hz"
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
    }
    Ok(())
}

fn require_ts(plant: &DiscreteStateSpace) -> Result<f64> {
    plant
        .sample_period()
        .ok_or_else(|| Error::InvalidInput("frequency analysis needs a sample period".into()))
}

fn unit_circle(f: f64, ts: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * f * ts)
}

/// `G(e^{j2πf·Ts})` on the grid.
pub fn frf(sys: &DiscreteStateSpace, grid: &[f64]) -> Result<FrfCurve> {
    let ts = require_ts(sys)?;
    check_grid(grid, ts)?;
    let samples = grid
        .par_iter()
        .map(|&f| sys.eval_transfer(unit_circle(f, ts)).ok().map(|g| g[(0, 0)]))
        .collect();
    Ok(FrfCurve::from_samples(grid.to_vec(), samples))
}

/// Relative singularity threshold on `I − F(z)G(z)`.
pub const LOOP_SINGULAR_RTOL: f64 = 1e-12;

fn closed_loop_sample(plant: &DiscreteStateSpace, ctrl: &FeedthroughStateSpace, z: Complex64) -> Option<DMatrix<Complex64>> {
    let g = plant.eval_transfer(z).ok()?;
    let f = ctrl.eval_transfer(z).ok()?;
    let p = g.nrows();
    let m = DMatrix::<Complex64>::identity(p, p) - &f * &g;
    if !m.iter().all(|v| v.is_finite()) {
        return None;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let (lo, hi) = (sv.min(), sv.max());
    if !(lo > LOOP_SINGULAR_RTOL * hi.max(1.0)) {
        return None;
    }
    // G (I − FG)⁻¹ = ((I − FG)ᵀ)⁻¹ Gᵀ transposed
    let x = m.transpose().lu().solve(&g.transpose())?;
    Some(x.transpose())
}

/// Disturbance-to-output response `G (I − F G)⁻¹` of the positive-feedback loop.
pub fn closed_loop_frf(plant: &DiscreteStateSpace, ctrl: &SaniController, grid: &[f64]) -> Result<FrfCurve> {
    let ts = require_ts(plant)?;
    check_grid(grid, ts)?;
    if ctrl.p() != plant.p() {
        return Err(Error::Dimension(format!(
            "plant has {} ports, controller has {}",
            plant.p(),
            ctrl.p()
        )));
    }
    let r = ctrl.realization();
    let samples = grid
        .par_iter()
        .map(|&f| closed_loop_sample(plant, r, unit_circle(f, ts)).map(|g| g[(0, 0)]))
        .collect();
    Ok(FrfCurve::from_samples(grid.to_vec(), samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DampingReport {
    pub open_peak_db: f64,
    pub open_peak_hz: f64,
    pub closed_peak_db: f64,
    pub closed_peak_hz: f64,
    pub reduction_db: f64,
}

/// Golden-section termination width.
pub const PEAK_TOL_HZ: f64 = 1e-3;

fn refine_peak(mag: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (mag(x1), mag(x2));
    while hi - lo > PEAK_TOL_HZ {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = mag(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = mag(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

fn locate_peak(curve: &FrfCurve, mag: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    let (i, grid_db) = curve
        .peak()
        .ok_or_else(|| Error::Numerical("no finite response samples in band".into()))?;
    let lo = curve.freq_hz[i.saturating_sub(1)];
    let hi = curve.freq_hz[(i + 1).min(curve.len() - 1)];
    let (f, db) = refine_peak(mag, lo, hi);
    // keep the grid sample if refinement found nothing better
    Ok(if db.is_finite() && db >= grid_db {
        (f, db)
    } else {
        (curve.freq_hz[i], grid_db)
    })
}

fn band_grid(band: (f64, f64), ts: f64) -> Result<Vec<f64>> {
    let (lo, hi) = band;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidInput(format!("empty search band [{lo}, {hi}] Hz")));
    }
    let g = log_grid(lo, hi, DEFAULT_POINTS_PER_DECADE)?;
    check_grid(&g, ts)?;
    Ok(g)
}

/// Peak magnitudes of the open and closed loop inside `band` (Hz).
pub fn damping_report(plant: &DiscreteStateSpace, ctrl: &SaniController, band: (f64, f64)) -> Result<DampingReport> {
    let ts = require_ts(plant)?;
    let grid = band_grid(band, ts)?;
    let open = frf(plant, &grid)?;
    let closed = closed_loop_frf(plant, ctrl, &grid)?;
    let db = |g: Option<Complex64>| g.map_or(f64::NAN, |g| 20.0 * g.norm().log10());
    let (open_peak_hz, open_peak_db) = locate_peak(&open, |f| {
        db(plant.eval_transfer(unit_circle(f, ts)).ok().map(|g| g[(0, 0)]))
    })?;
    let (closed_peak_hz, closed_peak_db) = locate_peak(&closed, |f| {
        db(closed_loop_sample(plant, ctrl.realization(), unit_circle(f, ts)).map(|g| g[(0, 0)]))
    })?;
    Ok(DampingReport {
        open_peak_db,
        open_peak_hz,
        closed_peak_db,
        closed_peak_hz,
        reduction_db: open_peak_db - closed_peak_db,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub gamma: f64,
    pub admissible: bool,
    pub certified: bool,
    pub spectral_radius: Option<f64>,
    pub report: Option<DampingReport>,
    pub reason: Option<String>,
}

/// One entry per `Γ = γI`. Entries outside `0 < γ`, `−2Γ⁻¹ ≺ D` are kept and
/// marked inadmissible.
pub fn gamma_sweep(
    plant: &DiscreteStateSpace,
    cert: &NiCertificate,
    d: &DMatrix<f64>,
    gammas: &[f64],
    band: (f64, f64),
) -> Result<Vec<SweepEntry>> {
    let p = plant.p();
    gammas
        .iter()
        .map(|&gamma| {
            let inadmissible = |reason: String| SweepEntry {
                gamma,
                admissible: false,
                certified: false,
                spectral_radius: None,
                report: None,
                reason: Some(reason),
            };
            let params = match IrcParams::new(DMatrix::identity(p, p) * gamma, d.clone()) {
                Ok(params) => params,
                Err(e) => return Ok(inadmissible(e.to_string())),
            };
            if !params.is_stabilizing() {
                return Ok(inadmissible(format!(
                    "D + 2Γ⁻¹ is not positive definite (λ_min = {:e})",
                    params.admissibility_margin()
                )));
            }
            let cl = interconnect::certify_closed_loop(plant, cert, &params, interconnect::DEFAULT_TOL)?;
            let report = damping_report(plant, &build_irc(&params), band)?;
            Ok(SweepEntry {
                gamma,
                admissible: true,
                certified: cl.accepted,
                spectral_radius: Some(cl.spectral_radius),
                report: Some(report),
                reason: (!cl.accepted).then(|| "closed-loop certificate rejected".to_string()),
            })
        })
        .collect()
}
