//! Zero-order-hold sampling and collocated modal plants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::state_space::{ContinuousStateSpace, DiscreteStateSpace};

/// One lightly damped resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub freq_hz: f64,
    pub zeta: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalSpec {
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub dc_normalization: Option<f64>,
}

impl ModalSpec {
    pub fn single(freq_hz: f64, zeta: f64, dc_normalization: Option<f64>) -> Self {
        ModalSpec {
            modes: vec![Mode { freq_hz, zeta, gain: 1.0 }],
            dc_normalization,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::InvalidInput("modal spec has no modes".into()));
        }
        let mut prev = 0.0;
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.freq_hz.is_finite() && m.freq_hz > prev) {
                return Err(Error::InvalidInput(format!(
                    "mode {i}: frequencies must be positive and strictly increasing (got {})",
                    m.freq_hz
                )));
            }
            if !(m.zeta > 0.0 && m.zeta < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "mode {i}: damping ratio must lie in (0, 1) (got {})",
                    m.zeta
                )));
            }
            if !(m.gain.is_finite() && m.gain > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "mode {i}: gain must be positive (got {})",
                    m.gain
                )));
            }
            prev = m.freq_hz;
        }
        if let Some(t) = self.dc_normalization {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "dc_normalization must be positive (got {t})"
                )));
            }
        }
        Ok(())
    }
}

/// Block-diagonal force-to-position realization, one `[[0,1],[−ω²,−2ζω]]` block per
/// mode with input `[0; g]` and output `[g, 0]`.
pub fn build_modal_plant(spec: &ModalSpec) -> Result<ContinuousStateSpace> {
    spec.validate()?;
    let n = 2 * spec.modes.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, 1);
    let mut c = DMatrix::zeros(1, n);
    let mut g0 = 0.0;
    for (i, m) in spec.modes.iter().enumerate() {
        let w = 2.0 * std::f64::consts::PI * m.freq_hz;
        let k = 2 * i;
        a[(k, k + 1)] = 1.0;
        a[(k + 1, k)] = -w * w;
        a[(k + 1, k + 1)] = -2.0 * m.zeta * w;
        b[(k + 1, 0)] = m.gain;
        c[(0, k)] = m.gain;
        g0 += m.gain * m.gain / (w * w);
    }
    if let Some(target) = spec.dc_normalization {
        let s = (target / g0).sqrt();
        b *= s;
        c *= s;
    }
    ContinuousStateSpace::new(a, b, c, DMatrix::zeros(1, 1))
}

/// Samples `sys` with a zero-order hold of period `ts`.
pub fn zoh_sample(sys: &ContinuousStateSpace, ts: f64) -> Result<DiscreteStateSpace> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::InvalidInput(format!("sample period must be positive (got {ts})")));
    }
    if sys.d().amax() != 0.0 {
        return Err(Error::Precondition(
            "ZOH sampling to a strictly proper model requires D = 0".into(),
        ));
    }
    let (n, m) = (sys.n(), sys.b().ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(sys.a() * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(sys.b() * ts));
    let e = linalg::expm(&aug);
    let ad = e.view((0, 0), (n, n)).into_owned();
    let bd = e.view((0, n), (n, m)).into_owned();
    DiscreteStateSpace::new(ad, bd, sys.c().clone())?.with_sample_period(ts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn integrator_is_exact() {
        let sys = ContinuousStateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let d = zoh_sample(&sys, 0.1).unwrap();
        assert!((d.a()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.b()[(0, 0)] - 0.1).abs() < 1e-15);
        assert_eq!(d.sample_period(), Some(0.1));
    }

    #[test]
    fn first_order_lag_closed_form() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        for ts in [1e-3, 0.1, 0.7, 2.0] {
            let d = zoh_sample(&sys, ts).unwrap();
            assert!((d.a()[(0, 0)] - (-ts).exp()).abs() < 1e-14);
            assert!((d.b()[(0, 0)] - (-(-ts).exp_m1())).abs() < 1e-14);
        }
    }

    #[test]
    fn normalized_single_mode() {
        let spec = ModalSpec::single(14860.0, 0.005, Some(1.0));
        let sys = build_modal_plant(&spec).unwrap();
        let w = 2.0 * PI * 14860.0;
        assert!((sys.dc_gain().unwrap()[(0, 0)] - 1.0).abs() < 1e-12);
        // g² = ω²
        assert!((sys.b()[(1, 0)] * sys.c()[(0, 0)] - w * w).abs() < 1e-6 * w * w);
    }

    #[test]
    fn unnormalized_dc_is_sum_of_modes() {
        let spec = ModalSpec {
            modes: vec![
                Mode { freq_hz: 100.0, zeta: 0.01, gain: 2.0 },
                Mode { freq_hz: 300.0, zeta: 0.02, gain: 2.0 },
            ],
            dc_normalization: None,
        };
        let sys = build_modal_plant(&spec).unwrap();
        let expect: f64 = [100.0f64, 300.0].iter().map(|f| 4.0 / (2.0 * PI * f).powi(2)).sum();
        assert!((sys.dc_gain().unwrap()[(0, 0)] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn spec_violations() {
        let bad = |modes: Vec<Mode>| ModalSpec { modes, dc_normalization: None }.validate().is_err();
        assert!(bad(vec![]));
        assert!(bad(vec![Mode { freq_hz: 10.0, zeta: 1.0, gain: 1.0 }]));
        assert!(bad(vec![Mode { freq_hz: 10.0, zeta: 0.1, gain: -1.0 }]));
        assert!(bad(vec![
            Mode { freq_hz: 10.0, zeta: 0.1, gain: 1.0 },
            Mode { freq_hz: 10.0, zeta: 0.1, gain: 1.0 },
        ]));
    }

    #[test]
    fn feedthrough_is_rejected() {
        let sys = ContinuousStateSpace::new(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap();
        assert!(zoh_sample(&sys, 0.1).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let json = r#"{"modes":[{"freq_hz":14860.0,"zeta":0.005,"gain":1.0}],"dc_normalization":null}"#;
        let spec: ModalSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec, ModalSpec::single(14860.0, 0.005, None));
    }
}
