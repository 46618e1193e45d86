//! Discrete-time integral resonant control for negative-imaginary plants.
//!
//! ```
//! use ni_irc::{certify_closed_loop, close_loop, build_irc, verify_candidate, DiscreteStateSpace, IrcParams};
//! use nalgebra::DMatrix;
//!
//! let plant = DiscreteStateSpace::scalar(0.5, 1.0, 0.5);
//! let cert = verify_candidate(&plant, &DMatrix::from_element(1, 1, 0.25), 1e-9)
//!     .unwrap()
//!     .into_certificate()
//!     .unwrap();
//! let params = IrcParams::scalar(0.01, -3.0).unwrap();
//!
//! let a_hat = close_loop(&plant, &build_irc(&params)).unwrap();
//! assert!((a_hat[(0, 1)] - 0.97).abs() < 1e-15);
//!
//! let cl = certify_closed_loop(&plant, &cert, &params, 1e-9).unwrap();
//! assert!(cl.accepted);
//! assert!((cl.spectral_radius - 0.9802).abs() < 1e-4);
//! ```

// NaN must fail every acceptance test, hence `!(x <= tol)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demo;
pub mod discretize;
pub mod error;
pub mod interconnect;
pub mod io;
pub mod irc;
pub mod linalg;
pub mod ni_cert;
pub mod sim;
pub mod state_space;

pub use discretize::{build_modal_plant, zoh_sample, ModalSpec, Mode};
pub use error::{Error, Result};
pub use interconnect::{certify_closed_loop, close_loop, decomposition_check, lyapunov_decrement_trace, ClosedLoopCertificate};
pub use irc::{build_irc, synthesize_params, IrcParams, SaniController, SynthesisOptions};
pub use ni_cert::{find_certificate, verify_candidate, NiCertificate, SearchOptions, SearchOutcome};
pub use sim::{closed_loop_frf, damping_report, frf, gamma_sweep, simulate, DampingReport, FrfCurve, Signal, Trajectory};
pub use state_space::{ContinuousStateSpace, DiscreteStateSpace, FeedthroughStateSpace};
