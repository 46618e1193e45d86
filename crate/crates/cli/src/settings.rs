//! Command-line flags, the optional JSON config file, and their merge.

use std::path::{Path, PathBuf};

use clap::Args;
use nalgebra::DMatrix;
use ni_irc::io::matrix_from_rows;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON file supplying any of these flags; command-line values take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Discrete plant model (JSON with n, p, A, B, C, sample_period).
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Continuous modal plant spec (JSON), sampled with --ts.
    #[arg(long, value_name = "FILE")]
    pub modal: Option<PathBuf>,
    /// Literal DC gain G(1), e.g. '[[1.0]]' or '1.0'.
    #[arg(long, value_name = "MATRIX", allow_hyphen_values = true)]
    pub g1: Option<String>,
    /// IRC parameters (JSON with Gamma and D).
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    /// Candidate storage matrix P or an NI certificate (JSON).
    #[arg(long, value_name = "FILE")]
    pub cert: Option<PathBuf>,
    /// Synthesis margin: D = -(G(1) + delta I).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Synthesis fraction: Gamma = beta (-2 D^-1).
    #[arg(long)]
    pub beta: Option<f64>,
    /// Sample period in seconds.
    #[arg(long)]
    pub ts: Option<f64>,
    /// Frequency band in Hz as 'lo,hi'.
    #[arg(long, value_name = "LO,HI")]
    pub band: Option<String>,
    /// Comma-separated Gamma values for the damping sweep.
    #[arg(long, value_name = "LIST")]
    pub gammas: Option<String>,
    /// Number of simulation steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Certificate tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Seed recorded for reproducibility; every algorithm here is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Config-file form of [`Flags`]. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: Option<PathBuf>,
    modal: Option<PathBuf>,
    g1: Option<serde_json::Value>,
    params: Option<PathBuf>,
    cert: Option<PathBuf>,
    delta: Option<f64>,
    beta: Option<f64>,
    ts: Option<f64>,
    band: Option<(f64, f64)>,
    gammas: Option<Vec<f64>>,
    steps: Option<usize>,
    out: Option<PathBuf>,
    tol: Option<f64>,
    seed: Option<u64>,
}

/// Flags after merging with the config file and parsing the literal values.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub model: Option<PathBuf>,
    pub modal: Option<PathBuf>,
    pub g1: Option<DMatrix<f64>>,
    pub params: Option<PathBuf>,
    pub cert: Option<PathBuf>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
    pub ts: Option<f64>,
    pub band: Option<(f64, f64)>,
    pub gammas: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub out: PathBuf,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn parse_matrix(value: &serde_json::Value) -> Result<DMatrix<f64>, CliError> {
    if let Some(x) = value.as_f64() {
        return Ok(DMatrix::from_element(1, 1, x));
    }
    let rows: Vec<Vec<f64>> = serde_json::from_value(value.clone())
        .map_err(|e| input(format!("G(1) must be a number or nested array: {e}")))?;
    matrix_from_rows(&rows).map_err(|e| input(format!("G(1): {e}")))
}

fn parse_g1(text: &str) -> Result<DMatrix<f64>, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| input(format!("cannot parse --g1 '{text}': {e}")))?;
    parse_matrix(&value)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| input(format!("cannot parse {what} entry '{s}'")))
        })
        .collect()
}

fn parse_band(text: &str) -> Result<(f64, f64), CliError> {
    match parse_list(text, "--band")?.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(input(format!("--band takes two values 'lo,hi', got '{text}'"))),
    }
}

fn rebase(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl Flags {
    pub fn resolve(self) -> Result<Settings, CliError> {
        let cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
                let cfg: ConfigFile = serde_json::from_str(&text)
                    .map_err(|e| input(format!("config {}: {e}", path.display())))?;
                let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
                ConfigFile {
                    model: cfg.model.map(|p| rebase(&base, p)),
                    modal: cfg.modal.map(|p| rebase(&base, p)),
                    params: cfg.params.map(|p| rebase(&base, p)),
                    cert: cfg.cert.map(|p| rebase(&base, p)),
                    out: cfg.out.map(|p| rebase(&base, p)),
                    ..cfg
                }
            }
            None => ConfigFile::default(),
        };
        let g1 = match (&self.g1, &cfg.g1) {
            (Some(text), _) => Some(parse_g1(text)?),
            (None, Some(value)) => Some(parse_matrix(value)?),
            (None, None) => None,
        };
        let band = match &self.band {
            Some(text) => Some(parse_band(text)?),
            None => cfg.band,
        };
        let gammas = match &self.gammas {
            Some(text) => Some(parse_list(text, "--gammas")?),
            None => cfg.gammas,
        };
        Ok(Settings {
            model: self.model.or(cfg.model),
            modal: self.modal.or(cfg.modal),
            g1,
            params: self.params.or(cfg.params),
            cert: self.cert.or(cfg.cert),
            delta: self.delta.or(cfg.delta),
            beta: self.beta.or(cfg.beta),
            ts: self.ts.or(cfg.ts),
            band,
            gammas,
            steps: self.steps.or(cfg.steps),
            out: self.out.or(cfg.out).unwrap_or_else(|| PathBuf::from(".")),
            tol: self.tol.or(cfg.tol),
            seed: self.seed.or(cfg.seed),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g1_literals() {
        assert_eq!(parse_g1("1.5").unwrap()[(0, 0)], 1.5);
        assert_eq!(parse_g1("[[-1]]").unwrap()[(0, 0)], -1.0);
        assert_eq!(parse_g1("[[1, 0], [0, 2]]").unwrap()[(1, 1)], 2.0);
        assert!(parse_g1("[[1, 0], [0]]").is_err());
        assert!(parse_g1("abc").is_err());
    }

    #[test]
    fn band_parsing() {
        assert_eq!(parse_band("10e3,20e3").unwrap(), (10e3, 20e3));
        assert!(parse_band("1").is_err());
    }

    #[test]
    fn command_line_wins_over_config() {
        let dir = std::env::temp_dir().join(format!("ni-irc-settings-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("cfg.json");
        std::fs::write(&cfg, r#"{"delta": 5.0, "beta": 0.25, "model": "plant.json", "band": [1.0, 2.0]}"#).unwrap();
        let flags = Flags {
            config: Some(cfg),
            delta: Some(1.0),
            ..Flags::default()
        };
        let s = flags.resolve().unwrap();
        assert_eq!(s.delta, Some(1.0));
        assert_eq!(s.beta, Some(0.25));
        assert_eq!(s.band, Some((1.0, 2.0)));
        assert_eq!(s.model.unwrap(), dir.join("plant.json"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("ni-irc-settings-unknown-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("cfg.json");
        std::fs::write(&cfg, r#"{"detla": 5.0}"#).unwrap();
        let flags = Flags { config: Some(cfg), ..Flags::default() };
        assert!(flags.resolve().is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
