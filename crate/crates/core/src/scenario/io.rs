//! TOML files for game specs and scenario configs. Field names carry SI units.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameSpec, LinkCoefficients, LinkSpec, SuccessModel};

use super::ScenarioConfig;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    links: Vec<LinkRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkRecord {
    alpha: f64,
    phi: f64,
    beta: Vec<f64>,
    sigma2_w: f64,
    delta: f64,
    lambda: f64,
    rate_bps: f64,
    p_max_w: f64,
    p_c_w: f64,
    theta: f64,
    rho_j_per_s: f64,
}

impl From<&LinkSpec> for LinkRecord {
    fn from(l: &LinkSpec) -> Self {
        Self {
            alpha: l.coeffs.alpha,
            phi: l.coeffs.phi,
            beta: l.coeffs.beta.clone(),
            sigma2_w: l.coeffs.sigma2,
            delta: l.success.delta,
            lambda: l.success.lambda,
            rate_bps: l.success.rate,
            p_max_w: l.p_max,
            p_c_w: l.p_c,
            theta: l.theta,
            rho_j_per_s: l.rho,
        }
    }
}

impl From<LinkRecord> for LinkSpec {
    fn from(r: LinkRecord) -> Self {
        LinkSpec {
            coeffs: LinkCoefficients {
                alpha: r.alpha,
                phi: r.phi,
                beta: r.beta,
                sigma2: r.sigma2_w,
            },
            success: SuccessModel {
                delta: r.delta,
                lambda: r.lambda,
                rate: r.rate_bps,
            },
            p_max: r.p_max_w,
            p_c: r.p_c_w,
            theta: r.theta,
            rho: r.rho_j_per_s,
        }
    }
}

/// Parses and validates a game spec.
pub fn parse_spec(text: &str) -> Result<GameSpec> {
    let file: SpecFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    GameSpec::new(file.links.into_iter().map(LinkSpec::from).collect())
}

pub fn spec_to_toml(spec: &GameSpec) -> String {
    let file = SpecFile {
        links: spec.links.iter().map(LinkRecord::from).collect(),
    };
    toml::to_string(&file).expect("spec records always serialize")
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<GameSpec> {
    parse_spec(&read(path.as_ref())?)
}

pub fn save_spec(path: impl AsRef<Path>, spec: &GameSpec) -> Result<()> {
    write(path.as_ref(), &spec_to_toml(spec))
}

/// Parses and validates a scenario config; omitted fields take their defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn config_to_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    parse_config(&read(path.as_ref())?)
}

pub fn save_config(path: impl AsRef<Path>, cfg: &ScenarioConfig) -> Result<()> {
    write(path.as_ref(), &config_to_toml(cfg)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
