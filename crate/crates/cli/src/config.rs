//! Run configuration: JSON schema, validation, and state construction.

use ksnbody::dynamics::{energy_constant, ingest_bodies, RegState, ThreeBodyParams};
use ksnbody::quat::{PairState, Quaternion, Vec3};
use serde::{Deserialize, Serialize};

/// Why the initial state could not be built; collisions map to a different
/// exit code than config mistakes.
#[derive(Debug)]
pub enum BuildError {
    Invalid(String),
    Collision(String),
}

impl std::fmt::Display for BuildError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BuildError::Invalid(msg) => write!(f, "invalid config: {msg}"),
            BuildError::Collision(msg) => write!(f, "collision: {msg}"),
        }
    }
}

fn from_core(e: ksnbody::Error) -> BuildError {
    match e {
        ksnbody::Error::CollisionPoint(msg) => BuildError::Collision(msg),
        other => BuildError::Invalid(other.to_string()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub masses: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bodies: Option<Bodies>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<PairIc>>,
    #[serde(default = "default_h")]
    pub h: EnergyConstant,
    pub integrator: Integrator,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bodies {
    pub positions: [[f64; 3]; 3],
    pub velocities: [[f64; 3]; 3],
}

/// One pair given directly in regularised coordinates.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairIc {
    pub q: [f64; 4],
    pub p: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnergyConstant {
    Auto(String),
    Value(f64),
}

fn default_h() -> EnergyConstant {
    EnergyConstant::Auto("auto".to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    pub method: String,
    pub ds: f64,
    pub s_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Canonical,
    Lax,
    Both,
}

impl RunConfig {
    /// Validate and build the initial regularised state.
    pub fn build_state(&self) -> Result<RegState, BuildError> {
        let invalid = |msg: String| Err(BuildError::Invalid(msg));
        if self.masses.len() != 3 {
            return invalid(format!("expected 3 masses, got {}", self.masses.len()));
        }
        if self.masses.iter().any(|&m| !m.is_finite() || m <= 0.0) {
            return invalid("masses must all be positive".to_string());
        }
        let masses = [self.masses[0], self.masses[1], self.masses[2]];
        if !(self.integrator.ds > 0.0 && self.integrator.s_end > 0.0) {
            return invalid("integrator ds and s_end must be positive".to_string());
        }
        if self.integrator.method != "rk4" {
            return invalid(format!(
                "unknown integrator method '{}' (only rk4 is implemented)",
                self.integrator.method
            ));
        }
        if let EnergyConstant::Auto(word) = &self.h {
            if word != "auto" {
                return invalid(format!("h must be a number or \"auto\", got \"{word}\""));
            }
        }

        let state = match (&self.bodies, &self.pairs) {
            (Some(bodies), None) => {
                let positions: [Vec3; 3] =
                    std::array::from_fn(|i| Vec3::from_row_slice(&bodies.positions[i]));
                let velocities: [Vec3; 3] =
                    std::array::from_fn(|i| Vec3::from_row_slice(&bodies.velocities[i]));
                ingest_bodies(&positions, &velocities, &masses).map_err(from_core)?
            }
            (None, Some(pairs)) => {
                if pairs.len() != 3 {
                    return invalid(format!("expected 3 pairs, got {}", pairs.len()));
                }
                let ks: [PairState; 3] = std::array::from_fn(|i| {
                    PairState::new(
                        Quaternion::from_array(&pairs[i].q),
                        Quaternion::from_array(&pairs[i].p),
                    )
                });
                let h = energy_constant(&ks, &masses).map_err(from_core)?;
                RegState::new(ks, ThreeBodyParams::new(masses, h))
            }
            (Some(_), Some(_)) => {
                return invalid("give either bodies or pairs, not both".to_string());
            }
            (None, None) => {
                return invalid("one of bodies or pairs is required".to_string());
            }
        };

        Ok(match self.h {
            EnergyConstant::Value(h) => RegState::new(state.pairs, ThreeBodyParams::new(masses, h)),
            EnergyConstant::Auto(_) => state,
        })
    }
}
