//! One-dimensional spectral weight maps `r(λ)`.
//!
//! A Laplacian kernel shares the Laplacian's eigenvectors and replaces each
//! eigenvalue `λ` by `1 / r(λ)`; equivalently its inverse is `r(L)`. Maps
//! that grow with `λ` penalise high graph frequencies.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_sigma2() -> f64 {
    1.0
}

fn default_beta() -> f64 {
    100.0
}

/// Family of spectral weight maps.
///
/// Serialises as `{"family": "diffusion", "sigma2": 1.8}` and similar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SpectralMap {
    /// `r(λ) = exp(σ²λ/2)`.
    Diffusion { sigma2: f64 },
    /// `r(λ) = (a − λ)^(−p)`; requires `a` above the largest eigenvalue.
    PStepRandomWalk { a: f64, p: u32 },
    /// `r(λ) = 1 + σ²λ`.
    RegularizedLaplacian {
        #[serde(default = "default_sigma2")]
        sigma2: f64,
    },
    /// `r(λ) = 1/β` for `λ ≤ λ_max`, `β` otherwise.
    Bandlimited {
        #[serde(default = "default_beta")]
        beta: f64,
        lambda_max: f64,
    },
    /// `r(λ) = λ + ε`.
    ShiftedIdentity { epsilon: f64 },
}

impl SpectralMap {
    pub fn diffusion(sigma2: f64) -> Self {
        SpectralMap::Diffusion { sigma2 }
    }

    pub fn regularized_laplacian(sigma2: f64) -> Self {
        SpectralMap::RegularizedLaplacian { sigma2 }
    }

    pub fn shifted_identity(epsilon: f64) -> Self {
        SpectralMap::ShiftedIdentity { epsilon }
    }

    /// Checks the parameter ranges of the family.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(format!("spectral map: {msg}")));
        match *self {
            SpectralMap::Diffusion { sigma2 } if !(sigma2 >= 0.0 && sigma2.is_finite()) => {
                bad(format!("diffusion sigma2 must be >= 0, got {sigma2}"))
            }
            SpectralMap::PStepRandomWalk { a, p } if !(a >= 2.0 && a.is_finite()) || p == 0 => {
                bad(format!("random walk needs a >= 2 and p >= 1, got a={a}, p={p}"))
            }
            SpectralMap::RegularizedLaplacian { sigma2 } if !(sigma2 > 0.0 && sigma2.is_finite()) => {
                bad(format!("regularized laplacian sigma2 must be > 0, got {sigma2}"))
            }
            SpectralMap::Bandlimited { beta, lambda_max }
                if !(beta > 0.0 && beta.is_finite()) || !(lambda_max >= 0.0) =>
            {
                bad(format!("bandlimited needs beta > 0 and lambda_max >= 0, got beta={beta}, lambda_max={lambda_max}"))
            }
            SpectralMap::ShiftedIdentity { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                bad(format!("shifted identity epsilon must be > 0, got {epsilon}"))
            }
            _ => Ok(()),
        }
    }

    /// Raw map value; may be non-positive outside the family's domain.
    pub fn eval(&self, lambda: f64) -> f64 {
        match *self {
            SpectralMap::Diffusion { sigma2 } => (sigma2 * lambda / 2.0).exp(),
            SpectralMap::PStepRandomWalk { a, p } => (a - lambda).powi(-(p as i32)),
            SpectralMap::RegularizedLaplacian { sigma2 } => 1.0 + sigma2 * lambda,
            SpectralMap::Bandlimited { beta, lambda_max } => {
                if lambda <= lambda_max {
                    1.0 / beta
                } else {
                    beta
                }
            }
            SpectralMap::ShiftedIdentity { epsilon } => lambda + epsilon,
        }
    }

    /// Map value, rejecting anything that is not strictly positive and finite.
    pub fn try_eval(&self, lambda: f64) -> Result<f64> {
        if let SpectralMap::PStepRandomWalk { a, .. } = *self {
            if lambda >= a {
                return Err(Error::Invalid(format!(
                    "random walk map needs a > every eigenvalue; got a={a}, eigenvalue {lambda}"
                )));
            }
        }
        let r = self.eval(lambda);
        if r > 0.0 && r.is_finite() {
            Ok(r)
        } else {
            Err(Error::Invalid(format!("spectral map {self:?} gives {r} at eigenvalue {lambda}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_at_zero_for_every_family() {
        let maps = [
            SpectralMap::diffusion(0.0),
            SpectralMap::diffusion(3.0),
            SpectralMap::PStepRandomWalk { a: 2.0, p: 3 },
            SpectralMap::regularized_laplacian(1.0),
            SpectralMap::Bandlimited { beta: 100.0, lambda_max: 0.5 },
            SpectralMap::shifted_identity(1e-3),
        ];
        for m in maps {
            m.validate().unwrap();
            assert!(m.try_eval(0.0).unwrap() > 0.0, "{m:?}");
            assert!(m.try_eval(1.5).unwrap() > 0.0, "{m:?}");
        }
    }

    #[test]
    fn bandlimited_pass_and_stop_band() {
        let m = SpectralMap::Bandlimited { beta: 100.0, lambda_max: 1.0 };
        assert_eq!(m.eval(1.0), 0.01);
        assert_eq!(m.eval(1.0001), 100.0);
    }

    #[test]
    fn random_walk_outside_domain_is_rejected() {
        let m = SpectralMap::PStepRandomWalk { a: 2.0, p: 2 };
        assert!(m.try_eval(2.5).is_err());
    }

    #[test]
    fn json_shape_and_defaults() {
        let m: SpectralMap = serde_json::from_str(r#"{"family":"diffusion","sigma2":1.8}"#).unwrap();
        assert_eq!(m, SpectralMap::diffusion(1.8));
        let b: SpectralMap = serde_json::from_str(r#"{"family":"bandlimited","lambda_max":2.0}"#).unwrap();
        assert_eq!(b, SpectralMap::Bandlimited { beta: 100.0, lambda_max: 2.0 });
        let r: SpectralMap = serde_json::from_str(r#"{"family":"regularized-laplacian"}"#).unwrap();
        assert_eq!(r, SpectralMap::regularized_laplacian(1.0));
        assert!(serde_json::from_str::<SpectralMap>(r#"{"family":"nope"}"#).is_err());
    }

    #[test]
    fn invalid_parameters() {
        assert!(SpectralMap::diffusion(-1.0).validate().is_err());
        assert!(SpectralMap::shifted_identity(0.0).validate().is_err());
        assert!(SpectralMap::PStepRandomWalk { a: 1.0, p: 1 }.validate().is_err());
        assert!(SpectralMap::PStepRandomWalk { a: 3.0, p: 0 }.validate().is_err());
    }
}
