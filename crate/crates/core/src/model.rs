use serde::{Deserialize, Serialize};

use crate::coefficients::{ModelParams, RepeatedCoefficients};
use crate::error::{RcmError, Result};

/// A repeated-coefficients model: parameters plus the multiset `{δ_ω}`,
/// with `N = 2^d` enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct RcmModel {
    params: ModelParams,
    coeffs: RepeatedCoefficients,
}

impl RcmModel {
    pub fn new(params: ModelParams, coeffs: RepeatedCoefficients) -> Result<Self> {
        if coeffs.len() != params.n() {
            return Err(RcmError::InvalidModel(format!(
                "d = {} needs N = {} coefficients, got {}",
                params.d(),
                params.n(),
                coeffs.len()
            )));
        }
        Ok(Self { params, coeffs })
    }

    pub fn from_deltas(d: u32, alpha: f64, f: f64, deltas: Vec<f64>) -> Result<Self> {
        Self::new(ModelParams::new(d, alpha, f)?, RepeatedCoefficients::new(deltas)?)
    }

    pub fn flat(d: u32, alpha: f64, f: f64) -> Result<Self> {
        let params = ModelParams::new(d, alpha, f)?;
        Self::new(params, RepeatedCoefficients::flat(params.n(), 1.0)?)
    }

    /// `d = 3` model with `log2 δ_i = λ i`.
    pub fn lambda_family(lambda: f64, alpha: f64, f: f64) -> Result<Self> {
        Self::new(
            ModelParams::new(3, alpha, f)?,
            RepeatedCoefficients::lambda_family(lambda)?,
        )
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn coeffs(&self) -> &RepeatedCoefficients {
        &self.coeffs
    }

    pub fn d(&self) -> u32 {
        self.params.d()
    }

    pub fn df(&self) -> f64 {
        self.params.d() as f64
    }

    pub fn n(&self) -> usize {
        self.params.n()
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha()
    }

    pub fn f(&self) -> f64 {
        self.params.f()
    }

    pub fn is_flat(&self) -> bool {
        self.coeffs.is_flat()
    }

    /// Coefficient attached to child label `k` (1-based).
    pub fn delta(&self, k: u8) -> f64 {
        self.coeffs.deltas()[k as usize - 1]
    }

    pub fn log2_delta(&self, k: u8) -> f64 {
        self.coeffs.log2_deltas()[k as usize - 1]
    }

    pub fn ell(&self, s: f64) -> f64 {
        self.coeffs.ell(s)
    }

    pub fn phi(&self, gamma: f64) -> f64 {
        self.coeffs.phi(gamma)
    }
}

/// Serialized model description.
///
/// Exactly one of `deltas` and `lambda` must be given; `lambda` implies `d = 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub d: u32,
    pub alpha: f64,
    #[serde(default = "default_forcing")]
    pub f: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn default_forcing() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build(&self) -> Result<RcmModel> {
        match (&self.deltas, self.lambda) {
            (Some(deltas), None) => RcmModel::from_deltas(self.d, self.alpha, self.f, deltas.clone()),
            (None, Some(lambda)) => {
                if self.d != 3 {
                    return Err(RcmError::InvalidModel(
                        "the lambda family is defined for d = 3".into(),
                    ));
                }
                RcmModel::lambda_family(lambda, self.alpha, self.f)
            }
            (None, None) => RcmModel::flat(self.d, self.alpha, self.f),
            (Some(_), Some(_)) => Err(RcmError::InvalidModel(
                "give either deltas or lambda, not both".into(),
            )),
        }
    }
}

impl From<&RcmModel> for ModelSpec {
    fn from(m: &RcmModel) -> Self {
        Self {
            d: m.d(),
            alpha: m.alpha(),
            f: m.f(),
            deltas: Some(m.coeffs().deltas().to_vec()),
            lambda: None,
        }
    }
}
