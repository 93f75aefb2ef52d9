//! Coefficient schemes and the scalar functions `ℓ_s` and `φ(γ)` built on them.
//!
//! All sums over the multiset `{δ_ω}` are done with a max-shifted base-2
//! log-sum-exp so that exponents of a few hundred are harmless.

use std::sync::Arc;

use crate::error::{domain, RcmError, Result};
use crate::numeric::log2_sum_exp2;
use crate::tree::TreeIndex;

/// Below this `|s|`, `ℓ_s` is replaced by `ℓ_0` (removable singularity).
const ELL_ZERO_CUTOFF: f64 = 1e-8;

/// Dimension, cascade exponent and forcing. `N = 2^d` is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    d: u32,
    alpha: f64,
    f: f64,
}

impl ModelParams {
    pub fn new(d: u32, alpha: f64, f: f64) -> Result<Self> {
        if d == 0 || d > crate::tree::MAX_DIM {
            return Err(RcmError::InvalidModel(format!("dimension {d} unsupported")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(RcmError::InvalidModel(format!("alpha must be > 0, got {alpha}")));
        }
        if !(f.is_finite() && f > 0.0) {
            return Err(RcmError::InvalidModel(format!("forcing must be > 0, got {f}")));
        }
        Ok(Self { d, alpha, f })
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn n(&self) -> usize {
        1 << self.d
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    /// `c_j = d_j 2^{α|j|}` for a node of the given generation.
    pub fn c(&self, d_j: f64, generation: u32) -> f64 {
        d_j * (self.alpha * generation as f64).exp2()
    }
}

/// The multiset `{δ_ω}` repeated below every node.
///
/// The length is not forced to be a power of two here so the simplex/entropy
/// machinery can be exercised for any `N`; [`crate::RcmModel`] enforces
/// `N = 2^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedCoefficients {
    deltas: Vec<f64>,
    logs: Vec<f64>,
}

impl RepeatedCoefficients {
    pub fn new(deltas: Vec<f64>) -> Result<Self> {
        if deltas.is_empty() {
            return Err(RcmError::InvalidModel("empty coefficient multiset".into()));
        }
        if let Some(bad) = deltas.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
            return Err(RcmError::InvalidModel(format!(
                "coefficients must be positive and finite, got {bad}"
            )));
        }
        let logs = deltas.iter().map(|x| x.log2()).collect();
        Ok(Self { deltas, logs })
    }

    pub fn flat(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    /// `log2 δ_i = λ i`, `i = 0..7` (eight coefficients, `d = 3`).
    pub fn lambda_family(lambda: f64) -> Result<Self> {
        Self::new((0..8).map(|i| (lambda * i as f64).exp2()).collect())
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn log2_deltas(&self) -> &[f64] {
        &self.logs
    }

    /// `log2 N`; equals `d` for a genuine model.
    pub fn log2_n(&self) -> f64 {
        (self.len() as f64).log2()
    }

    pub fn is_flat(&self) -> bool {
        self.deltas.iter().all(|&x| x == self.deltas[0])
    }

    /// Distinct `log2 δ` values in increasing order, with multiplicities.
    pub fn distinct(&self) -> Vec<(f64, u64)> {
        let mut logs = self.logs.clone();
        logs.sort_by(f64::total_cmp);
        let mut out: Vec<(f64, u64)> = Vec::new();
        for v in logs {
            match out.last_mut() {
                Some((last, m)) if *last == v => *m += 1,
                _ => out.push((v, 1)),
            }
        }
        out
    }

    /// Multiplicity of the largest coefficient.
    pub fn max_multiplicity(&self) -> u64 {
        self.distinct().last().map(|p| p.1).unwrap_or(0)
    }

    /// `log2 Σ δ_ω^s`
    pub fn log2_power_sum(&self, s: f64) -> f64 {
        let xs: Vec<f64> = self.logs.iter().map(|l| s * l).collect();
        log2_sum_exp2(&xs)
    }

    /// `ℓ_s = (1/s) log2((1/N) Σ δ^s)`, completed continuously at `0` and `±∞`.
    pub fn ell(&self, s: f64) -> f64 {
        if s == f64::INFINITY {
            return self.ell_pos_inf();
        }
        if s == f64::NEG_INFINITY {
            return self.ell_neg_inf();
        }
        if s.abs() < ELL_ZERO_CUTOFF {
            return self.ell_zero();
        }
        (self.log2_power_sum(s) - self.log2_n()) / s
    }

    pub fn ell_zero(&self) -> f64 {
        self.logs.iter().sum::<f64>() / self.len() as f64
    }

    pub fn ell_neg_inf(&self) -> f64 {
        self.logs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn ell_pos_inf(&self) -> f64 {
        self.logs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Normalised weights `δ_ω^γ / Σ δ^γ`.
    pub fn tilted_weights(&self, gamma: f64) -> Vec<f64> {
        if gamma.is_infinite() {
            let target = if gamma > 0.0 {
                self.ell_pos_inf()
            } else {
                self.ell_neg_inf()
            };
            let m = self.logs.iter().filter(|&&l| l == target).count() as f64;
            return self
                .logs
                .iter()
                .map(|&l| if l == target { 1.0 / m } else { 0.0 })
                .collect();
        }
        let shift = self
            .logs
            .iter()
            .map(|l| gamma * l)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.logs.iter().map(|l| (gamma * l - shift).exp2()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    }

    /// `φ(γ)`, the `γ`-tilted mean of `log2 δ`.
    pub fn phi(&self, gamma: f64) -> f64 {
        self.tilted_weights(gamma)
            .iter()
            .zip(&self.logs)
            .map(|(w, l)| w * l)
            .sum()
    }

    /// Variance of `log2 δ` under the `γ`-tilted weights.
    pub fn tilted_variance(&self, gamma: f64) -> f64 {
        let w = self.tilted_weights(gamma);
        let mean: f64 = w.iter().zip(&self.logs).map(|(w, l)| w * l).sum();
        w.iter()
            .zip(&self.logs)
            .map(|(w, l)| w * (l - mean) * (l - mean))
            .sum()
    }

    /// `φ'(γ) = ln 2 · tilted_variance(γ)`.
    pub fn phi_derivative(&self, gamma: f64) -> f64 {
        std::f64::consts::LN_2 * self.tilted_variance(gamma)
    }

    /// `γ_a = φ^{-1}(a)` for `a` strictly inside `(ℓ_{-∞}, ℓ_{+∞})`.
    pub fn phi_inverse(&self, a: f64) -> Result<f64> {
        if self.is_flat() {
            return domain("φ is constant for a flat model");
        }
        let (lo_bound, hi_bound) = (self.ell_neg_inf(), self.ell_pos_inf());
        if !(a > lo_bound && a < hi_bound) {
            return domain(format!(
                "a = {a} outside the open interval ({lo_bound}, {hi_bound})"
            ));
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        while self.phi(lo) > a {
            lo *= 2.0;
            if lo < -1e300 {
                return domain("could not bracket φ^{-1} from below");
            }
        }
        while self.phi(hi) < a {
            hi *= 2.0;
            if hi > 1e300 {
                return domain("could not bracket φ^{-1} from above");
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.phi(mid) < a {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (flo, fhi) = (self.phi(lo), self.phi(hi));
        Ok(if (a - flo).abs() <= (fhi - a).abs() { lo } else { hi })
    }

    /// `D(a) = log2 N − γ_a (a − ℓ_{γ_a})`: the maximum entropy (base 2) of
    /// a probability vector on the multiset subject to `Σ p_ω log2 δ_ω = a`.
    ///
    /// At the closed endpoints the constraint forces all mass onto the
    /// extreme coefficients, giving `log2` of their multiplicity.
    pub fn max_entropy(&self, a: f64) -> Result<f64> {
        let (lo, hi) = (self.ell_neg_inf(), self.ell_pos_inf());
        if self.is_flat() {
            return if a == lo {
                Ok(self.log2_n())
            } else {
                domain(format!("flat model: only a = {lo} is feasible"))
            };
        }
        if a < lo || a > hi {
            return domain(format!("a = {a} outside [{lo}, {hi}]"));
        }
        let extreme = |target: f64| self.logs.iter().filter(|&&l| l == target).count() as f64;
        if a == lo {
            return Ok(extreme(lo).log2());
        }
        if a == hi {
            return Ok(extreme(hi).log2());
        }
        let gamma = self.phi_inverse(a)?;
        Ok(self.log2_n() - gamma * (a - self.ell(gamma)))
    }
}

/// A deterministic positive coefficient field `j ↦ d_j` with `d_∅ = 1` and a
/// declared band for `log2 d_j` over non-root nodes.
#[derive(Clone)]
pub struct GeneralCoefficients {
    dim: u32,
    field: CoefficientField,
    log2_min: f64,
    log2_max: f64,
}

#[derive(Clone)]
enum CoefficientField {
    Repeated(RepeatedCoefficients),
    /// Generation `g ≥ 1` uses multiset `(g − 1) mod len`, attached by label.
    PerGeneration(Vec<RepeatedCoefficients>),
    /// `log2 d_j` uniform-looking in the band, from a hash of `(seed, j)`.
    Hashed { seed: u64 },
    Custom(Arc<dyn Fn(&TreeIndex) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for GeneralCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.field {
            CoefficientField::Repeated(_) => "repeated",
            CoefficientField::PerGeneration(_) => "per-generation",
            CoefficientField::Hashed { .. } => "hashed",
            CoefficientField::Custom(_) => "custom",
        };
        f.debug_struct("GeneralCoefficients")
            .field("dim", &self.dim)
            .field("kind", &kind)
            .field("log2_min", &self.log2_min)
            .field("log2_max", &self.log2_max)
            .finish()
    }
}

impl GeneralCoefficients {
    pub fn repeated(dim: u32, coeffs: RepeatedCoefficients) -> Result<Self> {
        check_len(dim, &coeffs)?;
        Ok(Self {
            dim,
            log2_min: coeffs.ell_neg_inf(),
            log2_max: coeffs.ell_pos_inf(),
            field: CoefficientField::Repeated(coeffs),
        })
    }

    pub fn per_generation(dim: u32, rows: Vec<RepeatedCoefficients>) -> Result<Self> {
        if rows.is_empty() {
            return Err(RcmError::InvalidModel("no generation multisets".into()));
        }
        for r in &rows {
            check_len(dim, r)?;
        }
        let log2_min = rows.iter().map(|r| r.ell_neg_inf()).fold(f64::INFINITY, f64::min);
        let log2_max = rows.iter().map(|r| r.ell_pos_inf()).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            dim,
            field: CoefficientField::PerGeneration(rows),
            log2_min,
            log2_max,
        })
    }

    pub fn hashed(dim: u32, seed: u64, log2_min: f64, log2_max: f64) -> Result<Self> {
        if !(log2_min.is_finite() && log2_max.is_finite() && log2_min <= log2_max) {
            return Err(RcmError::InvalidModel("bad log2 band".into()));
        }
        Ok(Self {
            dim,
            field: CoefficientField::Hashed { seed },
            log2_min,
            log2_max,
        })
    }

    /// Arbitrary map; every access is checked against the declared band.
    pub fn custom(
        dim: u32,
        log2_min: f64,
        log2_max: f64,
        f: impl Fn(&TreeIndex) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(log2_min.is_finite() && log2_max.is_finite() && log2_min <= log2_max) {
            return Err(RcmError::InvalidModel("bad log2 band".into()));
        }
        Ok(Self {
            dim,
            field: CoefficientField::Custom(Arc::new(f)),
            log2_min,
            log2_max,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// `(inf log2 d, sup log2 d)` over non-root nodes.
    pub fn log2_band(&self) -> (f64, f64) {
        (self.log2_min, self.log2_max)
    }

    /// `L = sup log2 d − inf log2 d`.
    pub fn spread(&self) -> f64 {
        self.log2_max - self.log2_min
    }

    pub fn d_of(&self, j: &TreeIndex) -> Result<f64> {
        if j.is_root() {
            return Ok(1.0);
        }
        let label = j.last_label().expect("non-root") as usize - 1;
        let value = match &self.field {
            CoefficientField::Repeated(c) => c.deltas()[label],
            CoefficientField::PerGeneration(rows) => {
                rows[(j.generation() as usize - 1) % rows.len()].deltas()[label]
            }
            CoefficientField::Hashed { seed } => {
                let h = splitmix64(seed ^ splitmix64(j.code() ^ ((j.generation() as u64) << 56)));
                let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
                (self.log2_min + unit * (self.log2_max - self.log2_min)).exp2()
            }
            CoefficientField::Custom(f) => f(j),
        };
        let l = value.log2();
        let slack = 1e-12 * (1.0 + self.log2_max.abs().max(self.log2_min.abs()));
        if !(value > 0.0 && l >= self.log2_min - slack && l <= self.log2_max + slack) {
            return Err(RcmError::Domain(format!(
                "d_{j} = {value} outside the declared band [2^{}, 2^{}]",
                self.log2_min, self.log2_max
            )));
        }
        Ok(value)
    }
}

fn check_len(dim: u32, c: &RepeatedCoefficients) -> Result<()> {
    if c.len() != 1usize << dim {
        return Err(RcmError::InvalidModel(format!(
            "expected {} coefficients for d = {dim}, got {}",
            1usize << dim,
            c.len()
        )));
    }
    Ok(())
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}
