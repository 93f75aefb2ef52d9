//! Physical-space recomposition `u(x) = Σ_j u_j ψ_j(x)` of the constant
//! solution on a dyadic grid, empirical structure functions, and the
//! exponent `ξ_p` they are compared against.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, RcmError, Result};
use crate::numeric::{linear_fit, log2_sum_exp2, pairwise_sum, pairwise_sum_by};
use crate::solution::ConstantSolution;
use crate::tree::TreeIndex;

/// Largest number of grid cells synthesized at once.
pub const MAX_GRID_CELLS: u64 = 1 << 26;

const CHUNK: usize = 4096;

/// One-dimensional mother wavelet on `[0, 1)`, tensorised in `d > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mother {
    /// `+1` on `[0, ½)`, `−1` on `[½, 1)`.
    Haar,
    /// `√2 sin(2πt)`; Lipschitz, so increments at scales below the cube
    /// size behave like `r |∇ψ|`.
    #[default]
    Sine,
}

impl Mother {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            Mother::Haar => {
                if t < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Mother::Sine => std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * t).sin(),
        }
    }
}

impl std::str::FromStr for Mother {
    type Err = RcmError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "haar" => Ok(Mother::Haar),
            "sine" => Ok(Mother::Sine),
            other => domain(format!("unknown mother wavelet '{other}'")),
        }
    }
}

/// Samples of the field at the centres of the `2^{dM}` cells of side `2^{−M}`.
///
/// Cell `(i_0, …, i_{d−1})` is stored at `Σ_a i_a 2^{aM}`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletField {
    dim: u32,
    depth: u32,
    mother: Mother,
    samples: Vec<f64>,
}

impl WaveletField {
    pub fn from_samples(dim: u32, depth: u32, samples: Vec<f64>) -> Result<Self> {
        if samples.len() as u64 != 1u64 << (dim * depth) {
            return domain("sample count does not match 2^{dM}");
        }
        Ok(Self {
            dim,
            depth,
            mother: Mother::Haar,
            samples,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn mother(&self) -> Mother {
        self.mother
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.samples) / self.samples.len() as f64
    }

    /// `∫ |u|^p`, as the grid mean.
    pub fn lp_norm_pow(&self, p: f64) -> f64 {
        let s = &self.samples;
        pairwise_sum_by(s.len(), |i| s[i].abs().powf(p)) / s.len() as f64
    }
}

/// `Σ_{|j|<M} u_j ψ_j` on the `2^{dM}` grid.
pub fn synthesize(sol: &ConstantSolution, depth: u32, mother: Mother) -> Result<WaveletField> {
    synthesize_levels(sol, depth, 0..depth, mother)
}

/// `Σ_{|j| ∈ levels} u_j ψ_j` on the `2^{dM}` grid.
///
/// Each cell centre is followed down its path `x_0 < x_1 < …`; only the
/// wavelet of `x_n` is non-zero there at generation `n`.
pub fn synthesize_levels(
    sol: &ConstantSolution,
    depth: u32,
    levels: Range<u32>,
    mother: Mother,
) -> Result<WaveletField> {
    let model = sol.model();
    let d = model.d();
    let cells = 1u64.checked_shl(d * depth).unwrap_or(u64::MAX);
    if d * depth >= 64 || cells > MAX_GRID_CELLS {
        return Err(RcmError::ResourceLimit {
            what: "wavelet grid cells",
            needed: 1u128 << (d * depth).min(127),
            budget: MAX_GRID_CELLS as u128,
        });
    }
    if levels.end > depth {
        return domain("synthesis levels must lie below the grid depth");
    }
    let log2_deltas = model.coeffs().log2_deltas().to_vec();
    let q = sol.q();
    let log2_root = sol.log2_u(&TreeIndex::root(d)?);
    let side = (depth as f64).exp2();
    let mask = (1u64 << depth) - 1;
    let mut samples = vec![0.0; cells as usize];
    samples
        .par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(chunk, out)| {
            let mut axes = [0u64; crate::tree::MAX_DIM as usize];
            for (o, slot) in out.iter_mut().enumerate() {
                let cell = (chunk * CHUNK + o) as u64;
                for (a, ax) in axes.iter_mut().enumerate().take(d as usize) {
                    *ax = (cell >> (a as u32 * depth)) & mask;
                }
                let mut log2_u = log2_root;
                let mut acc = 0.0;
                for n in 0..levels.end {
                    if n >= levels.start {
                        let mut psi = 1.0;
                        for &i in &axes[..d as usize] {
                            // local coordinate of the centre inside its level-n cube
                            let t = ((i as f64 + 0.5) / side * (n as f64).exp2()).fract();
                            psi *= mother.value(t);
                        }
                        acc += (log2_u + 0.5 * d as f64 * n as f64).exp2() * psi;
                    }
                    let mut label = 0usize;
                    for (a, &i) in axes[..d as usize].iter().enumerate() {
                        label |= (((i >> (depth - 1 - n)) & 1) as usize) << a;
                    }
                    log2_u += q + 0.5 * log2_deltas[label];
                }
                *slot = acc;
            }
        });
    Ok(WaveletField {
        dim: d,
        depth,
        mother,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureFunctionEstimate {
    pub p: Vec<f64>,
    /// Scales `r = 2^{−m}`.
    pub m: Vec<u32>,
    /// `s[i][k] = S_{p_i}(2^{−m_k})`
    pub s: Vec<Vec<f64>>,
    pub fit_window: (u32, u32),
    /// `−slope` of `log2 S_p` against `m` over the window; `None` when some
    /// `S_p` in the window is zero.
    pub zeta_hat: Vec<Option<f64>>,
    pub fit_rms: Vec<Option<f64>>,
}

/// `[6, M − 4]`, clipped into the usable range `[2, M − 2]`.
pub fn default_fit_window(depth: u32) -> (u32, u32) {
    (6.min(depth.saturating_sub(2)), depth.saturating_sub(4).max(2))
}

/// `S_p(r) = ⟨|u(x) − u(y)|^p⟩` over all grid pairs `y = x ± r e_a` that stay
/// inside the cube, for `r = 2^{−m}`, `m ∈ m_range`.
pub fn structure_function(
    field: &WaveletField,
    p_grid: &[f64],
    m_range: Range<u32>,
    fit_window: (u32, u32),
) -> Result<StructureFunctionEstimate> {
    let depth = field.depth;
    let (lo, hi) = fit_window;
    if lo > hi || lo < 2 || hi + 2 > depth || lo < m_range.start || hi >= m_range.end {
        return Err(RcmError::EmptyFitWindow(format!(
            "window [{lo}, {hi}] must lie in [2, {}] and inside the scale range {:?}",
            depth.saturating_sub(2),
            m_range
        )));
    }
    if m_range.end > depth || m_range.start == 0 {
        return domain("scales must satisfy 1 <= m < M");
    }
    let ms: Vec<u32> = m_range.collect();
    let d = field.dim;
    let side = 1usize << depth;
    let s = &field.samples;
    let table: Vec<Vec<f64>> = p_grid
        .iter()
        .map(|&p| {
            ms.par_iter()
                .map(|&m| {
                    let r = 1usize << (depth - m);
                    let mut per_axis = Vec::with_capacity(d as usize);
                    let mut pairs = 0usize;
                    for a in 0..d {
                        let stride = 1usize << (a * depth);
                        let valid: Vec<usize> = (0..s.len())
                            .filter(|&i| (i / stride) % side + r < side)
                            .collect();
                        pairs += valid.len();
                        per_axis.push(pairwise_sum_by(valid.len(), |k| {
                            let i = valid[k];
                            (s[i + r * stride] - s[i]).abs().powf(p)
                        }));
                    }
                    pairwise_sum(&per_axis) / pairs as f64
                })
                .collect()
        })
        .collect();
    let window: Vec<usize> = (0..ms.len()).filter(|&k| ms[k] >= lo && ms[k] <= hi).collect();
    let xs: Vec<f64> = window.iter().map(|&k| ms[k] as f64).collect();
    let mut zeta_hat = Vec::new();
    let mut fit_rms = Vec::new();
    for row in &table {
        if window.iter().any(|&k| !(row[k] > 0.0)) {
            zeta_hat.push(None);
            fit_rms.push(None);
            continue;
        }
        let ys: Vec<f64> = window.iter().map(|&k| row[k].log2()).collect();
        let (slope, _, rms) = linear_fit(&xs, &ys);
        zeta_hat.push(Some(-slope));
        fit_rms.push(Some(rms));
    }
    Ok(StructureFunctionEstimate {
        p: p_grid.to_vec(),
        m: ms,
        s: table,
        fit_window,
        zeta_hat,
        fit_rms,
    })
}

/// `ξ_p = p s_0(p)`
pub fn xi(sol: &ConstantSolution, p: f64) -> f64 {
    p * sol.s0(p)
}

/// `ξ_p = d − pd/2 − slope of n ↦ log2 Σ_{|j|=n} u_j^p`, the sums taken by
/// visiting every node of generations `n_range`.
pub fn xi_from_generation_sums(sol: &ConstantSolution, p: f64, n_range: Range<u32>) -> Result<f64> {
    let d = sol.model().d();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in n_range {
        let logs: Vec<f64> = TreeIndex::generation_iter(d, n)?
            .map(|j| p * sol.log2_u(&j))
            .collect();
        xs.push(n as f64);
        ys.push(log2_sum_exp2(&logs));
    }
    if xs.len() < 2 {
        return domain("need at least two generations");
    }
    let (slope, _, _) = linear_fit(&xs, &ys);
    let df = d as f64;
    Ok(df - 0.5 * p * df - slope)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BesovSequence {
    pub log2_epsilon: Vec<f64>,
    /// `log2 (ε_{n+1} / ε_n)`, constant for the constant solution.
    pub log2_ratio: f64,
    pub bounded: bool,
}

/// `ε_n` of the constant solution for `n = 0..=n_max`; `p = None` is `p = ∞`.
pub fn besov_epsilon(sol: &ConstantSolution, s: f64, p: Option<f64>, n_max: u32) -> Result<BesovSequence> {
    let m = sol.model();
    let df = m.df();
    let log2_eps: Vec<f64> = match p {
        Some(p) => {
            if !(p >= 1.0) {
                return domain(format!("ε_n needs p >= 1, got {p}"));
            }
            (0..=n_max)
                .map(|n| {
                    let nf = n as f64;
                    nf * s + df * nf * (0.5 - 1.0 / p) + sol.log2_generation_sum(p, n) / p
                })
                .collect()
        }
        None => (0..=n_max)
            .map(|n| {
                let nf = n as f64;
                let max_log2_u =
                    m.f().log2() + sol.q() * (nf + 1.0) + 0.5 * nf * m.coeffs().ell_pos_inf();
                nf * s + 0.5 * df * nf + max_log2_u
            })
            .collect(),
    };
    let threshold = match p {
        Some(p) => sol.s0(p),
        None => sol.holder_h(),
    };
    Ok(BesovSequence {
        log2_epsilon: log2_eps,
        log2_ratio: s - threshold,
        bounded: s <= threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalHolder {
    pub n: u64,
    pub sigma: f64,
    /// `−d/2 − (1/n) log2 u_{x_n}`
    pub estimate: f64,
    /// `(α − d/2)/3 + (ℓ_{3/2} − σ)/2`
    pub closed_form: f64,
    /// `σ ≥ ℓ_{3/2}`
    pub dissipative: bool,
}

/// Local Hölder exponent along the path with the given child labels.
pub fn local_holder_of_labels(sol: &ConstantSolution, labels: &[u8]) -> Result<LocalHolder> {
    if labels.is_empty() {
        return domain("need at least one generation");
    }
    let m = sol.model();
    let n = labels.len() as f64;
    let sum: f64 = labels.iter().map(|&k| m.log2_delta(k)).sum();
    let sigma = sum / n;
    let log2_u = m.f().log2() + sol.q() * (n + 1.0) + 0.5 * sum;
    Ok(LocalHolder {
        n: labels.len() as u64,
        sigma,
        estimate: -0.5 * m.df() - log2_u / n,
        closed_form: (m.alpha() - 0.5 * m.df()) / 3.0 + 0.5 * (m.ell(1.5) - sigma),
        dissipative: sigma >= m.ell(1.5),
    })
}

/// Local Hölder exponent at a point, using its first `n` generations.
pub fn local_holder(sol: &ConstantSolution, x: &[f64], n: u32) -> Result<LocalHolder> {
    let j = crate::tree::path_of_point(x, n)?;
    local_holder_of_labels(sol, &j.labels())
}

/// `c(λ, p) = (1 − λ^{−1/(p−1)})^{−(p−1)}`, so that
/// `(Σ a_k)^p ≤ c(λ, p) Σ λ^k a_k^p`.
pub fn holder_sum_constant(lambda: f64, p: f64) -> f64 {
    (1.0 - lambda.powf(-1.0 / (p - 1.0))).powf(-(p - 1.0))
}

/// `∫ |Σ_{n≤|j|<M} u_j ψ_j|^p / (2^{(dp/2 − d)n} Σ_{|j|=n} u_j^p)`.
pub fn tail_ratio(sol: &ConstantSolution, n: u32, depth: u32, p: f64, mother: Mother) -> Result<f64> {
    let tail = synthesize_levels(sol, depth, n..depth, mother)?;
    let df = sol.model().df();
    let log2_den = (0.5 * df * p - df) * n as f64 + sol.log2_generation_sum(p, n);
    Ok((tail.lp_norm_pow(p).log2() - log2_den).exp2())
}
