//! The constant componentwise solution: closed form for repeated
//! coefficients, pull-back iteration for general ones, and the regularity
//! functionals built on `s_0(p)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coefficients::GeneralCoefficients;
use crate::error::{domain, RcmError, Result};
use crate::model::RcmModel;
use crate::numeric::{log2_sum_exp2, pairwise_sum};
use crate::tree::{generation_size, TreeIndex};

/// A norm that is either a finite number or divergent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormValue {
    Finite(f64),
    Infinite,
}

impl NormValue {
    pub fn is_finite(&self) -> bool {
        matches!(self, NormValue::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match self {
            NormValue::Finite(v) => *v,
            NormValue::Infinite => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSolution {
    model: RcmModel,
    q: f64,
}

/// `q = −(α+d)/3 − ℓ_{3/2}/2`
pub fn fixed_point_q(model: &RcmModel) -> f64 {
    -(model.alpha() + model.df()) / 3.0 - 0.5 * model.ell(1.5)
}

impl ConstantSolution {
    pub fn new(model: RcmModel) -> Self {
        let q = fixed_point_q(&model);
        Self { model, q }
    }

    pub fn model(&self) -> &RcmModel {
        &self.model
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `log2 u_j = log2 f + q(|j|+1) + ½ Σ_{k≤j} log2 d_k`
    pub fn log2_u(&self, j: &TreeIndex) -> f64 {
        let path: f64 = (0..j.generation())
            .map(|p| self.model.log2_delta(j.label_at(p)))
            .sum();
        self.model.f().log2() + self.q * (j.generation() as f64 + 1.0) + 0.5 * path
    }

    pub fn u_of(&self, j: &TreeIndex) -> f64 {
        self.log2_u(j).exp2()
    }

    /// Residual of `q = −α/2 − ½ log2 Σ_ω δ_ω^{3/2} 2^q`.
    pub fn recursion_residual(&self) -> f64 {
        let rhs = -0.5 * self.model.alpha()
            - 0.5 * (self.model.coeffs().log2_power_sum(1.5) + self.q);
        (rhs - self.q).abs()
    }

    /// `d_j u_{j̄}² − 2^α Σ_{k∈O_j} d_k u_j u_k`, divided by `u_{j̄}²`.
    ///
    /// For the root, `u_{j̄} = f` and `d_∅ = 1`.
    pub fn stationarity_residual(&self, j: &TreeIndex) -> Result<f64> {
        let (log_parent, d_j) = if j.is_root() {
            (self.model.f().log2(), 1.0)
        } else {
            (self.log2_u(&j.parent()?), self.model.delta(j.last_label().unwrap()))
        };
        let lu = self.log2_u(j);
        let flux: f64 = j
            .offspring()?
            .iter()
            .map(|k| {
                let dk = self.model.delta(k.last_label().unwrap());
                dk * (self.model.alpha() + lu + self.log2_u(k) - 2.0 * log_parent).exp2()
            })
            .sum();
        Ok(d_j - flux)
    }

    /// `log2 (u_{jk} u_∅ / (u_j u_k))`; zero when coefficients are attached
    /// by last label.
    pub fn log2_autosimilarity_ratio(&self, j: &TreeIndex, k: &TreeIndex) -> Result<f64> {
        let jk = j.concat(k)?;
        let root = TreeIndex::root(j.dim())?;
        Ok(self.log2_u(&jk) + self.log2_u(&root) - self.log2_u(j) - self.log2_u(k))
    }

    /// `s_0(p) = (α − d/2)/3 + (ℓ_{3/2} − ℓ_{p/2})/2`; `p = ∞` gives `h`.
    pub fn s0(&self, p: f64) -> f64 {
        (self.model.alpha() - 0.5 * self.model.df()) / 3.0
            + 0.5 * (self.model.ell(1.5) - self.model.ell(0.5 * p))
    }

    /// `h = (α − d/2)/3 − (ℓ_{+∞} − ℓ_{3/2})/2`
    pub fn holder_h(&self) -> f64 {
        self.s0(f64::INFINITY)
    }

    /// `‖u‖_{W^{s,p}}^p`, from the closed-form geometric series.
    pub fn sobolev_norm_pow(&self, s: f64, p: f64) -> Result<NormValue> {
        if !(p >= 1.0) {
            return domain(format!("W^{{s,p}} needs p >= 1, got {p}"));
        }
        let ratio = p * (s - self.s0(p));
        if ratio >= 0.0 {
            return Ok(NormValue::Infinite);
        }
        let lead = (p * (self.model.f().log2() + self.q)).exp2();
        Ok(NormValue::Finite(lead / (1.0 - ratio.exp2())))
    }

    /// `‖u‖_{W^{s,p}}`
    pub fn sobolev_norm(&self, s: f64, p: f64) -> Result<NormValue> {
        Ok(match self.sobolev_norm_pow(s, p)? {
            NormValue::Finite(v) => NormValue::Finite(v.powf(1.0 / p)),
            NormValue::Infinite => NormValue::Infinite,
        })
    }

    /// Generations `0..=n_max` of the series for `‖u‖_{W^{s,p}}^p`.
    pub fn sobolev_partial_sum(&self, s: f64, p: f64, n_max: u32) -> Result<f64> {
        if !(p >= 1.0) {
            return domain(format!("W^{{s,p}} needs p >= 1, got {p}"));
        }
        let lead = (p * (self.model.f().log2() + self.q)).exp2();
        let r = p * (s - self.s0(p));
        let terms: Vec<f64> = (0..=n_max).map(|n| (r * n as f64).exp2()).collect();
        Ok(lead * pairwise_sum(&terms))
    }

    /// Same partial sum, by visiting every node of generations `0..=n_max`.
    pub fn sobolev_partial_sum_enumerated(&self, s: f64, p: f64, n_max: u32) -> Result<f64> {
        let d = self.model.d();
        let df = self.model.df();
        let mut total = Vec::with_capacity(n_max as usize + 1);
        for n in 0..=n_max {
            let weight = p * s * n as f64 + df * (0.5 * p - 1.0) * n as f64;
            let terms: Vec<f64> = TreeIndex::generation_iter(d, n)?
                .map(|j| (weight + p * self.log2_u(&j)).exp2())
                .collect();
            total.push(pairwise_sum(&terms));
        }
        Ok(pairwise_sum(&total))
    }

    /// `Σ_j u_j²`, finite when `s_0(2) > 0`.
    pub fn energy(&self) -> NormValue {
        self.sobolev_norm_pow(0.0, 2.0).expect("p = 2 is valid")
    }

    /// `log2 Σ_{|j|=n} u_j^p = p log2 f + p q (n+1) + n log2 Σ δ^{p/2}`
    pub fn log2_generation_sum(&self, p: f64, n: u32) -> f64 {
        let nf = n as f64;
        p * self.model.f().log2()
            + p * self.q * (nf + 1.0)
            + nf * self.model.coeffs().log2_power_sum(0.5 * p)
    }

    /// Existence bound `(α − d/2)/3 − L` for these coefficients.
    pub fn existence_bound(&self) -> f64 {
        let c = self.model.coeffs();
        (self.model.alpha() - 0.5 * self.model.df()) / 3.0 - (c.ell_pos_inf() - c.ell_neg_inf())
    }
}

/// `r < (α − d/2)/3 − L` guarantees `ũ ∈ H^r` for bounded general coefficients.
pub fn existence_bound(coeffs: &GeneralCoefficients, alpha: f64) -> f64 {
    (alpha - 0.5 * coeffs.dim() as f64) / 3.0 - coeffs.spread()
}

/// Invariant interval `[a, b]` of the pull-back map.
pub fn pullback_band(coeffs: &GeneralCoefficients, alpha: f64) -> (f64, f64) {
    let (s, t) = coeffs.log2_band();
    let base = -(alpha + coeffs.dim() as f64) / 3.0;
    (base - t + 0.5 * s, base - s + 0.5 * t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationStats {
    pub generation: u32,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// `max |log2 Σ d_k^{3/2} 2^{q_k + 2q_j} + α|` over the row.
    pub residual: f64,
    pub in_band: bool,
}

/// Result of pulling the boundary data `q = x` at depth `n` back to the root.
#[derive(Debug, Clone)]
pub struct PullbackRun {
    depth: u32,
    seed: f64,
    band: (f64, f64),
    stats: Vec<GenerationStats>,
    rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct PullbackOptions {
    pub seed: f64,
    /// Rows with generation at most this are kept for [`PullbackRun::q_of`].
    pub retain_depth: u32,
    /// Largest number of row entries held at once.
    pub max_row_len: u64,
}

impl Default for PullbackOptions {
    fn default() -> Self {
        Self {
            seed: 0.0,
            retain_depth: 6,
            max_row_len: 1 << 25,
        }
    }
}

/// Compute `q^{(n)}_j` for `|j| ≤ n`, one row at a time from the bottom.
pub fn pullback(
    coeffs: &GeneralCoefficients,
    alpha: f64,
    depth: u32,
    opts: PullbackOptions,
) -> Result<PullbackRun> {
    if depth == 0 {
        return domain("pull-back depth must be at least 1");
    }
    if !opts.seed.is_finite() {
        return Err(RcmError::NonFinite("pull-back seed".into()));
    }
    let dim = coeffs.dim();
    let n_children = 1usize << dim;
    let widest = generation_size(dim, depth - 1)?;
    if widest > opts.max_row_len {
        return Err(RcmError::ResourceLimit {
            what: "pull-back row",
            needed: widest as u128,
            budget: opts.max_row_len as u128,
        });
    }
    let band = pullback_band(coeffs, alpha);
    let tol = 1e-12 * (1.0 + band.0.abs().max(band.1.abs()));
    let contains = |v: f64| v >= band.0 - tol && v <= band.1 + tol;

    let mut stats = Vec::with_capacity(depth as usize + 1);
    stats.push(GenerationStats {
        generation: depth,
        min: opts.seed,
        max: opts.seed,
        mean: opts.seed,
        residual: 0.0,
        in_band: contains(opts.seed),
    });
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); opts.retain_depth.min(depth) as usize + 1];
    if depth <= opts.retain_depth {
        rows[depth as usize] = vec![opts.seed; generation_size(dim, depth)? as usize];
    }

    let mut child_row: Option<Vec<f64>> = None;
    for g in (0..depth).rev() {
        let len = generation_size(dim, g)? as usize;
        let computed: Result<Vec<(f64, f64)>> = (0..len)
            .into_par_iter()
            .map(|code| {
                let parent = TreeIndex::from_code(dim, g, code as u64)?;
                let mut terms = [0.0f64; 32];
                for k in 0..n_children {
                    let child = parent.child(k as u8 + 1)?;
                    let qk = match &child_row {
                        Some(row) => row[code * n_children + k],
                        None => opts.seed,
                    };
                    terms[k] = 1.5 * coeffs.d_of(&child)?.log2() + qk;
                }
                let lse = log2_sum_exp2(&terms[..n_children]);
                let qj = -0.5 * alpha - 0.5 * lse;
                let residual = (lse + 2.0 * qj + alpha).abs();
                Ok((qj, residual))
            })
            .collect();
        let computed = computed?;
        let row: Vec<f64> = computed.iter().map(|p| p.0).collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(RcmError::NonFinite(format!("pull-back row {g}")));
        }
        let residual = computed.iter().map(|p| p.1).fold(0.0, f64::max);
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        stats.push(GenerationStats {
            generation: g,
            min,
            max,
            mean: pairwise_sum(&row) / len as f64,
            residual,
            in_band: contains(min) && contains(max),
        });
        if g <= opts.retain_depth {
            rows[g as usize] = row.clone();
        }
        child_row = Some(row);
    }
    stats.reverse();
    Ok(PullbackRun {
        depth,
        seed: opts.seed,
        band,
        stats,
        rows,
    })
}

impl PullbackRun {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn seed(&self) -> f64 {
        self.seed
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    /// Per-generation statistics, root first.
    pub fn stats(&self) -> &[GenerationStats] {
        &self.stats
    }

    pub fn root_value(&self) -> f64 {
        self.rows[0][0]
    }

    /// `q^{(n)}_j` for a retained generation; `0` below the boundary row.
    pub fn q_of(&self, j: &TreeIndex) -> Option<f64> {
        if j.generation() > self.depth {
            return Some(0.0);
        }
        self.rows
            .get(j.generation() as usize)
            .and_then(|row| row.get(j.code() as usize))
            .copied()
    }
}

/// The perturbed chain of a non-constant solution of the `q`-recursion.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceWitness {
    /// `ε_n = p_{j_n} − q_{j_n}`, starting with `ε_0`.
    pub epsilons: Vec<f64>,
    /// `Σ_{i≤n} ε_i`.
    pub partial_sums: Vec<f64>,
    /// `2^n ε_0` for the even entries.
    pub lower_bounds: Vec<f64>,
    /// `log2 u'_{j_n}` along the chain.
    pub log2_u_perturbed: Vec<f64>,
    /// First step at which `u'_{j_n}` no longer fits in an `f64`.
    pub overflow_at: Option<usize>,
}

/// Starting from `p_∅ = q + ε_0`, choose offspring satisfying the same
/// recursion with random spreads, following the alternating min/max child.
pub fn divergence_witness(
    solution: &ConstantSolution,
    eps0: f64,
    steps: usize,
    seed: u64,
) -> Result<DivergenceWitness> {
    if !eps0.is_finite() || eps0 < 0.0 {
        return domain("ε_0 must be finite and non-negative");
    }
    const SPREAD: f64 = 0.5;
    let model = solution.model();
    let weights: Vec<f64> = model
        .coeffs()
        .log2_deltas()
        .iter()
        .map(|l| 1.5 * l - model.coeffs().log2_power_sum(1.5))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = TreeIndex::root(model.d())?;
    let mut eps = eps0;
    let mut sum = eps0;
    let mut out = DivergenceWitness {
        epsilons: vec![eps0],
        partial_sums: vec![eps0],
        lower_bounds: vec![eps0],
        log2_u_perturbed: vec![solution.log2_u(&j) + eps0],
        overflow_at: None,
    };
    for n in 0..steps {
        if j.generation() + 1 > TreeIndex::max_generation(model.d()) {
            break;
        }
        let raw: Vec<f64> = (0..model.n())
            .map(|_| SPREAD * eps.abs() * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let shifted: Vec<f64> = raw.iter().zip(&weights).map(|(r, w)| r + w).collect();
        // log2 Σ w_k = 0 up to rounding; keep the unperturbed chain exact.
        let norm = if eps == 0.0 { 0.0 } else { log2_sum_exp2(&shifted) };
        let offsets: Vec<f64> = raw.iter().map(|r| -2.0 * eps + r - norm).collect();
        let pick = if n % 2 == 0 {
            argmin(&offsets)
        } else {
            argmax(&offsets)
        };
        j = j.child(pick as u8 + 1)?;
        eps = offsets[pick];
        sum += eps;
        let lu = solution.log2_u(&j) + sum;
        out.epsilons.push(eps);
        out.partial_sums.push(sum);
        out.lower_bounds.push((n as f64 + 1.0).exp2() * eps0);
        out.log2_u_perturbed.push(lu);
        if out.overflow_at.is_none() && lu >= f64::MAX_EXP as f64 {
            out.overflow_at = Some(n + 1);
        }
        if !eps.is_finite() {
            break;
        }
    }
    Ok(out)
}

fn argmin(xs: &[f64]) -> usize {
    (0..xs.len()).min_by(|&a, &b| xs[a].total_cmp(&xs[b])).unwrap()
}

fn argmax(xs: &[f64]) -> usize {
    (0..xs.len()).max_by(|&a, &b| xs[a].total_cmp(&xs[b])).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::RepeatedCoefficients;

    fn flat3() -> ConstantSolution {
        ConstantSolution::new(RcmModel::flat(3, 2.5, 1.0).unwrap())
    }

    fn one_two() -> ConstantSolution {
        ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap())
    }

    #[test]
    fn fixed_point_values() {
        assert!((flat3().q() + 11.0 / 6.0).abs() < 1e-15);
        assert!((one_two().q() + 1.145_583_931_813_274_8).abs() < 1e-14);
        assert!(one_two().recursion_residual() <= 1e-12);
        assert!(flat3().recursion_residual() <= 1e-12);
    }

    #[test]
    fn root_value_and_energy() {
        let s = flat3();
        let root = TreeIndex::root(3).unwrap();
        assert!((s.u_of(&root) - 0.280_615_512_077_343_25).abs() < 1e-15);
        assert!((s.s0(2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.energy().value() - 0.212_801_797_989_914_42).abs() < 1e-14);
        assert_eq!(s.sobolev_norm(1.0 / 3.0, 2.0).unwrap(), NormValue::Infinite);
        assert!(s.sobolev_norm(0.0, 0.5).is_err());
    }

    #[test]
    fn thresholds() {
        let s = one_two();
        assert!((s.holder_h() - 0.145_583_931_813_274_67).abs() < 1e-14);
        let f = flat3();
        for p in [1.0, 2.0, 7.5] {
            assert!((f.s0(p) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((f.holder_h() - 1.0 / 3.0).abs() < 1e-15);
        assert!(one_two().s0(3.0) > one_two().s0(8.0));
    }

    #[test]
    fn stationarity_at_nodes() {
        let s = one_two();
        for labels in [&[][..], &[1], &[2, 2, 1], &[1, 2, 1, 1, 2]] {
            let j = TreeIndex::from_labels(1, labels).unwrap();
            assert!(s.stationarity_residual(&j).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn flat_single_pullback_step() {
        let c = GeneralCoefficients::repeated(3, RepeatedCoefficients::flat(8, 1.0).unwrap()).unwrap();
        let run = pullback(&c, 2.5, 1, PullbackOptions::default()).unwrap();
        assert!((run.root_value() + 2.75).abs() < 1e-14);
    }

    #[test]
    fn rcm_fixed_point_is_preserved() {
        let model = RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap();
        let q = fixed_point_q(&model);
        let c = GeneralCoefficients::repeated(1, model.coeffs().clone()).unwrap();
        let opts = PullbackOptions {
            seed: q,
            ..Default::default()
        };
        let run = pullback(&c, 1.5, 10, opts).unwrap();
        for st in run.stats() {
            assert!((st.min - q).abs() < 1e-14 && (st.max - q).abs() < 1e-14);
            assert!(st.in_band);
        }
    }

    #[test]
    fn row_budget_is_enforced() {
        let c = GeneralCoefficients::repeated(3, RepeatedCoefficients::flat(8, 1.0).unwrap()).unwrap();
        let opts = PullbackOptions {
            max_row_len: 1000,
            ..Default::default()
        };
        assert!(matches!(
            pullback(&c, 2.5, 6, opts),
            Err(RcmError::ResourceLimit { .. })
        ));
    }

    #[test]
    fn witness_with_zero_perturbation() {
        let w = divergence_witness(&one_two(), 0.0, 10, 1).unwrap();
        assert!(w.epsilons.iter().all(|&e| e == 0.0));
        assert!(w.overflow_at.is_none());
    }
}
