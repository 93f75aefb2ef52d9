//! Anomalous-dissipation fractions `F_j`, the measures `μ_n` on the
//! composition lattice, and path statistics of `σ_j`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, RcmError, Result};
use crate::model::RcmModel;
use crate::numeric::{binomial_u128, log2_multinomial, log2_sum_exp2, pairwise_sum};
use crate::solution::ConstantSolution;
use crate::spectra::{dim_d, rate_r};
use crate::tree::TreeIndex;

/// Default cap on the number of lattice points enumerated by [`measure`].
pub const DEFAULT_LATTICE_BUDGET: u128 = 20_000_000;

/// `log2 F_j = |j|(α + 3q) + (3/2) Σ_{k≤j} log2 d_k`
pub fn log2_f_of(sol: &ConstantSolution, j: &TreeIndex) -> f64 {
    let m = sol.model();
    let path: f64 = (0..j.generation()).map(|p| m.log2_delta(j.label_at(p))).sum();
    j.generation() as f64 * (m.alpha() + 3.0 * sol.q()) + 1.5 * path
}

/// `σ_j`, the mean of `log2 d_k` along the path to `j`.
pub fn sigma_of(model: &RcmModel, j: &TreeIndex) -> Result<f64> {
    if j.is_root() {
        return domain("σ is undefined at the root");
    }
    let path: f64 = (0..j.generation()).map(|p| model.log2_delta(j.label_at(p))).sum();
    Ok(path / j.generation() as f64)
}

/// One lattice point: `counts[i]` nodes of the path use the `i`-th distinct
/// coefficient value.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub counts: Vec<u64>,
    pub sigma: f64,
    /// `log2 F_j` of every node with this composition.
    pub log2_f: f64,
    /// `log2` of the number of generation-`n` nodes with this composition.
    pub log2_multiplicity: f64,
    pub log2_mass: f64,
}

/// `μ_n = Σ_{|j|=n} F_j δ_{σ_j}` grouped by composition.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationMeasure {
    pub n: u32,
    /// Distinct `log2 δ` values and their multiplicities in the multiset.
    pub values: Vec<(f64, u64)>,
    pub atoms: Vec<Atom>,
}

/// Number of lattice points `C(n + D − 1, D − 1)` for `D` distinct values.
pub fn lattice_size(n: u32, distinct: usize) -> u128 {
    binomial_u128(n as u64 + distinct as u64 - 1, distinct as u64 - 1)
}

/// Exact `μ_n` over the composition lattice.
pub fn measure(sol: &ConstantSolution, n: u32, budget: u128) -> Result<DissipationMeasure> {
    if n == 0 {
        return domain("μ_n needs n >= 1");
    }
    let values = sol.model().coeffs().distinct();
    let size = lattice_size(n, values.len());
    if size > budget {
        return Err(RcmError::ResourceLimit {
            what: "composition lattice",
            needed: size,
            budget,
        });
    }
    let drift = sol.model().alpha() + 3.0 * sol.q();
    let make_atom = |counts: Vec<u64>| -> Atom {
        let path: f64 = counts.iter().zip(&values).map(|(&k, v)| k as f64 * v.0).sum();
        let log2_f = n as f64 * drift + 1.5 * path;
        let log2_multiplicity = log2_multinomial(&counts)
            + counts
                .iter()
                .zip(&values)
                .map(|(&k, v)| k as f64 * (v.1 as f64).log2())
                .sum::<f64>();
        Atom {
            sigma: path / n as f64,
            log2_f,
            log2_multiplicity,
            log2_mass: log2_f + log2_multiplicity,
            counts,
        }
    };
    let dims = values.len();
    let atoms: Vec<Atom> = if dims == 1 {
        vec![make_atom(vec![n as u64])]
    } else {
        (0..=n as u64)
            .into_par_iter()
            .map(|first| {
                let mut out = Vec::new();
                let mut counts = vec![0u64; dims];
                counts[0] = first;
                compositions(&mut counts, 1, n as u64 - first, &mut |c| {
                    out.push(make_atom(c.to_vec()))
                });
                out
            })
            .flatten_iter()
            .collect()
    };
    Ok(DissipationMeasure { n, values, atoms })
}

fn compositions(counts: &mut Vec<u64>, pos: usize, left: u64, emit: &mut impl FnMut(&[u64])) {
    if pos + 1 == counts.len() {
        counts[pos] = left;
        emit(counts);
        return;
    }
    for k in 0..=left {
        counts[pos] = k;
        compositions(counts, pos + 1, left - k, emit);
    }
    counts[pos] = 0;
}

impl DissipationMeasure {
    /// `log2 μ_n(ℝ)`; zero up to rounding.
    pub fn log2_total(&self) -> f64 {
        let xs: Vec<f64> = self.atoms.iter().map(|a| a.log2_mass).collect();
        log2_sum_exp2(&xs)
    }

    pub fn total(&self) -> f64 {
        self.log2_total().exp2()
    }

    /// `log2 μ_n((lo, hi))`, boundary atoms excluded.
    pub fn log2_mass_in(&self, lo: f64, hi: f64) -> f64 {
        let xs: Vec<f64> = self
            .atoms
            .iter()
            .filter(|a| a.sigma > lo && a.sigma < hi)
            .map(|a| a.log2_mass)
            .collect();
        log2_sum_exp2(&xs)
    }

    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        self.log2_mass_in(lo, hi).exp2()
    }

    /// `log2 (1 − μ_n((lo, hi)))`, summed directly over the excluded atoms.
    pub fn log2_mass_outside(&self, lo: f64, hi: f64) -> f64 {
        let xs: Vec<f64> = self
            .atoms
            .iter()
            .filter(|a| !(a.sigma > lo && a.sigma < hi))
            .map(|a| a.log2_mass)
            .collect();
        log2_sum_exp2(&xs)
    }
}

/// `inf [R(a) − D(a)]` over `[ℓ_{−∞}, ℓ_{+∞}] \ (lo, hi)`.
///
/// `R − D` is convex and vanishes at `φ(3/2)`, so for an interval around
/// `φ(3/2)` the infimum sits at whichever endpoints are in range.
pub fn theoretical_rate(model: &RcmModel, lo: f64, hi: f64) -> Result<f64> {
    let c = model.coeffs();
    let (a_min, a_max) = (c.ell_neg_inf(), c.ell_pos_inf());
    let centre = c.phi(1.5);
    if !(lo < centre && centre < hi) {
        return domain("the interval must contain φ(3/2)");
    }
    let mut best = f64::INFINITY;
    for a in [lo, hi] {
        if a >= a_min && a <= a_max {
            best = best.min(rate_r(c, a) - dim_d(c, a)?);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPoint {
    pub n: u32,
    pub mass_in: f64,
    pub tail: f64,
    pub log2_tail: f64,
    /// `−(1/n) log2 (1 − μ_n(B))`
    pub empirical_rate: f64,
    pub theoretical_rate: f64,
}

/// `μ_n(B)` and its tail for each requested `n`.
pub fn concentration_curve(
    sol: &ConstantSolution,
    lo: f64,
    hi: f64,
    ns: &[u32],
    budget: u128,
) -> Result<Vec<ConcentrationPoint>> {
    let theory = theoretical_rate(sol.model(), lo, hi)?;
    ns.iter()
        .map(|&n| {
            let mu = measure(sol, n, budget)?;
            let log2_tail = mu.log2_mass_outside(lo, hi);
            Ok(ConcentrationPoint {
                n,
                mass_in: mu.mass_in(lo, hi),
                tail: log2_tail.exp2(),
                log2_tail,
                empirical_rate: -log2_tail / n as f64,
                theoretical_rate: theory,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlnStats {
    pub samples: usize,
    pub n: u64,
    pub mean_sigma: f64,
    pub std_error: f64,
    /// Expected limit `ℓ_0`.
    pub ell_zero: f64,
    /// Sample mean of `(1/n) log2 (F_{x_n} / vol Q_{x_n})`.
    pub mean_log_ratio_rate: f64,
    /// Expected limit `−(3/2)(ℓ_{3/2} − ℓ_0)`.
    pub expected_rate: f64,
}

/// Random points of the unit cube, drawn as i.i.d. uniform child labels.
///
/// Sample `i` uses stream `i` of a ChaCha generator keyed by `seed`, so the
/// result does not depend on the thread count.
pub fn lln_sample(sol: &ConstantSolution, samples: usize, n: u64, seed: u64) -> Result<LlnStats> {
    if samples < 2 || n == 0 {
        return domain("need at least two samples and n >= 1");
    }
    let m = sol.model();
    let logs = m.coeffs().log2_deltas().to_vec();
    let big_n = m.n();
    let per_sample: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut sum = 0.0;
            for _ in 0..n {
                sum += logs[rng.random_range(0..big_n)];
            }
            let sigma = sum / n as f64;
            let log2_f = n as f64 * (m.alpha() + 3.0 * sol.q()) + 1.5 * sum;
            let rate = (log2_f + m.df() * n as f64) / n as f64;
            (sigma, rate)
        })
        .collect();
    let sigmas: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let rates: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    let mean = pairwise_sum(&sigmas) / samples as f64;
    let var: Vec<f64> = sigmas.iter().map(|s| (s - mean) * (s - mean)).collect();
    let var = pairwise_sum(&var) / (samples as f64 - 1.0);
    let c = m.coeffs();
    Ok(LlnStats {
        samples,
        n,
        mean_sigma: mean,
        std_error: (var / samples as f64).sqrt(),
        ell_zero: c.ell_zero(),
        mean_log_ratio_rate: pairwise_sum(&rates) / samples as f64,
        expected_rate: -1.5 * (c.ell(1.5) - c.ell_zero()),
    })
}

/// Energy input and boundary fluxes of a finite rooted subtree.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxBudget {
    /// `2 f² v_∅`
    pub input: f64,
    /// `2 c_j v_{j̄}² v_j` for `j ∈ ∂T`, in code order per generation.
    pub boundary: Vec<(TreeIndex, f64)>,
    pub total_boundary: f64,
}

impl FluxBudget {
    pub fn relative_imbalance(&self) -> f64 {
        (self.input - self.total_boundary).abs() / self.input.abs().max(f64::MIN_POSITIVE)
    }
}

/// Check that `t` contains the root and the father of each of its nodes.
pub fn check_prefix_closed(t: &[TreeIndex]) -> Result<HashSet<TreeIndex>> {
    let set: HashSet<TreeIndex> = t.iter().copied().collect();
    let Some(first) = t.first() else {
        return Err(RcmError::NotPrefixClosed("empty set".into()));
    };
    if !set.contains(&TreeIndex::root(first.dim())?) {
        return Err(RcmError::NotPrefixClosed("the root is missing".into()));
    }
    for j in t {
        if !j.is_root() && !set.contains(&j.parent()?) {
            return Err(RcmError::NotPrefixClosed(format!("father of {j} is missing")));
        }
    }
    Ok(set)
}

/// The boundary `∂T`: offspring of nodes of `T` that are not in `T`.
pub fn boundary_of(t: &[TreeIndex]) -> Result<Vec<TreeIndex>> {
    let set = check_prefix_closed(t)?;
    let mut out = Vec::new();
    for j in t {
        for k in j.offspring()? {
            if !set.contains(&k) {
                out.push(k);
            }
        }
    }
    out.sort_by_key(|k| (k.generation(), k.code()));
    out.dedup();
    Ok(out)
}

/// Input and boundary-flux terms of the energy balance of `t` for values `v`.
pub fn flux_terms(
    model: &RcmModel,
    t: &[TreeIndex],
    v: impl Fn(&TreeIndex) -> f64,
) -> Result<FluxBudget> {
    let boundary = boundary_of(t)?;
    let f = model.f();
    let root = TreeIndex::root(model.d())?;
    let input = 2.0 * f * f * v(&root);
    let fluxes: Vec<(TreeIndex, f64)> = boundary
        .into_iter()
        .map(|j| {
            let parent = j.parent().expect("boundary nodes are not the root");
            let c = model
                .params()
                .c(model.delta(j.last_label().unwrap()), j.generation());
            let vp = v(&parent);
            (j, 2.0 * c * vp * vp * v(&j))
        })
        .collect();
    let values: Vec<f64> = fluxes.iter().map(|p| p.1).collect();
    Ok(FluxBudget {
        input,
        total_boundary: pairwise_sum(&values),
        boundary: fluxes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_two() -> ConstantSolution {
        ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap())
    }

    #[test]
    fn flat_fractions_are_uniform() {
        let s = ConstantSolution::new(RcmModel::flat(2, 2.0, 1.0).unwrap());
        for j in TreeIndex::generation_iter(2, 3).unwrap() {
            assert!((log2_f_of(&s, &j) + 6.0).abs() < 1e-13);
        }
        let mu = measure(&s, 50, DEFAULT_LATTICE_BUDGET).unwrap();
        assert_eq!(mu.atoms.len(), 1);
        assert!(mu.log2_total().abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let m = RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap();
        let j = TreeIndex::from_labels(1, &[2, 2, 2]).unwrap();
        assert_eq!(sigma_of(&m, &j).unwrap(), 1.0);
        assert!(sigma_of(&m, &TreeIndex::root(1).unwrap()).is_err());
    }

    #[test]
    fn lattice_multiplicity() {
        let mu = measure(&one_two(), 4, DEFAULT_LATTICE_BUDGET).unwrap();
        assert_eq!(mu.atoms.len(), 5);
        let mid = mu.atoms.iter().find(|a| a.counts == vec![2, 2]).unwrap();
        assert!((mid.log2_multiplicity - 6f64.log2()).abs() < 1e-14);
        assert!(mu.log2_total().abs() < 1e-12);
    }

    #[test]
    fn lattice_budget() {
        let lam = ConstantSolution::new(RcmModel::lambda_family(0.2, 2.5, 1.0).unwrap());
        assert!(matches!(
            measure(&lam, 400, DEFAULT_LATTICE_BUDGET),
            Err(RcmError::ResourceLimit { .. })
        ));
        assert_eq!(lattice_size(4, 2), 5);
    }

    #[test]
    fn fractions_match_rate_identity() {
        let s = one_two();
        for labels in [&[1u8, 2, 2][..], &[2, 1, 1, 1, 2, 2, 2]] {
            let j = TreeIndex::from_labels(1, labels).unwrap();
            let n = j.generation() as f64;
            let sigma = sigma_of(s.model(), &j).unwrap();
            assert!((log2_f_of(&s, &j) / n + rate_r(s.model().coeffs(), sigma)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_root_subtree() {
        let s = one_two();
        let t = [TreeIndex::root(1).unwrap()];
        let budget = flux_terms(s.model(), &t, |j| s.u_of(j)).unwrap();
        assert_eq!(budget.boundary.len(), 2);
        assert!(budget.relative_imbalance() < 1e-12);
    }

    #[test]
    fn non_prefix_closed_is_rejected() {
        let t = [
            TreeIndex::root(1).unwrap(),
            TreeIndex::from_labels(1, &[1, 2]).unwrap(),
        ];
        assert!(matches!(boundary_of(&t), Err(RcmError::NotPrefixClosed(_))));
    }

    #[test]
    fn lln_flat_is_exact() {
        let s = ConstantSolution::new(RcmModel::flat(1, 1.5, 1.0).unwrap());
        let st = lln_sample(&s, 10, 100, 3).unwrap();
        assert_eq!(st.mean_sigma, 0.0);
        assert_eq!(st.std_error, 0.0);
        assert!(st.mean_log_ratio_rate.abs() < 1e-12);
    }
}
