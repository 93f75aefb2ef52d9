//! Structure-function exponents, dissipation spectra and reference models.

use rayon::prelude::*;
use serde::Serialize;

use crate::coefficients::RepeatedCoefficients;
use crate::error::{domain, Result};
use crate::solution::ConstantSolution;

/// Unclipped branch `p s_0(p)`.
pub fn zeta_raw(sol: &ConstantSolution, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return domain(format!("ζ_p needs p >= 0, got {p}"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    Ok(p * sol.s0(p))
}

/// `ζ_p = min{p, p s_0(p)}`
pub fn zeta(sol: &ConstantSolution, p: f64) -> Result<f64> {
    Ok(zeta_raw(sol, p)?.min(p))
}

/// Present when `h ∉ (0, 1)`, where the exponent formula loses its meaning.
pub fn regime_warning(sol: &ConstantSolution) -> Option<String> {
    let h = sol.holder_h();
    (!(h > 0.0 && h < 1.0)).then(|| format!("Hölder exponent h = {h} lies outside (0, 1)"))
}

/// `ζ'_0 = (α − d/2)/3 + (ℓ_{3/2} − ℓ_0)/2` on the unclipped branch.
pub fn zeta_derivative_at_zero(sol: &ConstantSolution) -> f64 {
    let m = sol.model();
    (m.alpha() - 0.5 * m.df()) / 3.0 + 0.5 * (m.ell(1.5) - m.coeffs().ell_zero())
}

/// `d/dp (p s_0(p)) = (α − d/2)/3 + ℓ_{3/2}/2 − φ(p/2)/2`.
pub fn zeta_raw_derivative(sol: &ConstantSolution, p: f64) -> f64 {
    let m = sol.model();
    (m.alpha() - 0.5 * m.df()) / 3.0 + 0.5 * m.ell(1.5) - 0.5 * m.phi(0.5 * p)
}

/// Oblique asymptote `(h, d − log2 m)` of the unclipped branch.
pub fn asymptote(sol: &ConstantSolution) -> (f64, f64) {
    let m = sol.model();
    (
        sol.holder_h(),
        m.df() - (m.coeffs().max_multiplicity() as f64).log2(),
    )
}

/// `R(a) = log2 N + (3/2) ℓ_{3/2} − (3/2) a`
pub fn rate_r(c: &RepeatedCoefficients, a: f64) -> f64 {
    c.log2_n() + 1.5 * c.ell(1.5) - 1.5 * a
}

/// `D(a)`, dimension of the points whose path average of `log2 d` is `a`.
pub fn dim_d(c: &RepeatedCoefficients, a: f64) -> Result<f64> {
    c.max_entropy(a)
}

/// `Δ = log2 N − (3/2)(φ(3/2) − ℓ_{3/2})`
pub fn dim_delta(c: &RepeatedCoefficients) -> f64 {
    c.log2_n() - 1.5 * (c.phi(1.5) - c.ell(1.5))
}

/// `|Δ − (3 ζ'_3 + d − 1)|` with `ζ'_3` taken on the unclipped branch.
pub fn frisch_parisi_residual(sol: &ConstantSolution) -> f64 {
    let zeta3_prime = zeta_raw_derivative(sol, 3.0);
    (dim_delta(sol.model().coeffs()) - (3.0 * zeta3_prime + sol.model().df() - 1.0)).abs()
}

/// Brute-force maximum of `H(p) = −Σ p log2 p` over the simplex slice
/// `Σ p_ω log2 δ_ω = a`, for `N ≤ 4`.
///
/// The two coordinates at the extreme coefficients are solved from the
/// constraints; the remaining `N − 2` are searched on a grid and refined by
/// a shrinking pattern search.
pub fn entropy_max_oracle(c: &RepeatedCoefficients, a: f64, resolution: usize) -> Result<f64> {
    let n = c.len();
    if n > 4 {
        return domain("the simplex oracle handles N <= 4 only");
    }
    let logs = c.log2_deltas();
    let (lo, hi) = (c.ell_neg_inf(), c.ell_pos_inf());
    if c.is_flat() {
        return if (a - lo).abs() <= 1e-15 {
            Ok(c.log2_n())
        } else {
            domain("infeasible constraint for a flat model")
        };
    }
    if a < lo || a > hi {
        return domain(format!("a = {a} outside [{lo}, {hi}]"));
    }
    let i_lo = (0..n).find(|&i| logs[i] == lo).unwrap();
    let i_hi = (0..n).find(|&i| logs[i] == hi).unwrap();
    let free: Vec<usize> = (0..n).filter(|&i| i != i_lo && i != i_hi).collect();

    let entropy = |x: &[f64]| -> Option<f64> {
        let mut rest = 1.0;
        let mut target = a;
        for (&i, &v) in free.iter().zip(x) {
            if v < 0.0 {
                return None;
            }
            rest -= v;
            target -= v * logs[i];
        }
        // p_lo + p_hi = rest, lo p_lo + hi p_hi = target
        let p_hi = (target - lo * rest) / (hi - lo);
        let p_lo = rest - p_hi;
        let tol = -1e-15;
        if rest < tol || p_hi < tol || p_lo < tol {
            return None;
        }
        let h = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
        Some(x.iter().map(|&v| h(v)).sum::<f64>() + h(p_lo.max(0.0)) + h(p_hi.max(0.0)))
    };

    let g = resolution.max(2);
    let step0 = 1.0 / g as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |x: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| {
        if let Some(h) = entropy(&x) {
            if best.as_ref().is_none_or(|b| h > b.0) {
                *best = Some((h, x));
            }
        }
    };
    match free.len() {
        0 => consider(vec![], &mut best),
        1 => (0..=g).for_each(|i| consider(vec![i as f64 * step0], &mut best)),
        _ => {
            for i in 0..=g {
                for k in 0..=(g - i) {
                    consider(vec![i as f64 * step0, k as f64 * step0], &mut best);
                }
            }
        }
    }
    let (mut h_best, mut x) = match best {
        Some(b) => b,
        None => return domain("no feasible grid point: increase the resolution"),
    };
    let dirs: Vec<Vec<f64>> = match free.len() {
        0 => vec![],
        1 => vec![vec![1.0], vec![-1.0]],
        _ => vec![
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
        ],
    };
    let mut step = step0;
    while step > 1e-13 && !dirs.is_empty() {
        let mut improved = false;
        for dir in &dirs {
            let cand: Vec<f64> = x.iter().zip(dir).map(|(v, e)| v + step * e).collect();
            if let Some(h) = entropy(&cand) {
                if h > h_best {
                    h_best = h;
                    x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(h_best)
}

/// Kolmogorov 1941: `p/3`.
pub fn k41(p: f64) -> f64 {
    p / 3.0
}

/// Log-normal: `p/3 + (μ/18)(3p − p²)`.
pub fn log_normal(p: f64, mu: f64) -> f64 {
    p / 3.0 + mu / 18.0 * (3.0 * p - p * p)
}

/// β-model: `p/3 + (3 − D)(1 − p/3)`.
pub fn beta_model(p: f64, dim: f64) -> f64 {
    p / 3.0 + (3.0 - dim) * (1.0 - p / 3.0)
}

/// She–Lévêque: `p/9 + 2 − 2 (2/3)^{p/3}`.
pub fn she_leveque(p: f64) -> f64 {
    p / 9.0 + 2.0 - 2.0 * (2.0f64 / 3.0).powf(p / 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCurve {
    pub name: String,
    pub zeta: Vec<f64>,
}

/// The four closed-form comparison models on a `p` grid.
pub fn reference_models(p_grid: &[f64], mu: f64, beta_dim: f64) -> Vec<ReferenceCurve> {
    let curve = |name: String, f: &dyn Fn(f64) -> f64| ReferenceCurve {
        name,
        zeta: p_grid.iter().map(|&p| f(p)).collect(),
    };
    vec![
        curve("K41".into(), &k41),
        curve(format!("log-normal mu={mu}"), &|p| log_normal(p, mu)),
        curve(format!("beta D={beta_dim}"), &|p| beta_model(p, beta_dim)),
        curve("She-Leveque".into(), &she_leveque),
    ]
}

/// `0, 0.1, …, 20`
pub fn default_p_grid() -> Vec<f64> {
    (0..=200).map(|i| i as f64 / 10.0).collect()
}

/// Uniform grid of `count` points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub p: Vec<f64>,
    pub zeta: Vec<f64>,
    pub h: f64,
    pub asymptote_slope: f64,
    pub asymptote_intercept: f64,
    pub zeta_prime_0: f64,
    pub zeta3: f64,
    pub concave: bool,
    pub nondecreasing: bool,
    pub delta: f64,
    pub a: Vec<f64>,
    pub dim_d: Vec<f64>,
    pub rate_r: Vec<f64>,
    pub warning: Option<String>,
}

/// Largest positive second difference on a uniform grid (concavity defect).
pub fn max_second_difference(values: &[f64]) -> f64 {
    values
        .windows(3)
        .map(|w| w[2] - 2.0 * w[1] + w[0])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest first difference (monotonicity defect when negative).
pub fn min_first_difference(values: &[f64]) -> f64 {
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

impl SpectrumReport {
    /// `a_points` samples of `D` and `R` over `[ℓ_{−∞}, ℓ_{+∞}]`.
    pub fn build(sol: &ConstantSolution, p_grid: &[f64], a_points: usize) -> Result<Self> {
        let zeta: Vec<f64> = p_grid
            .par_iter()
            .map(|&p| zeta(sol, p))
            .collect::<Result<_>>()?;
        let c = sol.model().coeffs();
        let a = if c.is_flat() {
            vec![c.ell_zero()]
        } else {
            linspace(c.ell_neg_inf(), c.ell_pos_inf(), a_points)
        };
        let dims: Vec<f64> = a.par_iter().map(|&x| dim_d(c, x)).collect::<Result<_>>()?;
        let rates: Vec<f64> = a.iter().map(|&x| rate_r(c, x)).collect();
        let (slope, intercept) = asymptote(sol);
        Ok(Self {
            p: p_grid.to_vec(),
            concave: max_second_difference(&zeta) <= 1e-9,
            nondecreasing: min_first_difference(&zeta) >= -1e-9,
            zeta,
            h: sol.holder_h(),
            asymptote_slope: slope,
            asymptote_intercept: intercept,
            zeta_prime_0: zeta_derivative_at_zero(sol),
            zeta3: self::zeta(sol, 3.0)?,
            delta: dim_delta(c),
            a,
            dim_d: dims,
            rate_r: rates,
            warning: regime_warning(sol),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RcmModel;

    fn one_two() -> ConstantSolution {
        ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap())
    }

    #[test]
    fn zeta_anchor_points() {
        let flat = ConstantSolution::new(RcmModel::flat(3, 2.5, 1.0).unwrap());
        assert!((zeta(&flat, 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(zeta(&flat, 0.0).unwrap(), 0.0);
        assert!(zeta(&flat, -1.0).is_err());
        let lam = ConstantSolution::new(RcmModel::lambda_family(0.2, 2.5, 1.0).unwrap());
        assert!((zeta(&lam, 3.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivative_at_zero() {
        let s = one_two();
        assert!((zeta_derivative_at_zero(&s) - 0.395_583_931_813_274_67).abs() < 1e-14);
        // the branch p s_0(p) is analytic through p = 0
        let h = 1e-4;
        let fd = (h * s.s0(h) + h * s.s0(-h)) / (2.0 * h);
        assert!((fd - zeta_derivative_at_zero(&s)).abs() < 1e-6);
        let fd3 = (zeta_raw(&s, 3.0 + h).unwrap() - zeta_raw(&s, 3.0 - h).unwrap()) / (2.0 * h);
        assert!((fd3 - zeta_raw_derivative(&s, 3.0)).abs() < 1e-6);
    }

    #[test]
    fn asymptote_values() {
        let flat = ConstantSolution::new(RcmModel::flat(3, 2.5, 1.0).unwrap());
        let (slope, intercept) = asymptote(&flat);
        assert!((slope - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(intercept, 0.0);
        let lam = ConstantSolution::new(RcmModel::lambda_family(0.1, 2.5, 1.0).unwrap());
        assert_eq!(asymptote(&lam).1, 3.0);
    }

    #[test]
    fn delta_and_dimension() {
        let c = RepeatedCoefficients::new(vec![1.0, 2.0]).unwrap();
        assert!((dim_delta(&c) - 0.828_557_607_885_436_2).abs() < 1e-14);
        assert!((dim_d(&c, c.phi(1.5)).unwrap() - dim_delta(&c)).abs() < 1e-10);
        let flat = RepeatedCoefficients::flat(8, 1.0).unwrap();
        assert_eq!(dim_delta(&flat), 3.0);
        assert_eq!(dim_d(&flat, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn oracle_examples() {
        let c = RepeatedCoefficients::new(vec![1.0, 2.0]).unwrap();
        assert!((entropy_max_oracle(&c, 0.5, 100).unwrap() - 1.0).abs() < 1e-12);
        let a = c.phi(1.5);
        assert!((entropy_max_oracle(&c, a, 100).unwrap() - 0.828_557_607_885_436_2).abs() < 1e-5);
        assert_eq!(entropy_max_oracle(&c, 1.0, 100).unwrap(), 0.0);
    }

    #[test]
    fn reference_values() {
        for z in reference_models(&[3.0], 0.2, 2.8) {
            assert!((z.zeta[0] - 1.0).abs() < 1e-15, "{}", z.name);
        }
        assert!((log_normal(6.0, 0.2) - 1.8).abs() < 1e-15);
        assert_eq!(she_leveque(0.0), 0.0);
    }

    #[test]
    fn frisch_parisi_examples() {
        let flat = ConstantSolution::new(RcmModel::flat(3, 2.5, 1.0).unwrap());
        assert!(frisch_parisi_residual(&flat) < 1e-15);
        assert!(frisch_parisi_residual(&one_two()) <= 1e-10);
        let lam = ConstantSolution::new(RcmModel::lambda_family(0.2, 2.5, 1.0).unwrap());
        assert!(frisch_parisi_residual(&lam) <= 1e-10);
    }

    #[test]
    fn report_fields() {
        let r = SpectrumReport::build(&one_two(), &default_p_grid(), 11).unwrap();
        assert_eq!(r.p.len(), 201);
        assert_eq!(r.zeta[0], 0.0);
        assert!(r.concave);
        assert_eq!(r.a.len(), 11);
        assert!(r.warning.is_none());
    }
}
