//! Small numerical helpers shared by the spectrum and measure code.
//!
//! Everything here works in base 2: quantities like `u_j` and `F_j` are
//! carried as their base-2 logarithms and only exponentiated at the end.

/// `log2(2^a + 2^b)` without overflow.
#[inline]
pub fn log2_add_exp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp2().ln_1p() / std::f64::consts::LN_2
}

/// `log2(Σ 2^x_i)` with a max shift. Empty input gives `-inf`.
pub fn log2_sum_exp2(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s = pairwise_sum_by(xs.len(), |i| (xs[i] - max).exp2());
    max + s.log2()
}

/// Pairwise (cascade) summation of `f(0) + … + f(len-1)`.
///
/// The grouping depends only on `len`, so results are bit-identical
/// regardless of how the terms were produced.
pub fn pairwise_sum_by(len: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
    fn rec(lo: usize, hi: usize, f: impl Fn(usize) -> f64 + Copy) -> f64 {
        if hi - lo <= 16 {
            (lo..hi).map(f).sum()
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    if len == 0 {
        0.0
    } else {
        rec(0, len, f)
    }
}

pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise_sum_by(xs.len(), |i| xs[i])
}

/// `log2(n!)`.
pub fn log2_factorial(n: u64) -> f64 {
    statrs::function::factorial::ln_factorial(n) / std::f64::consts::LN_2
}

/// `log2` of the multinomial coefficient `n! / Π k_i!` with `n = Σ k_i`.
pub fn log2_multinomial(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    log2_factorial(n) - counts.iter().map(|&k| log2_factorial(k)).sum::<f64>()
}

/// Binomial coefficient as `u128`, saturating on overflow.
pub fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Ordinary least-squares slope and intercept of `y` against `x`,
/// plus root-mean-square residual.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_exp2_handles_huge_exponents() {
        let v = log2_add_exp2(2000.0, 2000.0);
        assert!((v - 2001.0).abs() < 1e-12);
        assert_eq!(log2_add_exp2(f64::NEG_INFINITY, 3.0), 3.0);
    }

    #[test]
    fn sum_exp2_matches_direct() {
        let xs = [0.0, 1.0, -3.0, 2.5];
        let direct: f64 = xs.iter().map(|x: &f64| x.exp2()).sum::<f64>().log2();
        assert!((log2_sum_exp2(&xs) - direct).abs() < 1e-14);
        assert_eq!(log2_sum_exp2(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn multinomial_small_cases() {
        assert!((log2_multinomial(&[2, 2]) - 6f64.log2()).abs() < 1e-12);
        assert!((log2_multinomial(&[1, 1, 1]) - 6f64.log2()).abs() < 1e-12);
        assert_eq!(binomial_u128(6, 2), 15);
        assert_eq!(binomial_u128(402, 2), 80601);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 0.5 * v).collect();
        let (s, i, r) = linear_fit(&x, &y);
        assert!((s + 0.5).abs() < 1e-14 && (i - 3.0).abs() < 1e-14 && r < 1e-14);
    }
}
