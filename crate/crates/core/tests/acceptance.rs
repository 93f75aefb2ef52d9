//! Acceptance criteria, one line each. Exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rcm_core::dissipation::{concentration_curve, lln_sample, measure, DEFAULT_LATTICE_BUDGET};
use rcm_core::dynamics::{energy_balance, simulate, suggested_dt, Closure, InitialCondition, TruncatedState};
use rcm_core::field::{default_fit_window, structure_function, synthesize, xi, xi_from_generation_sums, Mother};
use rcm_core::spectra::{
    asymptote, dim_d, entropy_max_oracle, frisch_parisi_residual, linspace, max_second_difference,
    min_first_difference, rate_r, zeta, zeta_raw,
};
use rcm_core::{ConstantSolution, RcmModel, RepeatedCoefficients, TreeIndex};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_model(rng: &mut ChaCha8Rng, alpha: Option<f64>) -> RcmModel {
    let d = [1u32, 2, 3][rng.random_range(0..3)];
    random_model_in(rng, d, alpha)
}

fn random_model_in(rng: &mut ChaCha8Rng, d: u32, alpha: Option<f64>) -> RcmModel {
    let n = 1usize << d;
    let deltas: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0f64..2.0).exp2()).collect();
    let alpha = alpha.unwrap_or_else(|| d as f64 / 2.0 + rng.random_range(0.05..4.0));
    RcmModel::from_deltas(d, alpha, rng.random_range(0.5..2.0), deltas).unwrap()
}

fn lambda_models() -> Vec<(f64, ConstantSolution)> {
    [0.1, 0.2, 0.2307]
        .iter()
        .map(|&l| (l, ConstantSolution::new(RcmModel::lambda_family(l, 2.5, 1.0).unwrap())))
        .collect()
}

fn c1_zeta3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = random_model(&mut rng, None);
        let expect = 3.0f64.min(m.alpha() - m.df() / 2.0);
        let sol = ConstantSolution::new(m);
        worst = worst.max((zeta(&sol, 3.0).unwrap() - expect).abs());
    }
    outcome(worst <= 1e-12, format!("max |ζ_3 − min(3, α − d/2)| = {worst:.3e} over 100 models"))
}

fn c2_flat_k41() -> Outcome {
    let mut worst = 0.0f64;
    for d in 1..=3 {
        let sol = ConstantSolution::new(RcmModel::flat(d, d as f64 / 2.0 + 1.0, 1.0).unwrap());
        for i in 0..=200 {
            let p = i as f64 / 10.0;
            worst = worst.max((zeta(&sol, p).unwrap() - p / 3.0).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |ζ_p − p/3| = {worst:.3e} on [0, 20], d = 1..3"))
}

fn c3_lambda_root() -> Outcome {
    let h = |l: f64| ConstantSolution::new(RcmModel::lambda_family(l, 2.5, 1.0).unwrap()).holder_h();
    let (mut lo, mut hi) = (0.0, 1.0);
    if !(h(lo) > 0.0 && h(hi) < 0.0) {
        return outcome(false, "h(λ) does not change sign on [0, 1]");
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    outcome((root - 0.2307).abs() <= 0.001, format!("root of h(λ) at λ = {root:.6}"))
}

fn c4_shape() -> Outcome {
    let grid: Vec<f64> = (0..=800).map(|i| i as f64 * 0.05).collect();
    let mut ok = true;
    let mut parts = Vec::new();
    for (lambda, sol) in lambda_models() {
        let z: Vec<f64> = grid.iter().map(|&p| zeta(&sol, p).unwrap()).collect();
        let concave = max_second_difference(&z);
        let deltas = sol.model().coeffs().deltas();
        let mean: f64 = deltas.iter().map(|x| x.powf(1.5)).sum::<f64>() / deltas.len() as f64;
        let ratio = deltas.iter().map(|x| x.powf(1.5)).fold(0.0, f64::max) / mean;
        let monotone = min_first_difference(&z);
        let (slope, intercept) = asymptote(&sol);
        let gap = (zeta_raw(&sol, 200.0).unwrap() - slope * 200.0 - intercept).abs();
        let part_ok = concave <= 1e-9
            && (ratio >= 2.0 || monotone >= -1e-9)
            && (sol.holder_h() < 0.0 || monotone >= -1e-9)
            && gap <= 1e-6;
        ok &= part_ok;
        parts.push(format!(
            "λ={lambda}: Δ²max={concave:.1e} Δ¹min={monotone:.1e} max/mean={ratio:.3} asymptote gap={gap:.2e}"
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c5_entropy() -> Outcome {
    let sets: [Vec<f64>; 3] = [vec![1.0, 2.0], vec![1.0, 1.5, 3.0], vec![0.5, 1.0, 2.0, 2.0]];
    let mut worst_oracle = 0.0f64;
    let mut worst_below = f64::INFINITY;
    let mut equality_elsewhere = 0usize;
    let mut at_centre = 0.0f64;
    for deltas in sets {
        let c = RepeatedCoefficients::new(deltas).unwrap();
        let (lo, hi) = (c.ell_neg_inf(), c.ell_pos_inf());
        for a in linspace(lo, hi, 20) {
            let closed = dim_d(&c, a).unwrap();
            let oracle = entropy_max_oracle(&c, a, 200).unwrap();
            worst_oracle = worst_oracle.max((closed - oracle).abs());
        }
        let centre = c.phi(1.5);
        let grid = linspace(lo, hi, 1000);
        let step = grid[1] - grid[0];
        for &a in &grid {
            let gap = rate_r(&c, a) - dim_d(&c, a).unwrap();
            worst_below = worst_below.min(gap);
            if gap <= 1e-9 && (a - centre).abs() > step {
                equality_elsewhere += 1;
            }
        }
        at_centre = at_centre.max((rate_r(&c, centre) - dim_d(&c, centre).unwrap()).abs());
    }
    let ok = worst_oracle <= 1e-5 && worst_below >= -1e-9 && equality_elsewhere == 0 && at_centre <= 1e-9;
    outcome(
        ok,
        format!(
            "max |D − oracle| = {worst_oracle:.2e}; min(R − D) = {worst_below:.2e}; \
             |R − D| at φ(3/2) = {at_centre:.1e}; equality off φ(3/2): {equality_elsewhere}"
        ),
    )
}

fn c6_mass() -> Outcome {
    let sol = ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap());
    let model = sol.model();
    let f = model.f();
    let root = TreeIndex::root(1).unwrap();
    let input = 2.0 * f * f * sol.u_of(&root);
    let mut enum_err = 0.0f64;
    let mut atom_err = 0.0f64;
    for n in 1..=12u32 {
        let mut by_count: HashMap<u64, f64> = HashMap::new();
        let mut total = 0.0;
        for j in TreeIndex::generation_iter(1, n).unwrap() {
            let up = sol.u_of(&j.parent().unwrap());
            let c = model.params().c(model.delta(j.last_label().unwrap()), n);
            let fj = 2.0 * c * up * up * sol.u_of(&j) / input;
            total += fj;
            let twos = j.labels().iter().filter(|&&k| k == 2).count() as u64;
            *by_count.entry(twos).or_default() += fj;
        }
        enum_err = enum_err.max((total - 1.0).abs());
        let mu = measure(&sol, n, DEFAULT_LATTICE_BUDGET).unwrap();
        for atom in &mu.atoms {
            let e = by_count.get(&atom.counts[1]).copied().unwrap_or(0.0);
            atom_err = atom_err.max((atom.log2_mass.exp2() - e).abs());
        }
    }
    let mut lattice_err = 0.0f64;
    for n in 1..=400u32 {
        let mu = measure(&sol, n, DEFAULT_LATTICE_BUDGET).unwrap();
        lattice_err = lattice_err.max((mu.total() - 1.0).abs());
    }
    let ok = enum_err <= 1e-10 && lattice_err <= 1e-10 && atom_err <= 1e-12;
    outcome(
        ok,
        format!(
            "enumeration n≤12: {enum_err:.1e}; lattice n≤400: {lattice_err:.1e}; atomwise: {atom_err:.1e}"
        ),
    )
}

fn c7_concentration() -> Outcome {
    let sol = ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap());
    let centre = sol.model().phi(1.5);
    let (lo, hi) = (centre - 0.1, centre + 0.1);
    let curve = concentration_curve(&sol, lo, hi, &[50, 100, 200, 400], DEFAULT_LATTICE_BUDGET).unwrap();
    let increasing = curve.windows(2).all(|w| w[1].mass_in > w[0].mass_in);
    let last = curve.last().unwrap();
    let first = &curve[0];
    let rel = (last.empirical_rate - last.theoretical_rate).abs() / last.theoretical_rate;
    let two_point = (last.log2_tail - curve[2].log2_tail) / -200.0;
    let ok = increasing && last.tail < first.tail && rel <= 0.15;
    let masses: Vec<String> = curve.iter().map(|c| format!("{:.6}", c.mass_in)).collect();
    outcome(
        ok,
        format!(
            "μ_n(B) = [{}]; rate(400) = {:.5} vs inf[R − D] = {:.5} ({:.1}% off); \
             diagnostic slope 200→400 = {two_point:.5}",
            masses.join(", "),
            last.empirical_rate,
            last.theoretical_rate,
            100.0 * rel
        ),
    )
}

fn c8_lln() -> Outcome {
    let sol = ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap());
    let st = lln_sample(&sol, 1000, 10_000, 8).unwrap();
    let z = (st.mean_sigma - st.ell_zero).abs() / st.std_error;
    let rel = (st.mean_log_ratio_rate - st.expected_rate).abs() / st.expected_rate.abs();
    outcome(
        z <= 3.0 && rel <= 0.05,
        format!(
            "mean σ = {:.6} ({z:.2} SE from ℓ_0); rate {:.5} vs {:.5} ({:.2}% off)",
            st.mean_sigma,
            st.mean_log_ratio_rate,
            st.expected_rate,
            100.0 * rel
        ),
    )
}

fn c9_dynamics() -> Outcome {
    let model = RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap();
    let mut s = TruncatedState::new(&model, 5, Closure::Stationary, InitialCondition::Constant).unwrap();
    let dt = suggested_dt(&model, 5);
    simulate(&mut s, dt, 1000, 1000).unwrap();
    let drift = s.max_relative_drift();

    let flat = RcmModel::flat(1, 1.5, 1.0).unwrap();
    let generations: Vec<TreeIndex> = (0..=3).flat_map(|g| TreeIndex::generation_iter(1, g).unwrap()).collect();
    let ragged: Vec<TreeIndex> = ["", "1", "2", "21", "211", "2112"]
        .iter()
        .map(|t| TreeIndex::from_labels(1, &t.bytes().map(|b| b - b'0').collect::<Vec<_>>()).unwrap())
        .collect();
    let root = vec![TreeIndex::root(1).unwrap()];
    let residual = |m: &RcmModel, t: &[TreeIndex], seed: u64| {
        let init = InitialCondition::Random { seed, scale: 1.0 };
        let mut st = TruncatedState::new(m, 5, Closure::Zero, init).unwrap();
        energy_balance(&mut st, t, 1e-4, 200).unwrap().max_residual()
    };
    let mut worst = 0.0f64;
    let mut other = 0.0f64;
    for seed in 0..3u64 {
        for m in [&flat, &model] {
            worst = worst.max(residual(m, &generations, seed)).max(residual(m, &root, seed));
            other = other.max(residual(m, &ragged, seed));
        }
    }
    outcome(
        drift <= 1e-9 && worst <= 1e-6,
        format!(
            "fixed-point drift = {drift:.2e}; max energy-balance residual (T = generations 0..3 and T = {{∅}}) = {worst:.2e}; \
             diagnostic, ragged T reaching generation 4 = {other:.2e}"
        ),
    )
}

fn c10_field() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for deltas in [vec![1.0, 1.0], vec![1.0, 2.0]] {
        let sol = ConstantSolution::new(RcmModel::from_deltas(1, 1.5, 1.0, deltas.clone()).unwrap());
        let field = synthesize(&sol, 16, Mother::Sine).unwrap();
        let ps = [1.0, 2.0, 3.0];
        let est = structure_function(&field, &ps, 1..16, default_fit_window(16)).unwrap();
        for (i, &p) in ps.iter().enumerate() {
            let target = p.min(xi(&sol, p));
            let got = est.zeta_hat[i].unwrap_or(f64::NAN);
            let rel = (got - target) / target;
            ok &= rel.abs() <= 0.10;
            parts.push(format!("δ={deltas:?} p={p}: {got:.4} vs {target:.4} ({:+.1}%)", 100.0 * rel));
        }
        let mut id_err = 0.0f64;
        for i in 1..=80 {
            let p = i as f64 * 0.1;
            let df = sol.model().df();
            let step = sol.log2_generation_sum(p, 11) - sol.log2_generation_sum(p, 10);
            id_err = id_err.max((df - p * df / 2.0 - step - p * sol.s0(p)).abs());
        }
        let enum_err = (xi_from_generation_sums(&sol, 2.5, 10..15).unwrap() - 2.5 * sol.s0(2.5)).abs();
        ok &= id_err <= 1e-12 && enum_err <= 1e-9;
        parts.push(format!("ξ identity {id_err:.1e}, enumerated {enum_err:.1e}"));
    }
    outcome(ok, parts.join("; "))
}

fn c11_frisch_parisi() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let d = [1u32, 2, 3][rng.random_range(0..3)];
        let m = random_model_in(&mut rng, d, Some(d as f64 / 2.0 + 1.0));
        worst = worst.max(frisch_parisi_residual(&ConstantSolution::new(m)));
    }
    outcome(worst <= 1e-10, format!("max |Δ − (3ζ'_3 + d − 1)| = {worst:.2e} over 20 models"))
}

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1 zeta_3 anchor", c1_zeta3, Duration::from_secs(1)),
        ("2 flat model is K41", c2_flat_k41, Duration::from_secs(1)),
        ("3 lambda-family root of h", c3_lambda_root, Duration::from_secs(1)),
        ("4 concavity, monotonicity, asymptote", c4_shape, Duration::from_secs(1)),
        ("5 entropy spectrum vs oracle, R >= D", c5_entropy, Duration::from_secs(30)),
        ("6 dissipation mass conservation", c6_mass, Duration::from_secs(60)),
        ("7 concentration near phi(3/2)", c7_concentration, Duration::from_secs(60)),
        ("8 law of large numbers", c8_lln, Duration::from_secs(10)),
        ("9 dynamics fixed point, energy balance", c9_dynamics, Duration::from_secs(60)),
        ("10 structure-function exponents", c10_field, Duration::from_secs(120)),
        ("11 Frisch-Parisi consistency", c11_frisch_parisi, Duration::from_secs(1)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name} [{:.3}s / {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            out.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
