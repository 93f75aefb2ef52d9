use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use rcm_core::dissipation::{concentration_curve, lln_sample, measure, theoretical_rate, DEFAULT_LATTICE_BUDGET};
use rcm_core::dynamics::{simulate, suggested_dt, Closure, InitialCondition, TruncatedState};
use rcm_core::field::{default_fit_window, structure_function, synthesize, xi, Mother};
use rcm_core::solution::{pullback, PullbackOptions};
use rcm_core::spectra::{linspace, reference_models, regime_warning, SpectrumReport};
use rcm_core::{ConstantSolution, GeneralCoefficients, ModelSpec, NormValue, RcmModel};

use crate::config::ModelArgs;
use crate::output::{Report, Table};
use crate::CliError;

pub type Outcome = Result<(Vec<ModelSpec>, Report), CliError>;

fn list(values: &Option<Vec<f64>>, default: &[f64]) -> Vec<f64> {
    values.clone().unwrap_or_else(|| default.to_vec())
}

fn solution(model: &ModelArgs) -> Result<(ModelSpec, ConstantSolution), CliError> {
    let m = model.build()?;
    if let Some(w) = regime_warning(&ConstantSolution::new(m.clone())) {
        eprintln!("warning: {w}");
    }
    Ok((ModelSpec::from(&m), ConstantSolution::new(m)))
}

fn norm_cell(v: NormValue) -> f64 {
    match v {
        NormValue::Finite(x) => x,
        NormValue::Infinite => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SpectraArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// λ values of the d = 3 family (default 0.1,0.2,0.2307 when no model is given)
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    /// Largest p of the grid (default 20)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    /// Grid step in p (default 0.1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_step: Option<f64>,
    /// Log-normal intermittency μ (default 0.2)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    /// β-model dimension D (default 2.8)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_dim: Option<f64>,
    /// Samples of D(a) and R(a) per model (default 101)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_points: Option<usize>,
    /// CSV with columns label,p,zeta appended as extra curves
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlay: Option<PathBuf>,
}

pub fn spectra(args: &SpectraArgs) -> Outcome {
    let p_max = args.p_max.unwrap_or(20.0);
    let step = args.p_step.unwrap_or(0.1);
    if !(step > 0.0 && p_max >= 0.0) {
        return Err(CliError::Config("p-step must be positive and p-max non-negative".into()));
    }
    let count = (p_max / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();

    let models: Vec<(String, ModelArgs)> = if args.lambdas.is_some() || args.model.is_empty() {
        list(&args.lambdas, &[0.1, 0.2, 0.2307])
            .into_iter()
            .map(|l| {
                let mut m = args.model.clone();
                m.lambda = Some(l);
                m.dim = Some(m.dim.unwrap_or(3));
                (format!("RCM lambda={l}"), m)
            })
            .collect()
    } else {
        vec![("RCM".to_string(), args.model.clone())]
    };

    let mut specs = Vec::new();
    let mut report = Report::default();
    let mut curves = Table::new("curves", &["curve", "p", "zeta"]);
    let mut summary = Table::new(
        "models",
        &[
            "curve",
            "h",
            "zeta3",
            "zeta_prime_0",
            "asymptote_slope",
            "asymptote_intercept",
            "delta",
            "concave",
            "nondecreasing",
        ],
    );
    let mut entropy = Table::new("entropy", &["curve", "a", "dim_d", "rate_r"]);
    for (name, m) in &models {
        let (spec, sol) = solution(m)?;
        specs.push(spec);
        let r = SpectrumReport::build(&sol, &grid, args.a_points.unwrap_or(101))?;
        for (p, z) in r.p.iter().zip(&r.zeta) {
            curves.push(vec![name.as_str().into(), (*p).into(), (*z).into()]);
        }
        summary.push(vec![
            name.as_str().into(),
            r.h.into(),
            r.zeta3.into(),
            r.zeta_prime_0.into(),
            r.asymptote_slope.into(),
            r.asymptote_intercept.into(),
            r.delta.into(),
            r.concave.into(),
            r.nondecreasing.into(),
        ]);
        for ((a, d), rr) in r.a.iter().zip(&r.dim_d).zip(&r.rate_r) {
            entropy.push(vec![name.as_str().into(), (*a).into(), (*d).into(), (*rr).into()]);
        }
    }
    for c in reference_models(&grid, args.mu.unwrap_or(0.2), args.beta_dim.unwrap_or(2.8)) {
        for (p, z) in grid.iter().zip(&c.zeta) {
            curves.push(vec![c.name.as_str().into(), (*p).into(), (*z).into()]);
        }
    }
    if let Some(path) = &args.overlay {
        for (label, p, z) in read_overlay(path)? {
            curves.push(vec![format!("overlay:{label}").into(), p.into(), z.into()]);
        }
    }
    report.scalar("curves", models.len() + 4);
    report.tables = vec![curves, summary, entropy];
    Ok((specs, report))
}

fn read_overlay(path: &PathBuf) -> Result<Vec<(String, f64, f64)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("label")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [label, p, z] => p.parse().ok().zip(z.parse().ok()).map(|(p, z)| (label.to_string(), p, z)),
            _ => None,
        };
        out.push(parsed.ok_or_else(|| {
            CliError::Config(format!("{}:{}: expected label,p,zeta", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SolveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Exponents p at which s_0(p) and the W^{0,p} norm are listed
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Also pull boundary data back from this depth
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_depth: Option<u32>,
    /// Boundary value x of the pull-back (default 0)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pullback_seed: Option<f64>,
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let (spec, sol) = solution(&args.model)?;
    let root = rcm_core::TreeIndex::root(sol.model().d())?;
    let mut report = Report::default();
    report.scalar("q", sol.q());
    report.scalar("u_root", sol.u_of(&root));
    report.scalar("holder_h", sol.holder_h());
    report.scalar("energy", norm_cell(sol.energy()));
    report.scalar("existence_bound", sol.existence_bound());
    report.scalar("recursion_residual", sol.recursion_residual());

    let mut table = Table::new("exponents", &["p", "s0", "xi", "w0p_norm"]);
    for p in list(&args.p, &[1.0, 2.0, 3.0, 4.0, 6.0, 8.0]) {
        let norm = if p >= 1.0 { norm_cell(sol.sobolev_norm(0.0, p)?) } else { f64::NAN };
        table.push(vec![p.into(), sol.s0(p).into(), xi(&sol, p).into(), norm.into()]);
    }
    report.tables.push(table);

    if let Some(depth) = args.pullback_depth {
        let coeffs = GeneralCoefficients::repeated(sol.model().d(), sol.model().coeffs().clone())?;
        let opts = PullbackOptions {
            seed: args.pullback_seed.unwrap_or(0.0),
            ..Default::default()
        };
        let run = pullback(&coeffs, sol.model().alpha(), depth, opts)?;
        report.scalar("pullback_band_lo", run.band().0);
        report.scalar("pullback_band_hi", run.band().1);
        report.scalar("pullback_root", run.root_value());
        let mut rows = Table::new("pullback", &["generation", "min", "max", "mean", "residual", "in_band"]);
        for s in run.stats() {
            rows.push(vec![
                s.generation.into(),
                s.min.into(),
                s.max.into(),
                s.mean.into(),
                s.residual.into(),
                s.in_band.into(),
            ]);
        }
        report.tables.push(rows);
    }
    Ok((vec![spec], report))
}

/// `auto` centres a band of half-width `width` at φ(3/2); otherwise `lo,hi`.
fn band(model: &RcmModel, band: &Option<String>, width: Option<f64>) -> Result<(f64, f64), CliError> {
    let width = width.unwrap_or(0.1);
    match band.as_deref().unwrap_or("auto") {
        "auto" => {
            let c = model.phi(1.5);
            Ok((c - width, c + width))
        }
        text => {
            let parts: Vec<Option<f64>> = text.split(',').map(|s| s.trim().parse().ok()).collect();
            match parts.as_slice() {
                [Some(lo), Some(hi)] if lo < hi => Ok((*lo, *hi)),
                _ => Err(CliError::Config(format!("band must be 'auto' or 'lo,hi', got '{text}'"))),
            }
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DissipationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Generation n of the measure μ_n (default 100)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
    /// 'auto' (φ(3/2) ± width) or 'lo,hi'
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<String>,
    /// Half-width of the automatic band (default 0.1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Largest number of lattice points (default 2e7)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

pub fn dissipation(args: &DissipationArgs) -> Outcome {
    let (spec, sol) = solution(&args.model)?;
    let n = args.n.unwrap_or(100);
    let (lo, hi) = band(sol.model(), &args.band, args.width)?;
    let budget = args.budget.map_or(DEFAULT_LATTICE_BUDGET, u128::from);
    let mu = measure(&sol, n, budget)?;
    let mut report = Report::default();
    report.scalar("n", n);
    report.scalar("band_lo", lo);
    report.scalar("band_hi", hi);
    report.scalar("total_mass", mu.total());
    report.scalar("mass_in_band", mu.mass_in(lo, hi));
    let log2_tail = mu.log2_mass_outside(lo, hi);
    report.scalar("log2_tail", log2_tail);
    report.scalar("empirical_rate", -log2_tail / n as f64);
    report.scalar("theoretical_rate", theoretical_rate(sol.model(), lo, hi)?);
    let mut atoms = Table::new("atoms", &["counts", "sigma", "log2_f", "log2_multiplicity", "log2_mass", "mass"]);
    for a in &mu.atoms {
        let counts: Vec<String> = a.counts.iter().map(u64::to_string).collect();
        atoms.push(vec![
            counts.join(";").into(),
            a.sigma.into(),
            a.log2_f.into(),
            a.log2_multiplicity.into(),
            a.log2_mass.into(),
            a.log2_mass.exp2().into(),
        ]);
    }
    report.tables.push(atoms);
    Ok((vec![spec], report))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Generations n (default 50,100,200,400)
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<Vec<u32>>,
    /// 'auto' (φ(3/2) ± width) or 'lo,hi'
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<String>,
    /// Half-width of the automatic band (default 0.1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    /// Largest number of lattice points per n (default 2e7)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

pub fn concentration(args: &ConcentrationArgs) -> Outcome {
    let (spec, sol) = solution(&args.model)?;
    let ns = args.ns.clone().unwrap_or_else(|| vec![50, 100, 200, 400]);
    let (lo, hi) = band(sol.model(), &args.band, args.width)?;
    let budget = args.budget.map_or(DEFAULT_LATTICE_BUDGET, u128::from);
    let curve = concentration_curve(&sol, lo, hi, &ns, budget)?;
    let mut report = Report::default();
    report.scalar("band_lo", lo);
    report.scalar("band_hi", hi);
    if let Some(first) = curve.first() {
        report.scalar("theoretical_rate", first.theoretical_rate);
    }
    if let [.., a, b] = curve.as_slice() {
        report.scalar("two_point_rate", (a.log2_tail - b.log2_tail) / (b.n as f64 - a.n as f64));
    }
    let mut table = Table::new("concentration", &["n", "mass_in", "tail", "log2_tail", "empirical_rate"]);
    for c in &curve {
        table.push(vec![
            c.n.into(),
            c.mass_in.into(),
            c.tail.into(),
            c.log2_tail.into(),
            c.empirical_rate.into(),
        ]);
    }
    report.tables.push(table);
    Ok((vec![spec], report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClosureArg {
    Zero,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Zero,
    Constant,
    Perturbed,
    Random,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Truncation depth (default 5)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    /// Offspring of the deepest generation (default stationary)
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closure: Option<ClosureArg>,
    /// Initial state (default constant)
    #[arg(long, value_enum)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitArg>,
    /// Relative perturbation for --init perturbed (default 0.1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Upper bound of the values for --init random (default 1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Time step (default 0.1·2^{−α·depth})
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Number of steps (default 1000)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Record every this many steps (default 10)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<usize>,
}

pub fn simulate_cmd(args: &SimulateArgs, seed: u64) -> Outcome {
    let model = args.model.build()?;
    let depth = args.depth.unwrap_or(5);
    let closure = match args.closure.unwrap_or(ClosureArg::Stationary) {
        ClosureArg::Zero => Closure::Zero,
        ClosureArg::Stationary => Closure::Stationary,
    };
    let init = match args.init.unwrap_or(InitArg::Constant) {
        InitArg::Zero => InitialCondition::Zero,
        InitArg::Constant => InitialCondition::Constant,
        InitArg::Perturbed => InitialCondition::Perturbed(args.eps.unwrap_or(0.1)),
        InitArg::Random => InitialCondition::Random {
            seed,
            scale: args.scale.unwrap_or(1.0),
        },
    };
    let dt = args.dt.unwrap_or_else(|| suggested_dt(&model, depth));
    let mut state = TruncatedState::new(&model, depth, closure, init)?;
    let samples = simulate(&mut state, dt, args.steps.unwrap_or(1000), args.every.unwrap_or(10))?;
    let mut report = Report::default();
    report.scalar("dt", dt);
    report.scalar("final_time", state.time());
    report.scalar("max_relative_drift", state.max_relative_drift());
    report.scalar("clamp_total", state.clamp_total());
    let mut table = Table::new("samples", &["t", "energy", "v_root", "distance_to_u", "clamp_total"]);
    for s in samples {
        table.push(vec![
            s.t.into(),
            s.energy.into(),
            s.v_root.into(),
            s.distance_to_u.into(),
            s.clamp_total.into(),
        ]);
    }
    report.tables.push(table);
    Ok((vec![ModelSpec::from(&model)], report))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct StructureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Grid depth M, 2^{dM} cells (default 16 for d = 1)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    /// Mother wavelet, sine or haar (default sine)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mother: Option<String>,
    /// Exponents p (default 0.5,1,...,4)
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    /// Fit window lo,hi in m (default 6,M−4)
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<u32>>,
}

pub fn structure(args: &StructureArgs) -> Outcome {
    let (spec, sol) = solution(&args.model)?;
    let d = sol.model().d();
    let depth = args.depth.unwrap_or(match d {
        1 => 16,
        2 => 11,
        _ => 8,
    });
    let mother: Mother = args.mother.as_deref().unwrap_or("sine").parse()?;
    let ps = args.p.clone().unwrap_or_else(|| linspace(0.5, 4.0, 8));
    let window = match args.window.as_deref() {
        None => default_fit_window(depth),
        Some([lo, hi]) => (*lo, *hi),
        Some(_) => return Err(CliError::Config("window must be lo,hi".into())),
    };
    let field = synthesize(&sol, depth, mother)?;
    let est = structure_function(&field, &ps, 1..depth, window)?;
    let mut report = Report::default();
    report.scalar("depth", depth);
    report.scalar("fit_lo", window.0);
    report.scalar("fit_hi", window.1);
    let mut table = Table::new("exponents", &["p", "zeta_hat", "xi", "target", "relative_error", "fit_rms"]);
    for (i, &p) in ps.iter().enumerate() {
        let target = p.min(xi(&sol, p));
        let got = est.zeta_hat[i].unwrap_or(f64::NAN);
        table.push(vec![
            p.into(),
            got.into(),
            xi(&sol, p).into(),
            target.into(),
            ((got - target) / target).into(),
            est.fit_rms[i].unwrap_or(f64::NAN).into(),
        ]);
    }
    let mut raw = Table::new("structure_function", &["p", "m", "s"]);
    for (i, &p) in ps.iter().enumerate() {
        for (k, &m) in est.m.iter().enumerate() {
            raw.push(vec![p.into(), m.into(), est.s[i][k].into()]);
        }
    }
    report.tables = vec![table, raw];
    Ok((vec![spec], report))
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct LlnArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Path length n (default 10000)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    /// Number of sampled paths (default 1000)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
}

pub fn lln(args: &LlnArgs, seed: u64) -> Outcome {
    let (spec, sol) = solution(&args.model)?;
    let st = lln_sample(&sol, args.samples.unwrap_or(1000), args.n.unwrap_or(10_000), seed)?;
    let mut report = Report::default();
    report.scalar("samples", st.samples);
    report.scalar("n", st.n);
    report.scalar("mean_sigma", st.mean_sigma);
    report.scalar("std_error", st.std_error);
    report.scalar("ell_zero", st.ell_zero);
    report.scalar("z_score", (st.mean_sigma - st.ell_zero) / st.std_error);
    report.scalar("mean_log_ratio_rate", st.mean_log_ratio_rate);
    report.scalar("expected_rate", st.expected_rate);
    Ok((vec![spec], report))
}
