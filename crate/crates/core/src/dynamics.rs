//! Galerkin truncation of the time-dependent model to generations `0..=n`,
//! integrated with the classical fourth-order Runge–Kutta scheme.
//!
//! Stiffness grows like `2^{αn}`; a step of about `0.1 · 2^{−αn}` is a safe
//! starting point (see [`suggested_dt`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dissipation::{boundary_of, check_prefix_closed};
use crate::error::{domain, RcmError, Result};
use crate::model::RcmModel;
use crate::numeric::pairwise_sum;
use crate::solution::ConstantSolution;
use crate::tree::{generation_offset, TreeIndex};

/// Nodes per parallel work unit in the right-hand side.
const CHUNK: usize = 1024;

/// Offspring terms for nodes of the deepest generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// Nodes past the truncation are zero (free truncation).
    Zero,
    /// Nodes past the truncation are frozen at the constant solution.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Zero,
    Constant,
    /// `(1 + ε) u_j`
    Perturbed(f64),
    /// Independent uniform values in `[0, scale)`.
    Random { seed: u64, scale: f64 },
}

/// `0.1 · 2^{−α n}`
pub fn suggested_dt(model: &RcmModel, depth: u32) -> f64 {
    0.1 * (-model.alpha() * depth as f64).exp2()
}

#[derive(Debug, Clone)]
pub struct TruncatedState {
    depth: u32,
    closure: Closure,
    t: f64,
    clamp_total: f64,
    values: Vec<f64>,
    /// `c_j` for every stored node, generation-major.
    coupling: Vec<f64>,
    /// `Σ_{k∈O_j} c_k u_k` for the deepest generation under the stationary
    /// closure, zero otherwise.
    closure_flux: Vec<f64>,
    reference: Vec<f64>,
    model: RcmModel,
}

impl TruncatedState {
    pub fn new(
        model: &RcmModel,
        depth: u32,
        closure: Closure,
        init: InitialCondition,
    ) -> Result<Self> {
        let d = model.d();
        if depth as u64 * d as u64 > 26 {
            return Err(RcmError::ResourceLimit {
                what: "truncated state",
                needed: generation_offset(d, depth + 1) as u128,
                budget: 1 << 26,
            });
        }
        let len = generation_offset(d, depth + 1) as usize;
        let sol = ConstantSolution::new(model.clone());
        let mut coupling = Vec::with_capacity(len);
        let mut reference = Vec::with_capacity(len);
        for g in 0..=depth {
            for j in TreeIndex::generation_iter(d, g)? {
                let dj = j.last_label().map(|k| model.delta(k)).unwrap_or(1.0);
                coupling.push(model.params().c(dj, g));
                reference.push(sol.u_of(&j));
            }
        }
        let closure_flux = match closure {
            Closure::Zero => vec![0.0; 1 << (d * depth)],
            Closure::Stationary => TreeIndex::generation_iter(d, depth)?
                .map(|j| {
                    j.offspring()
                        .expect("depth is below packed capacity")
                        .iter()
                        .map(|k| {
                            model.params().c(model.delta(k.last_label().unwrap()), depth + 1)
                                * sol.u_of(k)
                        })
                        .sum()
                })
                .collect(),
        };
        let values = match init {
            InitialCondition::Zero => vec![0.0; len],
            InitialCondition::Constant => reference.clone(),
            InitialCondition::Perturbed(eps) => reference.iter().map(|u| (1.0 + eps) * u).collect(),
            InitialCondition::Random { seed, scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..len).map(|_| scale * rng.random::<f64>()).collect()
            }
        };
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return domain("initial values must be finite and non-negative");
        }
        Ok(Self {
            depth,
            closure,
            t: 0.0,
            clamp_total: 0.0,
            values,
            coupling,
            closure_flux,
            reference,
            model: model.clone(),
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn closure(&self) -> Closure {
        self.closure
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn clamp_total(&self) -> f64 {
        self.clamp_total
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn model(&self) -> &RcmModel {
        &self.model
    }

    /// Position of `j` in the flat array, if stored.
    pub fn slot(&self, j: &TreeIndex) -> Option<usize> {
        (j.generation() <= self.depth)
            .then(|| generation_offset(self.model.d(), j.generation()) as usize + j.code() as usize)
    }

    pub fn value(&self, j: &TreeIndex) -> Option<f64> {
        self.slot(j).map(|i| self.values[i])
    }

    /// `Σ_j v_j²`
    pub fn energy(&self) -> f64 {
        pairwise_sum(&self.values.iter().map(|v| v * v).collect::<Vec<_>>())
    }

    /// `Σ_j (v_j − u_j)²`
    pub fn distance_to_constant(&self) -> f64 {
        let sq: Vec<f64> = self
            .values
            .iter()
            .zip(&self.reference)
            .map(|(v, u)| (v - u) * (v - u))
            .collect();
        pairwise_sum(&sq)
    }

    /// Largest `|v_j − u_j| / u_j`.
    pub fn max_relative_drift(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.reference)
            .map(|(v, u)| (v - u).abs() / u)
            .fold(0.0, f64::max)
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.values.len()];
        self.rhs_into(&self.values, &mut out);
        out
    }

    /// `v'_j = c_j v_{j̄}² − Σ_{k∈O_j} c_k v_j v_k`, with `v_{∅̄} = f`.
    fn rhs_into(&self, v: &[f64], out: &mut [f64]) {
        let d = self.model.d();
        let n_children = 1usize << d;
        let f = self.model.f();
        let deepest = generation_offset(d, self.depth) as usize;
        out.par_chunks_mut(CHUNK).enumerate().for_each(|(chunk, slots)| {
            let start = chunk * CHUNK;
            let mut g = generation_of(d, start);
            let mut g_start = generation_offset(d, g) as usize;
            let mut g_end = generation_offset(d, g + 1) as usize;
            for (o, slot) in slots.iter_mut().enumerate() {
                let i = start + o;
                if i >= g_end {
                    g += 1;
                    g_start = g_end;
                    g_end = generation_offset(d, g + 1) as usize;
                }
                let code = i - g_start;
                let parent = if g == 0 {
                    f
                } else {
                    v[generation_offset(d, g - 1) as usize + (code >> d)]
                };
                let gain = self.coupling[i] * parent * parent;
                let loss = if i >= deepest {
                    self.closure_flux[i - deepest]
                } else {
                    let first = g_end + code * n_children;
                    (first..first + n_children)
                        .map(|k| self.coupling[k] * v[k])
                        .sum::<f64>()
                };
                *slot = gain - loss * v[i];
            }
        });
    }

    /// One fourth-order Runge–Kutta step, then clamp negatives to zero.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return domain(format!("time step must be positive, got {dt}"));
        }
        let len = self.values.len();
        let mut k1 = vec![0.0; len];
        let mut k2 = vec![0.0; len];
        let mut k3 = vec![0.0; len];
        let mut k4 = vec![0.0; len];
        let mut tmp = vec![0.0; len];
        let v = &self.values;
        self.rhs_into(v, &mut k1);
        axpy_into(&mut tmp, v, 0.5 * dt, &k1);
        self.rhs_into(&tmp, &mut k2);
        axpy_into(&mut tmp, v, 0.5 * dt, &k2);
        self.rhs_into(&tmp, &mut k3);
        axpy_into(&mut tmp, v, dt, &k3);
        self.rhs_into(&tmp, &mut k4);
        let mut clamp = 0.0;
        for i in 0..len {
            let next = v[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if !next.is_finite() {
                return Err(RcmError::NonFinite(format!("v at slot {i}, t = {}", self.t)));
            }
            if next < 0.0 {
                clamp -= next;
                tmp[i] = 0.0;
            } else {
                tmp[i] = next;
            }
        }
        self.values = tmp;
        self.clamp_total += clamp;
        self.t += dt;
        Ok(())
    }
}

fn axpy_into(out: &mut [f64], v: &[f64], a: f64, k: &[f64]) {
    out.par_iter_mut()
        .with_min_len(CHUNK)
        .enumerate()
        .for_each(|(i, o)| *o = v[i] + a * k[i]);
}

fn generation_of(d: u32, slot: usize) -> u32 {
    let mut g = 0;
    while generation_offset(d, g + 1) as usize <= slot {
        g += 1;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub energy: f64,
    pub v_root: f64,
    pub distance_to_u: f64,
    pub clamp_total: f64,
}

impl Sample {
    fn of(s: &TruncatedState) -> Self {
        Self {
            t: s.t,
            energy: s.energy(),
            v_root: s.values[0],
            distance_to_u: s.distance_to_constant(),
            clamp_total: s.clamp_total,
        }
    }
}

/// Integrate `steps` steps, recording every `every` steps (and the start).
///
/// Rejects the run when the clamped mass per unit time exceeds `1e-8` times
/// the state norm.
pub fn simulate(
    state: &mut TruncatedState,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<Vec<Sample>> {
    let every = every.max(1);
    let mut out = vec![Sample::of(state)];
    let t0 = state.t;
    let c0 = state.clamp_total;
    for i in 1..=steps {
        state.step(dt)?;
        if i % every == 0 || i == steps {
            out.push(Sample::of(state));
        }
    }
    let elapsed = state.t - t0;
    let clamped = state.clamp_total - c0;
    let norm = state.energy().sqrt();
    if elapsed > 0.0 && clamped / elapsed > 1e-8 * norm.max(f64::MIN_POSITIVE) {
        return Err(RcmError::Unstable(format!(
            "clamped {clamped:e} over t = {elapsed}; reduce the time step"
        )));
    }
    Ok(out)
}

/// `(t, Σ_j (v_j − u_j)²)` along a stationary-closure run.
pub fn relax_to_constant(
    state: &mut TruncatedState,
    dt: f64,
    steps: usize,
    every: usize,
) -> Result<Vec<(f64, f64)>> {
    if state.closure != Closure::Stationary {
        return domain("relaxation is measured against the stationary closure");
    }
    Ok(simulate(state, dt, steps, every)?
        .into_iter()
        .map(|s| (s.t, s.distance_to_u))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBalance {
    pub times: Vec<f64>,
    /// Finite-difference `d/dt Σ_T v_j²`.
    pub lhs: Vec<f64>,
    /// `2 f² v_∅ − Σ_{j∈∂T} 2 c_j v_{j̄}² v_j`
    pub rhs: Vec<f64>,
    /// `|lhs − rhs| / (|input| + Σ |flux|)`
    pub relative_residual: Vec<f64>,
}

impl EnergyBalance {
    pub fn max_residual(&self) -> f64 {
        self.relative_residual.iter().copied().fold(0.0, f64::max)
    }
}

/// Run `steps` steps from `state` and compare the energy of `t` against its
/// boundary fluxes, using a five-point centred difference in time.
pub fn energy_balance(
    state: &mut TruncatedState,
    t: &[TreeIndex],
    dt: f64,
    steps: usize,
) -> Result<EnergyBalance> {
    check_prefix_closed(t)?;
    if let Some(j) = t.iter().find(|j| j.generation() >= state.depth) {
        return domain(format!(
            "node {j} reaches the truncation depth {}; its boundary is not represented",
            state.depth
        ));
    }
    if steps < 5 {
        return domain("need at least five steps for the centred difference");
    }
    let slots: Vec<usize> = t.iter().map(|j| state.slot(j).unwrap()).collect();
    let boundary: Vec<(usize, usize, f64)> = boundary_of(t)?
        .into_iter()
        .map(|j| {
            let i = state.slot(&j).unwrap();
            let p = state.slot(&j.parent().unwrap()).unwrap();
            (i, p, state.coupling[i])
        })
        .collect();
    let f2 = state.model.f() * state.model.f();
    let mut energy = Vec::with_capacity(steps + 1);
    let mut input = Vec::with_capacity(steps + 1);
    let mut flux = Vec::with_capacity(steps + 1);
    let mut times = Vec::with_capacity(steps + 1);
    let mut record = |s: &TruncatedState| {
        let v = &s.values;
        energy.push(pairwise_sum(&slots.iter().map(|&i| v[i] * v[i]).collect::<Vec<_>>()));
        input.push(2.0 * f2 * v[0]);
        flux.push(pairwise_sum(
            &boundary
                .iter()
                .map(|&(i, p, c)| 2.0 * c * v[p] * v[p] * v[i])
                .collect::<Vec<_>>(),
        ));
        times.push(s.t);
    };
    record(state);
    for _ in 0..steps {
        state.step(dt)?;
        record(state);
    }
    let mut out = EnergyBalance {
        times: Vec::new(),
        lhs: Vec::new(),
        rhs: Vec::new(),
        relative_residual: Vec::new(),
    };
    for i in 2..=steps - 2 {
        let lhs = (-energy[i + 2] + 8.0 * energy[i + 1] - 8.0 * energy[i - 1] + energy[i - 2])
            / (12.0 * dt);
        let rhs = input[i] - flux[i];
        let scale = input[i].abs() + flux[i].abs();
        out.times.push(times[i]);
        out.lhs.push(lhs);
        out.rhs.push(rhs);
        out.relative_residual
            .push((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat1() -> RcmModel {
        RcmModel::flat(1, 1.5, 1.0).unwrap()
    }

    #[test]
    fn zero_state_has_only_root_forcing() {
        let s = TruncatedState::new(&flat1(), 3, Closure::Zero, InitialCondition::Zero).unwrap();
        let r = s.rhs();
        assert_eq!(r[0], 1.0);
        assert!(r[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn three_node_system_by_hand() {
        let m = RcmModel::from_deltas(1, 1.5, 2.0, vec![0.7, 1.3]).unwrap();
        let init = InitialCondition::Random { seed: 9, scale: 1.0 };
        let s = TruncatedState::new(&m, 1, Closure::Zero, init).unwrap();
        let v = s.values();
        let c1 = 0.7 * 1.5f64.exp2();
        let c2 = 1.3 * 1.5f64.exp2();
        let expect = [
            4.0 - (c1 * v[1] + c2 * v[2]) * v[0],
            c1 * v[0] * v[0],
            c2 * v[0] * v[0],
        ];
        for (a, b) in s.rhs().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn constant_state_is_an_equilibrium() {
        let m = RcmModel::from_deltas(1, 1.5, 1.0, vec![1.0, 2.0]).unwrap();
        let s = TruncatedState::new(&m, 6, Closure::Stationary, InitialCondition::Constant)
            .unwrap();
        let r = s.rhs();
        for (x, u) in r.iter().zip(s.values()) {
            assert!(x.abs() <= 1e-12 * u);
        }
    }

    #[test]
    fn zero_start_grows_root() {
        let mut s =
            TruncatedState::new(&flat1(), 3, Closure::Zero, InitialCondition::Zero).unwrap();
        s.step(1e-3).unwrap();
        assert!((s.values()[0] / 1e-3 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn balance_rejects_deep_sets() {
        let mut s =
            TruncatedState::new(&flat1(), 2, Closure::Zero, InitialCondition::Constant).unwrap();
        let t: Vec<TreeIndex> = (0..=2)
            .flat_map(|g| TreeIndex::generation_iter(1, g).unwrap())
            .collect();
        assert!(energy_balance(&mut s, &t, 1e-3, 10).is_err());
    }
}
