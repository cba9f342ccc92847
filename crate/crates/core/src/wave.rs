//! Leapfrog time integration for the coupled system `M z'' + K z = L(t)`.
//!
//! One explicit kernel drives everything: homogeneous solves, backward
//! solves (by time reflection, which reuses the kernel and keeps the
//! forward/backward pair exactly transposed), and controlled solves. The
//! first step is the Taylor start `z¹ = z⁰ + dt z¹ + (dt²/2) M⁻¹(L⁰ - Kz⁰)`
//! and its mirror closes the backward solve at the final time.
//!
//! Two velocity notions coexist:
//! * stored trajectory velocities are centered differences (one-sided
//!   second order at the endpoints), used by energy reports and all
//!   space-time quadratures;
//! * endpoint velocity traces `(z¹-z⁰)/dt ± (dt/2) M⁻¹(Kz - L)` are the
//!   scheme's own initial/final velocities. They make the discrete
//!   transposition identity exact and reverse the scheme without error.

use alloc::vec;
use alloc::vec::Vec;

use crate::discretization::{DiscretizationError, DiscreteOperators, PairField};
#[allow(unused_imports)]
use crate::math::FloatExt;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolveError {
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite state detected at step {0}")]
    NonFiniteState(usize),
    #[error("time series has {got} entries, the grid needs {expected}")]
    GridMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Shape(#[from] DiscretizationError),
}

/// Uniform time grid covering `[0, T]` with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    /// Snaps a requested step so the grid lands exactly on `t_final`.
    pub fn span(t_final: f64, dt_request: f64) -> Self {
        assert!(t_final > 0.0 && dt_request > 0.0);
        let steps = (t_final / dt_request).ceil().max(1.0) as usize;
        Self { dt: t_final / steps as f64, steps }
    }

    pub fn t_final(&self) -> f64 {
        self.dt * self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| k as f64 * self.dt).collect()
    }

    /// Trapezoid weights `dt·(1/2, 1, …, 1, 1/2)` over the grid nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let mut w = vec![self.dt; self.steps + 1];
        w[0] *= 0.5;
        w[self.steps] *= 0.5;
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeMeta {
    pub scheme: &'static str,
    pub dt: f64,
    pub t_final: f64,
    pub steps: usize,
    pub has_source: bool,
}

/// Time-indexed pair states with reconstructed velocities.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PairField>,
    pub velocities: Vec<PairField>,
    pub meta: SchemeMeta,
}

impl Trajectory {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid { dt: self.meta.dt, steps: self.meta.steps }
    }

    pub fn state(&self, k: usize) -> &PairField {
        &self.states[k]
    }

    pub fn velocity(&self, k: usize) -> &PairField {
        &self.velocities[k]
    }
}

/// Time-indexed control, masked to the control regions.
///
/// `zeta` holds the strong-form nodal values `ζ_i = -z_i'' + z_i` (what gets
/// exported and inspected). HUM-synthesized controls also carry
/// `exact_load`, the discrete realization of the duality-sense source; the
/// controlled solve prefers it because the weak action `∫∫_ω z'v'` is what
/// the synthesis actually inverted.
#[derive(Debug, Clone)]
pub struct ControlVector {
    pub zeta: Vec<PairField>,
    pub exact_load: Option<Vec<PairField>>,
}

impl ControlVector {
    pub fn zero(ops: &DiscreteOperators, grid: TimeGrid) -> Self {
        Self { zeta: vec![ops.zeros(); grid.steps + 1], exact_load: None }
    }

    pub fn zeta1(&self, k: usize) -> &[f64] {
        self.zeta[k].comp1()
    }

    pub fn zeta2(&self, k: usize) -> &[f64] {
        self.zeta[k].comp2()
    }
}

fn check_cfl(ops: &DiscreteOperators, dt: f64) -> Result<(), SolveError> {
    let beta = ops.material().beta;
    // Both guards matter: the interior bound caps the nominal CFL factor at
    // 0.9, the Gershgorin bound protects stiff interface couplings.
    let limit = (0.9 * ops.domain().cell_size / beta.sqrt()).min(ops.stable_dt());
    if dt > limit * (1.0 + 1e-12) {
        return Err(SolveError::CflViolation { dt, limit });
    }
    Ok(())
}

/// Raw leapfrog sweep; `loads[k]` is the right-hand side at step `k`.
fn integrate(
    ops: &DiscreteOperators,
    z0: &PairField,
    z1: &PairField,
    loads: Option<&[PairField]>,
    grid: TimeGrid,
) -> Result<Vec<PairField>, SolveError> {
    ops.check_shape(z0)?;
    ops.check_shape(z1)?;
    check_cfl(ops, grid.dt)?;
    if let Some(ls) = loads {
        if ls.len() != grid.steps + 1 {
            return Err(SolveError::GridMismatch { expected: grid.steps + 1, got: ls.len() });
        }
    }

    let dt = grid.dt;
    let n = grid.steps;
    let inv_mass = ops.inv_mass();
    let mut states = Vec::with_capacity(n + 1);

    let mut first = z0.clone();
    ops.enforce_dirichlet(&mut first);
    states.push(first);

    // Taylor start.
    let mut ku = ops.stiffness_action(&states[0]);
    let mut second = states[0].clone();
    {
        let s = second.stacked_mut();
        let v1 = z1.stacked();
        let k = ku.stacked();
        for i in 0..s.len() {
            let l = loads.map_or(0.0, |ls| ls[0].stacked()[i]);
            s[i] += dt * v1[i] + 0.5 * dt * dt * inv_mass[i] * (l - k[i]);
        }
    }
    ops.enforce_dirichlet(&mut second);
    states.push(second);

    for k in 1..n {
        ops.apply_stiffness(&states[k], &mut ku);
        let mut next = ops.zeros();
        {
            let out = next.stacked_mut();
            let cur = states[k].stacked();
            let prev = states[k - 1].stacked();
            let kz = ku.stacked();
            for i in 0..out.len() {
                let l = loads.map_or(0.0, |ls| ls[k].stacked()[i]);
                out[i] = 2.0 * cur[i] - prev[i] + dt * dt * inv_mass[i] * (l - kz[i]);
            }
        }
        if !next.is_finite() {
            return Err(SolveError::NonFiniteState(k + 1));
        }
        states.push(next);
    }
    Ok(states)
}

/// Centered velocities with one-sided second-order endpoints.
fn reconstruct_velocities(states: &[PairField], dt: f64) -> Vec<PairField> {
    let n = states.len() - 1;
    let mut v = Vec::with_capacity(n + 1);
    if n == 1 {
        // Degenerate two-state grid: forward/backward differences.
        let d = PairField::linear_combination(1.0 / dt, &states[1], -1.0 / dt, &states[0]);
        v.push(d.clone());
        v.push(d);
        return v;
    }
    let mut v0 = PairField::linear_combination(-3.0 / (2.0 * dt), &states[0], 4.0 / (2.0 * dt), &states[1]);
    v0.axpy(-1.0 / (2.0 * dt), &states[2]);
    v.push(v0);
    for k in 1..n {
        v.push(PairField::linear_combination(
            1.0 / (2.0 * dt),
            &states[k + 1],
            -1.0 / (2.0 * dt),
            &states[k - 1],
        ));
    }
    let mut vn = PairField::linear_combination(3.0 / (2.0 * dt), &states[n], -4.0 / (2.0 * dt), &states[n - 1]);
    vn.axpy(1.0 / (2.0 * dt), &states[n - 2]);
    v.push(vn);
    v
}

fn wrap(states: Vec<PairField>, grid: TimeGrid, scheme: &'static str, has_source: bool) -> Trajectory {
    let velocities = reconstruct_velocities(&states, grid.dt);
    Trajectory {
        times: grid.times(),
        states,
        velocities,
        meta: SchemeMeta {
            scheme,
            dt: grid.dt,
            t_final: grid.t_final(),
            steps: grid.steps,
            has_source,
        },
    }
}

/// Homogeneous solve of `M z'' + K z = 0` from `(z0, z1)`.
pub fn solve_homogeneous(
    ops: &DiscreteOperators,
    z0: &PairField,
    z1: &PairField,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    let grid = TimeGrid::span(t_final, dt);
    let states = integrate(ops, z0, z1, None, grid)?;
    Ok(wrap(states, grid, "leapfrog", false))
}

/// Forward solve with explicit loads `M z'' + K z = L_k`.
pub fn solve_loaded(
    ops: &DiscreteOperators,
    z0: &PairField,
    z1: &PairField,
    loads: &[PairField],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    let grid = TimeGrid::span(t_final, dt);
    let states = integrate(ops, z0, z1, Some(loads), grid)?;
    Ok(wrap(states, grid, "leapfrog", true))
}

/// Backward solve of `M ψ'' + K ψ = M g` with `ψ(T) = ψ'(T) = 0`,
/// implemented as a forward solve of the time-reflected problem.
pub fn solve_backward(
    ops: &DiscreteOperators,
    source: &[PairField],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    let loads: Vec<PairField> = source
        .iter()
        .map(|g| {
            let mut l = g.clone();
            for (v, m) in l.stacked_mut().iter_mut().zip(ops.mass()) {
                *v *= m;
            }
            l
        })
        .collect();
    solve_backward_loaded(ops, &loads, t_final, dt)
}

/// Backward solve with raw loads (already mass-weighted or duality-built).
pub fn solve_backward_loaded(
    ops: &DiscreteOperators,
    loads: &[PairField],
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    let grid = TimeGrid::span(t_final, dt);
    if loads.len() != grid.steps + 1 {
        return Err(SolveError::GridMismatch { expected: grid.steps + 1, got: loads.len() });
    }
    let reflected: Vec<PairField> = loads.iter().rev().cloned().collect();
    let zero = ops.zeros();
    let mut states = integrate(ops, &zero, &zero, Some(&reflected), grid)?;
    states.reverse();
    Ok(wrap(states, grid, "leapfrog-reflected", true))
}

/// Controlled solve: applies the control as loads `M·(ζχ_ω)`, or the exact
/// duality-sense load when the control carries one.
pub fn solve_controlled(
    ops: &DiscreteOperators,
    u0: &PairField,
    u1: &PairField,
    control: &ControlVector,
    t_final: f64,
    dt: f64,
) -> Result<Trajectory, SolveError> {
    let loads = control_loads(ops, control);
    let grid = TimeGrid::span(t_final, dt);
    if loads.len() != grid.steps + 1 {
        return Err(SolveError::GridMismatch { expected: grid.steps + 1, got: loads.len() });
    }
    let states = integrate(ops, u0, u1, Some(&loads), grid)?;
    Ok(wrap(states, grid, "leapfrog", true))
}

/// Loads entering the controlled equation.
pub fn control_loads(ops: &DiscreteOperators, control: &ControlVector) -> Vec<PairField> {
    if let Some(l) = &control.exact_load {
        return l.clone();
    }
    control
        .zeta
        .iter()
        .map(|z| {
            let mut l = z.clone();
            for (v, m) in l.stacked_mut().iter_mut().zip(ops.mass()) {
                *v *= m;
            }
            l
        })
        .collect()
}

/// The scheme's own initial velocity: `(z¹-z⁰)/dt + (dt/2) M⁻¹(K z⁰ - L⁰)`.
///
/// For a trajectory produced by the Taylor start this recovers the supplied
/// initial velocity exactly; for backward solves it is the trace entering
/// the exact discrete transposition identity.
pub fn start_velocity_trace(
    ops: &DiscreteOperators,
    traj: &Trajectory,
    loads: Option<&[PairField]>,
) -> PairField {
    let dt = traj.meta.dt;
    let k0 = ops.stiffness_action(&traj.states[0]);
    let mut out = PairField::linear_combination(1.0 / dt, &traj.states[1], -1.0 / dt, &traj.states[0]);
    let inv_mass = ops.inv_mass();
    let s = out.stacked_mut();
    for i in 0..s.len() {
        let l = loads.map_or(0.0, |ls| ls[0].stacked()[i]);
        s[i] += 0.5 * dt * inv_mass[i] * (k0.stacked()[i] - l);
    }
    out
}

/// Mirror of [`start_velocity_trace`] at the final time:
/// `(z^N - z^{N-1})/dt - (dt/2) M⁻¹(K z^N - L^N)`.
///
/// Restarting the scheme from `(z^N, -trace)` reverses it without error.
pub fn end_velocity_trace(
    ops: &DiscreteOperators,
    traj: &Trajectory,
    loads: Option<&[PairField]>,
) -> PairField {
    let dt = traj.meta.dt;
    let n = traj.meta.steps;
    let kn = ops.stiffness_action(&traj.states[n]);
    let mut out =
        PairField::linear_combination(1.0 / dt, &traj.states[n], -1.0 / dt, &traj.states[n - 1]);
    let inv_mass = ops.inv_mass();
    let s = out.stacked_mut();
    for i in 0..s.len() {
        let l = loads.map_or(0.0, |ls| ls[n].stacked()[i]);
        s[i] -= 0.5 * dt * inv_mass[i] * (kn.stacked()[i] - l);
    }
    out
}

/// Trapezoid space-time inner product `Σ_k w_k ⟨a_k, b_k⟩` (plain pairing).
pub fn spacetime_dot(grid: TimeGrid, xs: &[PairField], ys: &[PairField]) -> f64 {
    let w = grid.trapezoid_weights();
    xs.iter()
        .zip(ys)
        .zip(&w)
        .map(|((x, y), wk)| wk * x.stacked().iter().zip(y.stacked()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

/// Trapezoid space-time `L²` product `Σ_k w_k ⟨M a_k, b_k⟩`.
pub fn spacetime_mass_dot(
    ops: &DiscreteOperators,
    grid: TimeGrid,
    xs: &[PairField],
    ys: &[PairField],
) -> f64 {
    let w = grid.trapezoid_weights();
    xs.iter()
        .zip(ys)
        .zip(&w)
        .map(|((x, y), wk)| wk * ops.mass_dot(x, y))
        .sum()
}

/// Residual of the transposition identity for a controlled trajectory `u`:
///
/// ```text
/// ∫∫ u g  =  -(U⁰, ψ'(0)) + (U¹, ψ(0)) + ⟨ζχ_ω, ψ⟩,   ψ = backward(g),
/// ```
///
/// evaluated with the scheme's endpoint traces and trapezoid quadratures,
/// normalized by the largest participating term.
pub fn transposition_residual(
    ops: &DiscreteOperators,
    u: &Trajectory,
    data: (&PairField, &PairField),
    control: &ControlVector,
    g: &[PairField],
) -> Result<f64, SolveError> {
    let grid = u.grid();
    if g.len() != grid.steps + 1 {
        return Err(SolveError::GridMismatch { expected: grid.steps + 1, got: g.len() });
    }
    let psi = solve_backward(ops, g, grid.t_final(), grid.dt)?;

    let g_loads: Vec<PairField> = g
        .iter()
        .map(|gk| {
            let mut l = gk.clone();
            for (v, m) in l.stacked_mut().iter_mut().zip(ops.mass()) {
                *v *= m;
            }
            l
        })
        .collect();

    let lhs = spacetime_mass_dot(ops, grid, &u.states, g);

    let psi_v0 = start_velocity_trace(ops, &psi, Some(&g_loads));
    let t1 = -ops.mass_dot(data.0, &psi_v0);
    let t2 = ops.mass_dot(data.1, &psi.states[0]);

    let loads = control_loads(ops, control);
    let t3 = spacetime_dot(grid, &loads, &psi.states);

    let rhs = t1 + t2 + t3;
    let scale = lhs.abs().max(t1.abs()).max(t2.abs()).max(t3.abs()).max(1e-300);
    Ok((lhs - rhs).abs() / scale)
}
