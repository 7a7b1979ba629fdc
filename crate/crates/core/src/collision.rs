//! Implicit collision-time equations.
//!
//! For `v0 > v*` the flight-time equation `(t̃ − t0) v0 = p(t̃)` has exactly one
//! root: `g(t) = (t − t0) v0 − p(t)` has `g' = v0 − ṗ ≥ v0 − sup ṗ > v0/2`, and
//! `a ≤ p ≤ b` pins the root to `[t0 + a/v0, t0 + b/v0]`. The solver works on
//! the offset `s = t̃ − t0` and runs Newton steps safeguarded by bisection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, TimeForcing, TorusPoint};

/// Iteration cap; reaching it means the forcing bounds were wrong.
pub const MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub root: f64,
    /// `root − t0`, carried separately to avoid cancellation.
    pub offset: f64,
    pub residual: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

/// Absolute residual tolerance `1e-12 · max(1, b)`.
pub fn residual_tolerance(upper: f64) -> f64 {
    1e-12 * upper.max(1.0)
}

/// Root of a strictly increasing `g` on `[lo, hi]` with `g(lo) ≤ 0 ≤ g(hi)`.
///
/// `g` returns `(g(x), g'(x))`. Iteration starts with a Newton step from
/// `lo`. Steps that leave the open bracket or meet a slope below `min_slope`
/// are replaced by bisection, so `g` is only ever evaluated inside `[lo, hi]`.
/// Returns `(root, g(root), iterations)`.
pub fn safeguarded_newton<G>(
    g: G,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    min_slope: f64,
) -> Result<(f64, f64, usize)>
where
    G: Fn(f64) -> (f64, f64),
{
    let (g_lo, slope_lo) = g(lo);
    if g_lo.abs() <= tol {
        return Ok((lo, g_lo, 0));
    }
    let (g_hi, _) = g(hi);
    if g_hi.abs() <= tol {
        return Ok((hi, g_hi, 0));
    }
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: g_lo.max(-g_hi),
        });
    }
    let first = lo - g_lo / slope_lo;
    let mut x = if slope_lo >= min_slope && first > lo && first < hi {
        first
    } else {
        0.5 * (lo + hi)
    };
    let mut gx = f64::INFINITY;
    for iter in 1..=MAX_ITER {
        let (val, slope) = g(x);
        gx = val;
        if gx.abs() <= tol {
            return Ok((x, gx, iter));
        }
        if gx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - gx / slope;
        let mid = 0.5 * (lo + hi);
        x = if slope >= min_slope && newton > lo && newton < hi {
            newton
        } else {
            mid
        };
        if mid <= lo || mid >= hi {
            // bracket collapsed to adjacent floats
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITER,
        residual: gx,
    })
}

fn solve_offset<F: TimeForcing + ?Sized>(forcing: &F, t0: f64, v0: f64, tol: f64) -> Result<(f64, f64, usize, f64, f64)> {
    let lo = forcing.lower_bound() / v0;
    let hi = forcing.upper_bound() / v0;
    let g = |s: f64| {
        let jet = forcing.jet_after(t0, s);
        (s * v0 - jet.p, v0 - jet.pdot)
    };
    let (s, residual, iterations) = safeguarded_newton(g, lo, hi, tol, 0.5 * v0)?;
    let pdot = forcing.jet_after(t0, s).pdot;
    debug_assert!(1.0 - pdot / v0 >= 0.5, "implicit-function condition fails at the root");
    Ok((s, residual, iterations, lo, hi))
}

/// Impact time `t̃` at the moving plate for a particle leaving `x = 0` at `t0`
/// with speed `v0`.
///
/// The residual is `(t̃ − t0) v0 − p(t̃)` with `t̃ − t0` carried as the offset;
/// `root = t0 + offset`.
pub fn solve_impact_time<F: TimeForcing + ?Sized>(forcing: &F, t0: f64, v0: f64) -> Result<SolveResult> {
    let threshold = forcing.v_star();
    if !(v0 > threshold) || !v0.is_finite() {
        return Err(Error::BelowThreshold {
            value: v0,
            threshold,
        });
    }
    let tol = residual_tolerance(forcing.upper_bound());
    let (s, residual, iterations, lo, hi) = solve_offset(forcing, t0, v0, tol)?;
    Ok(SolveResult {
        root: t0 + s,
        offset: s,
        residual,
        iterations,
        bracket: (t0 + lo, t0 + hi),
    })
}

/// Solves `τ = P(ω0 + ψ(τ)) / √(2 E0)`.
///
/// The reported residual is the fixed-point residual `τ − P(ω0 + ψ(τ))/√(2E0)`.
pub fn solve_tau(spec: &ForcingSpec, omega0: &TorusPoint, e0: f64) -> Result<SolveResult> {
    let threshold = spec.energy_threshold();
    if !(e0 > threshold) || !e0.is_finite() {
        return Err(Error::BelowThreshold {
            value: e0,
            threshold,
        });
    }
    let v0 = (2.0 * e0).sqrt();
    let path = spec.at(omega0);
    // fixed-point residual tolerance 1e-12 in units of time
    let (tau, g, iterations, lo, hi) = solve_offset(&path, 0.0, v0, 1e-12 * v0)?;
    Ok(SolveResult {
        root: tau,
        offset: tau,
        residual: g / v0,
        iterations,
        bracket: (lo, hi),
    })
}
