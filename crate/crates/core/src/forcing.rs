//! Quasi-periodic forcing represented over the N-torus.
//!
//! The plate position is `p_ω(t) = P(ω + ψ(t))` where `ψ(t) = ν t mod 1` is the
//! linear flow on `T^N` and `P` is a finite trigonometric polynomial
//!
//! ```text
//! P(θ) = c0 + Σ_k [a_k cos(2π k·θ) + b_k sin(2π k·θ)]
//! ```
//!
//! Flow derivatives are closed form, so `ṗ_ω(t) = ∂ψP(ω + ψ(t))` and the
//! second derivative are evaluated exactly rather than by differencing.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default bound on `|k_i|` for the nonresonance scan.
pub const DEFAULT_RESONANCE_ORDER: i64 = 20;
/// Default smallest admissible `|k·ν|` for nonzero `k` within the scan.
pub const DEFAULT_RESONANCE_TOL: f64 = 1e-9;
/// Default grid resolution per torus axis for the `v*` estimate.
pub const DEFAULT_VSTAR_GRID: usize = 64;

const MAX_GRID_POINTS: usize = 1 << 22;

/// Fractional part in `[0, 1)`.
#[inline]
pub fn frac(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance between two angles measured in turns, in `[0, 0.5]`.
#[inline]
pub fn circular_distance(x: f64, y: f64) -> f64 {
    let d = frac(x - y);
    d.min(1.0 - d)
}

/// Frequency vector `ν` of the linear flow on `T^N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyVector(Vec<f64>);

impl FrequencyVector {
    /// All entries must be finite and nonzero and `nu[0]` must be positive.
    pub fn new(nu: Vec<f64>) -> Result<Self> {
        if nu.is_empty() {
            return Err(Error::InvalidForcing("frequency vector is empty".into()));
        }
        if let Some(x) = nu.iter().find(|x| !x.is_finite() || **x == 0.0) {
            return Err(Error::InvalidForcing(format!(
                "frequencies must be finite and nonzero, got {x}"
            )));
        }
        if nu[0] <= 0.0 {
            return Err(Error::InvalidForcing(format!(
                "nu[0] must be positive, got {}",
                nu[0]
            )));
        }
        Ok(Self(nu))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Return time `S = 1/ν_1` of the flow to the section `θ_1 = 0`.
    pub fn return_time(&self) -> f64 {
        1.0 / self.0[0]
    }

    /// Exhaustive scan over nonzero `k ∈ Z^N` with `|k_i| ≤ order`.
    ///
    /// Returns the lowest-order `k` (by `Σ|k_i|`) with `|k·ν| < tol`, ties
    /// broken by smaller `|k·ν|`. Only one of `±k` is visited.
    pub fn find_resonance(&self, order: i64, tol: f64) -> Option<(Vec<i64>, f64)> {
        let n = self.dim();
        let mut k = vec![-order; n];
        let mut worst: Option<(Vec<i64>, f64)> = None;
        loop {
            // canonical representative: first nonzero entry positive
            if let Some(first) = k.iter().find(|&&x| x != 0) {
                if *first > 0 {
                    let dot: f64 = k.iter().zip(&self.0).map(|(&ki, &nu)| ki as f64 * nu).sum();
                    let v = dot.abs();
                    let order_of = |k: &[i64]| k.iter().map(|x| x.abs()).sum::<i64>();
                    let better = worst
                        .as_ref()
                        .is_none_or(|(wk, w)| (order_of(&k), v) < (order_of(wk), *w));
                    if v < tol && better {
                        worst = Some((k.clone(), v));
                    }
                }
            }
            // odometer increment
            let mut i = 0;
            loop {
                if i == n {
                    return worst;
                }
                if k[i] < order {
                    k[i] += 1;
                    break;
                }
                k[i] = -order;
                i += 1;
            }
        }
    }

    pub fn certify_nonresonant(&self, order: i64, tol: f64) -> Result<()> {
        match self.find_resonance(order, tol) {
            Some((k, value)) => Err(Error::Resonant { k, value }),
            None => Ok(()),
        }
    }
}

impl TryFrom<Vec<f64>> for FrequencyVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyVector> for Vec<f64> {
    fn from(v: FrequencyVector) -> Self {
        v.0
    }
}

/// A point of `T^N` with every coordinate reduced to `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<f64>", into = "Vec<f64>")]
pub struct TorusPoint(Vec<f64>);

impl TorusPoint {
    pub fn new(theta: Vec<f64>) -> Self {
        Self(theta.into_iter().map(frac).collect())
    }

    pub fn zero(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn theta(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Group addition, componentwise mod 1.
    pub fn add(&self, other: &TorusPoint) -> TorusPoint {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(x, y)| frac(x + y)).collect())
    }

    pub fn neg(&self) -> TorusPoint {
        Self(self.0.iter().map(|x| frac(-x)).collect())
    }

    /// Largest componentwise circular distance.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(x, y)| circular_distance(*x, *y))
            .fold(0.0, f64::max)
    }

    pub(crate) fn set_first(&mut self, value: f64) {
        self.0[0] = value;
    }
}

impl From<Vec<f64>> for TorusPoint {
    fn from(v: Vec<f64>) -> Self {
        Self::new(v)
    }
}

impl From<TorusPoint> for Vec<f64> {
    fn from(p: TorusPoint) -> Self {
        p.0
    }
}

/// `ω + ψ(t)`: advance a torus point along the linear flow.
pub fn flow_advance(omega: &TorusPoint, t: f64, nu: &FrequencyVector) -> TorusPoint {
    debug_assert_eq!(omega.dim(), nu.dim());
    TorusPoint(
        omega
            .0
            .iter()
            .zip(nu.as_slice())
            .map(|(th, f)| frac(th + f * t))
            .collect(),
    )
}

/// One Fourier mode `a cos(2π k·θ) + b sin(2π k·θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: Vec<i64>,
    pub a: f64,
    pub b: f64,
}

impl Mode {
    pub fn new(k: Vec<i64>, a: f64, b: f64) -> Self {
        Self { k, a, b }
    }

    pub fn amplitude(&self) -> f64 {
        self.a.hypot(self.b)
    }
}

/// Value and first two time derivatives of the forcing at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub p: f64,
    pub pdot: f64,
    pub pddot: f64,
}

/// Time-domain forcing seen by the collision solver and the successor maps.
pub trait TimeForcing {
    /// Jet at time `t0 + s`.
    ///
    /// Orbits carry large absolute times; splitting off the short flight time
    /// `s` keeps the dependence on `s` smooth at the ulp scale of `t0`.
    fn jet_after(&self, t0: f64, s: f64) -> Jet;

    fn jet(&self, t: f64) -> Jet {
        self.jet_after(t, 0.0)
    }

    /// `a` with `a ≤ p(t)` for all `t`.
    fn lower_bound(&self) -> f64;

    /// `b` with `p(t) ≤ b` for all `t`.
    fn upper_bound(&self) -> f64;

    /// Certified upper bound on `sup_t ṗ(t)`.
    fn pdot_sup(&self) -> f64;

    /// Speed threshold `v* = 2 max(sup ṗ, 0)` above which the successor map is defined.
    fn v_star(&self) -> f64 {
        2.0 * self.pdot_sup().max(0.0)
    }
}

#[derive(Serialize, Deserialize)]
struct ForcingSpecRaw {
    nu: FrequencyVector,
    c0: f64,
    #[serde(default)]
    modes: Vec<Mode>,
}

/// Finite Fourier representation of `P` on `T^N` together with its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ForcingSpecRaw", into = "ForcingSpecRaw")]
pub struct ForcingSpec {
    nu: FrequencyVector,
    c0: f64,
    modes: Vec<Mode>,
    lower: f64,
    upper: f64,
    derivative_bounds: [f64; 3],
    // per mode: k·ν
    kdot_nu: Vec<f64>,
}

impl ForcingSpec {
    /// Validates dimensions and the coefficient bound `a = c0 − Σ|mode| > 0`.
    ///
    /// Nonresonance is certified separately with
    /// [`FrequencyVector::certify_nonresonant`] since its cost grows like `(2Q+1)^N`.
    pub fn new(nu: FrequencyVector, c0: f64, modes: Vec<Mode>) -> Result<Self> {
        if !c0.is_finite() {
            return Err(Error::InvalidForcing("c0 must be finite".into()));
        }
        let n = nu.dim();
        let mut amp_sum = 0.0;
        let mut d = [0.0; 3];
        let mut kdot_nu = Vec::with_capacity(modes.len());
        for m in &modes {
            if m.k.len() != n {
                return Err(Error::InvalidForcing(format!(
                    "mode k = {:?} has dimension {}, expected {n}",
                    m.k,
                    m.k.len()
                )));
            }
            if m.k.iter().all(|&x| x == 0) {
                return Err(Error::InvalidForcing("mode k = 0 belongs in c0".into()));
            }
            if !m.a.is_finite() || !m.b.is_finite() {
                return Err(Error::InvalidForcing(format!(
                    "mode k = {:?} has non-finite coefficients",
                    m.k
                )));
            }
            let kn: f64 = m.k.iter().zip(nu.as_slice()).map(|(&k, &f)| k as f64 * f).sum();
            let amp = m.amplitude();
            let w = TAU * kn.abs();
            amp_sum += amp;
            d[0] += w * amp;
            d[1] += w * w * amp;
            d[2] += w * w * w * amp;
            kdot_nu.push(kn);
        }
        let lower = c0 - amp_sum;
        let upper = c0 + amp_sum;
        if lower <= 0.0 {
            return Err(Error::InvalidForcing(format!(
                "lower bound c0 - Σ|mode| = {lower} must be positive"
            )));
        }
        Ok(Self {
            nu,
            c0,
            modes,
            lower,
            upper,
            derivative_bounds: d,
            kdot_nu,
        })
    }

    pub fn constant(nu: FrequencyVector, c0: f64) -> Result<Self> {
        Self::new(nu, c0, Vec::new())
    }

    /// `c0 = 2`, one mode `k = (1,0)` with `a = 0.1`, `ν = (1, √2)`.
    pub fn standard() -> Self {
        Self::new(
            FrequencyVector::new(vec![1.0, std::f64::consts::SQRT_2]).unwrap(),
            2.0,
            vec![Mode::new(vec![1, 0], 0.1, 0.0)],
        )
        .unwrap()
    }

    /// The standard spec plus a second mode `k = (0,1)`, `b = 0.05`, so the
    /// forcing is genuinely quasi-periodic.
    pub fn standard_two_mode() -> Self {
        Self::new(
            FrequencyVector::new(vec![1.0, std::f64::consts::SQRT_2]).unwrap(),
            2.0,
            vec![
                Mode::new(vec![1, 0], 0.1, 0.0),
                Mode::new(vec![0, 1], 0.0, 0.05),
            ],
        )
        .unwrap()
    }

    pub fn nu(&self) -> &FrequencyVector {
        &self.nu
    }

    pub fn dim(&self) -> usize {
        self.nu.dim()
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// `a = c0 − Σ_k |mode_k|`.
    pub fn lower_bound(&self) -> f64 {
        self.lower
    }

    /// `b = c0 + Σ_k |mode_k|`.
    pub fn upper_bound(&self) -> f64 {
        self.upper
    }

    /// `[D1, D2, D3]`: bounds on the first three flow derivatives of `P`.
    pub fn derivative_bounds(&self) -> [f64; 3] {
        self.derivative_bounds
    }

    /// Certified threshold `v* ≤ 2 max(D1, 0)`.
    pub fn v_star(&self) -> f64 {
        2.0 * self.derivative_bounds[0].max(0.0)
    }

    /// Energy threshold `v*²/2` of the `(t, E)` map.
    pub fn energy_threshold(&self) -> f64 {
        let v = self.v_star();
        0.5 * v * v
    }

    /// `(P, ∂ψP, ∂ψ²P)` at `ω`.
    pub fn eval_jet(&self, omega: &TorusPoint) -> Jet {
        debug_assert_eq!(omega.dim(), self.dim());
        let mut jet = Jet {
            p: self.c0,
            ..Jet::default()
        };
        for (m, &kn) in self.modes.iter().zip(&self.kdot_nu) {
            let phase: f64 = m.k.iter().zip(omega.theta()).map(|(&k, &th)| k as f64 * th).sum();
            accumulate(&mut jet, m, kn, phase);
        }
        jet
    }

    pub fn eval_p(&self, omega: &TorusPoint) -> f64 {
        self.eval_jet(omega).p
    }

    pub fn eval_dpsi_p(&self, omega: &TorusPoint) -> f64 {
        self.eval_jet(omega).pdot
    }

    pub fn eval_dpsi2_p(&self, omega: &TorusPoint) -> f64 {
        self.eval_jet(omega).pddot
    }

    /// `(p_ω(t), ṗ_ω(t), p̈_ω(t))`.
    pub fn eval_p_omega(&self, omega: &TorusPoint, t: f64) -> Jet {
        self.at(omega).jet(t)
    }

    /// The time-domain forcing `p_ω`.
    pub fn at(&self, omega: &TorusPoint) -> ForcingPath<'_> {
        ForcingPath::new(self, omega)
    }

    /// Certified `v*` together with a grid maximisation of `∂ψP`.
    pub fn v_star_report(&self, grid: usize) -> VStarReport {
        let n = self.dim();
        let mut g = grid.max(2);
        while g.checked_pow(n as u32).is_none_or(|total| total > MAX_GRID_POINTS) && g > 2 {
            g /= 2;
        }
        let total = g.pow(n as u32);
        let mut idx = vec![0usize; n];
        let mut theta = vec![0.0; n];
        let mut best = f64::NEG_INFINITY;
        for _ in 0..total {
            for (th, &i) in theta.iter_mut().zip(&idx) {
                *th = i as f64 / g as f64;
            }
            let d = self.eval_dpsi_p(&TorusPoint(theta.clone()));
            best = best.max(d);
            for i in idx.iter_mut() {
                *i += 1;
                if *i < g {
                    break;
                }
                *i = 0;
            }
        }
        let bound = self.v_star();
        let estimate = 2.0 * best.max(0.0);
        VStarReport {
            bound,
            grid_estimate: estimate,
            gap: bound - estimate,
            grid_per_axis: g,
        }
    }
}

impl TryFrom<ForcingSpecRaw> for ForcingSpec {
    type Error = Error;
    fn try_from(raw: ForcingSpecRaw) -> Result<Self> {
        Self::new(raw.nu, raw.c0, raw.modes)
    }
}

impl From<ForcingSpec> for ForcingSpecRaw {
    fn from(s: ForcingSpec) -> Self {
        ForcingSpecRaw {
            nu: s.nu,
            c0: s.c0,
            modes: s.modes,
        }
    }
}

#[inline]
fn accumulate(jet: &mut Jet, m: &Mode, kdot_nu: f64, phase: f64) {
    let (s, c) = (TAU * phase).sin_cos();
    let w = TAU * kdot_nu;
    let val = m.a * c + m.b * s;
    jet.p += val;
    jet.pdot += w * (m.b * c - m.a * s);
    jet.pddot -= w * w * val;
}

/// `v*` bound and its grid estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VStarReport {
    pub bound: f64,
    pub grid_estimate: f64,
    pub gap: f64,
    pub grid_per_axis: usize,
}

/// `p_ω(t) = P(ω + ψ(t))` for a fixed `ω`.
#[derive(Debug, Clone)]
pub struct ForcingPath<'a> {
    spec: &'a ForcingSpec,
    // per mode: k·θ reduced mod 1
    phase0: Vec<f64>,
}

impl<'a> ForcingPath<'a> {
    pub fn new(spec: &'a ForcingSpec, omega: &TorusPoint) -> Self {
        debug_assert_eq!(omega.dim(), spec.dim());
        let phase0 = spec
            .modes
            .iter()
            .map(|m| frac(m.k.iter().zip(omega.theta()).map(|(&k, &th)| k as f64 * th).sum()))
            .collect();
        Self { spec, phase0 }
    }

    pub fn spec(&self) -> &'a ForcingSpec {
        self.spec
    }

    /// `sup_{0 ≤ t ≤ horizon} |p(t + shift) − p(t)|` sampled with step `dt`.
    pub fn translation_deviation(&self, shift: f64, horizon: f64, dt: f64) -> f64 {
        let steps = (horizon / dt).ceil() as usize;
        (0..=steps)
            .map(|i| {
                let t = i as f64 * dt;
                (self.jet_after(t, shift).p - self.jet(t).p).abs()
            })
            .fold(0.0, f64::max)
    }

    /// First `T ∈ [from, to]` on a grid of spacing `step` whose translation
    /// deviation over `[0, horizon]` is below `eps`.
    pub fn find_almost_period(
        &self,
        eps: f64,
        from: f64,
        to: f64,
        step: f64,
        horizon: f64,
        dt: f64,
    ) -> Option<f64> {
        let n = ((to - from) / step).floor() as usize;
        (0..=n)
            .map(|i| from + i as f64 * step)
            .find(|&shift| self.translation_deviation(shift, horizon, dt) < eps)
    }
}

impl TimeForcing for ForcingPath<'_> {
    #[inline]
    fn jet_after(&self, t0: f64, s: f64) -> Jet {
        let mut jet = Jet {
            p: self.spec.c0,
            ..Jet::default()
        };
        for ((m, &kn), &ph0) in self.spec.modes.iter().zip(&self.spec.kdot_nu).zip(&self.phase0) {
            let phase = frac(ph0 + kn * t0) + kn * s;
            accumulate(&mut jet, m, kn, phase);
        }
        jet
    }

    fn lower_bound(&self) -> f64 {
        self.spec.lower
    }

    fn upper_bound(&self) -> f64 {
        self.spec.upper
    }

    fn pdot_sup(&self) -> f64 {
        self.spec.derivative_bounds[0]
    }
}
