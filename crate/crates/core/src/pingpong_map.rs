//! Successor maps of the ping-pong.
//!
//! A particle leaves the fixed wall `x = 0` at time `t0` with speed `v0`, hits
//! the plate `x = p(t)` at `t̃`, is reflected with `v1 = v0 − 2ṗ(t̃)` and comes
//! back at `t1 = t̃ + p(t̃)/v1`. In energy coordinates `E = v²/2` the map is
//! area-preserving. Lifted to `T^N × (0, ∞)` it becomes the skew map
//! `(ω, E) ↦ (ω + ψ(F), E + G)` whose fibres are the planar maps.

use serde::{Deserialize, Serialize};

use crate::collision::{solve_impact_time, solve_tau, SolveResult};
use crate::error::{Error, Result};
use crate::forcing::{flow_advance, ForcingSpec, Jet, TimeForcing, TorusPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStateTV {
    pub t: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseStateTE {
    pub t: f64,
    pub e: f64,
}

impl PhaseStateTE {
    pub fn new(t: f64, e: f64) -> Self {
        Self { t, e }
    }

    pub fn speed(&self) -> f64 {
        (2.0 * self.e).sqrt()
    }
}

impl From<PhaseStateTV> for PhaseStateTE {
    fn from(s: PhaseStateTV) -> Self {
        Self {
            t: s.t,
            e: 0.5 * s.v * s.v,
        }
    }
}

impl From<PhaseStateTE> for PhaseStateTV {
    fn from(s: PhaseStateTE) -> Self {
        Self { t: s.t, v: s.speed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewState {
    pub omega: TorusPoint,
    pub e: f64,
}

/// `(t, v) ↦ (t1, v1)`.
pub fn step_tv<F: TimeForcing + ?Sized>(forcing: &F, s: PhaseStateTV) -> Result<PhaseStateTV> {
    let impact = solve_impact_time(forcing, s.t, s.v)?;
    let jet = forcing.jet_after(s.t, impact.offset);
    let v1 = s.v - 2.0 * jet.pdot;
    Ok(PhaseStateTV {
        t: s.t + (impact.offset + jet.p / v1),
        v: v1,
    })
}

/// `(t, E) ↦ (t1, E1)` together with the impact solve.
pub fn step_te_with_impact<F: TimeForcing + ?Sized>(
    forcing: &F,
    s: PhaseStateTE,
) -> Result<(PhaseStateTE, SolveResult, Jet)> {
    let threshold = 0.5 * forcing.v_star().powi(2);
    if !(s.e > threshold) {
        return Err(Error::BelowThreshold {
            value: s.e,
            threshold,
        });
    }
    let impact = solve_impact_time(forcing, s.t, s.speed())?;
    let jet = forcing.jet_after(s.t, impact.offset);
    // expanded (√E0 − √2 ṗ)²; exact when ṗ = 0
    let e1 = s.e + 2.0 * jet.pdot * (jet.pdot - s.speed());
    let t1 = s.t + (impact.offset + jet.p / (2.0 * e1).sqrt());
    Ok((PhaseStateTE { t: t1, e: e1 }, impact, jet))
}

/// `(t, E) ↦ (t1, E1)` with `E1 = (√E0 − √2 ṗ(t̃))²` and `t1 = t̃ + p(t̃)/√(2E1)`.
pub fn step_te<F: TimeForcing + ?Sized>(forcing: &F, s: PhaseStateTE) -> Result<PhaseStateTE> {
    step_te_with_impact(forcing, s).map(|(next, _, _)| next)
}

/// The skew map `f(ω0, E0) = (ω0 + ψ(F), E0 + G)` with
///
/// ```text
/// F = (1/√(2E0) + 1/√(2E1)) P(ω0 + ψ(τ))
/// G = −2√(2E0) ∂ψP(ω0 + ψ(τ)) + 2 ∂ψP(ω0 + ψ(τ))²
/// ```
///
/// and `τ = τ(ω0, E0)` from [`solve_tau`].
pub fn step_skew(spec: &ForcingSpec, s: &SkewState) -> Result<SkewState> {
    let tau = solve_tau(spec, &s.omega, s.e)?;
    let jet = spec.at(&s.omega).jet_after(0.0, tau.root);
    let v0 = (2.0 * s.e).sqrt();
    let g = -2.0 * v0 * jet.pdot + 2.0 * jet.pdot * jet.pdot;
    let e1 = s.e + g;
    let f = (1.0 / v0 + 1.0 / (2.0 * e1).sqrt()) * jet.p;
    Ok(SkewState {
        omega: flow_advance(&s.omega, f, spec.nu()),
        e: e1,
    })
}

/// How an orbit computation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitStatus {
    /// All `n` requested steps were taken.
    Completed(usize),
    /// The state at this step has `E ≤ E_floor`.
    LeftDomain(usize),
    /// The solver failed while computing this step.
    Diverged(usize),
}

/// Forward orbit with per-state diagnostics.
///
/// `states`, `w_values` and `residuals` have equal length; `residuals[0]` is
/// zero since the initial state has no impact solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub states: Vec<PhaseStateTE>,
    pub residuals: Vec<f64>,
    pub w_values: Vec<f64>,
    pub status: OrbitStatus,
}

/// Default floor: `1.01 · v*²/2`.
pub fn default_energy_floor<F: TimeForcing + ?Sized>(forcing: &F) -> f64 {
    1.01 * 0.5 * forcing.v_star().powi(2)
}

/// Streams an orbit of the `(t, E)` map into `visit(step, state, residual, p)`.
///
/// Iteration stops after `n_max` steps, at the first state with
/// `E ≤ e_floor`, or at a solver failure. The initial state is visited
/// with step `0` and residual `0`.
pub fn iterate_with<F, V>(
    forcing: &F,
    s0: PhaseStateTE,
    n_max: usize,
    e_floor: f64,
    mut visit: V,
) -> Result<OrbitStatus>
where
    F: TimeForcing + ?Sized,
    V: FnMut(usize, &PhaseStateTE, f64, f64),
{
    let threshold = 0.5 * forcing.v_star().powi(2);
    if e_floor < threshold {
        return Err(Error::BelowThreshold {
            value: e_floor,
            threshold,
        });
    }
    if !(s0.e > e_floor) {
        return Err(Error::BelowThreshold {
            value: s0.e,
            threshold: e_floor,
        });
    }
    visit(0, &s0, 0.0, forcing.jet(s0.t).p);
    let mut state = s0;
    for step in 1..=n_max {
        let (next, impact, _) = match step_te_with_impact(forcing, state) {
            Ok(x) => x,
            Err(_) => return Ok(OrbitStatus::Diverged(step)),
        };
        if !next.e.is_finite() || !next.t.is_finite() {
            return Ok(OrbitStatus::Diverged(step));
        }
        // p at the new wall impact, evaluated relative to the previous one
        let p = forcing.jet_after(state.t, next.t - state.t).p;
        visit(step, &next, impact.residual, p);
        if next.e <= e_floor {
            return Ok(OrbitStatus::LeftDomain(step));
        }
        state = next;
    }
    Ok(OrbitStatus::Completed(n_max))
}

/// Forward orbit `(t_n, E_n)` recording `W_n = p(t_n)² E_n` and the solver
/// residual of every step.
pub fn iterate<F: TimeForcing + ?Sized>(
    forcing: &F,
    s0: PhaseStateTE,
    n_max: usize,
    e_floor: f64,
) -> Result<OrbitTrace> {
    let mut states = Vec::with_capacity(n_max + 1);
    let mut residuals = Vec::with_capacity(n_max + 1);
    let mut w_values = Vec::with_capacity(n_max + 1);
    let status = iterate_with(forcing, s0, n_max, e_floor, |_, s, r, p| {
        states.push(*s);
        residuals.push(r);
        w_values.push(p * p * s.e);
    })?;
    Ok(OrbitTrace {
        states,
        residuals,
        w_values,
        status,
    })
}

/// Central-difference Jacobian determinant of [`step_te`] at `s`.
///
/// The time step is `h`; the energy step is `h · max(1, E)` so that both
/// directions carry comparable relative rounding.
pub fn jacobian_det_estimate<F: TimeForcing + ?Sized>(forcing: &F, s: PhaseStateTE, h: f64) -> Result<f64> {
    let dt = h;
    let de = h * s.e.max(1.0);
    let f = |t: f64, e: f64| step_te(forcing, PhaseStateTE { t, e });
    let tp = f(s.t + dt, s.e)?;
    let tm = f(s.t - dt, s.e)?;
    let ep = f(s.t, s.e + de)?;
    let em = f(s.t, s.e - de)?;
    let dt1_dt = (tp.t - tm.t) / (2.0 * dt);
    let de1_dt = (tp.e - tm.e) / (2.0 * dt);
    let dt1_de = (ep.t - em.t) / (2.0 * de);
    let de1_de = (ep.e - em.e) / (2.0 * de);
    Ok(dt1_dt * de1_de - dt1_de * de1_dt)
}

/// `p(t) = c + sin t + 4δ (cos(t/2) − cos³(t/2)/3)`, period `4π`.
///
/// `ṗ(t) = cos t − 2δ sin³(t/2) ≤ 1` for `0 ≤ δ < 1`, with equality exactly at
/// `t ∈ 2πZ`, and `p(0) − p(2π) = 16δ/3`. So `ṗ` peaks at `t = 0` and `t = 2π`
/// with different plate positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwinPeakForcing {
    pub c: f64,
    pub delta: f64,
}

impl TwinPeakForcing {
    pub fn new(c: f64, delta: f64) -> Result<Self> {
        if !(0.0 < delta && delta < 1.0) {
            return Err(Error::InvalidForcing(format!("delta = {delta} must lie in (0, 1)")));
        }
        let f = Self { c, delta };
        if f.lower_bound() <= 0.0 {
            return Err(Error::InvalidForcing(format!(
                "c = {c} too small: lower bound {} must be positive",
                f.lower_bound()
            )));
        }
        Ok(f)
    }

    pub fn formula(&self) -> String {
        format!(
            "p(t) = {} + sin(t) + 4*{}*(cos(t/2) - cos(t/2)^3/3)",
            self.c, self.delta
        )
    }
}

impl TimeForcing for TwinPeakForcing {
    fn jet_after(&self, t0: f64, s: f64) -> Jet {
        let t = t0 + s;
        let (sh, ch) = (0.5 * t).sin_cos();
        let (st, ct) = t.sin_cos();
        Jet {
            p: self.c + st + 4.0 * self.delta * (ch - ch * ch * ch / 3.0),
            pdot: ct - 2.0 * self.delta * sh * sh * sh,
            pddot: -st - 3.0 * self.delta * sh * sh * ch,
        }
    }

    fn lower_bound(&self) -> f64 {
        self.c - 1.0 - 8.0 * self.delta / 3.0
    }

    fn upper_bound(&self) -> f64 {
        self.c + 1.0 + 8.0 * self.delta / 3.0
    }

    fn pdot_sup(&self) -> f64 {
        1.0
    }
}

/// The speed `v1` for which `t̃1 + p1/v1 = t̃2 + p2/v1`, where `gap = t̃2 − t̃1`.
pub fn coincidence_speed(p1: f64, p2: f64, gap: f64) -> f64 {
    (p1 - p2) / gap
}

/// Two distinct states with the same image under [`step_tv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonInjectivityExample {
    pub forcing: TwinPeakForcing,
    pub formula: String,
    pub impact_times: [f64; 2],
    pub v1: f64,
    pub preimages: [PhaseStateTV; 2],
    pub images: [PhaseStateTV; 2],
    /// `(t̃1 + p(t̃1)/v1, v1)` from the construction.
    pub predicted_image: PhaseStateTV,
    pub max_image_difference: f64,
}

/// Builds a pair `(t01, v0) ≠ (t02, v0)` with a common successor.
///
/// `ṗ` attains its maximum at `t̃1 < t̃2` with `p(t̃1) > p(t̃2)`. Choosing
/// `v1` by [`coincidence_speed`], `v0 = v1 + 2ṗ(t̃1)` and
/// `t0i = t̃i − p(t̃i)/v0` makes both impacts happen at `t̃i` and both
/// reflections return at the same time with the same speed.
pub fn build_noninjectivity_example() -> Result<NonInjectivityExample> {
    let forcing = TwinPeakForcing::new(3.0, 0.3)?;
    let tt = [0.0, 2.0 * std::f64::consts::PI];
    let jets = tt.map(|t| forcing.jet(t));

    // both impact times must be global maximisers of ṗ
    let sup = forcing.pdot_sup();
    let grid_max = (0..=40_000)
        .map(|i| forcing.jet(i as f64 * 4.0 * std::f64::consts::PI / 40_000.0).pdot)
        .fold(f64::NEG_INFINITY, f64::max);
    if grid_max > sup + 1e-12 || jets.iter().any(|j| (j.pdot - sup).abs() > 1e-12) {
        return Err(Error::ConstructionFailed(format!(
            "pdot does not peak at both impact times (grid max {grid_max}, values {:?})",
            jets.map(|j| j.pdot)
        )));
    }
    if !(jets[0].p > jets[1].p) {
        return Err(Error::ConstructionFailed("p(t~1) must exceed p(t~2)".into()));
    }

    let v1 = coincidence_speed(jets[0].p, jets[1].p, tt[1] - tt[0]);
    let v0 = v1 + 2.0 * jets[0].pdot;
    let preimages = [0, 1].map(|i| PhaseStateTV {
        t: tt[i] - jets[i].p / v0,
        v: v0,
    });
    let images = [step_tv(&forcing, preimages[0])?, step_tv(&forcing, preimages[1])?];
    let predicted_image = PhaseStateTV {
        t: tt[0] + jets[0].p / v1,
        v: v1,
    };
    let max_image_difference = (images[0].t - images[1].t)
        .abs()
        .max((images[0].v - images[1].v).abs());
    if max_image_difference > 1e-9 {
        return Err(Error::ConstructionFailed(format!(
            "images differ by {max_image_difference:e}"
        )));
    }
    Ok(NonInjectivityExample {
        forcing,
        formula: forcing.formula(),
        impact_times: tt,
        v1,
        preimages,
        images,
        predicted_image,
        max_image_difference,
    })
}

/// Outcome of [`injectivity_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectivityProbe {
    pub energies: Vec<f64>,
    /// Grid pairs `t_i < t_j` whose returns at the probed speed are out of order.
    pub violations: Vec<usize>,
    /// Smallest probed energy from which every larger probed energy passes.
    pub smallest_passing: Option<f64>,
}

/// Empirical injectivity threshold for images of energy `E = v²/2`.
///
/// An image `(t1, v)` has one preimage per impact time `t̃` with
/// `t̃ + p(t̃)/v = t1`. Two grid points whose return times are out of order
/// bracket two impact times with a common image, so a monotone return map on
/// the grid is the pairwise test. This is a grid estimate, not a proof.
pub fn injectivity_probe<F: TimeForcing + ?Sized>(
    forcing: &F,
    window: (f64, f64),
    n_grid: usize,
    energies: &[f64],
) -> Result<InjectivityProbe> {
    let (lo, hi) = window;
    if !(lo < hi) || n_grid < 2 || energies.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Config("injectivity probe needs lo < hi, n_grid >= 2, positive energies".into()));
    }
    let mut energies = energies.to_vec();
    energies.sort_by(f64::total_cmp);
    let h = (hi - lo) / (n_grid - 1) as f64;
    let p: Vec<f64> = (0..n_grid).map(|i| forcing.jet(lo + i as f64 * h).p).collect();
    let violations: Vec<usize> = energies
        .iter()
        .map(|&e| {
            let v = (2.0 * e).sqrt();
            // consecutive order on the grid is equivalent to pairwise order
            p.windows(2).filter(|w| !(h + (w[1] - w[0]) / v > 0.0)).count()
        })
        .collect();
    let smallest_passing = match violations.iter().rposition(|&n| n > 0) {
        None => energies.first().copied(),
        Some(k) => energies.get(k + 1).copied(),
    };
    Ok(InjectivityProbe {
        energies,
        violations,
        smallest_passing,
    })
}
