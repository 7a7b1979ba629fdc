//! Monte-Carlo census of escaping versus recurrent orbits.
//!
//! Escape is not decidable in finite time. An orbit is an escape candidate at
//! horizon `h` when its energy has exceeded `E_esc` and has neither come back
//! to `[E_floor, 2 E0]` nor left the domain by step `h`. Reported fractions are
//! upper bounds on the escape-candidate measure at that horizon only.
//!
//! Classification priority at a horizon is Returned, LeftDomain,
//! EscapingCandidate, Alive. Every event is a first-passage step, so an orbit
//! that is Returned at `h` stays Returned at any later horizon.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, TimeForcing, TorusPoint};
use crate::pingpong_map::{iterate_with, OrbitStatus, OrbitTrace, PhaseStateTE};
use crate::rng::CounterRng;
use crate::stats::{quantile_sorted, wilson_interval};
use crate::torus_flow::haar_sample;

/// Quantile levels reported for velocity growth.
pub const GROWTH_QUANTILES: [f64; 3] = [0.5, 0.9, 0.99];

/// Absent fields take the [`Default`] values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensusConfig {
    pub n_omega: usize,
    pub n_orbits: usize,
    pub t0_range: (f64, f64),
    pub e0_range: (f64, f64),
    pub n_max: usize,
    pub e_esc: f64,
    /// `None` selects `1.01 · v*²/2`.
    pub e_floor: Option<f64>,
    /// Relative half-width of the initial-energy window used by the
    /// recurrence profile; `0` means exact return.
    pub return_window: f64,
    pub seed: u64,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self {
            n_omega: 8,
            n_orbits: 1000,
            t0_range: (0.0, 1.0),
            e0_range: (10.0, 30.0),
            n_max: 10_000,
            e_esc: 60.0,
            e_floor: None,
            return_window: 0.002,
            seed: 1,
        }
    }
}

impl CensusConfig {
    /// Energy floor resolved against `spec`.
    pub fn floor(&self, spec: &ForcingSpec) -> f64 {
        self.e_floor.unwrap_or_else(|| 1.01 * spec.energy_threshold())
    }

    pub fn horizons(&self) -> [usize; 3] {
        [(self.n_max / 4).max(1), (self.n_max / 2).max(1), self.n_max]
    }

    pub fn validate(&self, spec: &ForcingSpec) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_omega == 0 || self.n_orbits == 0 {
            return bad("n_omega and n_orbits must be positive".into());
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1".into());
        }
        let (t_lo, t_hi) = self.t0_range;
        if !(t_lo.is_finite() && t_hi.is_finite() && t_lo <= t_hi) {
            return bad(format!("t0_range [{t_lo}, {t_hi}] is not a finite interval"));
        }
        let threshold = spec.energy_threshold();
        let floor = self.floor(spec);
        if floor < threshold {
            return bad(format!("e_floor {floor} is below the energy threshold {threshold}"));
        }
        let (e_lo, e_hi) = self.e0_range;
        if !(e_lo > floor && e_lo <= e_hi && e_hi.is_finite()) {
            return bad(format!(
                "e0_range [{e_lo}, {e_hi}] must be an interval above the floor {floor}"
            ));
        }
        if !(self.e_esc > e_hi) || !self.e_esc.is_finite() {
            return bad(format!("e_esc {} must exceed sup e0_range {e_hi}", self.e_esc));
        }
        if !(self.return_window >= 0.0 && self.return_window < 1.0) {
            return bad(format!("return_window {} must lie in [0, 1)", self.return_window));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    EscapingCandidate,
    Returned,
    LeftDomain,
    Alive,
}

/// First-passage steps of one orbit; everything needed to classify it at
/// any horizon up to the simulated one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitEvents {
    pub e0: f64,
    /// First step with `E > E_esc`.
    pub exceed_step: Option<usize>,
    /// First step after `exceed_step` with `E ∈ [E_floor, 2 E0]`.
    pub return_step: Option<usize>,
    /// Step at which `E ≤ E_floor`.
    pub left_step: Option<usize>,
    /// First step `≥ 1` with `|E − E0| ≤ window · E0`.
    pub window_return_step: Option<usize>,
    /// Last step simulated.
    pub last_step: usize,
}

impl OrbitEvents {
    fn start(e0: f64) -> Self {
        Self {
            e0,
            exceed_step: None,
            return_step: None,
            left_step: None,
            window_return_step: None,
            last_step: 0,
        }
    }

    fn observe(&mut self, step: usize, e: f64, cfg: &CensusConfig, floor: f64) {
        self.last_step = step;
        if step == 0 {
            return;
        }
        if self.exceed_step.is_none() {
            if e > cfg.e_esc {
                self.exceed_step = Some(step);
            }
        } else if self.return_step.is_none() && e >= floor && e <= 2.0 * self.e0 {
            self.return_step = Some(step);
        }
        if self.left_step.is_none() && e <= floor {
            self.left_step = Some(step);
        }
        if self.window_return_step.is_none() && (e - self.e0).abs() <= cfg.return_window * self.e0 {
            self.window_return_step = Some(step);
        }
    }

    pub fn from_trace(trace: &OrbitTrace, cfg: &CensusConfig, floor: f64) -> Self {
        let mut ev = Self::start(trace.states.first().map_or(f64::NAN, |s| s.e));
        for (step, s) in trace.states.iter().enumerate() {
            ev.observe(step, s.e, cfg, floor);
        }
        ev
    }

    pub fn classify(&self, horizon: usize) -> Classification {
        let by = |x: Option<usize>| x.is_some_and(|s| s <= horizon);
        if by(self.return_step) {
            Classification::Returned
        } else if by(self.left_step) {
            Classification::LeftDomain
        } else if by(self.exceed_step) {
            Classification::EscapingCandidate
        } else {
            Classification::Alive
        }
    }
}

/// Classification of a finished trace at the horizon `cfg.n_max`.
pub fn classify_orbit(trace: &OrbitTrace, cfg: &CensusConfig, floor: f64) -> Classification {
    OrbitEvents::from_trace(trace, cfg, floor).classify(cfg.n_max)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub escaping_candidate: usize,
    pub returned: usize,
    pub left_domain: usize,
    pub alive: usize,
}

impl ClassCounts {
    fn add(&mut self, c: Classification) {
        match c {
            Classification::EscapingCandidate => self.escaping_candidate += 1,
            Classification::Returned => self.returned += 1,
            Classification::LeftDomain => self.left_domain += 1,
            Classification::Alive => self.alive += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.escaping_candidate + self.returned + self.left_domain + self.alive
    }
}

/// Escape-candidate fraction at one horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeFraction {
    pub horizon: usize,
    pub counts: ClassCounts,
    pub fraction: f64,
    /// Binomial standard error `sqrt(f (1 − f) / n)`.
    pub sigma: f64,
    pub wilson95: (f64, f64),
}

impl EscapeFraction {
    fn from_counts(horizon: usize, counts: ClassCounts) -> Self {
        let n = counts.total();
        let k = counts.escaping_candidate;
        let fraction = k as f64 / n as f64;
        Self {
            horizon,
            counts,
            fraction,
            sigma: (fraction * (1.0 - fraction) / n as f64).sqrt(),
            wilson95: wilson_interval(k, n),
        }
    }
}

/// Quantiles of `sqrt(max_{n ≤ horizon} E_n / E0)` at [`GROWTH_QUANTILES`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthQuantiles {
    pub levels: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaCensus {
    pub index: usize,
    pub omega: TorusPoint,
    pub escape: Vec<EscapeFraction>,
    pub velocity_growth: GrowthQuantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusReport {
    pub config: CensusConfig,
    pub e_floor: f64,
    pub horizons: Vec<usize>,
    pub per_omega: Vec<OmegaCensus>,
    /// All ω pooled.
    pub pooled: Vec<EscapeFraction>,
    pub velocity_growth: GrowthQuantiles,
}

/// Result of one simulated orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSummary {
    pub events: OrbitEvents,
    /// `sqrt(max E / E0)` over the full horizon.
    pub velocity_growth: f64,
}

/// Initial condition of orbit `j` at ω index `i`; depends only on
/// `(seed, i, j)`.
pub fn initial_state(cfg: &CensusConfig, omega_index: usize, orbit_index: usize) -> PhaseStateTE {
    let u = CounterRng::new(cfg.seed)
        .substream2(1 + omega_index as u64, orbit_index as u64)
        .uniforms(0, 2);
    let (t_lo, t_hi) = cfg.t0_range;
    let (e_lo, e_hi) = cfg.e0_range;
    PhaseStateTE::new(t_lo + u[0] * (t_hi - t_lo), (e_lo + u[1] * (e_hi - e_lo)).min(e_hi))
}

/// Haar-random base points `ω_0 … ω_{n_omega−1}`.
pub fn census_omegas(cfg: &CensusConfig, dim: usize) -> Vec<TorusPoint> {
    haar_sample(&CounterRng::new(cfg.seed).substream(0), 0, cfg.n_omega, dim)
}

fn simulate_orbit<F: TimeForcing + ?Sized>(
    forcing: &F,
    s0: PhaseStateTE,
    cfg: &CensusConfig,
    floor: f64,
) -> Result<OrbitSummary> {
    let mut ev = OrbitEvents::start(s0.e);
    let mut max_e = s0.e;
    let status = iterate_with(forcing, s0, cfg.n_max, floor, |step, s, _, _| {
        ev.observe(step, s.e, cfg, floor);
        max_e = max_e.max(s.e);
    })?;
    if let OrbitStatus::Diverged(step) = status {
        return Err(Error::NoConvergence {
            iterations: step,
            residual: f64::NAN,
        });
    }
    Ok(OrbitSummary {
        events: ev,
        velocity_growth: (max_e / s0.e).sqrt(),
    })
}

/// Per-orbit summaries indexed `[ω index][orbit index]`.
pub fn simulate_census(spec: &ForcingSpec, cfg: &CensusConfig) -> Result<(Vec<TorusPoint>, Vec<Vec<OrbitSummary>>)> {
    cfg.validate(spec)?;
    let floor = cfg.floor(spec);
    let omegas = census_omegas(cfg, spec.dim());
    let flat: Vec<OrbitSummary> = (0..cfg.n_omega * cfg.n_orbits)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / cfg.n_orbits, idx % cfg.n_orbits);
            simulate_orbit(&spec.at(&omegas[i]), initial_state(cfg, i, j), cfg, floor)
        })
        .collect::<Result<_>>()?;
    let rows = flat.chunks(cfg.n_orbits).map(<[_]>::to_vec).collect();
    Ok((omegas, rows))
}

fn growth_quantiles(values: impl Iterator<Item = f64>) -> GrowthQuantiles {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    GrowthQuantiles {
        levels: GROWTH_QUANTILES.to_vec(),
        values: GROWTH_QUANTILES.iter().map(|&q| quantile_sorted(&v, q)).collect(),
    }
}

fn escape_at(summaries: &[OrbitSummary], horizons: &[usize]) -> Vec<EscapeFraction> {
    horizons
        .iter()
        .map(|&h| {
            let mut c = ClassCounts::default();
            for s in summaries {
                c.add(s.events.classify(h));
            }
            EscapeFraction::from_counts(h, c)
        })
        .collect()
}

/// Full census: `n_omega` Haar-random ω, `n_orbits` uniform initial
/// conditions each, classification at `n_max/4`, `n_max/2` and `n_max`.
pub fn run_census(spec: &ForcingSpec, cfg: &CensusConfig) -> Result<CensusReport> {
    let (omegas, rows) = simulate_census(spec, cfg)?;
    Ok(build_report(spec, cfg, omegas, &rows))
}

/// Aggregates per-orbit summaries; a sequential fold in `(ω, orbit)` order.
pub fn build_report(
    spec: &ForcingSpec,
    cfg: &CensusConfig,
    omegas: Vec<TorusPoint>,
    rows: &[Vec<OrbitSummary>],
) -> CensusReport {
    let horizons = cfg.horizons().to_vec();
    let per_omega = omegas
        .into_iter()
        .zip(rows)
        .enumerate()
        .map(|(index, (omega, row))| OmegaCensus {
            index,
            omega,
            escape: escape_at(row, &horizons),
            velocity_growth: growth_quantiles(row.iter().map(|s| s.velocity_growth)),
        })
        .collect();
    let all: Vec<OrbitSummary> = rows.iter().flatten().copied().collect();
    CensusReport {
        config: cfg.clone(),
        e_floor: cfg.floor(spec),
        pooled: escape_at(&all, &horizons),
        velocity_growth: growth_quantiles(all.iter().map(|s| s.velocity_growth)),
        horizons,
        per_omega,
    }
}

/// First-return steps to the initial energy window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceProfile {
    pub horizon: usize,
    /// `(first return step, orbit count)`, ascending in step.
    pub histogram: Vec<(usize, usize)>,
    /// Orbits with no return by `horizon`.
    pub no_return: usize,
    /// Orbits with no return by `horizon / 2`.
    pub no_return_half: usize,
    pub total: usize,
}

impl RecurrenceProfile {
    pub fn no_return_mass(&self) -> f64 {
        self.no_return as f64 / self.total as f64
    }

    pub fn no_return_mass_half(&self) -> f64 {
        self.no_return_half as f64 / self.total as f64
    }
}

pub fn recurrence_profile_from(rows: &[Vec<OrbitSummary>], horizon: usize) -> RecurrenceProfile {
    let mut hist = std::collections::BTreeMap::new();
    let (mut no_return, mut no_return_half, mut total) = (0, 0, 0);
    for s in rows.iter().flatten() {
        total += 1;
        match s.events.window_return_step.filter(|&k| k <= horizon) {
            Some(k) => {
                *hist.entry(k).or_insert(0) += 1;
                if k > horizon / 2 {
                    no_return_half += 1;
                }
            }
            None => {
                no_return += 1;
                no_return_half += 1;
            }
        }
    }
    RecurrenceProfile {
        horizon,
        histogram: hist.into_iter().collect(),
        no_return,
        no_return_half,
        total,
    }
}

/// Histogram of first-return steps over all census orbits at horizon `n_max`.
pub fn recurrence_profile(spec: &ForcingSpec, cfg: &CensusConfig) -> Result<RecurrenceProfile> {
    let (_, rows) = simulate_census(spec, cfg)?;
    Ok(recurrence_profile_from(&rows, cfg.n_max))
}
