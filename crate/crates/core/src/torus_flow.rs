//! Cross-section machinery on `T^N`.
//!
//! The section is `Σ = {θ_1 = 0}`, the kernel of the character
//! `θ ↦ exp(2πiθ_1)`. Every flow line crosses it with period `S = 1/ν_1`, and
//! the restricted flow `Φ(σ, s) = σ + ψ(s)` identifies `Σ × [0, S)` with the
//! torus. With `α = 2πν_1` the section time is `τ(ω) = θ_1/ν_1`, so
//! `ω + ψ(−τ(ω)) ∈ Σ`; the forward return time is `S − τ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{circular_distance, flow_advance, frac, FrequencyVector, TorusPoint};
use crate::rng::CounterRng;

/// Tolerance on `θ_1` for user-supplied section points.
pub const SECTION_TOL: f64 = 1e-12;

/// Coordinates `(σ, s) ∈ Σ × [0, S)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCoords {
    pub sigma: TorusPoint,
    pub s: f64,
}

/// The section `Σ = {θ_1 = 0}` of the linear flow with frequencies `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    nu: FrequencyVector,
}

impl CrossSection {
    pub fn new(nu: FrequencyVector) -> Self {
        Self { nu }
    }

    pub fn nu(&self) -> &FrequencyVector {
        &self.nu
    }

    pub fn return_time(&self) -> f64 {
        self.nu.return_time()
    }

    pub fn contains(&self, omega: &TorusPoint) -> bool {
        circular_distance(omega.theta()[0], 0.0) <= SECTION_TOL
    }

    /// `τ(ω) ∈ [0, S)` with `exp(2πiθ_1) = exp(iατ)`.
    pub fn tau(&self, omega: &TorusPoint) -> f64 {
        let s = self.return_time();
        let tau = omega.theta()[0] / self.nu.as_slice()[0];
        if tau >= s {
            prev_float(s)
        } else {
            tau
        }
    }

    /// `Φ^{-1}(ω) = (ω + ψ(−τ(ω)), τ(ω))`, with `θ_1 = 0` set exactly.
    pub fn phi_inverse(&self, omega: &TorusPoint) -> SectionCoords {
        let tau = self.tau(omega);
        let mut sigma = flow_advance(omega, -tau, &self.nu);
        sigma.set_first(0.0);
        SectionCoords { sigma, s: tau }
    }

    /// `Φ(σ, s) = σ + ψ(s)`.
    pub fn phi_compose(&self, sc: &SectionCoords) -> Result<TorusPoint> {
        let s_max = self.return_time();
        if !(0.0..s_max).contains(&sc.s) {
            return Err(Error::Domain(format!("s = {} outside [0, {s_max})", sc.s)));
        }
        if !self.contains(&sc.sigma) {
            return Err(Error::Domain(format!(
                "sigma has theta_1 = {}, not on the section",
                sc.sigma.theta()[0]
            )));
        }
        Ok(flow_advance(&sc.sigma, sc.s, &self.nu))
    }

    /// `χ(σ, t) = Φ^{-1}(σ + ψ(t)) = (σ + ψ(⌊t/S⌋S), t − ⌊t/S⌋S)`.
    pub fn chi_wrap(&self, sigma: &TorusPoint, t: f64) -> SectionCoords {
        let period = self.return_time();
        let mut m = (t / period).floor();
        let mut r = t - m * period;
        if r >= period {
            r -= period;
            m += 1.0;
        }
        if r < 0.0 {
            r += period;
            m -= 1.0;
            if r >= period {
                r = prev_float(period);
            }
        }
        let mut shifted = flow_advance(sigma, m * period, &self.nu);
        shifted.set_first(0.0);
        SectionCoords { sigma: shifted, s: r }
    }

    /// Times in `(0, t_max]` where the flow line through `ω` crosses `Σ`.
    ///
    /// Marches `θ_1(t)` on a grid of spacing `dt` (must satisfy `dt·ν_1 < 1`)
    /// and refines each wrap of `θ_1` by bisection. Independent of [`Self::tau`].
    pub fn crossings(&self, omega: &TorusPoint, t_max: f64, dt: f64) -> Vec<f64> {
        assert!(dt > 0.0 && dt * self.nu.as_slice()[0] < 1.0);
        let nu1 = self.nu.as_slice()[0];
        let th0 = omega.theta()[0];
        let theta1 = |t: f64| frac(th0 + nu1 * t);
        let steps = (t_max / dt).ceil() as usize;
        let mut out = Vec::new();
        let mut prev_t = 0.0;
        let mut prev_th = theta1(0.0);
        for i in 1..=steps {
            let t = (i as f64 * dt).min(t_max);
            let th = theta1(t);
            if th < prev_th {
                let (mut lo, mut hi) = (prev_t, t);
                let th_lo = prev_th;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if theta1(mid) >= th_lo {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                out.push(hi);
            }
            prev_t = t;
            prev_th = th;
        }
        out
    }
}

fn prev_float(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    f64::from_bits(x.to_bits() - 1)
}

/// `n` Haar-uniform points of `T^dim`; point `i` is a pure function of
/// `(rng, start + i)`.
pub fn haar_sample(rng: &CounterRng, start: u64, n: usize, dim: usize) -> Vec<TorusPoint> {
    let mut buf = vec![0.0; n * dim];
    rng.fill_uniform(start * dim as u64, &mut buf);
    buf.chunks(dim).map(|c| TorusPoint::new(c.to_vec())).collect()
}

/// Product of half-open sub-intervals `[lo_i, hi_i) ⊂ [0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub intervals: Vec<(f64, f64)>,
}

impl Rectangle {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!(
                    "rectangle side [{lo}, {hi}) is not inside [0, 1]"
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn full(dim: usize) -> Self {
        Self {
            intervals: vec![(0.0, 1.0); dim],
        }
    }

    /// Random rectangle with sorted uniform endpoints on every axis.
    pub fn random(rng: &CounterRng, index: u64, dim: usize) -> Self {
        let u = rng.uniforms(index * 2 * dim as u64, 2 * dim);
        let intervals = u
            .chunks(2)
            .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
            .collect();
        Self { intervals }
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn contains(&self, omega: &TorusPoint) -> bool {
        self.intervals
            .iter()
            .zip(omega.theta())
            .all(|(&(lo, hi), &x)| lo <= x && x < hi)
    }
}

/// One line of the decomposition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub set_id: usize,
    pub haar_estimate: f64,
    pub product_estimate: f64,
    pub diff: f64,
    pub three_sigma: f64,
}

impl DecompositionRow {
    pub fn passes(&self) -> bool {
        self.diff <= self.three_sigma + 1e-15
    }
}

/// Compares `μ(R)` estimated from Haar samples of `T^N` against
/// `(1/S)(μ_Σ ⊗ λ)(Φ^{-1}(R))` estimated from uniform samples of `Σ × [0, S)`.
///
/// Both estimates share one sample set per side across all rectangles; the
/// tolerance is three standard deviations of the difference of two
/// independent binomial proportions at the pooled frequency.
pub fn check_haar_decomposition(
    section: &CrossSection,
    n: usize,
    rects: &[Rectangle],
    rng: &CounterRng,
) -> Result<Vec<DecompositionRow>> {
    let dim = section.nu().dim();
    if rects.iter().any(|r| r.intervals.len() != dim) {
        return Err(Error::Config(format!("rectangles must have dimension {dim}")));
    }
    if n == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    let haar = haar_sample(&rng.substream(0), 0, n, dim);
    let period = section.return_time();
    let product_rng = rng.substream(1);
    let mut buf = vec![0.0; dim];
    let mut product = Vec::with_capacity(n);
    for i in 0..n {
        product_rng.fill_uniform((i * dim) as u64, &mut buf);
        let s = (buf[0] * period).min(prev_float(period));
        let mut sigma = buf.clone();
        sigma[0] = 0.0;
        let sc = SectionCoords {
            sigma: TorusPoint::new(sigma),
            s,
        };
        product.push(section.phi_compose(&sc)?);
    }
    let nf = n as f64;
    Ok(rects
        .iter()
        .enumerate()
        .map(|(set_id, r)| {
            let h = haar.iter().filter(|w| r.contains(w)).count() as f64 / nf;
            let q = product.iter().filter(|w| r.contains(w)).count() as f64 / nf;
            let pooled = 0.5 * (h + q);
            DecompositionRow {
                set_id,
                haar_estimate: h,
                product_estimate: q,
                diff: (h - q).abs(),
                three_sigma: 3.0 * (pooled * (1.0 - pooled) * 2.0 / nf).sqrt(),
            }
        })
        .collect())
}
