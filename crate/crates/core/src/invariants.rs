//! Adiabatic invariant `W = P(ω)² E` and the recurrence band family.
//!
//! One step of the ping-pong changes `p(t)² E` by at most `C Δ(E0)`, where
//! for a trigonometric forcing `Δ(E0) ≤ E0^{-1/2} (1 + C D3)`. Bands
//! `A_j = {|W − W_j| ≤ ε_j}` with `Σ ε_j < ∞` then form a finite-measure set
//! that every unbounded orbit has to cross.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forcing::{ForcingSpec, TimeForcing, TorusPoint};
use crate::pingpong_map::{step_te, OrbitTrace, PhaseStateTE};
use crate::rng::CounterRng;
use crate::stats::{linear_fit, LinearFit};
use crate::torus_flow::haar_sample;

/// `ζ(3/2)`, bounding `Σ_j j^{-3/2}`.
pub const ZETA_3_2: f64 = 2.612_375_348_685_488;

/// `W(ω, E) = P(ω)² E`.
pub fn eval_w(spec: &ForcingSpec, omega: &TorusPoint, e: f64) -> f64 {
    let p = spec.eval_p(omega);
    p * p * e
}

/// Upper bound `E0^{-1/2} (1 + C·D3)` on the modulus
/// `E0^{-1/2} + sup{|∂ψ²P(ϖ) − ∂ψ²P(ϖ')| : ϖ' = ϖ + ψ(h), |h| ≤ C E0^{-1/2}}`.
pub fn delta_modulus(spec: &ForcingSpec, e0: f64, c: f64) -> f64 {
    (1.0 + c * spec.derivative_bounds()[2]) / e0.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub e0: f64,
    pub drift: f64,
    pub delta_bound: f64,
}

impl DriftRecord {
    pub fn ratio(&self) -> f64 {
        self.drift / self.delta_bound
    }
}

/// One step of the `(t, E)` map and the change `|p(t1)² E1 − p(t0)² E0|`.
pub fn measure_drift(spec: &ForcingSpec, omega: &TorusPoint, s: PhaseStateTE, c: f64) -> Result<DriftRecord> {
    let path = spec.at(omega);
    let next = step_te(&path, s)?;
    let p0 = path.jet(s.t).p;
    let p1 = path.jet_after(s.t, next.t - s.t).p;
    Ok(DriftRecord {
        e0: s.e,
        drift: (p1 * p1 * next.e - p0 * p0 * s.e).abs(),
        delta_bound: delta_modulus(spec, s.e, c),
    })
}

/// Drift records for `n` samples: Haar-random `ω`, `t0 ∈ [0, S)` and
/// `E0` log-uniform in `e_range`. Sample `i` depends only on `(rng, i)`.
pub fn drift_samples(
    spec: &ForcingSpec,
    n: usize,
    e_range: (f64, f64),
    c: f64,
    rng: &CounterRng,
) -> Result<Vec<DriftRecord>> {
    let (lo, hi) = e_range;
    if !(lo > spec.energy_threshold() && hi >= lo) {
        return Err(Error::Config(format!(
            "energy range [{lo}, {hi}] must lie above the threshold {}",
            spec.energy_threshold()
        )));
    }
    let dim = spec.dim();
    let period = spec.nu().return_time();
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .into_par_iter()
        .map(|i| {
            let omega = haar_sample(&rng.child(0), i as u64, 1, dim).remove(0);
            let u = rng.child(1).uniforms(2 * i as u64, 2);
            let e0 = (llo + (lhi - llo) * u[1]).exp().clamp(lo, hi);
            measure_drift(spec, &omega, PhaseStateTE::new(u[0] * period, e0), c)
        })
        .collect()
}

/// Empirical `Ĉ = max drift / Δ(E0)` over [`drift_samples`].
pub fn estimate_drift_constant(
    spec: &ForcingSpec,
    n_samples: usize,
    e_range: (f64, f64),
    c: f64,
    rng: &CounterRng,
) -> Result<f64> {
    Ok(drift_samples(spec, n_samples, e_range, c, rng)?
        .iter()
        .map(DriftRecord::ratio)
        .fold(0.0, f64::max))
}

/// Largest drift per energy level and the log–log fit against `E0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftScaling {
    pub energies: Vec<f64>,
    pub max_drift: Vec<f64>,
    pub fit: LinearFit,
}

/// Max drift at each fixed `E0` over `n_per_energy` random `(ω, t0)`,
/// regressed as `log10(max drift)` against `log10(E0)`.
pub fn drift_scaling(
    spec: &ForcingSpec,
    energies: &[f64],
    n_per_energy: usize,
    c: f64,
    rng: &CounterRng,
) -> Result<DriftScaling> {
    let mut max_drift = Vec::with_capacity(energies.len());
    for (k, &e) in energies.iter().enumerate() {
        let recs = drift_samples(spec, n_per_energy, (e, e), c, &rng.child(2 + k as u64))?;
        max_drift.push(recs.iter().map(|r| r.drift).fold(0.0, f64::max));
    }
    let x: Vec<f64> = energies.iter().map(|e| e.log10()).collect();
    let y: Vec<f64> = max_drift.iter().map(|d| d.max(f64::MIN_POSITIVE).log10()).collect();
    let fit = linear_fit(&x, &y)
        .ok_or_else(|| Error::Config("drift scaling needs at least two distinct energies".into()))?;
    Ok(DriftScaling {
        energies: energies.to_vec(),
        max_drift,
        fit,
    })
}

/// Bands `W_j = W0 j⁴` with half-widths `ε_j = ε0 j^{-3/2}`, `j = 1..=j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFamily {
    pub w0: f64,
    pub eps0: f64,
    pub j_max: usize,
}

impl Default for BandFamily {
    fn default() -> Self {
        Self {
            w0: 10.0,
            eps0: 0.5,
            j_max: 50,
        }
    }
}

impl BandFamily {
    pub fn new(w0: f64, eps0: f64, j_max: usize) -> Result<Self> {
        if !(w0 > 0.0 && eps0 > 0.0 && w0.is_finite() && eps0.is_finite()) || j_max == 0 {
            return Err(Error::Config(format!(
                "band family needs w0 > 0, eps0 > 0, j_max >= 1 (got {w0}, {eps0}, {j_max})"
            )));
        }
        Ok(Self { w0, eps0, j_max })
    }

    pub fn center(&self, j: usize) -> f64 {
        self.w0 * (j as f64).powi(4)
    }

    pub fn half_width(&self, j: usize) -> f64 {
        self.eps0 * (j as f64).powf(-1.5)
    }

    /// Band indices whose closed band contains `w`.
    pub fn bands_containing(&self, w: f64) -> impl Iterator<Item = usize> + '_ {
        let guess = (w.max(0.0) / self.w0).powf(0.25);
        let lo = (guess.floor() as usize).saturating_sub(1).max(1);
        let hi = (guess.ceil() as usize + 1).min(self.j_max);
        (lo..=hi).filter(move |&j| (w - self.center(j)).abs() <= self.half_width(j))
    }
}

/// All `(step, j)` with the orbit's `W` inside band `j`.
pub fn band_hits(trace: &OrbitTrace, bands: &BandFamily) -> Vec<(usize, usize)> {
    band_hits_in(&trace.w_values, bands)
}

pub fn band_hits_in(w_values: &[f64], bands: &BandFamily) -> Vec<(usize, usize)> {
    w_values
        .iter()
        .enumerate()
        .flat_map(|(step, &w)| bands.bands_containing(w).map(move |j| (step, j)))
        .collect()
}

/// Lebesgue measure of `{E : |P(ω)² E − W_j| < ε_j}`, i.e. `2 ε_j / P(ω)²`.
pub fn band_section_measure(spec: &ForcingSpec, omega: &TorusPoint, bands: &BandFamily, j: usize) -> Result<f64> {
    if j == 0 || j > bands.j_max {
        return Err(Error::Domain(format!("band {j} not in 1..={}", bands.j_max)));
    }
    let p = spec.eval_p(omega);
    Ok(2.0 * bands.half_width(j) / (p * p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forcing::{flow_advance, FrequencyVector};
    use crate::pingpong_map::OrbitStatus;
    use std::f64::consts::SQRT_2;

    fn constant() -> ForcingSpec {
        ForcingSpec::constant(FrequencyVector::new(vec![1.0, SQRT_2]).unwrap(), 2.0).unwrap()
    }

    fn trace_of(w: Vec<f64>) -> OrbitTrace {
        let n = w.len();
        OrbitTrace {
            states: vec![PhaseStateTE::new(0.0, 1.0); n],
            residuals: vec![0.0; n],
            w_values: w,
            status: OrbitStatus::Completed(n - 1),
        }
    }

    #[test]
    fn w_examples() {
        assert_eq!(eval_w(&constant(), &TorusPoint::zero(2), 5.0), 20.0);
        let spec = ForcingSpec::standard_two_mode();
        let (a, b) = (spec.lower_bound(), spec.upper_bound());
        let rng = CounterRng::new(11);
        for (i, w) in haar_sample(&rng, 0, 2000, 2).iter().enumerate() {
            let e = 1.0 + i as f64;
            let val = eval_w(&spec, w, e);
            assert!(a * a * e <= val && val <= b * b * e);
        }
    }

    #[test]
    fn delta_examples() {
        let c = constant();
        assert_eq!(delta_modulus(&c, 4.0, 3.0), 0.5);
        let s = ForcingSpec::standard();
        let d1 = delta_modulus(&s, 100.0, 1.0);
        let d4 = delta_modulus(&s, 400.0, 1.0);
        assert!((d1 / d4 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn delta_bounds_sampled_modulus() {
        // grid oracle: pairs along the flow at separation up to C E0^{-1/2}
        let spec = ForcingSpec::standard_two_mode();
        let c = 1.5;
        for &e0 in &[10.0_f64, 1e3, 1e5] {
            let h_max = c / e0.sqrt();
            let mut worst: f64 = 0.0;
            for i in 0..200 {
                let w = TorusPoint::new(vec![i as f64 * 0.0371, i as f64 * 0.0913]);
                let base = spec.eval_dpsi2_p(&w);
                for j in 1..=20 {
                    let h = h_max * j as f64 / 20.0;
                    let other = spec.eval_dpsi2_p(&flow_advance(&w, h, spec.nu()));
                    worst = worst.max((base - other).abs());
                }
            }
            let bound = delta_modulus(&spec, e0, c);
            assert!(1.0 / e0.sqrt() + worst <= bound, "E0={e0}");
        }
    }

    #[test]
    fn constant_forcing_has_no_drift() {
        let c = constant();
        let r = measure_drift(&c, &TorusPoint::zero(2), PhaseStateTE::new(0.0, 50.0), 1.0).unwrap();
        assert_eq!(r.drift, 0.0);
        let chat = estimate_drift_constant(&c, 100, (10.0, 1000.0), 1.0, &CounterRng::new(1)).unwrap();
        assert_eq!(chat, 0.0);
    }

    #[test]
    fn drift_samples_are_deterministic() {
        let spec = ForcingSpec::standard();
        let rng = CounterRng::new(5);
        let a = drift_samples(&spec, 64, (100.0, 1e4), 1.0, &rng).unwrap();
        let b = drift_samples(&spec, 64, (100.0, 1e4), 1.0, &rng).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.e0 >= 100.0 && r.e0 <= 1e4));
        assert!(drift_samples(&spec, 4, (0.1, 10.0), 1.0, &rng).is_err());
    }

    #[test]
    fn band_family_invariants() {
        let b = BandFamily::default();
        let mut sum = 0.0;
        for j in 1..=b.j_max {
            sum += b.half_width(j);
            assert!(sum <= b.eps0 * ZETA_3_2);
            if j > 1 {
                assert!(b.center(j) > b.center(j - 1));
            }
            // ε_j^{-1} (W_j)^{-1/2} ~ j^{-1/2} decreasing
            let k = (b.center(j)).powf(-0.5) / b.half_width(j);
            if j > 1 {
                let prev = (b.center(j - 1)).powf(-0.5) / b.half_width(j - 1);
                assert!(k < prev);
            }
        }
        assert!(BandFamily::new(0.0, 1.0, 3).is_err());
        assert!(BandFamily::new(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn band_hit_examples() {
        let b = BandFamily::default();
        let inside = trace_of(vec![160.0, 160.1, 159.9]);
        assert_eq!(band_hits(&inside, &b), vec![(0, 2), (1, 2), (2, 2)]);
        let outside = trace_of(vec![50.0, 60.0, 1000.0]);
        assert!(band_hits(&outside, &b).is_empty());
        // ramp with increments below 2 ε_1 cannot jump over band 1
        let ramp: Vec<f64> = (0..100).map(|i| 5.0 + 0.9 * i as f64 / 10.0 * 1.0).collect();
        assert!(band_hits(&trace_of(ramp), &b).iter().any(|&(_, j)| j == 1));
    }

    #[test]
    fn band_sections() {
        let c = constant();
        let bands = BandFamily::new(10.0, 0.1, 5).unwrap();
        let m = band_section_measure(&c, &TorusPoint::zero(2), &bands, 1).unwrap();
        assert!((m - 0.05).abs() < 1e-15);
        assert!(band_section_measure(&c, &TorusPoint::zero(2), &bands, 6).is_err());
        let spec = ForcingSpec::standard_two_mode();
        let a = spec.lower_bound();
        let b = BandFamily::default();
        let w = TorusPoint::new(vec![0.3, 0.2]);
        let total: f64 = (1..=b.j_max)
            .map(|j| band_section_measure(&spec, &w, &b, j).unwrap())
            .sum();
        assert!(total <= 2.0 * b.eps0 * ZETA_3_2 / (a * a));
        for j in 1..=b.j_max {
            assert!(band_section_measure(&spec, &w, &b, j).unwrap() <= 2.0 * b.half_width(j) / (a * a));
        }
    }
}
