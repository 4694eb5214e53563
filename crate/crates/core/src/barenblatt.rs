//! Source-type self-similar solutions of the porous medium equation
//! `u_t = Δ(u^m)`:
//!
//! ```text
//! B_M(x, t) = t^{-a1} (C_M - a3 |x|^2 / t^{2 a2})_+^{1/(m-1)}
//! a1 = n / ((m-1) n + 2),  a2 = a1 / n,  a3 = a1 (m-1) / (2 m n)
//! ```
//!
//! The constant `C_M` is calibrated numerically so that the profile carries mass `M`.
//! For the coupled system, species `i` of the delta-data solution is
//! `(M_i / |M|) B_{|M|}` with `|M| = sqrt(sum M_i^2)`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, pow_fast, CompensatedSum};

/// Radial midpoint nodes used to calibrate `C_M`.
pub const CALIBRATION_NODES: usize = 1 << 16;
/// Relative mass tolerance of the calibration.
pub const CALIBRATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BarenblattError {
    #[error("exponent m must exceed 1 (slow diffusion), got {0}")]
    Exponent(f64),
    #[error("dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("mass must be positive and finite, got {0}")]
    Mass(f64),
    #[error("time must be positive, got {0}")]
    Time(f64),
    #[error("species index {index} out of range for {k} species")]
    SpeciesIndex { index: usize, k: usize },
    #[error("profile mass {profile} does not match |M| = {expected}")]
    MassMismatch { profile: f64, expected: f64 },
    #[error("calibration of C_M did not converge")]
    Calibration,
}

/// Self-similarity exponents of the porous medium equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

pub fn coefficients(m: f64, n: usize) -> Result<Exponents, BarenblattError> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(BarenblattError::Exponent(m));
    }
    if n != 1 && n != 2 {
        return Err(BarenblattError::Dimension(n));
    }
    let nf = n as f64;
    let a1 = nf / ((m - 1.0) * nf + 2.0);
    Ok(Exponents { a1, a2: a1 / nf, a3: a1 * (m - 1.0) / (2.0 * m * nf) })
}

fn sphere_measure(n: usize) -> f64 {
    if n == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

/// Midpoint quadrature of `∫ (C - a3 |x|^2)_+^{1/(m-1)} dx` over its support ball,
/// written radially as `ω_n ∫_0^R f(r) r^{n-1} dr`.
pub fn profile_mass(c: f64, m: f64, n: usize) -> Result<f64, BarenblattError> {
    let ex = coefficients(m, n)?;
    if c <= 0.0 {
        return Ok(0.0);
    }
    let q = 1.0 / (m - 1.0);
    let radius = (c / ex.a3).sqrt();
    let h = radius / CALIBRATION_NODES as f64;
    let mut acc = CompensatedSum::new();
    for j in 0..CALIBRATION_NODES {
        let r = (j as f64 + 0.5) * h;
        let base = (c - ex.a3 * r * r).max(0.0);
        let weight = if n == 1 { 1.0 } else { r };
        acc.add(pow_fast(base, q) * weight);
    }
    Ok(sphere_measure(n) * acc.value() * h)
}

/// Keyed by the bit patterns of `(M, m)` and the dimension.
type CalibrationCache = Mutex<HashMap<(u64, u64, usize), f64>>;

fn calibration_cache() -> &'static CalibrationCache {
    static CACHE: OnceLock<CalibrationCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// `C_M` such that the profile at `t = 1` has mass `M`, by bisection on the quadrature mass.
pub fn mass_constant(mass: f64, m: f64, n: usize) -> Result<f64, BarenblattError> {
    coefficients(m, n)?;
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(BarenblattError::Mass(mass));
    }
    let key = (mass.to_bits(), m.to_bits(), n);
    if let Some(&c) = calibration_cache().lock().expect("cache lock").get(&key) {
        return Ok(c);
    }

    let f = |c: f64| profile_mass(c, m, n);
    let (mut lo, mut hi) = (0.5, 1.0);
    while f(hi)? < mass {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(BarenblattError::Calibration);
        }
    }
    while f(lo)? > mass {
        hi = lo;
        lo *= 0.5;
        if lo == 0.0 {
            return Err(BarenblattError::Calibration);
        }
    }
    let mut c = 0.5 * (lo + hi);
    for _ in 0..200 {
        c = 0.5 * (lo + hi);
        let mc = f(c)?;
        if ((mc - mass) / mass).abs() <= 0.1 * CALIBRATION_TOLERANCE || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        if mc < mass {
            lo = c;
        } else {
            hi = c;
        }
    }
    if ((f(c)? - mass) / mass).abs() > CALIBRATION_TOLERANCE {
        return Err(BarenblattError::Calibration);
    }
    calibration_cache().lock().expect("cache lock").insert(key, c);
    Ok(c)
}

/// Calibrated Barenblatt profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarenblattProfile {
    #[serde(rename = "M")]
    pub mass: f64,
    pub m: f64,
    pub n: usize,
    #[serde(rename = "C_M")]
    pub c_m: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
}

impl BarenblattProfile {
    pub fn new(mass: f64, m: f64, n: usize) -> Result<Self, BarenblattError> {
        let ex = coefficients(m, n)?;
        let c_m = mass_constant(mass, m, n)?;
        Ok(Self { mass, m, n, c_m, a1: ex.a1, a2: ex.a2, a3: ex.a3 })
    }

    /// Profile carrying the combined mass `|M|` of several species.
    pub fn for_masses(masses: &[f64], m: f64, n: usize) -> Result<Self, BarenblattError> {
        Self::new(euclidean_mass(masses)?, m, n)
    }

    fn exponent(&self) -> f64 {
        1.0 / (self.m - 1.0)
    }

    pub fn evaluate(&self, x: &[f64], t: f64) -> Result<f64, BarenblattError> {
        if !(t > 0.0) {
            return Err(BarenblattError::Time(t));
        }
        Ok(self.evaluate_unchecked(x, t))
    }

    #[inline]
    pub(crate) fn evaluate_unchecked(&self, x: &[f64], t: f64) -> f64 {
        let r2: f64 = x.iter().take(self.n).map(|v| v * v).sum();
        let base = self.c_m - self.a3 * r2 / t.powf(2.0 * self.a2);
        if base <= 0.0 {
            0.0
        } else {
            t.powf(-self.a1) * pow_fast(base, self.exponent())
        }
    }

    /// Radius of the support ball at time `t`.
    pub fn support_radius(&self, t: f64) -> f64 {
        (self.c_m / self.a3).sqrt() * t.powf(self.a2)
    }

    /// Value at the origin, `t^{-a1} C_M^{1/(m-1)}`.
    pub fn peak(&self, t: f64) -> f64 {
        t.powf(-self.a1) * self.c_m.powf(self.exponent())
    }

    /// Time-independent profile in self-similar variables, `t^{a1} B(t^{a2} η, t)`.
    pub fn rescaled_profile(&self, eta: &[f64]) -> f64 {
        let r2: f64 = eta.iter().take(self.n).map(|v| v * v).sum();
        let base = self.c_m - self.a1 * (self.m - 1.0) * r2 / (2.0 * self.m * self.n as f64);
        if base <= 0.0 {
            0.0
        } else {
            pow_fast(base, self.exponent())
        }
    }

    /// Support radius of the rescaled profile.
    pub fn rescaled_radius(&self) -> f64 {
        (self.c_m / self.a3).sqrt()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serialises")
    }
}

/// `|M| = sqrt(sum M_i^2)` for positive masses.
pub fn euclidean_mass(masses: &[f64]) -> Result<f64, BarenblattError> {
    if let Some(&bad) = masses.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(BarenblattError::Mass(bad));
    }
    if masses.is_empty() {
        return Err(BarenblattError::Mass(0.0));
    }
    Ok(compensated_sum(masses.iter().map(|v| v * v)).sqrt())
}

/// Species `i` of the delta-data solution: `(M_i / |M|) B_{|M|}(x, t)`.
pub fn species_profile(
    profile: &BarenblattProfile,
    masses: &[f64],
    i: usize,
    x: &[f64],
    t: f64,
) -> Result<f64, BarenblattError> {
    let total = euclidean_mass(masses)?;
    let mi = *masses.get(i).ok_or(BarenblattError::SpeciesIndex { index: i, k: masses.len() })?;
    if ((profile.mass - total) / total).abs() > 1e-12 {
        return Err(BarenblattError::MassMismatch { profile: profile.mass, expected: total });
    }
    Ok(mi / total * profile.evaluate(x, t)?)
}
