//! Cavity design space: quality factor and mode volume to coupling rates.
//!
//! `κ = ω/Q` with `ω = 2πc/λ`, and the cooperativity follows the standard
//! identity `C = (3/4π²)·Q/Ṽ` with `Ṽ = V/(λ/n)³`. The coupling is then
//! `g = √(C·κ·Γ)`, which makes `C = g²/(κΓ)` hold by construction.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::scalar::Real;

/// Speed of light in nm/ns.
pub const SPEED_OF_LIGHT_NM_PER_NS: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityDesign<T> {
    pub q_factor: T,
    /// Mode volume in units of `(λ/n)³`.
    pub mode_volume: T,
    /// Vacuum wavelength (nm).
    pub wavelength: T,
    pub refractive_index: T,
    /// Emitter spontaneous decay rate (1/ns).
    pub gamma: T,
}

impl<T: Real> CavityDesign<T> {
    pub fn new(q_factor: T, mode_volume: T) -> Self {
        CavityDesign {
            q_factor,
            mode_volume,
            wavelength: T::lit(369.0),
            refractive_index: T::lit(2.3),
            gamma: T::one() / T::lit(1.4),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q_factor > T::zero()) {
            return Err(Error::invalid("q_factor", "must be > 0"));
        }
        if !(self.mode_volume > T::zero()) {
            return Err(Error::invalid("mode_volume", "must be > 0"));
        }
        if !(self.refractive_index >= T::one()) {
            return Err(Error::invalid("refractive_index", "must be >= 1"));
        }
        if !(self.wavelength > T::zero()) {
            return Err(Error::invalid("wavelength", "must be > 0"));
        }
        if !(self.gamma > T::zero()) {
            return Err(Error::invalid("gamma", "must be > 0"));
        }
        Ok(())
    }

    /// Optical angular frequency (rad/ns).
    pub fn omega(&self) -> T {
        T::TAU() * T::lit(SPEED_OF_LIGHT_NM_PER_NS) / self.wavelength
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityRates<T> {
    /// Coupling (rad/ns).
    pub g: T,
    /// Field decay (rad/ns).
    pub kappa: T,
    pub cooperativity: T,
}

pub fn cooperativity_from_q_v<T: Real>(q: T, v_norm: T) -> T {
    T::lit(3.0) / (T::lit(4.0) * T::PI() * T::PI()) * q / v_norm
}

pub fn cavity_rates<T: Real>(d: &CavityDesign<T>) -> CavityRates<T> {
    let kappa = d.omega() / d.q_factor;
    let cooperativity = cooperativity_from_q_v(d.q_factor, d.mode_volume);
    let g = (cooperativity * kappa * d.gamma).sqrt();
    CavityRates { g, kappa, cooperativity }
}

/// `C = g²/(κΓ)` from given rates.
pub fn cooperativity<T: Real>(g: T, kappa: T, gamma: T) -> T {
    g * g / (kappa * gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Outside,
    /// `C ≥ 1` and `g ≤ κ`.
    Green,
    /// `C ≥ 10` and `√10·g ≤ κ`.
    Blue,
}

impl Region {
    pub fn name(self) -> &'static str {
        match self {
            Region::Outside => "outside",
            Region::Green => "green",
            Region::Blue => "blue",
        }
    }
}

/// Region membership from rates; boundaries are closed.
pub fn classify_rates<T: Real>(r: &CavityRates<T>) -> Region {
    let ten = T::lit(10.0);
    if r.cooperativity >= ten && ten.sqrt() * r.g <= r.kappa {
        Region::Blue
    } else if r.cooperativity >= T::one() && r.g <= r.kappa {
        Region::Green
    } else {
        Region::Outside
    }
}

pub fn classify_region<T: Real>(d: &CavityDesign<T>) -> Region {
    classify_rates(&cavity_rates(d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSample<T> {
    pub q_factor: T,
    pub mode_volume: T,
    pub rates: CavityRates<T>,
    pub region: Region,
}

/// Log-spaced values from `lo` to `hi` inclusive.
pub fn log_space<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * T::lit(k as f64) / T::lit((n - 1) as f64)).exp())
        .collect()
}

/// Samples every `(Q, Ṽ)` pair, row-major in `q_values`.
pub fn region_map<T: Real>(template: &CavityDesign<T>, q_values: &[T], v_values: &[T]) -> Vec<RegionSample<T>> {
    let mut out = Vec::with_capacity(q_values.len() * v_values.len());
    for &q in q_values {
        for &v in v_values {
            let d = CavityDesign { q_factor: q, mode_volume: v, ..*template };
            let rates = cavity_rates(&d);
            out.push(RegionSample { q_factor: q, mode_volume: v, rates, region: classify_rates(&rates) });
        }
    }
    out
}

/// CSV with columns `q, v, g, kappa, c, region`.
pub fn write_region_csv<T: Real, W: Write>(samples: &[RegionSample<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["q", "v", "g", "kappa", "c", "region"])?;
    for s in samples {
        w.write_record([
            fmt_f64(s.q_factor.to_f64_lossy()),
            fmt_f64(s.mode_volume.to_f64_lossy()),
            fmt_f64(s.rates.g.to_f64_lossy()),
            fmt_f64(s.rates.kappa.to_f64_lossy()),
            fmt_f64(s.rates.cooperativity.to_f64_lossy()),
            s.region.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::two_pi;
    use proptest::prelude::*;

    #[test]
    fn doubling_q() {
        let d = CavityDesign::<f64>::new(500.0, 0.8);
        let r1 = cavity_rates(&d);
        let r2 = cavity_rates(&CavityDesign { q_factor: 1000.0, ..d });
        assert!((r2.cooperativity / r1.cooperativity - 2.0).abs() < 1e-12);
        assert!((r2.kappa / r1.kappa - 0.5).abs() < 1e-12);
        assert!((r2.g / r1.g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_cooperativity_boundary() {
        let q = 1234.0;
        let v = 3.0 / (4.0 * std::f64::consts::PI.powi(2)) * q;
        let r = cavity_rates(&CavityDesign::<f64>::new(q, v));
        assert!((r.cooperativity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_holds_by_construction() {
        let d = CavityDesign::<f64>::new(3000.0, 0.5);
        let r = cavity_rates(&d);
        assert!((cooperativity(r.g, r.kappa, d.gamma) - r.cooperativity).abs() < 1e-9 * r.cooperativity);
    }

    #[test]
    fn fig4_operating_point() {
        let (g, kappa, gamma) = (two_pi(15.0f64), two_pi(60.0), 1.0 / 1.4);
        let c = cooperativity(g, kappa, gamma);
        // (2π·15)²/(2π·60)·1.4 = 2π·3.75·1.4
        assert!((c - two_pi(3.75f64) * 1.4).abs() < 1e-9);
        assert!((c - 32.99).abs() < 0.01);
        let purcell = g * g / kappa;
        assert!(kappa > purcell && purcell > gamma);
        assert!((purcell - two_pi(3.75)).abs() < 1e-12);
    }

    #[test]
    fn classification_examples() {
        let r = |g, kappa, c| CavityRates { g, kappa, cooperativity: c };
        assert_eq!(classify_rates(&r(1.0, 2.0, 0.5)), Region::Outside);
        assert_eq!(classify_rates(&r(2.0, 2.0, 1.0)), Region::Green);
        assert_eq!(classify_rates(&r(1.0, 10f64.sqrt(), 10.0)), Region::Blue);
        assert_eq!(classify_rates(&r(3.0, 2.0, 50.0)), Region::Outside);
    }

    #[test]
    fn validation() {
        assert!(CavityDesign::<f64>::new(100.0, 1.0).validate().is_ok());
        assert!(CavityDesign::<f64>::new(0.0, 1.0).validate().is_err());
        assert!(CavityDesign::<f64>::new(100.0, -1.0).validate().is_err());
        assert!(CavityDesign { refractive_index: 0.5, ..CavityDesign::<f64>::new(100.0, 1.0) }.validate().is_err());
    }

    #[test]
    fn csv_rows() {
        let d = CavityDesign::<f64>::new(100.0, 1.0);
        let map = region_map(&d, &log_space(10.0, 1e4, 4), &log_space(0.1, 10.0, 3));
        assert_eq!(map.len(), 12);
        let mut buf = Vec::new();
        write_region_csv(&map, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 13);
    }

    proptest! {
        #[test]
        fn blue_inside_green(lq in 0.0..7.0f64, lv in -3.0..3.0f64) {
            let d = CavityDesign::<f64>::new(10f64.powf(lq), 10f64.powf(lv));
            let r = cavity_rates(&d);
            if classify_rates(&r) == Region::Blue {
                prop_assert!(r.cooperativity >= 1.0 && r.g <= r.kappa);
            }
        }

        #[test]
        fn cooperativity_scale_invariant(q in 1.0..1e6f64, v in 0.01..100.0f64, s in 0.01..100.0f64) {
            let a = cavity_rates(&CavityDesign::<f64>::new(q, v)).cooperativity;
            let b = cavity_rates(&CavityDesign::<f64>::new(s * q, s * v)).cooperativity;
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }
}
