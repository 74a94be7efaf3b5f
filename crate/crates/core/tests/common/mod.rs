//! Shared fixtures: the operating-point parameter sets and an independent
//! piecewise-constant matrix-exponential propagator.
#![allow(dead_code)]

use hybridlink::dynamics::{AmplitudeSystem, DonorParams, IonParams};
use hybridlink::pulse::PulseShape;
use hybridlink::scalar::two_pi;
use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

pub fn fig4_donor() -> DonorParams<f64> {
    DonorParams {
        delta: two_pi(200.0),
        g: two_pi(15.0),
        kappa: two_pi(60.0),
        gamma_in: 1.0 / 1.4,
        pulse: PulseShape {
            sigma1: 8.9,
            sigma2: 16.0,
            tau: 35.8,
            t_hold: 0.85,
            omega_max: two_pi(2.9),
            theta0: two_pi(-0.15),
            theta1: two_pi(6.9e-3),
        },
    }
}

pub fn fig4_ion() -> IonParams<f64> {
    IonParams {
        gamma_yb: 1.0 / 8.1,
        pulse: PulseShape {
            sigma1: 7.0,
            sigma2: 6.4,
            tau: 28.0,
            t_hold: 3.9,
            omega_max: two_pi(8.1e-3),
            theta0: two_pi(0.5),
            theta1: 0.0,
        },
    }
}

macro_rules! frozen_propagator {
    ($name:ident, $n:literal) => {
        /// Solves `i da/dt = ½ M(t) a` by freezing `M` at each step midpoint
        /// and applying the exact exponential of the frozen generator.
        pub fn $name<S: AmplitudeSystem<f64, $n>>(
            sys: &S,
            initial: [Complex64; $n],
            t0: f64,
            t1: f64,
            h: f64,
        ) -> [Complex64; $n] {
            let steps = ((t1 - t0) / h).ceil() as usize;
            let dt = (t1 - t0) / steps as f64;
            let mut a = SVector::<Complex64, $n>::from_column_slice(&initial);
            let factor = Complex64::new(0.0, -0.5 * dt);
            for k in 0..steps {
                let m = sys.generator(t0 + (k as f64 + 0.5) * dt);
                let gen = SMatrix::<Complex64, $n, $n>::from_fn(|r, c| m[r][c] * factor);
                a = gen.exp() * a;
            }
            let mut out = [Complex64::new(0.0, 0.0); $n];
            out.copy_from_slice(a.as_slice());
            out
        }
    };
}

frozen_propagator!(propagate3, 3);
frozen_propagator!(propagate2, 2);

pub fn max_abs_diff<const N: usize>(a: &[Complex64; N], b: &[Complex64; N]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

use rand::Rng;
use std::f64::consts::PI;

pub fn random_pulse<R: Rng>(rng: &mut R, omega_max: f64) -> PulseShape<f64> {
    let sigma1 = rng.gen_range(2.0..8.0);
    let sigma2 = rng.gen_range(2.0..8.0);
    PulseShape {
        sigma1,
        sigma2,
        tau: 6.5 * sigma1 + rng.gen_range(0.0..5.0),
        t_hold: rng.gen_range(0.0..3.0),
        omega_max,
        theta0: rng.gen_range(-PI..PI),
        theta1: two_pi(rng.gen_range(-10e-3..10e-3)),
    }
}

/// Donor parameters with `κ ≥ 3·g²/κ ≥ 9·Γ_In`.
pub fn random_bad_cavity_donor<R: Rng>(rng: &mut R) -> DonorParams<f64> {
    let gamma_in: f64 = 1.0 / 1.4;
    let kappa: f64 = two_pi(rng.gen_range(20.0..100.0));
    let purcell = (rng.gen_range((3.0 * gamma_in).ln()..(kappa / 3.0).ln())).exp();
    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let delta = sign * two_pi(rng.gen_range(50.0..300.0));
    let omega_max = two_pi(rng.gen_range(0.5..3.0));
    let donor = DonorParams {
        delta,
        g: (purcell * kappa).sqrt(),
        kappa,
        gamma_in,
        pulse: random_pulse(rng, omega_max),
    };
    assert!(donor.is_bad_cavity(3.0));
    donor
}

pub fn random_ion<R: Rng>(rng: &mut R) -> IonParams<f64> {
    let gamma_yb = rng.gen_range(0.05..0.5);
    let omega_max = two_pi(rng.gen_range(2e-3..30e-3));
    IonParams { gamma_yb, pulse: random_pulse(rng, omega_max) }
}

pub fn ground3() -> [Complex64; 3] {
    let z = Complex64::new(0.0, 0.0);
    [Complex64::new(1.0, 0.0), z, z]
}

pub fn ground2() -> [Complex64; 2] {
    [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
}
