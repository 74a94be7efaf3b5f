//! Shaped complex excitation envelopes.
//!
//! The magnitude is a Gaussian rise of width `sigma1` peaking at `tau`, a flat
//! plateau of length `t_hold`, then a Gaussian fall of width `sigma2`. The
//! phase is linear in time, `θ₀ + θ₁·t`, referenced to `t = 0` of the lab
//! clock. All angular quantities are in rad/ns, times in ns.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{phase, Real};

/// Anything that can drive a two-level transition with a complex Rabi rate.
pub trait Drive<T: Real> {
    /// Complex Rabi frequency Ω(t) in rad/ns.
    fn rabi(&self, t: T) -> Complex<T>;

    /// Upper bound on |Ω(t)|.
    fn peak(&self) -> T;
}

impl<T: Real, F: Fn(T) -> Complex<T>> Drive<T> for F {
    fn rabi(&self, t: T) -> Complex<T> {
        self(t)
    }

    fn peak(&self) -> T {
        T::infinity()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseShape<T> {
    /// Rise width (ns).
    pub sigma1: T,
    /// Fall width (ns).
    pub sigma2: T,
    /// Time of the rising edge maximum (ns).
    pub tau: T,
    /// Plateau length (ns).
    pub t_hold: T,
    /// Peak Rabi rate (rad/ns).
    pub omega_max: T,
    /// Constant phase (rad).
    pub theta0: T,
    /// Linear chirp (rad/ns).
    pub theta1: T,
}

/// Index of each shape coordinate, in the order used by optimizer bounds
/// and progress logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseParam {
    Sigma1,
    Sigma2,
    Tau,
    THold,
    OmegaMax,
    Theta0,
    Theta1,
}

impl PulseParam {
    pub const ALL: [PulseParam; 7] = [
        PulseParam::Sigma1,
        PulseParam::Sigma2,
        PulseParam::Tau,
        PulseParam::THold,
        PulseParam::OmegaMax,
        PulseParam::Theta0,
        PulseParam::Theta1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PulseParam::Sigma1 => "sigma1",
            PulseParam::Sigma2 => "sigma2",
            PulseParam::Tau => "tau",
            PulseParam::THold => "t_hold",
            PulseParam::OmegaMax => "omega_max",
            PulseParam::Theta0 => "theta0",
            PulseParam::Theta1 => "theta1",
        }
    }
}

impl<T: Real> PulseShape<T> {
    /// A pulse that is identically zero.
    pub fn off() -> Self {
        PulseShape {
            sigma1: T::one(),
            sigma2: T::one(),
            tau: T::zero(),
            t_hold: T::zero(),
            omega_max: T::zero(),
            theta0: T::zero(),
            theta1: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.sigma1,
            self.sigma2,
            self.tau,
            self.t_hold,
            self.omega_max,
            self.theta0,
            self.theta1,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("pulse", "all fields must be finite"));
        }
        if self.sigma1 <= T::zero() {
            return Err(Error::invalid("sigma1", "must be > 0"));
        }
        if self.sigma2 <= T::zero() {
            return Err(Error::invalid("sigma2", "must be > 0"));
        }
        if self.t_hold < T::zero() {
            return Err(Error::invalid("t_hold", "must be >= 0"));
        }
        if self.omega_max < T::zero() {
            return Err(Error::invalid("omega_max", "must be >= 0"));
        }
        Ok(())
    }

    /// |Ω(t)|.
    pub fn magnitude(&self, t: T) -> T {
        let half = T::lit(0.5);
        let fall_start = self.tau + self.t_hold;
        if t < self.tau {
            let x = (t - self.tau) / self.sigma1;
            self.omega_max * (-half * x * x).exp()
        } else if t <= fall_start {
            self.omega_max
        } else {
            let x = (t - fall_start) / self.sigma2;
            self.omega_max * (-half * x * x).exp()
        }
    }

    /// α(t) = θ₀ + θ₁·t.
    pub fn phase_at(&self, t: T) -> T {
        self.theta0 + self.theta1 * t
    }

    /// Ω(t)·e^{iα(t)}.
    pub fn envelope_at(&self, t: T) -> Complex<T> {
        phase(self.phase_at(t)) * self.magnitude(t)
    }

    /// End of the plateau, where the Gaussian fall begins.
    pub fn fall_start(&self) -> T {
        self.tau + self.t_hold
    }

    pub fn get(&self, p: PulseParam) -> T {
        match p {
            PulseParam::Sigma1 => self.sigma1,
            PulseParam::Sigma2 => self.sigma2,
            PulseParam::Tau => self.tau,
            PulseParam::THold => self.t_hold,
            PulseParam::OmegaMax => self.omega_max,
            PulseParam::Theta0 => self.theta0,
            PulseParam::Theta1 => self.theta1,
        }
    }

    pub fn set(&mut self, p: PulseParam, v: T) {
        match p {
            PulseParam::Sigma1 => self.sigma1 = v,
            PulseParam::Sigma2 => self.sigma2 = v,
            PulseParam::Tau => self.tau = v,
            PulseParam::THold => self.t_hold = v,
            PulseParam::OmegaMax => self.omega_max = v,
            PulseParam::Theta0 => self.theta0 = v,
            PulseParam::Theta1 => self.theta1 = v,
        }
    }

    pub fn with(mut self, p: PulseParam, v: T) -> Self {
        self.set(p, v);
        self
    }

    /// Same pulse delayed by `dt`.
    pub fn shifted(mut self, dt: T) -> Self {
        self.tau += dt;
        self
    }
}

impl<T: Real> Drive<T> for PulseShape<T> {
    fn rabi(&self, t: T) -> Complex<T> {
        self.envelope_at(t)
    }

    fn peak(&self) -> T {
        self.omega_max
    }
}
