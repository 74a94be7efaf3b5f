//! Complex-amplitude equations of motion for the two emitters.
//!
//! Both systems are written as `i·da/dt = ½·M(t)·a` with a non-Hermitian
//! generator `M(t)`; decay channels appear as negative imaginary diagonal
//! entries and are treated as pure loss. Rates are in rad/ns (or 1/ns),
//! times in ns.
//!
//! Donor (basis `[|0⟩, |e⟩, |1⟩]`, `|1⟩` carrying one cavity photon):
//!
//! ```text
//!        ⎡ 0      Ω(t)        0   ⎤
//!  M  =  ⎢ Ω*(t)  2Δ − iΓ_In  2g  ⎥
//!        ⎣ 0      2g          −iκ ⎦
//! ```
//!
//! Ion (basis `[|0⟩, |e⟩]`): `M = [[0, Ω], [Ω*, −iΓ_Yb]]`.

mod rk;

use std::io::Write;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{Drive, PulseShape};
use crate::scalar::Real;

/// Pulse magnitude at the window start must be below this fraction of its peak.
pub const NEGLIGIBLE_DRIVE: f64 = 1e-6;

/// A linear amplitude system `i·da/dt = ½·M(t)·a`.
pub trait AmplitudeSystem<T: Real, const N: usize> {
    /// The generator `M(t)`.
    fn generator(&self, t: T) -> [[Complex<T>; N]; N];

    /// Rate at which population in each level leaves the system.
    fn loss_rates(&self) -> [T; N];

    /// `da/dt = −(i/2)·M(t)·a`.
    fn derivative(&self, t: T, a: &[Complex<T>; N]) -> [Complex<T>; N] {
        let m = self.generator(t);
        let minus_half_i = Complex::new(T::zero(), -T::lit(0.5));
        let mut out = [Complex::new(T::zero(), T::zero()); N];
        for (row, o) in m.iter().zip(out.iter_mut()) {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (mij, aj) in row.iter().zip(a.iter()) {
                acc = acc + *mij * *aj;
            }
            *o = acc * minus_half_i;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DonorParams<T> {
    /// Cavity/laser detuning Δ (rad/ns).
    pub delta: T,
    /// Donor–cavity coupling g (rad/ns).
    pub g: T,
    /// Cavity field decay rate κ (rad/ns).
    pub kappa: T,
    /// Spontaneous decay Γ_In (1/ns).
    pub gamma_in: T,
    pub pulse: PulseShape<T>,
}

impl<T: Real> DonorParams<T> {
    /// D⁰X lifetime of 1.4 ns.
    pub fn default_gamma() -> T {
        T::one() / T::lit(1.4)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("g", self.g), ("kappa", self.kappa), ("gamma_in", self.gamma_in)] {
            if !v.is_finite() {
                return Err(Error::invalid(name, "must be finite"));
            }
        }
        if self.g < T::zero() {
            return Err(Error::invalid("g", "must be >= 0"));
        }
        if self.kappa < T::zero() {
            return Err(Error::invalid("kappa", "must be >= 0"));
        }
        if self.gamma_in < T::zero() {
            return Err(Error::invalid("gamma_in", "must be >= 0"));
        }
        self.pulse.validate()
    }

    /// Effective Raman emission rate g²/κ into the cavity.
    pub fn purcell_rate(&self) -> T {
        if self.kappa == T::zero() {
            T::infinity()
        } else {
            self.g * self.g / self.kappa
        }
    }

    /// Whether `κ ≫ g²/κ ≫ Γ_In` holds, each `≫` read as "at least `factor` times".
    pub fn is_bad_cavity(&self, factor: T) -> bool {
        let r = self.purcell_rate();
        self.kappa >= factor * r && r >= factor * self.gamma_in
    }

    /// Default window: from `min(0, τ − 6σ₁)` to
    /// `τ + t_h + 6·max(σ₁, σ₂) + 20 / min(Γ_In, g²/κ)`.
    pub fn default_grid(&self) -> TimeGrid<T> {
        let slowest = self.gamma_in.min(self.purcell_rate());
        TimeGrid::covering(&self.pulse, slowest)
    }
}

impl<T: Real> AmplitudeSystem<T, 3> for DonorParams<T> {
    fn generator(&self, t: T) -> [[Complex<T>; 3]; 3] {
        let z = Complex::new(T::zero(), T::zero());
        let omega = self.pulse.envelope_at(t);
        let two = T::lit(2.0);
        let g2 = Complex::new(two * self.g, T::zero());
        [
            [z, omega, z],
            [omega.conj(), Complex::new(two * self.delta, -self.gamma_in), g2],
            [z, g2, Complex::new(T::zero(), -self.kappa)],
        ]
    }

    fn loss_rates(&self) -> [T; 3] {
        [T::zero(), self.gamma_in, self.kappa]
    }

    fn derivative(&self, t: T, a: &[Complex<T>; 3]) -> [Complex<T>; 3] {
        let half = T::lit(0.5);
        let omega = self.pulse.envelope_at(t);
        // −i·(½ M a), written out
        let r0 = omega * a[1] * half;
        let r1 = omega.conj() * a[0] * half
            + a[1] * Complex::new(self.delta, -half * self.gamma_in)
            + a[2] * self.g;
        let r2 = a[1] * self.g + a[2] * Complex::new(T::zero(), -half * self.kappa);
        let mi = |z: Complex<T>| Complex::new(z.im, -z.re);
        [mi(r0), mi(r1), mi(r2)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IonParams<T> {
    /// Spontaneous decay Γ_Yb (1/ns).
    pub gamma_yb: T,
    pub pulse: PulseShape<T>,
}

impl<T: Real> IonParams<T> {
    /// ²P₁/₂ lifetime of 8.1 ns.
    pub fn default_gamma() -> T {
        T::one() / T::lit(8.1)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_yb > T::zero() && self.gamma_yb.is_finite()) {
            return Err(Error::invalid("gamma_yb", "must be > 0 and finite"));
        }
        self.pulse.validate()
    }

    pub fn default_grid(&self) -> TimeGrid<T> {
        TimeGrid::covering(&self.pulse, self.gamma_yb)
    }
}

impl<T: Real> AmplitudeSystem<T, 2> for IonParams<T> {
    fn generator(&self, t: T) -> [[Complex<T>; 2]; 2] {
        let omega = self.pulse.envelope_at(t);
        [
            [Complex::new(T::zero(), T::zero()), omega],
            [omega.conj(), Complex::new(T::zero(), -self.gamma_yb)],
        ]
    }

    fn loss_rates(&self) -> [T; 2] {
        [T::zero(), self.gamma_yb]
    }
}

/// A free-running two-level system driven by an arbitrary [`Drive`]; used for
/// constant-drive fixtures that have no negligible-start window.
pub struct DrivenTwoLevel<T, D> {
    pub gamma: T,
    pub drive: D,
}

impl<T: Real, D: Drive<T>> AmplitudeSystem<T, 2> for DrivenTwoLevel<T, D> {
    fn generator(&self, t: T) -> [[Complex<T>; 2]; 2] {
        let omega = self.drive.rabi(t);
        [
            [Complex::new(T::zero(), T::zero()), omega],
            [omega.conj(), Complex::new(T::zero(), -self.gamma)],
        ]
    }

    fn loss_rates(&self) -> [T; 2] {
        [T::zero(), self.gamma]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    pub t_start: T,
    pub t_end: T,
    /// Upper bound on the adaptive step (ns).
    pub max_step: T,
    /// Local error tolerance per step, mixed absolute/relative.
    pub tolerance: T,
    /// Minimum spacing between stored samples; `None` stores every accepted step.
    #[serde(default)]
    pub output_step: Option<T>,
}

impl<T: Real> TimeGrid<T> {
    pub const DEFAULT_TOLERANCE: f64 = 1e-10;
    pub const DEFAULT_MAX_STEP: f64 = 0.05;
    pub const DEFAULT_OUTPUT_STEP: f64 = 0.01;

    pub fn new(t_start: T, t_end: T) -> Self {
        TimeGrid {
            t_start,
            t_end,
            max_step: T::lit(Self::DEFAULT_MAX_STEP),
            tolerance: T::lit(Self::DEFAULT_TOLERANCE),
            output_step: Some(T::lit(Self::DEFAULT_OUTPUT_STEP)),
        }
    }

    /// Window that starts in the negligible leading tail of `pulse` and ends
    /// once a photon decaying at `slowest_rate` has died away.
    pub fn covering(pulse: &PulseShape<T>, slowest_rate: T) -> Self {
        let six = T::lit(6.0);
        let start = T::zero().min(pulse.tau - six * pulse.sigma1);
        let tail = if slowest_rate > T::zero() && slowest_rate.is_finite() {
            T::lit(20.0) / slowest_rate
        } else {
            T::zero()
        };
        let end = pulse.fall_start() + six * pulse.sigma1.max(pulse.sigma2) + tail;
        TimeGrid::new(start, end)
    }

    /// Smallest window containing both.
    pub fn union(&self, other: &TimeGrid<T>) -> Self {
        TimeGrid {
            t_start: self.t_start.min(other.t_start),
            t_end: self.t_end.max(other.t_end),
            ..*self
        }
    }

    pub fn with_tolerance(mut self, tolerance: T) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_start.is_finite() && self.t_end.is_finite() && self.t_start < self.t_end) {
            return Err(Error::invalid("grid", "requires finite t_start < t_end"));
        }
        if !(self.max_step > T::zero()) {
            return Err(Error::invalid("grid.max_step", "must be > 0"));
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::invalid("grid.tolerance", "must be > 0"));
        }
        if let Some(dt) = self.output_step {
            if dt < T::zero() {
                return Err(Error::invalid("grid.output_step", "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Sampled solution of an amplitude system.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeTrajectory<T, const N: usize> {
    pub times: Vec<T>,
    pub amplitudes: Vec<[Complex<T>; N]>,
    /// Running `rate_k·∫|a_k|²dt` per level; the probability that has left
    /// through each decay channel by the sample time.
    pub emitted: Vec<[T; N]>,
    pub rates: [T; N],
}

pub type DonorTrajectory<T> = AmplitudeTrajectory<T, 3>;
pub type IonTrajectory<T> = AmplitudeTrajectory<T, 2>;

impl<T: Real, const N: usize> AmplitudeTrajectory<T, N> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_amplitudes(&self) -> [Complex<T>; N] {
        *self.amplitudes.last().expect("trajectory has at least two samples")
    }

    /// Amplitude of one level over the whole trajectory.
    pub fn channel(&self, index: usize) -> Vec<Complex<T>> {
        self.amplitudes.iter().map(|a| a[index]).collect()
    }

    /// `Σ|a_k|² + Σ rate_k∫|a_k|²dt` at sample `i`; equals one for the exact solution.
    pub fn budget_at(&self, i: usize) -> T {
        let pop = self.amplitudes[i].iter().fold(T::zero(), |s, a| s + a.norm_sqr());
        let gone = self.emitted[i].iter().fold(T::zero(), |s, &x| s + x);
        pop + gone
    }

    /// Largest deviation of the probability budget from one over all samples.
    pub fn max_budget_defect(&self) -> T {
        (0..self.len()).fold(T::zero(), |m, i| m.max((self.budget_at(i) - T::one()).abs()))
    }

    /// Largest deviation of the state norm from one; only meaningful for lossless systems.
    pub fn max_norm_defect(&self) -> T {
        self.amplitudes.iter().fold(T::zero(), |m, a| {
            let n = a.iter().fold(T::zero(), |s, z| s + z.norm_sqr());
            m.max((n - T::one()).abs())
        })
    }

    /// Total probability that left through level `index`'s decay channel.
    pub fn total_emitted(&self, index: usize) -> T {
        self.emitted.last().map(|e| e[index]).unwrap_or_else(T::zero)
    }

    /// CSV with columns `t, re_a0, im_a0, …`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for k in 0..N {
            header.push(format!("re_a{k}"));
            header.push(format!("im_a{k}"));
        }
        w.write_record(&header)?;
        for (t, a) in self.times.iter().zip(&self.amplitudes) {
            let mut row = vec![crate::export::fmt_f64(t.to_f64_lossy())];
            for z in a {
                row.push(crate::export::fmt_f64(z.re.to_f64_lossy()));
                row.push(crate::export::fmt_f64(z.im.to_f64_lossy()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_start<T: Real>(pulse: &PulseShape<T>, grid: &TimeGrid<T>) -> Result<()> {
    let m = pulse.magnitude(grid.t_start);
    if m > T::lit(NEGLIGIBLE_DRIVE) * pulse.omega_max {
        return Err(Error::PulseNotNegligible {
            t_start: grid.t_start.to_f64_lossy(),
            magnitude: m.to_f64_lossy(),
        });
    }
    Ok(())
}

fn ground<T: Real, const N: usize>() -> [Complex<T>; N] {
    let mut a = [Complex::new(T::zero(), T::zero()); N];
    a[0] = Complex::new(T::one(), T::zero());
    a
}

/// Integrate any amplitude system from an arbitrary initial state.
pub fn integrate_system<T, S, const N: usize>(
    sys: &S,
    initial: [Complex<T>; N],
    grid: &TimeGrid<T>,
) -> Result<AmplitudeTrajectory<T, N>>
where
    T: Real,
    S: AmplitudeSystem<T, N>,
{
    rk::integrate(sys, initial, grid)
}

/// Donor dynamics from the optically pumped ground state `(1, 0, 0)`.
pub fn integrate_donor<T: Real>(params: &DonorParams<T>, grid: &TimeGrid<T>) -> Result<DonorTrajectory<T>> {
    params.validate()?;
    grid.validate()?;
    check_start(&params.pulse, grid)?;
    rk::integrate(params, ground(), grid)
}

/// Ion dynamics from the ground state `(1, 0)`.
pub fn integrate_ion<T: Real>(params: &IonParams<T>, grid: &TimeGrid<T>) -> Result<IonTrajectory<T>> {
    params.validate()?;
    grid.validate()?;
    check_start(&params.pulse, grid)?;
    rk::integrate(params, ground(), grid)
}
