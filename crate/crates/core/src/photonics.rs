//! Emitted-photon temporal wavefunctions and their overlap.
//!
//! A photon leaving through a channel with rate `r` has detection-time
//! density `r·|a(t)|²`. Normalizing that amplitude gives the temporal
//! wavefunction `A(t)`; the un-normalized weight is the emission probability.

use std::io::Write;

use num_complex::Complex;

use crate::dynamics::{
    integrate_donor, integrate_ion, AmplitudeTrajectory, DonorParams, IonParams, TimeGrid,
};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::scalar::Real;

/// Emission probabilities below this are treated as "no photon".
pub const MIN_EMISSION: f64 = 1e-12;

/// Level index of the cavity-photon state in the donor basis.
pub const DONOR_PHOTON_LEVEL: usize = 2;
/// Level index of the excited state in the ion basis.
pub const ION_EXCITED_LEVEL: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonWavefunction<T> {
    pub times: Vec<T>,
    /// Normalized so that `∫|A|²dt = 1` under the trapezoidal rule on `times`.
    pub amplitude: Vec<Complex<T>>,
    /// Probability that the photon was emitted at all.
    pub p_emit: T,
}

fn trapezoid<T: Real>(times: &[T], values: impl Iterator<Item = T>) -> T {
    let mut acc = T::zero();
    let mut prev: Option<(T, T)> = None;
    for (&t, v) in times.iter().zip(values) {
        if let Some((tp, vp)) = prev {
            acc += (t - tp) * (v + vp);
        }
        prev = Some((t, v));
    }
    acc * T::lit(0.5)
}

impl<T: Real> PhotonWavefunction<T> {
    /// Builds a wavefunction from raw amplitude samples `a(t)` of a level that
    /// decays at `emission_rate`.
    pub fn from_amplitudes(times: Vec<T>, raw: Vec<Complex<T>>, emission_rate: T) -> Result<Self> {
        if times.len() != raw.len() || times.len() < 2 {
            return Err(Error::invalid("times", "need at least two samples matching the amplitudes"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("times", "must be strictly increasing"));
        }
        if !(emission_rate >= T::zero()) {
            return Err(Error::invalid("emission_rate", "must be >= 0"));
        }
        let p_emit = emission_rate * trapezoid(&times, raw.iter().map(|a| a.norm_sqr()));
        if !(p_emit > T::lit(MIN_EMISSION)) {
            return Err(Error::NoPhoton { p_emit: p_emit.to_f64_lossy() });
        }
        let scale = (emission_rate / p_emit).sqrt();
        let amplitude = raw.into_iter().map(|a| a * scale).collect();
        Ok(PhotonWavefunction { times, amplitude, p_emit: p_emit.min(T::one()) })
    }

    /// `∫|A|²dt` on the stored grid.
    pub fn norm_sqr(&self) -> T {
        trapezoid(&self.times, self.amplitude.iter().map(|a| a.norm_sqr()))
    }

    /// Same photon with every amplitude multiplied by `e^{iφ}`.
    pub fn rotated(&self, phi: T) -> Self {
        let z = crate::scalar::phase(phi);
        PhotonWavefunction {
            times: self.times.clone(),
            amplitude: self.amplitude.iter().map(|a| *a * z).collect(),
            p_emit: self.p_emit,
        }
    }

    /// Mean detection time `∫t|A|²dt`.
    pub fn mean_time(&self) -> T {
        trapezoid(&self.times, self.times.iter().zip(&self.amplitude).map(|(t, a)| *t * a.norm_sqr()))
    }

    /// CSV with columns `t, re, im, abs2`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "re", "im", "abs2"])?;
        for (t, a) in self.times.iter().zip(&self.amplitude) {
            w.write_record([
                fmt_f64(t.to_f64_lossy()),
                fmt_f64(a.re.to_f64_lossy()),
                fmt_f64(a.im.to_f64_lossy()),
                fmt_f64(a.norm_sqr().to_f64_lossy()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    fn interpolant(&self) -> Hermite<'_, T> {
        Hermite::new(&self.times, &self.amplitude)
    }
}

/// Photon emitted through level `channel_index` of `traj` at `emission_rate`.
pub fn photon_wavefunction<T: Real, const N: usize>(
    traj: &AmplitudeTrajectory<T, N>,
    emission_rate: T,
    channel_index: usize,
) -> Result<PhotonWavefunction<T>> {
    if channel_index >= N {
        return Err(Error::invalid("channel_index", format!("must be < {N}")));
    }
    PhotonWavefunction::from_amplitudes(traj.times.clone(), traj.channel(channel_index), emission_rate)
}

/// Simulates the donor and returns its cavity photon.
pub fn donor_photon<T: Real>(params: &DonorParams<T>, grid: &TimeGrid<T>) -> Result<PhotonWavefunction<T>> {
    let traj = integrate_donor(params, grid)?;
    photon_wavefunction(&traj, params.kappa, DONOR_PHOTON_LEVEL)
}

/// Simulates the ion and returns its spontaneously emitted photon.
pub fn ion_photon<T: Real>(params: &IonParams<T>, grid: &TimeGrid<T>) -> Result<PhotonWavefunction<T>> {
    let traj = integrate_ion(params, grid)?;
    photon_wavefunction(&traj, params.gamma_yb, ION_EXCITED_LEVEL)
}

/// Piecewise cubic Hermite interpolant with three-point derivative
/// estimates. Linear in the samples, so a constant phase on the input is a
/// constant phase on every interpolated value.
struct Hermite<'a, T> {
    times: &'a [T],
    values: &'a [Complex<T>],
    slopes: Vec<Complex<T>>,
    cursor: usize,
}

impl<'a, T: Real> Hermite<'a, T> {
    fn new(times: &'a [T], values: &'a [Complex<T>]) -> Self {
        let n = times.len();
        let mut slopes = vec![Complex::new(T::zero(), T::zero()); n];
        if n == 2 {
            let s = (values[1] - values[0]) / (times[1] - times[0]);
            slopes[0] = s;
            slopes[1] = s;
        } else {
            for i in 0..n {
                let (l, m, r) = if i == 0 {
                    (0, 1, 2)
                } else if i == n - 1 {
                    (n - 3, n - 2, n - 1)
                } else {
                    (i - 1, i, i + 1)
                };
                slopes[i] = quadratic_slope(
                    [times[l], times[m], times[r]],
                    [values[l], values[m], values[r]],
                    times[i],
                );
            }
        }
        Hermite { times, values, slopes, cursor: 0 }
    }

    /// Value at `t`, zero outside the sampled support. Queries must be
    /// non-decreasing for the cursor to stay amortised O(1).
    fn eval(&mut self, t: T) -> Complex<T> {
        let n = self.times.len();
        if t < self.times[0] || t > self.times[n - 1] {
            return Complex::new(T::zero(), T::zero());
        }
        if t < self.times[self.cursor] {
            self.cursor = 0;
        }
        while self.cursor + 1 < n - 1 && self.times[self.cursor + 1] <= t {
            self.cursor += 1;
        }
        let i = self.cursor;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * s3 - three * s2 + T::one();
        let h10 = s3 - two * s2 + s;
        let h01 = -two * s3 + three * s2;
        let h11 = s3 - s2;
        self.values[i] * h00
            + self.slopes[i] * (h10 * h)
            + self.values[i + 1] * h01
            + self.slopes[i + 1] * (h11 * h)
    }
}

/// Derivative at `x` of the quadratic through three points.
fn quadratic_slope<T: Real>(x: [T; 3], y: [Complex<T>; 3], at: T) -> Complex<T> {
    // Lagrange basis derivatives
    let d0 = ((at - x[1]) + (at - x[2])) / ((x[0] - x[1]) * (x[0] - x[2]));
    let d1 = ((at - x[0]) + (at - x[2])) / ((x[1] - x[0]) * (x[1] - x[2]));
    let d2 = ((at - x[0]) + (at - x[1])) / ((x[2] - x[0]) * (x[2] - x[1]));
    y[0] * d0 + y[1] * d1 + y[2] * d2
}

/// Sorted union of two strictly increasing grids, merging points closer than `eps`.
fn union_grid<T: Real>(a: &[T], b: &[T], eps: T) -> Vec<T> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = if j >= b.len() || (i < a.len() && a[i] <= b[j]) {
            i += 1;
            a[i - 1]
        } else {
            j += 1;
            b[j - 1]
        };
        match out.last() {
            Some(&last) if next - last <= eps => {}
            _ => out.push(next),
        }
    }
    out
}

/// Both photons resampled onto the union of their grids, restricted to the
/// common support. `None` when the supports do not overlap.
pub fn common_samples<T: Real>(
    a: &PhotonWavefunction<T>,
    b: &PhotonWavefunction<T>,
) -> Option<(Vec<T>, Vec<Complex<T>>, Vec<Complex<T>>)> {
    let a_lo = a.times[0];
    let a_hi = *a.times.last().unwrap();
    let b_lo = b.times[0];
    let b_hi = *b.times.last().unwrap();
    let lo = a_lo.max(b_lo);
    let hi = a_hi.min(b_hi);
    if !(lo < hi) {
        return None;
    }
    let span = a_hi.max(b_hi) - a_lo.min(b_lo);
    let grid = union_grid(&a.times, &b.times, span * T::lit(1e-13));
    let grid: Vec<T> = grid.into_iter().filter(|&t| t >= lo && t <= hi).collect();
    if grid.len() < 2 {
        return None;
    }
    let mut ia = a.interpolant();
    let mut ib = b.interpolant();
    let va = grid.iter().map(|&t| ia.eval(t)).collect();
    let vb = grid.iter().map(|&t| ib.eval(t)).collect();
    Some((grid, va, vb))
}

/// `O = ∫ a*(t)·b(t) dt`, with both photons resampled onto the union of their grids.
pub fn overlap<T: Real>(a: &PhotonWavefunction<T>, b: &PhotonWavefunction<T>) -> Complex<T> {
    let Some((grid, va, vb)) = common_samples(a, b) else {
        log::warn!("photon time grids do not overlap; overlap is zero");
        return Complex::new(T::zero(), T::zero());
    };
    let mut acc = Complex::new(T::zero(), T::zero());
    for k in 1..grid.len() {
        let v0 = va[k - 1].conj() * vb[k - 1];
        let v1 = va[k].conj() * vb[k];
        acc = acc + (v0 + v1) * (grid[k] - grid[k - 1]);
    }
    acc * T::lit(0.5)
}
