//! Pulse-shape search maximizing the real photon overlap.
//!
//! One emitter's pulse is held fixed; the other is swept coordinate by
//! coordinate with a golden-section line search. Every candidate is first
//! projected onto the target emission probability by rescaling `Ω_max`, and
//! its `θ₀` is then set analytically so that `arg(O) = 0`. The searched
//! objective is therefore `|O|`, which equals `Re(O)` after the correction.

use std::io::Write;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DonorParams, IonParams, TimeGrid};
use crate::error::{Error, Result};
use crate::export::fmt_f64;
use crate::photonics::{donor_photon, ion_photon, overlap, PhotonWavefunction};
use crate::pulse::{PulseParam, PulseShape};
use crate::scalar::Real;

/// Coordinates swept by the line search. `Ω_max` is fixed by the emission
/// target and `θ₀` by the phase correction.
pub const SHAPE_PARAMS: [PulseParam; 5] =
    [PulseParam::Sigma1, PulseParam::Sigma2, PulseParam::Tau, PulseParam::THold, PulseParam::Theta1];

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Donor,
    Ion,
}

/// Closed interval per pulse coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseBounds<T> {
    pub sigma1: [T; 2],
    pub sigma2: [T; 2],
    pub tau: [T; 2],
    pub t_hold: [T; 2],
    pub omega_max: [T; 2],
    pub theta0: [T; 2],
    pub theta1: [T; 2],
}

impl<T: Real> PulseBounds<T> {
    pub fn get(&self, p: PulseParam) -> [T; 2] {
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

    /// Generous box around a starting pulse.
    pub fn around(p: &PulseShape<T>) -> Self {
        let pi = T::PI();
        PulseBounds {
            sigma1: [p.sigma1 * T::lit(0.25), p.sigma1 * T::lit(4.0)],
            sigma2: [p.sigma2 * T::lit(0.25), p.sigma2 * T::lit(4.0)],
            tau: [p.tau - T::lit(30.0), p.tau + T::lit(30.0)],
            t_hold: [T::zero(), p.t_hold.max(T::one()) * T::lit(10.0)],
            omega_max: [T::zero(), p.omega_max.max(T::lit(1e-3)) * T::lit(100.0)],
            theta0: [-pi, pi],
            theta1: [p.theta1 - T::lit(0.3), p.theta1 + T::lit(0.3)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in PulseParam::ALL {
            let [lo, hi] = self.get(p);
            if !(lo <= hi) {
                return Err(Error::invalid(format!("bounds.{}", p.name()), "empty interval"));
            }
        }
        Ok(())
    }

    pub fn contains(&self, pulse: &PulseShape<T>) -> bool {
        PulseParam::ALL.iter().all(|&p| {
            let [lo, hi] = self.get(p);
            let v = pulse.get(p);
            v >= lo && v <= hi
        })
    }

    fn clamp(&self, p: PulseParam, v: T) -> T {
        let [lo, hi] = self.get(p);
        v.max(lo).min(hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizationSpec<T> {
    pub free_side: Side,
    pub fixed_pulse: PulseShape<T>,
    pub bounds: PulseBounds<T>,
    pub target_p1: T,
    pub p1_tolerance: T,
    pub max_evaluations: usize,
    pub seed: u64,
    /// Extra randomized starts after the first descent.
    #[serde(default)]
    pub restarts: usize,
    /// Upper bound on full coordinate sweeps per descent.
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
}

fn default_sweeps() -> usize {
    6
}

impl<T: Real> OptimizationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        self.fixed_pulse.validate()?;
        if !(self.target_p1 > T::zero() && self.target_p1 <= T::lit(0.1)) {
            return Err(Error::invalid("target_p1", "must lie in (0, 0.1] (weak excitation)"));
        }
        if !(self.p1_tolerance > T::zero()) {
            return Err(Error::invalid("p1_tolerance", "must be > 0"));
        }
        if self.max_evaluations == 0 {
            return Err(Error::invalid("max_evaluations", "must be > 0"));
        }
        Ok(())
    }
}

/// Something whose emitted photon depends on a single drive pulse.
pub trait Emitter<T: Real> {
    fn current_pulse(&self) -> PulseShape<T>;
    fn photon(&self, pulse: &PulseShape<T>, settings: &TimeGrid<T>) -> Result<PhotonWavefunction<T>>;
}

/// Default window of the candidate with the step settings of `settings`.
fn covering<T: Real>(default: TimeGrid<T>, settings: &TimeGrid<T>) -> TimeGrid<T> {
    TimeGrid {
        max_step: settings.max_step,
        tolerance: settings.tolerance,
        output_step: settings.output_step,
        ..default
    }
}

impl<T: Real> Emitter<T> for DonorParams<T> {
    fn current_pulse(&self) -> PulseShape<T> {
        self.pulse
    }

    fn photon(&self, pulse: &PulseShape<T>, settings: &TimeGrid<T>) -> Result<PhotonWavefunction<T>> {
        let params = DonorParams { pulse: *pulse, ..*self };
        donor_photon(&params, &covering(params.default_grid(), settings))
    }
}

impl<T: Real> Emitter<T> for IonParams<T> {
    fn current_pulse(&self) -> PulseShape<T> {
        self.pulse
    }

    fn photon(&self, pulse: &PulseShape<T>, settings: &TimeGrid<T>) -> Result<PhotonWavefunction<T>> {
        let params = IonParams { pulse: *pulse, ..*self };
        ion_photon(&params, &covering(params.default_grid(), settings))
    }
}

/// Which factor of the overlap integral the free photon occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// `O = ∫ fixed* · free` (free donor against fixed ion).
    FreeKet,
    /// `O = ∫ free* · fixed` (free ion against fixed donor).
    FreeBra,
}

impl Orientation {
    fn overlap<T: Real>(self, free: &PhotonWavefunction<T>, fixed: &PhotonWavefunction<T>) -> Complex<T> {
        match self {
            Orientation::FreeKet => overlap(fixed, free),
            Orientation::FreeBra => overlap(free, fixed),
        }
    }

    /// Shift of the free pulse's `θ₀` that cancels `arg(O)`.
    ///
    /// `θ₀ → θ₀ + δ` multiplies the free photon by `e^{−iδ}`, so `O` turns by
    /// `e^{−iδ}` when the free photon is the ket and by `e^{+iδ}` when it is the bra.
    pub fn theta0_correction<T: Real>(self, o: Complex<T>) -> T {
        match self {
            Orientation::FreeKet => o.arg(),
            Orientation::FreeBra => -o.arg(),
        }
    }
}

/// One projected, phase-corrected candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Candidate<T> {
    pub pulse: PulseShape<T>,
    /// `Re(O)` after the `θ₀` correction, i.e. `|O|`.
    pub re_overlap: T,
    /// `arg(O)` before the correction.
    pub raw_arg: T,
    pub p1: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry<T> {
    pub evaluation: usize,
    pub pulse: PulseShape<T>,
    pub re_overlap: T,
    pub p1: T,
    /// Incumbent objective after this evaluation.
    pub best: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult<T> {
    pub pulse: PulseShape<T>,
    pub re_overlap: T,
    /// `arg(O)` of the returned pulse; zero up to integration error.
    pub arg_overlap: T,
    pub p1: T,
    /// Projected, phase-corrected starting point.
    pub start: Candidate<T>,
    pub evaluations: usize,
    pub log: Vec<LogEntry<T>>,
}

impl<T: Real> OptimizationResult<T> {
    /// CSV with columns `iteration, sigma1, …, theta1, re_overlap, p1`.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(PulseParam::ALL.iter().map(|p| p.name().to_string()));
        header.extend(["re_overlap".to_string(), "p1".to_string(), "best".to_string()]);
        w.write_record(&header)?;
        for e in &self.log {
            let mut row = vec![e.evaluation.to_string()];
            row.extend(PulseParam::ALL.iter().map(|&p| fmt_f64(e.pulse.get(p).to_f64_lossy())));
            row.push(fmt_f64(e.re_overlap.to_f64_lossy()));
            row.push(fmt_f64(e.p1.to_f64_lossy()));
            row.push(fmt_f64(e.best.to_f64_lossy()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn wrap_phase<T: Real>(theta: T) -> T {
    let tau = T::TAU();
    theta - tau * (theta / tau).round()
}

/// Search state shared by every descent.
struct Search<'a, T: Real, E: Emitter<T>> {
    free: &'a E,
    fixed: &'a PhotonWavefunction<T>,
    orientation: Orientation,
    spec: &'a OptimizationSpec<T>,
    settings: &'a TimeGrid<T>,
    evaluations: usize,
    best: Option<Candidate<T>>,
    log: Vec<LogEntry<T>>,
}

impl<'a, T: Real, E: Emitter<T>> Search<'a, T, E> {
    fn budget_left(&self) -> bool {
        self.evaluations < self.spec.max_evaluations
    }

    /// Rescales `Ω_max` until the emission probability hits the target.
    /// Returns the photon of the projected pulse.
    fn project(&self, pulse: &mut PulseShape<T>) -> Result<PhotonWavefunction<T>> {
        let [lo, hi] = self.spec.bounds.omega_max;
        let target = self.spec.target_p1;
        if pulse.omega_max <= T::zero() {
            pulse.omega_max = hi.min(T::one()).max(lo);
        }
        let mut photon = self.free.photon(pulse, self.settings)?;
        // (Ω², p) pairs for secant refinement
        let mut prev: Option<(T, T)> = None;
        for _ in 0..12 {
            let p = photon.p_emit;
            if (p - target).abs() <= self.spec.p1_tolerance {
                return Ok(photon);
            }
            let x = pulse.omega_max * pulse.omega_max;
            let x_next = match prev {
                Some((xp, pp)) if (p - pp).abs() > T::lit(1e-300) && x != xp => {
                    let slope = (p - pp) / (x - xp);
                    let step = x + (target - p) / slope;
                    if step > T::zero() { step } else { x * target / p }
                }
                _ => x * target / p,
            };
            prev = Some((x, p));
            let omega = x_next.sqrt();
            if omega > hi || omega < lo {
                let clamped = omega.max(lo).min(hi);
                if clamped == pulse.omega_max {
                    return Err(Error::Infeasible(format!(
                        "target p1 = {target} needs Ω_max = {omega} outside [{lo}, {hi}]"
                    )));
                }
                pulse.omega_max = clamped;
            } else {
                pulse.omega_max = omega;
            }
            photon = self.free.photon(pulse, self.settings)?;
        }
        if (photon.p_emit - target).abs() <= self.spec.p1_tolerance {
            Ok(photon)
        } else {
            Err(Error::Infeasible(format!("could not reach target p1 = {target} (got {})", photon.p_emit)))
        }
    }

    /// Projects, simulates and phase-corrects `pulse`. `None` when infeasible
    /// or out of budget.
    fn evaluate(&mut self, mut pulse: PulseShape<T>) -> Option<Candidate<T>> {
        if !self.budget_left() {
            return None;
        }
        self.evaluations += 1;
        let photon = match self.project(&mut pulse) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("candidate rejected: {e}");
                return None;
            }
        };
        let o = self.orientation.overlap(&photon, self.fixed);
        let theta0 = wrap_phase(pulse.theta0 + self.orientation.theta0_correction(o));
        pulse.theta0 = self.spec.bounds.clamp(PulseParam::Theta0, theta0);
        let candidate = Candidate { pulse, re_overlap: o.norm(), raw_arg: o.arg(), p1: photon.p_emit };
        let improved = match &self.best {
            Some(b) => candidate.re_overlap > b.re_overlap,
            None => true,
        };
        if improved {
            self.best = Some(candidate);
        }
        self.log.push(LogEntry {
            evaluation: self.evaluations,
            pulse,
            re_overlap: candidate.re_overlap,
            p1: candidate.p1,
            best: self.best.map(|b| b.re_overlap).unwrap_or(candidate.re_overlap),
        });
        Some(candidate)
    }

    /// Golden-section search of one coordinate on `[a, b]` around `current`.
    /// Returns the best candidate seen, if it beats `current`.
    fn line_search(&mut self, current: &Candidate<T>, param: PulseParam, a: T, b: T, iters: usize) -> Option<Candidate<T>> {
        let inv = T::lit(INV_PHI);
        let f = |s: &mut Self, x: T| -> (T, Option<Candidate<T>>) {
            let c = s.evaluate(current.pulse.with(param, x));
            (c.map(|c| c.re_overlap).unwrap_or(-T::infinity()), c)
        };
        let (mut a, mut b) = (a, b);
        let mut best: Option<Candidate<T>> = None;
        let keep = |c: Option<Candidate<T>>, best: &mut Option<Candidate<T>>| {
            if let Some(c) = c {
                if best.map_or(true, |b| c.re_overlap > b.re_overlap) {
                    *best = Some(c);
                }
            }
        };
        let mut x1 = b - (b - a) * inv;
        let mut x2 = a + (b - a) * inv;
        let (mut f1, c1) = f(self, x1);
        keep(c1, &mut best);
        let (mut f2, c2) = f(self, x2);
        keep(c2, &mut best);
        for _ in 0..iters {
            if !self.budget_left() {
                break;
            }
            if f1 >= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - (b - a) * inv;
                let (v, c) = f(self, x1);
                f1 = v;
                keep(c, &mut best);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + (b - a) * inv;
                let (v, c) = f(self, x2);
                f2 = v;
                keep(c, &mut best);
            }
        }
        best.filter(|c| c.re_overlap > current.re_overlap)
    }

    /// Cyclic coordinate descent from `start`.
    fn descend(&mut self, start: Candidate<T>) -> Candidate<T> {
        let mut current = start;
        let mut widths: Vec<T> = SHAPE_PARAMS
            .iter()
            .map(|&p| {
                let [lo, hi] = self.spec.bounds.get(p);
                (hi - lo) * T::lit(0.125)
            })
            .collect();
        for _sweep in 0..self.spec.max_sweeps {
            let before = current.re_overlap;
            for (k, &param) in SHAPE_PARAMS.iter().enumerate() {
                let [lo, hi] = self.spec.bounds.get(param);
                if !(hi > lo) || !self.budget_left() {
                    continue;
                }
                let x = current.pulse.get(param);
                let a = (x - widths[k]).max(lo);
                let b = (x + widths[k]).min(hi);
                if !(b > a) {
                    continue;
                }
                match self.line_search(&current, param, a, b, 8) {
                    Some(better) => current = better,
                    None => widths[k] = widths[k] * T::lit(0.5),
                }
            }
            let gain = current.re_overlap - before;
            log::info!("sweep done: Re(O) = {} (+{gain}), {} evaluations", current.re_overlap, self.evaluations);
            if gain < T::lit(1e-7) || !self.budget_left() {
                break;
            }
        }
        current
    }
}

/// Maximizes the real overlap between the photon of `free` and the fixed photon.
pub fn optimize_against<T: Real, E: Emitter<T>>(
    spec: &OptimizationSpec<T>,
    free: &E,
    fixed: &PhotonWavefunction<T>,
    orientation: Orientation,
    settings: &TimeGrid<T>,
) -> Result<OptimizationResult<T>> {
    spec.validate()?;
    let mut search = Search {
        free,
        fixed,
        orientation,
        spec,
        settings,
        evaluations: 0,
        best: None,
        log: Vec::new(),
    };
    let mut start_pulse = free.current_pulse();
    for p in PulseParam::ALL {
        start_pulse.set(p, spec.bounds.clamp(p, start_pulse.get(p)));
    }
    // the projection must succeed at the start; surface why if it does not
    let mut probe = start_pulse;
    search.project(&mut probe)?;
    let start = search
        .evaluate(start_pulse)
        .ok_or(Error::BudgetExhausted(spec.max_evaluations))?;

    let mut best = search.descend(start);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.restarts {
        if !search.budget_left() {
            break;
        }
        let mut pulse = best.pulse;
        for &p in &SHAPE_PARAMS {
            let [lo, hi] = spec.bounds.get(p);
            if hi > lo {
                let span = (hi - lo) * T::lit(0.1);
                let jitter = T::lit(rng.gen_range(-1.0..1.0));
                pulse.set(p, spec.bounds.clamp(p, pulse.get(p) + span * jitter));
            }
        }
        if let Some(c) = search.evaluate(pulse) {
            let candidate = search.descend(c);
            if candidate.re_overlap > best.re_overlap {
                best = candidate;
            }
        }
    }
    let best = search.best.filter(|b| b.re_overlap >= best.re_overlap).unwrap_or(best);

    Ok(OptimizationResult {
        pulse: best.pulse,
        re_overlap: best.re_overlap,
        arg_overlap: T::zero(),
        p1: best.p1,
        start,
        evaluations: search.evaluations,
        log: search.log,
    })
}

/// Runs the search for `spec.free_side` with the other emitter driven by
/// `spec.fixed_pulse`. The returned `arg_overlap` is measured by re-simulating
/// the winning pulse.
pub fn optimize_pulse<T: Real>(
    spec: &OptimizationSpec<T>,
    donor: &DonorParams<T>,
    ion: &IonParams<T>,
    grid: &TimeGrid<T>,
) -> Result<OptimizationResult<T>> {
    spec.validate()?;
    let (mut result, free_photon, fixed_photon, orientation) = match spec.free_side {
        Side::Donor => {
            let fixed_ion = IonParams { pulse: spec.fixed_pulse, ..*ion };
            let fixed = fixed_ion.photon(&spec.fixed_pulse, grid)?;
            if !(fixed.p_emit > T::lit(crate::photonics::MIN_EMISSION)) {
                return Err(Error::NoPhoton { p_emit: fixed.p_emit.to_f64_lossy() });
            }
            let r = optimize_against(spec, donor, &fixed, Orientation::FreeKet, grid)?;
            let free = donor.photon(&r.pulse, grid)?;
            (r, free, fixed, Orientation::FreeKet)
        }
        Side::Ion => {
            let fixed_donor = DonorParams { pulse: spec.fixed_pulse, ..*donor };
            let fixed = fixed_donor.photon(&spec.fixed_pulse, grid)?;
            let r = optimize_against(spec, ion, &fixed, Orientation::FreeBra, grid)?;
            let free = ion.photon(&r.pulse, grid)?;
            (r, free, fixed, Orientation::FreeBra)
        }
    };
    let o = orientation.overlap(&free_photon, &fixed_photon);
    result.re_overlap = o.re;
    result.arg_overlap = o.arg();
    result.p1 = free_photon.p_emit;
    Ok(result)
}
