//! Heralded-entanglement figures of merit.
//!
//! Two emitters are weakly excited, their photons interfere on a beamsplitter
//! and a single detector click heralds the entangled state
//! `(|1,0⟩ − i·e^{iΔφ}|0,1⟩)/√2`. Double excitations where one photon is lost
//! masquerade as single heralds and add incoherent `|1,1⟩` weight.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{phase, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams<T> {
    /// Ion excitation (emission) probability.
    pub p1_yb: T,
    /// Donor excitation (emission) probability.
    pub p1_in: T,
    /// Ion collection efficiency.
    pub p2_yb: T,
    /// Donor collection efficiency.
    pub p2_in: T,
    /// Detector quantum efficiency.
    pub eta: T,
    /// Recoil fidelity factor.
    pub f_dyn: T,
    /// Path-length phase (rad).
    pub delta_phi: T,
    /// Optical pumping time (µs).
    pub t_init: T,
    /// Excitation time (µs).
    pub t_pulse: T,
    /// Readout time, spent only on heralded runs (µs).
    pub t_readout: T,
}

impl<T: Real> Default for ProtocolParams<T> {
    fn default() -> Self {
        ProtocolParams {
            p1_yb: T::lit(0.05),
            p1_in: T::lit(0.05),
            p2_yb: T::lit(0.32),
            p2_in: T::lit(0.34),
            eta: T::lit(0.80),
            f_dyn: T::lit(0.96),
            delta_phi: T::zero(),
            t_init: T::one(),
            t_pulse: T::lit(0.01),
            t_readout: T::lit(10.0),
        }
    }
}

fn unit_interval<T: Real>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is outside [0, 1]")))
    }
}

impl<T: Real> ProtocolParams<T> {
    pub fn validate(&self) -> Result<()> {
        unit_interval("p1_yb", self.p1_yb)?;
        unit_interval("p1_in", self.p1_in)?;
        unit_interval("p2_yb", self.p2_yb)?;
        unit_interval("p2_in", self.p2_in)?;
        unit_interval("eta", self.eta)?;
        unit_interval("f_dyn", self.f_dyn)?;
        if !self.delta_phi.is_finite() {
            return Err(Error::invalid("delta_phi", "must be finite"));
        }
        for (name, v) in [("t_init", self.t_init), ("t_pulse", self.t_pulse), ("t_readout", self.t_readout)] {
            if !(v >= T::zero() && v.is_finite()) {
                return Err(Error::invalid(name, "must be >= 0"));
            }
        }
        Ok(())
    }
}

/// Amplitude ratio `c₁` of false heralds from double excitations with one lost photon.
pub fn double_excitation_factor<T: Real>(p: &ProtocolParams<T>) -> Result<T> {
    let denom = (T::one() - p.p1_in) * p.p2_yb;
    if !(denom > T::zero()) {
        return Err(Error::Infeasible(
            "double-excitation factor needs p1_in < 1 and p2_yb > 0".into(),
        ));
    }
    let lost_one = p.p2_yb * (T::one() - p.p2_in) + p.p2_in * (T::one() - p.p2_yb);
    Ok((p.p1_in * lost_one / denom).sqrt())
}

/// `F = [1 + F_dyn·Re(O)] / (2 + c₁²)`.
pub fn fidelity<T: Real>(c1: T, f_dyn: T, re_overlap: T) -> T {
    (T::one() + f_dyn * re_overlap) / (T::lit(2.0) + c1 * c1)
}

/// Fidelity with an uncontrolled interferometer phase `ε`, which replaces
/// `Re(O)` by `Re(e^{iε}·O)`.
pub fn fidelity_with_phase_error<T: Real>(c1: T, f_dyn: T, overlap: Complex<T>, epsilon: T) -> T {
    fidelity(c1, f_dyn, (phase(epsilon) * overlap).re)
}

/// Probability that exactly one photon is detected per attempt.
pub fn success_probability<T: Real>(p: &ProtocolParams<T>) -> T {
    (p.p1_yb * p.p2_yb * (T::one() - p.p1_in) + p.p1_in * p.p2_in * (T::one() - p.p1_yb)) * p.eta
}

/// Heralded pairs per µs·10³ (kHz). Readout time is paid only on success:
/// `rate = P / (t_init + t_pulse + P·t_readout)`.
pub fn entanglement_rate<T: Real>(p: &ProtocolParams<T>, p_succ: T) -> Result<T> {
    unit_interval("p_succ", p_succ)?;
    let cycle = p.t_init + p.t_pulse + p_succ * p.t_readout;
    if !(cycle > T::zero()) {
        if p_succ == T::zero() {
            return Ok(T::zero());
        }
        return Err(Error::Infeasible("cycle time is zero".into()));
    }
    Ok(p_succ / cycle * T::lit(1000.0))
}

/// One of the four quantities in the balance condition
/// `p1_yb(1 − p1_in)p2_yb = p1_in(1 − p1_yb)p2_in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceUnknown {
    P1Yb,
    P1In,
    P2Yb,
    P2In,
}

/// The three known quantities; the field matching `unknown` is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalanceInputs<T> {
    pub p1_yb: T,
    pub p1_in: T,
    pub p2_yb: T,
    pub p2_in: T,
}

/// `lhs − rhs` of the balance condition.
pub fn balance_residual<T: Real>(p1_yb: T, p1_in: T, p2_yb: T, p2_in: T) -> T {
    p1_yb * (T::one() - p1_in) * p2_yb - p1_in * (T::one() - p1_yb) * p2_in
}

/// Solves the balance condition for `unknown` given the other three.
pub fn balance_solve<T: Real>(unknown: BalanceUnknown, known: BalanceInputs<T>) -> Result<T> {
    let BalanceInputs { p1_yb, p1_in, p2_yb, p2_in } = known;
    let checks: [(&str, T, BalanceUnknown); 4] = [
        ("p1_yb", p1_yb, BalanceUnknown::P1Yb),
        ("p1_in", p1_in, BalanceUnknown::P1In),
        ("p2_yb", p2_yb, BalanceUnknown::P2Yb),
        ("p2_in", p2_in, BalanceUnknown::P2In),
    ];
    for (name, v, which) in checks {
        if which != unknown {
            unit_interval(name, v)?;
        }
    }
    let one = T::one();
    // odds p/(1 − p) of an excitation probability
    let odds = |p: T| p / (one - p);
    let from_odds = |o: T| o / (one + o);
    let ratio = |num: T, den: T, what: &str| -> Result<T> {
        if den == T::zero() {
            if num == T::zero() {
                return Err(Error::Underdetermined(format!("{what}: every value satisfies the balance condition")));
            }
            return Err(Error::Infeasible(format!("{what}: no finite solution")));
        }
        Ok(num / den)
    };
    let value = match unknown {
        BalanceUnknown::P2In => ratio(p1_yb * (one - p1_in) * p2_yb, p1_in * (one - p1_yb), "p2_in")?,
        BalanceUnknown::P2Yb => ratio(p1_in * (one - p1_yb) * p2_in, p1_yb * (one - p1_in), "p2_yb")?,
        BalanceUnknown::P1Yb => {
            if p1_in == one {
                return Err(Error::Infeasible("p1_in = 1 leaves no single-herald amplitude".into()));
            }
            from_odds(ratio(odds(p1_in) * p2_in, p2_yb, "p1_yb")?)
        }
        BalanceUnknown::P1In => {
            if p1_yb == one {
                return Err(Error::Infeasible("p1_yb = 1 leaves no single-herald amplitude".into()));
            }
            from_odds(ratio(odds(p1_yb) * p2_yb, p2_in, "p1_in")?)
        }
    };
    if !(value >= T::zero() && value <= one) {
        return Err(Error::Infeasible(format!("solution {value} violates the bound [0, 1]")));
    }
    Ok(value)
}

/// Dense 4×4 density matrix over `{|0,0⟩, |0,1⟩, |1,0⟩, |1,1⟩}`; the first
/// label is the ion, the second the donor.
pub type DensityMatrix<T> = [[Complex<T>; 4]; 4];

pub const KET_01: usize = 1;
pub const KET_10: usize = 2;
pub const KET_11: usize = 3;

/// Heralded two-qubit state after tracing out the photons. `overlap` is the
/// photon overlap `∫A*_Yb·A_In dt`; fold `F_dyn` in by passing `F_dyn·O`.
pub fn reduced_density_matrix<T: Real>(overlap: Complex<T>, delta_phi: T, c1: T) -> Result<DensityMatrix<T>> {
    if overlap.norm() > T::one() + T::lit(1e-12) {
        return Err(Error::invalid("overlap", format!("|O| = {} exceeds 1", overlap.norm())));
    }
    let zero = Complex::new(T::zero(), T::zero());
    let norm = T::one() / (T::lit(2.0) + c1 * c1);
    let mut rho = [[zero; 4]; 4];
    rho[KET_01][KET_01] = Complex::new(norm, T::zero());
    rho[KET_10][KET_10] = Complex::new(norm, T::zero());
    rho[KET_11][KET_11] = Complex::new(c1 * c1 * norm, T::zero());
    let coherence = Complex::new(T::zero(), -T::one()) * phase(delta_phi) * overlap * norm;
    rho[KET_01][KET_10] = coherence;
    rho[KET_10][KET_01] = coherence.conj();
    Ok(rho)
}

/// Target state `(|1,0⟩ − i·e^{iΔφ}|0,1⟩)/√2`.
pub fn target_state<T: Real>(delta_phi: T) -> [Complex<T>; 4] {
    let s = T::one() / T::lit(2.0).sqrt();
    let zero = Complex::new(T::zero(), T::zero());
    let mut psi = [zero; 4];
    psi[KET_10] = Complex::new(s, T::zero());
    psi[KET_01] = Complex::new(T::zero(), -T::one()) * phase(delta_phi) * s;
    psi
}

/// `⟨Ψ_ent|ρ|Ψ_ent⟩`.
pub fn fidelity_from_rho<T: Real>(rho: &DensityMatrix<T>, delta_phi: T) -> Result<T> {
    let tol = T::lit(1e-8);
    let mut trace = Complex::new(T::zero(), T::zero());
    for i in 0..4 {
        trace = trace + rho[i][i];
        for j in 0..4 {
            if (rho[i][j] - rho[j][i].conj()).norm() > tol {
                return Err(Error::InvalidDensityMatrix(format!("not Hermitian at ({i}, {j})")));
            }
        }
    }
    if (trace - Complex::new(T::one(), T::zero())).norm() > tol {
        return Err(Error::InvalidDensityMatrix(format!("trace {trace} != 1")));
    }
    let psi = target_state(delta_phi);
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..4 {
        for j in 0..4 {
            acc = acc + psi[i].conj() * rho[i][j] * psi[j];
        }
    }
    Ok(acc.re)
}

/// All protocol outputs for one parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolReport<T> {
    pub c1: T,
    pub fidelity: T,
    pub p_succ: T,
    pub rate_khz: T,
    pub balance_residual: T,
}

pub fn evaluate<T: Real>(p: &ProtocolParams<T>, re_overlap: T) -> Result<ProtocolReport<T>> {
    p.validate()?;
    let c1 = double_excitation_factor(p)?;
    let p_succ = success_probability(p);
    Ok(ProtocolReport {
        c1,
        fidelity: fidelity(c1, p.f_dyn, re_overlap),
        p_succ,
        rate_khz: entanglement_rate(p, p_succ)?,
        balance_residual: balance_residual(p.p1_yb, p.p1_in, p.p2_yb, p.p2_in),
    })
}
