//! Dormand–Prince 5(4) with embedded error estimate, specialised to a vector
//! of complex amplitudes carrying per-level leakage accumulators.

use num_complex::Complex;

use super::{AmplitudeSystem, AmplitudeTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy)]
struct State<T, const N: usize> {
    amp: [Complex<T>; N],
    /// ∫ rate_k |a_k|² dt.
    leak: [T; N],
}

impl<T: Real, const N: usize> State<T, N> {
    fn zero() -> Self {
        State { amp: [Complex::new(T::zero(), T::zero()); N], leak: [T::zero(); N] }
    }
}

fn derivative<T: Real, S: AmplitudeSystem<T, N>, const N: usize>(
    sys: &S,
    t: T,
    y: &State<T, N>,
) -> State<T, N> {
    let rates = sys.loss_rates();
    let mut out = State::zero();
    out.amp = sys.derivative(t, &y.amp);
    for k in 0..N {
        out.leak[k] = rates[k] * y.amp[k].norm_sqr();
    }
    out
}

/// y + h·Σ cᵢ kᵢ
fn combine<T: Real, const N: usize>(y: &State<T, N>, h: T, terms: &[(f64, &State<T, N>)]) -> State<T, N> {
    let mut out = *y;
    for &(c, k) in terms {
        if c == 0.0 {
            continue;
        }
        let w = h * T::lit(c);
        for i in 0..N {
            out.amp[i] = out.amp[i] + k.amp[i] * w;
            out.leak[i] += k.leak[i] * w;
        }
    }
    out
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 50_000_000;

pub(crate) fn integrate<T, S, const N: usize>(
    sys: &S,
    initial: [Complex<T>; N],
    grid: &TimeGrid<T>,
) -> Result<AmplitudeTrajectory<T, N>>
where
    T: Real,
    S: AmplitudeSystem<T, N>,
{
    grid.validate()?;
    let tol = grid.tolerance;
    let span = grid.t_end - grid.t_start;
    let min_step = T::lit(1e-13) * (T::one() + grid.t_start.abs().max(grid.t_end.abs()));

    let mut t = grid.t_start;
    let mut y = State { amp: initial, leak: [T::zero(); N] };
    let mut k1 = derivative(sys, t, &y);

    let mut times = vec![t];
    let mut amplitudes = vec![y.amp];
    let mut emitted = vec![y.leak];
    let mut last_out = t;

    let mut h = grid.max_step.min(span / T::lit(100.0));
    let mut steps = 0usize;

    while t < grid.t_end {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(Error::StepUnderflow { t: t.to_f64_lossy(), h: h.to_f64_lossy() });
        }
        let last = t + h >= grid.t_end;
        if last {
            h = grid.t_end - t;
        }

        let k2 = derivative(sys, t + h * T::lit(C2), &combine(&y, h, &[(A21, &k1)]));
        let k3 = derivative(sys, t + h * T::lit(C3), &combine(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = derivative(
            sys,
            t + h * T::lit(C4),
            &combine(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = derivative(
            sys,
            t + h * T::lit(C5),
            &combine(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = derivative(
            sys,
            t + h,
            &combine(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = combine(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t_new = if last { grid.t_end } else { t + h };
        let k7 = derivative(sys, t_new, &y_new);

        let err = combine(
            &State::zero(),
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let mut err_norm = T::zero();
        for i in 0..N {
            let scale = tol * (T::one() + y.amp[i].norm().max(y_new.amp[i].norm()));
            err_norm = err_norm.max(err.amp[i].norm() / scale);
            let scale = tol * (T::one() + y.leak[i].abs().max(y_new.leak[i].abs()));
            err_norm = err_norm.max(err.leak[i].abs() / scale);
        }
        if !err_norm.is_finite() {
            return Err(Error::StepUnderflow { t: t.to_f64_lossy(), h: h.to_f64_lossy() });
        }

        if err_norm <= T::one() {
            t = t_new;
            y = y_new;
            k1 = k7;
            let due = match grid.output_step {
                Some(dt) => t - last_out >= dt,
                None => true,
            };
            if due || t >= grid.t_end {
                times.push(t);
                amplitudes.push(y.amp);
                emitted.push(y.leak);
                last_out = t;
            }
            let factor = if err_norm == T::zero() {
                T::lit(MAX_FACTOR)
            } else {
                (T::lit(SAFETY) * err_norm.powf(T::lit(-0.2)))
                    .max(T::lit(MIN_FACTOR))
                    .min(T::lit(MAX_FACTOR))
            };
            h = (h * factor).min(grid.max_step);
        } else {
            let factor = (T::lit(SAFETY) * err_norm.powf(T::lit(-0.2))).max(T::lit(MIN_FACTOR));
            h = h * factor;
            if h < min_step {
                return Err(Error::StepUnderflow { t: t.to_f64_lossy(), h: h.to_f64_lossy() });
            }
        }
    }

    Ok(AmplitudeTrajectory { times, amplitudes, emitted, rates: sys.loss_rates() })
}
