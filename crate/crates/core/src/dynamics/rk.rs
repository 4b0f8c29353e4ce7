//! Adaptive embedded Runge-Kutta integrator (Dormand-Prince 5(4)) over flat
//! state vectors of real or complex elements.
//!
//! Step acceptance uses the max-norm of the componentwise error against
//! `abs_tol + rel_tol * |y|`; the accuracy contract is the tolerance budget,
//! not the method.

use crate::error::{Error, Result};
use crate::linalg::MatElem;
use crate::scalar::Real;

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
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
/// 5th-order weights (also the 7th stage of the FSAL pair).
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
/// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct RkOptions<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_steps: usize,
}

impl<T: Real> Default for RkOptions<T> {
    fn default() -> Self {
        RkOptions { rel_tol: T::of(1e-10), abs_tol: T::of(1e-13), max_steps: 50_000_000 }
    }
}

fn axpy<E: MatElem>(out: &mut [E], y: &[E], terms: &[(f64, &[E])], h: E::Re) {
    for i in 0..out.len() {
        let mut acc = E::zero();
        for (c, k) in terms {
            acc += k[i].scale(E::Re::of(*c));
        }
        out[i] = y[i] + acc.scale(h);
    }
}

/// Integrate `dy/dt = rhs(t, y)` from `t_out[0]` through each time in
/// `t_out`, invoking `emit(index, t, y)` at every output point (including
/// the initial one).
pub fn integrate_adaptive<T, E, F, G>(
    y0: &[E],
    t_out: &[T],
    opts: &RkOptions<T>,
    mut rhs: F,
    mut emit: G,
) -> Result<()>
where
    T: Real,
    E: MatElem<Re = T>,
    F: FnMut(T, &[E], &mut [E]),
    G: FnMut(usize, T, &[E]),
{
    assert!(!t_out.is_empty(), "need at least one output time");
    for w in t_out.windows(2) {
        assert!(w[1] > w[0], "output times must be strictly increasing");
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t_out[0];
    emit(0, t, &y);
    if t_out.len() == 1 {
        return Ok(());
    }

    let mut k1 = vec![E::zero(); n];
    let mut k2 = vec![E::zero(); n];
    let mut k3 = vec![E::zero(); n];
    let mut k4 = vec![E::zero(); n];
    let mut k5 = vec![E::zero(); n];
    let mut k6 = vec![E::zero(); n];
    let mut k7 = vec![E::zero(); n];
    let mut stage = vec![E::zero(); n];
    let mut y_new = vec![E::zero(); n];

    rhs(t, &y, &mut k1);
    let span = *t_out.last().unwrap() - t;
    let mut h = span * T::of(1e-6);
    // Crude refinement of the first step from the initial slope.
    let f_norm = k1.iter().map(|v| v.modulus()).fold(T::zero(), T::max);
    let y_norm = y.iter().map(|v| v.modulus()).fold(T::zero(), T::max);
    if f_norm > T::zero() {
        h = h.min((y_norm + T::one()) / f_norm * T::of(1e-3));
    }
    h = h.max(span * T::of(1e-14));

    let mut out_idx = 1;
    let mut steps = 0usize;

    while out_idx < t_out.len() {
        if steps >= opts.max_steps {
            return Err(Error::Integrator {
                t: t.to_f64().unwrap_or(f64::NAN),
                step: h.to_f64().unwrap_or(f64::NAN),
                detail: format!("step budget of {} exhausted", opts.max_steps),
            });
        }
        steps += 1;

        let t_target = t_out[out_idx];
        // Clamp onto the next output time; remember that we will land on it.
        let hits_target = t_target - t <= h;
        let h_step = if hits_target { t_target - t } else { h };
        let h_floor = T::epsilon() * t.abs().max(T::one()) * T::of(32.0);
        if h_step < h_floor {
            return Err(Error::Integrator {
                t: t.to_f64().unwrap_or(f64::NAN),
                step: h_step.to_f64().unwrap_or(f64::NAN),
                detail: "step size underflow (stiffness beyond the explicit integrator)".into(),
            });
        }

        axpy(&mut stage, &y, &[(A21, &k1)], h_step);
        rhs(t + h_step * T::of(C2), &stage, &mut k2);
        axpy(&mut stage, &y, &[(A31, &k1), (A32, &k2)], h_step);
        rhs(t + h_step * T::of(C3), &stage, &mut k3);
        axpy(&mut stage, &y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h_step);
        rhs(t + h_step * T::of(C4), &stage, &mut k4);
        axpy(&mut stage, &y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h_step);
        rhs(t + h_step * T::of(C5), &stage, &mut k5);
        axpy(&mut stage, &y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h_step);
        rhs(t + h_step, &stage, &mut k6);
        axpy(&mut y_new, &y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h_step);
        rhs(t + h_step, &y_new, &mut k7);

        // Max-norm error ratio against the mixed tolerance.
        let mut err = T::zero();
        for i in 0..n {
            let e = (k1[i].scale(T::of(E1))
                + k3[i].scale(T::of(E3))
                + k4[i].scale(T::of(E4))
                + k5[i].scale(T::of(E5))
                + k6[i].scale(T::of(E6))
                + k7[i].scale(T::of(E7)))
            .modulus()
                * h_step;
            let scale = opts.abs_tol + opts.rel_tol * y[i].modulus().max(y_new[i].modulus());
            err = err.max(e / scale);
        }

        if err <= T::one() {
            t = if hits_target { t_target } else { t + h_step };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7); // FSAL
            if hits_target {
                emit(out_idx, t, &y);
                out_idx += 1;
            }
        }
        // On rejection y and t are unchanged, so k1 is still valid.

        let exponent = T::of(-0.2);
        let factor = if err > T::zero() {
            (err.powf(exponent) * T::of(0.9)).min(T::of(5.0)).max(T::of(0.2))
        } else {
            T::of(5.0)
        };
        h = (h_step * factor).max(h_floor);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    #[test]
    fn exponential_decay_matches_analytic() {
        let y0 = [1.0f64];
        let t_out: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let mut got = Vec::new();
        integrate_adaptive(
            &y0,
            &t_out,
            &RkOptions { rel_tol: 1e-12, abs_tol: 1e-14, max_steps: 1_000_000 },
            |_t, y, dy| dy[0] = -2.0 * y[0],
            |_, t, y| got.push((t, y[0])),
        )
        .unwrap();
        for (t, y) in got {
            assert!((y - (-2.0 * t).exp()).abs() < 1e-10, "t={t}");
        }
    }

    #[test]
    fn complex_rotation_preserves_modulus() {
        let y0 = [Complex::new(1.0f64, 0.0)];
        let t_out = [0.0, 25.0];
        let mut last = Complex::new(0.0, 0.0);
        integrate_adaptive(
            &y0,
            &t_out,
            &RkOptions { rel_tol: 1e-11, abs_tol: 1e-14, max_steps: 1_000_000 },
            |_t, y, dy| dy[0] = Complex::new(0.0, 3.0) * y[0],
            |_, _, y| last = y[0],
        )
        .unwrap();
        assert!((last.norm() - 1.0).abs() < 1e-8);
        let want = Complex::new((3.0 * 25.0f64).cos(), (3.0 * 25.0f64).sin());
        assert!((last - want).norm() < 1e-7);
    }

    #[test]
    fn step_budget_is_enforced() {
        let y0 = [1.0f64];
        let t_out = [0.0, 1.0];
        let res = integrate_adaptive(
            &y0,
            &t_out,
            &RkOptions { rel_tol: 1e-13, abs_tol: 1e-16, max_steps: 3 },
            |_t, y, dy| dy[0] = -200.0 * y[0],
            |_, _, _| {},
        );
        assert!(matches!(res, Err(Error::Integrator { .. })));
    }
}
