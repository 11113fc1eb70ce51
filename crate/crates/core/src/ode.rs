//! Adaptive Dormand–Prince 5(4) integration for small fixed-size systems.

use crate::error::{LabError, Result};
use crate::scalar::Real;

// Dormand–Prince tableau.
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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy)]
pub struct Dopri5<T> {
    pub rtol: T,
    pub atol: T,
    pub max_steps: usize,
    pub h_max: T,
}

impl<T: Real> Dopri5<T> {
    pub fn new(rtol: T, atol: T) -> Self {
        Self {
            rtol,
            atol,
            max_steps: 2_000_000,
            h_max: T::infinity(),
        }
    }

    pub fn with_max_steps(mut self, n: usize) -> Self {
        self.max_steps = n;
        self
    }

    pub fn with_h_max(mut self, h: T) -> Self {
        self.h_max = h;
        self
    }

    /// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
    pub fn integrate<const N: usize, F>(&self, mut f: F, t0: T, y0: [T; N], t1: T) -> Result<[T; N]>
    where
        F: FnMut(T, &[T; N]) -> [T; N],
    {
        let mut stepper = Stepper::new(*self, t0, y0);
        stepper.advance_to(&mut f, t1)?;
        Ok(stepper.y)
    }

    /// Integrates until `event(t, y)` changes sign (after leaving `t0`) or
    /// `t_max` is reached. The crossing time is located by bisection on the
    /// step fraction to `t_tol`. Returns `(t, y)` at the event, or `None`.
    pub fn integrate_to_event<const N: usize, F, G>(
        &self,
        mut f: F,
        t0: T,
        y0: [T; N],
        t_max: T,
        mut event: G,
        t_tol: T,
    ) -> Result<Option<(T, [T; N])>>
    where
        F: FnMut(T, &[T; N]) -> [T; N],
        G: FnMut(T, &[T; N]) -> T,
    {
        let mut st = Stepper::new(*self, t0, y0);
        let mut g_prev = event(t0, &y0);
        while st.t < t_max {
            let (t_prev, y_prev) = (st.t, st.y);
            st.step(&mut f, t_max)?;
            let g_new = event(st.t, &st.y);
            // Leaving a zero at the start is not a crossing.
            if g_prev == T::zero() {
                g_prev = g_new;
                continue;
            }
            if g_new == T::zero() || (g_new > T::zero()) != (g_prev > T::zero()) {
                let sign_prev = g_prev > T::zero();
                let (mut lo, mut hi) = (T::zero(), st.t - t_prev);
                let mut y_hi = st.y;
                let two = T::lit(2.0);
                while (hi - lo).abs() > t_tol {
                    let mid = (lo + hi) / two;
                    let (y_mid, _) = dp_step(&mut f, t_prev, &y_prev, mid);
                    let g = event(t_prev + mid, &y_mid);
                    if g != T::zero() && (g > T::zero()) == sign_prev {
                        lo = mid;
                    } else {
                        hi = mid;
                        y_hi = y_mid;
                    }
                }
                return Ok(Some((t_prev + hi, y_hi)));
            }
            g_prev = g_new;
        }
        Ok(None)
    }
}

/// Integration state that can be advanced repeatedly, keeping its step-size
/// estimate between calls.
#[derive(Debug, Clone)]
pub struct Stepper<T, const N: usize> {
    pub opts: Dopri5<T>,
    pub t: T,
    pub y: [T; N],
    h: T,
    steps: usize,
}

impl<T: Real, const N: usize> Stepper<T, N> {
    pub fn new(opts: Dopri5<T>, t0: T, y0: [T; N]) -> Self {
        Self {
            opts,
            t: t0,
            y: y0,
            h: T::zero(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advances exactly to `t1`.
    pub fn advance_to<F>(&mut self, f: &mut F, t1: T) -> Result<()>
    where
        F: FnMut(T, &[T; N]) -> [T; N],
    {
        while self.t != t1 {
            self.step(f, t1)?;
        }
        Ok(())
    }

    /// Takes one accepted step towards `t_end` without overshooting it.
    pub fn step<F>(&mut self, f: &mut F, t_end: T) -> Result<()>
    where
        F: FnMut(T, &[T; N]) -> [T; N],
    {
        let span = t_end - self.t;
        if span == T::zero() {
            return Ok(());
        }
        let dir = span.signum();
        if self.h == T::zero() {
            self.h = self.initial_step(f, span.abs());
        }
        let safety = T::lit(0.9);
        let fac_min = T::lit(0.2);
        let fac_max = T::lit(5.0);
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(LabError::Integration {
                    t: self.t.as_f64(),
                    reason: format!("step budget of {} exhausted", self.opts.max_steps),
                });
            }
            self.steps += 1;
            let mut h = self.h.min(self.opts.h_max);
            let last = h >= (t_end - self.t).abs();
            if last {
                h = (t_end - self.t).abs();
            }
            let (y_new, err) = dp_step(f, self.t, &self.y, dir * h);
            let mut en = T::zero();
            for i in 0..N {
                let sc = self.opts.atol + self.opts.rtol * self.y[i].abs().max(y_new[i].abs());
                let r = err[i] / sc;
                en = en + r * r;
            }
            en = (en / T::from_count(N)).sqrt();
            if !en.is_finite() {
                self.h = h * fac_min;
                if self.h < T::epsilon() * (T::one() + self.t.abs()) {
                    return Err(LabError::Integration {
                        t: self.t.as_f64(),
                        reason: "non-finite derivative".into(),
                    });
                }
                continue;
            }
            let fac = if en == T::zero() {
                fac_max
            } else {
                (safety * en.powf(T::lit(-0.2))).max(fac_min).min(fac_max)
            };
            if en <= T::one() {
                self.t = if last { t_end } else { self.t + dir * h };
                self.y = y_new;
                // Keep the controller's estimate when the step was clipped.
                self.h = if last { self.h.max(h * fac) } else { h * fac };
                return Ok(());
            }
            self.h = h * fac.min(T::one());
            if self.h < T::epsilon() * (T::one() + self.t.abs()) {
                return Err(LabError::Integration {
                    t: self.t.as_f64(),
                    reason: "step size underflow".into(),
                });
            }
        }
    }

    fn initial_step<F>(&self, f: &mut F, span: T) -> T
    where
        F: FnMut(T, &[T; N]) -> [T; N],
    {
        // Hairer–Wanner starting step heuristic.
        let f0 = f(self.t, &self.y);
        let mut d0 = T::zero();
        let mut d1 = T::zero();
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * self.y[i].abs();
            d0 = d0 + (self.y[i] / sc).powi(2);
            d1 = d1 + (f0[i] / sc).powi(2);
        }
        let small = T::lit(1e-5);
        let h0 = if d0.sqrt() < small || d1.sqrt() < small {
            T::lit(1e-6)
        } else {
            T::lit(0.01) * (d0 / d1).sqrt()
        };
        h0.min(span)
            .max(T::epsilon() * (T::one() + self.t.abs()) * T::lit(16.0))
    }
}

/// One Dormand–Prince step of size `h`; returns the fifth-order solution and
/// the embedded error estimate.
pub fn dp_step<T: Real, const N: usize, F>(f: &mut F, t: T, y: &[T; N], h: T) -> ([T; N], [T; N])
where
    F: FnMut(T, &[T; N]) -> [T; N],
{
    let l = T::lit;
    let comb = |terms: &[(f64, &[T; N])]| -> [T; N] {
        let mut out = *y;
        for &(c, k) in terms {
            let c = l(c) * h;
            for i in 0..N {
                out[i] = out[i] + c * k[i];
            }
        }
        out
    };
    let k1 = f(t, y);
    let k2 = f(t + l(C2) * h, &comb(&[(A21, &k1)]));
    let k3 = f(t + l(C3) * h, &comb(&[(A31, &k1), (A32, &k2)]));
    let k4 = f(t + l(C4) * h, &comb(&[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(t + l(C5) * h, &comb(&[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(
        t + h,
        &comb(&[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = comb(&[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(t + h, &y_new);
    let mut err = [T::zero(); N];
    for i in 0..N {
        err[i] = h * (l(E1) * k1[i] + l(E3) * k3[i] + l(E4) * k4[i] + l(E5) * k5[i] + l(E6) * k6[i] + l(E7) * k7[i]);
    }
    (y_new, err)
}
