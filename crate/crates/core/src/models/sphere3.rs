use nalgebra::DMatrix;
use rand::Rng;

use super::{random_unit, PhaseState};

/// Geodesic flow of the round unit 3-sphere; every orbit is a great circle
/// of period 2π.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sphere3;

impl Sphere3 {
    /// `(x cos t + v sin t, −x sin t + v cos t)`.
    pub fn flow(&self, s: &PhaseState, t: f64) -> PhaseState {
        let (x, v) = (s.position(), s.momentum());
        let (sn, cs) = reduced_sin_cos(t);
        let mut nx = [0.0; 4];
        let mut nv = [0.0; 4];
        for i in 0..4 {
            nx[i] = x[i] * cs + v[i] * sn;
            nv[i] = -x[i] * sn + v[i] * cs;
        }
        PhaseState::new(&nx, &nv, s.energy)
    }

    /// In the frame `(v, −x), (wᵢ, 0), (0, wᵢ)` with `wᵢ` spanning
    /// `{x, v}^⊥` (a plane the flow preserves) the Jacobian is
    /// `1 ⊕ [[cos t·I, sin t·I], [−sin t·I, cos t·I]]`.
    pub fn tangent_flow(&self, t: f64) -> DMatrix<f64> {
        let (sn, cs) = reduced_sin_cos(t);
        let mut j = DMatrix::zeros(5, 5);
        j[(0, 0)] = 1.0;
        for i in 0..2 {
            j[(1 + i, 1 + i)] = cs;
            j[(1 + i, 3 + i)] = sn;
            j[(3 + i, 1 + i)] = -sn;
            j[(3 + i, 3 + i)] = cs;
        }
        j
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> PhaseState {
        let x = random_unit(rng, 4);
        let u = random_unit(rng, 4);
        // Project onto x^⊥; the projection of a uniform direction is
        // uniform on the unit sphere of the tangent space after normalizing.
        let d: f64 = (0..4).map(|i| u[i] * x[i]).sum();
        let mut v = [0.0; 4];
        for i in 0..4 {
            v[i] = u[i] - d * x[i];
        }
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n < 1e-9 {
            return Self::sample(rng);
        }
        v.iter_mut().for_each(|a| *a /= n);
        PhaseState::new(&x, &v, 1.0)
    }
}

/// `sin t, cos t` after reducing `t` modulo 2π, so that `t = 2πk` gives
/// the identity up to one rounding.
fn reduced_sin_cos(t: f64) -> (f64, f64) {
    let tau = 2.0 * std::f64::consts::PI;
    let r = t - tau * (t / tau).round();
    r.sin_cos()
}

/// Great-circle angle between unit vectors, stable near 0 and π.
pub(crate) fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (mut d2, mut s2) = (0.0, 0.0);
    for i in 0..a.len() {
        d2 += (a[i] - b[i]).powi(2);
        s2 += (a[i] + b[i]).powi(2);
    }
    2.0 * d2.sqrt().atan2(s2.sqrt())
}

pub(crate) fn distance_parts(x1: &[f64], x2: &[f64], v1: &[f64], v2: &[f64]) -> f64 {
    angle(x1, x2).hypot(angle(v1, v2))
}
