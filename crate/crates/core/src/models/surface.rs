use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};
use rand::Rng;

use super::PhaseState;
use crate::error::{LabError, Result};
use crate::ode::Dopri5;
use crate::surfrev::RevolutionProfile;

/// Geodesic flow on `x² + y² = ρ(z)²`.
///
/// Geodesics are integrated in ambient coordinates as curves on the level
/// set `F = x² + y² − ρ(z)² = 0`: `Ẍ = −(VᵀHV/|∇F|²)∇F` with `H = ∇²F`.
/// The system is smooth through the poles, unlike the `(z, φ)` chart.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    profile: RevolutionProfile,
    kappa_max: f64,
    s_max: f64,
    opts: Dopri5<f64>,
}

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-13;
const MAX_STEPS: usize = 2_000_000;

impl SurfaceModel {
    pub fn new(profile: RevolutionProfile) -> Self {
        let (lo, hi) = profile.domain();
        let grid = 4000;
        let (mut kappa, mut s_max) = (0.0f64, 0.0f64);
        for i in 0..=grid {
            let z = lo + (hi - lo) * i as f64 / grid as f64;
            let [g, g1, g2, _] = profile.g(z);
            let s = (4.0 * g + g1 * g1).sqrt();
            s_max = s_max.max(s);
            let k_meridian = 2.0 * (g1 * g1 - 2.0 * g * g2) / s.powi(3);
            kappa = kappa.max(k_meridian.abs()).max(2.0 / s);
        }
        Self {
            profile,
            kappa_max: kappa * 1.05,
            s_max: s_max * 1.01,
            opts: Dopri5::new(RTOL, ATOL).with_max_steps(MAX_STEPS),
        }
    }

    pub fn profile(&self) -> &RevolutionProfile {
        &self.profile
    }

    /// State at height `z`, azimuth `φ`, heading at angle `α` from the
    /// parallel (α = π/2 points towards increasing z).
    pub fn state_at(&self, z: f64, phi: f64, alpha: f64) -> PhaseState {
        let rho = self.profile.rho(z);
        let d = self.profile.drho(z);
        let (sp, cp) = phi.sin_cos();
        let (sa, ca) = alpha.sin_cos();
        let norm = (1.0 + d * d).sqrt();
        let e_phi = [-sp, cp, 0.0];
        let e_mer = [d * cp / norm, d * sp / norm, 1.0 / norm];
        let v: Vec<f64> = (0..3).map(|i| ca * e_phi[i] + sa * e_mer[i]).collect();
        PhaseState::new(&[rho * cp, rho * sp, z], &v, 1.0)
    }

    /// `(z, φ, ξ_z, ξ_φ)` with `ξ_z = (1 + ρ′²) ż` and `ξ_φ = ρ² φ̇`.
    pub fn chart(&self, s: &PhaseState) -> [f64; 4] {
        let x = s.position();
        let v = s.momentum();
        let d = self.profile.drho(x[2]);
        [x[2], x[1].atan2(x[0]), (1.0 + d * d) * v[2], x[0] * v[1] - x[1] * v[0]]
    }

    /// Clairaut integral `ρ cos α = x v_y − y v_x`.
    pub fn clairaut(&self, s: &PhaseState) -> f64 {
        let x = s.position();
        let v = s.momentum();
        x[0] * v[1] - x[1] * v[0]
    }

    pub fn hamiltonian(&self, s: &PhaseState) -> f64 {
        s.momentum().iter().map(|v| v * v).sum()
    }

    fn grad_hess(&self, x: &[f64]) -> (Vector3<f64>, [f64; 3], f64) {
        let [_, g1, g2, g3] = self.profile.g(x[2]);
        (Vector3::new(2.0 * x[0], 2.0 * x[1], -g1), [2.0, 2.0, -g2], -g3)
    }

    fn accel(&self, x: &[f64], v: &[f64]) -> Vector3<f64> {
        let (n, h, _) = self.grad_hess(x);
        let q = h[0] * v[0] * v[0] + h[1] * v[1] * v[1] + h[2] * v[2] * v[2];
        -n * (q / n.norm_squared())
    }

    pub(crate) fn geodesic_rhs(&self, y: &[f64; 6]) -> [f64; 6] {
        let a = self.accel(&y[..3], &y[3..]);
        [y[3], y[4], y[5], a[0], a[1], a[2]]
    }

    /// Linearization of `(X, V) ↦ (V, a(X, V))`.
    fn rhs_jacobian(&self, x: &[f64], v: &[f64]) -> Matrix6<f64> {
        let (n, h, h3) = self.grad_hess(x);
        let hv = Vector3::new(h[0] * v[0], h[1] * v[1], h[2] * v[2]);
        let q = hv[0] * v[0] + hv[1] * v[1] + hv[2] * v[2];
        let s = n.norm_squared();
        let hm = Matrix3::from_diagonal(&Vector3::new(h[0], h[1], h[2]));
        let hn = hm * n;
        // ∂q/∂X has only a z-component, from the third derivative of ρ².
        let dq_dx = Vector3::new(0.0, 0.0, h3 * v[2] * v[2]);
        let da_dx = -(n * dq_dx.transpose()) / s - hm * (q / s) + (n * hn.transpose()) * (2.0 * q / (s * s));
        let da_dv = -(n * hv.transpose()) * (2.0 / s);
        let mut j = Matrix6::zeros();
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        j.fixed_view_mut::<3, 3>(3, 0).copy_from(&da_dx);
        j.fixed_view_mut::<3, 3>(3, 3).copy_from(&da_dv);
        j
    }

    fn integrate(&self, s: &PhaseState, t: f64) -> Result<[f64; 6]> {
        let mut y = [0.0; 6];
        y[..3].copy_from_slice(s.position());
        y[3..].copy_from_slice(s.momentum());
        if t == 0.0 {
            return Ok(y);
        }
        self.opts.integrate(|_, y| self.geodesic_rhs(y), 0.0, y, t)
    }

    pub fn flow(&self, s: &PhaseState, t: f64) -> Result<PhaseState> {
        let y = self.integrate(s, t)?;
        let out = PhaseState::new(&y[..3], &y[3..], s.energy);
        let drift = (self.hamiltonian(&out) - s.energy).abs() / s.energy;
        if drift > 1e-8 * t.abs().max(1.0) {
            return Err(LabError::Integration {
                t,
                reason: format!("energy drift {drift:.3e}"),
            });
        }
        Ok(out)
    }

    /// Flow together with the ambient 6×6 variational matrix.
    pub(crate) fn flow_with_variation(&self, s: &PhaseState, t: f64) -> Result<(PhaseState, Matrix6<f64>)> {
        let mut y = [0.0; 42];
        y[..3].copy_from_slice(s.position());
        y[3..6].copy_from_slice(s.momentum());
        for i in 0..6 {
            y[6 + 7 * i] = 1.0;
        }
        if t != 0.0 {
            y = self.opts.integrate(
                |_, y: &[f64; 42]| {
                    let mut out = [0.0; 42];
                    let base = self.geodesic_rhs(y[..6].try_into().unwrap());
                    out[..6].copy_from_slice(&base);
                    let j = self.rhs_jacobian(&y[..3], &y[3..6]);
                    let phi = Matrix6::from_row_slice(&y[6..]);
                    let d = j * phi;
                    for r in 0..6 {
                        for c in 0..6 {
                            out[6 + 6 * r + c] = d[(r, c)];
                        }
                    }
                    out
                },
                0.0,
                y,
                t,
            )?;
        }
        let st = PhaseState::new(&y[..3], &y[3..6], s.energy);
        Ok((st, Matrix6::from_row_slice(&y[6..])))
    }

    /// Sasaki-orthonormal frame of the unit tangent bundle at `s`:
    /// `(V, a)`, `(W, μ n̂)`, `(0, W)` with `W = n̂ × V`.
    fn frame(&self, s: &PhaseState) -> [Vector6<f64>; 3] {
        let x = s.position();
        let v = Vector3::from_column_slice(s.momentum());
        let (n, h, _) = self.grad_hess(x);
        let nn = n.norm();
        let nh = n / nn;
        let w = nh.cross(&v).normalize();
        let a = self.accel(x, s.momentum());
        let mu = -(h[0] * w[0] * v[0] + h[1] * w[1] * v[1] + h[2] * w[2] * v[2]) / nn;
        let cat = |p: Vector3<f64>, q: Vector3<f64>| Vector6::new(p[0], p[1], p[2], q[0], q[1], q[2]);
        [cat(v, a), cat(w, nh * mu), cat(Vector3::zeros(), w)]
    }

    fn sasaki(&self, s: &PhaseState, a: &Vector6<f64>, b: &Vector6<f64>) -> f64 {
        let (n, _, _) = self.grad_hess(s.position());
        let nh = n.normalize();
        let ah = a.fixed_rows::<3>(0);
        let bh = b.fixed_rows::<3>(0);
        let av: Vector3<f64> = a.fixed_rows::<3>(3).into_owned();
        let bv: Vector3<f64> = b.fixed_rows::<3>(3).into_owned();
        let pa = av - nh * nh.dot(&av);
        let pb = bv - nh * nh.dot(&bv);
        ah.dot(&bh) + pa.dot(&pb)
    }

    pub fn tangent_flow(&self, s: &PhaseState, t: f64) -> Result<DMatrix<f64>> {
        let (st, phi) = self.flow_with_variation(s, t)?;
        let f0 = self.frame(s);
        let f1 = self.frame(&st);
        let mut j = DMatrix::zeros(3, 3);
        for c in 0..3 {
            let img = phi * f0[c];
            for r in 0..3 {
                j[(r, c)] = self.sasaki(&st, &f1[r], &img);
            }
        }
        Ok(j)
    }

    /// The geodesic moves at unit speed and its velocity turns at the
    /// normal curvature, bounded by the largest principal curvature.
    pub fn speed_bound(&self) -> f64 {
        (1.0 + self.kappa_max * self.kappa_max).sqrt()
    }

    pub fn diameter_bound(&self) -> f64 {
        let (lo, hi) = self.profile.domain();
        let pos = ((hi - lo).powi(2) + 4.0 * self.profile.rho_max().powi(2)).sqrt();
        (pos * pos + 4.0).sqrt()
    }

    /// Area measure on the surface (rejection on `dA = π S(z) dz dφ/2π`)
    /// times a uniform heading.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        let (lo, hi) = self.profile.domain();
        loop {
            let z = lo + (hi - lo) * rng.random::<f64>();
            let accept = rng.random::<f64>() * self.s_max;
            let phi = 2.0 * PI * rng.random::<f64>();
            let alpha = 2.0 * PI * rng.random::<f64>();
            if accept < self.profile.s(z) && z > lo && z < hi {
                return self.state_at(z, phi, alpha);
            }
        }
    }
}
