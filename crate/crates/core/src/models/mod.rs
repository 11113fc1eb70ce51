//! Model phase spaces: flows, tangent flows, distances and Liouville sampling
//! on the unit energy level.

mod catmap;
mod sphere3;
mod surface;
mod torus;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use catmap::CatMapSuspension;
pub use sphere3::Sphere3;
pub use surface::SurfaceModel;
pub use torus::FlatTorus;

use crate::error::{LabError, Result};
use crate::lattice::Lattice;
use crate::surfrev::{validate_profile, ProfileSpec};

/// A point of the unit energy level.
///
/// Layout per model:
/// - torus: position in the fundamental cell, unit direction;
/// - suspension: position `(u, v, s)`, no momentum;
/// - 3-sphere: `x ∈ S³ ⊂ ℝ⁴`, unit tangent `v ⊥ x`;
/// - surface of revolution: ambient point `(x, y, z)` and unit velocity
///   in ℝ³; [`SurfaceModel::chart`] gives `(z, φ, ξ_z, ξ_φ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pos: [f64; 4],
    mom: [f64; 4],
    npos: u8,
    nmom: u8,
    pub energy: f64,
}

impl PhaseState {
    /// Panics if either slice is longer than four.
    pub fn new(position: &[f64], momentum: &[f64], energy: f64) -> Self {
        assert!(position.len() <= 4 && momentum.len() <= 4);
        let mut pos = [0.0; 4];
        let mut mom = [0.0; 4];
        pos[..position.len()].copy_from_slice(position);
        mom[..momentum.len()].copy_from_slice(momentum);
        Self {
            pos,
            mom,
            npos: position.len() as u8,
            nmom: momentum.len() as u8,
            energy,
        }
    }

    pub fn position(&self) -> &[f64] {
        &self.pos[..self.npos as usize]
    }

    pub fn momentum(&self) -> &[f64] {
        &self.mom[..self.nmom as usize]
    }
}

/// JSON model descriptor. `T0` overrides the default shortest period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelDescriptor {
    Torus {
        n: usize,
        basis: Vec<Vec<f64>>,
        #[serde(default, rename = "T0", skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
    },
    Catmap {
        matrix: [[i64; 2]; 2],
        roof: f64,
        #[serde(default, rename = "T0", skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
    },
    Sphere3 {
        #[serde(default, rename = "T0", skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
    },
    Surfrev {
        profile: ProfileSpec,
        #[serde(default, rename = "T0", skip_serializing_if = "Option::is_none")]
        t0: Option<f64>,
    },
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    FlatTorus(FlatTorus),
    CatMapSuspension(CatMapSuspension),
    Sphere3(Sphere3),
    SurfaceOfRevolution(SurfaceModel),
}

/// A model flow on its unit energy level.
#[derive(Debug, Clone)]
pub struct FlowModel {
    kind: ModelKind,
    shortest_period: f64,
    label: String,
}

/// Precomputed representation of a state for repeated distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prepared(pub(crate) [f64; 10]);

/// Candidate return windows for recurrence scans.
#[derive(Debug, Clone)]
pub enum WindowPlan {
    /// Torus: returns happen only near `t = ℓ·v` for short lattice vectors ℓ.
    Lattice(Vec<[f64; 3]>),
    /// Returns happen only within `half_width` of multiples of `period`.
    Periodic { period: f64, half_width: f64 },
    /// No structure; scan everything.
    Whole,
}

impl WindowPlan {
    /// Time windows inside `[t_min, t_max]` that may contain an ε-return of `s`.
    pub fn windows(&self, s: &PhaseState, t_min: f64, t_max: f64, eps: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        match self {
            WindowPlan::Whole => out.push((t_min, t_max)),
            WindowPlan::Periodic { period, half_width } => {
                let k0 = ((t_min - half_width) / period).ceil().max(1.0) as i64;
                let mut k = k0;
                loop {
                    let c = k as f64 * period;
                    if c - half_width > t_max {
                        break;
                    }
                    let (a, b) = ((c - half_width).max(t_min), (c + half_width).min(t_max));
                    if a <= b {
                        out.push((a, b));
                    }
                    k += 1;
                }
            }
            WindowPlan::Lattice(vectors) => {
                let v = s.momentum();
                for l in vectors {
                    let along: f64 = v.iter().zip(l).map(|(a, b)| a * b).sum();
                    let len2: f64 = l.iter().map(|x| x * x).sum();
                    let perp2 = (len2 - along * along).max(0.0);
                    if along <= 0.0 || perp2 > eps * eps {
                        continue;
                    }
                    let (a, b) = ((along - eps).max(t_min), (along + eps).min(t_max));
                    if a <= b {
                        out.push((a, b));
                    }
                }
                out.sort_by(|x, y| x.0.total_cmp(&y.0));
            }
        }
        out
    }
}

impl FlowModel {
    pub fn torus(lattice: Lattice) -> Self {
        let t = FlatTorus::new(lattice);
        let t0 = t.lattice().shortest_vector();
        Self {
            label: format!("torus{}", t.dim()),
            kind: ModelKind::FlatTorus(t),
            shortest_period: t0,
        }
    }

    pub fn cat_map(matrix: [[i64; 2]; 2], roof: f64) -> Result<Self> {
        let c = CatMapSuspension::new(matrix, roof)?;
        Ok(Self {
            label: "catmap".into(),
            shortest_period: roof,
            kind: ModelKind::CatMapSuspension(c),
        })
    }

    pub fn sphere3() -> Self {
        Self {
            label: "sphere3".into(),
            shortest_period: 2.0 * std::f64::consts::PI,
            kind: ModelKind::Sphere3(Sphere3),
        }
    }

    pub fn surface(profile: &ProfileSpec) -> Result<Self> {
        let p = validate_profile(profile)?;
        let t0 = p.equator_length();
        Ok(Self {
            label: format!("surfrev:{}", p.name()),
            kind: ModelKind::SurfaceOfRevolution(SurfaceModel::new(p)),
            shortest_period: t0,
        })
    }

    pub fn from_descriptor(d: &ModelDescriptor) -> Result<Self> {
        let (model, t0) = match d {
            ModelDescriptor::Torus { n, basis, t0 } => {
                if basis.len() != *n {
                    return Err(LabError::Invalid {
                        what: "torus",
                        reason: format!("n = {n} but basis has {} rows", basis.len()),
                    });
                }
                (Self::torus(Lattice::new(basis)?), t0)
            }
            ModelDescriptor::Catmap { matrix, roof, t0 } => (Self::cat_map(*matrix, *roof)?, t0),
            ModelDescriptor::Sphere3 { t0 } => (Self::sphere3(), t0),
            ModelDescriptor::Surfrev { profile, t0 } => (Self::surface(profile)?, t0),
        };
        match t0 {
            Some(t) => model.with_shortest_period(*t),
            None => Ok(model),
        }
    }

    /// Overrides the default shortest period T₀.
    pub fn with_shortest_period(mut self, t0: f64) -> Result<Self> {
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(LabError::Invalid {
                what: "model",
                reason: format!("shortest period must be positive, got {t0}"),
            });
        }
        self.shortest_period = t0;
        Ok(self)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn shortest_period(&self) -> f64 {
        self.shortest_period
    }

    /// Liouville volume of the unit energy level.
    pub fn level_volume(&self) -> f64 {
        match &self.kind {
            ModelKind::FlatTorus(t) => t.level_volume(),
            ModelKind::CatMapSuspension(c) => c.roof(),
            ModelKind::Sphere3(_) => 8.0 * std::f64::consts::PI.powi(3),
            ModelKind::SurfaceOfRevolution(s) => 2.0 * std::f64::consts::PI * s.profile().area(),
        }
    }

    /// Dimension m of the energy level.
    pub fn level_dim(&self) -> usize {
        match &self.kind {
            ModelKind::FlatTorus(t) => 2 * t.dim() - 1,
            ModelKind::CatMapSuspension(_) => 3,
            ModelKind::Sphere3(_) => 5,
            ModelKind::SurfaceOfRevolution(_) => 3,
        }
    }

    /// True when `flow` is evaluated in closed form (cheap, exact).
    pub fn is_closed_form(&self) -> bool {
        !matches!(self.kind, ModelKind::SurfaceOfRevolution(_))
    }

    pub fn hamiltonian(&self, s: &PhaseState) -> f64 {
        match &self.kind {
            ModelKind::CatMapSuspension(_) => 1.0,
            ModelKind::SurfaceOfRevolution(m) => m.hamiltonian(s),
            _ => s.momentum().iter().map(|v| v * v).sum(),
        }
    }

    pub fn flow(&self, s: &PhaseState, t: f64) -> Result<PhaseState> {
        if !t.is_finite() {
            return Err(crate::error::domain("flow time must be finite"));
        }
        match &self.kind {
            ModelKind::FlatTorus(m) => Ok(m.flow(s, t)),
            ModelKind::CatMapSuspension(m) => m.flow(s, t),
            ModelKind::Sphere3(m) => Ok(m.flow(s, t)),
            ModelKind::SurfaceOfRevolution(m) => m.flow(s, t),
        }
    }

    /// Jacobian of the time-`t` map on the energy level (m×m).
    ///
    /// Expressed in Sasaki-orthonormal frames for the geodesic flows (first
    /// frame vector along the flow) and in `(u, v, s)` chart coordinates for
    /// the suspension.
    pub fn tangent_flow(&self, s: &PhaseState, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) {
            return Err(crate::error::domain("tangent flow needs t ≥ 0"));
        }
        match &self.kind {
            ModelKind::FlatTorus(m) => Ok(m.tangent_flow(s, t)),
            ModelKind::CatMapSuspension(m) => m.tangent_flow(s, t),
            ModelKind::Sphere3(m) => Ok(m.tangent_flow(t)),
            ModelKind::SurfaceOfRevolution(m) => m.tangent_flow(s, t),
        }
    }

    pub fn distance(&self, a: &PhaseState, b: &PhaseState) -> f64 {
        self.prepared_distance(&self.prepare(a), &self.prepare(b))
    }

    pub fn prepare(&self, s: &PhaseState) -> Prepared {
        match &self.kind {
            ModelKind::CatMapSuspension(m) => m.embed(s),
            _ => {
                let mut out = [0.0; 10];
                let p = s.position();
                let q = s.momentum();
                out[..p.len()].copy_from_slice(p);
                out[4..4 + q.len()].copy_from_slice(q);
                Prepared(out)
            }
        }
    }

    pub fn prepared_distance(&self, a: &Prepared, b: &Prepared) -> f64 {
        let (a, b) = (&a.0, &b.0);
        match &self.kind {
            ModelKind::FlatTorus(m) => m.distance_parts(&a[..4], &b[..4], &a[4..8], &b[4..8]),
            ModelKind::Sphere3(_) => sphere3::distance_parts(&a[..4], &b[..4], &a[4..8], &b[4..8]),
            ModelKind::CatMapSuspension(_) | ModelKind::SurfaceOfRevolution(_) => {
                a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn liouville_sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        match &self.kind {
            ModelKind::FlatTorus(m) => m.sample(rng),
            ModelKind::CatMapSuspension(m) => m.sample(rng),
            ModelKind::Sphere3(_) => Sphere3::sample(rng),
            ModelKind::SurfaceOfRevolution(m) => m.sample(rng),
        }
    }

    /// Bound on the speed of `t ↦ flow(s, t)` in the model distance.
    pub fn speed_bound(&self) -> f64 {
        match &self.kind {
            ModelKind::CatMapSuspension(m) => m.speed_bound(),
            ModelKind::SurfaceOfRevolution(m) => m.speed_bound(),
            // Position moves at unit speed; the direction rotates at unit
            // speed on the sphere and not at all on the torus.
            ModelKind::Sphere3(_) => std::f64::consts::SQRT_2,
            ModelKind::FlatTorus(_) => 1.0,
        }
    }

    /// Upper bound on the diameter of the energy level in the model distance.
    pub fn diameter_bound(&self) -> f64 {
        match &self.kind {
            ModelKind::FlatTorus(m) => m.diameter_bound(),
            ModelKind::CatMapSuspension(m) => m.diameter_bound(),
            ModelKind::Sphere3(_) => std::f64::consts::PI * std::f64::consts::SQRT_2,
            ModelKind::SurfaceOfRevolution(m) => m.diameter_bound(),
        }
    }

    /// Return-window structure for scans up to time `t_max` at radius `eps`.
    pub fn window_plan(&self, t_max: f64, eps: f64) -> WindowPlan {
        match &self.kind {
            ModelKind::FlatTorus(m) => {
                let mut v = Vec::new();
                m.lattice().for_each_point(t_max + eps, |_, p| {
                    if p.iter().any(|&x| x != 0.0) {
                        v.push(p);
                    }
                });
                WindowPlan::Lattice(v)
            }
            ModelKind::CatMapSuspension(m) => m.window_plan(eps),
            ModelKind::Sphere3(_) => WindowPlan::Periodic {
                period: 2.0 * std::f64::consts::PI,
                half_width: eps,
            },
            ModelKind::SurfaceOfRevolution(_) => WindowPlan::Whole,
        }
    }
}

/// Uniform unit vector in ℝⁿ, n ≤ 4, via normalized Gaussians.
pub(crate) fn random_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> [f64; 4] {
    loop {
        let mut v = [0.0; 4];
        for x in v.iter_mut().take(n) {
            *x = gaussian(rng);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box–Muller; one variate per call keeps the stream layout simple.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests;
