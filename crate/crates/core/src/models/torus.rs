use nalgebra::DMatrix;
use rand::Rng;

use super::{random_unit, PhaseState};
use crate::lattice::Lattice;

/// Geodesic flow of the flat torus ℝⁿ/L.
#[derive(Debug, Clone)]
pub struct FlatTorus {
    lattice: Lattice,
}

impl FlatTorus {
    pub fn new(lattice: Lattice) -> Self {
        Self { lattice }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn level_volume(&self) -> f64 {
        let sphere = if self.dim() == 2 { 2.0 } else { 4.0 } * std::f64::consts::PI;
        self.lattice.covolume() * sphere
    }

    /// `x + t·v`, reduced into the fundamental cell.
    pub fn flow(&self, s: &PhaseState, t: f64) -> PhaseState {
        let n = self.dim();
        let x = s.position();
        let v = s.momentum();
        let moved: Vec<f64> = (0..n).map(|i| x[i] + t * v[i]).collect();
        let r = self.lattice.reduce(&moved);
        PhaseState::new(&r[..n], v, s.energy)
    }

    /// In the frame `(v, 0), (wᵢ, 0), (0, wᵢ)` the Jacobian is
    /// `1 ⊕ [[I, tI], [0, I]]`.
    pub fn tangent_flow(&self, _s: &PhaseState, t: f64) -> DMatrix<f64> {
        let k = self.dim() - 1;
        let mut j = DMatrix::identity(2 * k + 1, 2 * k + 1);
        for i in 0..k {
            j[(1 + i, 1 + k + i)] = t;
        }
        j
    }

    pub(crate) fn distance_parts(&self, x1: &[f64], x2: &[f64], v1: &[f64], v2: &[f64]) -> f64 {
        let n = self.dim();
        let dx: Vec<f64> = (0..n).map(|i| x1[i] - x2[i]).collect();
        let pos = self.lattice.distance_to_lattice(&dx);
        let dir: f64 = (0..n).map(|i| (v1[i] - v2[i]).powi(2)).sum();
        (pos * pos + dir).sqrt()
    }

    pub fn diameter_bound(&self) -> f64 {
        // Covering radius ≤ half the sum of basis lengths; directions differ by ≤ 2.
        let half: f64 = self
            .lattice
            .basis()
            .iter()
            .map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum::<f64>()
            / 2.0;
        (half * half + 4.0).sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        let n = self.dim();
        let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = self.lattice.point(&c);
        let v = random_unit(rng, n);
        PhaseState::new(&x[..n], &v[..n], 1.0)
    }
}
