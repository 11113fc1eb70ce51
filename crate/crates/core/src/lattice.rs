//! Lattices in ℝ² and ℝ³: reduction, enumeration of short vectors, closest
//! vectors and exact point counts in balls.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::error::{LabError, Result};

/// Relative tolerance under which a basis entry is treated as an exact
/// integer multiple of 2π.
const SNAP_TOL: f64 = 1e-7;

/// A full-rank lattice `{ Σ mᵢ bᵢ : m ∈ ℤⁿ }` with `n ∈ {2, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    n: usize,
    /// Basis vectors as rows, zero-padded to three columns.
    rows: [[f64; 3]; 3],
    /// `Some(M)` when the basis is exactly `2π·M` for an integer matrix `M`.
    integral: Option<[[i64; 3]; 3]>,
}

impl Lattice {
    pub fn new(basis: &[Vec<f64>]) -> Result<Self> {
        let n = basis.len();
        if !(2..=3).contains(&n) || basis.iter().any(|r| r.len() != n) {
            return Err(LabError::Invalid {
                what: "lattice basis",
                reason: format!("expected a square 2×2 or 3×3 basis, got {n} rows"),
            });
        }
        let mut rows = [[0.0; 3]; 3];
        for (i, r) in basis.iter().enumerate() {
            for (j, &v) in r.iter().enumerate() {
                if !v.is_finite() {
                    return Err(LabError::Invalid {
                        what: "lattice basis",
                        reason: "non-finite entry".into(),
                    });
                }
                rows[i][j] = v;
            }
        }
        let mut integral = [[0i64; 3]; 3];
        let mut is_integral = true;
        for i in 0..n {
            for j in 0..n {
                let q = rows[i][j] / (2.0 * PI);
                let k = q.round();
                if (q - k).abs() > SNAP_TOL * k.abs().max(1.0) {
                    is_integral = false;
                }
                integral[i][j] = k as i64;
            }
        }
        if is_integral {
            for i in 0..n {
                for j in 0..n {
                    rows[i][j] = 2.0 * PI * integral[i][j] as f64;
                }
            }
        }
        let lat = Self {
            n,
            rows,
            integral: is_integral.then_some(integral),
        };
        if lat.covolume() < 1e-12 {
            return Err(LabError::Invalid {
                what: "lattice basis",
                reason: "basis is singular".into(),
            });
        }
        Ok(lat)
    }

    /// `side·ℤⁿ`.
    pub fn cubic(n: usize, side: f64) -> Result<Self> {
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { side } else { 0.0 }).collect())
            .collect();
        Self::new(&basis)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn basis(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.rows[i][..self.n].to_vec()).collect()
    }

    pub fn is_two_pi_integral(&self) -> bool {
        self.integral.is_some()
    }

    fn matrix(&self) -> Matrix3<f64> {
        let mut m = Matrix3::identity();
        for i in 0..self.n {
            for j in 0..self.n {
                m[(i, j)] = self.rows[i][j];
            }
        }
        m
    }

    /// Volume of a fundamental domain.
    pub fn covolume(&self) -> f64 {
        self.matrix().determinant().abs()
    }

    pub fn gram(&self) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for i in 0..self.n {
            for j in 0..self.n {
                g[i][j] = (0..self.n).map(|k| self.rows[i][k] * self.rows[j][k]).sum();
            }
        }
        g
    }

    /// Point `Σ cᵢ bᵢ`.
    pub fn point(&self, coeffs: &[f64]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for (i, &c) in coeffs.iter().enumerate().take(self.n) {
            for (k, xk) in x.iter_mut().enumerate().take(self.n) {
                *xk += c * self.rows[i][k];
            }
        }
        x
    }

    /// Coordinates of `x` with respect to the basis rows.
    pub fn coords(&self, x: &[f64]) -> [f64; 3] {
        let bt = self.matrix().transpose();
        let v = Vector3::new(x[0], x[1], if self.n == 3 { x[2] } else { 0.0 });
        let c = bt.lu().solve(&v).expect("nonsingular basis");
        [c[0], c[1], if self.n == 3 { c[2] } else { 0.0 }]
    }

    /// Reduces `x` into the fundamental parallelepiped `{Σ cᵢ bᵢ : cᵢ ∈ [0,1)}`.
    pub fn reduce(&self, x: &[f64]) -> [f64; 3] {
        let mut c = self.coords(x);
        for ci in c.iter_mut().take(self.n) {
            *ci -= ci.floor();
            if *ci >= 1.0 {
                *ci = 0.0;
            }
        }
        self.point(&c[..self.n])
    }

    /// Dual lattice `{k : k·ℓ ∈ 2πℤ for all ℓ}` (Laplace frequencies of ℝⁿ/L).
    pub fn dual(&self) -> Lattice {
        let inv_t = self.matrix().try_inverse().expect("nonsingular basis").transpose();
        let mut rows = [[0.0; 3]; 3];
        for i in 0..self.n {
            for j in 0..self.n {
                rows[i][j] = 2.0 * PI * inv_t[(i, j)];
            }
        }
        Lattice {
            n: self.n,
            rows,
            integral: None,
        }
    }

    /// Length of a shortest nonzero vector.
    pub fn shortest_vector(&self) -> f64 {
        let mut radius = (0..self.n)
            .map(|i| self.rows[i].iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        let mut best = radius;
        self.for_each_point(radius * (1.0 + 1e-12), |_, v| {
            let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if len > 0.0 && len < best {
                best = len;
            }
        });
        radius = best;
        radius
    }

    /// Distance from `x` to the nearest lattice point.
    pub fn distance_to_lattice(&self, x: &[f64]) -> f64 {
        let c = self.coords(x);
        let r: Vec<f64> = c.iter().take(self.n).map(|v| v.round()).collect();
        let span: i64 = if self.n == 2 { 1 } else { 2 };
        let mut best = f64::INFINITY;
        let mut m = [0i64; 3];
        let ranges = |k: usize| if k < self.n { -span..=span } else { 0..=0 };
        for a in ranges(0) {
            for b in ranges(1) {
                for cc in ranges(2) {
                    m[0] = a;
                    m[1] = b;
                    m[2] = cc;
                    let coef: Vec<f64> = (0..self.n).map(|k| r[k] + m[k] as f64).collect();
                    let p = self.point(&coef);
                    let d2: f64 = (0..self.n).map(|k| (x[k] - p[k]).powi(2)).sum();
                    best = best.min(d2);
                }
            }
        }
        best.sqrt()
    }

    /// Calls `f(coeffs, vector)` for every lattice vector of norm ≤ `radius`.
    pub fn for_each_point(&self, radius: f64, mut f: impl FnMut([i64; 3], [f64; 3])) {
        let g = self.gram();
        let r2 = radius * radius;
        let ginv = gram_inverse_diag(&g, self.n);
        let top = self.n - 1;
        let mtop = (radius * ginv[top].sqrt()).floor() as i64 + 1;
        let mut visit = |m: [i64; 3]| {
            let c: Vec<f64> = m.iter().take(self.n).map(|&v| v as f64).collect();
            let p = self.point(&c);
            if p.iter().map(|x| x * x).sum::<f64>() <= r2 {
                f(m, p);
            }
        };
        for mt in -mtop..=mtop {
            if self.n == 2 {
                if let Some((lo, hi)) = inner_range(&g, [0, mt, 0], r2, 2) {
                    for m1 in lo..=hi {
                        visit([m1, mt, 0]);
                    }
                }
            } else {
                let m2max = (radius * ginv[1].sqrt()).floor() as i64 + 1;
                for m2 in -m2max..=m2max {
                    if let Some((lo, hi)) = inner_range(&g, [0, m2, mt], r2, 3) {
                        for m1 in lo..=hi {
                            visit([m1, m2, mt]);
                        }
                    }
                }
            }
        }
    }

    /// Number of points of this lattice in the closed ball of radius `radius`.
    ///
    /// Exact for 2π-integral bases' duals and for integer Gram matrices;
    /// floating-point comparisons otherwise.
    pub fn count_in_ball(&self, radius: f64) -> Result<u64> {
        if !(radius >= 0.0) {
            return Err(crate::error::domain("radius must be non-negative"));
        }
        if let Some((gram, scale)) = self.exact_gram() {
            let bound = scale as f64 * radius * radius;
            if bound >= 9.0e15 {
                return Err(LabError::Overflow);
            }
            return count_integral(&gram, self.n, bound.floor() as i64);
        }
        let g = self.gram();
        let r2 = radius * radius;
        let ginv = gram_inverse_diag(&g, self.n);
        let top = self.n - 1;
        let mtop = (radius * ginv[top].sqrt()).floor() as i64 + 1;
        let mut total: u64 = 0;
        let mut add = |lo: i64, hi: i64| -> Result<()> {
            if hi >= lo {
                total = total.checked_add((hi - lo + 1) as u64).ok_or(LabError::Overflow)?;
            }
            Ok(())
        };
        for mt in -mtop..=mtop {
            if self.n == 2 {
                if let Some((lo, hi)) = inner_range(&g, [0, mt, 0], r2, 2) {
                    add(lo, hi)?;
                }
            } else {
                let m2max = (radius * ginv[1].sqrt()).floor() as i64 + 1;
                for m2 in -m2max..=m2max {
                    if let Some((lo, hi)) = inner_range(&g, [0, m2, mt], r2, 3) {
                        add(lo, hi)?;
                    }
                }
            }
        }
        Ok(total)
    }

    /// Integer Gram matrix `G'` and scale `s` with `G = G'/s`, when the
    /// Gram matrix is rational in a way we can certify.
    fn exact_gram(&self) -> Option<([[i64; 3]; 3], i64)> {
        // A dual lattice stores no integrality flag; detect integer Gram
        // entries directly (e.g. ℤⁿ from the dual of 2πℤⁿ).
        let g = self.gram();
        let mut gi = [[0i64; 3]; 3];
        for i in 0..self.n {
            for j in 0..self.n {
                let k = g[i][j].round();
                if (g[i][j] - k).abs() > 1e-9 * k.abs().max(1.0) || k.abs() > 1e9 {
                    return None;
                }
                gi[i][j] = k as i64;
            }
        }
        Some((gi, 1))
    }

    /// Dual of a 2π-integral lattice `2π·M`: Gram matrix `(MᵀM)⁻¹ = adj/det`.
    pub(crate) fn dual_exact_gram(&self) -> Option<([[i64; 3]; 3], i64)> {
        let m = self.integral?;
        let n = self.n;
        // H = M Mᵀ (rows are basis vectors); dual Gram = H⁻¹.
        let mut h = [[0i128; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                h[i][j] = (0..n).map(|k| m[i][k] as i128 * m[j][k] as i128).sum();
            }
        }
        let (adj, det) = adjugate(&h, n);
        if det <= 0 {
            return None;
        }
        let mut out = [[0i64; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                out[i][j] = i64::try_from(adj[i][j]).ok()?;
            }
        }
        Some((out, i64::try_from(det).ok()?))
    }
}

fn adjugate(h: &[[i128; 3]; 3], n: usize) -> ([[i128; 3]; 3], i128) {
    let mut adj = [[0i128; 3]; 3];
    if n == 2 {
        adj[0][0] = h[1][1];
        adj[1][1] = h[0][0];
        adj[0][1] = -h[0][1];
        adj[1][0] = -h[1][0];
        return (adj, h[0][0] * h[1][1] - h[0][1] * h[1][0]);
    }
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            adj[i][j] = h[r0][c0] * h[r1][c1] - h[r0][c1] * h[r1][c0];
        }
    }
    let det = h[0][0] * adj[0][0] + h[0][1] * adj[1][0] + h[0][2] * adj[2][0];
    (adj, det)
}

fn gram_inverse_diag(g: &[[f64; 3]; 3], n: usize) -> [f64; 3] {
    let mut m = Matrix3::identity();
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = g[i][j];
        }
    }
    let inv = m.try_inverse().expect("positive definite Gram matrix");
    [inv[(0, 0)], inv[(1, 1)], inv[(2, 2)]]
}

/// Range of the first coefficient `m₁` with `mᵀGm ≤ r2`, other
/// coefficients fixed (floating point).
fn inner_range(g: &[[f64; 3]; 3], m: [i64; 3], r2: f64, n: usize) -> Option<(i64, i64)> {
    let (m2, m3) = (m[1] as f64, m[2] as f64);
    let lin = g[0][1] * m2 + if n == 3 { g[0][2] * m3 } else { 0.0 };
    let mut rest = g[1][1] * m2 * m2;
    if n == 3 {
        rest += 2.0 * g[1][2] * m2 * m3 + g[2][2] * m3 * m3;
    }
    let disc = lin * lin - g[0][0] * (rest - r2);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let lo = ((-lin - s) / g[0][0]).ceil() as i64;
    let hi = ((-lin + s) / g[0][0]).floor() as i64;
    (hi >= lo).then_some((lo, hi))
}

/// Exact count of `m ∈ ℤⁿ` with `mᵀGm ≤ bound` for an integer Gram matrix.
pub(crate) fn count_integral(g: &[[i64; 3]; 3], n: usize, bound: i64) -> Result<u64> {
    if bound < 0 {
        return Ok(0);
    }
    let gf = {
        let mut f = [[0.0; 3]; 3];
        for i in 0..n {
            for j in 0..n {
                f[i][j] = g[i][j] as f64;
            }
        }
        f
    };
    let ginv = gram_inverse_diag(&gf, n);
    let bf = bound as f64;
    let g00 = g[0][0] as i128;
    let mut total: u64 = 0;
    let mut row = |m2: i64, m3: i64| -> Result<()> {
        let (m2, m3) = (m2 as i128, m3 as i128);
        let lin = g[0][1] as i128 * m2 + if n == 3 { g[0][2] as i128 * m3 } else { 0 };
        let mut rest = g[1][1] as i128 * m2 * m2;
        if n == 3 {
            rest += 2 * g[1][2] as i128 * m2 * m3 + g[2][2] as i128 * m3 * m3;
        }
        // (g00 m1 + lin)² ≤ lin² − g00 (rest − bound)
        let disc = lin * lin - g00 * (rest - bound as i128);
        if disc < 0 {
            return Ok(());
        }
        let s = isqrt(disc);
        let lo = div_ceil(-lin - s, g00);
        let hi = div_floor(-lin + s, g00);
        if hi >= lo {
            let k = u64::try_from(hi - lo + 1).map_err(|_| LabError::Overflow)?;
            total = total.checked_add(k).ok_or(LabError::Overflow)?;
        }
        Ok(())
    };
    let top = n - 1;
    let mtop = (bf * ginv[top]).sqrt().floor() as i64 + 1;
    for mt in -mtop..=mtop {
        if n == 2 {
            row(mt, 0)?;
        } else {
            let m2max = (bf * ginv[1]).sqrt().floor() as i64 + 1;
            for m2 in -m2max..=m2max {
                row(m2, mt)?;
            }
        }
    }
    Ok(total)
}

pub(crate) fn isqrt(v: i128) -> i128 {
    debug_assert!(v >= 0);
    let mut s = (v as f64).sqrt() as i128;
    while s * s > v {
        s -= 1;
    }
    while (s + 1) * (s + 1) <= v {
        s += 1;
    }
    s
}

fn div_floor(a: i128, b: i128) -> i128 {
    let q = a / b;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q - 1
    } else {
        q
    }
}

fn div_ceil(a: i128, b: i128) -> i128 {
    -div_floor(-a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::approx_constant)]
    fn snaps_two_pi_entries() {
        let l = Lattice::new(&[vec![6.2831853, 0.0], vec![0.0, 6.2831853]]).unwrap();
        assert!(l.is_two_pi_integral());
        assert_eq!(l.basis()[0][0], 2.0 * PI);
    }

    #[test]
    fn singular_basis_rejected() {
        assert!(Lattice::new(&[vec![1.0, 2.0], vec![2.0, 4.0]]).is_err());
    }

    #[test]
    fn unit_square_counts() {
        let z2 = Lattice::cubic(2, 1.0).unwrap();
        assert_eq!(z2.count_in_ball(0.0).unwrap(), 1);
        assert_eq!(z2.count_in_ball(1.0).unwrap(), 5);
        assert_eq!(z2.count_in_ball(2.0).unwrap(), 13);
        let z3 = Lattice::cubic(3, 1.0).unwrap();
        assert_eq!(z3.count_in_ball(1.0).unwrap(), 7);
    }

    #[test]
    fn shortest_vector_of_hexagonal_lattice() {
        let l = Lattice::new(&[vec![1.0, 0.0], vec![0.5, 3f64.sqrt() / 2.0]]).unwrap();
        assert!((l.shortest_vector() - 1.0).abs() < 1e-12);
        let skew = Lattice::new(&[vec![1.0, 0.0], vec![10.0, 0.1]]).unwrap();
        assert!((skew.shortest_vector() - 0.1).abs() < 1e-9);
    }

    #[test]
    fn reduce_and_distance() {
        let l = Lattice::cubic(2, 2.0 * PI).unwrap();
        let r = l.reduce(&[-0.1, 7.0]);
        assert!((r[0] - (2.0 * PI - 0.1)).abs() < 1e-12);
        assert!((r[1] - (7.0 - 2.0 * PI)).abs() < 1e-12);
        assert!((l.distance_to_lattice(&[2.0 * PI - 0.1, 0.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn dual_of_two_pi_square_is_unit() {
        let d = Lattice::cubic(2, 2.0 * PI).unwrap().dual();
        let g = d.gram();
        assert!((g[0][0] - 1.0).abs() < 1e-12 && g[0][1].abs() < 1e-12);
    }
}
