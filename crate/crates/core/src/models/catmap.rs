use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;

use super::{PhaseState, Prepared, WindowPlan};
use crate::error::{LabError, Result};

/// Suspension flow of a hyperbolic toral automorphism `A` with constant roof
/// `r`: the quotient of `𝕋² × ℝ` by `(u, s + r) ~ (Au, s)`, flowing in `s`.
#[derive(Debug, Clone)]
pub struct CatMapSuspension {
    a: [[i64; 2]; 2],
    roof: f64,
}

type IMat = [[i128; 2]; 2];

impl CatMapSuspension {
    pub fn new(a: [[i64; 2]; 2], roof: f64) -> Result<Self> {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let tr = a[0][0] + a[1][1];
        if det != 1 {
            return Err(LabError::Invalid {
                what: "cat map",
                reason: format!("determinant must be 1, got {det}"),
            });
        }
        if tr <= 2 {
            return Err(LabError::Invalid {
                what: "cat map",
                reason: format!("trace must exceed 2 for hyperbolicity, got {tr}"),
            });
        }
        if !(roof > 0.0 && roof.is_finite()) {
            return Err(LabError::Invalid {
                what: "cat map",
                reason: format!("roof must be positive, got {roof}"),
            });
        }
        Ok(Self { a, roof })
    }

    pub fn matrix(&self) -> [[i64; 2]; 2] {
        self.a
    }

    pub fn roof(&self) -> f64 {
        self.roof
    }

    /// log of the expanding eigenvalue of `A`.
    pub fn expansion_exponent(&self) -> f64 {
        let tr = (self.a[0][0] + self.a[1][1]) as f64;
        ((tr + (tr * tr - 4.0).sqrt()) / 2.0).ln()
    }

    /// `Aⁿ` for any integer `n` (negative powers use the adjugate).
    pub fn power(&self, n: i64) -> Result<IMat> {
        let a = self.a;
        let base: IMat = if n >= 0 {
            [[a[0][0] as i128, a[0][1] as i128], [a[1][0] as i128, a[1][1] as i128]]
        } else {
            [[a[1][1] as i128, -a[0][1] as i128], [-a[1][0] as i128, a[0][0] as i128]]
        };
        let mut result: IMat = [[1, 0], [0, 1]];
        let mut b = base;
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                result = mat_mul(&result, &b)?;
            }
            k >>= 1;
            if k > 0 {
                b = mat_mul(&b, &b)?;
            }
        }
        Ok(result)
    }

    /// Number of roof crossings and the new height after flowing for `t`.
    fn split(&self, s: f64, t: f64) -> (i64, f64) {
        let total = s + t;
        let n = (total / self.roof).floor();
        let mut h = total - n * self.roof;
        let mut n = n as i64;
        if h >= self.roof {
            h -= self.roof;
            n += 1;
        }
        if h < 0.0 {
            h = 0.0;
        }
        (n, h)
    }

    pub fn flow(&self, st: &PhaseState, t: f64) -> Result<PhaseState> {
        let p = st.position();
        let (n, h) = self.split(p[2], t);
        let u = if n == 0 {
            [p[0], p[1]]
        } else {
            apply_mod1(&self.power(n)?, [p[0], p[1]])
        };
        Ok(PhaseState::new(&[u[0], u[1], h], &[], st.energy))
    }

    /// `diag(Aⁿ, 1)` with `n` the number of roof crossings.
    pub fn tangent_flow(&self, st: &PhaseState, t: f64) -> Result<DMatrix<f64>> {
        let (n, _) = self.split(st.position()[2], t);
        let m = self.power(n)?;
        let mut j = DMatrix::identity(3, 3);
        for i in 0..2 {
            for k in 0..2 {
                j[(i, k)] = m[i][k] as f64;
            }
        }
        Ok(j)
    }

    /// Embedding into ℝ¹⁰ compatible with the gluing; the distance is the
    /// chordal distance of the images.
    ///
    /// With `σ = s/r` and `ψ(x) = cos πx` on `|x| ≤ ½` (zero elsewhere),
    /// `Φ = (Σₙ ψ(σ − n) E(Aⁿu), Σₙ ψ(σ − ½ − n) E(Aⁿu), r/2π·e^{2πiσ})`
    /// where `E(u) = (e^{2πiu₁}, e^{2πiu₂})/2π`. Replacing `(u, σ + 1)` by
    /// `(Au, σ)` reindexes both sums, so Φ is well defined on the quotient,
    /// and it is injective.
    pub fn embed(&self, st: &PhaseState) -> Prepared {
        let p = st.position();
        let u = [p[0], p[1]];
        let sigma = p[2] / self.roof;
        let mut out = [0.0; 10];
        let eu = circle_pair(u);
        // Slot a: n = 0 when σ < ½, else n = 1 (ψ(σ − 1)).
        if sigma < 0.5 {
            let w = (PI * sigma).cos();
            for i in 0..4 {
                out[i] = w * eu[i];
            }
        } else {
            let w = (PI * (sigma - 1.0)).cos();
            let au = apply_mod1(&self.power(1).expect("A fits"), u);
            let ea = circle_pair(au);
            for i in 0..4 {
                out[i] = w * ea[i];
            }
        }
        // Slot b: n = 0 on the whole cell.
        let w = (PI * (sigma - 0.5)).cos();
        for i in 0..4 {
            out[4 + i] = w * eu[i];
        }
        let rr = self.roof / (2.0 * PI);
        out[8] = rr * (2.0 * PI * sigma).cos();
        out[9] = rr * (2.0 * PI * sigma).sin();
        Prepared(out)
    }

    /// Speed of `t ↦ Φ(flow(s, t))`: the two slot weights trace a circle of
    /// radius `|E| = √2/2π` at angular rate `π/r`, the last block at unit speed.
    pub fn speed_bound(&self) -> f64 {
        (1.0 + 0.5 / (self.roof * self.roof)).sqrt()
    }

    pub fn diameter_bound(&self) -> f64 {
        (2.0 + self.roof * self.roof).sqrt() / PI
    }

    /// Returns need the circle block to come back: `(r/π)|sin(πΔσ)| ≤ ε`.
    pub fn window_plan(&self, eps: f64) -> WindowPlan {
        let x = eps * PI / self.roof;
        if x >= 1.0 {
            return WindowPlan::Whole;
        }
        WindowPlan::Periodic {
            period: self.roof,
            half_width: self.roof * x.asin() / PI,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhaseState {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let s = rng.random::<f64>() * self.roof;
        PhaseState::new(&[u1, u2, s.min(self.roof * (1.0 - f64::EPSILON))], &[], 1.0)
    }
}

fn circle_pair(u: [f64; 2]) -> [f64; 4] {
    let k = 1.0 / (2.0 * PI);
    let (s1, c1) = (2.0 * PI * u[0]).sin_cos();
    let (s2, c2) = (2.0 * PI * u[1]).sin_cos();
    [k * c1, k * s1, k * c2, k * s2]
}

fn mat_mul(a: &IMat, b: &IMat) -> Result<IMat> {
    let mut c = [[0i128; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let x = a[i][0].checked_mul(b[0][j]).ok_or(LabError::Overflow)?;
            let y = a[i][1].checked_mul(b[1][j]).ok_or(LabError::Overflow)?;
            c[i][j] = x.checked_add(y).ok_or(LabError::Overflow)?;
        }
    }
    Ok(c)
}

/// `M u mod 1`, with each product `mᵢⱼ uⱼ mod 1` computed exactly before the
/// final rounding.
pub(crate) fn apply_mod1(m: &IMat, u: [f64; 2]) -> [f64; 2] {
    let mut out = [0.0; 2];
    for i in 0..2 {
        let x = frac_mul(m[i][0], u[0]) + frac_mul(m[i][1], u[1]);
        out[i] = wrap_unit(x);
    }
    out
}

fn wrap_unit(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// `a·u mod 1` for `u ∈ [0, 1)`. Writing `u = m·2⁻ᵏ` with integer mantissa
/// `m`, the fractional part is `(a·m mod 2ᵏ)·2⁻ᵏ`, which wrapping 128-bit
/// arithmetic gives exactly whenever `k ≤ 127`.
pub(crate) fn frac_mul(a: i128, u: f64) -> f64 {
    if u == 0.0 || a == 0 {
        return 0.0;
    }
    debug_assert!((0.0..1.0).contains(&u));
    let bits = u.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let k = -e;
    if !(1..=127).contains(&k) {
        return wrap_unit((a as f64) * u);
    }
    let prod = (a as u128).wrapping_mul(mant as u128);
    let r = prod & ((1u128 << k) - 1);
    wrap_unit(r as f64 * 2f64.powi(-(k as i32)))
}
