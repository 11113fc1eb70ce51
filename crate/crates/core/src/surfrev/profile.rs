use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::quad;

/// JSON form of a profile: a named preset or an even polynomial.
///
/// The polynomial gives the *square* of the radius, `ρ(z)² = Σ c₂ₖ z²ᵏ`, on
/// the stated domain. A polynomial `ρ` itself has bounded slope at its roots
/// and can never close up smoothly at the poles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Preset {
        preset: String,
        #[serde(default)]
        a: Option<f64>,
        #[serde(default)]
        c: Option<f64>,
    },
    PolyEven {
        poly_even: Vec<f64>,
        domain: [f64; 2],
    },
}

impl ProfileSpec {
    pub fn sphere() -> Self {
        ProfileSpec::Preset {
            preset: "sphere".into(),
            a: None,
            c: None,
        }
    }

    pub fn spheroid(a: f64, c: f64) -> Self {
        ProfileSpec::Preset {
            preset: "spheroid".into(),
            a: Some(a),
            c: Some(c),
        }
    }
}

/// A validated strictly convex surface of revolution `x² + y² = ρ(z)²`,
/// `z ∈ (a₋, a₊)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RevolutionProfile {
    name: String,
    /// Coefficients of ρ² in powers of z (only even powers nonzero).
    coeffs: Vec<f64>,
    lower: f64,
    upper: f64,
    z0: f64,
    rho_max: f64,
    area: f64,
}

const POLE_OFFSET: f64 = 1e-6;
const CONVEXITY_GRID: usize = 10_000;
/// ρ″ must be below `-CURVATURE_FLOOR·ρ_max/L²`.
const CURVATURE_FLOOR: f64 = 1e-12;

impl RevolutionProfile {
    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
    /// Height of the equator (argmax of ρ).
    pub fn z0(&self) -> f64 {
        self.z0
    }
    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }
    pub fn equator_length(&self) -> f64 {
        2.0 * PI * self.rho_max
    }
    /// Riemannian area of the surface.
    pub fn area(&self) -> f64 {
        self.area
    }
    pub fn rho_squared_coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// ρ² and its first three derivatives.
    #[inline]
    pub fn g(&self, z: f64) -> [f64; 4] {
        let mut out = [0.0; 4];
        // Horner on each derivative.
        for d in 0..4 {
            let mut acc = 0.0;
            for k in (d..self.coeffs.len()).rev() {
                let mut f = 1.0;
                for j in 0..d {
                    f *= (k - j) as f64;
                }
                acc = acc * z + f * self.coeffs[k];
            }
            out[d] = acc;
        }
        out
    }

    pub fn rho(&self, z: f64) -> f64 {
        self.g(z)[0].max(0.0).sqrt()
    }

    /// ρ′(z).
    pub fn drho(&self, z: f64) -> f64 {
        let [g, g1, ..] = self.g(z);
        g1 / (2.0 * g.sqrt())
    }

    /// ρ″(z) = (2 g g″ − g′²) / (4 g^{3/2}).
    pub fn d2rho(&self, z: f64) -> f64 {
        let [g, g1, g2, _] = self.g(z);
        (2.0 * g * g2 - g1 * g1) / (4.0 * g.powf(1.5))
    }

    /// `√(4ρ² + (ρ²)′²) = 2ρ√(1 + ρ′²)`, smooth up to the poles.
    pub fn s(&self, z: f64) -> f64 {
        let [g, g1, ..] = self.g(z);
        (4.0 * g + g1 * g1).sqrt()
    }

    pub(crate) fn build(name: String, coeffs: Vec<f64>, lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(LabError::Invalid {
                what: "profile",
                reason: format!("domain [{lower}, {upper}] is empty"),
            });
        }
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(LabError::Invalid {
                what: "profile",
                reason: "coefficients must be finite and non-empty".into(),
            });
        }
        let mut p = Self {
            name,
            coeffs,
            lower,
            upper,
            z0: 0.0,
            rho_max: 0.0,
            area: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&mut self) -> Result<()> {
        let (lo, hi) = (self.lower, self.upper);
        let h = (hi - lo) / (CONVEXITY_GRID + 1) as f64;
        for i in 1..=CONVEXITY_GRID {
            let z = lo + i as f64 * h;
            if !(self.g(z)[0] > 0.0) {
                return Err(LabError::Profile {
                    condition: "positivity",
                    witness: z,
                });
            }
        }
        for (z, sign) in [(lo + POLE_OFFSET, 1.0), (hi - POLE_OFFSET, -1.0)] {
            let [g, g1, ..] = self.g(z);
            let rho = g.max(0.0).sqrt();
            let drho = g1 / (2.0 * rho);
            if !(g > 0.0) || rho >= 1e-2 || !(sign * drho > 1e2) {
                return Err(LabError::Profile {
                    condition: "pole limits",
                    witness: z,
                });
            }
        }
        // Equator: the root of (ρ²)′, by bisection.
        let (mut a, mut b) = (lo + POLE_OFFSET, hi - POLE_OFFSET);
        while b - a > 1e-13 {
            let m = 0.5 * (a + b);
            if self.g(m)[1] > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        self.z0 = 0.5 * (a + b);
        self.rho_max = self.rho(self.z0);
        // Equator first: a degenerate equator is the typical failure and its
        // bisected location is only accurate to roundoff.
        let floor = CURVATURE_FLOOR * self.rho_max / ((hi - lo) * (hi - lo));
        let witnesses = std::iter::once(self.z0).chain((1..=CONVEXITY_GRID).map(|i| lo + i as f64 * h));
        for z in witnesses {
            if !(self.d2rho(z) < -floor) {
                return Err(LabError::Profile {
                    condition: "strict convexity",
                    witness: z,
                });
            }
        }
        // Area = ∫ 2πρ√(1+ρ′²) dz = ∫ π S dz.
        self.area = quad::integrate(|z| PI * self.s(z), lo, hi, 1e-13, 1e-13)?;
        Ok(())
    }
}

/// Validates a profile description and derives its equator data.
pub fn validate_profile(spec: &ProfileSpec) -> Result<RevolutionProfile> {
    match spec {
        ProfileSpec::Preset { preset, a, c } => match preset.as_str() {
            "sphere" => RevolutionProfile::build("sphere".into(), vec![1.0, 0.0, -1.0], -1.0, 1.0),
            "spheroid" => {
                let a = a.ok_or_else(|| missing("a"))?;
                let c = c.ok_or_else(|| missing("c"))?;
                if !(a > 0.0 && c > 0.0) {
                    return Err(LabError::Invalid {
                        what: "profile",
                        reason: "spheroid semi-axes must be positive".into(),
                    });
                }
                RevolutionProfile::build(format!("spheroid({a},{c})"), vec![a * a, 0.0, -a * a / (c * c)], -c, c)
            }
            other => Err(LabError::Invalid {
                what: "profile",
                reason: format!("unknown preset {other:?}"),
            }),
        },
        ProfileSpec::PolyEven { poly_even, domain } => {
            let mut coeffs = Vec::with_capacity(2 * poly_even.len());
            for (k, &c) in poly_even.iter().enumerate() {
                if k > 0 {
                    coeffs.push(0.0);
                }
                coeffs.push(c);
            }
            RevolutionProfile::build("poly_even".into(), coeffs, domain[0], domain[1])
        }
    }
}

fn missing(field: &str) -> LabError {
    LabError::Invalid {
        what: "profile",
        reason: format!("spheroid preset needs field {field:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_preset() {
        let p = validate_profile(&ProfileSpec::sphere()).unwrap();
        assert!(p.z0().abs() < 1e-12);
        assert!((p.rho_max() - 1.0).abs() < 1e-12);
        assert!((p.equator_length() - 2.0 * PI).abs() < 1e-12);
        assert!((p.area() - 4.0 * PI).abs() < 1e-9);
    }

    #[test]
    fn spheroid_preset() {
        let p = validate_profile(&ProfileSpec::spheroid(1.0, 2.0)).unwrap();
        assert!(p.z0().abs() < 1e-12);
        assert!((p.rho_max() - 1.0).abs() < 1e-12);
        // Prolate spheroid area 2πa²(1 + (c/(a e)) asin e).
        let e = (1.0f64 - 0.25).sqrt();
        let exact = 2.0 * PI * (1.0 + 2.0 / e * e.asin());
        assert!((p.area() - exact).abs() < 1e-9, "{} vs {exact}", p.area());
    }

    #[test]
    fn flat_equator_fails_convexity_at_zero() {
        let spec = ProfileSpec::PolyEven {
            poly_even: vec![1.0, 0.0, -1.0],
            domain: [-1.0, 1.0],
        };
        match validate_profile(&spec) {
            Err(LabError::Profile { condition, witness }) => {
                assert_eq!(condition, "strict convexity");
                assert!(witness.abs() < 1e-9);
            }
            other => panic!("expected convexity violation, got {other:?}"),
        }
    }

    #[test]
    fn wrong_domain_fails_pole_limits() {
        let spec = ProfileSpec::PolyEven {
            poly_even: vec![1.0, -1.0],
            domain: [-0.9, 0.9],
        };
        assert!(matches!(
            validate_profile(&spec),
            Err(LabError::Profile {
                condition: "pole limits",
                ..
            })
        ));
    }

    #[test]
    fn negative_region_fails_positivity() {
        let spec = ProfileSpec::PolyEven {
            poly_even: vec![1.0, -1.0],
            domain: [-1.5, 1.5],
        };
        assert!(matches!(
            validate_profile(&spec),
            Err(LabError::Profile {
                condition: "positivity",
                ..
            })
        ));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = validate_profile(&ProfileSpec::spheroid(1.0, 2.0)).unwrap();
        let z = 0.7;
        let h = 1e-5;
        let fd1 = (p.rho(z + h) - p.rho(z - h)) / (2.0 * h);
        let fd2 = (p.rho(z + h) - 2.0 * p.rho(z) + p.rho(z - h)) / (h * h);
        assert!((fd1 - p.drho(z)).abs() < 1e-8);
        assert!((fd2 - p.d2rho(z)).abs() < 1e-4);
    }

    #[test]
    fn json_forms() {
        let s: ProfileSpec = serde_json::from_str(r#"{"preset":"spheroid","a":1.0,"c":2.0}"#).unwrap();
        assert_eq!(s, ProfileSpec::spheroid(1.0, 2.0));
        let p: ProfileSpec = serde_json::from_str(r#"{"poly_even":[1,-1],"domain":[-1,1]}"#).unwrap();
        let prof = validate_profile(&p).unwrap();
        assert!((prof.rho(0.6) - 0.8).abs() < 1e-12);
    }
}
