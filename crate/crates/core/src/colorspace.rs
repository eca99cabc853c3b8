//! XYZ tristimulus values, chromaticity, CIELAB and the CIE76 color difference.

use std::fmt;
use std::ops::{Add, Mul};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One XYZ measurement. Components are finite and non-negative.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Tristimulus {
    x: f64,
    y: f64,
    z: f64,
}

impl Tristimulus {
    pub const BLACK: Tristimulus = Tristimulus {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        for (component, value) in [('X', x), ('Y', y), ('Z', z)] {
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidComponent { component, value });
            }
        }
        Ok(Tristimulus { x, y, z })
    }

    /// Builds a tristimulus from a vector, clamping negative components to zero.
    /// Returns the value and whether any component was clamped.
    pub fn from_vector_clamped(v: &Vector3<f64>) -> (Self, bool) {
        let clamped = v.iter().any(|c| *c < 0.0);
        let t = Tristimulus {
            x: v.x.max(0.0),
            y: v.y.max(0.0),
            z: v.z.max(0.0),
        };
        (t, clamped)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Result<Self> {
        Self::new(v.x, v.y, v.z)
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.y
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.z
    }

    /// X + Y + Z.
    #[inline]
    pub fn sum(&self) -> f64 {
        self.x + self.y + self.z
    }

    #[inline]
    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Sum must be strictly positive for anything that uses the XYZ direction.
    pub(crate) fn require_positive_sum(&self) -> Result<f64> {
        let s = self.sum();
        if s > 0.0 {
            Ok(s)
        } else {
            Err(Error::Degenerate("X+Y+Z must be positive"))
        }
    }
}

impl fmt::Debug for Tristimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "XYZ({}, {}, {})", self.x, self.y, self.z)
    }
}

impl TryFrom<[f64; 3]> for Tristimulus {
    type Error = Error;

    fn try_from(v: [f64; 3]) -> Result<Self> {
        Tristimulus::new(v[0], v[1], v[2])
    }
}

impl From<Tristimulus> for [f64; 3] {
    fn from(t: Tristimulus) -> Self {
        t.to_array()
    }
}

impl Add for Tristimulus {
    type Output = Tristimulus;

    fn add(self, rhs: Tristimulus) -> Tristimulus {
        Tristimulus {
            x: self.x + rhs.x,
            y: self.y + rhs.y,
            z: self.z + rhs.z,
        }
    }
}

impl Mul<f64> for Tristimulus {
    type Output = Tristimulus;

    /// Panics if `s` is negative or not finite.
    fn mul(self, s: f64) -> Tristimulus {
        assert!(s.is_finite() && s >= 0.0, "tristimulus scale must be >= 0");
        Tristimulus {
            x: self.x * s,
            y: self.y * s,
            z: self.z * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chromaticity {
    pub x: f64,
    pub y: f64,
}

impl Chromaticity {
    /// The implied third coordinate, 1 - x - y.
    pub fn z(&self) -> f64 {
        1.0 - self.x - self.y
    }
}

pub fn chromaticity(c: &Tristimulus) -> Result<Chromaticity> {
    let s = c.require_positive_sum()?;
    Ok(Chromaticity {
        x: c.x / s,
        y: c.y / s,
    })
}

/// True when scaling `c` by `s` leaves its chromaticity unchanged to within 1e-12.
pub fn scale_invariance_check(c: &Tristimulus, s: f64) -> Result<bool> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::Validation(format!("scale must be positive, got {s}")));
    }
    let before = chromaticity(c)?;
    let after = chromaticity(&(*c * s))?;
    Ok((before.x - after.x).abs() <= 1e-12 && (before.y - after.y).abs() <= 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
    pub white: Tristimulus,
}

const EPSILON: f64 = 216.0 / 24389.0; // (6/29)^3
const KAPPA: f64 = 24389.0 / 27.0; // (29/3)^3

fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPSILON {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

fn require_white(white: &Tristimulus) -> Result<()> {
    if white.x > 0.0 && white.y > 0.0 && white.z > 0.0 {
        Ok(())
    } else {
        Err(Error::Degenerate("reference white must be strictly positive"))
    }
}

pub fn xyz_to_lab(c: &Tristimulus, white: &Tristimulus) -> Result<LabColor> {
    require_white(white)?;
    let fx = lab_f(c.x / white.x);
    let fy = lab_f(c.y / white.y);
    let fz = lab_f(c.z / white.z);
    Ok(LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
        white: *white,
    })
}

/// Inverse of [`xyz_to_lab`]. Out-of-gamut Lab values may give negative components,
/// so the raw vector is returned.
pub fn lab_to_xyz(lab: &LabColor) -> Vector3<f64> {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let w = lab.white;
    Vector3::new(
        w.x * lab_f_inv(fx),
        w.y * lab_f_inv(fy),
        w.z * lab_f_inv(fz),
    )
}

fn same_white(p: &Tristimulus, q: &Tristimulus) -> bool {
    p.to_array()
        .iter()
        .zip(q.to_array())
        .all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()))
}

/// CIE76 color difference: Euclidean distance in L*a*b*.
pub fn delta_e76(p: &LabColor, q: &LabColor) -> Result<f64> {
    if !same_white(&p.white, &q.white) {
        return Err(Error::MismatchedWhite(p.white.to_array(), q.white.to_array()));
    }
    let dl = p.l - q.l;
    let da = p.a - q.a;
    let db = p.b - q.b;
    Ok((dl * dl + da * da + db * db).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(x: f64, y: f64, z: f64) -> Tristimulus {
        Tristimulus::new(x, y, z).unwrap()
    }

    fn lab(l: f64, a: f64, b: f64) -> LabColor {
        LabColor {
            l,
            a,
            b,
            white: t(95.0, 100.0, 108.0),
        }
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(Tristimulus::new(-1.0, 0.0, 0.0).is_err());
        assert!(Tristimulus::new(0.0, f64::NAN, 0.0).is_err());
        assert!(Tristimulus::new(0.0, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn chromaticity_examples() {
        let c = chromaticity(&t(1.0, 1.0, 1.0)).unwrap();
        assert!((c.x - 1.0 / 3.0).abs() < 1e-15 && (c.y - 1.0 / 3.0).abs() < 1e-15);
        let c = chromaticity(&t(1.0, 0.0, 0.0)).unwrap();
        assert_eq!((c.x, c.y), (1.0, 0.0));
        let c = chromaticity(&t(2.0, 3.0, 5.0)).unwrap();
        assert!((c.x - 0.2).abs() < 1e-15 && (c.y - 0.3).abs() < 1e-15);
        assert!(matches!(
            chromaticity(&Tristimulus::BLACK),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn scale_invariance_examples() {
        assert!(scale_invariance_check(&t(1.0, 2.0, 3.0), 7.0).unwrap());
        assert!(scale_invariance_check(&t(0.5, 0.5, 0.5), 1.0).unwrap());
        assert!(scale_invariance_check(&t(3.0, 1.0, 4.0), 1e-6).unwrap());
        assert!(scale_invariance_check(&Tristimulus::BLACK, 2.0).is_err());
    }

    #[test]
    fn lab_examples() {
        let white = t(95.047, 100.0, 108.883);
        let l = xyz_to_lab(&white, &white).unwrap();
        assert!((l.l - 100.0).abs() < 1e-12 && l.a.abs() < 1e-12 && l.b.abs() < 1e-12);

        let l = xyz_to_lab(&Tristimulus::BLACK, &white).unwrap();
        assert!(l.l.abs() < 1e-12 && l.a.abs() < 1e-12 && l.b.abs() < 1e-12);

        // (1/8)^(1/3) = 0.5, so L* = 116 * 0.5 - 16 = 42.
        let l = xyz_to_lab(&(white * 0.125), &white).unwrap();
        assert!((l.l - 42.0).abs() < 1e-12, "{}", l.l);

        assert!(xyz_to_lab(&white, &t(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn lab_linear_branch_is_continuous() {
        let white = t(1.0, 1.0, 1.0);
        let below = xyz_to_lab(&(white * (EPSILON * (1.0 - 1e-12))), &white).unwrap();
        let above = xyz_to_lab(&(white * (EPSILON * (1.0 + 1e-12))), &white).unwrap();
        assert!((below.l - above.l).abs() < 1e-8);
        assert!((above.l - 8.0).abs() < 1e-8);
    }

    #[test]
    fn delta_e_examples() {
        let p = lab(50.0, 0.0, 0.0);
        assert_eq!(delta_e76(&p, &p).unwrap(), 0.0);
        assert!((delta_e76(&p, &lab(53.0, 4.0, 0.0)).unwrap() - 5.0).abs() < 1e-12);
        let d = delta_e76(&lab(60.0, 10.0, -10.0), &lab(58.0, 12.0, -7.0)).unwrap();
        assert!((d - 17f64.sqrt()).abs() < 1e-12);

        let mut other = lab(50.0, 0.0, 0.0);
        other.white = t(96.0, 100.0, 108.0);
        assert!(matches!(
            delta_e76(&p, &other),
            Err(Error::MismatchedWhite(..))
        ));
    }

    fn positive() -> impl Strategy<Value = Tristimulus> {
        (1e-3..1e3f64, 1e-3..1e3f64, 1e-3..1e3f64).prop_map(|(x, y, z)| t(x, y, z))
    }

    fn lab_strategy() -> impl Strategy<Value = LabColor> {
        (0.0..100.0f64, -100.0..100.0f64, -100.0..100.0f64).prop_map(|(l, a, b)| lab(l, a, b))
    }

    proptest! {
        #[test]
        fn chromaticity_scale_invariant(c in positive(), s in 1e-6..1e6f64) {
            prop_assert!(scale_invariance_check(&c, s).unwrap());
        }

        #[test]
        fn chromaticity_coordinates_sum_to_one(c in positive()) {
            let ch = chromaticity(&c).unwrap();
            let z = c.z() / c.sum();
            prop_assert!((ch.x + ch.y + z - 1.0).abs() < 1e-12);
            prop_assert!((ch.z() - z).abs() < 1e-12);
        }

        #[test]
        fn white_maps_to_l100(w in positive()) {
            let l = xyz_to_lab(&w, &w).unwrap();
            prop_assert!((l.l - 100.0).abs() < 1e-12);
            prop_assert!(l.a.abs() < 1e-12 && l.b.abs() < 1e-12);
        }

        #[test]
        fn lab_round_trip(c in positive(), w in positive()) {
            let back = lab_to_xyz(&xyz_to_lab(&c, &w).unwrap());
            for (got, want) in back.iter().zip(c.to_array()) {
                prop_assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{got} vs {want}");
            }
        }

        #[test]
        fn delta_e_is_a_metric(p in lab_strategy(), q in lab_strategy(), r in lab_strategy()) {
            let pq = delta_e76(&p, &q).unwrap();
            let qp = delta_e76(&q, &p).unwrap();
            prop_assert!(pq >= 0.0);
            prop_assert_eq!(pq, qp);
            prop_assert_eq!(delta_e76(&p, &p).unwrap(), 0.0);
            if p.l != q.l || p.a != q.a || p.b != q.b {
                prop_assert!(pq > 0.0);
            }
            let pr = delta_e76(&p, &r).unwrap();
            let rq = delta_e76(&r, &q).unwrap();
            prop_assert!(pq <= pr + rq + 1e-12);
        }
    }
}
