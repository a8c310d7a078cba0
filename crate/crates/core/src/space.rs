//! Parameter-space geometry: physical parameter boxes and the normalized
//! unit hypercube the optimizer works in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parameter space must have at least one dimension")]
    Empty,
    #[error("parameter `{name}`: lower bound {lower} must be below upper bound {upper}")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("parameter `{0}` has an empty unit string")]
    EmptyUnit(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateName(String),
    #[error("expected {expected} values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("parameter `{name}`: value {value} outside [{lower}, {upper}]")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("normalized component {index} = {value} outside [0, 1]")]
    NotNormalized { index: usize, value: f64 },
}

/// One named control parameter with closed physical bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterDef {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    /// Display unit, e.g. `MPa`. Never used in arithmetic.
    pub unit: String,
}

impl ParameterDef {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            lower,
            upper,
            unit: unit.into(),
        }
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }

    /// Column label used in exchanged CSV files, e.g. `pressure_MPa`.
    /// Characters other than ASCII alphanumerics in the unit become `_`.
    pub fn column_label(&self) -> String {
        let unit: String = self
            .unit
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!("{}_{}", self.name, unit)
    }
}

/// Ordered, validated box of control parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParameterDef>", into = "Vec<ParameterDef>")]
pub struct ParameterSpace {
    dims: Vec<ParameterDef>,
}

impl TryFrom<Vec<ParameterDef>> for ParameterSpace {
    type Error = SpaceError;

    fn try_from(dims: Vec<ParameterDef>) -> Result<Self, SpaceError> {
        Self::new(dims)
    }
}

impl From<ParameterSpace> for Vec<ParameterDef> {
    fn from(space: ParameterSpace) -> Self {
        space.dims
    }
}

impl ParameterSpace {
    pub fn new(dims: Vec<ParameterDef>) -> Result<Self, SpaceError> {
        if dims.is_empty() {
            return Err(SpaceError::Empty);
        }
        for (i, d) in dims.iter().enumerate() {
            // `!(a < b)` also rejects NaN bounds.
            if !d.lower.is_finite() || !d.upper.is_finite() || d.lower >= d.upper {
                return Err(SpaceError::InvalidBounds {
                    name: d.name.clone(),
                    lower: d.lower,
                    upper: d.upper,
                });
            }
            if d.unit.trim().is_empty() {
                return Err(SpaceError::EmptyUnit(d.name.clone()));
            }
            if dims[..i].iter().any(|other| other.name == d.name) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[ParameterDef] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Map physical values onto `[0, 1]^N`. Bounds are closed at both ends.
    pub fn normalize(&self, physical: &[f64]) -> Result<ControlVector, SpaceError> {
        self.check_len(physical.len())?;
        let values = self
            .dims
            .iter()
            .zip(physical)
            .map(|(d, &v)| {
                if !(v >= d.lower && v <= d.upper) {
                    return Err(SpaceError::OutOfBounds {
                        name: d.name.clone(),
                        value: v,
                        lower: d.lower,
                        upper: d.upper,
                    });
                }
                Ok(((v - d.lower) / d.span()).clamp(0.0, 1.0))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ControlVector(values))
    }

    pub fn denormalize(&self, x: &ControlVector) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.len());
        self.dims
            .iter()
            .zip(x.values())
            .map(|(d, &u)| d.lower + u * d.span())
            .collect()
    }

    pub fn check_len(&self, n: usize) -> Result<(), SpaceError> {
        if n != self.len() {
            return Err(SpaceError::DimensionMismatch {
                expected: self.len(),
                actual: n,
            });
        }
        Ok(())
    }
}

/// A point of the normalized control space; every component lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ControlVector(Vec<f64>);

impl TryFrom<Vec<f64>> for ControlVector {
    type Error = SpaceError;

    fn try_from(values: Vec<f64>) -> Result<Self, SpaceError> {
        Self::new(values)
    }
}

impl From<ControlVector> for Vec<f64> {
    fn from(x: ControlVector) -> Self {
        x.0
    }
}

impl ControlVector {
    pub fn new(values: Vec<f64>) -> Result<Self, SpaceError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(SpaceError::NotNormalized { index, value });
            }
        }
        Ok(Self(values))
    }

    /// Clamps each component into `[0, 1]`. NaN becomes 0.
    pub fn clamped(values: Vec<f64>) -> Self {
        Self(
            values
                .into_iter()
                .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &ControlVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl std::ops::Index<usize> for ControlVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inkjet() -> ParameterSpace {
        ParameterSpace::new(vec![
            ParameterDef::new("pressure", 0.03, 0.15, "MPa"),
            ParameterDef::new("frequency", 1.0, 600.0, "Hz"),
            ParameterDef::new("speed", 10.0, 360.0, "mm/s"),
        ])
        .unwrap()
    }

    #[test]
    fn normalize_boundary_and_midpoint() {
        let s = ParameterSpace::new(vec![ParameterDef::new("p", 0.03, 0.15, "MPa")]).unwrap();
        assert_eq!(s.normalize(&[0.03]).unwrap().values(), &[0.0]);
        let s = ParameterSpace::new(vec![ParameterDef::new("f", 1.0, 600.0, "Hz")]).unwrap();
        assert!((s.normalize(&[300.5]).unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inkjet_center() {
        let x = inkjet().normalize(&[0.09, 300.5, 185.0]).unwrap();
        for v in x.values() {
            assert!((v - 0.5).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn out_of_bounds_names_parameter() {
        let err = inkjet().normalize(&[0.09, 700.0, 185.0]).unwrap_err();
        match err {
            SpaceError::OutOfBounds { name, .. } => assert_eq!(name, "frequency"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corners_denormalize_to_bounds() {
        let s = inkjet();
        let lo = s.denormalize(&ControlVector::new(vec![0.0; 3]).unwrap());
        let hi = s.denormalize(&ControlVector::new(vec![1.0; 3]).unwrap());
        assert_eq!(lo, vec![0.03, 1.0, 10.0]);
        assert_eq!(hi, vec![0.15, 600.0, 360.0]);
    }

    #[test]
    fn rejects_bad_definitions() {
        assert_eq!(ParameterSpace::new(vec![]), Err(SpaceError::Empty));
        assert!(matches!(
            ParameterSpace::new(vec![ParameterDef::new("a", 1.0, 1.0, "u")]),
            Err(SpaceError::InvalidBounds { .. })
        ));
        assert!(matches!(
            ParameterSpace::new(vec![ParameterDef::new("a", 0.0, 1.0, " ")]),
            Err(SpaceError::EmptyUnit(_))
        ));
        assert!(matches!(
            ParameterSpace::new(vec![
                ParameterDef::new("a", 0.0, 1.0, "u"),
                ParameterDef::new("a", 0.0, 2.0, "u")
            ]),
            Err(SpaceError::DuplicateName(_))
        ));
    }

    #[test]
    fn column_labels_sanitize_units() {
        let s = inkjet();
        let labels: Vec<_> = s.dims().iter().map(|d| d.column_label()).collect();
        assert_eq!(labels, ["pressure_MPa", "frequency_Hz", "speed_mm_s"]);
    }

    #[test]
    fn thousand_point_round_trip() {
        use rand::{Rng, SeedableRng};
        let s = inkjet();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let x = ControlVector::new((0..3).map(|_| rng.random::<f64>()).collect()).unwrap();
            let back = s.normalize(&s.denormalize(&x)).unwrap();
            for (a, b) in x.values().iter().zip(back.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn physical_round_trip(u in proptest::collection::vec(0.0f64..=1.0, 3)) {
            let s = inkjet();
            let phys: Vec<f64> = s.dims().iter().zip(&u).map(|(d, t)| d.lower + t * d.span()).collect();
            let back = s.denormalize(&s.normalize(&phys).unwrap());
            for (a, b) in phys.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300) + 1e-15);
            }
        }
    }
}
