use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-column affine map of `[min, max]` onto `[lo, hi]`.
///
/// A constant column maps to the midpoint of the target range and
/// inverse-maps back to its constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler<T> {
    pub lo: T,
    pub hi: T,
    min: Option<Vec<T>>,
    max: Option<Vec<T>>,
}

impl<T: Scalar> MinMaxScaler<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            min: None,
            max: None,
        }
    }

    /// Scaler with explicit bounds, already fitted.
    pub fn with_bounds(lo: T, hi: T, min: Vec<T>, max: Vec<T>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                context: "scaler bounds",
                expected: min.len(),
                got: max.len(),
            });
        }
        if min.iter().zip(&max).any(|(a, b)| a > b) {
            return Err(Error::InvalidConfig("scaler min exceeds max".into()));
        }
        Ok(Self {
            lo,
            hi,
            min: Some(min),
            max: Some(max),
        })
    }

    pub fn fit<R: AsRef<[T]>>(&mut self, rows: &[R]) -> Result<()> {
        let first = rows.first().ok_or_else(|| Error::Data("cannot fit scaler on no rows".into()))?;
        let dim = first.as_ref().len();
        let mut min = vec![T::infinity(); dim];
        let mut max = vec![T::neg_infinity(); dim];
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "scaler fit row",
                    expected: dim,
                    got: r.len(),
                });
            }
            for j in 0..dim {
                if !r[j].is_finite() {
                    return Err(Error::NonFinite("scaler fit data".into()));
                }
                min[j] = min[j].min(r[j]);
                max[j] = max[j].max(r[j]);
            }
        }
        self.min = Some(min);
        self.max = Some(max);
        Ok(())
    }

    pub fn is_fitted(&self) -> bool {
        self.min.is_some()
    }

    pub fn dim(&self) -> Option<usize> {
        self.min.as_ref().map(Vec::len)
    }

    pub fn min(&self) -> Option<&[T]> {
        self.min.as_deref()
    }

    pub fn max(&self) -> Option<&[T]> {
        self.max.as_deref()
    }

    fn bounds(&self, dim: usize) -> Result<(&[T], &[T])> {
        let (min, max) = match (&self.min, &self.max) {
            (Some(a), Some(b)) => (a.as_slice(), b.as_slice()),
            _ => return Err(Error::ScalerNotFitted),
        };
        if min.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "scaler input",
                expected: min.len(),
                got: dim,
            });
        }
        Ok((min, max))
    }

    pub fn transform(&self, x: &[T]) -> Result<Vec<T>> {
        let mut out = x.to_vec();
        self.transform_inplace(&mut out)?;
        Ok(out)
    }

    pub fn transform_inplace(&self, x: &mut [T]) -> Result<()> {
        let (min, max) = self.bounds(x.len())?;
        let half = T::of(0.5);
        let span = self.hi - self.lo;
        for j in 0..x.len() {
            let range = max[j] - min[j];
            x[j] = if range > T::zero() {
                self.lo + (x[j] - min[j]) / range * span
            } else {
                self.lo + half * span
            };
        }
        Ok(())
    }

    pub fn inverse_transform(&self, y: &[T]) -> Result<Vec<T>> {
        let (min, max) = self.bounds(y.len())?;
        let span = self.hi - self.lo;
        Ok(y.iter()
            .enumerate()
            .map(|(j, &v)| {
                let range = max[j] - min[j];
                if range > T::zero() {
                    min[j] + (v - self.lo) / span * range
                } else {
                    min[j]
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn column_maps_to_unit_interval() {
        let mut s = MinMaxScaler::new(0.0, 1.0);
        s.fit(&[[2.0], [4.0], [6.0]]).unwrap();
        let out: Vec<f64> = [2.0, 4.0, 6.0].iter().map(|v| s.transform(&[*v]).unwrap()[0]).collect();
        assert_eq!(out, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_midpoint() {
        let mut s = MinMaxScaler::new(0.0, 1.0);
        s.fit(&[[5.0], [5.0]]).unwrap();
        assert_eq!(s.transform(&[5.0]).unwrap(), vec![0.5]);
        assert_eq!(s.inverse_transform(&[0.5]).unwrap(), vec![5.0]);
    }

    #[test]
    fn transform_before_fit_errors() {
        let s = MinMaxScaler::<f64>::new(-1.0, 1.0);
        assert!(matches!(s.transform(&[1.0]), Err(Error::ScalerNotFitted)));
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(
            rows in prop::collection::vec(prop::collection::vec(-1e4f64..1e4, 3), 2..20),
            pick in 0usize..20,
        ) {
            let mut s = MinMaxScaler::new(-1.0, 1.0);
            s.fit(&rows).unwrap();
            let x = &rows[pick % rows.len()];
            let back = s.inverse_transform(&s.transform(x).unwrap()).unwrap();
            for (a, b) in back.iter().zip(x) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }
}
