use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::generators::Construction;
use crate::scalar::Scalar;

/// What produced a field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub construction: Construction,
    /// Absent for deterministic builds.
    pub seed: Option<u64>,
}

impl FieldMeta {
    pub fn external(name: &str) -> Self {
        FieldMeta { construction: Construction::External { name: name.to_string() }, seed: None }
    }
}

/// Magnitudes `|c_{j,k}|` for `0 <= j <= jmax`, one dense row of `2^j` entries per scale.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientField<T> {
    jmax: u32,
    values: Vec<Vec<T>>,
    pub meta: FieldMeta,
}

impl<T: Scalar> CoefficientField<T> {
    pub fn new(values: Vec<Vec<T>>, meta: FieldMeta) -> Result<Self> {
        ensure!(!values.is_empty(), "a field needs at least the scale j = 0");
        ensure!(values.len() <= 31, "jmax {} is beyond the supported range", values.len() - 1);
        for (j, row) in values.iter().enumerate() {
            if row.len() != 1 << j {
                return Err(Error::Mismatch(format!("scale {j} has {} entries, expected {}", row.len(), 1u64 << j)));
            }
            ensure!(
                row.iter().all(|c| c.is_finite() && *c >= T::zero()),
                "scale {j} contains a negative or non-finite magnitude"
            );
        }
        let jmax = values.len() as u32 - 1;
        Ok(CoefficientField { jmax, values, meta })
    }

    pub fn zeros(jmax: u32, meta: FieldMeta) -> Self {
        let values = (0..=jmax).map(|j| vec![T::zero(); 1 << j]).collect();
        CoefficientField { jmax, values, meta }
    }

    /// Field built row by row from `f(j, k)`.
    pub fn from_fn(jmax: u32, meta: FieldMeta, f: impl Fn(u32, u64) -> T + Sync) -> Self {
        use rayon::prelude::*;
        let values = (0..=jmax)
            .into_par_iter()
            .map(|j| (0..1u64 << j).map(|k| f(j, k)).collect())
            .collect();
        CoefficientField { jmax, values, meta }
    }

    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    pub fn scale(&self, j: u32) -> &[T] {
        &self.values[j as usize]
    }

    pub fn get(&self, j: u32, k: u64) -> T {
        self.values[j as usize][k as usize]
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn into_rows(self) -> Vec<Vec<T>> {
        self.values
    }

    pub fn nonzero_count(&self, j: u32) -> usize {
        self.scale(j).iter().filter(|c| **c > T::zero()).count()
    }

    /// Total entry count, `2^(jmax+1) - 1`.
    pub fn len(&self) -> usize {
        (1usize << (self.jmax + 1)) - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn map(&self, f: impl Fn(u32, u64, T) -> T + Sync) -> Self {
        CoefficientField::from_fn(self.jmax, self.meta.clone(), |j, k| f(j, k, self.get(j, k)))
    }

    /// Same field in another scalar type.
    pub fn cast<U: Scalar>(&self) -> CoefficientField<U> {
        let values = self.values.iter().map(|row| row.iter().map(|c| U::of(c.f64())).collect()).collect();
        CoefficientField { jmax: self.jmax, values, meta: self.meta.clone() }
    }
}
