//! Wavelet leaders and pointwise exponents.

use rayon::prelude::*;
use serde::Serialize;

use crate::dyadic::DyadicIndex;
use crate::error::{ensure, Result};
use crate::field::CoefficientField;
use crate::scalar::Scalar;

/// `d_{j,k}` for every cell, plus the scales where the supremum was cut at `jmax`.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderField<T> {
    jmax: u32,
    values: Vec<Vec<T>>,
    truncation_bias: Vec<bool>,
}

impl<T: Scalar> LeaderField<T> {
    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    pub fn scale(&self, j: u32) -> &[T] {
        &self.values[j as usize]
    }

    pub fn get(&self, j: u32, k: u64) -> T {
        self.values[j as usize][k as usize]
    }

    pub fn truncation_bias(&self, j: u32) -> bool {
        self.truncation_bias[j as usize]
    }

    /// Rows taken as leaders directly (for data already reduced to leaders).
    pub fn from_rows(values: Vec<Vec<T>>) -> Result<Self> {
        ensure!(!values.is_empty(), "a leader field needs the scale j = 0");
        for (j, row) in values.iter().enumerate() {
            ensure!(row.len() == 1 << j, "scale {j} has {} entries", row.len());
        }
        let jmax = values.len() as u32 - 1;
        Ok(LeaderField { jmax, truncation_bias: bias_flags(jmax), values })
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.values
    }
}

/// Scales whose leaders are flagged as understated: the top `ceil(jmax/10)`.
fn bias_flags(jmax: u32) -> Vec<bool> {
    let cut = jmax - jmax.div_ceil(10);
    (0..=jmax).map(|j| j > cut).collect()
}

/// `M_{j,k}`: largest coefficient in the dyadic subtree rooted at `(j,k)`, truncated at `jmax`.
pub fn subtree_max<T: Scalar>(field: &CoefficientField<T>) -> Vec<Vec<T>> {
    let jmax = field.jmax() as usize;
    let mut sup: Vec<Vec<T>> = vec![Vec::new(); jmax + 1];
    sup[jmax] = field.scale(jmax as u32).to_vec();
    for j in (0..jmax).rev() {
        let (lo, hi) = sup.split_at_mut(j + 1);
        let below = &hi[0];
        lo[j] = field
            .scale(j as u32)
            .par_iter()
            .enumerate()
            .map(|(k, c)| c.max(below[2 * k]).max(below[2 * k + 1]))
            .collect();
    }
    sup
}

/// Leaders over the three neighbouring subtrees, without wrap at the ends of `[0,1]`.
pub fn compute_leaders<T: Scalar>(field: &CoefficientField<T>) -> LeaderField<T> {
    let sup = subtree_max(field);
    let values = sup
        .par_iter()
        .map(|row| {
            let n = row.len();
            (0..n)
                .map(|k| {
                    let mut d = row[k];
                    if k > 0 {
                        d = d.max(row[k - 1]);
                    }
                    if k + 1 < n {
                        d = d.max(row[k + 1]);
                    }
                    d
                })
                .collect()
        })
        .collect();
    LeaderField { jmax: field.jmax(), truncation_bias: bias_flags(field.jmax()), values }
}

/// `d_j(x)` for `j = 0..=jmax`.
pub fn leader_sequence_at<T: Scalar>(x: f64, lf: &LeaderField<T>) -> Result<Vec<T>> {
    (0..=lf.jmax()).map(|j| Ok(lf.get(j, DyadicIndex::containing(x, j)?.k))).collect()
}

/// `-log2(d)/j`, with `+inf` for a zero leader.
pub fn leader_exponent<T: Scalar>(d: T, j: u32) -> T {
    if d > T::zero() {
        -d.log2() / T::of(j as f64)
    } else {
        T::infinity()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderEstimate<T> {
    /// Windowed minimum of the per-scale exponents, `+inf` if every leader is zero.
    pub hhat: T,
    /// Least-squares slope of `-log2 d_j` against `j` over the nonzero leaders.
    pub slope: Option<T>,
    pub exponents: Vec<(u32, T)>,
}

pub fn holder_estimate<T: Scalar>(x: f64, lf: &LeaderField<T>, window: (u32, u32)) -> Result<HolderEstimate<T>> {
    let (j1, j2) = window;
    ensure!(j1 >= 1 && j1 <= j2, "empty scale window [{j1},{j2}]");
    ensure!(j2 <= lf.jmax(), "window end {j2} exceeds jmax {}", lf.jmax());
    let seq = leader_sequence_at(x, lf)?;
    let exponents: Vec<(u32, T)> = (j1..=j2).map(|j| (j, leader_exponent(seq[j as usize], j))).collect();
    let hhat = exponents.iter().map(|e| e.1).fold(T::infinity(), T::min);
    let pts: Vec<(T, T)> = (j1..=j2)
        .filter(|&j| seq[j as usize] > T::zero())
        .map(|j| (T::of(j as f64), -seq[j as usize].log2()))
        .collect();
    Ok(HolderEstimate { hhat, slope: crate::spectra::ls_slope(&pts), exponents })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldMeta;
    use crate::generators::*;

    #[test]
    fn constant_field() {
        let f = CoefficientField::<f64>::from_fn(8, FieldMeta::external("c"), |j, _| (-0.3 * j as f64).exp2());
        let lf = compute_leaders(&f);
        for j in 0..=8 {
            assert!(lf.scale(j).iter().all(|d| *d == f.get(j, 0)));
        }
        let h = holder_estimate(0.3, &lf, (2, 8)).unwrap();
        assert!((h.hhat - 0.3).abs() < 1e-12);
        assert!((h.slope.unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn slow_oscillation_leaders() {
        let f = gen_slow_oscillation::<f64>(0.5, 1.0, 18, None).unwrap();
        let lf = compute_leaders(&f);
        assert!(lf.scale(5).iter().all(|d| *d == 2f64.powi(-4)));
        let h = holder_estimate(0.37, &lf, (8, 17)).unwrap();
        assert!((h.hhat - 0.5).abs() < 0.05);
    }

    #[test]
    fn sequence_at_points() {
        let f = gen_two_exponent::<f64>(0.5, 1.0, 0.5, 14).unwrap();
        let lf = compute_leaders(&f);
        let s = leader_sequence_at(0.0, &lf).unwrap();
        assert!((0..=14).all(|j| s[j as usize] == lf.get(j, 0)));
        let s = leader_sequence_at(0.9, &lf).unwrap();
        assert_eq!(s[14], 2f64.powi(-14));
        let s = leader_sequence_at(0.5, &lf).unwrap();
        assert_eq!(s[1], lf.get(1, 1));
    }

    #[test]
    fn zero_leaders_are_infinite() {
        let f = CoefficientField::<f64>::zeros(6, FieldMeta::external("z"));
        let h = holder_estimate(0.2, &compute_leaders(&f), (1, 6)).unwrap();
        assert!(h.hhat.is_infinite() && h.slope.is_none());
        assert!(holder_estimate(0.2, &compute_leaders(&f), (4, 3)).is_err());
        assert!(holder_estimate(0.2, &compute_leaders(&f), (0, 3)).is_err());
    }

    #[test]
    fn bias_flags_cover_the_top_tenth() {
        let f = CoefficientField::<f64>::zeros(18, FieldMeta::external("z"));
        let lf = compute_leaders(&f);
        let flagged: Vec<u32> = (0..=18).filter(|&j| lf.truncation_bias(j)).collect();
        assert_eq!(flagged, vec![17, 18]);
    }
}
