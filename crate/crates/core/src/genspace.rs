//! Admissible weight sequences and the generalized Hölder spaces they define.
//!
//! Convention: `sigma_j` grows like `2^(s j)` while coefficients decay like
//! `2^(-s j)`; Boyd indices are reported on the growth scale. Sequences are
//! stored as `log2 sigma_j` since `2^16384` overflows every float.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, Result};
use crate::field::{CoefficientField, FieldMeta};
use crate::rng::KeyedRng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleSequence<T> {
    log2_sigma: Vec<T>,
    log2_c: T,
}

impl<T: Scalar> AdmissibleSequence<T> {
    /// From `log2 sigma_j`, `j = 0..=jmax`.
    pub fn from_log2(log2_sigma: Vec<T>) -> Result<Self> {
        ensure!(!log2_sigma.is_empty(), "empty sequence");
        ensure!(log2_sigma.iter().all(|s| s.is_finite()), "sequence must be positive and finite");
        let log2_c = log2_sigma.windows(2).map(|w| (w[1] - w[0]).abs()).fold(T::zero(), T::max);
        Ok(AdmissibleSequence { log2_sigma, log2_c })
    }

    pub fn from_sigma(sigma: &[T]) -> Result<Self> {
        ensure!(sigma.iter().all(|s| *s > T::zero()), "sequence must be positive");
        Self::from_log2(sigma.iter().map(|s| s.log2()).collect())
    }

    /// `sigma_j = 2^(s j)`.
    pub fn dyadic(s: T, jmax: u32) -> Self {
        Self::from_log2((0..=jmax).map(|j| s * T::of(j as f64)).collect()).unwrap()
    }

    pub fn jmax(&self) -> u32 {
        self.log2_sigma.len() as u32 - 1
    }

    pub fn log2_sigma(&self, j: u32) -> T {
        self.log2_sigma[j as usize]
    }

    pub fn log2_all(&self) -> &[T] {
        &self.log2_sigma
    }

    /// May overflow to `+inf` for long sequences.
    pub fn sigma(&self, j: u32) -> T {
        self.log2_sigma(j).exp2()
    }

    /// Smallest `C` with `C^-1 sigma_j <= sigma_{j+1} <= C sigma_j`.
    pub fn constant(&self) -> T {
        self.log2_c.exp2()
    }

    pub fn log2_constant(&self) -> T {
        self.log2_c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoydIndices<T> {
    pub lower: T,
    pub upper: T,
    /// `(j, log2 inf_k sigma_{j+k}/sigma_k / j)`.
    pub lower_profile: Vec<(u32, T)>,
    pub upper_profile: Vec<(u32, T)>,
}

/// Finite-range Boyd indices from the window `j in [jmax/4, jmax/2]`.
pub fn boyd_indices<T: Scalar>(seq: &AdmissibleSequence<T>) -> Result<BoydIndices<T>> {
    let jmax = seq.jmax() as usize;
    ensure!(jmax >= 64, "Boyd indices need jmax >= 64, got {jmax}");
    let ls = seq.log2_all();
    let rows: Vec<(u32, T, T)> = (jmax / 4..=jmax / 2)
        .into_par_iter()
        .map(|j| {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for k in 0..=jmax - j {
                let d = ls[j + k] - ls[k];
                lo = lo.min(d);
                hi = hi.max(d);
            }
            let jj = T::of(j as f64);
            (j as u32, lo / jj, hi / jj)
        })
        .collect();
    let lower = rows.iter().map(|r| r.1).fold(T::neg_infinity(), T::max);
    let upper = rows.iter().map(|r| r.2).fold(T::infinity(), T::min);
    Ok(BoydIndices {
        lower,
        upper,
        lower_profile: rows.iter().map(|r| (r.0, r.1)).collect(),
        upper_profile: rows.iter().map(|r| (r.0, r.2)).collect(),
    })
}

/// Log-linear `sigma` with slope `alpha` on the steps into scales `[2^n, 2^(n+1))`
/// for even `n` and slope `beta` for odd `n`; `sigma_0 = 1`.
pub fn make_oscillating<T: Scalar>(alpha: T, beta: T, jmax: u32) -> Result<AdmissibleSequence<T>> {
    ensure!(alpha > T::zero() && alpha <= beta, "need 0 < alpha <= beta");
    let mut ls = Vec::with_capacity(jmax as usize + 1);
    ls.push(T::zero());
    for j in 1..=jmax {
        let slope = if j.ilog2() % 2 == 0 { alpha } else { beta };
        ls.push(ls[j as usize - 1] + slope);
    }
    AdmissibleSequence::from_log2(ls)
}

fn check_range<T: Scalar>(field: &CoefficientField<T>, seq: &AdmissibleSequence<T>) -> Result<()> {
    ensure!(
        field.jmax() <= seq.jmax(),
        "field jmax {} exceeds sequence jmax {}",
        field.jmax(),
        seq.jmax()
    );
    Ok(())
}

/// `sup_j sup_k sigma_j |c_{j,k}|`.
pub fn lambda_sigma_norm<T: Scalar>(field: &CoefficientField<T>, seq: &AdmissibleSequence<T>) -> Result<T> {
    check_range(field, seq)?;
    let top = (0..=field.jmax())
        .flat_map(|j| field.scale(j).iter().filter(|c| **c > T::zero()).map(move |c| seq.log2_sigma(j) + c.log2()))
        .fold(T::neg_infinity(), T::max);
    Ok(top.exp2())
}

/// Projection onto the lattice `sigma_j 2^N c in {1, 2, 3, ...}`.
pub fn cn_project<T: Scalar>(field: &CoefficientField<T>, seq: &AdmissibleSequence<T>, n: u32) -> Result<CoefficientField<T>> {
    check_range(field, seq)?;
    let nn = T::of(n as f64);
    let mut out = field.map(|j, _, e| {
        let shift = seq.log2_sigma(j) + nn;
        let x = if e > T::zero() { (shift + e.log2()).exp2() } else { T::zero() };
        // lattice points must map to themselves despite the exp2/log2 round trip
        let r = x.round();
        let x = if (x - r).abs() <= T::of(1e-9) * r.max(T::one()) { r } else { x };
        let mult = if x >= T::of(2.0) { x.floor() } else { T::one() };
        mult * (-shift).exp2()
    });
    out.meta = FieldMeta::external("cn-projection");
    Ok(out)
}

/// Cell and value of `sigma_j |e_{j,k}|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuiteWitness<T> {
    pub j: u32,
    pub k: u64,
    pub weighted: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteBound<T> {
    /// Smallest `C >= 1` with `C^-1 <= sigma_j |e| <= C` everywhere.
    pub c: T,
    pub smallest: SuiteWitness<T>,
    pub largest: SuiteWitness<T>,
}

pub fn leadersuite_check<T: Scalar>(field: &CoefficientField<T>, seq: &AdmissibleSequence<T>) -> Result<SuiteBound<T>> {
    check_range(field, seq)?;
    let mut lo: Option<(u32, u64, T)> = None;
    let mut hi: Option<(u32, u64, T)> = None;
    for j in 0..=field.jmax() {
        for (k, e) in field.scale(j).iter().enumerate() {
            ensure!(*e > T::zero(), "zero coefficient at ({j},{k}): the bound is unbounded");
            let t = seq.log2_sigma(j) + e.log2();
            if lo.is_none_or(|w| t < w.2) {
                lo = Some((j, k as u64, t));
            }
            if hi.is_none_or(|w| t > w.2) {
                hi = Some((j, k as u64, t));
            }
        }
    }
    let (lo, hi) = (lo.unwrap(), hi.unwrap());
    let c = (-lo.2).max(hi.2).max(T::zero()).exp2();
    let w = |x: (u32, u64, T)| SuiteWitness { j: x.0, k: x.1, weighted: x.2.exp2() };
    Ok(SuiteBound { c, smallest: w(lo), largest: w(hi) })
}

/// `e_{j,k} = sigma_j^-1 u_{j,k}` with `u` uniform on `[1/2, 1)`: a point of the unit ball.
pub fn unit_ball_field<T: Scalar>(seq: &AdmissibleSequence<T>, jmax: u32, seed: u64) -> Result<CoefficientField<T>> {
    ensure!(jmax <= seq.jmax(), "field jmax {jmax} exceeds sequence jmax {}", seq.jmax());
    let rng = KeyedRng::new(seed);
    let meta = FieldMeta { construction: crate::generators::Construction::External { name: "unit-ball".into() }, seed: Some(seed) };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        T::of(0.5 + 0.5 * rng.uniform(j, k)) * (-seq.log2_sigma(j)).exp2()
    }))
}
