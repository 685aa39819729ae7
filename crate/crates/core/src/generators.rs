//! Coefficient fields of the counter-example constructions.

use std::collections::HashSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::dyadic::{cantor_dimension, cells_inside, cells_meeting_set, cantor_stage, gamma_j, CantorSpec};
use crate::error::{ensure, Result};
use crate::field::{CoefficientField, FieldMeta};
use crate::leaders::subtree_max;
use crate::rng::KeyedRng;
use crate::scalar::Scalar;

/// Success probability of the lacunary Bernoulli selectors at scale `j`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BernoulliLaw {
    /// `2^((eta - dim) j)`, clamped to 1.
    Nominal,
    /// `2^(eta j) / #Gamma_j`, clamped to 1, so that `E #F_j = 2^(eta j)` at every scale.
    #[default]
    Normalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowVariant {
    pub gamma: f64,
    pub cantor: CantorSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "construction")]
pub enum Construction {
    TwoExponent { alpha: f64, beta: f64, eta: f64 },
    ThreeExponent { alpha: f64, beta: f64, gamma: f64, eta: f64, c: f64 },
    AsymmetricCantor { alpha: f64, beta: f64 },
    Duplicate { m: f64, source: Box<Construction> },
    SlowOscillation {
        alpha: f64,
        beta: f64,
        #[serde(default)]
        variant: Option<SlowVariant>,
    },
    LwsCantor {
        r: Ratio<i64>,
        alpha: f64,
        eta: f64,
        #[serde(default)]
        law: BernoulliLaw,
    },
    DuplicatedLws {
        alpha: f64,
        eta: f64,
        #[serde(default)]
        law: BernoulliLaw,
    },
    BackgroundFill { gamma: f64, base: Box<Construction> },
    /// Data with no closed-form description.
    External { name: String },
}

impl Construction {
    pub fn name(&self) -> &'static str {
        match self {
            Construction::TwoExponent { .. } => "two-exponent",
            Construction::ThreeExponent { .. } => "three-exponent",
            Construction::AsymmetricCantor { .. } => "asymmetric-cantor",
            Construction::Duplicate { .. } => "duplicate",
            Construction::SlowOscillation { .. } => "slow-oscillation",
            Construction::LwsCantor { .. } => "lws-cantor",
            Construction::DuplicatedLws { .. } => "duplicated-lws",
            Construction::BackgroundFill { .. } => "background-fill",
            Construction::External { .. } => "external",
        }
    }

    pub fn is_random(&self) -> bool {
        match self {
            Construction::LwsCantor { .. } | Construction::DuplicatedLws { .. } => true,
            Construction::Duplicate { source, .. } => source.is_random(),
            Construction::BackgroundFill { base, .. } => base.is_random(),
            _ => false,
        }
    }

    /// Checks the per-construction parameter constraints.
    pub fn validate(&self) -> Result<()> {
        match self {
            Construction::TwoExponent { alpha, beta, eta } => {
                ensure!(*alpha > 0.0 && alpha < beta, "need 0 < alpha < beta, got alpha={alpha}, beta={beta}");
                ensure!(*eta > 0.0 && *eta < 1.0, "eta {eta} outside (0,1)");
            }
            Construction::ThreeExponent { alpha, beta, gamma, eta, c } => {
                ensure!(*alpha > 0.0 && alpha < beta && beta < gamma, "need 0 < alpha < beta < gamma");
                ensure!(*eta > 0.0 && *eta < 1.0, "eta {eta} outside (0,1)");
                let top = (1.0 - eta).exp2();
                ensure!(*c > 1.0 && *c < top, "C {c} outside (1, 2^(1-eta)) = (1, {top})");
            }
            Construction::AsymmetricCantor { alpha, beta } => {
                ensure!(*alpha > 0.0 && alpha < beta, "need 0 < alpha < beta, got alpha={alpha}, beta={beta}");
            }
            Construction::Duplicate { m, source } => {
                ensure!(*m > 1.0 && m.is_finite(), "duplication ratio m={m} must exceed 1");
                source.validate()?;
            }
            Construction::SlowOscillation { alpha, beta, variant } => {
                ensure!(*alpha > 0.0 && alpha < beta, "need 0 < alpha < beta, got alpha={alpha}, beta={beta}");
                slow_ratio(*alpha, *beta)?;
                if let Some(v) = variant {
                    ensure!(v.gamma > *beta, "variant gamma {} must exceed beta {beta}", v.gamma);
                    v.cantor.validate()?;
                }
            }
            Construction::LwsCantor { r, alpha, eta, .. } => {
                let spec = CantorSpec::symmetric(*r)?;
                let dim = cantor_dimension(&spec);
                ensure!(*alpha > 0.0, "alpha {alpha} must be positive");
                ensure!(*eta > 0.0 && *eta < dim, "eta {eta} outside (0, {dim})");
            }
            Construction::DuplicatedLws { alpha, eta, .. } => {
                ensure!(*alpha > 0.0, "alpha {alpha} must be positive");
                ensure!(*eta > 0.0 && *eta < 0.75, "\u{3b7} \u{2209} (0,3/4): eta = {eta}");
            }
            Construction::BackgroundFill { gamma, base } => {
                base.validate()?;
                if let Some(top) = crate::oracles::max_finite_exponent(base) {
                    ensure!(*gamma > top, "background gamma {gamma} must exceed the maximal exponent {top}");
                }
            }
            Construction::External { .. } => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub construction: Construction,
    pub jmax: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl GeneratorSpec {
    pub fn new(construction: Construction, jmax: u32) -> Self {
        GeneratorSpec { construction, jmax, seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn build<T: Scalar>(&self) -> Result<CoefficientField<T>> {
        build(&self.construction, self.jmax, self.seed)
    }
}

fn build<T: Scalar>(c: &Construction, jmax: u32, seed: Option<u64>) -> Result<CoefficientField<T>> {
    ensure!(jmax <= 26, "jmax {jmax} is beyond the supported range");
    let need_seed = || match seed {
        Some(s) => Ok(s),
        None => Err(crate::Error::pre(format!("{} needs a seed", c.name()))),
    };
    match c {
        Construction::TwoExponent { alpha, beta, eta } => gen_two_exponent(*alpha, *beta, *eta, jmax),
        Construction::ThreeExponent { alpha, beta, gamma, eta, c } => {
            gen_three_exponent(*alpha, *beta, *gamma, *eta, *c, jmax)
        }
        Construction::AsymmetricCantor { alpha, beta } => gen_asymmetric_cantor(*alpha, *beta, jmax),
        Construction::Duplicate { m, source } => {
            source.validate()?;
            let src = build::<T>(source, jmax, seed)?;
            gen_duplicate(&src, *m)
        }
        Construction::SlowOscillation { alpha, beta, variant } => {
            gen_slow_oscillation(*alpha, *beta, jmax, variant.as_ref())
        }
        Construction::LwsCantor { r, alpha, eta, law } => gen_lws_cantor_with(*r, *alpha, *eta, need_seed()?, jmax, *law),
        Construction::DuplicatedLws { alpha, eta, law } => gen_duplicated_lws_with(*alpha, *eta, need_seed()?, jmax, *law),
        Construction::BackgroundFill { gamma, base } => {
            let f = build::<T>(base, jmax, seed)?;
            background_fill(&f, *gamma)
        }
        Construction::External { name } => Err(crate::Error::pre(format!("external field '{name}' cannot be generated"))),
    }
}

fn pow2<T: Scalar>(e: f64) -> T {
    T::of(e).exp2()
}

/// `floor(x 2^(eta j))` computed in f64.
fn block(x: f64, eta: f64, j: u32) -> u64 {
    (x * (eta * j as f64).exp2()).floor() as u64
}

pub fn gen_two_exponent<T: Scalar>(alpha: f64, beta: f64, eta: f64, jmax: u32) -> Result<CoefficientField<T>> {
    let c = Construction::TwoExponent { alpha, beta, eta };
    c.validate()?;
    let meta = FieldMeta { construction: c, seed: None };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        let e = if k < block(1.0, eta, j) { alpha } else { beta };
        pow2(-e * j as f64)
    }))
}

pub fn gen_three_exponent<T: Scalar>(
    alpha: f64,
    beta: f64,
    gamma: f64,
    eta: f64,
    c: f64,
    jmax: u32,
) -> Result<CoefficientField<T>> {
    let con = Construction::ThreeExponent { alpha, beta, gamma, eta, c };
    con.validate()?;
    let meta = FieldMeta { construction: con, seed: None };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        let e = if k < block(1.0, eta, j) {
            alpha
        } else if k < block(c, eta, j) {
            beta
        } else {
            gamma
        };
        pow2(-e * j as f64)
    }))
}

/// Exponent `alpha` on cells inside stage `floor(j/2)` of the asymmetric set, `beta` elsewhere.
pub fn gen_asymmetric_cantor<T: Scalar>(alpha: f64, beta: f64, jmax: u32) -> Result<CoefficientField<T>> {
    let con = Construction::AsymmetricCantor { alpha, beta };
    con.validate()?;
    let spec = CantorSpec::asymmetric_quarter();
    let inside: Vec<HashSet<u64>> = (0..=jmax)
        .map(|j| Ok(gamma_j(&spec, j)?.into_iter().map(|c| c.k).collect()))
        .collect::<Result<_>>()?;
    let meta = FieldMeta { construction: con, seed: None };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        let e = if inside[j as usize].contains(&k) { alpha } else { beta };
        pow2(-e * j as f64)
    }))
}

/// `C^m_{j,k}`: supremum of the source over the cell `(floor(j/m), k >> (j - floor(j/m)))`.
pub fn gen_duplicate<T: Scalar>(src: &CoefficientField<T>, m: f64) -> Result<CoefficientField<T>> {
    gen_duplicate_to(src, m, src.jmax())
}

pub fn gen_duplicate_to<T: Scalar>(src: &CoefficientField<T>, m: f64, jmax: u32) -> Result<CoefficientField<T>> {
    ensure!(m > 1.0 && m.is_finite(), "duplication ratio m={m} must exceed 1");
    ensure!(
        coarse_scale(jmax, m) <= src.jmax(),
        "target jmax {jmax} needs source scales up to {}, source stops at {}",
        coarse_scale(jmax, m),
        src.jmax()
    );
    if jmax > src.jmax() {
        log::warn!("duplicate: target jmax {jmax} exceeds source jmax {}; sups are truncated", src.jmax());
    }
    let sup = subtree_max(src);
    let meta = FieldMeta {
        construction: Construction::Duplicate { m, source: Box::new(src.meta.construction.clone()) },
        seed: src.meta.seed,
    };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        let jc = coarse_scale(j, m);
        sup[jc as usize][(k >> (j - jc)) as usize]
    }))
}

pub fn coarse_scale(j: u32, m: f64) -> u32 {
    (j as f64 / m).floor() as u32
}

fn slow_ratio(alpha: f64, beta: f64) -> Result<u64> {
    let m = beta / alpha;
    let rounded = m.round();
    ensure!(
        (m - rounded).abs() < 1e-9 && rounded >= 2.0,
        "beta/alpha = {m} is not an integer >= 2"
    );
    Ok(rounded as u64)
}

/// The scales `m^n`, `n >= 0`, up to `jmax`.
pub fn oscillation_scales(m: u64, jmax: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut s = 1u64;
    while s <= jmax as u64 {
        out.push(s as u32);
        s *= m;
    }
    out
}

pub fn gen_slow_oscillation<T: Scalar>(
    alpha: f64,
    beta: f64,
    jmax: u32,
    variant: Option<&SlowVariant>,
) -> Result<CoefficientField<T>> {
    let con = Construction::SlowOscillation { alpha, beta, variant: variant.cloned() };
    con.validate()?;
    let m = slow_ratio(alpha, beta)?;
    let special = oscillation_scales(m, jmax);
    let on_cantor: Vec<HashSet<u64>> = match variant {
        Some(v) => (0..=jmax)
            .map(|j| Ok(cells_meeting_set(&v.cantor, j)?.into_iter().map(|c| c.k).collect()))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let meta = FieldMeta { construction: con, seed: None };
    Ok(CoefficientField::from_fn(jmax, meta, |j, k| {
        let fast = special.contains(&j);
        let e = match variant {
            None if fast => alpha,
            None => beta,
            // off the set at every scale
            Some(v) if !on_cantor[j as usize].contains(&k) => v.gamma,
            Some(_) if fast => alpha,
            Some(_) => beta,
        };
        pow2(-e * j as f64)
    }))
}

#[allow(clippy::too_many_arguments)]
fn lacunary<T: Scalar>(
    spec: &CantorSpec,
    dim: f64,
    alpha: f64,
    eta: f64,
    seed: u64,
    jmax: u32,
    law: BernoulliLaw,
    con: Construction,
) -> Result<CoefficientField<T>> {
    let rng = KeyedRng::new(seed);
    let mut rows = Vec::with_capacity(jmax as usize + 1);
    for j in 0..=jmax {
        let stage = cantor_stage(spec, spec.stage_for_scale(j))?;
        let cells = cells_inside(&stage, j);
        let p = match law {
            BernoulliLaw::Nominal => ((eta - dim) * j as f64).exp2(),
            BernoulliLaw::Normalized => (eta * j as f64).exp2() / cells.len().max(1) as f64,
        };
        let value: T = pow2(-alpha * j as f64);
        let mut row = vec![T::zero(); 1 << j];
        for c in cells {
            if rng.bernoulli(j, c.k, p) {
                row[c.k as usize] = value;
            }
        }
        rows.push(row);
    }
    CoefficientField::new(rows, FieldMeta { construction: con, seed: Some(seed) })
}

/// Lacunary series on `C(r)` with the default normalized Bernoulli law.
pub fn gen_lws_cantor<T: Scalar>(r: Ratio<i64>, alpha: f64, eta: f64, seed: u64, jmax: u32) -> Result<CoefficientField<T>> {
    gen_lws_cantor_with(r, alpha, eta, seed, jmax, BernoulliLaw::default())
}

pub fn gen_lws_cantor_with<T: Scalar>(
    r: Ratio<i64>,
    alpha: f64,
    eta: f64,
    seed: u64,
    jmax: u32,
    law: BernoulliLaw,
) -> Result<CoefficientField<T>> {
    let con = Construction::LwsCantor { r, alpha, eta, law };
    con.validate()?;
    let spec = CantorSpec::symmetric(r)?;
    lacunary(&spec, cantor_dimension(&spec), alpha, eta, seed, jmax, law, con)
}

/// Lacunary series on `C(1/4)` with stage `floor(j/4)`.
pub fn gen_duplicated_lws<T: Scalar>(alpha: f64, eta: f64, seed: u64, jmax: u32) -> Result<CoefficientField<T>> {
    gen_duplicated_lws_with(alpha, eta, seed, jmax, BernoulliLaw::default())
}

pub fn gen_duplicated_lws_with<T: Scalar>(
    alpha: f64,
    eta: f64,
    seed: u64,
    jmax: u32,
    law: BernoulliLaw,
) -> Result<CoefficientField<T>> {
    let con = Construction::DuplicatedLws { alpha, eta, law };
    con.validate()?;
    lacunary(&CantorSpec::quarter_duplicated(), 0.75, alpha, eta, seed, jmax, law, con)
}

/// Replaces every zero at scale `j` by `2^(-gamma j)`.
pub fn background_fill<T: Scalar>(field: &CoefficientField<T>, gamma: f64) -> Result<CoefficientField<T>> {
    let top = match crate::oracles::max_finite_exponent(&field.meta.construction) {
        Some(top) => top,
        None => observed_max_exponent(field),
    };
    ensure!(gamma > top, "background gamma {gamma} must exceed the maximal exponent {top}");
    let mut out = field.map(|j, _, c| if c > T::zero() { c } else { pow2(-gamma * j as f64) });
    out.meta.construction = Construction::BackgroundFill { gamma, base: Box::new(field.meta.construction.clone()) };
    Ok(out)
}

/// Largest `-log2|c|/j` over the nonzero coefficients with `j >= 1`.
fn observed_max_exponent<T: Scalar>(field: &CoefficientField<T>) -> f64 {
    (1..=field.jmax())
        .flat_map(|j| field.scale(j).iter().filter(|c| **c > T::zero()).map(move |c| -c.f64().log2() / j as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(row: &[f64], v: f64) -> usize {
        row.iter().filter(|c| **c == v).count()
    }

    #[test]
    fn two_exponent_counts() {
        let f = gen_two_exponent::<f64>(0.5, 1.0, 0.5, 12).unwrap();
        assert_eq!(count(f.scale(10), 2f64.powi(-5)), 32);
        assert_eq!(f.scale(0), &[1.0]);
        for j in 0..=12 {
            let want = (0.5 * j as f64).exp2().floor() as usize;
            assert_eq!(count(f.scale(j), (-0.5 * j as f64).exp2()), want);
        }
        assert!(gen_two_exponent::<f64>(1.0, 1.0, 0.5, 4).is_err());
    }

    #[test]
    fn three_exponent_counts() {
        let f = gen_three_exponent::<f64>(0.3, 0.6, 1.0, 0.5, 1.3, 8).unwrap();
        assert_eq!(count(f.scale(8), (-0.3f64 * 8.0).exp2()), 16);
        assert_eq!(count(f.scale(8), (-0.6f64 * 8.0).exp2()), 4);
        assert!(gen_three_exponent::<f64>(0.3, 0.6, 1.0, 0.5, 1.5, 8).is_err());
        assert!(gen_three_exponent::<f64>(0.3, 0.6, 1.0, 0.5, 1.0, 8).is_err());
    }

    #[test]
    fn three_exponent_near_one_has_no_beta_at_small_scales() {
        let f = gen_three_exponent::<f64>(0.3, 0.6, 1.0, 0.5, 1.01, 6).unwrap();
        for j in 1..=6 {
            assert_eq!(count(f.scale(j), (-0.6 * j as f64).exp2()), 0, "j = {j}");
        }
    }

    #[test]
    fn asymmetric_counts() {
        let f = gen_asymmetric_cantor::<f64>(0.5, 1.0, 16).unwrap();
        for n in 0..=8u32 {
            let j = 2 * n;
            assert_eq!(count(f.scale(j), (-0.5 * j as f64).exp2()), 3usize.pow(n), "j = {j}");
        }
        assert_eq!(f.scale(0), &[1.0]);
    }

    #[test]
    fn slow_scales() {
        let f = gen_slow_oscillation::<f64>(0.5, 1.0, 18, None).unwrap();
        for j in 0..=18u32 {
            let e = if [1, 2, 4, 8, 16].contains(&j) { 0.5 } else { 1.0 };
            assert!(f.scale(j).iter().all(|c| *c == (-e * j as f64).exp2()), "j = {j}");
        }
        assert!(gen_slow_oscillation::<f64>(0.4, 1.0, 8, None).is_err());
    }

    #[test]
    fn slow_variant_places_gamma_off_the_set() {
        let v = SlowVariant { gamma: 2.0, cantor: CantorSpec::symmetric(Ratio::new(1, 4)).unwrap() };
        let f = gen_slow_oscillation::<f64>(0.5, 1.0, 8, Some(&v)).unwrap();
        // cells of width 1/16 meeting C(1/4): stage 2 intervals have width 1/16
        assert_eq!(count(f.scale(4), 0.25), 4);
        assert_eq!(count(f.scale(4), 2f64.powi(-8)), 12);
        let on = f.scale(5).iter().filter(|c| **c == 2f64.powi(-5)).count();
        assert_eq!(on + count(f.scale(5), 2f64.powi(-10)), 32);
        assert!(on > 0 && on < 32);
    }

    #[test]
    fn duplicate_coarse_index() {
        let src = gen_asymmetric_cantor::<f64>(0.5, 1.0, 8).unwrap();
        let g = gen_duplicate(&src, 2.0).unwrap();
        let sup = subtree_max(&src);
        assert_eq!(g.get(7, 100), sup[3][6]);
        let flat = CoefficientField::<f64>::from_fn(10, FieldMeta::external("c"), |j, _| (-0.5 * j as f64).exp2());
        let g = gen_duplicate(&flat, 2.0).unwrap();
        for j in 0..=10 {
            assert!(g.scale(j).iter().all(|c| *c == (-0.5 * (j / 2) as f64).exp2()));
        }
        assert!(gen_duplicate(&flat, 1.0).is_err());
        assert!(gen_duplicate_to(&flat, 2.0, 22).is_err());
    }

    #[test]
    fn lacunary_support_and_determinism() {
        let spec = CantorSpec::symmetric(Ratio::new(1, 3)).unwrap();
        let a = gen_lws_cantor::<f64>(Ratio::new(1, 3), 0.5, 0.4, 11, 12).unwrap();
        let b = gen_lws_cantor::<f64>(Ratio::new(1, 3), 0.5, 0.4, 11, 12).unwrap();
        assert_eq!(a, b);
        for j in 0..=12 {
            let gamma: HashSet<u64> = gamma_j(&spec, j).unwrap().into_iter().map(|c| c.k).collect();
            assert!(a.scale(j).iter().enumerate().all(|(k, c)| *c == 0.0 || gamma.contains(&(k as u64))));
        }
        assert!(gen_lws_cantor::<f64>(Ratio::new(1, 3), 0.5, 0.7, 1, 4).is_err());
        assert!(gen_duplicated_lws::<f64>(0.4, 0.8, 1, 4).is_err());
    }

    #[test]
    fn background_fill_counts() {
        let f = gen_duplicated_lws::<f64>(0.4, 0.5, 3, 10).unwrap();
        let filled = background_fill(&f, 2.0).unwrap();
        for j in 0..=10 {
            let changed = (0..1u64 << j).filter(|&k| f.get(j, k) != filled.get(j, k)).count();
            assert_eq!(changed, (1 << j) - f.nonzero_count(j));
        }
        assert!(background_fill(&f, 0.5).is_err());
        let zero = CoefficientField::<f64>::zeros(5, FieldMeta::external("zero"));
        let filled = background_fill(&zero, 1.0).unwrap();
        assert!((0..=5).all(|j| filled.scale(j).iter().all(|c| *c == (-(j as f64)).exp2())));
    }
}
