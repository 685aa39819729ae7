//! Closed-form spectra of the constructions and formalism verdicts.

use serde::Serialize;

use crate::dyadic::{cantor_dimension, CantorSpec};
use crate::error::{Error, Result};
use crate::generators::Construction;
use crate::scalar::{Scalar, EDGE_TOL};
use crate::spectra::{concave_hull, SpectrumCurve, SpectrumKind};

/// `value = a + b h` on `[lo, hi]`; a point when `lo == hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Piece {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Piece {
    fn point(h: f64, v: f64) -> Self {
        Piece { lo: h, hi: h, a: v, b: 0.0 }
    }

    fn line(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        Piece { lo, hi, a, b }
    }

    fn eval(&self, h: f64) -> Option<f64> {
        (h >= self.lo - EDGE_TOL && h <= self.hi + EDGE_TOL).then_some(self.a + self.b * h)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct ClosedForm {
    d: Vec<Piece>,
    rho: Vec<Piece>,
    d_inf: f64,
    rho_inf: f64,
}

fn eval(pieces: &[Piece], h: f64) -> f64 {
    pieces.iter().filter_map(|p| p.eval(h)).fold(f64::NEG_INFINITY, f64::max)
}

fn closed_form(c: &Construction) -> Result<ClosedForm> {
    c.validate()?;
    let none = f64::NEG_INFINITY;
    Ok(match c {
        Construction::TwoExponent { alpha, beta, eta } => ClosedForm {
            d: vec![Piece::point(*alpha, 0.0), Piece::point(*beta, 1.0)],
            rho: vec![Piece::point(*alpha, *eta), Piece::point(*beta, 1.0)],
            d_inf: none,
            rho_inf: none,
        },
        Construction::ThreeExponent { alpha, beta, gamma, eta, .. } => ClosedForm {
            d: vec![Piece::point(*alpha, 0.0), Piece::point(*gamma, 1.0)],
            rho: vec![Piece::point(*alpha, *eta), Piece::point(*beta, *eta), Piece::point(*gamma, 1.0)],
            d_inf: none,
            rho_inf: none,
        },
        Construction::AsymmetricCantor { alpha, beta } => ClosedForm {
            d: vec![Piece::point(*alpha, cantor_dimension(&CantorSpec::asymmetric_quarter())), Piece::point(*beta, 1.0)],
            rho: vec![Piece::point(*alpha, 3f64.log2() / 2.0), Piece::point(*beta, 1.0)],
            d_inf: none,
            rho_inf: none,
        },
        Construction::Duplicate { m, source } => {
            let src = closed_form(source)?;
            let shrink = |p: &Piece| Piece { lo: p.lo / m, hi: p.hi / m, a: p.a, b: p.b * m };
            ClosedForm {
                d: src.d.iter().map(shrink).collect(),
                rho: src
                    .rho
                    .iter()
                    .map(|p| {
                        let q = shrink(p);
                        Piece { a: (m - 1.0 + q.a) / m, b: q.b / m, ..q }
                    })
                    .collect(),
                d_inf: src.d_inf,
                rho_inf: if src.rho_inf.is_finite() { (m - 1.0 + src.rho_inf) / m } else { none },
            }
        }
        Construction::SlowOscillation { alpha, beta, variant } => match variant {
            None => ClosedForm {
                d: vec![Piece::point(*alpha, 1.0)],
                rho: vec![Piece::line(*alpha, *beta, 1.0, 0.0)],
                d_inf: none,
                rho_inf: none,
            },
            Some(v) => {
                let dim = cantor_dimension(&v.cantor);
                ClosedForm {
                    d: vec![Piece::point(*alpha, dim), Piece::point(v.gamma, 1.0)],
                    rho: vec![Piece::line(*alpha, *beta, dim, 0.0), Piece::point(v.gamma, 1.0)],
                    d_inf: none,
                    rho_inf: none,
                }
            }
        },
        Construction::LwsCantor { r, alpha, eta, .. } => {
            let gamma = cantor_dimension(&CantorSpec::symmetric(*r)?);
            let lin = Piece::line(*alpha, alpha * gamma / eta, 0.0, eta / alpha);
            ClosedForm { d: vec![lin], rho: vec![lin], d_inf: 1.0, rho_inf: 1.0 }
        }
        Construction::DuplicatedLws { alpha, eta, .. } => {
            let rho = Piece::line(*alpha, if *eta >= 0.25 { alpha / (eta + 0.25) } else { alpha / (2.0 * eta) }, 0.0, eta / alpha);
            let d = if *eta >= 0.25 {
                vec![Piece::line(*alpha, alpha / (eta + 0.25), -0.5, (eta + 0.25) / alpha)]
            } else {
                vec![
                    Piece::line(2.0 * alpha / (4.0 * eta + 1.0), 2.0 * alpha, -0.5, (eta + 0.25) / alpha),
                    Piece::line(2.0 * alpha, alpha / (2.0 * eta), 0.0, eta / alpha),
                ]
            };
            ClosedForm { d, rho: vec![rho], d_inf: 1.0, rho_inf: 1.0 }
        }
        Construction::BackgroundFill { gamma, base } => {
            let mut f = closed_form(base)?;
            f.d.push(Piece::point(*gamma, 1.0));
            f.rho.push(Piece::point(*gamma, 1.0));
            f.d_inf = none;
            f.rho_inf = none;
            f
        }
        Construction::External { name } => {
            return Err(Error::pre(format!("no closed-form spectrum for external field '{name}'")))
        }
    })
}

/// Support endpoints and isolated points; estimator grids should contain them.
pub fn breakpoints(c: &Construction) -> Result<Vec<f64>> {
    let f = closed_form(c)?;
    let mut out: Vec<f64> = f.d.iter().chain(&f.rho).flat_map(|p| [p.lo, p.hi]).collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| (*a - *b).abs() <= EDGE_TOL);
    Ok(out)
}

/// Largest finite exponent carried by the construction, if it has a closed form.
pub fn max_finite_exponent(c: &Construction) -> Option<f64> {
    closed_form(c).ok().map(|f| f.d.iter().chain(&f.rho).map(|p| p.hi).fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpectra<T> {
    pub d: SpectrumCurve<T>,
    pub rho: SpectrumCurve<T>,
    pub l: SpectrumCurve<T>,
    /// Values at `h = +inf`.
    pub d_infinity: T,
    pub rho_infinity: T,
    /// Largest `rho - D` where both are finite.
    pub failure_gap: T,
    /// Some grid point has finite `rho` but `D = -inf`.
    pub support_mismatch: bool,
}

pub fn oracle<T: Scalar>(c: &Construction, grid: &[T]) -> Result<OracleSpectra<T>> {
    let f = closed_form(c)?;
    let sample = |pieces: &[Piece], kind| {
        let values = grid.iter().map(|h| T::of(eval(pieces, h.f64()))).collect();
        SpectrumCurve::new(grid.to_vec(), values, kind)
    };
    let d = sample(&f.d, SpectrumKind::OracleD)?;
    let rho = sample(&f.rho, SpectrumKind::OracleRho)?;
    let l = concave_hull(&rho).with_kind(SpectrumKind::OracleL);
    let mut failure_gap = T::neg_infinity();
    let mut support_mismatch = false;
    for i in 0..grid.len() {
        match (d.is_finite_at(i), rho.is_finite_at(i)) {
            (true, true) => failure_gap = failure_gap.max(rho.values[i] - d.values[i]),
            (false, true) => support_mismatch = true,
            _ => {}
        }
    }
    Ok(OracleSpectra {
        d,
        rho,
        l,
        d_infinity: T::of(f.d_inf),
        rho_infinity: T::of(f.rho_inf),
        failure_gap,
        support_mismatch,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Valid,
    Invalid,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CompareReport {
    /// Largest `|estimate - reference|` over the joint finite support.
    pub sup_distance: Option<f64>,
    pub witness_h: Option<f64>,
    pub verdict: Verdict,
    /// Fraction of grid points finite on exactly one side, farther than the support
    /// tolerance from the other curve's support.
    pub support_mismatch: f64,
    /// The mismatched point farthest from the other support, with that distance.
    pub mismatch_witness: Option<(f64, f64)>,
    pub tol: f64,
}

/// Verdict tolerances: values within `tol`, supports within `support_tol` in `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompareOptions {
    pub tol: f64,
    pub support_tol: f64,
}

impl CompareOptions {
    pub fn new(tol: f64) -> Self {
        CompareOptions { tol, support_tol: 2.0 * tol }
    }
}

fn distance_to_support<T: Scalar>(h: T, curve: &SpectrumCurve<T>) -> f64 {
    (0..curve.len())
        .filter(|&i| curve.is_finite_at(i))
        .map(|i| (curve.grid[i] - h).abs().f64())
        .fold(f64::INFINITY, f64::min)
}

pub fn compare<T: Scalar>(
    estimate: &SpectrumCurve<T>,
    reference: &SpectrumCurve<T>,
    opts: CompareOptions,
) -> Result<CompareReport> {
    if !estimate.same_grid(reference) {
        return Err(Error::Mismatch("estimate and reference are sampled on different grids".into()));
    }
    let joint = crate::spectra::sup_distance(estimate, reference, None);
    let mut mismatched = 0usize;
    let mut worst: Option<(f64, f64)> = None;
    for i in 0..estimate.len() {
        let (a, b) = (estimate.is_finite_at(i), reference.is_finite_at(i));
        if a == b {
            continue;
        }
        let other = if a { reference } else { estimate };
        let dist = distance_to_support(estimate.grid[i], other);
        if dist > opts.support_tol {
            mismatched += 1;
            if worst.is_none_or(|w| dist > w.1) {
                worst = Some((estimate.grid[i].f64(), dist));
            }
        }
    }
    let gap = joint.map(|(g, h)| (g.f64(), h.f64()));
    let value_fail = gap.is_some_and(|(g, _)| g > opts.tol);
    let verdict = if value_fail || worst.is_some() { Verdict::Invalid } else { Verdict::Valid };
    let witness_h = match (value_fail, worst) {
        (true, _) | (false, None) => gap.map(|g| g.1),
        (false, Some(w)) => Some(w.0),
    };
    Ok(CompareReport {
        sup_distance: gap.map(|g| g.0),
        witness_h,
        verdict,
        support_mismatch: mismatched as f64 / estimate.len().max(1) as f64,
        mismatch_witness: worst,
        tol: opts.tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::BernoulliLaw;
    use crate::spectra::{linspace, merge_grid};
    use num_rational::Ratio;

    fn grid_for(c: &Construction, lo: f64, hi: f64) -> Vec<f64> {
        merge_grid(&linspace(lo, hi, 121), &breakpoints(c).unwrap())
    }

    fn ordered(o: &OracleSpectra<f64>) -> bool {
        (0..o.d.len()).all(|i| o.d.values[i] <= o.rho.values[i] + 1e-12 && o.rho.values[i] <= o.l.values[i] + 1e-12)
    }

    #[test]
    fn duplicated_lws_regime_one() {
        let c = Construction::DuplicatedLws { alpha: 0.4, eta: 0.5, law: BernoulliLaw::Normalized };
        let g = grid_for(&c, 0.3, 0.7);
        let o = oracle(&c, &g).unwrap();
        assert!((o.d.at(0.4) - 0.25).abs() < 1e-12);
        assert!((o.rho.at(0.4) - 0.5).abs() < 1e-12);
        assert_eq!(o.d.support().unwrap(), (0.4, 0.4 / 0.75));
        assert!((o.failure_gap - 0.25).abs() < 1e-12);
        assert!(ordered(&o));
        assert_eq!(o.d_infinity, 1.0);
    }

    #[test]
    fn duplicated_lws_regime_two() {
        let c = Construction::DuplicatedLws { alpha: 0.4, eta: 0.2, law: BernoulliLaw::Normalized };
        let g = grid_for(&c, 0.3, 1.1);
        let o = oracle(&c, &g).unwrap();
        assert!((o.d.support().unwrap().0 - 0.4 / 0.9).abs() < 1e-12);
        assert!((o.d.at(0.6) - (1.125 * 0.6 - 0.5)).abs() < 1e-12);
        assert!((o.d.at(0.9) - 0.45).abs() < 1e-12);
        assert!((o.rho.at(0.4) - 0.2).abs() < 1e-12);
        assert!((o.rho.at(1.0) - 0.5).abs() < 1e-12);
        assert!(o.support_mismatch);
        assert!(ordered(&o));
        // the two pieces of D already form a concave curve
        let hull = concave_hull(&o.d);
        assert!((0..g.len()).all(|i| (hull.values[i] == o.d.values[i]) || (hull.values[i] - o.d.values[i]).abs() < 1e-12));
    }

    #[test]
    fn lws_oracle() {
        let c = Construction::LwsCantor { r: Ratio::new(1, 3), alpha: 0.5, eta: 0.4, law: BernoulliLaw::Normalized };
        let g = grid_for(&c, 0.4, 0.9);
        let o = oracle(&c, &g).unwrap();
        let top = 0.5 * 2f64.ln() / 3f64.ln() / 0.4;
        assert!((o.d.support().unwrap().1 - top).abs() < 1e-12);
        assert!((top - 0.7887).abs() < 1e-4);
        assert!((o.d.at(0.6) - 0.48).abs() < 1e-12);
        assert_eq!(o.d, o.rho.clone().with_kind(SpectrumKind::OracleD));
        let hull_gap = crate::spectra::sup_distance(&o.l, &o.rho, None).unwrap().0;
        assert!(hull_gap < 1e-12);
        assert_eq!(o.l.support(), o.rho.support());
    }

    fn close(a: f64, b: f64) -> bool {
        a == b || (a - b).abs() < 1e-12
    }

    #[test]
    fn duplicate_relation() {
        // a source satisfying the formalism: rho_g = (m - 1 + D_g) / m
        let lws = Construction::LwsCantor { r: Ratio::new(1, 3), alpha: 0.5, eta: 0.4, law: BernoulliLaw::Normalized };
        let asym = Construction::AsymmetricCantor { alpha: 0.5, beta: 1.0 };
        for m in [2.0, 2.5, 3.0] {
            let c = Construction::Duplicate { m, source: Box::new(lws.clone()) };
            let o = oracle(&c, &grid_for(&c, 0.1, 0.6)).unwrap();
            for i in 0..o.d.len() {
                assert!(close(o.rho.values[i], (m - 1.0 + o.d.values[i]) / m));
            }
            assert!(ordered(&o));
            let c = Construction::Duplicate { m, source: Box::new(asym.clone()) };
            let g = grid_for(&c, 0.1, 0.6);
            let o = oracle(&c, &g).unwrap();
            let so = oracle(&asym, &g.iter().map(|h| h * m).collect::<Vec<_>>()).unwrap();
            for i in 0..g.len() {
                assert!(close(o.rho.values[i], (m - 1.0 + so.rho.values[i]) / m));
                assert_eq!(o.d.values[i], so.d.values[i]);
            }
            assert!(ordered(&o));
        }
    }

    #[test]
    fn every_oracle_is_ordered() {
        let cs = vec![
            Construction::TwoExponent { alpha: 0.5, beta: 1.0, eta: 0.5 },
            Construction::ThreeExponent { alpha: 0.3, beta: 0.6, gamma: 1.0, eta: 0.5, c: 1.3 },
            Construction::AsymmetricCantor { alpha: 0.5, beta: 1.0 },
            Construction::SlowOscillation { alpha: 0.5, beta: 1.0, variant: None },
            Construction::BackgroundFill {
                gamma: 2.0,
                base: Box::new(Construction::DuplicatedLws { alpha: 0.4, eta: 0.5, law: BernoulliLaw::Normalized }),
            },
        ];
        for c in cs {
            let g = grid_for(&c, 0.1, 2.2);
            assert!(ordered(&oracle(&c, &g).unwrap()), "{c:?}");
        }
    }

    #[test]
    fn background_adds_full_point() {
        let base = Construction::DuplicatedLws { alpha: 0.4, eta: 0.5, law: BernoulliLaw::Normalized };
        let c = Construction::BackgroundFill { gamma: 1.5, base: Box::new(base) };
        let g = grid_for(&c, 0.3, 1.6);
        let o = oracle(&c, &g).unwrap();
        assert_eq!(o.d.at(1.5), 1.0);
        assert_eq!(o.rho.at(1.5), 1.0);
        assert!(o.d_infinity.is_infinite());
        assert!(oracle::<f64>(&Construction::External { name: "x".into() }, &g).is_err());
    }

    #[test]
    fn compare_identity_and_failure() {
        let c = Construction::TwoExponent { alpha: 0.5, beta: 1.0, eta: 0.5 };
        let g = grid_for(&c, 0.4, 1.1);
        let o = oracle(&c, &g).unwrap();
        let same = compare(&o.d, &o.d, CompareOptions::new(0.1)).unwrap();
        assert_eq!(same.sup_distance, Some(0.0));
        assert_eq!(same.verdict, Verdict::Valid);
        let r = compare(&o.rho, &o.d, CompareOptions::new(0.1)).unwrap();
        assert_eq!(r.verdict, Verdict::Invalid);
        assert_eq!(r.witness_h, Some(0.5));
        assert!((r.sup_distance.unwrap() - 0.5).abs() < 1e-12);
        let other = SpectrumCurve::new(linspace(0.0, 1.0, 5), vec![0.0; 5], SpectrumKind::Legendre).unwrap();
        assert!(matches!(compare(&o.d, &other, CompareOptions::new(0.1)), Err(Error::Mismatch(_))));
    }
}
