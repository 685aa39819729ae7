//! Dyadic cells and exact Cantor stages.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

pub type Rational = Ratio<i128>;

/// The cell `[k 2^-j, (k+1) 2^-j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub j: u32,
    pub k: u64,
}

impl DyadicIndex {
    pub fn new(j: u32, k: u64) -> Result<Self> {
        ensure!(j < 63, "scale {j} exceeds the supported range");
        ensure!(k < 1u64 << j, "translation {k} outside [0, 2^{j})");
        Ok(DyadicIndex { j, k })
    }

    pub fn lo(&self) -> Rational {
        Rational::new(self.k as i128, 1i128 << self.j)
    }

    pub fn hi(&self) -> Rational {
        Rational::new(self.k as i128 + 1, 1i128 << self.j)
    }

    pub fn parent(&self) -> Option<DyadicIndex> {
        (self.j > 0).then(|| DyadicIndex { j: self.j - 1, k: self.k >> 1 })
    }

    pub fn children(&self) -> [DyadicIndex; 2] {
        let j = self.j + 1;
        [DyadicIndex { j, k: 2 * self.k }, DyadicIndex { j, k: 2 * self.k + 1 }]
    }

    /// Cell of scale `j` containing `x`, half-open convention.
    pub fn containing(x: f64, j: u32) -> Result<Self> {
        ensure!((0.0..1.0).contains(&x), "point {x} outside [0,1)");
        let k = (x * (1u64 << j) as f64).floor() as u64;
        DyadicIndex::new(j, k.min((1u64 << j) - 1))
    }
}

/// A closed interval with rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Rational,
    pub hi: Rational,
}

impl Interval {
    pub fn len(&self) -> Rational {
        self.hi - self.lo
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSet {
    pub stage: u32,
    pub intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Whether the point set `other` is contained in `self`.
    pub fn covers(&self, other: &IntervalSet) -> bool {
        other.intervals.iter().all(|iv| {
            let at = self.intervals.partition_point(|s| s.hi < iv.lo);
            at < self.intervals.len() && self.intervals[at].contains_interval(iv)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CantorKind {
    /// Keep the two outer intervals of relative length `r`.
    Symmetric { r: Ratio<i64> },
    /// Remove the second quarter of each interval.
    AsymmetricQuarter,
    QuarterSymmetric,
}

/// Scale-to-stage map `j -> n_j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule")]
pub enum StageSchedule {
    /// Deepest stage whose shortest interval is still at least `2^-j` long.
    Natural,
    FloorDiv { div: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CantorSpec {
    pub kind: CantorKind,
    pub schedule: StageSchedule,
}

impl CantorSpec {
    pub fn symmetric(r: Ratio<i64>) -> Result<Self> {
        let spec = CantorSpec { kind: CantorKind::Symmetric { r }, schedule: StageSchedule::Natural };
        spec.validate()?;
        Ok(spec)
    }

    pub fn asymmetric_quarter() -> Self {
        CantorSpec { kind: CantorKind::AsymmetricQuarter, schedule: StageSchedule::FloorDiv { div: 2 } }
    }

    /// `C(1/4)` with stage `floor(j/4)`, the support of the duplicated lacunary series.
    pub fn quarter_duplicated() -> Self {
        CantorSpec { kind: CantorKind::QuarterSymmetric, schedule: StageSchedule::FloorDiv { div: 4 } }
    }

    pub fn validate(&self) -> Result<()> {
        if let CantorKind::Symmetric { r } = &self.kind {
            ensure!(r.is_positive() && *r < Ratio::new(1, 2), "Cantor ratio {r} outside (0, 1/2)");
        }
        if let StageSchedule::FloorDiv { div } = self.schedule {
            ensure!(div > 0, "stage divisor must be positive");
        }
        Ok(())
    }

    /// Symmetric ratio as an exact rational, if any.
    fn ratio(&self) -> Option<Rational> {
        match &self.kind {
            CantorKind::Symmetric { r } => Some(Rational::new(*r.numer() as i128, *r.denom() as i128)),
            CantorKind::QuarterSymmetric => Some(Rational::new(1, 4)),
            CantorKind::AsymmetricQuarter => None,
        }
    }

    pub fn stage_for_scale(&self, j: u32) -> u32 {
        match self.schedule {
            StageSchedule::FloorDiv { div } => j / div,
            StageSchedule::Natural => match self.ratio() {
                // largest n with (den/num)^n <= 2^j
                Some(r) => {
                    let (num, den) = (*r.numer(), *r.denom());
                    let bound = 1i128 << j;
                    let (mut n, mut p, mut q) = (0u32, 1i128, 1i128);
                    while p * den <= bound * q * num {
                        p *= den;
                        q *= num;
                        n += 1;
                        let g = p.gcd(&q);
                        p /= g;
                        q /= g;
                    }
                    n
                }
                None => j / 2,
            },
        }
    }

    /// Shallowest stage whose longest interval is at most `2^-j` long.
    pub fn fine_stage(&self, j: u32) -> u32 {
        let width = Rational::new(1, 1i128 << j);
        let longest = |n: u32| match self.ratio() {
            Some(r) => pow(r, n),
            None => pow(Rational::new(1, 2), n),
        };
        (0..).find(|&n| longest(n) <= width).unwrap()
    }
}

fn pow(r: Rational, n: u32) -> Rational {
    (0..n).fold(Rational::one(), |acc, _| acc * r)
}

type StageKey = (CantorKind, u32);

fn stage_cache() -> &'static Mutex<HashMap<StageKey, Arc<IntervalSet>>> {
    static CACHE: OnceLock<Mutex<HashMap<StageKey, Arc<IntervalSet>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn refine(kind: &CantorKind, prev: &IntervalSet) -> IntervalSet {
    let mut out = Vec::with_capacity(prev.len() * 2);
    for iv in &prev.intervals {
        let w = iv.len();
        match kind {
            CantorKind::AsymmetricQuarter => {
                out.push(Interval { lo: iv.lo, hi: iv.lo + w / 4 });
                out.push(Interval { lo: iv.lo + w / 2, hi: iv.hi });
            }
            _ => {
                let r = match kind {
                    CantorKind::Symmetric { r } => Rational::new(*r.numer() as i128, *r.denom() as i128),
                    _ => Rational::new(1, 4),
                };
                out.push(Interval { lo: iv.lo, hi: iv.lo + w * r });
                out.push(Interval { lo: iv.hi - w * r, hi: iv.hi });
            }
        }
    }
    IntervalSet { stage: prev.stage + 1, intervals: out }
}

/// Stage `n` of the Cantor construction, memoized per (kind, n).
pub fn cantor_stage(spec: &CantorSpec, n: u32) -> Result<Arc<IntervalSet>> {
    spec.validate()?;
    ensure!(n <= 30, "stage {n} is beyond the supported depth");
    let kind = &spec.kind;
    let mut cache = stage_cache().lock().unwrap_or_else(|e| e.into_inner());
    let start = (0..=n).rev().find(|&s| cache.contains_key(&(kind.clone(), s)));
    let mut cur = match start {
        Some(s) => cache[&(kind.clone(), s)].clone(),
        None => {
            let base = Arc::new(IntervalSet {
                stage: 0,
                intervals: vec![Interval { lo: Rational::zero(), hi: Rational::one() }],
            });
            cache.insert((kind.clone(), 0), base.clone());
            base
        }
    };
    while cur.stage < n {
        let next = Arc::new(refine(kind, &cur));
        cache.insert((kind.clone(), next.stage), next.clone());
        cur = next;
    }
    Ok(cur)
}

pub fn cantor_dimension(spec: &CantorSpec) -> f64 {
    match spec.ratio() {
        Some(r) => 2f64.ln() / (r.denom().to_f64().unwrap() / r.numer().to_f64().unwrap()).ln(),
        None => ((1.0 + 5f64.sqrt()) / 2.0).log2(),
    }
}

fn scaled(x: Rational, j: u32) -> Rational {
    x * Rational::from_integer(1i128 << j)
}

/// Scale-`j` cells contained in the stage set.
pub fn cells_inside(set: &IntervalSet, j: u32) -> Vec<DyadicIndex> {
    let mut out = Vec::new();
    for iv in &set.intervals {
        let first = scaled(iv.lo, j).ceil().to_integer();
        let end = scaled(iv.hi, j).floor().to_integer();
        out.extend((first..end).map(|k| DyadicIndex { j, k: k as u64 }));
    }
    out
}

/// Scale-`j` cells whose interior meets the stage set.
pub fn cells_meeting(set: &IntervalSet, j: u32) -> Vec<DyadicIndex> {
    let top = (1i128 << j) - 1;
    let mut out: Vec<DyadicIndex> = Vec::new();
    for iv in &set.intervals {
        let first = scaled(iv.lo, j).floor().to_integer().max(0);
        let last = (scaled(iv.hi, j).ceil().to_integer() - 1).min(top);
        for k in first..=last {
            let cell = DyadicIndex { j, k: k as u64 };
            if out.last() != Some(&cell) {
                out.push(cell);
            }
        }
    }
    out
}

/// `Gamma_j`: scale-`j` cells inside stage `n_j`.
pub fn gamma_j(spec: &CantorSpec, j: u32) -> Result<Vec<DyadicIndex>> {
    let stage = cantor_stage(spec, spec.stage_for_scale(j))?;
    Ok(cells_inside(&stage, j))
}

/// `R_j` of the quarter-symmetric set: cells meeting stage `ceil(j/2)`.
pub fn r_j(j: u32) -> Result<Vec<DyadicIndex>> {
    let spec = CantorSpec::quarter_duplicated();
    let stage = cantor_stage(&spec, j.div_ceil(2))?;
    Ok(cells_meeting(&stage, j))
}

/// Cells meeting the limit set itself, resolved at the first stage finer than the cells.
pub fn cells_meeting_set(spec: &CantorSpec, j: u32) -> Result<Vec<DyadicIndex>> {
    let stage = cantor_stage(spec, spec.fine_stage(j))?;
    Ok(cells_meeting(&stage, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i128, d: i128) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn quarter_stage_one() {
        let s = cantor_stage(&CantorSpec::symmetric(Ratio::new(1, 4)).unwrap(), 1).unwrap();
        assert_eq!(
            s.intervals,
            vec![Interval { lo: q(0, 1), hi: q(1, 4) }, Interval { lo: q(3, 4), hi: q(1, 1) }]
        );
    }

    #[test]
    fn third_stage_two() {
        let s = cantor_stage(&CantorSpec::symmetric(Ratio::new(1, 3)).unwrap(), 2).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.intervals.iter().all(|iv| iv.len() == q(1, 9)));
        assert_eq!(s.intervals[1], Interval { lo: q(2, 9), hi: q(3, 9) });
    }

    #[test]
    fn asymmetric_stage_one() {
        let s = cantor_stage(&CantorSpec::asymmetric_quarter(), 1).unwrap();
        assert_eq!(
            s.intervals,
            vec![Interval { lo: q(0, 1), hi: q(1, 4) }, Interval { lo: q(1, 2), hi: q(1, 1) }]
        );
    }

    #[test]
    fn asymmetric_lengths_are_binomial() {
        let n = 6;
        let s = cantor_stage(&CantorSpec::asymmetric_quarter(), n).unwrap();
        for l in 0..=n {
            let len = pow(q(1, 4), n - l) * pow(q(1, 2), l);
            let want = (0..l).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64);
            assert_eq!(s.intervals.iter().filter(|iv| iv.len() == len).count() as u64, want);
        }
    }

    #[test]
    fn rejects_bad_ratio() {
        assert!(CantorSpec::symmetric(Ratio::new(1, 2)).is_err());
        assert!(CantorSpec::symmetric(Ratio::new(0, 1)).is_err());
        assert!(CantorSpec::symmetric(Ratio::new(-1, 3)).is_err());
    }

    #[test]
    fn dimensions() {
        let d = |r| cantor_dimension(&CantorSpec::symmetric(r).unwrap());
        assert!((d(Ratio::new(1, 4)) - 0.5).abs() < 1e-15);
        assert!((d(Ratio::new(1, 3)) - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert!((cantor_dimension(&CantorSpec::asymmetric_quarter()) - 0.694_241_913_630_617_3).abs() < 1e-12);
    }

    #[test]
    fn gamma_counts() {
        let dup = CantorSpec::quarter_duplicated();
        assert_eq!(gamma_j(&dup, 4).unwrap().len(), 8);
        assert_eq!(gamma_j(&dup, 0).unwrap(), vec![DyadicIndex { j: 0, k: 0 }]);
        let half = CantorSpec { kind: CantorKind::QuarterSymmetric, schedule: StageSchedule::FloorDiv { div: 2 } };
        assert_eq!(gamma_j(&half, 4).unwrap().len(), 4);
        for j in (0..=20).step_by(4) {
            assert_eq!(gamma_j(&dup, j).unwrap().len(), 1 << (3 * j / 4));
            assert_eq!(r_j(j).unwrap().len(), 1 << (j / 2));
        }
    }

    #[test]
    fn r_j_small() {
        assert_eq!(r_j(0).unwrap(), vec![DyadicIndex { j: 0, k: 0 }]);
        let r4: Vec<u64> = r_j(4).unwrap().iter().map(|c| c.k).collect();
        assert_eq!(r4, vec![0, 3, 12, 15]);
        assert_eq!(r_j(8).unwrap().len(), 16);
    }

    #[test]
    fn natural_schedule_is_exact() {
        let third = CantorSpec::symmetric(Ratio::new(1, 3)).unwrap();
        // 3^6 = 729 <= 1024 < 2187
        assert_eq!(third.stage_for_scale(10), 6);
        assert_eq!(third.stage_for_scale(0), 0);
        let quarter = CantorSpec::symmetric(Ratio::new(1, 4)).unwrap();
        assert_eq!(quarter.stage_for_scale(7), 3);
        assert_eq!(quarter.stage_for_scale(8), 4);
    }

    #[test]
    fn gamma_brute_force() {
        let third = CantorSpec::symmetric(Ratio::new(2, 7)).unwrap();
        for j in 0..=12 {
            let stage = cantor_stage(&third, third.stage_for_scale(j)).unwrap();
            let want: Vec<DyadicIndex> = (0..1u64 << j)
                .map(|k| DyadicIndex { j, k })
                .filter(|c| {
                    let cell = Interval { lo: c.lo(), hi: c.hi() };
                    stage.intervals.iter().any(|iv| iv.contains_interval(&cell))
                })
                .collect();
            assert_eq!(gamma_j(&third, j).unwrap(), want, "j = {j}");
        }
    }

    #[test]
    fn stages_nest() {
        for spec in [
            CantorSpec::symmetric(Ratio::new(1, 3)).unwrap(),
            CantorSpec::asymmetric_quarter(),
            CantorSpec::quarter_duplicated(),
        ] {
            for n in 0..14 {
                let a = cantor_stage(&spec, n).unwrap();
                let b = cantor_stage(&spec, n + 1).unwrap();
                assert!(a.covers(&b));
                assert_eq!(b.len(), 2 * a.len());
            }
        }
    }

    #[test]
    fn containing_cell() {
        assert_eq!(DyadicIndex::containing(0.5, 1).unwrap(), DyadicIndex { j: 1, k: 1 });
        assert_eq!(DyadicIndex::containing(0.0, 5).unwrap().k, 0);
        assert!(DyadicIndex::containing(1.0, 5).is_err());
    }
}
