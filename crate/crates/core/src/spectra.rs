//! Legendre and large-deviation spectra estimated from leaders.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::leaders::LeaderField;
use crate::scalar::{Scalar, EDGE_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SpectrumKind {
    Legendre,
    LargeDeviation,
    IncreasingHull,
    ConcaveHull,
    OracleD,
    OracleRho,
    OracleL,
}

impl SpectrumKind {
    pub fn label(&self) -> &'static str {
        match self {
            SpectrumKind::Legendre => "legendre",
            SpectrumKind::LargeDeviation => "largeDeviation",
            SpectrumKind::IncreasingHull => "increasingHull",
            SpectrumKind::ConcaveHull => "concaveHull",
            SpectrumKind::OracleD => "oracleD",
            SpectrumKind::OracleRho => "oracleRho",
            SpectrumKind::OracleL => "oracleL",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SpectrumKind::Legendre,
            SpectrumKind::LargeDeviation,
            SpectrumKind::IncreasingHull,
            SpectrumKind::ConcaveHull,
            SpectrumKind::OracleD,
            SpectrumKind::OracleRho,
            SpectrumKind::OracleL,
        ]
        .into_iter()
        .find(|k| k.label() == s)
    }
}

/// Sampled map `h -> value`; `-inf` marks an empty support.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumCurve<T> {
    pub grid: Vec<T>,
    pub values: Vec<T>,
    pub kind: SpectrumKind,
}

impl<T: Scalar> SpectrumCurve<T> {
    pub fn new(grid: Vec<T>, values: Vec<T>, kind: SpectrumKind) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(Error::Mismatch(format!("{} grid points but {} values", grid.len(), values.len())));
        }
        ensure!(grid.windows(2).all(|w| w[0] < w[1]), "grid must be strictly increasing");
        Ok(SpectrumCurve { grid, values, kind })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn index_of(&self, h: T) -> Option<usize> {
        let tol = T::of(EDGE_TOL);
        self.grid.iter().position(|g| (*g - h).abs() <= tol)
    }

    /// Value at a grid point (within `1e-9`), or at the nearest grid point otherwise.
    pub fn at(&self, h: T) -> T {
        let i = self.index_of(h).unwrap_or_else(|| {
            (0..self.len())
                .min_by(|&a, &b| (self.grid[a] - h).abs().partial_cmp(&(self.grid[b] - h).abs()).unwrap())
                .unwrap()
        });
        self.values[i]
    }

    pub fn is_finite_at(&self, i: usize) -> bool {
        self.values[i].is_finite()
    }

    /// `(min, max)` of the grid points with a finite value.
    pub fn support(&self) -> Option<(T, T)> {
        let mut it = (0..self.len()).filter(|&i| self.is_finite_at(i)).map(|i| self.grid[i]);
        let first = it.next()?;
        Some((first, it.next_back().unwrap_or(first)))
    }

    pub fn max_value(&self) -> T {
        self.values.iter().cloned().fold(T::neg_infinity(), T::max)
    }

    pub fn same_grid(&self, other: &SpectrumCurve<T>) -> bool {
        let tol = T::of(EDGE_TOL);
        self.len() == other.len() && self.grid.iter().zip(&other.grid).all(|(a, b)| (*a - *b).abs() <= tol)
    }

    pub fn with_kind(mut self, kind: SpectrumKind) -> Self {
        self.kind = kind;
        self
    }
}

/// Largest `|a - b|` over grid points where both are finite, with its location.
pub fn sup_distance<T: Scalar>(a: &SpectrumCurve<T>, b: &SpectrumCurve<T>, within: Option<(T, T)>) -> Option<(T, T)> {
    let mut best: Option<(T, T)> = None;
    for i in 0..a.len() {
        let h = a.grid[i];
        if let Some((lo, hi)) = within {
            if h < lo || h > hi {
                continue;
            }
        }
        if a.is_finite_at(i) && b.is_finite_at(i) {
            let gap = (a.values[i] - b.values[i]).abs();
            if best.is_none_or(|(g, _)| gap > g) {
                best = Some((gap, h));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy")]
pub enum ZeroPolicy {
    Exclude,
    /// Zero leaders count as `2^(-B j)`.
    Floor { b: f64 },
}

/// How the reported large-deviation value is chosen from the epsilon profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsRule {
    /// The smallest epsilon whose band is nonempty at some scale.
    SmallestNonempty,
    /// Always the last (smallest) epsilon.
    Finest,
}

/// Finite-scale proxy for the `limsup` of `log2 N_j / j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateEstimator {
    /// Windowed maximum of `log2 N_j / j`.
    WindowMax,
    /// Least-squares slope of `log2 N_j` on `j` over the scales with `N_j > 0`; falls
    /// back to the windowed maximum with fewer than three such scales.
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig<T> {
    pub window: (u32, u32),
    pub p_grid: Vec<T>,
    /// `None` picks 121 points on `[0.9 Hmin, 1.1 Hmax]`.
    pub h_grid: Option<Vec<T>>,
    /// Strictly decreasing band half-widths.
    pub eps_schedule: Vec<T>,
    pub eps_rule: EpsRule,
    /// At scale `j` the band half-width is `eps + slack / j`.
    pub resolution_slack: T,
    pub rate: RateEstimator,
    pub zero_policy: ZeroPolicy,
}

/// `[floor(jmax/2) + 1, jmax - ceil(jmax/10)]`.
pub fn default_window(jmax: u32) -> (u32, u32) {
    let j2 = jmax - jmax.div_ceil(10);
    ((jmax / 2 + 1).min(j2.saturating_sub(1)).max(1), j2)
}

pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * T::of_usize(i) / T::of_usize(n - 1)).collect()
}

/// Sorted union of `base` and `extra`, merging points closer than `1e-9`.
pub fn merge_grid<T: Scalar>(base: &[T], extra: &[T]) -> Vec<T> {
    let mut all: Vec<T> = base.iter().chain(extra).cloned().filter(|h| h.is_finite()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = T::of(EDGE_TOL);
    let mut out: Vec<T> = Vec::with_capacity(all.len());
    for h in all {
        match out.last_mut() {
            Some(last) if (h - *last).abs() <= tol => {
                // prefer the exact breakpoint over a nearby linspace sample
                if extra.iter().any(|e| (*e - h).abs() <= T::epsilon()) {
                    *last = h;
                }
            }
            _ => out.push(h),
        }
    }
    out
}

pub fn default_h_grid<T: Scalar>(hmin: T, hmax: T, extra: &[T]) -> Vec<T> {
    merge_grid(&linspace(T::of(0.9) * hmin, T::of(1.1) * hmax, 121), extra)
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn new(jmax: u32) -> Self {
        EstimatorConfig {
            window: default_window(jmax),
            p_grid: linspace(T::of(-10.0), T::of(10.0), 41),
            h_grid: None,
            eps_schedule: [0.4, 0.2, 0.1, 0.05].iter().map(|e| T::of(*e)).collect(),
            eps_rule: EpsRule::Finest,
            resolution_slack: T::one(),
            rate: RateEstimator::WindowMax,
            zero_policy: ZeroPolicy::Exclude,
        }
    }

    pub fn with_window(mut self, window: (u32, u32)) -> Self {
        self.window = window;
        self
    }

    pub fn with_h_grid(mut self, grid: Vec<T>) -> Self {
        self.h_grid = Some(grid);
        self
    }

    pub fn validate(&self, jmax: u32) -> Result<()> {
        let (j1, j2) = self.window;
        ensure!(j1 >= 1 && j1 < j2, "scale window [{j1},{j2}] must satisfy 1 <= j1 < j2");
        ensure!(j2 <= jmax, "window end {j2} exceeds jmax {jmax}");
        ensure!(!self.eps_schedule.is_empty(), "empty epsilon schedule");
        ensure!(
            self.eps_schedule.windows(2).all(|w| w[0] > w[1]) && self.eps_schedule.iter().all(|e| *e > T::zero()),
            "epsilon schedule must be positive and strictly decreasing"
        );
        ensure!(self.resolution_slack >= T::zero(), "resolution slack must be nonnegative");
        ensure!(!self.p_grid.is_empty(), "empty p grid");
        if let Some(g) = &self.h_grid {
            ensure!(g.windows(2).all(|w| w[0] < w[1]), "h grid must be strictly increasing");
        }
        if let ZeroPolicy::Floor { b } = self.zero_policy {
            ensure!(b > 0.0 && b.is_finite(), "floor exponent B={b} must be positive");
        }
        Ok(())
    }

    pub fn half_width(&self, eps: T, j: u32) -> T {
        eps + self.resolution_slack / T::of(j as f64)
    }
}

/// Leader exponents of one scale, pooled over one or more fields.
#[derive(Clone, Debug, PartialEq)]
struct ScaleStats<T> {
    /// Distinct finite exponents, increasing.
    exps: Vec<T>,
    counts: Vec<u64>,
    /// `prefix[i]` = number of exponents among the first `i` distinct values.
    prefix: Vec<u64>,
    zeros: u64,
}

impl<T: Scalar> ScaleStats<T> {
    fn new(mut raw: Vec<T>, zeros: u64) -> Self {
        raw.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut exps: Vec<T> = Vec::new();
        let mut counts = Vec::new();
        for e in raw {
            if exps.last() == Some(&e) {
                *counts.last_mut().unwrap() += 1;
            } else {
                exps.push(e);
                counts.push(1);
            }
        }
        let mut prefix = vec![0u64];
        for c in &counts {
            prefix.push(prefix.last().unwrap() + c);
        }
        ScaleStats { exps, counts, prefix, zeros }
    }

    fn nonzero(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Exponents `<= x`, with the shared edge tolerance.
    fn at_most(&self, x: T) -> u64 {
        let x = x + T::of(EDGE_TOL);
        self.prefix[self.exps.partition_point(|e| *e <= x)]
    }

    /// Exponents in `(lo, hi]`.
    fn band(&self, lo: T, hi: T) -> u64 {
        self.at_most(hi) - self.at_most(lo)
    }

    fn above(&self, a: T) -> u64 {
        self.nonzero() - self.at_most(a) + self.zeros
    }
}

/// Pooled leader exponents of one or more fields: the Monte-Carlo counts are summed
/// across fields before any logarithm is taken.
#[derive(Clone, Debug, PartialEq)]
pub struct LeaderStats<T> {
    jmax: u32,
    fields: usize,
    scales: Vec<ScaleStats<T>>,
}

impl<T: Scalar> LeaderStats<T> {
    pub fn new(lf: &LeaderField<T>) -> Self {
        Self::pooled(std::slice::from_ref(lf)).expect("one field always pools")
    }

    pub fn pooled(fields: &[LeaderField<T>]) -> Result<Self> {
        ensure!(!fields.is_empty(), "no leader fields to pool");
        let jmax = fields[0].jmax();
        ensure!(fields.iter().all(|f| f.jmax() == jmax), "pooled fields must share jmax");
        let scales = (0..=jmax)
            .into_par_iter()
            .map(|j| {
                let mut raw = Vec::new();
                let mut zeros = 0u64;
                for f in fields {
                    for d in f.scale(j) {
                        if *d > T::zero() {
                            raw.push(if j == 0 { T::zero() } else { -d.log2() / T::of(j as f64) });
                        } else {
                            zeros += 1;
                        }
                    }
                }
                ScaleStats::new(raw, zeros)
            })
            .collect();
        Ok(LeaderStats { jmax, fields: fields.len(), scales })
    }

    /// Stats of scale `j` only; other scales are left empty.
    fn single_scale(lf: &LeaderField<T>, j: u32) -> Self {
        let jj = T::of(j.max(1) as f64);
        let row = lf.scale(j);
        let raw = row.iter().filter(|d| **d > T::zero()).map(|d| -d.log2() / jj).collect::<Vec<_>>();
        let zeros = row.len() as u64 - raw.len() as u64;
        let scales = (0..=j).map(|i| if i == j { ScaleStats::new(raw.clone(), zeros) } else { ScaleStats::new(Vec::new(), 0) }).collect();
        LeaderStats { jmax: j, fields: 1, scales }
    }

    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    pub fn fields(&self) -> usize {
        self.fields
    }

    pub fn zero_count(&self, j: u32) -> u64 {
        self.scales[j as usize].zeros
    }

    pub fn nonzero_count(&self, j: u32) -> u64 {
        self.scales[j as usize].nonzero()
    }

    /// Mean number of leaders per field with `h - eps < exponent <= h + eps`.
    pub fn band_count(&self, j: u32, h: T, eps: T) -> T {
        let n = self.scales[j as usize].band(h - eps, h + eps);
        T::of(n as f64) / T::of_usize(self.fields)
    }

    /// Mean number of leaders per field with exponent `<= h`.
    pub fn at_most_count(&self, j: u32, h: T) -> T {
        T::of(self.scales[j as usize].at_most(h) as f64) / T::of_usize(self.fields)
    }

    /// Mean number of leaders per field below `2^(-A j)`, zeros included.
    pub fn below_count(&self, j: u32, a: T) -> T {
        T::of(self.scales[j as usize].above(a) as f64) / T::of_usize(self.fields)
    }

    /// (smallest, largest) finite exponent at scale `j`.
    pub fn extremes(&self, j: u32) -> Option<(T, T)> {
        let s = &self.scales[j as usize];
        Some((*s.exps.first()?, *s.exps.last()?))
    }
}

/// Least-squares slope of `y` on `x`; `None` with fewer than two distinct abscissae.
pub fn ls_slope<T: Scalar>(pts: &[(T, T)]) -> Option<T> {
    if pts.len() < 2 {
        return None;
    }
    let n = T::of_usize(pts.len());
    let mx = pts.iter().map(|p| p.0).fold(T::zero(), |a, b| a + b) / n;
    let my = pts.iter().map(|p| p.1).fold(T::zero(), |a, b| a + b) / n;
    let sxx = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).fold(T::zero(), |a, b| a + b);
    if sxx <= T::zero() {
        return None;
    }
    let sxy = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).fold(T::zero(), |a, b| a + b);
    Some(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StructureValue<T> {
    /// `log2 S_j(p)`; `-inf` when no leader contributes.
    pub log2: T,
    /// Zeros were dropped from a sum with `p < 0`.
    pub partial: bool,
}

impl<T: Scalar> StructureValue<T> {
    pub fn value(&self) -> T {
        self.log2.exp2()
    }
}

fn structure_pooled<T: Scalar>(stats: &LeaderStats<T>, p: T, j: u32, policy: ZeroPolicy) -> StructureValue<T> {
    let s = &stats.scales[j as usize];
    let jj = T::of(j as f64);
    // log2 of the sum of 2^(-e j p), shifted by the largest term
    let mut terms: Vec<(T, u64)> = s.exps.iter().zip(&s.counts).map(|(e, c)| (-*e * jj * p, *c)).collect();
    let mut partial = false;
    if s.zeros > 0 {
        match policy {
            ZeroPolicy::Exclude => partial = p < T::zero(),
            ZeroPolicy::Floor { b } => terms.push((-T::of(b) * jj * p, s.zeros)),
        }
    }
    let top = terms.iter().map(|t| t.0).fold(T::neg_infinity(), T::max);
    if !top.is_finite() {
        return StructureValue { log2: T::neg_infinity(), partial };
    }
    let sum = terms.iter().map(|(x, c)| T::of(*c as f64) * (*x - top).exp2()).fold(T::zero(), |a, b| a + b);
    let log2 = top + sum.log2() - jj - T::of_usize(stats.fields).log2();
    StructureValue { log2, partial }
}

/// `S_j(p) = 2^-j sum_k d_{j,k}^p`.
pub fn structure_function<T: Scalar>(lf: &LeaderField<T>, p: T, j: u32, policy: ZeroPolicy) -> Result<StructureValue<T>> {
    ensure!(j <= lf.jmax(), "scale {j} exceeds jmax {}", lf.jmax());
    Ok(structure_pooled(&LeaderStats::single_scale(lf, j), p, j, policy))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFunction<T> {
    pub p: Vec<T>,
    /// Windowed minimum of `log2 S_j(p) / -j`.
    pub eta: Vec<T>,
    /// Regression slope of `log2 S_j(p)` against `-j`.
    pub slope: Vec<Option<T>>,
    pub partial: bool,
}

pub fn scaling_function<T: Scalar>(lf: &LeaderField<T>, cfg: &EstimatorConfig<T>) -> Result<ScalingFunction<T>> {
    scaling_function_pooled(&LeaderStats::new(lf), cfg)
}

pub fn scaling_function_pooled<T: Scalar>(stats: &LeaderStats<T>, cfg: &EstimatorConfig<T>) -> Result<ScalingFunction<T>> {
    cfg.validate(stats.jmax)?;
    let (j1, j2) = cfg.window;
    let mut partial = false;
    let mut eta = Vec::new();
    let mut slope = Vec::new();
    for &p in &cfg.p_grid {
        let mut best = T::infinity();
        let mut pts = Vec::new();
        for j in j1..=j2 {
            let s = structure_pooled(stats, p, j, cfg.zero_policy);
            partial |= s.partial;
            if s.log2.is_finite() {
                best = best.min(s.log2 / -T::of(j as f64));
                pts.push((-T::of(j as f64), s.log2));
            }
        }
        eta.push(best);
        slope.push(ls_slope(&pts));
    }
    Ok(ScalingFunction { p: cfg.p_grid.clone(), eta, slope, partial })
}

/// Values below this are reported as `-inf`.
pub const LEGENDRE_FLOOR: f64 = -5.0;

/// `L(h) = min_p (1 - eta(p) + h p)` over the sampled `p`.
pub fn legendre_spectrum<T: Scalar>(eta: &ScalingFunction<T>, h_grid: &[T]) -> Result<SpectrumCurve<T>> {
    ensure!(
        eta.p.iter().any(|p| *p < T::zero()) && eta.p.iter().any(|p| *p > T::zero()),
        "the p grid needs both signs"
    );
    let values = h_grid
        .iter()
        .map(|&h| {
            let v = eta
                .p
                .iter()
                .zip(&eta.eta)
                .filter(|(_, e)| e.is_finite())
                .map(|(&p, &e)| T::one() - e + h * p)
                .fold(T::infinity(), T::min);
            if v < T::of(LEGENDRE_FLOOR) || !v.is_finite() {
                T::neg_infinity()
            } else {
                v
            }
        })
        .collect();
    SpectrumCurve::new(h_grid.to_vec(), values, SpectrumKind::Legendre)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HMinMax<T> {
    pub hmin: T,
    pub hmax: T,
    /// `(j, smallest exponent, largest exponent)` for scales with nonzero leaders.
    pub per_scale: Vec<(u32, T, T)>,
    pub slope_min: Option<T>,
    pub slope_max: Option<T>,
}

pub fn hminmax<T: Scalar>(lf: &LeaderField<T>, window: (u32, u32)) -> Result<HMinMax<T>> {
    hminmax_pooled(&LeaderStats::new(lf), window)
}

/// Windowed extremes of the per-scale exponents; regression slopes of `-log2 max d`
/// and `-log2 min d` as diagnostics.
pub fn hminmax_pooled<T: Scalar>(stats: &LeaderStats<T>, window: (u32, u32)) -> Result<HMinMax<T>> {
    let (j1, j2) = window;
    ensure!(j1 >= 1 && j1 <= j2 && j2 <= stats.jmax, "bad scale window [{j1},{j2}]");
    let per_scale: Vec<(u32, T, T)> =
        (j1..=j2).filter_map(|j| stats.extremes(j).map(|(lo, hi)| (j, lo, hi))).collect();
    ensure!(!per_scale.is_empty(), "every leader in the window is zero");
    let hmin = per_scale.iter().map(|s| s.1).fold(T::infinity(), T::min);
    let hmax = per_scale.iter().map(|s| s.2).fold(T::neg_infinity(), T::max);
    let fit = |f: fn(&(u32, T, T)) -> T| {
        let pts: Vec<(T, T)> = per_scale.iter().map(|s| (T::of(s.0 as f64), f(s) * T::of(s.0 as f64))).collect();
        ls_slope(&pts)
    };
    Ok(HMinMax { hmin, hmax, per_scale: per_scale.clone(), slope_min: fit(|s| s.1), slope_max: fit(|s| s.2) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfinityPoint<T> {
    pub cutoffs: Vec<T>,
    pub rates: Vec<T>,
    pub terminal: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LargeDeviation<T> {
    pub curve: SpectrumCurve<T>,
    pub eps: Vec<T>,
    /// `profile[e][i]`: windowed maximum of `log2 N_j / j` for `eps[e]` at `grid[i]`.
    pub profile: Vec<Vec<T>>,
    pub chosen_eps: Vec<Option<T>>,
    /// Linear-in-epsilon extrapolation to zero over the nonempty bands.
    pub extrapolated: Vec<Option<T>>,
    pub at_infinity: InfinityPoint<T>,
    pub window: (u32, u32),
}

fn windowed_rate<T: Scalar>(window: (u32, u32), rate: RateEstimator, count: impl Fn(u32) -> T) -> T {
    let (j1, j2) = window;
    let pts: Vec<(T, T)> = (j1..=j2)
        .filter_map(|j| {
            let n = count(j);
            (n > T::zero()).then(|| (T::of(j as f64), n.log2()))
        })
        .collect();
    let ratio = || pts.iter().map(|(j, l)| *l / *j).fold(T::neg_infinity(), T::max);
    match rate {
        RateEstimator::Regression if pts.len() >= 3 => ls_slope(&pts).map_or_else(ratio, |s| s.min(T::one())),
        _ => ratio(),
    }
}

fn resolve_grid<T: Scalar>(stats: &LeaderStats<T>, cfg: &EstimatorConfig<T>) -> Result<Vec<T>> {
    match &cfg.h_grid {
        Some(g) => Ok(g.clone()),
        None => {
            let hm = hminmax_pooled(stats, cfg.window)?;
            Ok(default_h_grid(hm.hmin, hm.hmax, &[]))
        }
    }
}

fn choose<T: Scalar>(rule: EpsRule, eps: &[T], column: &[T]) -> (T, Option<T>) {
    match rule {
        EpsRule::Finest => {
            let v = *column.last().unwrap();
            (v, v.is_finite().then(|| *eps.last().unwrap()))
        }
        EpsRule::SmallestNonempty => match (0..column.len()).rev().find(|&e| column[e].is_finite()) {
            Some(e) => (column[e], Some(eps[e])),
            None => (T::neg_infinity(), None),
        },
    }
}

pub fn large_deviation<T: Scalar>(lf: &LeaderField<T>, cfg: &EstimatorConfig<T>) -> Result<LargeDeviation<T>> {
    large_deviation_pooled(&LeaderStats::new(lf), cfg)
}

pub fn large_deviation_pooled<T: Scalar>(stats: &LeaderStats<T>, cfg: &EstimatorConfig<T>) -> Result<LargeDeviation<T>> {
    cfg.validate(stats.jmax)?;
    let grid = resolve_grid(stats, cfg)?;
    let eps = cfg.eps_schedule.clone();
    let profile: Vec<Vec<T>> = eps
        .iter()
        .map(|&e| {
            grid.par_iter()
                .map(|&h| windowed_rate(cfg.window, cfg.rate, |j| stats.band_count(j, h, cfg.half_width(e, j))))
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(grid.len());
    let mut chosen_eps = Vec::with_capacity(grid.len());
    let mut extrapolated = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let column: Vec<T> = profile.iter().map(|row| row[i]).collect();
        let (v, e) = choose(cfg.eps_rule, &eps, &column);
        values.push(v);
        chosen_eps.push(e);
        let pts: Vec<(T, T)> = eps.iter().zip(&column).filter(|(_, r)| r.is_finite()).map(|(e, r)| (*e, *r)).collect();
        extrapolated.push(ls_slope(&pts).map(|s| {
            let n = T::of_usize(pts.len());
            let mx = pts.iter().map(|p| p.0).fold(T::zero(), |a, b| a + b) / n;
            let my = pts.iter().map(|p| p.1).fold(T::zero(), |a, b| a + b) / n;
            (my - s * mx).min(T::one())
        }));
    }
    let at_infinity = infinity_point(stats, cfg.window);
    Ok(LargeDeviation {
        curve: SpectrumCurve::new(grid, values, SpectrumKind::LargeDeviation)?,
        eps,
        profile,
        chosen_eps,
        extrapolated,
        at_infinity,
        window: cfg.window,
    })
}

/// Rates of `#{d < 2^(-A j)}` for a sweep of cutoffs `A` above the largest exponent.
fn infinity_point<T: Scalar>(stats: &LeaderStats<T>, window: (u32, u32)) -> InfinityPoint<T> {
    let top = hminmax_pooled(stats, window).map(|h| h.hmax).unwrap_or(T::zero());
    let top = top.max(T::of(0.1));
    let cutoffs: Vec<T> = (0..=16).map(|i| top * (T::one() + T::of(i as f64) / T::of(8.0))).collect();
    let rates: Vec<T> =
        cutoffs.iter().map(|&a| windowed_rate(window, RateEstimator::WindowMax, |j| stats.below_count(j, a))).collect();
    let terminal = *rates.last().unwrap();
    InfinityPoint { cutoffs, rates, terminal }
}

/// One-sided counts `#{d >= 2^(-(h+eps) j)}`.
pub fn increasing_hull<T: Scalar>(lf: &LeaderField<T>, cfg: &EstimatorConfig<T>) -> Result<SpectrumCurve<T>> {
    increasing_hull_pooled(&LeaderStats::new(lf), cfg)
}

pub fn increasing_hull_pooled<T: Scalar>(stats: &LeaderStats<T>, cfg: &EstimatorConfig<T>) -> Result<SpectrumCurve<T>> {
    cfg.validate(stats.jmax)?;
    let grid = resolve_grid(stats, cfg)?;
    let values = grid
        .par_iter()
        .map(|&h| {
            let column: Vec<T> = cfg
                .eps_schedule
                .iter()
                .map(|&e| windowed_rate(cfg.window, cfg.rate, |j| stats.at_most_count(j, h + cfg.half_width(e, j))))
                .collect();
            choose(cfg.eps_rule, &cfg.eps_schedule, &column).0
        })
        .collect();
    SpectrumCurve::new(grid, values, SpectrumKind::IncreasingHull)
}

/// Upper concave envelope of the finite samples, `-inf` outside their range.
pub fn concave_hull<T: Scalar>(curve: &SpectrumCurve<T>) -> SpectrumCurve<T> {
    let pts: Vec<(T, T)> =
        (0..curve.len()).filter(|&i| curve.is_finite_at(i)).map(|i| (curve.grid[i], curve.values[i])).collect();
    let mut hull: Vec<(T, T)> = Vec::new();
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // drop b when it lies on or below the chord a-p
            if (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= T::zero() {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let values = curve
        .grid
        .iter()
        .map(|&h| {
            if hull.is_empty() || h < hull[0].0 || h > hull[hull.len() - 1].0 {
                return T::neg_infinity();
            }
            let i = hull.partition_point(|p| p.0 < h);
            if i < hull.len() && hull[i].0 == h {
                return hull[i].1;
            }
            let (a, b) = (hull[i - 1], hull[i]);
            a.1 + (b.1 - a.1) * (h - a.0) / (b.0 - a.0)
        })
        .collect();
    SpectrumCurve { grid: curve.grid.clone(), values, kind: SpectrumKind::ConcaveHull }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{CoefficientField, FieldMeta};
    use crate::generators::*;
    use crate::leaders::compute_leaders;

    fn constant(alpha: f64, jmax: u32) -> LeaderField<f64> {
        let f = CoefficientField::from_fn(jmax, FieldMeta::external("c"), |j, _| (-alpha * j as f64).exp2());
        compute_leaders(&f)
    }

    #[test]
    fn structure_of_constant_field() {
        let lf = constant(0.4, 10);
        for p in [-3.0, 0.0, 2.0] {
            let s = structure_function(&lf, p, 8, ZeroPolicy::Exclude).unwrap();
            assert!((s.log2 - (-0.4 * p * 8.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn structure_two_exponent_exact() {
        let lf = compute_leaders(&gen_two_exponent::<f64>(0.5, 1.0, 0.5, 12).unwrap());
        let s = structure_function(&lf, 2.0, 10, ZeroPolicy::Exclude).unwrap();
        // neighbour 32 also sees the alpha block
        let want = 2f64.powi(-10) * (33.0 * 2f64.powi(-10) + 991.0 * 2f64.powi(-20));
        assert!((s.value() / want - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structure_zero_policies() {
        let f = gen_duplicated_lws::<f64>(0.4, 0.5, 5, 8).unwrap();
        let lf = compute_leaders(&f);
        assert!(structure_function(&lf, -1.0, 8, ZeroPolicy::Exclude).unwrap().partial);
        assert!(!structure_function(&lf, 1.0, 8, ZeroPolicy::Exclude).unwrap().partial);
        let fl = structure_function(&lf, 0.0, 8, ZeroPolicy::Floor { b: 3.0 }).unwrap();
        assert!(fl.log2.abs() < 1e-12);
    }

    #[test]
    fn scaling_of_constant_field() {
        let lf = constant(0.3, 16);
        let cfg = EstimatorConfig::new(16);
        let sf = scaling_function(&lf, &cfg).unwrap();
        for (p, e) in sf.p.iter().zip(&sf.eta) {
            assert!((e - 0.3 * p).abs() < 1e-9);
        }
        let grid = linspace(0.0, 1.0, 101);
        let l = legendre_spectrum(&sf, &grid).unwrap();
        assert!((l.at(0.3) - 1.0).abs() < 1e-9);
        assert!((l.at(0.35) - (1.0 - 0.05 * 10.0)).abs() < 1e-9);
        assert!((l.at(0.0) + 2.0).abs() < 1e-9);
        assert_eq!(l.at(1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn large_deviation_of_constant_field() {
        let lf = constant(0.5, 16);
        let grid = merge_grid(&linspace(0.14, 0.98, 15), &[0.5]);
        let mut cfg = EstimatorConfig::new(16).with_h_grid(grid.clone());
        cfg.resolution_slack = 0.0;
        let ld = large_deviation(&lf, &cfg).unwrap();
        for (h, v) in ld.curve.grid.iter().zip(&ld.curve.values) {
            if (h - 0.5).abs() < 1e-9 {
                assert!((v - 1.0).abs() < 1e-12);
            } else {
                assert_eq!(*v, f64::NEG_INFINITY, "h = {h}");
            }
        }
        assert_eq!(ld.at_infinity.terminal, f64::NEG_INFINITY);
        let nu = increasing_hull(&lf, &cfg).unwrap();
        for (h, v) in nu.grid.iter().zip(&nu.values) {
            assert_eq!(*v == 1.0, *h >= 0.5 - 1e-9, "h = {h}");
        }
        // with the default slack the band at scale j is widened by 1/j
        let ld = large_deviation(&lf, &EstimatorConfig::new(16).with_h_grid(grid)).unwrap();
        let reach = 0.05 + 1.0 / 9.0;
        for (h, v) in ld.curve.grid.iter().zip(&ld.curve.values) {
            assert_eq!(v.is_finite(), (h - 0.5).abs() < reach, "h = {h}");
        }
    }

    #[test]
    fn lacunary_infinity_point() {
        let lf = compute_leaders(&gen_lws_cantor::<f64>(num_rational::Ratio::new(1, 3), 0.5, 0.4, 2, 14).unwrap());
        let ld = large_deviation(&lf, &EstimatorConfig::new(14)).unwrap();
        assert!(ld.at_infinity.terminal > 0.95);
    }

    #[test]
    fn hull_examples() {
        let g = linspace(0.0, 1.0, 11);
        let lin: Vec<f64> = g.iter().map(|h| 0.5 * h).collect();
        let c = SpectrumCurve::new(g.clone(), lin.clone(), SpectrumKind::LargeDeviation).unwrap();
        assert_eq!(concave_hull(&c).values, lin);
        let mut two = vec![f64::NEG_INFINITY; 11];
        two[5] = 0.5;
        two[10] = 1.0;
        let c = SpectrumCurve::new(g.clone(), two, SpectrumKind::LargeDeviation).unwrap();
        let h = concave_hull(&c);
        assert_eq!(h.values[4], f64::NEG_INFINITY);
        assert!((h.values[7] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn hminmax_examples() {
        let h = hminmax(&constant(0.4, 12), (6, 10)).unwrap();
        assert!((h.hmin - 0.4).abs() < 1e-12 && (h.hmax - 0.4).abs() < 1e-12);
        let lf = compute_leaders(&gen_two_exponent::<f64>(0.5, 1.0, 0.5, 16).unwrap());
        let h = hminmax(&lf, (9, 14)).unwrap();
        assert!((h.hmin - 0.5).abs() < 1e-12 && (h.hmax - 1.0).abs() < 1e-12);
        let lf = compute_leaders(&gen_slow_oscillation::<f64>(0.5, 1.0, 16, None).unwrap());
        let h = hminmax(&lf, (2, 15)).unwrap();
        assert!((h.hmin - 0.5).abs() < 1e-12);
        // largest at j = 9, whose leader comes from scale 16
        assert!((h.hmax - 8.0 / 9.0).abs() < 1e-12);
        let z = compute_leaders(&CoefficientField::<f64>::zeros(8, FieldMeta::external("z")));
        assert!(hminmax(&z, (2, 6)).is_err());
    }

    #[test]
    fn config_checks() {
        let mut cfg = EstimatorConfig::<f64>::new(16);
        assert!(cfg.validate(16).is_ok());
        assert!(cfg.validate(10).is_err());
        cfg.eps_schedule = vec![0.1, 0.2];
        assert!(cfg.validate(16).is_err());
        assert_eq!(default_window(18), (10, 16));
        assert_eq!(default_window(16), (9, 14));
    }
}
