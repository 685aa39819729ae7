use mflab::dyadic::{r_j, CantorSpec};
use mflab::generators::{Construction, GeneratorSpec};
use mflab::leaders::compute_leaders;
use mflab::oracles::{breakpoints, compare, oracle, CompareOptions};
use mflab::spectra::{concave_hull, default_h_grid, hminmax, increasing_hull, large_deviation, sup_distance};
use mflab::{BernoulliLaw, EstimatorConfig, LeaderField64, Verdict};
use num_rational::Ratio;

fn leaders(c: &Construction, jmax: u32, seed: u64) -> LeaderField64 {
    compute_leaders(&GeneratorSpec::new(c.clone(), jmax).with_seed(seed).build::<f64>().unwrap())
}

fn two() -> Construction {
    Construction::TwoExponent { alpha: 0.5, beta: 1.0, eta: 0.5 }
}

fn config_for(c: &Construction, lf: &LeaderField64) -> EstimatorConfig<f64> {
    let cfg = EstimatorConfig::new(lf.jmax());
    let hm = hminmax(lf, cfg.window).unwrap();
    let grid = default_h_grid(hm.hmin, hm.hmax, &breakpoints(c).unwrap());
    cfg.with_h_grid(grid)
}

#[test]
fn two_exponent_spectrum() {
    let lf = leaders(&two(), 18, 0);
    let cfg = config_for(&two(), &lf);
    let hm = hminmax(&lf, cfg.window).unwrap();
    assert!((hm.hmin - 0.5).abs() < 0.05 && (hm.hmax - 1.0).abs() < 0.05, "{} {}", hm.hmin, hm.hmax);
    let rho = large_deviation(&lf, &cfg).unwrap().curve;
    assert!((rho.at(0.5) - 0.5).abs() < 0.1, "{}", rho.at(0.5));
    assert!((rho.at(1.0) - 1.0).abs() < 0.1, "{}", rho.at(1.0));
    let nu = increasing_hull(&lf, &cfg).unwrap();
    for (h, v) in nu.grid.iter().zip(&nu.values) {
        // the band half-width eps + 1/j reaches beta from about 0.85 on
        if *h >= 0.5 && *h < 0.8 {
            assert!((v - 0.5).abs() < 0.1, "nu({h}) = {v}");
        }
    }
    assert!((nu.at(1.0) - 1.0).abs() < 0.1);
}

#[test]
fn asymmetric_cantor_rate_at_alpha() {
    let c = Construction::AsymmetricCantor { alpha: 0.5, beta: 1.0 };
    let lf = leaders(&c, 18, 0);
    let rho = large_deviation(&lf, &config_for(&c, &lf)).unwrap().curve;
    let target = 3f64.log2() / 2.0;
    assert!((rho.at(0.5) - target).abs() < 0.05, "{} vs {target}", rho.at(0.5));
}

#[test]
fn two_exponent_breaks_the_formalism() {
    let lf = leaders(&two(), 18, 0);
    let cfg = config_for(&two(), &lf);
    let rho = large_deviation(&lf, &cfg).unwrap().curve;
    let o = oracle(&two(), &rho.grid).unwrap();
    let report = compare(&rho, &o.d, CompareOptions::new(0.1)).unwrap();
    assert_eq!(report.verdict, Verdict::Invalid);
    assert!((report.witness_h.unwrap() - 0.5).abs() < 0.05);
    assert!((report.sup_distance.unwrap() - 0.5).abs() < 0.1);
    let same = compare(&o.d, &o.d, CompareOptions::new(0.1)).unwrap();
    assert_eq!(same.verdict, Verdict::Valid);
    assert_eq!(same.sup_distance, Some(0.0));
}

#[test]
fn lws_oracle_satisfies_both_formalisms() {
    let c = Construction::LwsCantor { r: Ratio::new(1, 3), alpha: 0.5, eta: 0.4, law: BernoulliLaw::Normalized };
    let grid = mflab::spectra::linspace(0.4f64, 0.9, 51);
    let o = oracle(&c, &grid).unwrap();
    assert_eq!(o.d.values, o.rho.values);
    let hull = concave_hull(&o.rho);
    let (gap, _) = sup_distance(&hull, &o.l, None).unwrap();
    assert!(gap < 1e-9);
    assert!((o.rho.at(0.6) - 0.48).abs() < 1e-9);
}

#[test]
fn lws_mean_count_at_twelve() {
    let c = Construction::LwsCantor { r: Ratio::new(1, 3), alpha: 0.5, eta: 0.4, law: BernoulliLaw::Normalized };
    let total: usize = (0..200)
        .map(|s| {
            let f = GeneratorSpec::new(c.clone(), 12).with_seed(s).build::<f64>().unwrap();
            f.scale(12).iter().filter(|v| **v > 0.0).count()
        })
        .sum();
    let mean = total as f64 / 200.0;
    let target = 4.8f64.exp2();
    assert!((mean / target - 1.0).abs() < 0.15, "{mean} vs {target}");
}

#[test]
fn duplicated_lws_mean_counts() {
    let c = Construction::DuplicatedLws { alpha: 0.4, eta: 0.5, law: BernoulliLaw::Normalized };
    let r8: Vec<u64> = r_j(8).unwrap().into_iter().map(|c| c.k).collect();
    let (mut f_total, mut g_total) = (0usize, 0usize);
    for s in 0..200 {
        let f = GeneratorSpec::new(c.clone(), 8).with_seed(s).build::<f64>().unwrap();
        let row = f.scale(8);
        f_total += row.iter().filter(|v| **v > 0.0).count();
        g_total += r8.iter().filter(|k| row[**k as usize] > 0.0).count();
    }
    let f_mean = f_total as f64 / 200.0;
    let g_mean = g_total as f64 / 200.0;
    assert!((f_mean / 16.0 - 1.0).abs() < 0.15, "{f_mean}");
    // 2^((eta - 1/4) j) = 4
    assert!((g_mean / 4.0 - 1.0).abs() < 0.25, "{g_mean}");
    assert_eq!(CantorSpec::quarter_duplicated().stage_for_scale(8), 2);
}
