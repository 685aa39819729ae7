use std::io::Write;
use std::path::{Path, PathBuf};

use mflab::generators::Construction;
use mflab::genspace::{boyd_indices, cn_project, lambda_sigma_norm, leadersuite_check, make_oscillating, unit_ball_field};
use mflab::io::{self, FLAG_LEADERS};
use mflab::leaders::{compute_leaders, holder_estimate, LeaderField};
use mflab::oracles::{breakpoints, compare, oracle, CompareOptions};
use mflab::spectra::{
    concave_hull, default_h_grid, hminmax_pooled, increasing_hull_pooled, large_deviation_pooled, legendre_spectrum,
    scaling_function_pooled, LeaderStats,
};
use mflab::{AdmissibleSequence, CoefficientField, EstimatorConfig, FieldMeta, GeneratorSpec, SpectrumCurve, SpectrumKind};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ExperimentConfig;
use crate::{CliError, Command, Common, FileFormat, GenspaceCommand, Which};

type Result<T> = std::result::Result<T, CliError>;

fn pre(msg: impl Into<String>) -> CliError {
    CliError::Precondition(msg.into())
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate { common, format } => generate(&common, format),
        Command::Leaders { input, common } => leaders(&input, &common),
        Command::Spectrum { inputs, which, points, grid, common } => spectrum(&inputs, which, points, grid, &common),
        Command::Holder { input, points, common } => spectrum(&[input], Which::Holder, Some(points), None, &common),
        Command::Oracle { grid, like, common } => oracle_cmd(grid, like.as_deref(), &common),
        Command::Compare { estimate, against, reference, tol, support_tol, common } => {
            compare_cmd(&estimate, against.as_deref(), &reference, tol, support_tol, &common)
        }
        Command::Genspace { command } => genspace(command),
    }
}

struct Resolved {
    cfg: ExperimentConfig,
    construction: Option<Construction>,
}

fn resolve(common: &Common) -> Result<Resolved> {
    let cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let construction = match &common.construction {
        Some(s) => Some(serde_json::from_str::<Construction>(s).map_err(|e| pre(format!("bad --construction: {e}")))?),
        None => cfg.generator.as_ref().map(|g| g.construction.clone()),
    };
    Ok(Resolved { cfg, construction })
}

fn estimator(r: &Resolved, common: &Common, jmax: u32) -> Result<EstimatorConfig<f64>> {
    let mut e = r.cfg.estimator.resolve(jmax);
    if let Some(w) = common.scale_window {
        e.window = w;
    }
    if let Some(s) = &common.eps_schedule {
        e.eps_schedule = s.clone();
    }
    e.validate(jmax)?;
    Ok(e)
}

fn write_json(path: Option<&Path>, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    match path {
        Some(p) => Ok(io::write_atomic(p, |w| Ok(writeln!(w, "{text}")?))?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn save_field(path: &Path, rows: &[Vec<f64>], flags: u32) -> Result<()> {
    if is_csv(path) {
        Ok(io::write_atomic(path, |w| io::write_coefficient_csv(w, rows))?)
    } else {
        Ok(io::save_binary(path, rows, flags)?)
    }
}

enum Loaded {
    Coefficients(CoefficientField<f64>),
    Leaders(LeaderField<f64>),
}

fn load(path: &Path) -> Result<Loaded> {
    let name = path.display().to_string();
    if is_csv(path) {
        let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        let rows = io::read_coefficient_csv(file)?;
        return Ok(Loaded::Coefficients(CoefficientField::new(rows, FieldMeta::external(&name))?));
    }
    let (rows, flags) = io::load_binary::<f64>(path).map_err(|e| match e {
        mflab::Error::Io(e) => CliError::Io(format!("{name}: {e}")),
        other => CliError::from(other),
    })?;
    if flags & FLAG_LEADERS != 0 {
        Ok(Loaded::Leaders(LeaderField::from_rows(rows)?))
    } else {
        Ok(Loaded::Coefficients(CoefficientField::new(rows, FieldMeta::external(&name))?))
    }
}

fn load_field(path: &Path) -> Result<CoefficientField<f64>> {
    match load(path)? {
        Loaded::Coefficients(f) => Ok(f),
        Loaded::Leaders(_) => Err(pre(format!("{} holds leaders, not coefficients", path.display()))),
    }
}

fn load_leaders(path: &Path) -> Result<LeaderField<f64>> {
    match load(path)? {
        Loaded::Coefficients(f) => Ok(compute_leaders(&f)),
        Loaded::Leaders(l) => Ok(l),
    }
}

fn generate(common: &Common, format: FileFormat) -> Result<()> {
    let r = resolve(common)?;
    let c = r.construction.clone().ok_or_else(|| pre("no construction given (use --config or --construction)"))?;
    c.validate()?;
    let jmax = common
        .jmax
        .or(r.cfg.generator.as_ref().map(|g| g.jmax))
        .ok_or_else(|| pre("no jmax given (use --jmax or the config)"))?;
    let seeds: Vec<Option<u64>> = if c.is_random() {
        let s = common
            .seeds
            .clone()
            .map(|s| s.0)
            .or(common.seed.map(|s| vec![s]))
            .filter(|s| !s.is_empty())
            .or((!r.cfg.seeds.is_empty()).then(|| r.cfg.seeds.clone()))
            .or(r.cfg.generator.as_ref().and_then(|g| g.seed).map(|s| vec![s]))
            .ok_or_else(|| pre(format!("{} is random and needs at least one seed", c.name())))?;
        s.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let out = common.out.clone().or(r.cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let ext = match format {
        FileFormat::Binary => "mfld",
        FileFormat::Csv => "csv",
    };
    let emit = r.cfg.emit.clone();
    let built: Vec<(Option<u64>, Value, LeaderField<f64>)> = seeds
        .par_iter()
        .map(|seed| {
            let mut spec = GeneratorSpec::new(c.clone(), jmax);
            spec.seed = *seed;
            let field = spec.build::<f64>()?;
            let stem = match seed {
                Some(s) => format!("{}-seed{s}", c.name()),
                None => c.name().to_string(),
            };
            let mut files = Vec::new();
            if emit.coefficients {
                let p = out.join(format!("{stem}.{ext}"));
                save_field(&p, field.rows(), 0)?;
                files.push(p.display().to_string());
            }
            let lf = compute_leaders(&field);
            if emit.leaders {
                let p = out.join(format!("{stem}.leaders.mfld"));
                io::save_binary(&p, lf.rows(), FLAG_LEADERS)?;
                files.push(p.display().to_string());
            }
            let counts: Vec<usize> = (0..=jmax).map(|j| field.nonzero_count(j)).collect();
            Ok((*seed, json!({ "seed": seed, "files": files, "nonzero": counts }), lf))
        })
        .collect::<Result<_>>()?;
    let mut summary = json!({
        "construction": c,
        "jmax": jmax,
        "outputs": built.iter().map(|b| b.1.clone()).collect::<Vec<_>>(),
    });
    if emit.spectra || emit.report || emit.plotdata {
        let lfs: Vec<LeaderField<f64>> = built.into_iter().map(|b| b.2).collect();
        let analysis = analyse_pooled(&r, common, &lfs, Some(&c))?;
        if emit.spectra {
            let curves: Vec<&SpectrumCurve<f64>> = analysis.curves.iter().collect();
            io::write_atomic(&out.join("spectra.csv"), |w| io::write_spectrum_csv(w, &curves))?;
        }
        if emit.plotdata {
            for curve in &analysis.curves {
                io::write_atomic(&out.join(format!("{}.dat", curve.kind.label())), |w| {
                    for (h, v) in curve.grid.iter().zip(&curve.values) {
                        if v.is_finite() {
                            writeln!(w, "{h} {v}")?;
                        }
                    }
                    Ok(())
                })?;
            }
        }
        if emit.report {
            write_json(Some(&out.join("report.json")), &analysis.report)?;
        }
        summary["verdict"] = analysis.report["compare"].clone();
    }
    write_json(None, &summary)
}

struct Pooled {
    curves: Vec<SpectrumCurve<f64>>,
    report: Value,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Diagnostics {
    fields: usize,
    jmax: u32,
    window: (u32, u32),
    eps_schedule: Vec<f64>,
    zero_counts: Vec<(u32, u64)>,
    truncation_bias_scales: Vec<u32>,
    hmin: f64,
    hmax: f64,
}

fn diagnostics(stats: &LeaderStats<f64>, lf: &LeaderField<f64>, cfg: &EstimatorConfig<f64>, hm: (f64, f64)) -> Diagnostics {
    let jmax = stats.jmax();
    Diagnostics {
        fields: stats.fields(),
        jmax,
        window: cfg.window,
        eps_schedule: cfg.eps_schedule.clone(),
        zero_counts: (0..=jmax).map(|j| (j, stats.zero_count(j))).collect(),
        truncation_bias_scales: (0..=jmax).filter(|&j| lf.truncation_bias(j)).collect(),
        hmin: hm.0,
        hmax: hm.1,
    }
}

fn pooled_stats(lfs: &[LeaderField<f64>]) -> Result<LeaderStats<f64>> {
    LeaderStats::pooled(lfs).map_err(|e| match e {
        mflab::Error::Precondition(m) if m.contains("jmax") => CliError::Mismatch(m),
        other => other.into(),
    })
}

fn grid_for(
    stats: &LeaderStats<f64>,
    cfg: &EstimatorConfig<f64>,
    explicit: Option<(f64, f64, usize)>,
    c: Option<&Construction>,
) -> Result<(Vec<f64>, (f64, f64))> {
    let hm = hminmax_pooled(stats, cfg.window)?;
    let grid = match (explicit, &cfg.h_grid) {
        (Some((lo, hi, n)), _) => mflab::spectra::linspace(lo, hi, n),
        (None, Some(g)) => g.clone(),
        (None, None) => {
            let extra = c.and_then(|c| breakpoints(c).ok()).unwrap_or_default();
            default_h_grid(hm.hmin, hm.hmax, &extra)
        }
    };
    Ok((grid, (hm.hmin, hm.hmax)))
}

fn analyse_pooled(r: &Resolved, common: &Common, lfs: &[LeaderField<f64>], c: Option<&Construction>) -> Result<Pooled> {
    let stats = pooled_stats(lfs)?;
    let cfg = estimator(r, common, stats.jmax())?;
    let (grid, hm) = grid_for(&stats, &cfg, None, c)?;
    let cfg = cfg.with_h_grid(grid.clone());
    let ld = large_deviation_pooled(&stats, &cfg)?;
    let legendre = legendre_spectrum(&scaling_function_pooled(&stats, &cfg)?, &grid)?;
    let nu = increasing_hull_pooled(&stats, &cfg)?;
    let hull = concave_hull(&ld.curve);
    let mut report = json!({
        "diagnostics": diagnostics(&stats, &lfs[0], &cfg, hm),
        "chosenEps": ld.chosen_eps,
        "rhoInfinity": ld.at_infinity.terminal,
    });
    let mut curves = vec![ld.curve.clone(), legendre, nu, hull];
    if let Some(c) = c {
        if let Ok(o) = oracle(c, &grid) {
            let rep = compare(&ld.curve, &o.d, CompareOptions::new(0.1))?;
            report["compare"] = serde_json::to_value(rep).map_err(|e| CliError::Format(e.to_string()))?;
            curves.extend([o.d, o.rho, o.l]);
        }
    }
    Ok(Pooled { curves, report })
}

fn leaders(input: &Path, common: &Common) -> Result<()> {
    let f = load_field(input)?;
    let lf = compute_leaders(&f);
    let out = common.out.clone().unwrap_or_else(|| input.with_extension("leaders.mfld"));
    io::save_binary(&out, lf.rows(), FLAG_LEADERS)?;
    let biased: Vec<u32> = (0..=lf.jmax()).filter(|&j| lf.truncation_bias(j)).collect();
    write_json(None, &json!({ "output": out.display().to_string(), "jmax": lf.jmax(), "truncationBiasScales": biased }))
}

fn spectrum(
    inputs: &[PathBuf],
    which: Which,
    points: Option<Vec<f64>>,
    grid: Option<(f64, f64, usize)>,
    common: &Common,
) -> Result<()> {
    let r = resolve(common)?;
    let lfs: Vec<LeaderField<f64>> = inputs.par_iter().map(|p| load_leaders(p)).collect::<Result<_>>()?;
    let stats = pooled_stats(&lfs)?;
    let cfg = estimator(&r, common, stats.jmax())?;
    let csv_out = common.out.clone();
    let json_out = csv_out.as_ref().map(|p| p.with_extension("json"));
    if which == Which::Holder {
        if lfs.len() != 1 {
            return Err(pre("holder mode takes exactly one input"));
        }
        let points = points.ok_or_else(|| pre("holder mode needs --points"))?;
        let est: Vec<_> =
            points.iter().map(|&x| holder_estimate(x, &lfs[0], cfg.window).map(|e| (x, e))).collect::<mflab::Result<_>>()?;
        let write = |w: &mut dyn Write| -> mflab::Result<()> {
            writeln!(w, "x,hhat,slope")?;
            for (x, e) in &est {
                let slope = e.slope.map_or("nan".to_string(), |s| s.to_string());
                writeln!(w, "{x},{},{slope}", e.hhat)?;
            }
            Ok(())
        };
        match &csv_out {
            Some(p) => io::write_atomic(p, write)?,
            None => write(&mut std::io::stdout().lock())?,
        }
        let report = json!({
            "which": "holder",
            "window": cfg.window,
            "points": est.iter().map(|(x, e)| json!({ "x": x, "hhat": e.hhat, "slope": e.slope, "exponents": e.exponents })).collect::<Vec<_>>(),
        });
        return emit_report(json_out.as_deref(), &report);
    }
    let (grid, hm) = grid_for(&stats, &cfg, grid, r.construction.as_ref())?;
    let cfg = cfg.with_h_grid(grid.clone());
    let mut report = json!({ "which": format!("{which:?}").to_lowercase(), "diagnostics": diagnostics(&stats, &lfs[0], &cfg, hm) });
    let curve = match which {
        Which::Legendre => {
            let sf = scaling_function_pooled(&stats, &cfg)?;
            report["scalingFunction"] = json!({ "p": sf.p, "eta": sf.eta, "slope": sf.slope });
            legendre_spectrum(&sf, &grid)?
        }
        Which::Largedev | Which::Concave => {
            let ld = large_deviation_pooled(&stats, &cfg)?;
            report["chosenEps"] = json!(ld.chosen_eps);
            report["extrapolated"] = json!(ld.extrapolated);
            report["epsProfile"] = json!(ld.profile);
            report["atInfinity"] = json!(ld.at_infinity);
            if which == Which::Concave {
                concave_hull(&ld.curve)
            } else {
                ld.curve
            }
        }
        Which::Hull => increasing_hull_pooled(&stats, &cfg)?,
        Which::Holder => unreachable!(),
    };
    match &csv_out {
        Some(p) => io::write_atomic(p, |w| io::write_spectrum_csv(w, &[&curve]))?,
        None => io::write_spectrum_csv(std::io::stdout().lock(), &[&curve])?,
    }
    emit_report(json_out.as_deref(), &report)
}

fn emit_report(path: Option<&Path>, report: &Value) -> Result<()> {
    match path {
        Some(p) => write_json(Some(p), report),
        None => {
            let text = serde_json::to_string(report).map_err(|e| CliError::Format(e.to_string()))?;
            eprintln!("{text}");
            Ok(())
        }
    }
}

fn read_curves(path: &Path) -> Result<Vec<SpectrumCurve<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(io::read_spectrum_csv(file)?)
}

fn oracle_cmd(grid: Option<(f64, f64, usize)>, like: Option<&Path>, common: &Common) -> Result<()> {
    let r = resolve(common)?;
    let c = r.construction.ok_or_else(|| pre("no construction given (use --config or --construction)"))?;
    c.validate()?;
    let grid = match (grid, like) {
        (Some((lo, hi, n)), _) => mflab::spectra::linspace(lo, hi, n),
        (None, Some(p)) => read_curves(p)?.swap_remove(0).grid,
        (None, None) => match r.cfg.estimator.h_grid {
            Some((lo, hi, n)) => mflab::spectra::linspace(lo, hi, n),
            None => {
                let bp = breakpoints(&c)?;
                let lo = bp.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = bp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                default_h_grid(lo, hi, &bp)
            }
        },
    };
    let o = oracle(&c, &grid)?;
    match &common.out {
        Some(p) => io::write_atomic(p, |w| io::write_spectrum_csv(w, &[&o.d, &o.rho, &o.l]))?,
        None => io::write_spectrum_csv(std::io::stdout().lock(), &[&o.d, &o.rho, &o.l])?,
    }
    let info = json!({
        "construction": c,
        "dInfinity": o.d_infinity,
        "rhoInfinity": o.rho_infinity,
        "failureGap": o.failure_gap,
        "supportMismatch": o.support_mismatch,
    });
    emit_report(common.out.as_ref().map(|p| p.with_extension("json")).as_deref(), &info)
}

fn compare_cmd(
    estimate: &Path,
    against: Option<&Path>,
    reference: &str,
    tol: f64,
    support_tol: Option<f64>,
    common: &Common,
) -> Result<()> {
    let kind = SpectrumKind::parse(reference).ok_or_else(|| pre(format!("unknown reference kind '{reference}'")))?;
    let curves = read_curves(estimate)?;
    let est = curves
        .iter()
        .find(|c| !matches!(c.kind, SpectrumKind::OracleD | SpectrumKind::OracleRho | SpectrumKind::OracleL))
        .cloned()
        .ok_or_else(|| CliError::Format(format!("{} holds no estimated curve", estimate.display())))?;
    let reference = match against {
        Some(p) => read_curves(p)?
            .into_iter()
            .find(|c| c.kind == kind)
            .ok_or_else(|| CliError::Format(format!("{} has no {} curve", p.display(), kind.label())))?,
        None => {
            let r = resolve(common)?;
            let c = r.construction.ok_or_else(|| pre("no oracle given (use --against, --config or --construction)"))?;
            let o = oracle(&c, &est.grid)?;
            match kind {
                SpectrumKind::OracleRho => o.rho,
                SpectrumKind::OracleL => o.l,
                _ => o.d,
            }
        }
    };
    let mut opts = CompareOptions::new(tol);
    if let Some(s) = support_tol {
        opts.support_tol = s;
    }
    let report = compare(&est, &reference, opts)?;
    let value = serde_json::to_value(&report).map_err(|e| CliError::Format(e.to_string()))?;
    write_json(common.out.as_deref(), &value)
}

fn load_sequence(path: &Path) -> Result<AdmissibleSequence<f64>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(io::read_sequence_csv(file)?)
}

fn genspace(cmd: GenspaceCommand) -> Result<()> {
    match cmd {
        GenspaceCommand::Oscillate { alpha, beta, seq_jmax, out } => {
            let seq = make_oscillating(alpha, beta, seq_jmax)?;
            io::write_atomic(&out, |w| io::write_sequence_csv(w, &seq))?;
            write_json(None, &json!({ "output": out.display().to_string(), "constant": seq.constant() }))
        }
        GenspaceCommand::Boyd { sequence } => {
            let b = boyd_indices(&load_sequence(&sequence)?)?;
            write_json(None, &json!({ "lower": b.lower, "upper": b.upper }))
        }
        GenspaceCommand::Norm { sequence, field } => {
            let n = lambda_sigma_norm(&load_field(&field)?, &load_sequence(&sequence)?)?;
            write_json(None, &json!({ "norm": n }))
        }
        GenspaceCommand::Ball { sequence, jmax, seed, out } => {
            let f = unit_ball_field(&load_sequence(&sequence)?, jmax, seed)?;
            save_field(&out, f.rows(), 0)?;
            write_json(None, &json!({ "output": out.display().to_string(), "jmax": jmax, "seed": seed }))
        }
        GenspaceCommand::Project { sequence, field, n, out } => {
            let seq = load_sequence(&sequence)?;
            let e = load_field(&field)?;
            let g = cn_project(&e, &seq, n)?;
            save_field(&out, g.rows(), 0)?;
            let dist = (0..=e.jmax())
                .flat_map(|j| {
                    let s = seq.sigma(j);
                    e.scale(j).iter().zip(g.scale(j)).map(move |(x, y)| s * (x - y).abs())
                })
                .fold(0.0, f64::max);
            write_json(None, &json!({ "output": out.display().to_string(), "distance": dist }))
        }
        GenspaceCommand::Suite { sequence, field } => {
            let b = leadersuite_check(&load_field(&field)?, &load_sequence(&sequence)?)?;
            write_json(None, &serde_json::to_value(b).map_err(|e| CliError::Format(e.to_string()))?)
        }
    }
}
