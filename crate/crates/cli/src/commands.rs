//! One function per experiment command. Each returns the JSON results and a
//! CSV table; the caller writes them out.

use serde_json::{json, Value};
use stabfield::empirical::{empirical_point_measure, TestFunction};
use stabfield::estimators::{
    estimate_gram, estimate_lln, estimate_scaled_cumulant, estimate_value_law, estimate_variance_direct,
    estimate_variance_pair, rate_quadratic_form, z_score, CumulantPoint, EstimateReport,
    FieldSource, FluctuationSource, GaussianSource, PairingSource,
};
use stabfield::geometry::{sample_poisson_seeded, TorusGeometry};
use stabfield::stabilization::{default_grid, fit_tail, sample_radius_distribution};
use stabfield::specinfo::{verify_suite, DiscreteConfigSpace};

use crate::config::{CumulantSourceKind, ExperimentConfig};
use crate::error::CliError;
use crate::report::{real, Table};

/// Experiment commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Sample,
    ValueLaw,
    Lln,
    Variance,
    RadiusTails,
    CumulantScan,
    RateEval,
    SpecinfoVerify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::ValueLaw => "value-law",
            Command::Lln => "lln",
            Command::Variance => "variance",
            Command::RadiusTails => "radius-tails",
            Command::CumulantScan => "cumulant-scan",
            Command::RateEval => "rate-eval",
            Command::SpecinfoVerify => "specinfo-verify",
        }
    }
}

pub struct Output {
    pub results: Value,
    pub table: Table,
    /// Extra files written next to the report.
    pub files: Vec<(String, Vec<u8>)>,
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

pub fn execute(cmd: Command, cfg: &ExperimentConfig) -> Result<Output, CliError> {
    match cmd {
        Command::Sample => sample(cfg),
        Command::ValueLaw => value_law(cfg),
        Command::Lln => lln(cfg),
        Command::Variance => variance(cfg),
        Command::RadiusTails => radius_tails(cfg),
        Command::CumulantScan => cumulant_scan(cfg),
        Command::RateEval => rate_eval(cfg),
        Command::SpecinfoVerify => specinfo_verify(cfg),
    }
}

fn sample(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let p = &cfg.process;
    let sim = p.simulation();
    let g = TorusGeometry::from_volume(p.dimension, p.lambda)?;
    let config = sample_poisson_seeded(&g, p.tau, &sim.grain, cfg.estimation.seed)?;
    let z = empirical_point_measure(&config, &cfg.model)?;
    let coords: Vec<String> = (1..=p.dimension).map(|i| format!("x{i}")).collect();
    let mut header: Vec<&str> = coords.iter().map(String::as_str).collect();
    header.extend(["time_mark", "aux_mark", "value", "weight"]);
    let mut table = Table::new(&header);
    for (pt, (v, w)) in config.points().iter().zip(z.atoms()) {
        let mut row: Vec<String> = pt.position[..p.dimension].iter().map(|&c| real(c)).collect();
        row.extend([real(pt.time_mark), real(pt.aux_mark), real(v), real(w)]);
        table.push(row);
    }
    let mut text = Vec::new();
    config.write_text(&mut text)?;
    let f = &cfg.test_function;
    Ok(Output {
        results: json!([{
            "label": "sample",
            "points": config.len(),
            "lambda": p.lambda,
            "side_length": g.side_length(),
            "total_weight": z.total_weight(),
            "pairing": z.pair_with(|v| f.eval(v)),
        }]),
        table,
        files: vec![("configuration.txt".into(), text)],
    })
}

fn value_law(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let e = &cfg.estimation;
    let law = estimate_value_law(
        &cfg.model,
        &cfg.process.simulation(),
        cfg.value_law.lambda_probe,
        e.replicates,
        cfg.value_law.bins,
        e.seed,
    )?;
    let mut table = Table::new(&["lo", "hi", "probability", "std_error"]);
    for (i, b) in law.bins.iter().enumerate() {
        table.push(vec![real(law.edges[i]), real(law.edges[i + 1]), real(b.value), real(b.std_error)]);
    }
    let mut distinct: Vec<f64> = law.samples.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let atoms: Vec<EstimateReport> =
        if distinct.len() <= 32 { distinct.iter().map(|&v| law.probability_of(v).with("value", v)).collect() } else { vec![] };
    Ok(Output { results: json!([law.mean, {"label": "bins", "bins": law.bins, "edges": law.edges}, {"label": "atoms", "atoms": atoms}]), table, files: vec![] })
}

/// `τ ⟨f, ν⟩` from the value law, the LLN target.
fn lln_target(cfg: &ExperimentConfig, f: &TestFunction) -> Result<EstimateReport, CliError> {
    let e = &cfg.estimation;
    let sim = cfg.process.simulation();
    let law = estimate_value_law(&cfg.model, &sim, cfg.value_law.lambda_probe, e.replicates, 1, e.seed ^ 0x5eed)?;
    let fv: Vec<f64> = law.samples.iter().map(|&v| sim.intensity * f.eval(v)).collect();
    Ok(EstimateReport::from_samples("lln-target", &fv, e.seed ^ 0x5eed).with("lambda_probe", cfg.value_law.lambda_probe))
}

fn lln(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let e = &cfg.estimation;
    let f = &cfg.test_function;
    let reports = estimate_lln(&cfg.model, f, &cfg.process.simulation(), &cfg.process.lambda_grid, e.replicates, e.seed)?;
    let target = lln_target(cfg, f)?;
    let mut table = Table::new(&["lambda", "value", "std_error", "replicates", "target", "target_std_error", "z"]);
    for r in &reports {
        let lambda = cfg.process.lambda_grid[table.rows.len()];
        table.push(vec![
            real(lambda),
            real(r.value),
            real(r.std_error),
            r.replicates.to_string(),
            real(target.value),
            real(target.std_error),
            real(z_score(r, &target)),
        ]);
    }
    let mut results: Vec<Value> = reports.iter().map(to_value).collect();
    results.push(to_value(&target));
    Ok(Output { results: Value::Array(results), table, files: vec![] })
}

fn variance(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let e = &cfg.estimation;
    let f = &cfg.test_function;
    let sim = cfg.process.simulation();
    let direct = estimate_variance_direct(&cfg.model, f, &sim, &cfg.process.lambda_grid, e.replicates, e.seed)?;
    let pair = estimate_variance_pair(&cfg.model, f, &sim, &cfg.pair.to_core(), e.seed ^ 0xa11)?;
    let last = direct.last().expect("non-empty grid");
    let matched: Vec<f64> = [&pair.factor_half, &pair.factor_one]
        .into_iter()
        .filter(|r| z_score(last, r) <= 3.0)
        .map(factor_of)
        .collect();
    let mut table = Table::new(&["estimator", "lambda", "pair_term_factor", "value", "std_error"]);
    for (r, &lambda) in direct.iter().zip(&cfg.process.lambda_grid) {
        table.push(vec!["direct".into(), real(lambda), String::new(), real(r.value), real(r.std_error)]);
    }
    for r in [&pair.factor_half, &pair.factor_one] {
        table.push(vec!["pair".into(), String::new(), real(factor_of(r)), real(r.value), real(r.std_error)]);
    }
    let mut results: Vec<Value> = direct.iter().map(to_value).collect();
    results.push(json!({"label": "pair", "estimates": pair}));
    results.push(json!({
        "label": "factor-match",
        "lambda": cfg.process.lambda_grid.last(),
        "matched_factors": matched,
        "z_half": z_score(last, &pair.factor_half),
        "z_one": z_score(last, &pair.factor_one),
    }));
    Ok(Output { results: Value::Array(results), table, files: vec![] })
}

fn factor_of(r: &EstimateReport) -> f64 {
    match r.metadata.get("pair_term_factor") {
        Some(stabfield::estimators::Meta::Real(c)) => *c,
        _ => f64::NAN,
    }
}

fn radius_tails(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let r = &cfg.radius;
    let p = &cfg.process;
    let g = TorusGeometry::from_volume(p.dimension, r.lambda)?;
    let grid = if r.grid.is_empty() { default_grid(&g, p.tau, r.grid_size)? } else { r.grid.clone() };
    let sim = p.simulation();
    let est = sample_radius_distribution(
        &cfg.model,
        p.tau,
        r.lambda,
        p.dimension,
        r.n_points,
        &grid,
        r.resamples,
        cfg.estimation.seed,
        &sim.grain,
    )?;
    let fit = fit_tail(&est, r.min_count_per_bin)?;
    let mut table = Table::new(&["r", "survival", "log_survival", "n_exceed"]);
    for i in 0..fit.radii.len() {
        table.push(vec![real(fit.radii[i]), real(fit.survival[i]), real(fit.log_survival[i]), fit.n_exceed[i].to_string()]);
    }
    let certified = est.iter().filter(|e| e.certified).count();
    Ok(Output {
        results: json!([{
            "label": "tail-fit",
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "c_hat": -fit.slope,
            "bins_used": fit.bins_used,
            "min_count_per_bin": fit.min_count_per_bin,
            "samples": fit.samples,
            "certified": certified,
            "uncertified": est.len() - certified,
            "grid": grid,
        }]),
        table,
        files: vec![],
    })
}

fn cumulant_rows(points: &[CumulantPoint]) -> Table {
    let mut table =
        Table::new(&["lambda", "alpha", "cumulant", "std_error", "half_variance", "half_variance_std_error", "ratio", "flagged"]);
    for p in points {
        table.push(vec![
            real(p.lambda),
            real(p.alpha),
            real(p.cumulant.value),
            real(p.cumulant.std_error),
            real(p.half_variance.value),
            real(p.half_variance.std_error),
            real(p.cumulant.value / p.half_variance.value),
            p.flagged.to_string(),
        ]);
    }
    table
}

fn cumulant_scan(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let c = &cfg.cumulant;
    let seed = cfg.estimation.seed;
    let sim = cfg.process.simulation();
    let source: Box<dyn FluctuationSource> = match c.source {
        CumulantSourceKind::Pairing => {
            Box::new(PairingSource { spec: cfg.model.clone(), f: cfg.test_function.clone(), sim, seed })
        }
        CumulantSourceKind::Field => Box::new(FieldSource {
            spec: cfg.model.clone(),
            phi: c.local.clone(),
            nodes_per_volume: c.nodes_per_volume,
            sim,
            seed,
        }),
        CumulantSourceKind::Gaussian => Box::new(GaussianSource { variance: c.variance, seed }),
    };
    let points = estimate_scaled_cumulant(source.as_ref(), &c.scan(), seed)?;
    let table = cumulant_rows(&points);
    Ok(Output { results: to_value(&points), table, files: vec![] })
}

fn rate_eval(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let rt = &cfg.rate;
    let e = &cfg.estimation;
    let basis = estimate_gram(&cfg.model, &rt.basis, &cfg.process.simulation(), rt.lambda, e.replicates, e.seed)?;
    let mut table = Table::new(&["k", "rate", "floor"]);
    let mut values = Vec::new();
    for k in 1..=basis.size() {
        let sub = basis.truncated(k);
        let trace: f64 = (0..k).map(|i| sub.gram[i][i]).sum();
        let floor = rt.eigen_floor_scale * trace.abs() / k as f64;
        let j = rate_quadratic_form(&sub, &rt.gamma[..k], Some(floor))?;
        table.push(vec![k.to_string(), real(j), real(floor)]);
        values.push(j);
    }
    let monotone = values.windows(2).all(|w| w[1] >= w[0]);
    Ok(Output {
        results: json!([{"label": "rate", "basis": basis, "gamma": rt.gamma, "nested_rates": values, "monotone": monotone}]),
        table,
        files: vec![],
    })
}

fn specinfo_verify(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let s = &cfg.specinfo;
    let space = DiscreteConfigSpace::new(s.cells, s.max_occupancy, s.cell_volume, cfg.process.tau)?;
    let checks = verify_suite(&space, s.instances, s.perturbations, cfg.estimation.seed)?;
    let mut table = Table::new(&["identity", "instance_hash", "residual", "pass"]);
    for c in &checks {
        table.push(vec![c.identity.clone(), c.instance_hash.clone(), real(c.residual), c.pass.to_string()]);
    }
    let max_residual = checks.iter().map(|c| c.residual).fold(0.0f64, f64::max);
    let all_pass = checks.iter().all(|c| c.pass);
    if !all_pass {
        return Err(CliError::Core(stabfield::Error::Numeric(format!(
            "{} identity checks failed (max residual {max_residual})",
            checks.iter().filter(|c| !c.pass).count()
        ))));
    }
    Ok(Output {
        results: json!([{"label": "specinfo", "states": space.states(), "checks": checks, "max_residual": max_residual, "all_pass": all_pass}]),
        table,
        files: vec![],
    })
}
