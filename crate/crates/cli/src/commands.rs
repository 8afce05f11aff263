use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use warpfda::estimator::PooledFit;
use warpfda::inference::{bootstrap, cv_usefulness, BootstrapConfig, CvConfig, CvMode};
use warpfda::simulate::{monte_carlo, EstimatorKind, MeanFunction, MonteCarloConfig, SimSpec, TrueWarp};
use warpfda::theory::{
    asymptotic_mse, improvement_ratios, lower_extension_sequence, symmetric_decomposition_check, AnalyticModel,
};
use warpfda::{
    load_dataset, register, Bandwidth, EstimateConfig, FunctionalDataset, GridSpec, Identity, Kernel, MeanCurve,
    ParseOptions, PiecewiseLinearWarp, RegistrationConfig, TiePolicy,
};

use crate::cli::{
    AsymptoticsArgs, BootstrapArgs, Command, CvArgs, EstimateArgs, KernelChoice, Mode, RegisterArgs,
    RegistrationArgs, SimulateArgs, SmoothingArgs, SummarizeArgs, SymmetryArgs, Ties,
};
use crate::error::CliError;
use crate::output::{fingerprint, num, to_json_text, write_with_manifest, InputRecord, Manifest};

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub arguments: Vec<String>,
}

impl Context {
    fn manifest(&self, command: &str, seed: Option<u64>, inputs: Vec<InputRecord>, settings: serde_json::Value) -> Manifest {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            arguments: self.arguments.clone(),
            inputs,
            outputs: Vec::new(),
            settings,
        }
    }
}

pub fn run(command: &Command, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Summarize(a) => summarize(a),
        Command::Register(a) => register_cmd(a, ctx),
        Command::Estimate(a) => estimate(a, ctx),
        Command::Bootstrap(a) => bootstrap_cmd(a, ctx),
        Command::Cv(a) => cv(a, ctx),
        Command::Simulate(a) => simulate(a, ctx),
        Command::Asymptotics(a) => asymptotics(a, ctx),
        Command::Symmetry(a) => symmetry(a, ctx),
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn tie_policy(t: Ties) -> TiePolicy {
    match t {
        Ties::Reject => TiePolicy::Reject,
        Ties::Jitter => TiePolicy::Jitter,
    }
}

fn load(path: &Path, ties: Ties) -> Result<FunctionalDataset, CliError> {
    require_file(path)?;
    let opts = ParseOptions {
        ties: tie_policy(ties),
        ..ParseOptions::default()
    };
    Ok(load_dataset(path, &opts)?)
}

fn bandwidth_flag(name: &str, value: &str) -> Result<Bandwidth, CliError> {
    if value.trim().eq_ignore_ascii_case("auto") {
        return Ok(Bandwidth::Auto);
    }
    match value.trim().parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(CliError::Usage(format!("--{name}: expected 'auto' or a positive number, got '{value}'"))),
    }
}

fn number_list(name: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|h| *h > 0.0 && h.is_finite())
                .ok_or_else(|| CliError::Usage(format!("--{name}: '{s}' is not a positive number")))
        })
        .collect()
}

fn registration_config(a: &RegistrationArgs) -> Result<RegistrationConfig, CliError> {
    Ok(RegistrationConfig {
        knots: a.knots,
        rounds: a.rounds,
        sweeps_per_round: a.sweeps,
        window: a.window,
        steps: a.steps,
        refinement: a.refinement,
        time_bandwidth: bandwidth_flag("ht", &a.ht)?,
        value_bandwidth: bandwidth_flag("hy", &a.hy)?,
        ..RegistrationConfig::default()
    })
}

fn estimate_config(a: &SmoothingArgs) -> Result<EstimateConfig, CliError> {
    Ok(EstimateConfig {
        bandwidth: bandwidth_flag("hn", &a.hn)?,
        kernel: Kernel::truncated(a.kernel_cutoff)?,
        grid: GridSpec::Interior { size: a.grid },
        bandwidth_grid: a.hn_grid.as_deref().map(|g| number_list("hn-grid", g)).transpose()?,
        ..EstimateConfig::default()
    })
}

fn summarize(a: &SummarizeArgs) -> Result<(), CliError> {
    let ds = load(&a.input, a.ties)?;
    let s = ds.summarize();
    let diag = ds.diagnostics();
    if a.json {
        let v = json!({
            "label": ds.label(),
            "size": s.size,
            "t_range": [s.t_range.0, s.t_range.1],
            "y_range": [s.y_range.0, s.y_range.1],
            "density": ds.density(),
            "dropped_blank_rows": diag.dropped_blank_rows,
            "jittered_ties": diag.jittered_ties,
        });
        print!("{}", to_json_text(&v));
    } else {
        println!("label               {}", ds.label());
        println!("size                {}", s.size);
        println!("t_min               {}", num(s.t_range.0));
        println!("t_max               {}", num(s.t_range.1));
        println!("y_min               {}", num(s.y_range.0));
        println!("y_max               {}", num(s.y_range.1));
        println!("density             {}", num(ds.density()));
        println!("dropped_blank_rows  {}", diag.dropped_blank_rows);
        println!("jittered_ties       {}", diag.jittered_ties);
    }
    Ok(())
}

fn register_cmd(a: &RegisterArgs, ctx: &Context) -> Result<(), CliError> {
    let ds1 = load(&a.input.ds1, a.input.ties)?;
    let ds2 = load(&a.ds2, a.input.ties)?;
    let cfg = registration_config(&a.reg)?;
    let res = register(&ds1, &ds2, &cfg)?;
    let inputs = vec![fingerprint(&a.input.ds1)?, fingerprint(&a.ds2)?];
    let settings = json!({
        "registration": cfg,
        "time_bandwidth": res.time_bandwidth,
        "value_bandwidth": res.value_bandwidth,
        "initial_criterion": res.initial_criterion,
        "criterion_trace": res.criterion_trace,
        "evaluations": res.evaluations,
    });
    let mut text = res.warp.to_json();
    text.push('\n');
    write_with_manifest(&a.out, text.as_bytes(), ctx.manifest("register", None, inputs, settings))
}

/// Loads or estimates the warp for commands taking `--warp` or `--auto`.
fn resolve_warp(
    warp: Option<&PathBuf>,
    auto: bool,
    ds1: &FunctionalDataset,
    ds2: &FunctionalDataset,
    reg: &RegistrationConfig,
    inputs: &mut Vec<InputRecord>,
) -> Result<PiecewiseLinearWarp, CliError> {
    match (warp, auto) {
        (Some(path), _) => {
            require_file(path)?;
            inputs.push(fingerprint(path)?);
            Ok(PiecewiseLinearWarp::load(path)?)
        }
        (None, true) => Ok(register(ds1, ds2, reg)?.warp),
        (None, false) => Err(CliError::Usage("one of --warp or --auto is required with --ds2".into())),
    }
}

fn curve_csv(curve: &MeanCurve) -> String {
    let mut s = String::from("t,estimate,mass,flag\n");
    for i in 0..curve.grid.len() {
        writeln!(
            s,
            "{},{},{},{}",
            num(curve.grid[i]),
            num(curve.estimate[i]),
            num(curve.mass[i]),
            curve.flags[i].as_str()
        )
        .expect("write to string");
    }
    s
}

fn estimate(a: &EstimateArgs, ctx: &Context) -> Result<(), CliError> {
    let ds1 = load(&a.input.ds1, a.input.ties)?;
    let mut inputs = vec![fingerprint(&a.input.ds1)?];
    let reg = registration_config(&a.reg)?;
    let cfg = estimate_config(&a.smooth)?;
    let (curve, warp) = match &a.ds2 {
        Some(p) => {
            let ds2 = load(p, a.input.ties)?;
            inputs.push(fingerprint(p)?);
            let warp = resolve_warp(a.warp.as_ref(), a.auto, &ds1, &ds2, &reg, &mut inputs)?;
            let curve = PooledFit::new(&ds1, Some(&ds2), &warp, &cfg)?.curve(&cfg.grid)?;
            (curve, Some(warp))
        }
        None => {
            if a.warp.is_some() || a.auto {
                return Err(CliError::Usage("--warp and --auto need --ds2".into()));
            }
            (PooledFit::new(&ds1, None, &Identity, &cfg)?.curve(&cfg.grid)?, None)
        }
    };
    let settings = json!({
        "estimate": cfg,
        "registration": if a.auto { Some(&reg) } else { None },
        "bandwidth": curve.bandwidth,
        "dropped_second_sample": curve.diagnostics.dropped_second_sample,
        "warp": warp.as_ref().map(|w| w.to_file()),
    });
    write_with_manifest(&a.out, curve_csv(&curve).as_bytes(), ctx.manifest("estimate", None, inputs, settings))
}

fn bootstrap_cmd(a: &BootstrapArgs, ctx: &Context) -> Result<(), CliError> {
    let ds1 = load(&a.input.ds1, a.input.ties)?;
    let ds2 = load(&a.ds2, a.input.ties)?;
    let mut inputs = vec![fingerprint(&a.input.ds1)?, fingerprint(&a.ds2)?];
    let reg = registration_config(&a.reg)?;
    let est = estimate_config(&a.smooth)?;
    let warp = resolve_warp(a.warp.as_ref(), a.auto, &ds1, &ds2, &reg, &mut inputs)?;
    let curve = PooledFit::new(&ds1, Some(&ds2), &warp, &est)?.curve(&est.grid)?;
    let cfg = BootstrapConfig {
        replicates: a.replicates,
        alpha: a.alpha,
        seed: a.seed,
        resample_times: !a.fixed_times,
        smooth_residuals: !a.raw_residuals,
        residual_scale: 1.0,
        freeze_registration: a.freeze_registration,
    };
    let out = bootstrap(&ds1, &ds2, &warp, &curve, &reg, &est, &cfg)?;
    let mut s = String::from("t,estimate,se,ci_lo,ci_hi,band_lo,band_hi\n");
    for i in 0..out.grid.len() {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            num(out.grid[i]),
            num(out.estimate[i]),
            num(out.se[i]),
            num(out.ci_lo[i]),
            num(out.ci_hi[i]),
            num(out.band_lo[i]),
            num(out.band_hi[i])
        )
        .expect("write to string");
    }
    let settings = json!({
        "bootstrap": cfg,
        "registration": reg,
        "estimate": est,
        "bandwidth": curve.bandwidth,
        "band_halfwidth": out.band_halfwidth,
        "replicates": out.replicates,
        "failed": out.failed,
    });
    write_with_manifest(&a.out, s.as_bytes(), ctx.manifest("bootstrap", Some(a.seed), inputs, settings))
}

fn cv(a: &CvArgs, ctx: &Context) -> Result<(), CliError> {
    let ds1 = load(&a.input.ds1, a.input.ties)?;
    let ds2 = load(&a.ds2, a.input.ties)?;
    let inputs = vec![fingerprint(&a.input.ds1)?, fingerprint(&a.ds2)?];
    let reg = registration_config(&a.reg)?;
    let est = estimate_config(&a.smooth)?;
    let cfg = CvConfig {
        mode: match a.mode {
            Mode::Exact => CvMode::Exact,
            Mode::Fast => CvMode::Fast,
        },
        max_deletions: a.cv_max_deletions,
    };
    let report = cv_usefulness(&ds1, &ds2, &reg, &est, &cfg)?;
    let settings = json!({ "cv": cfg, "registration": reg, "estimate": est });
    write_with_manifest(&a.out, to_json_text(&report).as_bytes(), ctx.manifest("cv", None, inputs, settings))
}

#[derive(Serialize)]
struct SimulationSettings<'a> {
    spec: &'a SimSpec,
    monte_carlo: &'a MonteCarloConfig,
    registration: &'a RegistrationConfig,
    estimate: &'a EstimateConfig,
}

fn simulate(a: &SimulateArgs, ctx: &Context) -> Result<(), CliError> {
    let mut inputs = Vec::new();
    let mean = if a.mean == "builtin" {
        MeanFunction::Builtin
    } else {
        let p = PathBuf::from(&a.mean);
        let ds = load(&p, Ties::Reject)?;
        inputs.push(fingerprint(&p)?);
        MeanFunction::tabulated(&ds)?
    };
    let warp = match a.true_warp.as_str() {
        "sine" => TrueWarp::default(),
        "identity" => TrueWarp::Identity,
        path => {
            let p = PathBuf::from(path);
            require_file(&p)?;
            inputs.push(fingerprint(&p)?);
            TrueWarp::PiecewiseLinear(PiecewiseLinearWarp::load(&p)?)
        }
    };
    let spec = SimSpec {
        n1: a.n1,
        n2: a.n2,
        mean,
        noise_frac: a.noise_frac,
        warp,
        seed: a.seed,
        ..SimSpec::default()
    };
    let mc = MonteCarloConfig {
        runs: a.runs,
        frozen_bandwidth: a.frozen_hn,
        oracle_registration: a.oracle_registration,
    };
    let reg = registration_config(&a.reg)?;
    let est = EstimateConfig {
        kernel: Kernel::truncated(a.kernel_cutoff)?,
        bandwidth_grid: a.hn_grid.as_deref().map(|g| number_list("hn-grid", g)).transpose()?,
        ..EstimateConfig::default()
    };
    let report = monte_carlo(&spec, &mc, &est, &reg)?;

    let mut s = String::from("t,estimator,bias,sd,mse\n");
    for kind in EstimatorKind::ALL {
        let st = report.stats(kind);
        for i in 0..report.grid.len() {
            writeln!(
                s,
                "{},{},{},{},{}",
                num(report.grid[i]),
                kind.as_str(),
                num(st.bias[i]),
                num(st.sd[i]),
                num(st.mse[i])
            )
            .expect("write to string");
        }
    }
    s.push_str("\nestimator,imse,mean_bandwidth,runs,failed_runs\n");
    for kind in EstimatorKind::ALL {
        let st = report.stats(kind);
        writeln!(
            s,
            "{},{},{},{},{}",
            kind.as_str(),
            num(st.imse),
            num(st.mean_bandwidth),
            report.runs,
            report.failed_runs
        )
        .expect("write to string");
    }
    let settings = serde_json::to_value(SimulationSettings {
        spec: &spec,
        monte_carlo: &mc,
        registration: &reg,
        estimate: &est,
    })
    .expect("settings serialize");
    let settings = json!({
        "simulation": settings,
        "mean_function": if a.mean == "builtin" { "builtin glacial sawtooth" } else { "tabulated from file" },
        "valid_grid_points": report.valid.iter().filter(|v| **v).count(),
    });
    write_with_manifest(&a.out, s.as_bytes(), ctx.manifest("simulate", Some(a.seed), inputs, settings))
}

fn asymptotics(a: &AsymptoticsArgs, ctx: &Context) -> Result<(), CliError> {
    require_file(&a.model)?;
    let text = std::fs::read_to_string(&a.model)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.model.display())))?;
    let model = AnalyticModel::from_config_str(&text)?;
    let kernel = match a.kernel {
        KernelChoice::Gaussian => Kernel::Gaussian,
        KernelChoice::Truncated => Kernel::truncated(a.kernel_cutoff)?,
    };
    let kc = kernel.constants();
    let spec = model.spec();
    let mse = asymptotic_mse(&spec, &kc, a.t, a.n, a.h)?;
    let ratios = improvement_ratios(&spec, a.t, a.beta);

    let mut s = String::new();
    writeln!(s, "t                      {}", num(a.t)).ok();
    writeln!(s, "n                      {}", a.n).ok();
    writeln!(s, "h                      {}", num(a.h)).ok();
    writeln!(s, "kernel ||K||^2         {}", num(kc.k_l2)).ok();
    writeln!(s, "kernel mu2             {}", num(kc.mu2)).ok();
    writeln!(s, "f_g0(t)                {}", num(mse.f_g0)).ok();
    writeln!(s, "variance term          {}", num(mse.variance)).ok();
    writeln!(s, "squared bias term      {}", num(mse.bias_sq)).ok();
    writeln!(s, "total                  {}", num(mse.total)).ok();
    match &ratios {
        Ok(r) => {
            writeln!(s, "rho                    {}", num(r.rho)).ok();
            writeln!(s, "variance factor 2      {}", num(r.variance_ratio_factor2)).ok();
            writeln!(s, "variance limit factor  {}", num(r.variance_ratio_limit_factor1)).ok();
            writeln!(s, "bias^2 factor 2        {}", num(r.bias_ratio_factor2)).ok();
            writeln!(s, "bias^2 limit factor    {}", num(r.bias_ratio_limit_factor1)).ok();
        }
        Err(e) => {
            writeln!(s, "improvement ratios     undefined at t ({e})").ok();
        }
    }
    if !mse.derivatives.finite_difference.is_empty() {
        writeln!(s, "finite differences     {}", mse.derivatives.finite_difference.join(", ")).ok();
    }
    print!("{s}");
    if let Some(out) = &a.out {
        let diag = json!({
            "model": model,
            "kernel": kc,
            "mse": mse,
            "ratios": ratios.as_ref().ok(),
            "ratios_error": ratios.as_ref().err().map(|e| e.to_string()),
        });
        let inputs = vec![fingerprint(&a.model)?];
        write_with_manifest(out, to_json_text(&diag).as_bytes(), ctx.manifest("asymptotics", None, inputs, json!({})))?;
    }
    Ok(())
}

fn symmetry(a: &SymmetryArgs, ctx: &Context) -> Result<(), CliError> {
    let rep = symmetric_decomposition_check(a.t0, a.r)?;
    let seq = lower_extension_sequence(a.t0, a.r, a.terms)?;
    let mut s = String::new();
    writeln!(s, "t0                         {}", num(rep.t0)).ok();
    writeln!(s, "r                          {}", num(rep.r)).ok();
    writeln!(s, "lower slope v              {}", num(rep.v)).ok();
    writeln!(s, "symmetric pair exists      {}", rep.exists).ok();
    writeln!(s, "required g1(t0)            {}", num(rep.required_g1_t0)).ok();
    writeln!(s, "canonical g1(t0)           {}", num(rep.canonical_g1_t0)).ok();
    writeln!(s, "gap                        {}", num(rep.gap)).ok();
    for (k, root) in rep.roots.iter().enumerate() {
        let value = root.r.map_or_else(|| "inf".to_string(), num);
        let status = if root.feasible { "feasible" } else { "infeasible" };
        writeln!(s, "root {}                     {value} ({status})", k + 1).ok();
    }
    if let Some(last) = seq.increments.last() {
        writeln!(s, "last increment ({} terms)  {}", seq.t.len(), num(*last)).ok();
    }
    writeln!(s, "limit gap                  {}", num(seq.limit_gap)).ok();
    print!("{s}");
    if let Some(out) = &a.out {
        let diag = json!({ "report": rep, "sequence": seq });
        let m = ctx.manifest("symmetry", None, Vec::new(), json!({ "terms": a.terms }));
        write_with_manifest(out, to_json_text(&diag).as_bytes(), m)?;
    }
    Ok(())
}
