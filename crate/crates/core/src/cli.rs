//! Command-line front end. `run` returns the process exit code; errors map
//! to codes through `Error::exit_code` (2 input, 3 assumptions, 4 solver).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::comparison::{builtin_cone, check_comparison, monotonicity, Quantity};
use crate::error::{Error, Result};
use crate::generator::{block_decompose, classify_states, verify_assumptions, PerturbedGenerator};
use crate::linalg::{inf_norm, vec_inf_norm, Tolerances};
use crate::mfpt::{birth_death_mfpt, mean_return_time, mfpt_exact, mfpt_leading};
use crate::oracle::{slope_fit, ssa_run, total_variation, SimConfig, EPS_GRID};
use crate::pole_order::{pole_orders, stationary_orders_all};
use crate::scrn_model::{
    build_chromatin_model, enumerate_states, export_network, parse_network, ChromatinModel, ChromatinParams,
    ModelKind, ReactionNetwork,
};
use crate::generator::assemble_generator;
use crate::stationary_expansion::{
    absorbing_in_one_class, higher_order_tol, partial_balance_check, reduced_generator_tol, stationary_exact_tol,
    zeroth_via_qt,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "perturbmc", version, about = "Analysis of singularly perturbed Markov chains from reaction networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classification, assumptions, stationary expansion, pole orders and passage times.
    Analyze(AnalyzeArgs),
    /// Tabulate stationary masses and passage times over a parameter grid.
    Sweep(SweepArgs),
    /// Run the invariant battery on a built-in model.
    Validate(ValidateArgs),
    /// Write a model in the text network format.
    Export(ExportArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Built-in model: 1d, 2d, 3d or 4d.
    #[arg(long)]
    pub model: Option<String>,
    /// Network file in the text format.
    #[arg(long, conflicts_with = "model")]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub dtot: u32,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long = "mu-prime")]
    pub mu_prime: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Further parameter overrides, NAME=VALUE.
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// Use the simplified 4D rates.
    #[arg(long = "approx-4d")]
    pub approx_4d: bool,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-2, 1e-3])]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub order: usize,
    /// Passage-time pairs SRC:DST; endpoints are a, r, or a dot-separated state label.
    #[arg(long, value_delimiter = ',')]
    pub mfpt: Vec<String>,
    /// Comma-separated target set for pole orders from every other state.
    #[arg(long = "target-set")]
    pub target_set: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "best-effort")]
    pub best_effort: bool,
    #[arg(long = "no-meta")]
    pub no_meta: bool,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "sweep-param")]
    pub sweep_param: String,
    #[arg(long = "sweep-values", value_delimiter = ',')]
    pub sweep_values: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05, 0.01])]
    pub eps: Vec<f64>,
    /// Add simulated occupancy columns using this many jumps per point.
    #[arg(long)]
    pub ssa: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Check the comparison conditions between consecutive grid values with a built-in cone.
    #[arg(long)]
    pub cone: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "no-meta")]
    pub no_meta: bool,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Jumps for the simulation check (0 disables it).
    #[arg(long, default_value_t = 400_000)]
    pub ssa: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A loaded model: built-in circuits carry their extreme states.
pub struct LoadedModel {
    pub name: String,
    pub network: ReactionNetwork,
    pub generator: PerturbedGenerator,
    pub chromatin: Option<ChromatinModel>,
}

impl LoadedModel {
    fn a(&self) -> Option<usize> {
        self.chromatin.as_ref().map(|m| m.a)
    }
    fn r(&self) -> Option<usize> {
        self.chromatin.as_ref().map(|m| m.r)
    }
}

fn parse_override(s: &str) -> Result<(String, f64)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::InvalidArgument(format!("expected NAME=VALUE, got '{s}'")))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("'{v}' is not a number")))?;
    Ok((k.trim().to_string(), v))
}

pub fn chromatin_params(args: &ModelArgs) -> Result<ChromatinParams> {
    let name = args
        .model
        .as_deref()
        .ok_or_else(|| Error::InvalidArgument("a built-in --model is required".into()))?;
    let kind: ModelKind = name.parse()?;
    let mut p = ChromatinParams::new(kind, args.dtot);
    for (name, v) in [("mu", args.mu), ("mup", args.mu_prime), ("b", args.b), ("beta", args.beta)] {
        if let Some(v) = v {
            p.set(name, v)?;
        }
    }
    for s in &args.params {
        let (k, v) = parse_override(s)?;
        p.set(&k, v)?;
    }
    p.approx_4d = args.approx_4d;
    p.validate()?;
    Ok(p)
}

pub fn load_model(args: &ModelArgs) -> Result<LoadedModel> {
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read model file {}: {e}", path.display())))?;
        let mut network = parse_network(&text)?;
        for s in &args.params {
            let (k, v) = parse_override(s)?;
            if !network.parameters.contains_key(&k) {
                return Err(Error::InvalidArgument(format!("model has no parameter '{k}'")));
            }
            network.parameters.insert(k, v);
        }
        let network = parse_network(&export_network(&network))?;
        let cons = network
            .conservation
            .clone()
            .ok_or_else(|| Error::InvalidNetwork("a conservation law is needed to enumerate states".into()))?;
        let space = enumerate_states(&network, &cons)?;
        let generator = assemble_generator(&network, &space)?;
        return Ok(LoadedModel { name: network.name.clone(), network, generator, chromatin: None });
    }
    let p = chromatin_params(args)?;
    let m = build_chromatin_model(&p)?;
    Ok(LoadedModel {
        name: m.network.name.clone(),
        network: m.network.clone(),
        generator: m.generator.clone(),
        chromatin: Some(m),
    })
}

pub fn label_string(l: &[i64]) -> String {
    l.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(".")
}

fn resolve_endpoint(m: &LoadedModel, s: &str) -> Result<usize> {
    let s = s.trim();
    match s {
        "a" => m.a().ok_or_else(|| Error::InvalidArgument("'a' is only defined for built-in models".into())),
        "r" => m.r().ok_or_else(|| Error::InvalidArgument("'r' is only defined for built-in models".into())),
        _ => {
            let label: Vec<i64> = s
                .split('.')
                .map(|t| t.parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::InvalidArgument(format!("bad state '{s}'")))?;
            m.generator
                .index_of_label(&label)
                .ok_or_else(|| Error::InvalidArgument(format!("state '{s}' is not in the state space")))
        }
    }
}

/// Floats with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn meta_line(no_meta: bool) -> String {
    if no_meta {
        return String::new();
    }
    let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("# perturbmc {} generated {t}\n", env!("CARGO_PKG_VERSION"))
}

fn csv_string(header: &[&str], rows: &[Vec<String>], no_meta: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?)
        .expect("csv output is utf-8");
    Ok(meta_line(no_meta) + &body)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn vec_json(v: &DVector<f64>) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn mat_json(m: &DMatrix<f64>) -> Value {
    json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>())
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Sweep(s) => cmd_sweep(&s),
        Command::Validate(v) => cmd_validate(&v),
        Command::Export(e) => cmd_export(&e),
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if eps.is_empty() || eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidArgument("eps values must be positive".into()));
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32> {
    check_eps(&args.eps)?;
    let tol = Tolerances::from_env()?;
    let m = load_model(&args.model)?;
    let gen = &m.generator;
    let labels: Vec<String> = gen.labels.iter().map(|l| label_string(l)).collect();
    let pairs: Vec<(usize, usize)> = args
        .mfpt
        .iter()
        .map(|p| {
            let (s, d) = p
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("expected SRC:DST, got '{p}'")))?;
            Ok((resolve_endpoint(&m, s)?, resolve_endpoint(&m, d)?))
        })
        .collect::<Result<_>>()?;
    let target_set: Option<Vec<usize>> = args
        .target_set
        .as_ref()
        .map(|t| t.split(',').map(|s| resolve_endpoint(&m, s)).collect::<Result<Vec<_>>>())
        .transpose()?;

    let report = verify_assumptions(gen);
    let required = [(1u8, &report.a1), (2, &report.a2)];
    let mut errors: Vec<String> = Vec::new();
    for (num, check) in required {
        if !check.holds {
            if !args.best_effort {
                return Err(Error::AssumptionViolation { number: num, detail: check.witness.clone() });
            }
            errors.push(format!("assumption {num}: {}", check.witness));
        }
    }
    if !report.irreducible.holds {
        if !args.best_effort {
            return Err(Error::AssumptionViolation { number: 0, detail: report.irreducible.witness.clone() });
        }
        errors.push(report.irreducible.witness.clone());
    }

    let mut out = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "analyze",
        "model": m.name,
        "parameters": m.network.parameters,
        "n_states": gen.n,
        "labels": labels,
        "label_species": m.chromatin.as_ref().map(|c| c.space.label_names()),
        "assumptions": report,
        "warnings": gen.warnings,
    });
    if let (Some(a), Some(r)) = (m.a(), m.r()) {
        out["a"] = json!(labels[a]);
        out["r"] = json!(labels[r]);
    }

    let mut expansion_rows = Vec::new();
    let mut expansion = None;
    let step = |e: Error, errors: &mut Vec<String>| -> Result<()> {
        if args.best_effort {
            errors.push(e.to_string());
            Ok(())
        } else {
            Err(e)
        }
    };
    match classify_states(gen).and_then(|c| block_decompose(gen, &c).map(|b| (c, b))) {
        Ok((class, blocks)) => {
            out["absorbing"] = json!(class.absorbing.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>());
            out["n_transient"] = json!(class.transient.len());
            match reduced_generator_tol(&blocks, &tol) {
                Ok(red) => {
                    out["reduced"] = json!({
                        "q_a": mat_json(&red.q_a),
                        "alpha": vec_json(&red.alpha),
                        "deviation": mat_json(&red.deviation),
                    });
                    match higher_order_tol(&blocks, &red, args.order, &tol) {
                        Ok(e) => {
                            out["expansion"] = json!({
                                "order": e.order,
                                "coefficients": e.coefficients.iter().map(vec_json).collect::<Vec<_>>(),
                                "residuals": e.residuals,
                            });
                            for (k, c) in e.coefficients.iter().enumerate() {
                                for (i, v) in c.iter().enumerate() {
                                    expansion_rows.push(vec![labels[i].clone(), k.to_string(), fmt_f64(*v)]);
                                }
                            }
                            expansion = Some(e);
                        }
                        Err(e) => step(e, &mut errors)?,
                    }
                }
                Err(e) => step(e, &mut errors)?,
            }
        }
        Err(e) => step(e, &mut errors)?,
    }

    let mut stationary_rows = Vec::new();
    let mut stationary = Vec::new();
    for &eps in &args.eps {
        match stationary_exact_tol(gen, eps, &tol) {
            Ok(pi) => {
                let series = expansion.as_ref().map(|e| e.evaluate(eps));
                for i in 0..gen.n {
                    let mut row = vec![fmt_f64(eps), labels[i].clone(), fmt_f64(pi[i])];
                    row.push(series.as_ref().map(|s| fmt_f64(s[i])).unwrap_or_default());
                    stationary_rows.push(row);
                }
                stationary.push(json!({
                    "eps": eps,
                    "pi": vec_json(&pi),
                    "series_error": series.map(|s| vec_inf_norm(&(s - &pi))),
                }));
            }
            Err(e) => step(e, &mut errors)?,
        }
    }
    out["stationary"] = json!(stationary);

    let mut mfpt_rows = Vec::new();
    let mut mfpt_json = Vec::new();
    for &(x, y) in &pairs {
        let p = if x == y { Some(0) } else { pole_orders(gen, &[y])?.order(x) };
        let mut entry = json!({
            "source": labels[x],
            "target": labels[y],
            "pole_order": p,
        });
        let mut exact = Vec::new();
        for &eps in &args.eps {
            let h = if x == y { 0.0 } else { mfpt_exact(gen, eps, &[y])?[x] };
            mfpt_rows.push(vec![labels[x].clone(), labels[y].clone(), fmt_f64(eps), fmt_f64(h)]);
            exact.push(json!({"eps": eps, "h": h}));
        }
        entry["exact"] = json!(exact);
        match mfpt_leading(gen, x, y) {
            Ok(l) => entry["leading"] = json!(l),
            Err(Error::InvalidArgument(msg)) => entry["leading"] = json!({"unavailable": msg}),
            Err(e) => step(e, &mut errors)?,
        }
        mfpt_json.push(entry);
    }
    out["mfpt"] = json!(mfpt_json);

    if let Some(t) = &target_set {
        let res = pole_orders(gen, t)?;
        out["target_set"] = json!({
            "states": t.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>(),
            "pole_orders": (0..gen.n)
                .filter_map(|i| res.order(i).map(|p| json!({"state": labels[i], "p": p})))
                .collect::<Vec<_>>(),
            "trace": res.trace,
        });
    }
    if report.a1.holds && report.irreducible.holds {
        match stationary_orders_all(gen) {
            Ok(k) => out["stationary_orders"] = json!(k),
            Err(e) => step(e, &mut errors)?,
        }
    }
    out["errors"] = json!(errors);

    let text = serde_json::to_string_pretty(&out).expect("report serializes");
    match &args.out {
        Some(dir) => {
            write_file(dir, "report.json", &text)?;
            write_file(dir, "expansion.csv", &csv_string(&["state", "k", "value"], &expansion_rows, args.no_meta)?)?;
            write_file(
                dir,
                "stationary.csv",
                &csv_string(&["eps", "state", "pi_exact", "pi_series"], &stationary_rows, args.no_meta)?,
            )?;
            write_file(dir, "mfpt.csv", &csv_string(&["source", "target", "eps", "h"], &mfpt_rows, args.no_meta)?)?;
            println!("wrote report to {}", dir.display());
        }
        None => println!("{text}"),
    }
    Ok(0)
}

struct SweepPoint {
    rows: Vec<Vec<String>>,
    hist: Vec<Vec<String>>,
    quantities: Vec<[f64; 4]>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    if args.sweep_values.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    check_eps(&args.eps)?;
    let base = chromatin_params(&args.model)?;
    if base.get(&args.sweep_param).is_none() {
        return Err(Error::InvalidArgument(format!("unknown sweep parameter '{}'", args.sweep_param)));
    }
    let tol = Tolerances::from_env()?;
    let build = |v: f64| -> Result<ChromatinModel> {
        let mut p = base.clone();
        p.set(&args.sweep_param, v)?;
        p.validate()?;
        build_chromatin_model(&p)
    };
    let points: Vec<SweepPoint> = args
        .sweep_values
        .par_iter()
        .enumerate()
        .map(|(vi, &v)| {
            let m = build(v)?;
            let g = &m.generator;
            let mut pt = SweepPoint { rows: vec![], hist: vec![], quantities: vec![] };
            for (ei, &eps) in args.eps.iter().enumerate() {
                let pi = stationary_exact_tol(g, eps, &tol)?;
                let h_ar = mfpt_exact(g, eps, &[m.r])?[m.a];
                let h_ra = mfpt_exact(g, eps, &[m.a])?[m.r];
                let mut row = vec![
                    fmt_f64(v),
                    fmt_f64(eps),
                    fmt_f64(h_ar),
                    fmt_f64(h_ra),
                    fmt_f64(pi[m.a]),
                    fmt_f64(pi[m.r]),
                    fmt_f64(pi[m.a] + pi[m.r]),
                ];
                if let Some(n_events) = args.ssa {
                    let mut cfg = SimConfig::new(eps, n_events, args.seed ^ ((vi as u64) << 32) ^ ei as u64);
                    cfg.start = m.a;
                    let emp = ssa_run(g, &cfg)?;
                    row.push(fmt_f64(emp.occupancy[m.a]));
                    row.push(fmt_f64(emp.occupancy[m.r]));
                    row.push(fmt_f64(total_variation(&emp.occupancy, pi.as_slice())));
                }
                for i in 0..g.n {
                    pt.hist.push(vec![fmt_f64(v), fmt_f64(eps), label_string(&g.labels[i]), fmt_f64(pi[i])]);
                }
                pt.rows.push(row);
                pt.quantities.push([h_ar, h_ra, pi[m.a], pi[m.r]]);
            }
            Ok(pt)
        })
        .collect::<Result<_>>()?;

    let mut header = vec![args.sweep_param.as_str(), "eps", "h_ar", "h_ra", "pi_a", "pi_r", "mass_extremes"];
    if args.ssa.is_some() {
        header.extend(["ssa_pi_a", "ssa_pi_r", "ssa_tv"]);
    }
    let rows: Vec<Vec<String>> = points.iter().flat_map(|p| p.rows.clone()).collect();
    let hist: Vec<Vec<String>> = points.iter().flat_map(|p| p.hist.clone()).collect();
    let sweep_csv = csv_string(&header, &rows, args.no_meta)?;

    let mut verdicts = Vec::new();
    let sorted = args.sweep_values.windows(2).all(|w| w[0] < w[1]);
    if sorted {
        for (ei, &eps) in args.eps.iter().enumerate() {
            for (qi, q) in Quantity::ALL.iter().enumerate() {
                let vals: Vec<f64> = points.iter().map(|p| p.quantities[ei][qi]).collect();
                verdicts.push(json!({"eps": eps, "quantity": q.name(), "verdict": monotonicity(&vals, 1e-9)}));
            }
        }
    }
    let mut summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "sweep",
        "parameter": args.sweep_param,
        "values": args.sweep_values,
        "eps": args.eps,
        "monotonicity": verdicts,
    });
    if let Some(cone_name) = &args.cone {
        if !sorted {
            return Err(Error::InvalidArgument("comparison needs increasing sweep values".into()));
        }
        let cone = builtin_cone(cone_name)?;
        let mut reports = Vec::new();
        for w in args.sweep_values.windows(2) {
            let lo = build(w[0])?;
            let hi = build(w[1])?;
            let rep = check_comparison(&hi.generator, &lo.generator, &cone)?;
            reports.push(json!({"value": w[1], "breve_value": w[0], "report": rep}));
        }
        summary["comparison"] = json!(reports);
    }
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &args.out {
        Some(dir) => {
            write_file(dir, "sweep.csv", &sweep_csv)?;
            write_file(
                dir,
                "histogram.csv",
                &csv_string(&[args.sweep_param.as_str(), "eps", "state", "pi"], &hist, args.no_meta)?,
            )?;
            write_file(dir, "sweep.json", &summary_text)?;
            println!("wrote sweep to {}", dir.display());
        }
        None => print!("{sweep_csv}"),
    }
    Ok(0)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &str, pass: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult { name: name.to_string(), pass, detail: detail.into() }
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Closed-form reduced generator of the 1D model.
pub fn q_a_closed_form_1d(p: &ChromatinParams) -> DMatrix<f64> {
    let d = p.dtot as f64;
    let f = if (p.mu - 1.0).abs() < 1e-12 { 1.0 / d } else { (1.0 - p.mu) / (1.0 - p.mu.powi(p.dtot as i32)) };
    let c = f * p.k_ea * d * d;
    let s = p.b * p.mu.powi(p.dtot as i32);
    DMatrix::from_row_slice(2, 2, &[-c, c, c * s, -c * s])
}

/// Closed-form reduced generator of the 2D model at Dtot = 2.
pub fn q_a_closed_form_2d(p: &ChromatinParams) -> DMatrix<f64> {
    let ka = p.k_w0a + p.k_wa;
    let kr = p.k_w0r + p.k_wr;
    let pr = kr * (kr + p.k_mr);
    let pa = ka * (ka + p.k_ma);
    let k = (ka + p.k_ma + kr) * (kr + p.k_mr) + p.mu * (kr + p.k_mr + ka) * (ka + p.k_ma);
    let c = 4.0 / k * p.k_ma;
    let s = p.b * p.mu * p.mu;
    DMatrix::from_row_slice(2, 2, &[-c * pr, c * pr, c * s * pa, -c * s * pa])
}

/// The invariant battery for a built-in model.
pub fn validation_suite(m: &ChromatinModel, ssa_events: u64, seed: u64, tol: &Tolerances) -> Vec<CheckResult> {
    let g = &m.generator;
    let mut out = Vec::new();
    let rep = verify_assumptions(g);
    out.push(check(
        "assumptions",
        rep.a1.holds && rep.a2.holds && rep.irreducible.holds,
        format!("A1 {} / A2 {} / irreducible {}", rep.a1.witness, rep.a2.witness, rep.irreducible.witness),
    ));
    let blocks = match classify_states(g).and_then(|c| block_decompose(g, &c)) {
        Ok(b) => b,
        Err(e) => {
            out.push(check("blocks", false, e.to_string()));
            return out;
        }
    };
    let (q0, q1) = blocks.reassemble();
    out.push(check("block_reassembly", q0 == g.q0 && q1 == g.q1, "blocks rebuild Q0 and Q1 exactly"));
    let red = match reduced_generator_tol(&blocks, tol) {
        Ok(r) => r,
        Err(e) => {
            out.push(check("reduced_generator", false, e.to_string()));
            return out;
        }
    };
    out.push(check("reduced_generator", true, format!("alpha = {:?}", red.alpha.as_slice())));
    let closed = match m.params.kind {
        ModelKind::OneD => Some(q_a_closed_form_1d(&m.params)),
        ModelKind::TwoD if m.params.dtot == 2 => Some(q_a_closed_form_2d(&m.params)),
        _ => None,
    };
    if let Some(c) = closed {
        let err = (&c - &red.q_a).abs().max() / inf_norm(&c);
        out.push(check("closed_form_q_a", err <= 1e-9, format!("relative difference {err:e}")));
    }
    let exp = match higher_order_tol(&blocks, &red, 2, tol) {
        Ok(e) => e,
        Err(e) => {
            out.push(check("recursion_residuals", false, e.to_string()));
            return out;
        }
    };
    out.push(check("recursion_residuals", true, format!("{:?}", exp.residuals)));
    let grid = EPS_GRID;
    let exact: Vec<Result<DVector<f64>>> = grid.iter().map(|&e| stationary_exact_tol(g, e, tol)).collect();
    if let Some(Err(e)) = exact.iter().find(|r| r.is_err()) {
        out.push(check("stationary_residual", false, e.to_string()));
        return out;
    }
    out.push(check("stationary_residual", true, "GTH solution residual within tolerance"));
    let exact: Vec<DVector<f64>> = exact.into_iter().map(|r| r.unwrap()).collect();
    for k in 0..=2 {
        let errs: Vec<f64> =
            grid.iter().zip(&exact).map(|(&e, pi)| vec_inf_norm(&(exp.evaluate_to(e, k) - pi))).collect();
        let (name, res) = (format!("expansion_slope_k{k}"), slope_fit(&grid, &errs));
        match res {
            Ok((s, _)) => out.push(check(&name, s >= k as f64 + 0.7, format!("slope {s:.4}"))),
            Err(e) => out.push(check(&name, false, e.to_string())),
        }
    }
    if absorbing_in_one_class(&blocks) {
        match zeroth_via_qt(&blocks) {
            Ok(qt) => {
                let d = vec_inf_norm(&(&qt.alpha - &red.alpha));
                out.push(check("route_equivalence", d <= 1e-9, format!("difference {d:e}")));
            }
            Err(e) => out.push(check("route_equivalence", false, e.to_string())),
        }
    } else {
        out.push(check("route_equivalence", true, "skipped: absorbing states split across classes of Q~"));
    }
    for (x, y, name) in [(m.a, m.r, "a->r"), (m.r, m.a, "r->a")] {
        let p = match pole_orders(g, &[y]) {
            Ok(r) => r.order(x).unwrap_or(0),
            Err(e) => {
                out.push(check(&format!("pole_order_{name}"), false, e.to_string()));
                continue;
            }
        };
        let hs: Result<Vec<f64>> = grid.iter().map(|&e| mfpt_exact(g, e, &[y]).map(|h| h[x])).collect();
        let hs = match hs {
            Ok(h) => h,
            Err(e) => {
                out.push(check(&format!("pole_order_{name}"), false, e.to_string()));
                continue;
            }
        };
        let (s, _) = slope_fit(&grid, &hs).unwrap_or((f64::NAN, 0.0));
        out.push(check(
            &format!("pole_order_{name}"),
            (s + p as f64).abs() <= 0.15,
            format!("p = {p}, fitted slope {s:.4}"),
        ));
        match mfpt_leading(g, x, y) {
            Ok(l) => {
                let scaled = |i: usize| hs[i] * grid[i].powi(l.order as i32);
                let change = rel_diff(scaled(3), scaled(4));
                let vs = rel_diff(scaled(4), l.coefficient);
                out.push(check(
                    &format!("laurent_{name}"),
                    change < 0.01 && vs < 0.01 && l.order == p,
                    format!("order {} coefficient {:.6e}, change {change:.2e}, vs exact {vs:.2e}", l.order, l.coefficient),
                ));
            }
            Err(e) => out.push(check(&format!("laurent_{name}"), false, e.to_string())),
        }
    }
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for &eps in &[1e-1, 1e-2, 1e-3] {
        let pi = match stationary_exact_tol(g, eps, tol) {
            Ok(p) => p,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        for x in 0..g.n {
            match mean_return_time(g, eps, x) {
                Ok(ret) => worst = worst.max((pi[x] * g.exit_rate(x, eps) * ret - 1.0).abs()),
                Err(e) => failure = Some(e.to_string()),
            }
        }
    }
    out.push(match failure {
        Some(f) => check("return_time_identity", false, f),
        None => check("return_time_identity", worst <= 1e-9, format!("max deviation {worst:e}")),
    });
    if m.params.kind == ModelKind::OneD {
        let eps = 1e-2;
        let lam: Vec<f64> = (0..m.params.dtot as usize).map(|i| g.rate(i, i + 1, eps)).collect();
        let gam: Vec<f64> = (1..=m.params.dtot as usize).map(|i| g.rate(i, i - 1, eps)).collect();
        let res = birth_death_mfpt(&lam, &gam).and_then(|(down, up)| {
            let h_down = mfpt_exact(g, eps, &[0])?[g.n - 1];
            let h_up = mfpt_exact(g, eps, &[g.n - 1])?[0];
            Ok(rel_diff(down, h_down).max(rel_diff(up, h_up)))
        });
        out.push(match res {
            Ok(d) => check("birth_death", d <= 1e-10, format!("relative difference {d:e}")),
            Err(e) => check("birth_death", false, e.to_string()),
        });
        match partial_balance_check(g, &blocks, 0.1) {
            Ok(pb) => out.push(check("partial_balance", pb.max <= 1e-10, format!("max residual {:e}", pb.max))),
            Err(e) => out.push(check("partial_balance", false, e.to_string())),
        }
    }
    if ssa_events > 0 {
        let eps = 0.1;
        let mut cfg = SimConfig::new(eps, ssa_events, seed);
        cfg.start = m.a;
        let res = ssa_run(g, &cfg).and_then(|emp| {
            let pi = stationary_exact_tol(g, eps, tol)?;
            Ok(total_variation(&emp.occupancy, pi.as_slice()))
        });
        out.push(match res {
            Ok(tv) => check("ssa_occupancy", tv <= 0.05, format!("total variation {tv:.4} at eps = {eps}")),
            Err(e) => check("ssa_occupancy", false, e.to_string()),
        });
    }
    out
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let tol = Tolerances::from_env()?;
    let p = chromatin_params(&args.model)?;
    let m = build_chromatin_model(&p)?;
    let results = validation_suite(&m, args.ssa, args.seed, &tol);
    for r in &results {
        println!("{} {} {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} checks, {} failed", results.len(), failed);
    if let Some(dir) = &args.out {
        let j = json!({"schema_version": SCHEMA_VERSION, "command": "validate", "model": m.network.name, "checks": results});
        write_file(dir, "validate.json", &serde_json::to_string_pretty(&j).expect("serializes"))?;
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

pub fn cmd_export(args: &ExportArgs) -> Result<i32> {
    let m = load_model(&args.model)?;
    let text = export_network(&m.network);
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
