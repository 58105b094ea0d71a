//! Subcommand implementations. Every command reads its inputs through
//! [`crate::config::Resolved`], computes with the library, and emits
//! deterministic JSON (CSV for mobility grids): no timestamps, map keys in
//! sorted order, floats printed shortest-round-trip.

use std::io::Write as _;
use std::path::Path;
use std::process::ExitCode;

use rayon::prelude::*;
use serde_json::{json, Value};

use mjp_core::models::{
    bd_check_conditions, confining_check, exp_moment_scan, ScanOutcome, SeriesDiagnostic,
    SeriesTrend,
};
use mjp_core::oss::{
    estimate_gap, fourier_response, monodromy, oss_derivative, oss_distribution,
    spectral_structure, PeriodicDriving,
};
use mjp_core::paths::{eval_functional, sample_index, simulate_homogeneous, Observable};
use mjp_core::response_exact::{
    lr_jump_stationary, lr_observable_stationary, lr_time_integral_stationary,
};
use mjp_core::response_mc::{fd_derivative, lr_covariance, lr_res3};
use mjp_core::{
    BuiltModel, FunctionalSpec, McParams, ModelDocument, Perturbation, ResponseEstimate,
    RngStream,
};

use crate::config::{parse_grid, Resolved};
use crate::{Failure, RunArgs};

/// Write a pretty JSON value to `out`, or stdout when no file was given.
fn emit(value: &Value, out: Option<&Path>) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable value") + "\n";
    match out {
        Some(path) => std::fs::write(path, &text).map_err(|e| {
            Failure::Config(format!("cannot write {}: {e}", path.display()))
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))
}

/// Canonicalized document, its hash, and the canonical JSON as a `Value`.
fn load_document(cfg: &Resolved) -> Result<(ModelDocument, String, Value), Failure> {
    let doc = cfg.model_document()?.canonicalize();
    let hash = doc.model_hash();
    let value: Value =
        serde_json::from_str(&doc.canonical_json()).expect("canonical JSON reparses");
    Ok((doc, hash, value))
}

/// The tilt `g` from the model document; `lr` and `oss` require one.
fn perturbation_of(doc: &ModelDocument, n: usize, command: &str) -> Result<Perturbation, Failure> {
    let pdoc = doc.perturbation().ok_or_else(|| {
        Failure::Config(format!(
            "model document declares no perturbation; `{command}` needs the tilt g"
        ))
    })?;
    pdoc.build(n).map_err(Failure::from)
}

/// The path functional from the config; `lr` requires one.
fn functional_of(cfg: &Resolved, n: usize) -> Result<FunctionalSpec, Failure> {
    let fdoc = cfg.functional.as_ref().ok_or_else(|| {
        Failure::Config("config declares no `functional`; `lr` needs the path functional".into())
    })?;
    fdoc.build(n).map_err(Failure::from)
}

fn estimate_record(est: &ResponseEstimate, hash: &str, extra: Value) -> Value {
    let mut record = json!({
        "estimator": est.estimator.to_string(),
        "value": est.value,
        "stderr": est.stderr,
        "n": est.n,
        "seed": est.seed,
        "model-hash": hash,
    });
    if let (Value::Object(map), Value::Object(more)) = (&mut record, extra) {
        map.extend(more);
    }
    record
}

/// Mean and standard error of a sample (standard error 0 below two samples).
fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

// ---------------------------------------------------------------------------
// model describe / build
// ---------------------------------------------------------------------------

pub fn model_describe(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, document) = load_document(&cfg)?;
    let report = match doc.build() {
        Ok(built) => {
            let chain = built.chain();
            let pi = chain.pi().as_slice();
            let mut order: Vec<usize> = (0..pi.len()).collect();
            order.sort_by(|&a, &b| pi[b].partial_cmp(&pi[a]).unwrap().then(a.cmp(&b)));
            let head: Vec<Value> = order
                .iter()
                .take(8)
                .map(|&x| {
                    json!({"state": built.label(x), "index": x, "probability": pi[x]})
                })
                .collect();
            let gap = estimate_gap(chain)?;
            json!({
                "model-hash": hash,
                "states": built.len(),
                "irreducible": true,
                "stationary-head": head,
                "spectral-gap": {"prefactor": gap.c, "rate": gap.kappa},
                "document": document,
            })
        }
        Err(mjp_core::Error::NotIrreducible) => json!({
            "model-hash": hash,
            "states": doc.state_count(),
            "irreducible": false,
            "document": document,
        }),
        Err(e) => return Err(e.into()),
    };
    emit(&report, cfg.out.as_deref())
}

pub fn model_build(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let pretty = doc.canonical_json_pretty();
    match cfg.out.as_deref() {
        Some(path) => {
            write_file(path, &(pretty + "\n"))?;
            let summary = json!({
                "model-hash": hash,
                "states": doc.state_count(),
                "written": path.display().to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&summary).expect("json"));
        }
        None => {
            // Stdout carries the document alone so it can be piped straight
            // back in as a model file; the hash goes to stderr.
            println!("{pretty}");
            eprintln!("model-hash: {hash}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct PathStat {
    stream: u64,
    initial: usize,
    jumps: usize,
    truncated: bool,
    /// `(state, duration)` per visited segment; empty when truncated.
    segments: Vec<(usize, f64)>,
    value: Option<f64>,
    dump: Option<(Vec<f64>, Vec<usize>)>,
}

pub fn simulate(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let nu = cfg.initial_distribution(&built)?;
    let spec = match cfg.functional.as_ref() {
        Some(fdoc) => Some(fdoc.build(built.len())?),
        None => None,
    };
    let params = McParams::new(cfg.t, cfg.paths, cfg.seed);
    let rates = built.rates();
    let keep = cfg.dump.is_some();

    let stats: Vec<PathStat> = (0..cfg.paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::new(cfg.seed, i);
            let x0 = sample_index(&nu, rng.uniform());
            let traj = simulate_homogeneous(rates, x0, cfg.t, &mut rng, params.jump_cap);
            let value = match (&spec, traj.truncated) {
                (Some(s), false) => Some(eval_functional(&traj, s)),
                _ => None,
            };
            let segments = if traj.truncated {
                Vec::new()
            } else {
                traj.segments()
                    .iter()
                    .map(|&(a, b, x)| (x, b - a))
                    .collect()
            };
            PathStat {
                stream: i,
                initial: x0,
                jumps: traj.jump_times.len(),
                truncated: traj.truncated,
                segments,
                value,
                dump: keep.then(|| (traj.jump_times.clone(), traj.states.clone())),
            }
        })
        .collect();

    if let Some(path) = cfg.dump.as_deref() {
        let mut file = std::fs::File::create(path)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        for s in &stats {
            let (times, states) = s.dump.as_ref().expect("dump data kept");
            let mut line = json!({
                "stream": s.stream,
                "initial": s.initial,
                "jump-times": times,
                "states": states,
                "truncated": s.truncated,
            });
            if let (Value::Object(map), Some(v)) = (&mut line, s.value) {
                map.insert("value".into(), json!(v));
            }
            writeln!(file, "{line}")
                .map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        }
    }

    // Sequential accumulation in stream order keeps the output independent of
    // the worker count.
    let completed: Vec<&PathStat> = stats.iter().filter(|s| !s.truncated).collect();
    let truncated = stats.len() - completed.len();
    let jump_counts: Vec<f64> = completed.iter().map(|s| s.jumps as f64).collect();
    let (jump_mean, jump_se) = mean_and_se(&jump_counts);
    let mut occupation = vec![0.0f64; built.len()];
    for s in &completed {
        for &(x, d) in &s.segments {
            occupation[x] += d;
        }
    }
    let total_time = cfg.t * completed.len().max(1) as f64;
    for o in &mut occupation {
        *o /= total_time;
    }
    let mut order: Vec<usize> = (0..occupation.len()).collect();
    order.sort_by(|&a, &b| {
        occupation[b]
            .partial_cmp(&occupation[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let head: Vec<Value> = order
        .iter()
        .take(8)
        .map(|&x| json!({"state": built.label(x), "index": x, "time-fraction": occupation[x]}))
        .collect();
    let functional = match &spec {
        Some(_) => {
            let values: Vec<f64> = completed.iter().filter_map(|s| s.value).collect();
            let (mean, se) = mean_and_se(&values);
            json!({"mean": mean, "stderr": se})
        }
        None => Value::Null,
    };

    let report = json!({
        "model-hash": hash,
        "states": built.len(),
        "t": cfg.t,
        "paths": cfg.paths,
        "seed": cfg.seed,
        "completed": completed.len(),
        "truncated": truncated,
        "jump-count": {"mean": jump_mean, "stderr": jump_se},
        "occupation-head": head,
        "functional": functional,
        "dump": cfg.dump.as_ref().map(|p| p.display().to_string()),
    });
    emit(&report, cfg.out.as_deref())
}

// ---------------------------------------------------------------------------
// lr mc | exact | fd
// ---------------------------------------------------------------------------

pub fn lr_mc(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let g = perturbation_of(&doc, built.len(), "lr")?;
    let spec = functional_of(&cfg, built.len())?;
    let nu = cfg.initial_distribution(&built)?;
    let params = McParams::new(cfg.t, cfg.paths, cfg.seed);
    let est = match &spec {
        FunctionalSpec::JumpSum(alpha) => lr_res3(built.rates(), &nu, alpha, &g, &params)?,
        other => lr_covariance(built.rates(), &nu, other, &g, &params)?,
    };
    emit(
        &estimate_record(&est, &hash, json!({"t": cfg.t})),
        cfg.out.as_deref(),
    )
}

pub fn lr_exact(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    if cfg.initial.is_some() {
        return Err(Failure::Config(
            "the exact route evaluates the stationary-start response; remove `initial`".into(),
        ));
    }
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let g = perturbation_of(&doc, built.len(), "lr")?;
    let spec = functional_of(&cfg, built.len())?;
    let chain = built.chain();
    let (estimator, value, err) = match &spec {
        FunctionalSpec::TerminalObservable(v) => {
            // Only the final-time snapshot of the observable enters the
            // terminal expectation.
            let vt = v.at_time(cfg.t, built.len());
            let (value, err) = lr_observable_stationary(chain, &vt, &g, cfg.t, cfg.tolerance)?;
            ("exact-terminal", value, err)
        }
        FunctionalSpec::TimeIntegral(v) => {
            let (value, err) = lr_time_integral_stationary(chain, v, &g, cfg.t, cfg.tolerance)?;
            ("exact-time-integral", value, err)
        }
        FunctionalSpec::JumpSum(alpha) => {
            let (value, err) = lr_jump_stationary(chain, alpha, &g, cfg.t, cfg.tolerance)?;
            ("exact-jump-sum", value, err)
        }
    };
    let record = json!({
        "estimator": estimator,
        "value": value,
        "quadrature-error": err,
        "t": cfg.t,
        "tolerance": cfg.tolerance,
        "model-hash": hash,
    });
    emit(&record, cfg.out.as_deref())
}

pub fn lr_fd(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let g = perturbation_of(&doc, built.len(), "lr")?;
    let spec = functional_of(&cfg, built.len())?;
    let nu = cfg.initial_distribution(&built)?;
    let params = McParams::new(cfg.t, cfg.paths, cfg.seed);
    let est = fd_derivative(built.rates(), &nu, &spec, &g, cfg.lambda_step, &params)?;
    emit(
        &estimate_record(&est, &hash, json!({"t": cfg.t, "lambda-step": cfg.lambda_step})),
        cfg.out.as_deref(),
    )
}

// ---------------------------------------------------------------------------
// oss
// ---------------------------------------------------------------------------

pub fn oss(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let g = perturbation_of(&doc, built.len(), "oss")?;
    let chain = built.chain();
    if cfg.slices == 0 {
        return Err(Failure::Config("`slices` must be at least 1".into()));
    }
    let driving = PeriodicDriving::new(chain, &g, cfg.period)?;
    let (zero_modes, max_other) = spectral_structure(chain);

    let mut slices = Vec::with_capacity(cfg.slices);
    for i in 0..cfg.slices {
        let t = cfg.period * i as f64 / cfg.slices as f64;
        let a = oss_derivative(&driving, t)?;
        slices.push(json!({"t": t, "a": a}));
    }

    let p = monodromy(chain.rates(), &g, cfg.lambda, cfg.period)?;
    let pi_lambda = oss_distribution(&p)?;

    let fourier = match cfg.observable.as_ref() {
        Some(odoc) => {
            let v = match odoc.build(built.len())? {
                Observable::Static(v) => v,
                _ => {
                    return Err(Failure::Config(
                        "`oss` Fourier responses need a static observable".into(),
                    ))
                }
            };
            let mut rows = Vec::new();
            for k in driving.harmonics() {
                let r = fourier_response(&v, &driving, k)?;
                rows.push(json!({"k": k, "re": r.re, "im": r.im}));
            }
            Value::Array(rows)
        }
        None => Value::Null,
    };

    let report = json!({
        "model-hash": hash,
        "period": cfg.period,
        "lambda": cfg.lambda,
        "spectral": {"zero-modes": zero_modes, "max-other-real-part": max_other},
        "pi-lambda": pi_lambda,
        "slices": slices,
        "fourier": fourier,
    });
    emit(&report, cfg.out.as_deref())
}

// ---------------------------------------------------------------------------
// mobility
// ---------------------------------------------------------------------------

pub fn mobility(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;
    let torus = built.torus().ok_or_else(|| {
        Failure::Config("`mobility` needs a torus model document".into())
    })?;
    let omegas = parse_grid(&cfg.omega_grid)?;

    let mut csv = String::from("omega,j,k,re,im\n");
    let mut restricted = Vec::new();
    for &w in &omegas {
        let m = mjp_core::mobility::mobility(torus, w)?;
        if m.restricted {
            restricted.push(w);
        }
        for j in 0..m.dimension() {
            for k in 0..m.dimension() {
                let e = m.entries[j][k];
                csv.push_str(&format!("{w},{j},{k},{},{}\n", e.re, e.im));
            }
        }
    }

    let summary = json!({
        "model-hash": hash,
        "dimension": torus.dimension(),
        "side": torus.side(),
        "omegas": omegas.len(),
        "restricted": restricted,
        "csv": cfg.out.as_ref().map(|p| p.display().to_string()),
    });
    let summary_text = serde_json::to_string_pretty(&summary).expect("json");
    match cfg.out.as_deref() {
        Some(path) => {
            write_file(path, &csv)?;
            println!("{summary_text}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary_text}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

fn trend_name(t: SeriesTrend) -> &'static str {
    match t {
        SeriesTrend::ConvergesEmpirically => "converges-empirically",
        SeriesTrend::DivergesEmpirically => "diverges-empirically",
        SeriesTrend::Unclear => "unclear",
    }
}

fn series_json(d: &SeriesDiagnostic) -> Value {
    json!({
        "truncations": d.truncations,
        "partial-sums": d.partial_sums,
        "tail-ratio": d.tail_ratio,
        "trend": trend_name(d.trend),
    })
}

pub fn check(args: &RunArgs) -> Result<(), Failure> {
    let cfg = Resolved::from_args(args)?;
    let (doc, hash, _) = load_document(&cfg)?;
    let built = doc.build()?;

    let mut report = match &built {
        BuiltModel::BirthDeath { model, .. } => {
            let rep = bd_check_conditions(model, &cfg.truncations);
            json!({
                "model-hash": hash,
                "family": "birth-death",
                "z-series": series_json(&rep.z_series),
                "non-explosion-series": series_json(&rep.non_explosion_series),
                "verdict": rep.verdict.to_string(),
            })
        }
        BuiltModel::Confining(model) => {
            // Worst-case uniform tilt: weight every edge by e^{sup |g|}
            // (1 when the document declares no perturbation).
            let sup = match doc.perturbation() {
                Some(pdoc) => pdoc.build(model.len())?.sup_bound(),
                None => 0.0,
            };
            let weight = sup.exp();
            let rep = confining_check(model, &|_x, _y| weight);
            json!({
                "model-hash": hash,
                "family": "confining",
                "edge-weight-bound": weight,
                "radii": rep.radii,
                "running-max": rep.running_max,
                "plateaued": rep.plateaued,
            })
        }
        other => {
            let family = match other {
                BuiltModel::Torus(_) => "torus",
                _ => "explicit",
            };
            let gap = estimate_gap(built.chain())?;
            let mut obj = json!({
                "model-hash": hash,
                "family": family,
                "states": built.len(),
                "irreducible": true,
                "spectral-gap": {"prefactor": gap.c, "rate": gap.kappa},
            });
            if let (Value::Object(map), Some(t)) = (&mut obj, built.torus()) {
                map.insert("reversible".into(), json!(t.is_reversible()));
            }
            obj
        }
    };

    if let (Some(thetas), Some(pdoc)) = (cfg.theta_grid.as_ref(), doc.perturbation()) {
        let alpha = pdoc.build(built.len())?;
        let nu = cfg.initial_distribution(&built)?;
        let params = McParams::new(cfg.t, cfg.paths, cfg.seed);
        let scan = exp_moment_scan(built.rates(), &nu, &alpha, thetas, &params);
        let points: Vec<Value> = scan
            .thetas
            .iter()
            .zip(&scan.outcomes)
            .map(|(&theta, outcome)| match outcome {
                ScanOutcome::Reliable(rep) => json!({
                    "theta": theta,
                    "status": "reliable",
                    "integral": {"value": rep.integral.value, "stderr": rep.integral.stderr},
                    "jump-sum": {"value": rep.jump_sum.value, "stderr": rep.jump_sum.stderr},
                    "top-share": rep.top_share,
                }),
                ScanOutcome::HeavyTail { share } => {
                    json!({"theta": theta, "status": "heavy-tail", "share": share})
                }
                ScanOutcome::Failed(msg) => {
                    json!({"theta": theta, "status": "failed", "message": msg})
                }
            })
            .collect();
        if let Value::Object(map) = &mut report {
            map.insert(
                "theta-scan".into(),
                json!({"best-theta": scan.best_theta, "points": points}),
            );
        }
    }

    emit(&report, cfg.out.as_deref())
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

pub fn validate(out: Option<&Path>) -> ExitCode {
    let reports = mjp_core::acceptance::run_all();
    for r in &reports {
        println!("{}", r.line());
    }
    let passed = reports.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", reports.len());

    if let Some(path) = out {
        let rows: Vec<Value> = reports
            .iter()
            .map(|r| {
                json!({
                    "index": r.index,
                    "name": r.name,
                    "passed": r.passed,
                    "seconds": r.elapsed.as_secs_f64(),
                    "budget-seconds": r.budget.as_secs_f64(),
                    "details": r.details,
                })
            })
            .collect();
        let text = serde_json::to_string_pretty(&Value::Array(rows)).expect("json") + "\n";
        if let Err(e) = std::fs::write(path, text) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }

    if passed == reports.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}
