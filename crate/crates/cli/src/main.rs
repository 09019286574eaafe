//! `goalc`: compile goal models, emit PRISM input, evaluate and verify
//! formulae, and run the BSN simulator.
//!
//! Exit codes: 0 success, 1 domain error (invalid model, missing binding,
//! failed verification), 2 IO or usage error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use goalc::bsnsim::{self, metrics, setpoints, Mode, ScenarioConfig, TimeSeries};
use goalc::cgm::{parse_model, NodeKind};
use goalc::compiler::{compile_model, FormulaRecord};
use goalc::gen::{random_binding, random_model, GenConfig};
use goalc::oracle::{check_formula, CostStatus};
use goalc::prismgen::{emit_model, emit_properties};
use goalc::runtime::Policy;
use goalc::symexpr::SymExpr;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "goalc", version, about = "Goal models to parametric reliability/cost formulae")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a model to reliability/cost formulae (JSON).
    Compile {
        model: PathBuf,
        /// Only this node; default is every goal.
        #[arg(long)]
        goal: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a PRISM model (.pm) and its properties (.pctl).
    EmitPrism {
        model: PathBuf,
        /// Emit the subtree rooted here; default is the root.
        #[arg(long)]
        goal: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a compiled formula file under a binding file.
    Eval {
        formulas: PathBuf,
        #[arg(long = "bind")]
        bind: PathBuf,
        #[arg(long)]
        goal: Option<String>,
    },
    /// Compare formulae with the brute-force oracle on random bindings.
    Verify {
        /// Model to check; random small models when absent.
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the BSN closed loop and write a CSV trace.
    Simulate {
        /// Bundled scenario name (1a, 1b, 1c) or a scenario config file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "tamed")]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances and enhancement ratios for a tamed/untamed pair of traces.
    Report {
        tamed: PathBuf,
        untamed: PathBuf,
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Left out of the in-band fraction.
        #[arg(long, default_value_t = 30.0)]
        transient: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Fail {
    code: u8,
    message: String,
}

fn io(e: impl Display) -> Fail {
    Fail { code: 2, message: e.to_string() }
}

fn domain(e: impl Display) -> Fail {
    Fail { code: 1, message: e.to_string() }
}

type Res<T> = Result<T, Fail>;

fn read(path: &Path) -> Res<String> {
    std::fs::read_to_string(path).map_err(|e| io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Res<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| io(format!("{}: {e}", path.display())))
}

/// Provenance record written next to every output file.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    inputs: Vec<String>,
    seed: Option<u64>,
    outputs: Vec<String>,
    tool_version: String,
    /// sha256 over the command, its arguments and the input file contents.
    config_hash: String,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn write_manifest(command: &str, args: &[String], inputs: &[&str], seed: Option<u64>, outputs: &[PathBuf]) -> Res<()> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    for a in args {
        h.update([0]);
        h.update(a.as_bytes());
    }
    for i in inputs {
        h.update([1]);
        h.update(i.as_bytes());
    }
    let m = RunManifest {
        command: command.to_string(),
        inputs: args.to_vec(),
        seed,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hex::encode(h.finalize()),
    };
    let text = serde_json::to_string_pretty(&m).expect("serializable") + "\n";
    for out in outputs {
        write(&manifest_path(out), &text)?;
    }
    Ok(())
}

/// Writes to `out` (plus its manifest) or prints to stdout.
fn emit(out: Option<&PathBuf>, text: &str, command: &str, args: &[String], inputs: &[&str], seed: Option<u64>) -> Res<()> {
    match out {
        Some(p) => {
            write(p, text)?;
            write_manifest(command, args, inputs, seed, std::slice::from_ref(p))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn compile(model: &Path, goal: Option<&str>, out: Option<&PathBuf>) -> Res<()> {
    let text = read(model)?;
    let m = parse_model(&text).map_err(|e| domain(format!("{}: {e}", model.display())))?;
    if let Some(g) = goal {
        if m.node(g).is_none() {
            return Err(domain(format!("unknown goal `{g}`")));
        }
    }
    let start = Instant::now();
    let forms = compile_model(&m).map_err(domain)?;
    let took = start.elapsed();
    let records: BTreeMap<&str, FormulaRecord> = forms
        .iter()
        .filter(|(id, _)| match goal {
            Some(g) => id.as_str() == g,
            None => m.nodes[id.as_str()].kind == NodeKind::Goal,
        })
        .map(|(id, f)| (id.as_str(), FormulaRecord::from(f)))
        .collect();
    eprintln!("compiled {} nodes in {took:.2?}", forms.len());
    let args = vec![model.display().to_string(), goal.unwrap_or("").to_string()];
    emit(out, &json(&records), "compile", &args, &[&text], None)
}

fn emit_prism(model: &Path, goal: Option<&str>, out_dir: &Path) -> Res<()> {
    let text = read(model)?;
    let m = parse_model(&text).map_err(|e| domain(format!("{}: {e}", model.display())))?;
    let m = match goal {
        Some(g) => m.subtree(g).ok_or_else(|| domain(format!("unknown goal `{g}`")))?,
        None => m,
    };
    let pm = emit_model(&m).map_err(domain)?;
    let pctl = emit_properties(&m, &m.root_id).map_err(domain)?;
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let stem = match goal {
        Some(g) => format!("{stem}_{}", g.replace('.', "_")),
        None => stem.to_string(),
    };
    let pm_path = out_dir.join(format!("{stem}.pm"));
    let pctl_path = out_dir.join(format!("{stem}.pctl"));
    write(&pm_path, &pm.text)?;
    write(&pctl_path, &pctl)?;
    eprintln!("{} modules, {} CTX constants", pm.modules, pm.ctx_consts);
    let args = vec![model.display().to_string(), goal.unwrap_or("").to_string(), out_dir.display().to_string()];
    write_manifest("emit-prism", &args, &[&text], None, &[pm_path, pctl_path])
}

#[derive(Serialize)]
struct Evaluated {
    reliability: f64,
    cost: f64,
    eval_ms: f64,
}

fn eval(formulas: &Path, bind: &Path, goal: Option<&str>) -> Res<()> {
    let records: BTreeMap<String, FormulaRecord> = serde_json::from_str(&read(formulas)?)
        .map_err(|e| domain(format!("{}: {e}", formulas.display())))?;
    let bindings: BTreeMap<String, f64> =
        serde_json::from_str(&read(bind)?).map_err(|e| domain(format!("{}: {e}", bind.display())))?;
    let mut out = BTreeMap::new();
    for (id, r) in &records {
        if goal.is_some_and(|g| g != id) {
            continue;
        }
        let p = SymExpr::parse(&r.reliability).map_err(|e| domain(format!("{id}: {e}")))?;
        let c = SymExpr::parse(&r.cost).map_err(|e| domain(format!("{id}: {e}")))?;
        let start = Instant::now();
        let reliability = p.evaluate(&bindings).map_err(|e| domain(format!("{id}: {e}")))?;
        let cost = c.evaluate(&bindings).map_err(|e| domain(format!("{id}: {e}")))?;
        let eval_ms = start.elapsed().as_secs_f64() * 1e3;
        out.insert(id.clone(), Evaluated { reliability, cost, eval_ms });
    }
    if let Some(g) = goal {
        if out.is_empty() {
            return Err(domain(format!("no formula for `{g}`")));
        }
    }
    print!("{}", json(&out));
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    trials: usize,
    seed: u64,
    tolerance: f64,
    reliability_mismatches: usize,
    max_reliability_delta: f64,
    cost_checked: usize,
    cost_mismatches: usize,
    cost_not_applicable: usize,
    max_cost_delta: f64,
    failures: Vec<serde_json::Value>,
}

fn verify(model: Option<&Path>, trials: usize, seed: u64, tol: f64, out: Option<&PathBuf>) -> Res<bool> {
    let (fixed, text) = match model {
        Some(p) => {
            let t = read(p)?;
            (Some(parse_model(&t).map_err(|e| domain(format!("{}: {e}", p.display())))?), t)
        }
        None => (None, String::new()),
    };
    let cfg = GenConfig::default();
    let reports: Vec<_> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let m = match &fixed {
                Some(m) => m.clone(),
                None => random_model(&mut rng, &cfg),
            };
            let b = random_binding(&mut rng, &m, i % 2 == 0);
            check_formula(&m, &m.root_id, &b, tol).map(|r| (m, r))
        })
        .collect();
    let mut rep = VerifyReport {
        trials,
        seed,
        tolerance: tol,
        reliability_mismatches: 0,
        max_reliability_delta: 0.0,
        cost_checked: 0,
        cost_mismatches: 0,
        cost_not_applicable: 0,
        max_cost_delta: 0.0,
        failures: Vec::new(),
    };
    for r in reports {
        let (m, r) = r.map_err(domain)?;
        rep.max_reliability_delta = rep.max_reliability_delta.max(r.reliability_delta);
        rep.max_cost_delta = rep.max_cost_delta.max(r.cost_delta.unwrap_or(0.0));
        match r.cost {
            CostStatus::Ok => rep.cost_checked += 1,
            CostStatus::Mismatch => {
                rep.cost_checked += 1;
                rep.cost_mismatches += 1;
            }
            CostStatus::NotApplicable => rep.cost_not_applicable += 1,
        }
        if !r.reliability_ok {
            rep.reliability_mismatches += 1;
        }
        if (!r.reliability_ok || r.cost == CostStatus::Mismatch) && rep.failures.len() < 10 {
            rep.failures.push(serde_json::json!({ "model": m.to_json(), "report": r }));
        }
    }
    let ok = rep.reliability_mismatches == 0 && rep.cost_mismatches == 0;
    let args = vec![model.map(|p| p.display().to_string()).unwrap_or_default(), trials.to_string(), tol.to_string()];
    emit(out, &json(&rep), "verify", &args, &[&text], Some(seed))?;
    Ok(ok)
}

fn policy_or_default(path: Option<&PathBuf>) -> Res<(Policy, String)> {
    match path {
        Some(p) => {
            let t = read(p)?;
            Ok((Policy::from_json(&t).map_err(|e| domain(format!("{}: {e}", p.display())))?, t))
        }
        None => Ok((bsnsim::bsn_policy(), bsnsim::BSN_POLICY.to_string())),
    }
}

fn simulate(
    scenario: &str,
    model: Option<&PathBuf>,
    policy: Option<&PathBuf>,
    mode: Mode,
    seed: Option<u64>,
    out: &PathBuf,
) -> Res<()> {
    let (m, model_text) = match model {
        Some(p) => {
            let t = read(p)?;
            (parse_model(&t).map_err(|e| domain(format!("{}: {e}", p.display())))?, t)
        }
        None => (bsnsim::bsn_model(), bsnsim::BSN_MODEL.to_string()),
    };
    let (policy, policy_text) = policy_or_default(policy)?;
    let (mut config, config_text) = match bsnsim::bundled_scenario(scenario) {
        Some(c) => (c, scenario.to_string()),
        None => {
            let t = read(Path::new(scenario))?;
            (ScenarioConfig::from_json(&t).map_err(domain)?, t)
        }
    };
    config.mode = mode;
    if let Some(s) = seed {
        config.seed = s;
    }
    let ts = bsnsim::run(&config, &policy, &m).map_err(domain)?;
    write(out, &ts.to_csv())?;
    let fraction = ts.in_band_fraction(&policy, config.transient);
    eprintln!("{} ticks, {:.1}% in band after the transient", ts.records.len(), 100.0 * fraction);
    let mode_name = if mode == Mode::Tamed { "tamed" } else { "untamed" };
    let args = vec![scenario.to_string(), mode_name.to_string(), out.display().to_string()];
    write_manifest(
        "simulate",
        &args,
        &[&model_text, &policy_text, &config_text],
        Some(config.seed),
        std::slice::from_ref(out),
    )
}

#[derive(Serialize)]
struct Report {
    #[serde(flatten)]
    metrics: bsnsim::Metrics,
    tamed_in_band: f64,
    untamed_in_band: f64,
}

fn report(tamed: &Path, untamed: &Path, policy: Option<&PathBuf>, transient: f64, out: Option<&PathBuf>) -> Res<()> {
    let (policy, policy_text) = policy_or_default(policy)?;
    let (tt, ut) = (read(tamed)?, read(untamed)?);
    let t = TimeSeries::from_csv(&tt).map_err(|e| domain(format!("{}: {e}", tamed.display())))?;
    let u = TimeSeries::from_csv(&ut).map_err(|e| domain(format!("{}: {e}", untamed.display())))?;
    let (rs, cs) = setpoints(&policy);
    let metrics = metrics(&t, &u, rs, cs).map_err(domain)?;
    let r = Report {
        metrics,
        tamed_in_band: t.in_band_fraction(&policy, transient),
        untamed_in_band: u.in_band_fraction(&policy, transient),
    };
    let args = vec![tamed.display().to_string(), untamed.display().to_string(), transient.to_string()];
    emit(out, &json(&r), "report", &args, &[&policy_text, &tt, &ut], None)
}

fn configure_threads() -> Res<()> {
    if let Ok(v) = std::env::var("GOALC_THREADS") {
        let n: usize = v.parse().map_err(|_| io(format!("GOALC_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().map_err(io)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Res<bool> {
    configure_threads()?;
    match cli.command {
        Command::Compile { model, goal, out } => compile(&model, goal.as_deref(), out.as_ref())?,
        Command::EmitPrism { model, goal, out_dir } => emit_prism(&model, goal.as_deref(), &out_dir)?,
        Command::Eval { formulas, bind, goal } => eval(&formulas, &bind, goal.as_deref())?,
        Command::Verify { model, trials, seed, tol, out } => {
            return verify(model.as_deref(), trials, seed, tol, out.as_ref());
        }
        Command::Simulate { scenario, model, policy, mode, seed, out } => {
            simulate(&scenario, model.as_ref(), policy.as_ref(), mode, seed, &out)?
        }
        Command::Report { tamed, untamed, policy, transient, out } => {
            report(&tamed, &untamed, policy.as_ref(), transient, out.as_ref())?
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification found mismatches");
            ExitCode::from(1)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
