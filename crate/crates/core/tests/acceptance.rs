//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits nonzero on any FAIL.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use goalc::bsnsim::{bsn_model, bsn_policy, bundled_scenario, compare, run};
use goalc::cgm::{parse_model, ContextDef, Decomposition as D, GoalModel, Node, NodeKind as K};
use goalc::compiler::{compile_model, compose_node_form};
use goalc::gen::{random_binding, random_model, GenConfig};
use goalc::oracle::{check_formula, cost_check_applies, ConcreteBinding, CostStatus};
use goalc::prismgen::{emit_model, emit_properties};
use goalc::symexpr::SymExpr;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn reliability_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let cfg = GenConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let m = random_model(&mut rng, &cfg);
        for k in 0..10 {
            let b = random_binding(&mut rng, &m, k % 2 == 0);
            let rep = check_formula(&m, &m.root_id, &b, 1e-9).map_err(|e| e.to_string())?;
            worst = worst.max(rep.reliability_delta);
        }
    }
    let took = start.elapsed();
    ensure(
        worst <= 1e-9 && took < Duration::from_secs(60),
        format!("10000 checks, max |formula - oracle| = {worst:.2e}, {took:.2?}"),
    )
}

/// Root OR (optionally DM) over two AND-only operands.
fn binary_or_model(rng: &mut ChaCha8Rng, dm: bool) -> GoalModel {
    let mut nodes = Vec::new();
    let mut operands = Vec::new();
    for side in ["A", "B"] {
        let n = rng.gen_range(1..=3);
        let mut op = if n == 1 {
            Node::new(side, K::LeafTask)
        } else {
            let kids: Vec<String> = (1..=n).map(|i| format!("{side}{i}")).collect();
            let refs: Vec<&str> = kids.iter().map(String::as_str).collect();
            for k in &kids {
                let mut leaf = Node::new(k, K::LeafTask);
                if rng.gen_bool(0.3) {
                    leaf = leaf.with_contexts(&["C3"]);
                }
                nodes.push(leaf);
            }
            Node::new(side, K::Task).with_children(D::And, &refs)
        };
        if dm || rng.gen_bool(0.5) {
            op = op.with_contexts(&[if side == "A" { "C1" } else { "C2" }]);
        }
        operands.push(side);
        nodes.push(op);
    }
    let mut root = Node::new("G", K::Goal).with_children(D::Or, &operands);
    if dm {
        root = root.with_dm(&operands);
    }
    nodes.push(root);
    let ctx = ["C1", "C2", "C3"].map(|c| ContextDef::boolean(c, ""));
    GoalModel::from_parts("or", "G", nodes, ctx)
}

fn cost_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC057);
    let cfg = GenConfig { and_only: true, ..GenConfig::default() };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..1000 {
        let m = random_model(&mut rng, &cfg);
        for _ in 0..10 {
            let b = random_binding(&mut rng, &m, false);
            let rep = check_formula(&m, &m.root_id, &b, 1e-9).map_err(|e| e.to_string())?;
            if rep.cost != CostStatus::Ok {
                return Err(format!("AND-only cost check failed: {rep:?}"));
            }
            worst = worst.max(rep.cost_delta.unwrap_or(0.0));
            checked += 1;
        }
    }
    for i in 0..1000 {
        let m = binary_or_model(&mut rng, i % 2 == 1);
        for _ in 0..10 {
            let mut b = random_binding(&mut rng, &m, true);
            b.set("C_C3", 1.0);
            if !cost_check_applies(&m, "G", &b) {
                return Err(format!("binary OR/DM model outside the checked class: {}", m.to_json()));
            }
            let rep = check_formula(&m, "G", &b, 1e-9).map_err(|e| e.to_string())?;
            if rep.cost != CostStatus::Ok {
                return Err(format!("binary OR/DM cost check failed: {rep:?}"));
            }
            worst = worst.max(rep.cost_delta.unwrap_or(0.0));
            checked += 1;
        }
    }
    ensure(worst <= 1e-9, format!("{checked} checks, max |formula - oracle| = {worst:.2e}"))
}

fn reference_form(text: &str) -> SymExpr {
    SymExpr::parse(text).expect("transcribed formula parses")
}

/// `r_T1_11` -> `rT1.11`, `C_C1` -> `C1`.
fn reference_names(name: &str) -> String {
    if let Some(c) = name.strip_prefix("C_") {
        return c.to_string();
    }
    let (prefix, id) = name.split_once('_').expect("prefixed name");
    format!("{prefix}{}", id.replace('_', "."))
}

fn table_iv() -> Outcome {
    let m = bsn_model();
    let g3 = compose_node_form(&m, "G3").map_err(|e| e.to_string())?.p;
    let a = "rT1.11*fT1.11*rT1.12*fT1.12*rT1.13*fT1.13*C1";
    let b = "rT1.21*fT1.21*rT1.22*fT1.22*rT1.23*fT1.23*C2";
    let rows = [
        ((1, 1), format!("-{a}*{b} + {a} + {b}")),
        ((1, 0), a.to_string()),
        ((0, 1), b.to_string()),
    ];
    for ((c1, c2), text) in rows {
        // Contexts that are 0 in the row vanish; those that hold stay
        // symbolic.
        let mut zero: BTreeMap<String, f64> =
            ["C_C3", "C_C4", "C_C5", "OPT_T1_X"].iter().map(|k| (k.to_string(), 0.0)).collect();
        if c1 == 0 {
            zero.insert("C_C1".into(), 0.0);
        }
        if c2 == 0 {
            zero.insert("C_C2".into(), 0.0);
        }
        let ours = g3.substitute(&zero).rename(reference_names);
        if ours != reference_form(&text) {
            return Err(format!("row ({c1},{c2}): got {}", ours.render()));
        }
        let mut full: BTreeMap<String, f64> = g3.names().into_iter().map(|n| (n, 1.0)).collect();
        full.extend(zero);
        let v = g3.evaluate(&full).map_err(|e| e.to_string())?;
        if v != 1.0 {
            return Err(format!("row ({c1},{c2}) at unit values gives {v}"));
        }
    }
    ensure(true, "rows (1,1), (1,0), (0,1) equal after renaming".into())
}

fn family(n: usize, decomposition: D, contexts: bool, dm: bool) -> GoalModel {
    let ids: Vec<String> = (1..=n).map(|i| format!("L{i}")).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let mut root = Node::new("G", K::Goal).with_children(decomposition, &refs);
    if dm {
        root = root.with_dm(&refs);
    }
    let mut nodes = vec![root];
    let mut ctx = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let mut leaf = Node::new(id, K::LeafTask);
        if contexts {
            let c = format!("C{}", i + 1);
            leaf = leaf.with_contexts(&[&c]);
            ctx.push(ContextDef::boolean(&c, ""));
        }
        nodes.push(leaf);
    }
    GoalModel::from_parts("growth", "G", nodes, ctx)
}

fn parameter_growth() -> Outcome {
    let cases = [
        ("AND", D::And, false, false, 2, 3),
        ("OR", D::Or, false, false, 2, 3),
        ("AND+ctx", D::And, true, false, 3, 4),
        ("OR+ctx", D::Or, true, false, 3, 4),
        ("DM", D::Or, true, true, 3, 4),
    ];
    let mut summary = Vec::new();
    for (name, d, ctx, dm, pr, pc) in cases {
        for n in 1..=8 {
            let m = family(n, d, ctx, dm);
            let f = compose_node_form(&m, "G").map_err(|e| e.to_string())?;
            let got = (f.p.names().len(), f.cost.names().len());
            if got != (pr * n, pc * n) {
                return Err(format!("{name} with {n} subtrees: {got:?}, want {:?}", (pr * n, pc * n)));
            }
        }
        summary.push(format!("{name} {pr}/{pc}"));
    }
    ensure(true, format!("per subtree (reliability/cost): {}", summary.join(", ")))
}

fn dm_single_operand() -> Outcome {
    let m = GoalModel::from_parts(
        "dm1",
        "G",
        [
            Node::new("G", K::Goal).with_children(D::Or, &["N1"]).with_dm(&["N1"]),
            Node::new("N1", K::LeafTask).with_contexts(&["C1"]),
        ],
        [ContextDef::boolean("C1", "")],
    );
    let p = compose_node_form(&m, "G").map_err(|e| e.to_string())?.p;
    let n1 = compose_node_form(&m, "N1").map_err(|e| e.to_string())?.p;
    let expect = SymExpr::param("C_C1").mul(&SymExpr::product_of(["r_N1", "f_N1"]));
    ensure(p == expect && n1 == expect, format!("DM(N1) = {}", p.render()))
}

fn performance() -> Outcome {
    let m = bsn_model();
    let start = Instant::now();
    let forms = compile_model(&m).map_err(|e| e.to_string())?;
    let compile = start.elapsed();
    let cost = &forms["G1"].cost;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let b: ConcreteBinding = random_binding(&mut rng, &m, false);
    let start = Instant::now();
    let v = cost.evaluate(&b).map_err(|e| e.to_string())?;
    let eval = start.elapsed();
    let bytes = cost.size_bytes();
    let ratio = bytes as f64 / 22_000.0;
    let params = forms["G1"].cost.names().len();
    ensure(
        compile < Duration::from_secs(1) && eval < Duration::from_millis(100) && (0.2..=5.0).contains(&ratio) && v.is_finite(),
        format!(
            "compile {compile:.2?} (ref 0.085 s), cost eval {eval:.2?} (ref 0.020 s), cost formula {bytes} B = {ratio:.2}x of 22 KB, {params} params (ref 60)"
        ),
    )
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn prism_emission() -> Outcome {
    let m = parse_model(&fixture("dm2.json")).map_err(|e| e.to_string())?;
    let pm = emit_model(&m).map_err(|e| e.to_string())?;
    if pm.text != fixture("dm2.pm") {
        return Err("dm2.pm differs from the golden file".into());
    }
    if emit_properties(&m, "G").map_err(|e| e.to_string())? != fixture("dm2.pctl") {
        return Err("dm2.pctl differs from the golden file".into());
    }
    let bsn = bsn_model();
    let t1 = bsn.subtree("T1").ok_or("no T1")?;
    let emitted = emit_model(&t1).map_err(|e| e.to_string())?;
    let declared = emitted.text.lines().filter(|l| l.starts_with("const int CTX_")).count();
    ensure(
        emitted.ctx_consts == 31 && declared == 31,
        format!("golden files match; T1 declares {} CTX constants", emitted.ctx_consts),
    )
}

fn scenarios() -> Outcome {
    let (m, p) = (bsn_model(), bsn_policy());
    let reference = [("1a", 2.66, 3.36), ("1b", 3.04, 9.30), ("1c", 1.98, 4.09)];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, er, ec) in reference {
        let c = bundled_scenario(name).ok_or("missing bundled scenario")?;
        let cmp = compare(&c, &p, &m).map_err(|e| e.to_string())?;
        let pass = cmp.metrics.e_r.0 > 1.0 && cmp.metrics.e_c.0 > 1.0 && cmp.tamed_in_band >= 0.70;
        ok &= pass;
        lines.push(format!(
            "{name}: e_r {} e_c {} in-band {:.1}% (reference e_r {er}, e_c {ec})",
            cmp.metrics.e_r,
            cmp.metrics.e_c,
            100.0 * cmp.tamed_in_band
        ));
    }
    ensure(ok, lines.join("; "))
}

fn determinism() -> Outcome {
    let (m, p) = (bsn_model(), bsn_policy());
    let mut hashes = Vec::new();
    for name in ["1a", "1b", "1c"] {
        let c = bundled_scenario(name).ok_or("missing bundled scenario")?;
        let a = hex::encode(Sha256::digest(run(&c, &p, &m).map_err(|e| e.to_string())?.to_csv()));
        let b = hex::encode(Sha256::digest(run(&c, &p, &m).map_err(|e| e.to_string())?.to_csv()));
        if a != b {
            return Err(format!("{name}: {a} != {b}"));
        }
        hashes.push(format!("{name} {}", &a[..12]));
    }
    ensure(true, format!("identical CSV hashes: {}", hashes.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("formula-oracle reliability equivalence", reliability_equivalence),
        ("formula-oracle cost equivalence on the checked class", cost_equivalence),
        ("G3 context variability formulae", table_iv),
        ("parameter growth ratios", parameter_growth),
        ("DM single-operand reduction", dm_single_operand),
        ("desk-scale performance", performance),
        ("PRISM emission", prism_emission),
        ("closed-loop scenarios", scenarios),
        ("simulation determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
