//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.
//!
//! The training reproduction takes about an hour on one core. Set
//! `ELASTISR_ACCEPTANCE=1,3,4` to run a subset while iterating; skipped
//! criteria are reported as SKIP and do not count as passes.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use elastisr_core::elasticity::{
    analytical_displacement, analytical_stress, body_force, constitutive_stress, strain_from_grad, LoadCase,
    MaterialParams,
};
use elastisr_core::eval::{self, format_sig, EvalReport, Method, PanelAnnotations};
use elastisr_core::fem::{
    analytical_grid, assemble_and_solve, generate_dataset, l2_displacement_error, CellSplit, Dataset, DatasetParams,
    Mesh,
};
use elastisr_core::models::{Arch, Model, ModelConfig};
use elastisr_core::residual::{total_loss, total_loss_and_grad, LossWeights, ManufacturedPhysics};
use elastisr_core::train::{
    fit_normalizer, lbfgs_finetune, train, LbfgsConfig, Problem, TrainConfig, TrainHistory, TrainInput, TrainSinks,
};
use elastisr_core::{Execution, FieldGrid, GridShape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Sixth-order central difference of `f` at `x`.
fn d6(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let h = 1e-3;
    let c = [(1.0, 45.0), (2.0, -9.0), (3.0, 1.0)];
    c.iter().map(|&(k, w)| w * (f(x + k * h) - f(x - k * h))).sum::<f64>() / (60.0 * h)
}

fn manufactured_oracle() -> Outcome {
    let mat = MaterialParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (x, y) = (rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
        let load = LoadCase::with_q(rng.random_range(0.0..=4.0)).unwrap();
        let s = |x: f64, y: f64| analytical_stress(x, y, &load, &mat);
        let u = |x: f64, y: f64| analytical_displacement(x, y, &load);
        let (bx, by) = body_force(x, y, &load, &mat);
        let rx = d6(|t| s(t, y).0, x) + d6(|t| s(x, t).2, y) + bx;
        let ry = d6(|t| s(t, y).2, x) + d6(|t| s(x, t).1, y) + by;
        let strain = strain_from_grad(
            d6(|t| u(t, y).0, x),
            d6(|t| u(x, t).0, y),
            d6(|t| u(t, y).1, x),
            d6(|t| u(x, t).1, y),
        );
        let c = constitutive_stress(strain.0, strain.1, strain.2, &mat);
        let sa = s(x, y);
        for r in [rx, ry, c.0 - sa.0, c.1 - sa.1, c.2 - sa.2] {
            worst = worst.max(r.abs());
        }
    }
    check(worst <= 1e-10, format!("max residual {worst:.3e} at 20 points (limit 1e-10)"))
}

fn fem_convergence() -> Outcome {
    let mat = MaterialParams::default();
    let load = LoadCase::with_q(4.0).unwrap();
    let domain = DatasetParams::default().domain;
    let mut rows = Vec::new();
    for n in [4, 8, 16, 32] {
        let mesh = Mesh::structured(&domain, n, n, CellSplit::CrissCross).unwrap();
        let sol = assemble_and_solve(&mesh, &mat, &load).unwrap();
        let err = l2_displacement_error(&mesh, &sol.ux, &sol.uy, |x, y| analytical_displacement(x, y, &load));
        rows.push((mesh.node_count(), err));
    }
    let orders: Vec<f64> = rows.windows(2).map(|w| (w[0].1 / w[1].1).log2()).collect();
    let nodes: Vec<usize> = rows.iter().map(|r| r.0).collect();
    check(
        orders.iter().all(|&p| p >= 1.8),
        format!("nodes {nodes:?}, observed orders {:?} (need >= 1.8)", orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()),
    )
}

fn residual_consistency() -> Outcome {
    let mat = MaterialParams::default();
    let domain = DatasetParams::default().domain;
    let weights = LossWeights::nondimensional(&domain, &mat, 1.0);
    let mut notes = Vec::new();
    let mut ok = true;
    for q in [0.4, 2.0, 4.0] {
        let load = LoadCase::with_q(q).unwrap();
        let phys = ManufacturedPhysics::new(mat, domain, load);
        let losses: Vec<_> = [32, 64, 128]
            .iter()
            .map(|&n| total_loss(&analytical_grid(GridShape::unit(n), &load, &mat), &weights, &phys.physics()).unwrap())
            .collect();
        let decreasing = losses.windows(2).all(|w| w[1].total < w[0].total);
        let ratios: Vec<f64> = losses.windows(2).map(|w| w[0].pde / w[1].pde).collect();
        ok &= decreasing && ratios.iter().all(|&r| r >= 3.5);
        notes.push(format!("Q={q}: total decreasing={decreasing}, pde ratios {:.2}/{:.2}", ratios[0], ratios[1]));
    }
    check(ok, notes.join("; "))
}

fn gradient_check() -> Outcome {
    let mat = MaterialParams::default();
    let domain = DatasetParams::default().domain;
    let weights = LossWeights::nondimensional(&domain, &mat, 1.0);
    let phys = ManufacturedPhysics::new(mat, domain, LoadCase::with_q(3.0).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = GridShape::unit(8);
    let data = (0..shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let grid = FieldGrid::from_vec(shape, 3.0, data).unwrap();
    let (_, grad) = total_loss_and_grad(&grid, &weights, &phys.physics()).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for k in 0..grid.data().len() {
        let mut p = grid.clone();
        p.data_mut()[k] += h;
        let mut m = grid.clone();
        m.data_mut()[k] -= h;
        let fd = (total_loss(&p, &weights, &phys.physics()).unwrap().total
            - total_loss(&m, &weights, &phys.physics()).unwrap().total)
            / (2.0 * h);
        worst = worst.max((fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-8));
    }
    check(worst <= 1e-5, format!("max relative error {worst:.3e} over {} entries (limit 1e-5)", grad.len()))
}

fn label_free(ds: &Dataset) -> Outcome {
    let mut poisoned = ds.clone();
    for s in &mut poisoned.samples {
        s.hr.data_mut().fill(f64::NAN);
    }
    let inputs = TrainInput::from_samples(poisoned.train_samples());
    let problem = Problem::from_dataset(ds.params(), None);
    let mut model = Model::build(ModelConfig::new(Arch::Rdn), 0).unwrap();
    model.set_normalizer(fit_normalizer(&inputs).unwrap());
    let cfg = TrainConfig { epochs: 10, lr: 1e-3, eval_every: 0, ..Default::default() };
    let out = train(model, &inputs, &[], &problem, &cfg, &TrainSinks::default()).map_err(|e| format!("training failed: {e}"))?;
    let finite = out.history.epochs.iter().all(|e| e.train.total.is_finite());
    let methods = [Method::bicubic(), Method::model("rdn", &out.model, None)];
    let scale = ds.params().hr_res / ds.params().lr_res;
    let eval = eval::evaluate(&poisoned.test_samples(), &methods, &problem, &ds.manifest.hash(), scale, Execution::Parallel);
    let failed = matches!(eval, Err(elastisr_core::Error::MissingGroundTruth(_)));
    check(
        finite && failed,
        format!(
            "10 epochs on NaN HR: losses finite={finite}, final {:.4e}; evaluation {}",
            out.history.last_loss().unwrap_or(f64::NAN),
            match &eval {
                Err(e) => format!("failed: {e}"),
                Ok(_) => "unexpectedly succeeded".into(),
            }
        ),
    )
}

fn dataset_protocol(ds: &Dataset, seconds: f64) -> Outcome {
    let p = ds.params();
    let again = elastisr_core::train::split_indices(ds.samples.len(), p.split_ratio, p.seed).unwrap();
    let hr_nodes = ds.manifest.hr_nodes;
    let ok = ds.samples.len() == 101
        && ds.manifest.split.train.len() == 81
        && ds.manifest.split.test.len() == 20
        && again == ds.manifest.split
        && ds.samples.iter().all(|s| s.lr.resolution() == (32, 32) && s.hr.resolution() == (128, 128))
        && hr_nodes == 16384
        && (ds.samples[100].q - 4.0).abs() < 1e-12;
    check(
        ok,
        format!(
            "{} samples, split {}/{} (reproducible={}), LR {:?}, HR {:?}, {} HR nodes, generated in {seconds:.0}s",
            ds.samples.len(),
            ds.manifest.split.train.len(),
            ds.manifest.split.test.len(),
            again == ds.manifest.split,
            ds.samples[0].lr.resolution(),
            ds.samples[0].hr.resolution(),
            hr_nodes
        ),
    )
}

struct Trained {
    arch: Arch,
    model: Model,
    history: TrainHistory,
}

fn train_reduced(ds: &Dataset, arch: Arch) -> Trained {
    let inputs = TrainInput::from_samples(ds.train_samples());
    let problem = Problem::from_dataset(ds.params(), None);
    let mut model = Model::build(ModelConfig::new(arch), 0).unwrap();
    model.set_normalizer(fit_normalizer(&inputs).unwrap());
    let cfg = TrainConfig {
        epochs: 200,
        lr: 1e-3,
        eval_every: 0,
        lbfgs: LbfgsConfig { max_iters: 50, ..Default::default() },
        ..Default::default()
    };
    let t0 = Instant::now();
    let out = train(model, &inputs, &[], &problem, &cfg, &TrainSinks { progress_every: 25, ..Default::default() }).unwrap();
    let mut model = out.model;
    let mut history = out.history;
    history.lbfgs = Some(lbfgs_finetune(&mut model, &inputs, &problem, &cfg).unwrap());
    eprintln!("{arch}: trained in {:.0}s", t0.elapsed().as_secs_f64());
    Trained { arch, model, history }
}

fn evaluate_all(ds: &Dataset, trained: &[Trained]) -> EvalReport {
    let mut methods = vec![Method::bicubic()];
    methods.extend(trained.iter().map(|t| Method::model(t.arch.name(), &t.model, None)));
    let problem = Problem::from_dataset(ds.params(), None);
    eval::evaluate(&ds.test_samples(), &methods, &problem, &ds.manifest.hash(), 4, Execution::Parallel).unwrap()
}

fn training_reproduction(trained: &[Trained], report: &EvalReport) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for t in trained {
        let first = t.history.first_loss().unwrap();
        let last = t.history.final_loss().unwrap();
        ok &= first / last >= 10.0;
        notes.push(format!("{} loss {first:.3e} -> {last:.3e} ({:.1}x)", t.arch, first / last));
    }
    let bicubic = report.method(eval::BICUBIC).unwrap().mean_error;
    let fsrcnn = report.method("fsrcnn").unwrap().mean_error;
    let rdn = report.method("rdn").unwrap().mean_error;
    for (name, e) in [("fsrcnn", fsrcnn), ("rdn", rdn)] {
        let margin = 1.0 - e / bicubic;
        ok &= margin >= 0.2;
        notes.push(format!("{name} test error {e:.4} vs bicubic {bicubic:.4} ({:.0}% lower)", 100.0 * margin));
    }
    ok &= rdn <= 1.05 * fsrcnn;
    notes.push(format!("rdn/fsrcnn = {:.3} (need <= 1.05)", rdn / fsrcnn));
    check(ok, notes.join("; "))
}

fn physics_ordering(report: &EvalReport) -> Outcome {
    let bicubic = report.method(eval::BICUBIC).unwrap().mean_physics_loss;
    let mut ok = true;
    let mut notes = vec![format!("bicubic {bicubic:.4e}")];
    for name in ["fsrcnn", "rdn"] {
        let m = report.method(name).unwrap().mean_physics_loss;
        ok &= m < bicubic;
        notes.push(format!("{name} {m:.4e}"));
    }
    check(ok, format!("mean test physics loss: {}", notes.join(", ")))
}

fn parameter_parity() -> Outcome {
    let f = Model::build(ModelConfig::new(Arch::Fsrcnn), 0).unwrap().param_count();
    let r = Model::build(ModelConfig::new(Arch::Rdn), 0).unwrap().param_count();
    let gap = (f as f64 - r as f64).abs() / f.max(r) as f64;
    check(gap <= 0.15, format!("fsrcnn {f}, rdn {r}, gap {:.1}% (limit 15%)", 100.0 * gap))
}

fn run_cli(args: &[&str], out_root: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_elastisr"))
        .args(args)
        .env("ELASTISR_OUT", out_root)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.code() != Some(0) {
        return Err(format!("`elastisr {}` exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(())
}

fn end_to_end() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let t0 = Instant::now();
    run_cli(&["generate-data", "--q-start", "0.4", "--q-end", "2.0", "--dq", "0.4", "--out", &p("data")], root)?;
    run_cli(&["train", "--data", &p("data"), "--epochs", "10", "--lr", "1e-3", "--lbfgs-iters", "3", "--out", &p("rdn.ckpt")], root)?;
    run_cli(&["evaluate", "--data", &p("data"), "--ckpt", &p("rdn.ckpt"), "--out", &p("report")], root)?;
    let report = EvalReport::read_json(&root.join("report/report.json")).map_err(|e| e.to_string())?;
    let id = report.methods[0].samples[0].id;
    run_cli(&["plot", "--report", &p("report"), "--samples", &id.to_string()], root)?;

    let png = root.join(format!("report/panels/sample_{id:04}.png"));
    let side = std::fs::read_to_string(png.with_extension("json")).map_err(|e| e.to_string())?;
    let ann: PanelAnnotations = serde_json::from_str(&side).map_err(|e| e.to_string())?;
    let mut mismatches = 0;
    let mut checked = 0;
    for (col, label) in ann.columns.iter().enumerate() {
        let Some(method) = report.method(label) else { continue };
        let sample = method.samples.iter().find(|s| s.id == id).unwrap();
        for (c, row) in ann.rows.iter().enumerate() {
            checked += 1;
            let want = format_sig(sample.errors[c]);
            if row.errors[col] != Some(sample.errors[c]) || !row.texts[col].as_deref().is_some_and(|t| t.contains(&want)) {
                mismatches += 1;
            }
        }
    }
    check(
        png.is_file() && checked == 10 && mismatches == 0,
        format!(
            "5 samples -> 10 epochs -> evaluate -> plot in {:.0}s; panel {} with {checked} annotations, {mismatches} mismatches",
            t0.elapsed().as_secs_f64(),
            png.file_name().unwrap().to_string_lossy()
        ),
    )
}

fn main() {
    // cargo passes libtest flags to every test target; this one takes none
    let wanted: Option<Vec<usize>> = std::env::var("ELASTISR_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let on = |n: usize| wanted.as_ref().is_none_or(|w| w.contains(&n));

    let mut results: Vec<(usize, &str, Option<Outcome>)> = Vec::new();
    let mut run = |n: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = on(n).then(|| {
            let t0 = Instant::now();
            let r = catch_unwind(AssertUnwindSafe(&mut *f)).unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                Err(format!("panicked: {}", msg.unwrap_or_default()))
            });
            r.map(|d| format!("{d} [{:.1}s]", t0.elapsed().as_secs_f64()))
        });
        results.push((n, name, outcome));
    };

    run(1, "manufactured-solution oracle", &mut manufactured_oracle);
    run(2, "FEM convergence", &mut fem_convergence);
    run(3, "FD residual consistency", &mut residual_consistency);
    run(4, "loss gradient check", &mut gradient_check);

    let needs_data = [5, 6, 7, 8].iter().any(|&n| on(n));
    let t0 = Instant::now();
    let ds = needs_data.then(|| generate_dataset(&DatasetParams::default(), Execution::Parallel).unwrap());
    let gen_seconds = t0.elapsed().as_secs_f64();

    run(5, "label-free contract", &mut || label_free(ds.as_ref().unwrap()));
    run(6, "dataset protocol", &mut || dataset_protocol(ds.as_ref().unwrap(), gen_seconds));

    let trained: Option<Vec<Trained>> = (on(7) || on(8)).then(|| {
        let ds = ds.as_ref().unwrap();
        Arch::ALL.iter().map(|&a| train_reduced(ds, a)).collect()
    });
    let report = trained.as_ref().map(|t| evaluate_all(ds.as_ref().unwrap(), t));
    if let Some(r) = &report {
        eprint!("{}", r.to_table());
    }
    run(7, "desk-scale training reproduction", &mut || training_reproduction(trained.as_ref().unwrap(), report.as_ref().unwrap()));
    run(8, "physics-consistency ordering", &mut || physics_ordering(report.as_ref().unwrap()));
    run(9, "parameter parity", &mut parameter_parity);
    run(10, "end-to-end smoke", &mut end_to_end);

    println!();
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Some(Ok(d)) => println!("criterion {n:>2} PASS  {name}: {d}"),
            Some(Err(d)) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {d}");
            }
            None => println!("criterion {n:>2} SKIP  {name}"),
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
