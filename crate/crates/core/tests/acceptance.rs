//! Acceptance criteria, one PASS/FAIL line each.
//!
//! The MNIST criteria need the IDX files in `data/mnist` at the workspace
//! root (see `scripts/fetch_mnist.sh`).

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rlnd::evalcli::synthcheck::{manifold_learning, run_synth_check};
use rlnd::evalcli::{
    attack_sweep, evaluate, prepare_cell, sweep_epsilons, train_baseline, write_report, write_rows, Cell,
    ExperimentConfig, Metrics, ResultRow,
};
use rlnd::datasets::load_idx_dir;
use rlnd::robust::finetune_robust;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    passed: Vec<bool>,
}

impl Outcome {
    fn record(&mut self, id: &str, pass: bool, detail: &str, took: Duration) {
        println!("[{}] {id} ({:.1}s): {detail}", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
        self.passed.push(pass);
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn gradients(out: &mut Outcome) {
    let t = Instant::now();
    let errs = common::grad::all_losses();
    let worst = errs.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    let took = t.elapsed();
    let pass = worst < common::grad::TOL && took < Duration::from_secs(60);
    out.record("1 gradient suite", pass, &format!("max rel err {worst:.2e} < 1e-4; {}", detail.join(", ")), took);
}

fn oracles(out: &mut Outcome) {
    let t = Instant::now();
    let checks = run_synth_check(0).expect("synth check");
    let took = t.elapsed();
    for c in &checks {
        println!("    {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    let pass = checks.iter().all(|c| c.passed) && took < Duration::from_secs(300);
    out.record("2 oracle suite", pass, &format!("{}/{} properties hold", checks.iter().filter(|c| c.passed).count(), checks.len()), took);
}

fn manifold(out: &mut Outcome) {
    let t = Instant::now();
    let (fit, check) = manifold_learning(0, 30).expect("manifold training");
    let took = t.elapsed();
    let pass = check.passed && took < Duration::from_secs(600);
    let detail = format!(
        "mean |J_f u| {:.4} in [0.9, 1.1]; mean residual {:.4} <= {:.4}",
        fit.mean_ju_norm, fit.mean_residual, fit.residual_bound
    );
    out.record("3 manifold learning", pass, &detail, took);
}

struct SeedRun {
    base: Vec<(f64, Metrics)>,
    rlnd: Vec<(f64, Metrics)>,
}

fn at(sweep: &[(f64, Metrics)], eps: f64) -> Metrics {
    sweep.iter().find(|(e, _)| *e == eps).expect("swept radius").1
}

fn mnist(out: &mut Outcome) {
    let root = root();
    let mut cfg = ExperimentConfig::load(&root.join("configs/mnist.toml")).expect("configs/mnist.toml");
    cfg.data.path = root.join(&cfg.data.path);
    if !cfg.data.path.join("train-images-idx3-ubyte").is_file() {
        let msg = format!("MNIST not found in {}; run scripts/fetch_mnist.sh", cfg.data.path.display());
        out.record("4 clean benchmark direction", false, &msg, Duration::ZERO);
        out.record("5 attack robustness direction", false, &msg, Duration::ZERO);
        return;
    }
    let ds = load_idx_dir(&cfg.data.path, &cfg.data.name).expect("MNIST");
    let eps = sweep_epsilons(&cfg);
    let (mut train_time, mut attack_time) = (Duration::ZERO, Duration::ZERO);
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for seed in SEEDS {
        let cell = Cell { class: 0, pct: 50, seed };
        let t = Instant::now();
        let data = prepare_cell(&ds, &cfg, cell).expect("split");
        let (model, lm) = train_baseline(&cfg, cell, &data).expect("baseline");
        let tuned = finetune_robust(
            model.clone(),
            lm.clone(),
            &data.train,
            &data.val,
            &cell.aae_config(&cfg),
            &cell.robust_config(&cfg),
        )
        .expect("fine-tune");
        let clean = (evaluate(&model, &lm, &data.test).unwrap(), evaluate(&tuned.model, &tuned.lm, &data.test).unwrap());
        train_time += t.elapsed();

        let t = Instant::now();
        let base = attack_sweep(&model, &lm, &data.test, &eps, &mut cell.attack_rng()).unwrap();
        let rlnd = attack_sweep(&tuned.model, &tuned.lm, &data.test, &eps, &mut cell.attack_rng()).unwrap();
        attack_time += t.elapsed();
        assert_eq!((at(&base, 0.0), at(&rlnd, 0.0)), clean, "zero-radius sweep differs from clean evaluation");

        println!(
            "    seed {seed}: eps {:.3}; F1 baseline {:.4} rlnd {:.4}; AUROC by eps baseline [{}] rlnd [{}]",
            tuned.epsilon,
            clean.0.f1,
            clean.1.f1,
            base.iter().map(|(_, m)| format!("{:.3}", m.auroc)).collect::<Vec<_>>().join(" "),
            rlnd.iter().map(|(_, m)| format!("{:.3}", m.auroc)).collect::<Vec<_>>().join(" "),
        );
        rows.extend(base.iter().map(|&(e, m)| ResultRow::new("baseline", cell, e, m)));
        rows.extend(rlnd.iter().map(|&(e, m)| ResultRow::new("rlnd", cell, e, m)));
        runs.push(SeedRun { base, rlnd });
    }
    let dir = root.join("target/acceptance");
    write_rows(&dir.join("mnist_results.csv"), &rows).unwrap();
    write_report(&rows, &dir).unwrap();

    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let base_f1 = mean(&|r| at(&r.base, 0.0).f1);
    let rlnd_f1 = mean(&|r| at(&r.rlnd, 0.0).f1);
    let f1_wins = runs.iter().filter(|r| at(&r.rlnd, 0.0).f1 >= at(&r.base, 0.0).f1).count();
    let pass4 = rlnd_f1 >= base_f1 - 0.005 && f1_wins >= 2 && train_time < Duration::from_secs(30 * 60);
    out.record(
        "4 clean benchmark direction",
        pass4,
        &format!("mean F1 baseline {base_f1:.4} rlnd {rlnd_f1:.4} (need >= baseline - 0.005); rlnd >= baseline in {f1_wins}/3 seeds (need 2)"),
        train_time,
    );

    let attacked = [0.5, 1.0, 2.0];
    let auroc_wins = runs
        .iter()
        .filter(|r| attacked.iter().all(|&e| at(&r.rlnd, e).auroc > at(&r.base, e).auroc))
        .count();
    let gap = mean(&|r| at(&r.rlnd, 2.0).auroc - at(&r.base, 2.0).auroc);
    let monotone = runs.iter().filter(|r| r.base.windows(2).all(|w| w[1].1.auroc < w[0].1.auroc)).count();
    let pass5 = auroc_wins >= 2 && gap >= 0.02 && monotone == runs.len() && attack_time < Duration::from_secs(20 * 60);
    out.record(
        "5 attack robustness direction",
        pass5,
        &format!(
            "rlnd AUROC > baseline at every eps in {auroc_wins}/3 seeds (need 2); mean gap at eps=2 {gap:.4} (need 0.02); baseline AUROC decreasing in eps in {monotone}/3 seeds (need 3)"
        ),
        attack_time,
    );
}

fn determinism(out: &mut Outcome) {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    common::write_toy_idx(&data, 200);
    let bin = env!("CARGO_BIN_EXE_rlnd");
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let out_dir = dir.path().join("out");
        let _ = fs::remove_dir_all(&out_dir);
        let cfg = dir.path().join("cfg.toml");
        fs::write(&cfg, common::toy_config(&data, &out_dir, 2)).unwrap();
        let cfg = cfg.to_str().unwrap();
        let run = |args: &[&str]| {
            let o = Command::new(bin).args(args).env("RUST_LOG", "warn").output().unwrap();
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            String::from_utf8(o.stdout).unwrap().trim().to_string()
        };
        run(&["run", "--config", cfg]);
        let aae = run(&["train", "--config", cfg]);
        let cal = run(&["calibrate", "--config", cfg, "--model", &aae]);
        let tuned = run(&["finetune", "--config", cfg, "--model", &cal]);
        run(&["attack-sweep", "--config", cfg, "--model", &tuned]);
        let mut files: Vec<(String, Vec<u8>)> = walk(&out_dir)
            .into_iter()
            .map(|p| (p.strip_prefix(&out_dir).unwrap().display().to_string(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        snapshots.push(files);
    }
    let names: Vec<&str> = snapshots[0].iter().map(|f| f.0.as_str()).collect();
    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    let pass = snapshots[0] == snapshots[1] && csvs >= 3;
    out.record(
        "6 determinism",
        pass,
        &format!("{} output files ({csvs} CSV) byte-identical across two runs: {}", names.len(), names.join(", ")),
        t.elapsed(),
    );
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let mut out = Outcome { passed: Vec::new() };
    gradients(&mut out);
    oracles(&mut out);
    manifold(&mut out);
    mnist(&mut out);
    determinism(&mut out);
    let n = out.passed.iter().filter(|p| **p).count();
    println!("acceptance: {n}/{} criteria passed", out.passed.len());
    if n != out.passed.len() {
        std::process::exit(1);
    }
}
