//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs sequentially because later checks reuse earlier training runs.
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 1 2 3`. Runs are written to a
//! temporary directory unless `OPCURL_ACCEPTANCE_DIR` is set. A FAIL line
//! does not fail the test target unless `OPCURL_ACCEPTANCE_STRICT` is set.

use opcurl::autodiff::Tape;
use opcurl::curriculum::Mode;
use opcurl::datagen::{
    build_dataset, burgers_etdrk4, ns_crank_nicolson, BurgersData, BurgersParams, DataConfig, Dataset, NsData, NsParams, Pde,
    PoissonData,
};
use opcurl::experiment::{self, DiagnosticsFile, EtaFile, ExperimentConfig, RunSummary};
use opcurl::files;
use opcurl::operator::{Head, OperatorConfig, OperatorModel, Param};
use opcurl::optim::{AdamConfig, AdamState};
use opcurl::problems::{build_problem, ProblemSettings};
use opcurl::spectral::{stream_rng, Grf1d};
use opcurl::spline::{Boundary, CoeffUnits, HermiteBasis, SplineGrid};
use opcurl::tensor::Tensor;
use rand::Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn sci(xs: &[f64]) -> String {
    format!("[{}]", xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "))
}

fn within(start: Instant, budget_s: f64) -> (bool, String) {
    let t = start.elapsed().as_secs_f64();
    (t <= budget_s, format!("{t:.0} s of {budget_s:.0} s"))
}

struct Ctx {
    root: PathBuf,
    burgers_data: Option<Dataset>,
    burgers_runs: BTreeMap<&'static str, RunSummary>,
}

impl Ctx {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

// ---- 1 ----

fn c1_adam_closed_form(_: &mut Ctx) -> Check {
    let cfg = AdamConfig {
        lr: 1e-2,
        bias_correction: false,
        eps: 1e-12,
        ..AdamConfig::default()
    };
    let want = cfg.lr * (1.0 - cfg.beta1) / (1.0 - cfg.beta2).sqrt();
    let mut r = stream_rng(1, 1);
    let n = 64;
    let start: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let grads: Vec<f64> = (0..n)
        .map(|_| r.gen_range(5.0..20.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    let mut params = vec![Param {
        name: "w".into(),
        value: Tensor::new_real(&[n], start.clone()).unwrap(),
    }];
    let mut state = AdamState::new(&params, cfg).unwrap();
    // settle the moments, then reset and take the first step
    for _ in 0..10 {
        state.step(&mut params, &[Tensor::new_real(&[n], vec![0.3; n]).unwrap()]).unwrap();
    }
    state.reset();
    let before = params[0].value.real().unwrap().to_vec();
    state.step(&mut params, &[Tensor::new_real(&[n], grads.clone()).unwrap()]).unwrap();
    let after = params[0].value.real().unwrap();
    let worst = before
        .iter()
        .zip(after)
        .zip(&grads)
        .map(|((b, a), g)| {
            let step = a - b;
            if step.signum() == -g.signum() {
                (step.abs() - want).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    ensure(worst < 1e-12, format!("max | |Δθ| − η(1−β1)/√(1−β2) | = {worst:.2e} over {n} entries, closed form {want:.6e}"))
}

// ---- 2 ----

fn tiny_model(dim: usize, seed: u64) -> OperatorModel {
    OperatorModel::init(
        OperatorConfig {
            n_blocks: 2,
            modes: vec![4; dim],
            width: 4,
            in_channels: 1 + dim,
            out_channels: 3usize.pow(dim as u32),
            head: Head::Spline,
            spline_order: 2,
            proj_hidden: 8,
        },
        seed,
    )
    .unwrap()
}

struct GradReport {
    /// max |a − n| / ‖a‖∞ over the checked scalars
    normwise: f64,
    /// max |a − n| / max(|a|, |n|) over the checked scalars
    entrywise: f64,
    checked: usize,
}

/// Tape derivatives of `λ_bd 𝓛_bd + λ_res 𝓛_res` against a fourth-order
/// central difference at `count` random parameter scalars.
fn model_gradcheck(ds: &Dataset, dim: usize, count: usize, seed: u64) -> GradReport {
    let mut model = tiny_model(dim, seed);
    let problem = build_problem(ds, &model, &ProblemSettings::default()).unwrap();
    let batch = [0usize];
    let loss = |m: &OperatorModel, tape: &mut Tape| {
        let params = m.bind(tape).unwrap();
        let (b, r) = problem.losses(m, tape, &params, &batch).unwrap();
        let l = opcurl::losses::combine_var(tape, b, r, 0.7, 1.3).unwrap();
        (params, l)
    };
    let mut tape = Tape::new();
    let (params, l) = loss(&model, &mut tape);
    let mut grads = tape.backward(l).unwrap();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .zip(model.params())
        .map(|(&p, m)| {
            grads
                .take(p)
                .map(|g| g.to_flat_reals())
                .unwrap_or_else(|| vec![0.0; m.value.real_scalar_count()])
        })
        .collect();
    let gmax = analytic.iter().flatten().fold(0.0f64, |m, g| m.max(g.abs()));
    let value = |m: &OperatorModel| {
        let mut tape = Tape::new();
        let (_, l) = loss(m, &mut tape);
        tape.value(l).item().unwrap()
    };
    let sizes: Vec<usize> = model.params().iter().map(|p| p.value.real_scalar_count()).collect();
    let total: usize = sizes.iter().sum();
    let mut r = stream_rng(seed, 99);
    let h = 1e-3;
    let mut report = GradReport { normwise: 0.0, entrywise: 0.0, checked: 0 };
    while report.checked < count {
        let mut j = r.gen_range(0..total);
        let mut gi = 0;
        while j >= sizes[gi] {
            j -= sizes[gi];
            gi += 1;
        }
        let a = analytic[gi][j];
        let base = model.params()[gi].value.to_flat_reals();
        let mut eval_at = |delta: f64| {
            let mut p = base.clone();
            p[j] += delta;
            model.params_mut()[gi].value.set_from_flat_reals(&p).unwrap();
            value(&model)
        };
        let numeric = (8.0 * (eval_at(h) - eval_at(-h)) - (eval_at(2.0 * h) - eval_at(-2.0 * h))) / (12.0 * h);
        model.params_mut()[gi].value.set_from_flat_reals(&base).unwrap();
        // scalars with no influence only give difference noise
        let scale = a.abs().max(numeric.abs());
        if scale <= 1e-12 * gmax {
            continue;
        }
        report.normwise = report.normwise.max((a - numeric).abs() / gmax);
        report.entrywise = report.entrywise.max((a - numeric).abs() / scale);
        report.checked += 1;
    }
    report
}

fn c2_gradients(_: &mut Ctx) -> Check {
    let start = Instant::now();
    let poisson = build_dataset(&DataConfig::Poisson(PoissonData { resolution: 16 })).unwrap();
    let burgers = build_dataset(&DataConfig::Burgers(BurgersData {
        resolution: 16,
        n_samples: 2,
        ..BurgersData::default()
    }))
    .unwrap();
    let ns = build_dataset(&DataConfig::NavierStokes(NsData {
        resolution: 16,
        n_samples: 2,
        dt: 1e-2,
        t_final: 1.0,
        t_start: 0.0,
        ..NsData::default()
    }))
    .unwrap();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, ds, dim) in [("Poisson", &poisson, 2), ("Burgers", &burgers, 1), ("NS", &ns, 2)] {
        let g = model_gradcheck(ds, dim, 60, 5);
        ok &= g.normwise < 1e-6 && g.checked >= 50;
        parts.push(format!("{name} {:.1e} (entrywise {:.1e}, {} params)", g.normwise, g.entrywise, g.checked));
    }
    let (t_ok, t) = within(start, 60.0);
    ensure(ok && t_ok, format!("worst error relative to max |gradient|: {}; {t}", parts.join(", ")))
}

// ---- 3 ----

fn c3_spline(_: &mut Ctx) -> Check {
    let basis = HermiteBasis::new(2).unwrap();
    let mut worst: f64 = 0.0;
    for l in 0..3 {
        for d in 0..3 {
            let delta = if l == d { 1.0 } else { 0.0 };
            worst = worst.max((basis.eval(l, d, 0.0) - delta).abs());
            worst = worst.max(basis.eval(l, d, 1.0).abs()).max(basis.eval(l, d, -1.0).abs());
        }
    }
    let basis = Arc::new(basis);
    let mut errs = Vec::new();
    for n in [64usize, 128, 256] {
        let h = 2.0 * PI / n as f64;
        let g = SplineGrid::new(Arc::clone(&basis), &[n], &[h], Boundary::Periodic, 4, CoeffUnits::Physical).unwrap();
        let c = g
            .coeffs_from_fn(|x, d| [x[0].sin(), x[0].cos(), -x[0].sin(), -x[0].cos()][d[0] % 4])
            .unwrap();
        let du = g.reconstruct(&c, &[1]).unwrap();
        let err = du
            .real()
            .unwrap()
            .iter()
            .enumerate()
            .map(|(p, v)| (v - (p as f64 * h / 4.0).cos()).abs())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure(
        worst < 1e-10 && orders.iter().all(|&o| o >= 2.0),
        format!("interpolation defect {worst:.1e}; sin' errors {}, observed orders {orders:.2?}", sci(&errs)),
    )
}

// ---- 4 ----

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / b.iter().map(|y| y * y).sum::<f64>()).sqrt()
}

fn taylor_green(n: usize, amp: f64) -> Vec<f64> {
    let c = |i: usize| (2.0 * PI * i as f64 / n as f64).cos();
    (0..n * n).map(|p| amp * (c(p / n) + c(p % n))).collect()
}

fn tg_error(dt: f64) -> f64 {
    let n = 64;
    let nu = 1e-2;
    let steps = (1.0 / dt).round() as usize;
    let t = ns_crank_nicolson(&taylor_green(n, 1.0), &vec![0.0; n * n], &NsParams { nu, dt, t_final: 1.0, save_every: steps }).unwrap();
    rel_l2(t.omega.last().unwrap(), &taylor_green(n, (-4.0 * PI * PI * nu).exp()))
}

fn c4_solvers(_: &mut Ctx) -> Check {
    let start = Instant::now();
    let n = 1024;
    let u0 = Grf1d::default().sample(n, &mut stream_rng(4, 0)).unwrap();
    let p = BurgersParams {
        t_final: 1.0,
        save_every: 100,
        ..BurgersParams::default()
    };
    let traj = burgers_etdrk4(&u0, &p).unwrap();
    let dx = p.length / n as f64;
    let m0: f64 = u0.iter().sum::<f64>() * dx;
    let drift = traj
        .states
        .iter()
        .map(|u| (u.iter().sum::<f64>() * dx - m0).abs())
        .fold(0.0, f64::max);

    // small amplitude: the sin(x) mode decays as e^{−νt}
    let eps = 1e-6;
    let x = |i: usize| i as f64 * dx;
    let lin0: Vec<f64> = (0..n).map(|i| eps * x(i).sin()).collect();
    let lin = burgers_etdrk4(&lin0, &BurgersParams { save_every: 10000, ..p.clone() }).unwrap();
    let want: Vec<f64> = (0..n).map(|i| eps * (-p.nu).exp() * x(i).sin()).collect();
    let lin_err = rel_l2(lin.states.last().unwrap(), &want);

    let tg = tg_error(1e-3);
    let errs: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|&dt| tg_error(dt)).collect();
    let slopes: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let (t_ok, t) = within(start, 120.0);
    ensure(
        drift < 1e-10 && lin_err < 1e-4 && tg < 1e-3 && slopes.iter().all(|s| (1.8..=2.2).contains(s)) && t_ok,
        format!(
            "momentum drift {drift:.1e}, linear decay error {lin_err:.1e}, Taylor–Green error {tg:.1e}, CN slopes {slopes:.2?}; {t}"
        ),
    )
}

// ---- shared training helpers ----

fn seed_outcome(dir: &Path) -> (Vec<opcurl::curriculum::EpochLog>, DiagnosticsFile, EtaFile) {
    let s = dir.join("seed_0");
    (
        experiment::read_log(&s.join("log.csv")).unwrap(),
        files::read_json(&s.join("diagnostics.json")).unwrap(),
        files::read_json(&s.join("eta_eff.json")).unwrap(),
    )
}

fn poisson_config(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(Pde::Poisson);
    c.mode = mode;
    c
}

// ---- 5 ----

fn c5_poisson(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let ds = build_dataset(&DataConfig::Poisson(PoissonData { resolution: 64 })).unwrap();
    let mut res = BTreeMap::new();
    for mode in [Mode::Ms, Mode::Ss, Mode::MsNoReset] {
        let s = experiment::train_on(&poisson_config(mode), &ds, &ctx.dir(&format!("poisson/{}", mode.as_str()))).unwrap();
        let r = s.metrics.get("interior_residual").copied().unwrap_or(f64::INFINITY);
        res.insert(mode.as_str(), r);
    }
    let (ms, ss, nr) = (res["MS"], res["SS"], res["MS_no_reset"]);
    let (t_ok, t) = within(start, 900.0);
    ensure(
        ms <= 1e-3 && ms < ss && ms < nr && t_ok,
        format!("interior residual MS {ms:.3e}, SS {ss:.3e}, MS_no_reset {nr:.3e}; {t}"),
    )
}

// ---- 6 ----

fn burgers_config(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(Pde::Burgers);
    c.mode = mode;
    c
}

fn burgers_dataset(ctx: &mut Ctx) -> &Dataset {
    if ctx.burgers_data.is_none() {
        ctx.burgers_data = Some(
            build_dataset(&DataConfig::Burgers(BurgersData {
                resolution: 1024,
                n_samples: 20,
                ..BurgersData::default()
            }))
            .unwrap(),
        );
    }
    ctx.burgers_data.as_ref().unwrap()
}

fn burgers_run(ctx: &mut Ctx, mode: Mode) -> RunSummary {
    let key = mode.as_str();
    if let Some(s) = ctx.burgers_runs.get(key) {
        return s.clone();
    }
    let dir = ctx.dir(&format!("burgers/{key}"));
    let ds = burgers_dataset(ctx).clone();
    let s = experiment::train_on(&burgers_config(mode), &ds, &dir).unwrap();
    ctx.burgers_runs.insert(key, s.clone());
    s
}

fn c6_burgers(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let mut p = BTreeMap::new();
    for mode in Mode::ALL {
        let s = burgers_run(ctx, mode);
        p.insert(mode.as_str(), s.plateau_mean.unwrap_or(f64::INFINITY));
    }
    let (ms, sup, ss, nr) = (p["MS"], p["supervised"], p["SS"], p["MS_no_reset"]);
    let (t_ok, t) = within(start, 1800.0);
    ensure(
        ms <= 2.0 * sup && ms <= ss / 3.0 && ms <= nr / 3.0 && t_ok,
        format!(
            "final-plateau test L2 MS {ms:.3e}, supervised {sup:.3e} (MS/sup {:.2}), SS {ss:.3e} (SS/MS {:.2}), MS_no_reset {nr:.3e} (nr/MS {:.2}); {t}",
            ms / sup,
            ss / ms,
            nr / ms
        ),
    )
}

// ---- 7 ----

fn c7_diagnostics(ctx: &mut Ctx) -> Check {
    burgers_run(ctx, Mode::Ms);
    burgers_run(ctx, Mode::MsNoReset);
    let (log, diag, eta) = seed_outcome(&ctx.dir("burgers/MS"));
    let mut max_dom: f64 = 0.0;
    let mut min_r = f64::INFINITY;
    for t in &diag.transitions {
        for l in &t.layers {
            max_dom = max_dom.max(l.dominance);
            min_r = min_r.min(l.ratio);
        }
    }
    let points = diag.transitions.iter().map(|t| t.layers.len()).sum::<usize>();
    // η_eff just after each reset against the last epoch before it
    let by_epoch = |e: usize| eta.records.iter().find(|r| r.epoch == e).map(|r| r.mean);
    let mut jumps = Vec::new();
    for t in diag.transitions.iter().filter(|t| t.reset) {
        if let (Some(before), Some(after)) = (by_epoch(t.epoch - 1), by_epoch(t.epoch)) {
            jumps.push(after / before);
        }
    }
    let (_, _, eta_nr) = seed_outcome(&ctx.dir("burgers/MS_no_reset"));
    let stages = log.iter().map(|r| r.stage).max().unwrap_or(0) + 1;
    let stage_means: Vec<f64> = (0..stages)
        .map(|s| {
            let xs: Vec<f64> = eta_nr.records.iter().filter(|r| r.stage == s).map(|r| r.mean).collect();
            xs.iter().sum::<f64>() / xs.len().max(1) as f64
        })
        .collect();
    let falling = stage_means.windows(2).all(|w| w[1] < w[0]);
    ensure(
        diag.transitions.len() == 2
            && max_dom < 0.1
            && min_r > 1.0
            && jumps.len() == 2
            && jumps.iter().all(|&j| j > 1.0)
            && falling,
        format!(
            "{} transitions, {points} layer points: max dominance {max_dom:.2e}, min R {min_r:.2}; η_eff jump at resets ×{jumps:.1?}; MS_no_reset stage-mean η_eff {}",
            diag.transitions.len(),
            sci(&stage_means)
        ),
    )
}

// ---- 8 ----

fn c8_resolution(ctx: &mut Ctx) -> Check {
    burgers_run(ctx, Mode::Ms);
    let start = Instant::now();
    let (model, _, context) = experiment::load_checkpoint(&ctx.dir("burgers/MS/seed_0/checkpoint")).unwrap();
    let rows = experiment::resolution_sweep(&model, &context.data, &context.problem, &[1024, 2048, 4096]).unwrap();
    let base = rows[0].relative_l2;
    let growth: Vec<f64> = rows[1..].iter().map(|r| r.relative_l2 / base - 1.0).collect();
    let trained = ctx.burgers_runs["MS"].seeds[0].metrics["relative_l2"];
    let (t_ok, t) = within(start, 300.0);
    ensure(
        growth.iter().all(|&g| g < 0.2) && base == trained && t_ok,
        format!(
            "relative L2 {}; growth {}; training-resolution value reproduces the training metric: {}; {t}",
            rows.iter().map(|r| format!("{}: {:.4e}", r.resolution, r.relative_l2)).collect::<Vec<_>>().join(", "),
            growth.iter().map(|g| format!("{:+.3}%", 100.0 * g)).collect::<Vec<_>>().join(", "),
            base == trained
        ),
    )
}

// ---- 9 ----

fn ns_config(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(Pde::NavierStokes);
    c.mode = mode;
    c
}

fn ns_data() -> DataConfig {
    DataConfig::NavierStokes(NsData {
        resolution: 32,
        n_samples: 5,
        nu: 1e-3,
        t_start: 45.0,
        ..NsData::default()
    })
}

fn c9_navier_stokes(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let ds = build_dataset(&ns_data()).unwrap();
    let mut fin = BTreeMap::new();
    let mut diverged = None;
    for mode in [Mode::Ms, Mode::MsNoReset, Mode::Ss] {
        let s = experiment::train_on(&ns_config(mode), &ds, &ctx.dir(&format!("ns/{}", mode.as_str()))).unwrap();
        if mode == Mode::Ms {
            diverged = s.seeds[0].diverged.clone();
        }
        fin.insert(mode.as_str(), s.seeds[0].final_test.unwrap_or(f64::INFINITY));
    }
    let stages = ns_config(Mode::Ms).schedule.resolve().unwrap().stages.len();
    let (ms, nr, ss) = (fin["MS"], fin["MS_no_reset"], fin["SS"]);
    let (t_ok, t) = within(start, 2700.0);
    ensure(
        diverged.is_none() && stages == 5 && ms < nr && ms < ss && t_ok,
        format!(
            "{stages} stages; MS diverged: {}; final test L2 MS {ms:.3e}, MS_no_reset {nr:.3e}, SS {ss:.3e}; {t}",
            diverged.as_deref().unwrap_or("no")
        ),
    )
}

// ---- 10 ----

fn c10_ablation(ctx: &mut Ctx) -> Check {
    let start = Instant::now();
    let ds = burgers_dataset(ctx).clone();
    let presets = ["burgers_l2", "burgers_l3", "burgers_l4"];
    let summary =
        experiment::ablate_on(&burgers_config(Mode::Ms), &ds, &experiment::preset_variants(&presets), &ctx.dir("ablation")).unwrap();
    // the baseline schedule is the criterion 6 pair
    let mut rows = vec![(
        "burgers_l1".to_string(),
        burgers_run(ctx, Mode::Ms).final_test,
        burgers_run(ctx, Mode::MsNoReset).final_test,
    )];
    for p in presets {
        rows.push((p.to_string(), summary.final_test(p, Mode::Ms), summary.final_test(p, Mode::MsNoReset)));
    }
    let ok = rows.iter().all(|(_, ms, nr)| matches!((ms, nr), (Some(a), Some(b)) if a <= b));
    let (t_ok, t) = within(start, 7200.0);
    ensure(
        ok && t_ok,
        format!(
            "final test MS vs MS_no_reset: {}; {t}",
            rows.iter()
                .map(|(n, a, b)| format!("{n} {:.3e} vs {:.3e}", a.unwrap_or(f64::NAN), b.unwrap_or(f64::NAN)))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

// ---- 11 ----

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn c11_reproducibility(ctx: &mut Ctx) -> Check {
    let bin = env!("CARGO_BIN_EXE_opcurl");
    let root = ctx.dir("repro");
    std::fs::create_dir_all(&root).unwrap();
    let cfg = root.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"pde": "burgers", "model": {"n_blocks": 2, "modes": [8], "width": 8, "proj_hidden": 16},
            "schedule": {"epochs_per_stage": 3, "decay_every": 2}, "seeds": [0, 1], "batch_size": 2}"#,
    )
    .unwrap();
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let data = p(&root.join("data"));
    let out = p(&root.join("run"));
    let ckpt = p(&root.join("run/seed_0/checkpoint"));
    let commands: Vec<(&str, Vec<String>, PathBuf)> = vec![
        ("gen-data burgers", vec!["gen-data", "--pde", "burgers", "--n", "6", "--resolution", "128", "--seed", "7", "--out", &data].into_iter().map(String::from).collect(), root.join("data")),
        ("gen-data navier_stokes", vec!["gen-data".into(), "--pde".into(), "navier_stokes".into(), "--n".into(), "2".into(), "--resolution".into(), "16".into(), "--set".into(), "t_final=1.0".into(), "--set".into(), "t_start=0.5".into(), "--out".into(), p(&root.join("ns"))], root.join("ns")),
        ("train", vec!["train".into(), "--config".into(), p(&cfg), "--data".into(), data.clone(), "--out".into(), out.clone()], root.join("run")),
        ("eval", vec!["eval".into(), "--checkpoint".into(), ckpt.clone(), "--data".into(), data.clone(), "--out".into(), p(&root.join("eval/report.json"))], root.join("eval")),
        ("resolution-sweep", vec!["resolution-sweep".into(), "--checkpoint".into(), ckpt.clone(), "--resolutions".into(), "128,256".into(), "--out".into(), p(&root.join("sweep/sweep.csv"))], root.join("sweep")),
        ("ablate", vec!["ablate".into(), "--config".into(), p(&cfg), "--data".into(), data.clone(), "--out".into(), p(&root.join("abl")), "--presets".into(), "burgers_l1,burgers_l2".into(), "--seeds".into(), "0".into()], root.join("abl")),
        ("plot", vec!["plot".into(), out.clone()], root.join("run")),
    ];
    std::fs::create_dir_all(root.join("eval")).unwrap();
    std::fs::create_dir_all(root.join("sweep")).unwrap();
    let mut differing = Vec::new();
    for (name, args, check_dir) in &commands {
        let mut snaps = Vec::new();
        for _ in 0..2 {
            let status = Command::new(bin).args(args).output().unwrap().status;
            if !status.success() {
                return Err(format!("{name} exited with {status}"));
            }
            snaps.push(tree(check_dir));
        }
        if snaps[0] != snaps[1] || snaps[0].is_empty() {
            differing.push(*name);
        }
    }
    ensure(
        differing.is_empty(),
        format!(
            "reran {} commands: {}",
            commands.len(),
            if differing.is_empty() { "all outputs byte-identical".to_string() } else { format!("differing: {differing:?}") }
        ),
    )
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let keep;
    let root = match std::env::var_os("OPCURL_ACCEPTANCE_DIR") {
        Some(d) => PathBuf::from(d),
        None => {
            keep = tempfile::tempdir().unwrap();
            keep.path().to_path_buf()
        }
    };
    let mut ctx = Ctx {
        root,
        burgers_data: None,
        burgers_runs: BTreeMap::new(),
    };
    let checks: [(&str, fn(&mut Ctx) -> Check); 11] = [
        ("optimizer closed forms", c1_adam_closed_form),
        ("gradient correctness", c2_gradients),
        ("spline basis", c3_spline),
        ("solvers", c4_solvers),
        ("Poisson training", c5_poisson),
        ("Burgers training", c6_burgers),
        ("optimizer diagnostics", c7_diagnostics),
        ("resolution invariance", c8_resolution),
        ("Navier–Stokes smoke test", c9_navier_stokes),
        ("λ-schedule ablation", c10_ablation),
        ("reproducibility", c11_reproducibility),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, f)) in checks.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        ran += 1;
        let (tag, msg) = match f(&mut ctx) {
            Ok(m) => ("PASS", m),
            Err(m) => {
                failed.push(n);
                ("FAIL", m)
            }
        };
        println!("{tag} {n:2} {name}: {msg}");
    }
    println!("{} of {ran} criteria passed; failed: {failed:?}", ran - failed.len());
    if !failed.is_empty() && std::env::var_os("OPCURL_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
