use opcurl::cli::main_with;
use opcurl::curriculum::Mode;
use opcurl::datagen::{DataConfig, Dataset, Pde};
use opcurl::experiment::{self, ExperimentConfig, RunSummary, SUMMARY_VERSION};
use opcurl::files;
use serde_json::json;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn run(args: &[&str]) -> i32 {
    main_with(std::iter::once("opcurl").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tiny_model() -> serde_json::Value {
    json!({
        "model": {"n_blocks": 2, "modes": [4], "width": 4, "proj_hidden": 8},
        "schedule": {"epochs_per_stage": 2, "decay_every": 1},
        "batch_size": 2,
        "passes": 1,
    })
}

/// Small Burgers dataset and config file under `dir`.
fn burgers_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let data = dir.join("data");
    assert_eq!(
        run(&["gen-data", "--pde", "burgers", "--n", "5", "--resolution", "64", "--seed", "3", "--out", s(&data)]),
        0
    );
    let cfg = dir.join("cfg.json");
    let mut v = tiny_model();
    v["pde"] = json!("burgers");
    v["data"] = json!(data);
    fs::write(&cfg, serde_json::to_string(&v).unwrap()).unwrap();
    (data, cfg)
}

fn read_tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn flags_override_file_override_defaults() {
    let file = json!({"pde": "burgers", "batch_size": 7, "passes": 3, "adam": {"lr": 0.5}});
    let cfg = ExperimentConfig::resolve(Some(file.clone()), json!({"batch_size": 9})).unwrap();
    assert_eq!(cfg.batch_size, 9);
    assert_eq!(cfg.passes, 3);
    assert_eq!(cfg.adam.lr, 0.5);
    // untouched nested fields keep their defaults
    let d = ExperimentConfig::defaults(Pde::Burgers);
    assert_eq!(cfg.adam.beta2, d.adam.beta2);
    assert_eq!(cfg.model, d.model);

    let bad = ExperimentConfig::resolve(Some(json!({"pde": "burgers", "bach_size": 2})), json!({}));
    assert!(matches!(bad, Err(opcurl::Error::Config(_))));
    assert!(ExperimentConfig::resolve(None, json!({})).is_err());
}

#[test]
fn assignments_parse_as_json_or_string() {
    let mut v = json!({});
    for a in ["adam.lr=0.01", "schedule.preset=burgers_l3", "seeds=[1,2]"] {
        let (k, val) = experiment::parse_assignment(a).unwrap();
        experiment::set_path(&mut v, &k, val).unwrap();
    }
    assert_eq!(v, json!({"adam": {"lr": 0.01}, "schedule": {"preset": "burgers_l3"}, "seeds": [1, 2]}));
    assert!(experiment::parse_assignment("novalue").is_err());
}

#[test]
fn single_stage_defaults_to_unit_weights() {
    let cfg = ExperimentConfig::resolve(None, json!({"pde": "burgers", "mode": "SS"})).unwrap();
    assert_eq!(cfg.ss_weights, (1.0, 1.0));
    let stages = opcurl::curriculum::effective_stages(&cfg.schedule.resolve().unwrap(), cfg.mode, cfg.ss_weights);
    assert_eq!(stages.len(), 1);
    assert_eq!((stages[0].lambda_bd, stages[0].lambda_res), (1.0, 1.0));
    assert_eq!(stages[0].epochs, 300);
}

#[test]
fn schedule_presets_match_the_table() {
    let ns = ExperimentConfig::defaults(Pde::NavierStokes).schedule.resolve().unwrap();
    assert_eq!(ns.stages.len(), 5);
    let last = ns.stages.last().unwrap();
    assert_eq!((last.lambda_bd, last.lambda_res), (0.2, 1.5));

    let w = |name: &str| {
        let s = experiment::ScheduleSpec::preset(name, 100).resolve().unwrap();
        s.stages.iter().map(|s| (s.lambda_bd, s.lambda_res)).collect::<Vec<_>>()
    };
    assert_eq!(w("burgers_l2"), vec![(1.0, 0.0), (0.5, 0.5), (0.25, 0.75)]);
    assert_eq!(*w("burgers_l3").last().unwrap(), (1.0, 1.0));
}

#[test]
fn gen_data_contract() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["gen-data", "--pde", "burgers", "--n", "2"]), 2);
    assert_eq!(run(&["gen-data", "--pde", "heat", "--out", s(&dir.path().join("x"))]), 2);
    assert_eq!(run(&["gen-data", "--pde", "burgers", "--resolution", "100", "--out", s(&dir.path().join("y"))]), 2);

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&["gen-data", "--pde", "burgers", "--n", "3", "--resolution", "64", "--seed", "7", "--out", s(out)]), 0);
    }
    let ds = Dataset::read(&a).unwrap();
    assert_eq!(ds.samples.len(), 3);
    assert_eq!(read_tree(&a), read_tree(&b));
}

#[test]
fn data_recipe_merging() {
    let c = experiment::data_config(Some(Pde::Burgers), Some(json!({"solver": {"nu": 0.05}})), json!({"n_samples": 4})).unwrap();
    let DataConfig::Burgers(b) = c else { panic!("wrong recipe") };
    assert_eq!((b.solver.nu, b.n_samples, b.resolution), (0.05, 4, 1024));
    assert!(experiment::data_config(None, None, json!({})).is_err());
}

#[test]
fn train_writes_run_directory_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = burgers_setup(dir.path());
    let outs: Vec<PathBuf> = ["r1", "r2"].iter().map(|n| dir.path().join(n)).collect();
    let mut snapshots = Vec::new();
    for out in [&outs[0], &outs[0], &outs[1]] {
        assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(out), "--seeds", "0,1"]), 0);
        snapshots.push(read_tree(out));
    }
    // rerunning in place overwrites identically
    assert_eq!(snapshots[0], snapshots[1]);
    // a second directory differs only in the recorded output path
    let strip = |t: &[(PathBuf, Vec<u8>)]| t.iter().filter(|(p, _)| p != Path::new("config.json")).cloned().collect::<Vec<_>>();
    assert_eq!(strip(&snapshots[0]), strip(&snapshots[2]));

    let seed = outs[0].join("seed_1");
    for f in ["log.csv", "diagnostics.json", "eta_eff.json", "summary.json", "checkpoint/meta.json"] {
        assert!(seed.join(f).is_file(), "missing {f}");
    }
    let log = experiment::read_log(&seed.join("log.csv")).unwrap();
    assert_eq!(log.len(), 6);
    let diag: experiment::DiagnosticsFile = files::read_json(&seed.join("diagnostics.json")).unwrap();
    assert_eq!(diag.transitions.len(), 2);
    assert!(diag.transitions.iter().all(|t| t.reset && t.layers.len() == diag.layer_names.len()));

    let summary: RunSummary = files::read_json(&outs[0].join("summary.json")).unwrap();
    assert_eq!(summary.version, SUMMARY_VERSION);
    assert_eq!(summary.mode, Mode::Ms);
    assert_eq!(summary.seeds.len(), 2);
    let s0 = &summary.seeds[0];
    assert_eq!(s0.plateau_epochs, 2);
    let tail: Vec<f64> = experiment::read_log(&outs[0].join("seed_0/log.csv")).unwrap()[4..]
        .iter()
        .map(|r| r.loss_test)
        .collect();
    assert!((s0.plateau_mean.unwrap() - (tail[0] + tail[1]) / 2.0).abs() < 1e-15);
    assert!(s0.metrics.contains_key("relative_l2"));
    let text = fs::read_to_string(outs[0].join("summary.json")).unwrap();
    assert!(!text.contains("time") && !text.contains("elapsed"));
}

#[test]
fn supervised_ignores_the_residual() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = burgers_setup(dir.path());
    let out = dir.path().join("sup");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out), "--mode", "supervised"]), 0);
    let log = experiment::read_log(&out.join("seed_0/log.csv")).unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().all(|r| r.stage == 0 && r.loss_res == 0.0 && r.loss_train == r.loss_bd));
}

#[test]
fn eval_and_sweep_reproduce_training_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = burgers_setup(dir.path());
    let out = dir.path().join("run");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&out)]), 0);
    let summary: RunSummary = files::read_json(&out.join("summary.json")).unwrap();
    let trained = summary.seeds[0].metrics["relative_l2"];
    let ckpt = out.join("seed_0/checkpoint");

    let report = dir.path().join("eval.json");
    assert_eq!(run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&report)]), 0);
    let r: experiment::EvalReport = files::read_json(&report).unwrap();
    assert_eq!(r.metrics["relative_l2"], trained);
    assert_eq!(r.test_loss, summary.seeds[0].final_test.unwrap());

    let csv = dir.path().join("sweep.csv");
    assert_eq!(run(&["resolution-sweep", "--checkpoint", s(&ckpt), "--resolutions", "64,128", "--out", s(&csv)]), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "resolution,relative_l2,test_loss");
    let base: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    assert_eq!(base, trained);
    assert_eq!(rows.len(), 3);

    // four modes need at least eight points
    assert_eq!(run(&["resolution-sweep", "--checkpoint", s(&ckpt), "--resolutions", "64,4"]), 2);
}

#[test]
fn ablation_runs_both_modes_per_variant() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = burgers_setup(dir.path());
    let out = dir.path().join("abl");
    assert_eq!(run(&["ablate", "--config", s(&cfg), "--out", s(&out), "--presets", "burgers_l1,burgers_l3"]), 0);
    let summary: experiment::AblationSummary = files::read_json(&out.join("ablation.json")).unwrap();
    assert_eq!(summary.rows.len(), 4);
    for v in ["burgers_l1", "burgers_l3"] {
        for m in [Mode::Ms, Mode::MsNoReset] {
            assert!(summary.final_test(v, m).is_some());
            assert!(out.join(v).join(m.as_str()).join("seed_0/log.csv").is_file());
        }
    }
    let variants = dir.path().join("variants.json");
    fs::write(&variants, r#"[{"name": "flat", "schedule": {"stages": [{"epochs": 1, "lambda_bd": 1.0, "lambda_res": 1.0}]}}]"#).unwrap();
    let out2 = dir.path().join("abl2");
    assert_eq!(run(&["ablate", "--config", s(&cfg), "--out", s(&out2), "--variants", s(&variants)]), 0);
    assert!(fs::read_to_string(out2.join("ablation.csv")).unwrap().starts_with("variant,mode"));
    assert_eq!(run(&["ablate", "--config", s(&cfg), "--out", s(&out2)]), 2);
}

#[test]
fn plots_mark_stages_and_tolerate_missing_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let (_, cfg) = burgers_setup(dir.path());
    let ms = dir.path().join("ms");
    let ss = dir.path().join("ss");
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&ms)]), 0);
    assert_eq!(run(&["train", "--config", s(&cfg), "--out", s(&ss), "--mode", "SS"]), 0);

    let r = opcurl::plot::plot_run(&ms.join("seed_0")).unwrap();
    let loss = fs::read_to_string(ms.join("seed_0/plots/loss.svg")).unwrap();
    assert_eq!(loss.matches("class=\"stage-marker\"").count(), 2);
    assert!(loss.contains("<!-- data\n"));
    let diag: experiment::DiagnosticsFile = files::read_json(&ms.join("seed_0/diagnostics.json")).unwrap();
    assert_eq!(r.ratio_points, 2 * diag.layer_names.len());
    let ratio = fs::read_to_string(ms.join("seed_0/plots/ratio.svg")).unwrap();
    assert_eq!(ratio.matches("class=\"point\"").count(), 2 * diag.layer_names.len());
    for f in ["components.svg", "dominance.svg", "eta_eff.svg"] {
        assert!(ms.join("seed_0/plots").join(f).is_file());
    }

    assert_eq!(run(&["plot", s(&ss)]), 0);
    let plots = ss.join("seed_0/plots");
    assert!(plots.join("loss.svg").is_file());
    assert!(!plots.join("ratio.svg").exists() && !plots.join("dominance.svg").exists());
    let ss_loss = fs::read_to_string(plots.join("loss.svg")).unwrap();
    assert_eq!(ss_loss.matches("class=\"stage-marker\"").count(), 0);
    for svg in [&loss, &ratio, &ss_loss] {
        let comment = &svg[svg.find("<!--").unwrap() + 4..svg.find("-->").unwrap()];
        assert!(!comment.contains("--"));
    }

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    assert_eq!(run(&["plot", s(&empty)]), 2);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_opcurl");
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(code(&["gen-data", "--pde", "burgers"]), Some(2));
    assert_eq!(code(&["frobnicate"]), Some(2));
    assert_eq!(code(&["train", "--pde", "burgers", "--data", s(&dir.path().join("none")), "--out", s(dir.path())]), Some(2));

    let (_, cfg) = burgers_setup(dir.path());
    let out = dir.path().join("blow");
    assert_eq!(code(&["train", "--config", s(&cfg), "--out", s(&out), "--lr", "1e9"]), Some(4));
    let summary: RunSummary = files::read_json(&out.join("summary.json")).unwrap();
    assert!(summary.all_diverged());
    assert!(summary.plateau_mean.is_none());
}

#[test]
fn config_must_match_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = burgers_setup(dir.path());
    let out = dir.path().join("x");
    let v = json!({"pde": "burgers", "data": data, "out": out, "model": {"modes": [40]}});
    let cfg = ExperimentConfig::resolve(None, v).unwrap();
    assert!(matches!(experiment::train(&cfg), Err(opcurl::Error::Config(_))));
    let v = json!({"pde": "poisson", "data": data, "out": out});
    let cfg = ExperimentConfig::resolve(None, v).unwrap();
    assert!(matches!(experiment::train(&cfg), Err(opcurl::Error::Config(_))));
}
