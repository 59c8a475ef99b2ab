use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TRAIN_CFG: &str = r#"
algorithm = "controller_mask"
optimizer = "adam"
eta = 0.01
epochs = 15
n_max = 4
seed = 2
trials = 3

[task]
kind = "bessel_composite"
n_data = 32
"#;

const DIVERGING_CFG: &str = r#"
algorithm = "static"
optimizer = "gd_batch"
eta = 1e6
epochs = 50
n_max = 4
seed = 2
trials = 2

[task]
kind = "bessel_simple"
n_data = 20
"#;

const SWEEP_CFG: &str = r#"
algorithm = "aux_weight"
optimizer = "gd_stochastic"
eta = 0.01
epochs = 10
n_max = 3
seed = 6
trials = 2

[task]
kind = "bessel_simple"
n_data = 20

[sweep]
epochs = [5, 10]
lambda = [0.1, 1.0]
"#;

fn gradgrow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradgrow"))
        .args(args)
        .output()
        .expect("spawn gradgrow")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn run(command: &str, cfg: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    gradgrow(&args)
}

#[test]
fn train_writes_all_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", TRAIN_CFG);
    let out = tmp.path().join("out");
    let o = run("train", &cfg, &out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    for f in [
        "runs.csv",
        "runs_static.csv",
        "final_model.ckpt",
        "summary.json",
        "manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    let mut lines = runs.lines();
    assert_eq!(
        lines.next(),
        Some("trial_id,epoch,train_loss,test_loss,size_metric,effective_size")
    );
    assert_eq!(lines.count(), 3 * 15);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_text"], TRAIN_CFG);
    assert_eq!(manifest["trial_seeds"].as_array().unwrap().len(), 3);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["R"].is_number());
    assert!(summary["c1_threshold"]["fraction"].is_number());
}

#[test]
fn overrides_change_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", TRAIN_CFG);
    let out = tmp.path().join("out");
    let o = run(
        "train",
        &cfg,
        &out,
        &["--epochs", "4", "--trials", "2", "--seed", "99"],
    );
    assert_eq!(o.status.code(), Some(0));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 4);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "t.cfg", TRAIN_CFG);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run("train", &cfg, &a, &[]).status.success());
    assert!(run("train", &cfg, &b, &["--jobs", "2"]).status.success());
    for f in [
        "runs.csv",
        "runs_static.csv",
        "final_model.ckpt",
        "summary.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let bad = write_cfg(
        tmp.path(),
        "bad.cfg",
        &TRAIN_CFG.replace("eta = 0.01", "eta = -1.0"),
    );
    assert_eq!(run("train", &bad, &out, &[]).status.code(), Some(2));
    let unknown = write_cfg(tmp.path(), "u.cfg", &format!("colour = 3\n{TRAIN_CFG}"));
    assert_eq!(run("train", &unknown, &out, &[]).status.code(), Some(2));
    let missing = tmp.path().join("nope.cfg");
    assert_ne!(
        run("train", missing.to_str().unwrap(), &out, &[])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(gradgrow(&["train"]).status.code(), Some(2));
    assert_eq!(gradgrow(&["bogus"]).status.code(), Some(2));
    let o = gradgrow(&[
        "gen-data",
        "--task",
        "spiral",
        "--n",
        "10",
        "--classes",
        "3",
        "--out",
        "x.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn all_trials_diverging_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "d.cfg", DIVERGING_CFG);
    let o = run("train", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn gen_data_spiral_is_balanced() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("spiral.csv");
    let o = gradgrow(&[
        "gen-data",
        "--task",
        "spiral",
        "--n",
        "3000",
        "--classes",
        "3",
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,class,split"));
    let mut counts = [0usize; 3];
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 4);
        counts[fields[2].parse::<usize>().unwrap()] += 1;
        assert!(fields[3] == "train" || fields[3] == "test");
        rows += 1;
    }
    assert_eq!(rows, 3000);
    assert_eq!(counts, [1000; 3]);
}

#[test]
fn gen_data_bessel_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("b.csv");
    let o = gradgrow(&[
        "gen-data",
        "--task",
        "bessel-simple",
        "--n",
        "40",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,split"));
    assert_eq!(text.lines().count(), 41);
    for line in text.lines().skip(1) {
        let x: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert!((-1.0..=1.0).contains(&x));
    }
}

#[test]
fn sweep_resume_reproduces_the_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.cfg", SWEEP_CFG);
    let full = tmp.path().join("full");
    let o = run("sweep", &cfg, &full, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(full.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(full.join("analysis.json").is_file());

    let partial = tmp.path().join("partial");
    fs::create_dir_all(&partial).unwrap();
    let prefix: String = table.split_inclusive('\n').take(3).collect();
    fs::write(partial.join("sweep.csv"), &prefix).unwrap();
    let o = run("sweep", &cfg, &partial, &["--resume"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read_to_string(partial.join("sweep.csv")).unwrap(),
        table
    );
}

#[test]
fn sweep_refuses_corrupt_table_on_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "s.cfg", SWEEP_CFG);
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("sweep.csv"), "epochs,lambda\n1,2\n").unwrap();
    let o = run("sweep", &cfg, &out, &["--resume"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(
        fs::read_to_string(out.join("sweep.csv")).unwrap(),
        "epochs,lambda\n1,2\n"
    );
}
