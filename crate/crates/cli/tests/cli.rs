use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modsel_core::{ModelClass, ModelEvaluations, PredictionRegion, Responses, Session, TieBreaker};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_modsel"))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn predict(dir: &TempDir, data: &Path, models: &Path, config: &Path) -> (Output, String) {
    let out = dir.path().join("pred.csv");
    let o = bin()
        .args(["predict", "--data"])
        .arg(data)
        .arg("--models")
        .arg(models)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    let text = std::fs::read_to_string(&out).unwrap_or_default();
    (o, text)
}

fn simulate(dir: &TempDir, config: &Path, out: &str, threads: Option<&str>) -> (Output, PathBuf) {
    let out = dir.path().join(out);
    let mut c = bin();
    c.arg("simulate").arg("--config").arg(config).arg("--out").arg(&out);
    match threads {
        Some(t) => c.env("MODSEL_THREADS", t),
        None => c.env_remove("MODSEL_THREADS"),
    };
    (c.output().unwrap(), out)
}

fn region_of(csv_text: &str, method: &str) -> String {
    let mut r = csv::Reader::from_reader(csv_text.as_bytes());
    r.records()
        .map(Result::unwrap)
        .find(|rec| &rec[1] == method)
        .map(|rec| rec[2].to_string())
        .unwrap()
}

#[test]
fn predict_hand_case() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "y\n0.5\n1\n2\nTEST\n");
    let models = write(&dir, "models.csv", "m0_pred,m1_pred\n0,1.5\n0,1.5\n0,1.5\n0,1.5\n");
    let cfg = write(&dir, "cfg.txt", "alpha=0.5\nmethods=split,yk_baseline,modsel_cp,modsel_cp_loo\n");
    let (o, text) = predict(&dir, &data, &models, &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(text.starts_with("test_index,method,region,selected_model,threshold_T,m_size\n"));
    assert_eq!(region_of(&text, "modsel_cp"), "[-0.5,0.5];[1.0,2.0]");
    assert_eq!(region_of(&text, "split"), "[-1.0,1.0]");
    assert_eq!(region_of(&text, "yk_baseline"), "[1.0,2.0]");
}

#[test]
fn predict_json_output() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "y\n0.5\n1\n2\nTEST\n");
    let models = write(&dir, "models.csv", "m0_pred\n0\n0\n0\n0\n");
    let cfg = write(&dir, "cfg.json", "{\"alpha\": 0.5, \"methods\": [\"split\"], \"format\": \"json\"}");
    let (o, text) = predict(&dir, &data, &models, &cfg);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v[0]["region"], "[-1.0,1.0]");
    assert_eq!(v[0]["selected_model"], "0");
}

#[test]
fn predict_adjust_degenerates_to_entire() {
    let dir = TempDir::new().unwrap();
    let n = 100;
    let k = 50;
    let mut data = String::from("y\n");
    let mut models = (0..k).map(|j| format!("m{j}_pred")).collect::<Vec<_>>().join(",") + "\n";
    for i in 0..=n {
        if i < n {
            data.push_str(&format!("{}\n", (i as f64 * 0.37).sin()));
        } else {
            data.push_str("TEST\n");
        }
        let row: Vec<String> = (0..k).map(|j| format!("{}", (j as f64 * 0.1 + i as f64 * 0.01).cos())).collect();
        models.push_str(&(row.join(",") + "\n"));
    }
    let data = write(&dir, "data.csv", &data);
    let models = write(&dir, "models.csv", &models);
    let cfg = write(&dir, "cfg.txt", "methods=yk_adjust\nalpha=0.1\n");
    let (o, text) = predict(&dir, &data, &models, &cfg);
    assert!(o.status.success());
    assert_eq!(region_of(&text, "yk_adjust"), "ENTIRE");
}

#[test]
fn predict_output_round_trips() {
    let dir = TempDir::new().unwrap();
    let y = [0.3, -1.2, 2.5, 0.7, 1.9, -0.4, 0.05];
    let p0 = [0.1, -0.9, 2.0, 1.0, 1.2, 0.0, 0.33, 0.2];
    let p1 = [0.5, -1.0, 2.9, 0.1, 2.2, -0.7, 0.1, -0.1];
    let mut d = String::from("y\n");
    let mut m = String::from("m0_pred,m1_pred\n");
    for i in 0..8 {
        d.push_str(&if i < 7 { format!("{:?}\n", y[i]) } else { "TEST\n".into() });
        m.push_str(&format!("{:?},{:?}\n", p0[i], p1[i]));
    }
    let data = write(&dir, "data.csv", &d);
    let models = write(&dir, "models.csv", &m);
    let cfg = write(&dir, "cfg.txt", "alpha=0.3\nmethods=modsel_cp,modsel_cp_loo\n");
    let (o, text) = predict(&dir, &data, &models, &cfg);
    assert!(o.status.success());
    let class = ModelClass::new(vec![
        ModelEvaluations::Residual { pred_calib: p0[..7].to_vec(), pred_test: p0[7] },
        ModelEvaluations::Residual { pred_calib: p1[..7].to_vec(), pred_test: p1[7] },
    ])
    .unwrap();
    let s = Session::new(class, Responses::Real(y.to_vec()), 0.3, TieBreaker::MinIndex).unwrap();
    let cp: PredictionRegion = region_of(&text, "modsel_cp").parse().unwrap();
    let loo: PredictionRegion = region_of(&text, "modsel_cp_loo").parse().unwrap();
    assert_eq!(cp, s.modsel_cp().unwrap().region);
    assert_eq!(loo, s.modsel_cp_loo().unwrap().region);
}

#[test]
fn predict_schema_error_exit_2() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "y\n0.5\n1\n2\nTEST\n");
    let models = write(&dir, "models.csv", "m0_pred,m1_pred\n0,1.5\n0,oops\n0,1.5\n0,1.5\n");
    let cfg = write(&dir, "cfg.txt", "alpha=0.5\n");
    let (o, _) = predict(&dir, &data, &models, &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn simulate_unknown_dgp_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "n=10\ntrials=2\ndgp=martian\n");
    let (o, _) = simulate(&dir, &cfg, "s.csv", None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn simulate_single_trial_blank_se() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "dgp=two_model\nc=1\nmu=0\nn=30\ntrials=1\nmethods=split\nseed=4\n");
    let (o, out) = simulate(&dir, &cfg, "s.csv", None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out).unwrap();
    let last = text.lines().last().unwrap();
    let cells: Vec<&str> = last.split(',').collect();
    assert_eq!(cells[0], "split");
    assert_eq!(cells[2], "");
    assert_eq!(cells[4], "");
}

#[test]
fn simulate_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "dgp=sparse_gaussian\nd=40\nn_train=60\nn=25\nn_models=4\ntrials=12\nseed=9\n");
    let (a, pa) = simulate(&dir, &cfg, "a.csv", Some("1"));
    let (b, pb) = simulate(&dir, &cfg, "b.csv", Some("3"));
    assert!(a.status.success() && b.status.success());
    assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
}

#[test]
fn bad_thread_count_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "cfg.txt", "dgp=two_model\nn=10\ntrials=2\n");
    let (o, _) = simulate(&dir, &cfg, "s.csv", Some("zero"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_merges_and_warns() {
    let dir = TempDir::new().unwrap();
    let c1 = write(&dir, "c1.txt", "name=first\ndgp=two_model\nn=20\ntrials=3\nmethods=split,yk_baseline\n");
    let c2 = write(
        &dir,
        "c2.json",
        "{\"name\": \"second\", \"dgp\": \"two_model\", \"n\": 20, \"trials\": 3, \"alpha\": 0.2,\n \"methods\": \"split,yk_baseline\", \"format\": \"json\"}",
    );
    let (o1, s1) = simulate(&dir, &c1, "s1.csv", None);
    let (o2, s2) = simulate(&dir, &c2, "s2.json", None);
    assert!(o1.status.success() && o2.status.success(), "{}", String::from_utf8_lossy(&o2.stderr));

    let out = dir.path().join("long.csv");
    let o = bin().arg("report").arg(&s1).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let single = std::fs::read_to_string(&out).unwrap();
    assert_eq!(single.lines().count(), 1 + 2 * 3);

    let o = bin().arg("report").arg(&s1).arg(&s2).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "setting,method,metric,value,se");
    assert_eq!(lines.len(), 1 + 2 * 2 * 3 + 1);
    assert!(lines.last().unwrap().starts_with("WARNING,"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("second"));
}

#[test]
fn report_schema_mismatch_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "method,coverage\nsplit,0.9\n");
    let out = dir.path().join("long.csv");
    let o = bin().arg("report").arg(&bad).arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
