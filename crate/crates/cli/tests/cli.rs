use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
# tiny model
epochs = 2
batch_size = 16
gru_hidden = 3
lstm_hidden = 3
relaxation_mlp = 6,1
history_mlp = 4,1
";

fn cerberus(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cerberus"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, cells: &str, cycles: &str) -> PathBuf {
        let data = self.path("data");
        let out = cerberus(&[
            "synth",
            "--cells",
            cells,
            "--cycles",
            cycles,
            "--seed",
            "7",
            "--out",
            s(&data),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        data
    }

    fn config(&self, extra: &str) -> PathBuf {
        let p = self.path("run.conf");
        std::fs::write(&p, format!("{TINY}{extra}")).unwrap();
        p
    }

    fn train(&self, data: &Path, name: &str, extra: &str) -> (Output, PathBuf) {
        let model = self.path(name);
        let conf = self.config(extra);
        let out = cerberus(&[
            "train",
            "--data",
            s(data),
            "--split",
            "stratified",
            "--seed",
            "7",
            "--config",
            s(&conf),
            "--out",
            s(&model),
        ]);
        (out, model)
    }
}

#[test]
fn synth_writes_one_file_per_cell_and_a_manifest() {
    let ws = Workspace::new();
    let data = ws.synth("6", "4");
    let mut names: Vec<String> = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 7);
    assert_eq!(names[0], "cell00.csv");
    assert!(names.contains(&"manifest.csv".to_string()));
}

#[test]
fn ingest_lists_every_cycle() {
    let ws = Workspace::new();
    let data = ws.synth("3", "5");
    let out = cerberus(&["ingest", "--data", s(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cell_id,condition,cycle_index,capacity_ah"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 15);
    assert!(rows[0].starts_with("cell00,0.25C,1,3.4"), "{}", rows[0]);
}

#[test]
fn train_and_evaluate_are_byte_reproducible() {
    let ws = Workspace::new();
    let data = ws.synth("6", "14");
    let mut runs = Vec::new();
    for name in ["a.ckpt", "b.ckpt"] {
        let (out, model) = ws.train(&data, name, "");
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let report = ws.path(&format!("{name}.report.txt"));
        let plots = ws.path(&format!("{name}.plots"));
        let out = cerberus(&[
            "evaluate",
            "--model",
            s(&model),
            "--data",
            s(&data),
            "--report",
            s(&report),
            "--plots",
            s(&plots),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let loss = std::fs::read_to_string(model.with_extension("loss.csv")).unwrap();
        assert!(loss.starts_with("epoch,train_loss,val_loss\n1,"));
        assert_eq!(loss.lines().count(), 3);
        let plot_files = std::fs::read_dir(&plots).unwrap().count();
        runs.push((
            std::fs::read(&model).unwrap(),
            std::fs::read_to_string(&report).unwrap(),
            loss,
            plot_files,
        ));
    }
    assert_eq!(runs[0], runs[1]);
    let report = &runs[0].1;
    // the default subset is the recorded test side: one cell per condition
    assert!(report.contains("\ncycles = 42\n"), "{report}");
    assert_eq!(runs[0].3, 3);
}

#[test]
fn evaluate_rejects_a_corrupted_checkpoint_with_exit_2() {
    let ws = Workspace::new();
    let data = ws.synth("6", "12");
    let (out, model) = ws.train(&data, "m.ckpt", "");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = std::fs::read_to_string(&model).unwrap();
    let broken = text.replacen("\"rows\": 3", "\"rows\": 4", 1);
    assert_ne!(broken, text);
    std::fs::write(&model, broken).unwrap();
    let out = cerberus(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("checkpoint error"), "{}", stderr(&out));

    std::fs::write(&model, &text[..text.len() / 2]).unwrap();
    assert_eq!(
        code(&cerberus(&["evaluate", "--model", s(&model), "--data", s(&data)])),
        2
    );
}

#[test]
fn usage_problems_exit_1() {
    let ws = Workspace::new();
    let data = ws.synth("3", "3");
    assert_eq!(code(&cerberus(&["train", "--bogus"])), 1);
    assert_eq!(code(&cerberus(&[])), 1);
    let missing = ws.path("nowhere");
    let out = cerberus(&["ingest", "--data", s(&missing)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not a directory"));

    let (out, _) = ws.train(&data, "m.ckpt", "width = 3\n");
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown key \"width\""), "{}", stderr(&out));

    let out = cerberus(&["train", "--data", s(&data), "--out", s(&ws.path("no/such/dir/m.ckpt"))]);
    assert_eq!(code(&out), 1);

    let help = cerberus(&["--help"]);
    assert_eq!(code(&help), 0);
    assert!(String::from_utf8_lossy(&help.stdout).contains("estimate"));
}

#[test]
fn bad_data_exits_2() {
    let ws = Workspace::new();
    let data = ws.path("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::write(data.join("x.csv"), "cell_id,cycle_index\nc,1\n").unwrap();
    let out = cerberus(&["ingest", "--data", s(&data)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("x.csv"));
}

#[test]
fn divergence_exits_3() {
    let ws = Workspace::new();
    let data = ws.synth("6", "12");
    let (out, model) = ws.train(&data, "m.ckpt", "lr = 1e12\nepochs = 5\n");
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("diverged at epoch"));
    assert!(!model.exists());
}

/// Rows of one cell file restricted to a single cycle.
fn single_cycle(cell_file: &Path, cycle: u32) -> String {
    let text = std::fs::read_to_string(cell_file).unwrap();
    let mut lines = text.lines();
    let mut out = format!("{}\n", lines.next().unwrap());
    for line in lines {
        if line.split(',').nth(1) == Some(cycle.to_string().as_str()) {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

#[test]
fn estimate_matches_the_evaluate_row() {
    let ws = Workspace::new();
    let data = ws.synth("6", "12");
    let (out, model) = ws.train(&data, "m.ckpt", "");
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let one = ws.path("one");
    std::fs::create_dir(&one).unwrap();
    let file = one.join("cell04.csv");
    std::fs::write(&file, single_cycle(&data.join("cell04.csv"), 5)).unwrap();

    let est = cerberus(&["estimate", "--model", s(&model), "--cycles", s(&file)]);
    assert_eq!(code(&est), 0, "{}", stderr(&est));
    let est = String::from_utf8(est.stdout).unwrap();
    let mut est_lines = est.lines();
    assert_eq!(
        est_lines.next(),
        Some("cell_id,condition,cycle_index,truth_ah,fused_ah,head_a_ah,head_b_ah,head_c_ah")
    );
    let row = est_lines.next().unwrap();
    assert!(row.starts_with("cell04,0.5C,5,"), "{row}");

    let ev = cerberus(&["evaluate", "--model", s(&model), "--data", s(&one), "--subset", "all"]);
    assert_eq!(code(&ev), 0, "{}", stderr(&ev));
    let report = String::from_utf8(ev.stdout).unwrap();
    let table = report.split("\n[cycles]\n").nth(1).unwrap();
    assert_eq!(table.lines().nth(1), Some(row));

    // a cycle inside a full history uses all three heads
    let est = cerberus(&[
        "estimate",
        "--model",
        s(&model),
        "--cycles",
        s(&data.join("cell04.csv")),
        "--cycle-index",
        "9",
    ]);
    assert_eq!(code(&est), 0, "{}", stderr(&est));
    let row = String::from_utf8(est.stdout).unwrap();
    let fields: Vec<&str> = row.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(fields.len(), 8);
    assert!(fields[5..].iter().all(|f| f.parse::<f64>().is_ok()), "{row}");
}

#[test]
fn predict_rolls_forward_the_requested_horizon() {
    let ws = Workspace::new();
    let data = ws.synth("6", "12");
    let (out, model) = ws.train(&data, "m.ckpt", "");
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let cell = data.join("cell01.csv");
    let args = |from: &'static str| {
        let mut a = vec!["predict", "--model", s(&model), "--cycles", s(&cell), "--horizon", "5"];
        if !from.is_empty() {
            a.extend(["--from", from]);
        }
        a.into_iter().map(String::from).collect::<Vec<_>>()
    };
    let run = |a: Vec<String>| {
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        cerberus(&refs)
    };
    let out = run(args(""));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,cycle_index,capacity_ah");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,13,"));
    assert!(lines[5].starts_with("5,17,"));

    let out = run(args("4"));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("1,5,"));

    assert_eq!(code(&run(args("40"))), 2);
    assert_eq!(
        code(&cerberus(&[
            "predict",
            "--model",
            s(&model),
            "--cycles",
            s(&cell),
            "--horizon",
            "0"
        ])),
        1
    );
}
