use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use grcnet::cli::{run_from_args, GafArchive};
use grcnet::dataset::synthetic::{generate, write_bonn_layout, SyntheticConfig};
use grcnet::Error;

fn toy_dataset(root: &Path) {
    let records = generate(&SyntheticConfig {
        records_per_class: 2,
        record_len: 1024,
        noise: 0.3,
        seed: 5,
    })
    .unwrap();
    write_bonn_layout(&records, root).unwrap();
}

/// 2 records per class, half for training, 5 windows each at stride 128,
/// encoded as 16x16 images.
fn toy_config(dir: &Path, data: &Path) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(
        &path,
        format!(
            "# toy run\ndataset_root = {}\ntrain_fraction = 0.5\nstride = 128\npaa_target = 16\n\
             stem_channels = 4\ninception_branch_widths = 2,2,2,2\nmlp_hidden = 8\nepochs = 1\nbatch_size = 8\n",
            data.display()
        ),
    )
    .unwrap();
    path
}

fn grcnet(args: &[&str]) -> grcnet::Result<()> {
    run_from_args(std::iter::once("grcnet").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Toy {
    _tmp: tempfile::TempDir,
    cfg: PathBuf,
    root: PathBuf,
}

fn toy() -> Toy {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path().to_path_buf();
    let data = root.join("data");
    toy_dataset(&data);
    let cfg = toy_config(&root, &data);
    Toy { _tmp: tmp, cfg, root }
}

#[test]
fn encode_writes_archives_summary_and_config_echo() {
    let t = toy();
    let out = t.root.join("out");
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "encode"]).unwrap();
    let train = GafArchive::read(out.join("train.gaf")).unwrap();
    let test = GafArchive::read(out.join("test.gaf")).unwrap();
    assert_eq!(train.class_counts(), [5; 5]);
    assert_eq!(test.class_counts(), [5; 5]);
    assert_eq!(train.size, 16);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("encode_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["train"]["S"], 5);
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    for key in ["seed", "window_len", "paa_target", "epochs", "learning_rate", "cot_heads", "variant"] {
        assert!(echo.lines().any(|l| l.starts_with(&format!("{key} = "))), "{key}");
    }
}

#[test]
fn empty_class_directory_is_named() {
    let t = toy();
    let f = t.root.join("data/F");
    for entry in fs::read_dir(&f).unwrap() {
        fs::remove_file(entry.unwrap().path()).unwrap();
    }
    let err = grcnet(&["--config", s(&t.cfg), "--out", s(&t.root.join("o")), "encode"]).unwrap_err();
    assert!(matches!(err, Error::EmptyClass(l) if l.tag() == "F"), "{err}");
    assert!(err.to_string().contains('F'));
}

#[test]
fn encode_and_train_are_reproducible() {
    let t = toy();
    let run = |name: &str| {
        let out = t.root.join(name);
        grcnet(&["--config", s(&t.cfg), "--out", s(&out), "--seed", "9", "encode"]).unwrap();
        grcnet(&["--config", s(&t.cfg), "--out", s(&out), "--seed", "9", "train"]).unwrap();
        out
    };
    let (a, b) = (run("a"), run("b"));
    for file in ["train.gaf", "test.gaf", "checkpoint.grc", "history.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let history: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("history.json")).unwrap()).unwrap();
    assert_eq!(history["epochs"].as_array().unwrap().len(), 1);
}

#[test]
fn train_builds_missing_default_archives_but_not_explicit_ones() {
    let t = toy();
    let out = t.root.join("out");
    let missing = t.root.join("nowhere.gaf");
    let err = grcnet(&[
        "--config", s(&t.cfg), "--out", s(&out), "train", "--train-archive", s(&missing),
    ])
    .unwrap_err();
    assert!(matches!(&err, Error::Read { path, .. } if path == &missing), "{err}");
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "train"]).unwrap();
    assert!(out.join("train.gaf").exists() && out.join("checkpoint.grc").exists());
}

#[test]
fn eval_checks_compatibility_and_is_repeatable() {
    let t = toy();
    let out = t.root.join("out");
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "train"]).unwrap();
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "eval"]).unwrap();
    let first = fs::read(out.join("metrics.json")).unwrap();
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "eval"]).unwrap();
    assert_eq!(first, fs::read(out.join("metrics.json")).unwrap());
    let metrics: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let total: u64 = metrics["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(total, 25);

    let small = t.root.join("small");
    grcnet(&["--config", s(&t.cfg), "--out", s(&small), "--set", "paa_target=8", "encode"]).unwrap();
    let err = grcnet(&[
        "--config", s(&t.cfg), "--out", s(&out), "eval", "--archive", s(&small.join("test.gaf")),
    ])
    .unwrap_err();
    assert!(matches!(err, Error::IncompatibleCheckpoint(_)), "{err}");
}

#[test]
fn render_writes_one_to_one_pngs() {
    let t = toy();
    let out = t.root.join("out");
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "encode"]).unwrap();
    grcnet(&[
        "--config", s(&t.cfg), "--out", s(&out), "render", "--input", s(&out.join("test.gaf")), "--limit", "3",
    ])
    .unwrap();
    let arc = GafArchive::read(out.join("test.gaf")).unwrap();
    let mut names: Vec<String> = fs::read_dir(out.join("render"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 3);
    let e = &arc.entries[0];
    let name = format!("{}_{}_{}.png", e.record_id, e.offset, e.label.tag());
    assert!(names.contains(&name), "{names:?}");
    let file = fs::File::open(out.join("render").join(&name)).unwrap();
    let mut reader = png::Decoder::new(std::io::BufReader::new(file)).read_info().unwrap();
    let mut buf = vec![0; reader.output_buffer_size().unwrap()];
    let info = reader.next_frame(&mut buf).unwrap();
    assert_eq!((info.width, info.height), (16, 16));
    for i in 0..16 {
        for j in 0..16 {
            assert_eq!(buf[i * 16 + j], buf[j * 16 + i]);
        }
    }

    let record = t.root.join("data/Z/Z001.txt");
    let rendered = t.root.join("rec");
    grcnet(&["--config", s(&t.cfg), "--out", s(&rendered), "render", "--input", s(&record)]).unwrap();
    assert_eq!(fs::read_dir(rendered.join("render")).unwrap().count(), 5);
}

#[test]
fn ablate_reports_four_variants_consistently() {
    let t = toy();
    let out = t.root.join("out");
    grcnet(&["--config", s(&t.cfg), "--out", s(&out), "ablate", "--epochs", "1"]).unwrap();
    let text = fs::read_to_string(out.join("ablation.txt")).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("ablation.json")).unwrap()).unwrap();
    let rows = json["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "no_gaf", "no_cot", "no_ru"]);
    for (row, line) in rows.iter().zip(text.lines().skip(1)) {
        let cols: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cols[0], row["variant"].as_str().unwrap());
        for (i, key) in ["rec_pct", "acc_pct", "prec_pct", "f1_pct"].iter().enumerate() {
            assert_eq!(cols[i + 1], format!("{:.2}", row[key].as_f64().unwrap()), "{key}");
        }
        assert_eq!(row["history"]["epochs"].as_array().unwrap().len(), 1);
    }
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_grcnet"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn exit_codes_distinguish_error_families() {
    let t = toy();
    let out = t.root.join("out");
    assert_eq!(binary(&["--set", "colour=blue", "--out", s(&out), "encode"]).status.code(), Some(2));
    assert_eq!(
        binary(&["--config", s(&t.root.join("absent.cfg")), "encode"]).status.code(),
        Some(4)
    );
    assert_eq!(
        binary(&["--out", s(&out), "encode", "--dataset", s(&t.root.join("nope"))]).status.code(),
        Some(3)
    );
    let junk = t.root.join("junk.gaf");
    fs::write(&junk, b"GAF1junk").unwrap();
    assert_eq!(
        binary(&["--out", s(&out), "render", "--input", s(&junk)]).status.code(),
        Some(5)
    );
    let ok = binary(&["--config", s(&t.cfg), "--out", s(&out), "encode"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("class"));
}
