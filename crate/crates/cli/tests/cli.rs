//! End-to-end runs of the `rxai` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn rxai(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rxai"))
        .args(args)
        .output()
        .expect("spawn rxai")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sha256(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn explain_outputs_match_golden_hashes() {
    let out = tempfile::tempdir().unwrap();
    let image = fixtures().join("images/disc.ppm");
    let model = fixtures().join("models/tiny8.json");
    let o = rxai(&[
        "explain",
        "--model",
        p(&model),
        "--method",
        "recipro",
        "--class",
        "argmax",
        "--image",
        p(&image),
        "--out",
        p(out.path()),
        "--seed",
        "42",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let names = [
        "disc_recipro.pgm",
        "disc_recipro_overlay.ppm",
        "disc_recipro.json",
    ];
    let current: String = names
        .iter()
        .map(|n| format!("{}  {n}\n", sha256(&out.path().join(n))))
        .collect();
    let golden = fixtures().join("golden/explain_disc_recipro.sha256");
    if std::env::var_os("RXAI_BLESS").is_some() {
        std::fs::write(&golden, &current).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&golden).unwrap(), current);

    let sidecar: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("disc_recipro.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(sidecar["class_index"], sidecar["predicted_class"]);
    assert_eq!(sidecar["cost"]["head_forwards"], 16);
    assert_eq!(sidecar["degenerate"], false);
}

#[test]
fn preset_and_manifest_models_agree() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let image = fixtures().join("images/ring.ppm");
    let model = fixtures().join("models/tiny8.json");
    for (m, dir) in [("preset:tiny8", &a), (p(&model), &b)] {
        let o = rxai(&[
            "explain",
            "--model",
            m,
            "--method",
            "grad",
            "--image",
            p(&image),
            "--out",
            p(dir.path()),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for name in ["ring_grad.pgm", "ring_grad_overlay.ppm", "ring_grad.json"] {
        assert_eq!(
            sha256(&a.path().join(name)),
            sha256(&b.path().join(name)),
            "{name}"
        );
    }
}

#[test]
fn explain_rejects_bad_requests() {
    let out = tempfile::tempdir().unwrap();
    let image = fixtures().join("images/disc.ppm");
    let cases: [(&[&str], &str); 4] = [
        (
            &["--model", "preset:tiny8", "--class", "9999"],
            "out of range",
        ),
        (
            &["--model", "preset:mid16", "--method", "cam"],
            "CAM requires global pooling",
        ),
        (
            &[
                "--model",
                "preset:tiny8",
                "--method",
                "grad",
                "--kernel",
                "gauss3",
            ],
            "only applies to the recipro",
        ),
        (
            &["--model", "preset:tiny8", "--method", "gradcam++"],
            "unknown method `gradcam++`",
        ),
    ];
    for (extra, msg) in cases {
        let mut args = vec!["explain", "--image", p(&image), "--out", p(out.path())];
        args.extend_from_slice(extra);
        let o = rxai(&args);
        assert!(!o.status.success(), "{extra:?} should fail");
        assert!(stderr(&o).contains(msg), "{extra:?}: {}", stderr(&o));
    }
}

#[test]
fn corrupt_weights_report_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = std::fs::read_to_string(fixtures().join("models/tiny8.json")).unwrap();
    std::fs::write(dir.path().join("tiny8.json"), manifest).unwrap();
    let mut blob = std::fs::read(fixtures().join("models/tiny8.bin")).unwrap();
    blob[..8].copy_from_slice(b"NOTMAGIC");
    std::fs::write(dir.path().join("tiny8.bin"), blob).unwrap();
    let o = rxai(&["inspect", "--model", p(&dir.path().join("tiny8.json"))]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad magic"), "{}", stderr(&o));
}

#[test]
fn inspect_lists_layers_and_split_points() {
    let o = rxai(&["inspect", "--model", "preset:tiny8"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("valid split points: 1, 2, 3, 4, 5, 6"));
    assert!(text.contains("* 6 (default)"));
    assert!(text.contains("total params: 1562"));
}

#[test]
fn make_model_round_trips_through_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m/mid16.json");
    let o = rxai(&[
        "make-model",
        "--preset",
        "mid16",
        "--seed",
        "3",
        "--out",
        p(&manifest),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let from_file = rxai(&["inspect", "--model", p(&manifest)]);
    let from_preset = rxai(&["inspect", "--model", "preset:mid16", "--seed", "3"]);
    assert_eq!(from_file.stdout, from_preset.stdout);
}

fn eval(methods: &str, out: &Path, extra: &[&str]) -> Output {
    let data = fixtures().join("images");
    let labels = fixtures().join("labels.csv");
    let mut args = vec![
        "eval",
        "--model",
        "preset:tiny8",
        "--methods",
        methods,
        "--data",
        p(&data),
        "--labels",
        p(&labels),
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    rxai(&args)
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let body = text.split_once('\n').unwrap().1;
    csv::Reader::from_reader(body.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn fake_eval_has_near_zero_adcc() {
    let out = tempfile::tempdir().unwrap();
    let o = eval("fake", out.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.path().join("fake_report.csv"));
    let mean = rows.last().unwrap();
    assert_eq!(mean[0], "mean");
    let adcc: f64 = mean[6].parse().unwrap();
    assert!(adcc < 0.05, "aggregate ADCC {adcc}");
    assert!(std::fs::read_to_string(out.path().join("fake_summary.txt"))
        .unwrap()
        .contains("ADCC"));
}

#[test]
fn two_methods_share_image_order() {
    let out = tempfile::tempdir().unwrap();
    let o = eval("recipro,ablation", out.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ids = |m: &str| -> Vec<String> {
        csv_rows(&out.path().join(format!("{m}_report.csv")))
            .into_iter()
            .map(|r| r[0].clone())
            .collect()
    };
    let a = ids("recipro");
    assert_eq!(a.len(), 7);
    assert_eq!(a, ids("ablation"));
}

#[test]
fn eval_thread_count_does_not_change_reports() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let data = fixtures().join("images");
    let labels = fixtures().join("labels.csv");
    for (threads, dir) in [("1", &a), ("3", &b)] {
        let o = Command::new(env!("CARGO_BIN_EXE_rxai"))
            .args([
                "eval",
                "--model",
                "preset:tiny8",
                "--methods",
                "score",
                "--data",
                p(&data),
                "--labels",
                p(&labels),
                "--out",
                p(dir.path()),
            ])
            .env("RXAI_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(
        sha256(&a.path().join("score_report.csv")),
        sha256(&b.path().join("score_report.csv"))
    );
}

#[test]
fn eval_skips_unlabeled_images_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "disc.ppm,5\nring.ppm,5\n").unwrap();
    let data = fixtures().join("images");
    let run = |extra: &[&str]| {
        let mut args = vec![
            "eval",
            "--model",
            "preset:tiny8",
            "--data",
            p(&data),
            "--labels",
            p(&labels),
            "--out",
            p(dir.path()),
        ];
        args.extend_from_slice(extra);
        rxai(&args)
    };
    let strict = run(&[]);
    assert!(!strict.status.success());
    assert!(stderr(&strict).contains("--lenient"));
    let lenient = run(&["--lenient"]);
    assert!(lenient.status.success(), "{}", stderr(&lenient));
    let summary = std::fs::read_to_string(dir.path().join("recipro_summary.txt")).unwrap();
    assert!(
        summary.contains("images: 2  failures: 0  skipped: 4"),
        "{summary}"
    );
}

#[test]
fn eval_reports_unreadable_images_as_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    std::fs::create_dir(&data).unwrap();
    std::fs::copy(fixtures().join("images/disc.ppm"), data.join("disc.ppm")).unwrap();
    std::fs::write(data.join("broken.ppm"), b"P6\n1 1\n255\n").unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "disc.ppm,5\nbroken.ppm,0\n").unwrap();
    let out = dir.path().join("out");
    let o = rxai(&[
        "eval",
        "--model",
        "preset:tiny8",
        "--data",
        p(&data),
        "--labels",
        p(&labels),
        "--out",
        p(&out),
        "--lenient",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&out.join("recipro_report.csv"));
    assert_eq!(rows[0][0], "disc.ppm");
    assert_eq!(rows[1][0], "broken.ppm");
    assert!(rows[1][9].starts_with("error:"));
}

#[test]
fn eval_rejects_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = eval("recipro", dir.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let empty = tempfile::tempdir().unwrap();
    let labels = fixtures().join("labels.csv");
    let o = rxai(&[
        "eval",
        "--model",
        "preset:tiny8",
        "--data",
        p(empty.path()),
        "--labels",
        p(&labels),
        "--out",
        p(dir.path()),
    ]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("no images"), "{}", stderr(&o));
}

#[test]
fn bench_reports_requested_methods() {
    let out = tempfile::tempdir().unwrap();
    let o = rxai(&[
        "bench",
        "--model",
        "preset:tiny8",
        "--methods",
        "recipro,grad,score",
        "--n",
        "3",
        "--warmup",
        "1",
        "--out",
        p(out.path()),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows_plain(&out.path().join("bench.csv"));
    assert_eq!(
        rows.iter().map(|r| r[0].as_str()).collect::<Vec<_>>(),
        ["recipro", "grad", "score"]
    );
    for r in &rows {
        let ms: f64 = r[1].parse().unwrap();
        let fps: f64 = r[4].parse().unwrap();
        // ms is printed to 4 decimals and fps to 2
        let tol = 1000.0 / (ms * ms) * 5e-5 + 5e-3;
        assert!((fps - 1000.0 / ms).abs() <= tol, "{r:?}");
    }
    assert!(std::fs::read_to_string(out.path().join("bench.txt"))
        .unwrap()
        .contains("Recipro-CAM"));
}

fn csv_rows_plain(path: &Path) -> Vec<Vec<String>> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap().iter().map(str::to_string).collect())
        .collect()
}

#[test]
fn bench_rejects_zero_runs_and_unknown_methods() {
    let o = rxai(&["bench", "--model", "preset:tiny8", "--n", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--n"));
    let o = rxai(&[
        "bench",
        "--model",
        "preset:tiny8",
        "--methods",
        "recipro,lime",
        "--n",
        "1",
    ]);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("unknown method `lime`"),
        "{}",
        stderr(&o)
    );
}
