use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cardioshape::synth::{cardiac_phantom, Deformity, PhantomSpec};
use cardioshape::{
    extract_region, metrics, read_mask, write_mask, Canvas, DeformityKind, LabelMask, Spacing,
    ThresholdSet, LV_ENDO, LV_EPI,
};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cardioshape"));
    c.env_remove("CARDIOSHAPE_OUT_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn disk(size: usize, radius: f64) -> LabelMask {
    let c = (size as f64 - 1.0) / 2.0;
    let mut m = LabelMask::empty(size, size, Spacing::default()).unwrap();
    for r in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64 - c, r as f64 - c);
            if x * x + y * y <= radius * radius {
                m.set(col, r, 1);
            }
        }
    }
    m
}

/// Ten phantom pairs; the prediction of image 3 carries a long cavity spike.
fn phantom_cohort(dir: &Path) {
    let canvas = Canvas::square(448);
    let mut manifest = String::new();
    for i in 0..10u64 {
        let reference = cardiac_phantom(&PhantomSpec::new(i), &canvas).unwrap();
        let mut spec = PhantomSpec::new(i);
        spec.offset = ((i % 2) as i64, 0);
        if i == 3 {
            spec.cavity_deformity = Some(Deformity {
                kind: DeformityKind::Spike,
                magnitude: 130.0,
                angle_deg: 0.0,
            });
        }
        let pred = cardiac_phantom(&spec, &canvas).unwrap();
        write_mask(&reference, dir.join(format!("ref{i}.mha"))).unwrap();
        write_mask(&pred, dir.join(format!("pred{i}.mha"))).unwrap();
        manifest.push_str(&format!("pred{i}.mha\tref{i}.mha\tAP4C\tED\n"));
    }
    fs::write(dir.join("pairs.tsv"), manifest).unwrap();
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.mha", "b.mha"] {
        let o = run(
            dir.path(),
            &["synth", "disk", "--radius", "64", "--seed", "1", "-o", name],
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = fs::read(dir.path().join("a.mha")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.mha")).unwrap());
    let m = read_mask(dir.path().join("a.mha")).unwrap();
    assert!(m.count(1) > 12_000);
}

#[test]
fn synth_reports_bad_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["synth", "disk", "-o", "x.pgm"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--radius"));
    let o = run(
        dir.path(),
        &["synth", "disk", "--radius", "500", "-o", "x.pgm"],
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_writes_one_row_per_magnitude() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "sweep",
            "--deformity",
            "notch",
            "--radius",
            "40",
            "--magnitudes",
            "0,5,10",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "magnitude,convexity,simplicity");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn sweep_rejects_unsorted_magnitudes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        dir.path(),
        &[
            "sweep",
            "--deformity",
            "notch",
            "--radius",
            "40",
            "--magnitudes",
            "0,10,5",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sorted"));
}

#[test]
fn calibrate_takes_minima_of_expert_disks() {
    let dir = tempfile::tempdir().unwrap();
    let radii = [20.0, 30.0, 45.0];
    let mut manifest = String::new();
    let (mut min_cx, mut min_sp) = (f64::INFINITY, f64::INFINITY);
    for (i, r) in radii.iter().enumerate() {
        let m = disk(100, *r);
        let region = extract_region(&m, &BTreeSet::from([1])).unwrap();
        min_cx = min_cx.min(metrics::convexity(&region).unwrap());
        min_sp = min_sp.min(metrics::simplicity(&region));
        write_mask(&m, dir.path().join(format!("e{i}.pgm"))).unwrap();
        manifest.push_str(&format!("e{i}.pgm\n"));
    }
    fs::write(dir.path().join("experts.tsv"), manifest).unwrap();

    let o = run(dir.path(), &["calibrate", "experts.tsv", "--out", "cal"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("LV-endo"));
    let t = ThresholdSet::load(dir.path().join("cal/thresholds.txt")).unwrap();
    // The disks carry label 1 only, so LV-epi equals LV-endo.
    for s in [LV_ENDO, LV_EPI] {
        assert_eq!(t.get(s).unwrap().min_convexity, Some(min_cx));
        assert_eq!(t.get(s).unwrap().min_simplicity, Some(min_sp));
    }
    // No atrium in the cohort: the metrics-only default stays.
    assert_eq!(t.get("LA").unwrap().min_convexity, None);
}

#[test]
fn calibrate_manifest_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.tsv"), "# nothing\n").unwrap();
    let o = run(dir.path(), &["calibrate", "empty.tsv"]);
    assert_eq!(o.status.code(), Some(2));

    let o = run(dir.path(), &["calibrate", "missing.tsv"]);
    assert_eq!(o.status.code(), Some(3));

    write_mask(&disk(40, 10.0), dir.path().join("good.pgm")).unwrap();
    fs::write(dir.path().join("corrupt.pgm"), b"P5\n40 40\n255\nshort").unwrap();
    fs::write(dir.path().join("experts.tsv"), "good.pgm\ncorrupt.pgm\n").unwrap();
    let o = run(dir.path(), &["calibrate", "experts.tsv", "--out", "cal"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("corrupt.pgm"));
    assert!(!dir.path().join("cal/thresholds.txt").exists());

    let o = run(
        dir.path(),
        &["calibrate", "experts.tsv", "--out", "cal", "--lenient"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("skipping corrupt.pgm"));
}

#[test]
fn identity_cohort_has_no_outliers() {
    let dir = tempfile::tempdir().unwrap();
    let canvas = Canvas::square(256);
    let mut manifest = String::new();
    for i in 0..4u64 {
        let m = cardiac_phantom(&PhantomSpec::new(i), &canvas).unwrap();
        write_mask(&m, dir.path().join(format!("m{i}.pgm"))).unwrap();
        manifest.push_str(&format!("m{i}.pgm\tm{i}.pgm\n"));
    }
    fs::write(dir.path().join("pairs.tsv"), manifest).unwrap();
    let o = run(
        dir.path(),
        &["evaluate", "pairs.tsv", "--out", "ev", "--format", "json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/summary.json")).unwrap())
            .unwrap();
    let s = &summary[0];
    assert_eq!(s["outliers"]["ana"]["count"], 0);
    assert_eq!(s["outliers"]["geo"]["count"], 0);
    for structure in ["LV-endo", "LV-epi", "LA"] {
        assert_eq!(s["structures"][structure]["dice"]["mean"], 1.0);
        assert_eq!(s["structures"][structure]["dice"]["n"], 4);
    }
}

#[test]
fn injected_outlier_is_counted_and_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    phantom_cohort(dir.path());
    let mut outputs = Vec::new();
    for (jobs, out) in [("1", "serial"), ("8", "parallel")] {
        let o = run(
            dir.path(),
            &[
                "evaluate",
                "pairs.tsv",
                "--method",
                "U-Net",
                "--jobs",
                jobs,
                "--out",
                out,
                "--format",
                "md",
            ],
        );
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(
            stdout(&o).contains("| 0 (0%) | 1 (10%) | 0 (0%) |"),
            "{}",
            stdout(&o)
        );
        let files: Vec<Vec<u8>> = ["run.json", "records.md", "summary.md"]
            .iter()
            .map(|f| fs::read(dir.path().join(out).join(f)).unwrap())
            .collect();
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);

    let records = fs::read_to_string(dir.path().join("serial/records.md")).unwrap();
    let flagged: BTreeSet<&str> = records
        .lines()
        .filter(|l| l.contains("| true |"))
        .map(|l| l.split(" | ").next().unwrap().trim_start_matches("| "))
        .collect();
    assert_eq!(flagged, BTreeSet::from(["pred3.mha"]));
    assert!(records.contains("AP4C ED"));
}

#[test]
fn geometric_rule_and_reclassification() {
    let dir = tempfile::tempdir().unwrap();
    phantom_cohort(dir.path());
    let o = run(
        dir.path(),
        &["evaluate", "pairs.tsv", "--out", "ev", "--format", "csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));

    // Odd predictions are shifted by one pixel, so a 0.5 mm ceiling flags
    // them all; image 3 is odd as well.
    let o = run(
        dir.path(),
        &[
            "classify",
            "ev/run.json",
            "--geo-hd-max",
            "0.5",
            "--out",
            "cl",
            "--format",
            "md",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("| 5 (50%) | 1 (10%) | 1 (10%) |"),
        "{}",
        stdout(&o)
    );

    let o = run(
        dir.path(),
        &[
            "report",
            "ev/run.json",
            "cl/run.json",
            "--out",
            "rep",
            "--format",
            "md",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("rep/summary.md")).unwrap();
    assert_eq!(
        text.lines()
            .filter(|l| l.starts_with("| prediction |"))
            .count(),
        2
    );
    for h in ["LV-endo Cx", "LV-endo Sp", "LV-epi Cx", "LV-epi Sp"] {
        assert!(text.contains(h));
    }
}

#[test]
fn mismatched_pair_is_an_evaluation_failure() {
    let dir = tempfile::tempdir().unwrap();
    write_mask(&disk(40, 10.0), dir.path().join("p.pgm")).unwrap();
    write_mask(&disk(48, 10.0), dir.path().join("r.pgm")).unwrap();
    fs::write(dir.path().join("pairs.tsv"), "p.pgm\tr.pgm\n").unwrap();
    let o = run(
        dir.path(),
        &["evaluate", "pairs.tsv", "--out", "ev", "--format", "csv"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = fs::read_to_string(dir.path().join("ev/records.csv")).unwrap();
    let row = records.lines().nth(1).unwrap();
    assert!(row.contains("true"), "{row}");
    assert!(row.contains("evaluation failure"), "{row}");
}

#[test]
fn strict_evaluation_aborts_on_unreadable_mask() {
    let dir = tempfile::tempdir().unwrap();
    write_mask(&disk(40, 10.0), dir.path().join("p.pgm")).unwrap();
    fs::write(dir.path().join("pairs.tsv"), "p.pgm\tnope.pgm\n").unwrap();
    let o = run(
        dir.path(),
        &["evaluate", "pairs.tsv", "--out", "ev", "--strict"],
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("nope.pgm"));
    let o = run(dir.path(), &["evaluate", "pairs.tsv", "--out", "ev"]);
    assert!(o.status.success());
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .current_dir(dir.path())
        .env("CARDIOSHAPE_OUT_DIR", "from_env")
        .args([
            "synth", "square", "--side", "10", "--width", "20", "--height", "20",
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("from_env/square.mha").exists());

    let o = bin()
        .current_dir(dir.path())
        .env("CARDIOSHAPE_OUT_DIR", "from_env")
        .args([
            "synth",
            "square",
            "--side",
            "10",
            "--width",
            "20",
            "--height",
            "20",
            "--out",
            "from_flag",
        ])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("from_flag/square.mha").exists());

    let o = run(
        dir.path(),
        &[
            "synth", "square", "--side", "10", "--width", "20", "--height", "20",
        ],
    );
    assert!(o.status.success());
    assert!(dir.path().join("square.mha").exists());
}

#[test]
fn invalid_configuration_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("pairs.tsv"), "a.pgm\tb.pgm\n").unwrap();
    for args in [
        vec!["evaluate", "pairs.tsv", "--labels", "endo=1,myo=1"],
        vec!["evaluate", "pairs.tsv", "--jobs", "0"],
        vec!["evaluate", "pairs.tsv", "--geo-hd-max", "-1"],
        vec!["evaluate", "pairs.tsv", "--format", "xml"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
    // A threshold file without the atrium cannot score the default labels.
    fs::write(
        dir.path().join("t.txt"),
        "LV-endo.min_convexity = 0.7\nLV-endo.min_simplicity = 0.5\nLV-epi.min_convexity = 0.9\nLV-epi.min_simplicity = 0.6\n",
    )
    .unwrap();
    let o = run(
        dir.path(),
        &["evaluate", "pairs.tsv", "--thresholds", "t.txt"],
    );
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}
