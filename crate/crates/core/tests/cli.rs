use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cfcomm");
const REFERENCE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/reference-device.json");
const IDEAL: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/ideal-device.json");

fn run(args: &[&str], threads: &str) -> Output {
    Command::new(BIN)
        .args(args)
        .env("RAYON_NUM_THREADS", threads)
        .env_remove("CFCOMM_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args, "1");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn write_checker(path: &Path, w: usize, h: usize) {
    let mut s = format!("P1\n# checker\n{w} {h}\n");
    for y in 0..h {
        let row: Vec<&str> = (0..w).map(|x| if (x / 3 + y / 3) % 2 == 0 { "1" } else { "0" }).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn trace_reports_the_channel_dark() {
    let o = ok(&["trace", "--tuning", "bit1", "--detector", "D1"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["A1"], 0.0);
    assert_eq!(v["A2"], 0.0);
    assert!(v["B1"].as_f64().unwrap() > 0.5);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["trace", "--tuning", "bit0", "--detector", "D1"], "1").status.code(), Some(3));
    assert_eq!(run(&["trace", "--tuning", "bit0", "--detector", "D9"], "1").status.code(), Some(2));
    assert_eq!(run(&["trace", "--tuning", "bit7", "--detector", "D0"], "1").status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"eoms\": 3}").unwrap();
    let o = run(&["source-filter", "--config", bad.to_str().unwrap()], "1");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("cfcomm: "));

    let pbm = dir.path().join("bad.pbm");
    std::fs::write(&pbm, "P1\n2 2\n0 1 1\n").unwrap();
    let out = dir.path().join("out.pbm");
    let args = ["send-image", "--in", pbm.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(run(&args, "1").status.code(), Some(2));
    let args = ["send-image", "--in", pbm.to_str().unwrap(), "--out", out.to_str().unwrap(), "--policy", "majority:4"];
    assert_eq!(run(&args, "1").status.code(), Some(2));
}

#[test]
fn config_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "not json").unwrap();
    let o = Command::new(BIN).args(["source-filter"]).env("CFCOMM_CONFIG", &bad).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_writes_csv_and_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let o = ok(&["spectrum", "--tuning", "calibration", "--detector", "D0", "--out", csv.to_str().unwrap()]);
    let table: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for l in ["A", "B", "C", "E", "F"] {
        assert_eq!(table["peaks"][l]["present"], true, "{l}");
        assert!((table["peaks"][l]["height_over_calibration"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("detuning_ghz,intensity,stderr"));
    assert_eq!(text.lines().count(), 1 + 161);
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    write_checker(Path::new(&p("in.pbm")), 30, 20);

    let cases: Vec<(Vec<String>, Option<String>)> = vec![
        (vec!["source-filter".into()], None),
        (vec!["trace".into(), "--tuning".into(), "calibration".into(), "--detector".into(), "D0".into()], None),
        (
            ["spectrum", "--tuning", "bit1", "--detector", "D1", "--noise", "on", "--seed", "4", "--out"]
                .iter()
                .map(|s| s.to_string())
                .chain([p("s.csv")])
                .collect(),
            Some(p("s.csv")),
        ),
        (
            ["send-image", "--config", REFERENCE, "--policy", "majority:3", "--seed", "2", "--in"]
                .iter()
                .map(|s| s.to_string())
                .chain([p("in.pbm"), "--out".into(), p("o.pbm")])
                .collect(),
            Some(p("o.pbm")),
        ),
    ];
    for (args, file) in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let mut seen = Vec::new();
        for threads in ["1", "4", "1"] {
            let o = run(&args, threads);
            assert!(o.status.success(), "{args:?}");
            let f = file.as_ref().map(|f| std::fs::read(f).unwrap()).unwrap_or_default();
            seen.push((o.stdout, f));
        }
        assert_eq!(seen[0], seen[1], "{args:?} differs across thread counts");
        assert_eq!(seen[0], seen[2], "{args:?} differs across runs");
    }
}

#[test]
fn ideal_device_sends_an_exact_copy() {
    let dir = tempfile::tempdir().unwrap();
    let (input, out, stats) = (dir.path().join("in.pbm"), dir.path().join("out.pbm"), dir.path().join("stats.json"));
    write_checker(&input, 145, 145);
    ok(&[
        "send-image",
        "--config",
        IDEAL,
        "--in",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--stats",
        stats.to_str().unwrap(),
    ]);
    let sent = cfcomm::protocol::parse_pbm(&std::fs::read_to_string(&input).unwrap()).unwrap();
    let got = cfcomm::protocol::parse_pbm(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(sent, got);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), cfcomm::protocol::write_pbm(&sent));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(s["pixel_error_rate"], 0.0);
    assert_eq!(s["policy"], "first-click");
    assert_eq!(s["bits"], 145 * 145);
}
