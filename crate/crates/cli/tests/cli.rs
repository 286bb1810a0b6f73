use std::path::Path;
use std::process::{Command, Output};

fn gkflab(args: &[&str]) -> Output {
    gkflab_in(None, args)
}

fn gkflab_in(dir: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gkflab"));
    cmd.args(args).env_remove("GKFLAB_SEED");
    if let Some(d) = dir {
        cmd.current_dir(d);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Value of `column` in the first data row whose first field starts with `row`.
fn cell(csv: &str, row: &str, column: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == column).unwrap();
    let line = lines
        .find(|l| l.trim_start_matches('"').starts_with(row))
        .unwrap_or_else(|| panic!("no row {row} in\n{csv}"));
    // Labels may be quoted and contain commas; count columns from the right.
    let fields: Vec<&str> = line.rsplitn(header.len(), ',').collect();
    fields[header.len() - 1 - idx].to_string()
}

#[test]
fn expect_low_threshold_gives_unit_euler_characteristic() {
    let o = gkflab(&[
        "expect",
        "--space",
        "rect:10,10",
        "--lambda2",
        "1",
        "--domain",
        "halfline",
        "--u",
        "-8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cell(&stdout(&o), "-8.000000", "predicted"), "1.000000");
}

#[test]
fn expect_point_is_the_gaussian_tail() {
    let o = gkflab(&[
        "expect", "--space", "point", "--domain", "halfline", "--u", "0",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cell(&stdout(&o), "0.000000", "predicted"), "0.500000");
}

#[test]
fn expect_full_space_returns_curvature() {
    let o = gkflab(&[
        "expect",
        "--space",
        "rect:3,4",
        "--domain",
        "fullspace",
        "--i",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(cell(&stdout(&o), "0.000000", "predicted"), "7.000000");
}

#[test]
fn expect_threshold_grid_and_orders() {
    let o = gkflab(&[
        "expect",
        "--space",
        "rect:10,10",
        "--u",
        "0,1,2",
        "--i",
        "0,1,2",
    ]);
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 9);
    assert!(text.starts_with("u,i,predicted,term_0,term_1,term_2\n"));
    // E{L_2} = area · Ψ(u)
    assert!(
        text.contains("\n0.000000,2,50.000000,50.000000,,\n"),
        "{text}"
    );
}

#[test]
fn expect_rejects_order_above_dimension() {
    let o = gkflab(&["expect", "--space", "rect:3,4", "--i", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("expect.i"));
}

#[test]
fn gmf_closed_forms() {
    let o = gkflab(&["gmf", "--domain", "halfline", "--u", "0", "--jmax", "2"]);
    assert_eq!(stdout(&o), "j,value\n0,0.500000\n1,0.398942\n2,0.000000\n");
    let o = gkflab(&[
        "gmf", "--domain", "ballcomp", "--k", "2", "--u", "1", "--jmax", "1",
    ]);
    assert_eq!(stdout(&o), "j,value\n0,0.606531\n1,0.606531\n");
}

#[test]
fn gmf_numeric_agrees_with_closed_form() {
    let args = [
        "gmf", "--domain", "interval", "--u", "-1", "--b", "0.5", "--jmax", "2",
    ];
    let exact = stdout(&gkflab(&args));
    let mut forced = args.to_vec();
    forced.extend(["--force-numeric", "--seed", "3"]);
    let numeric = stdout(&gkflab(&forced));
    assert!(numeric.starts_with("j,value,stderr\n"));
    for (e, n) in exact.lines().skip(1).zip(numeric.lines().skip(1)) {
        let e: f64 = e.split(',').nth(1).unwrap().parse().unwrap();
        let mut parts = n.split(',').skip(1).map(|t| t.parse::<f64>().unwrap());
        let (v, se) = (parts.next().unwrap(), parts.next().unwrap());
        assert!((v - e).abs() <= 4.0 * se + 1e-3, "{v} ± {se} vs {e}");
    }
}

#[test]
fn simulate_is_reproducible_and_echoes_parameters() {
    let args = [
        "simulate",
        "--space",
        "rect:2,1",
        "--spacing",
        "0.2",
        "--ell",
        "0.8",
        "--k",
        "2",
        "--seed",
        "11",
    ];
    let a = gkflab(&args);
    let b = gkflab(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "GKFLAB-FIELD v1 dims=10,5 spacing=0.2 k=2 seed=11 ell=0.8"
    );
    // two components, 11 rows of 6 values each
    assert_eq!(lines.count(), 2 * 11);
    let other = gkflab(&[
        "simulate", "--space", "rect:2,1", "--ell", "0.8", "--k", "2", "--seed", "12",
    ]);
    assert_ne!(other.stdout, a.stdout);
}

#[test]
fn simulate_binary_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = gkflab_in(
        Some(dir.path()),
        &[
            "simulate", "--space", "rect:1,1", "--seed", "5", "--binary", "--out", "f.bin",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    let bytes = std::fs::read(dir.path().join("f.bin")).unwrap();
    let header_len = bytes.iter().position(|&b| b == b'\n').unwrap() + 1;
    assert_eq!(bytes.len() - header_len, 36 * 8);
}

#[test]
fn simulate_needs_a_seed() {
    let o = gkflab(&["simulate", "--space", "rect:1,1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("mc.seed"));
    let o = Command::new(env!("CARGO_BIN_EXE_gkflab"))
        .args(["simulate", "--space", "rect:1,1"])
        .env("GKFLAB_SEED", "5")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().next().unwrap().contains("seed=5"));
}

#[test]
fn simulate_guard_violation_exits_2() {
    let o = gkflab(&[
        "simulate",
        "--space",
        "rect:2,2",
        "--spacing",
        "0.5",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("resolution"));
}

#[test]
fn validate_tube_passes_by_default() {
    let o = gkflab(&["validate", "tube", "--domain", "halfline", "--u", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().last(), Some("PASS"));
}

#[test]
fn validate_rejects_single_replicate() {
    let o = gkflab(&["validate", "ec", "--replicates", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_kff_hemispheres_cover_the_sphere() {
    let o = gkflab(&[
        "validate",
        "kff",
        "--alpha",
        "90",
        "--beta",
        "90",
        "--replicates",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        cell(&stdout(&o), "chi_integral", "empirical_mean"),
        "12.566371"
    );
}

#[test]
fn validate_fail_exits_1() {
    // A gate this tight cannot hold for a Monte Carlo mean.
    let o = gkflab(&[
        "validate",
        "ec",
        "--space",
        "rect:4,4",
        "--u",
        "0.5",
        "--replicates",
        "50",
        "--z-gate",
        "0.0001",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().last(), Some("FAIL"));
}

#[test]
fn unknown_config_key_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# header\nmc.replicates = 10\nmc.replicats = 20\n").unwrap();
    let o = gkflab(&["validate", "ec", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config line 3: unknown key 'mc.replicats'"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "space.kind = rect\nspace.sides = 4,4\ndomain.kind = halfline\ndomain.u = 1\nmc.replicates = 30\nmc.seed = 2\n",
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    let file_only = stdout(&gkflab(&["validate", "ec", "--config", c]));
    assert_eq!(cell(&file_only, "u=1.000000", "replicates"), "30");
    let flagged = stdout(&gkflab(&[
        "validate",
        "ec",
        "--config",
        c,
        "--replicates",
        "40",
        "--u",
        "2",
    ]));
    assert_eq!(cell(&flagged, "u=2.000000", "replicates"), "40");
    let bad = gkflab(&["expect", "--config", c, "--lambda2", "oops"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn validate_writes_json_and_csv_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = gkflab_in(
        Some(dir.path()),
        &[
            "validate",
            "volume",
            "--space",
            "rect:4,4",
            "--replicates",
            "20",
            "--seed",
            "8",
            "--out",
            "vol",
        ],
    );
    assert!(matches!(o.status.code(), Some(0 | 1)));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("vol.json")).unwrap())
            .unwrap();
    assert_eq!(json["experiment"], "volume");
    assert_eq!(json["seed"], 8);
    let csv = std::fs::read_to_string(dir.path().join("vol.csv")).unwrap();
    assert!(csv.starts_with("label,predicted,empirical_mean,stderr,z,replicates\n"));
    let verdict = stdout(&o);
    assert_eq!(verdict.trim(), json["verdict"].as_str().unwrap());
}

#[test]
fn worker_count_does_not_change_results() {
    let base = [
        "validate",
        "ec",
        "--space",
        "rect:4,4",
        "--replicates",
        "30",
        "--seed",
        "6",
    ];
    let run = |w: &str| {
        let mut args = base.to_vec();
        args.extend(["--workers", w]);
        stdout(&gkflab(&args))
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(gkflab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gkflab(&["validate", "nonsense"]).status.code(), Some(2));
    assert_eq!(
        gkflab(&["expect", "--domain", "torus"]).status.code(),
        Some(2)
    );
    assert_eq!(
        gkflab(&["validate", "ec", "--format", "xml", "--replicates", "2"])
            .status
            .code(),
        Some(2)
    );
}
