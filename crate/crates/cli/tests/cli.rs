//! End-to-end checks of the command-line surface.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psomdp"))
}

fn temp_path(name: &str) -> PathBuf {
    let mut path = std::env::temp_dir();
    path.push(format!("psomdp-cli-test-{}-{name}", std::process::id()));
    path
}

fn parse_solution(path: &PathBuf) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_methods_agree_and_embed_meta() {
    let out_naive = temp_path("naive.json");
    let out_bnb = temp_path("bnb.json");
    for (method, out) in [("naive", &out_naive), ("bnb", &out_bnb)] {
        let status = bin()
            .args([
                "solve",
                "--model",
                "builtin:benchmark_4x7",
                "--k",
                "3",
                "--method",
                method,
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = parse_solution(&out_naive);
    let b = parse_solution(&out_bnb);
    let va = a["values"].as_array().unwrap();
    let vb = b["values"].as_array().unwrap();
    assert_eq!(va.len(), vb.len());
    for (x, y) in va.iter().zip(vb.iter()) {
        assert!((x.as_f64().unwrap() - y.as_f64().unwrap()).abs() < 1e-6);
    }
    assert_eq!(a["meta"]["model_hash"], b["meta"]["model_hash"]);
    assert_eq!(a["meta"]["k"], 3);
    assert_eq!(a["meta"]["method"], "naive");
    assert_eq!(b["meta"]["method"], "bnb");
    assert!(b["stats"]["pruned_fraction"].as_f64().unwrap() > 0.0);
    fs::remove_file(out_naive).ok();
    fs::remove_file(out_bnb).ok();
}

#[test]
fn unit_period_methods_identical() {
    let mut values = Vec::new();
    for method in ["naive", "bnb"] {
        let out = temp_path(&format!("k1-{method}.json"));
        let status = bin()
            .args(["solve", "--model", "builtin:benchmark_4x7", "--k", "1", "--method", method, "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        values.push(fs::read_to_string(&out).unwrap());
        fs::remove_file(out).ok();
    }
    // Identical output apart from the method tag itself.
    let normalize = |text: &str| text.replace("\"bnb\"", "\"naive\"");
    let a: serde_json::Value = serde_json::from_str(&normalize(&values[0])).unwrap();
    let b: serde_json::Value = serde_json::from_str(&normalize(&values[1])).unwrap();
    assert_eq!(a["values"], b["values"]);
    assert_eq!(a["policy"], b["policy"]);
}

#[test]
fn missing_model_file_is_input_error() {
    let out = bin()
        .args(["solve", "--model", "/no/such/model.json", "--out", "/tmp/never.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/model.json"), "stderr: {stderr}");
}

#[test]
fn bounds_unit_stride_matches_omniscient_rows() {
    let csv_path = temp_path("bounds.csv");
    let status = bin()
        .args(["bounds", "--model", "builtin:benchmark_4x7", "--k", "2", "--upper-ell", "1", "--out"])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    fs::remove_file(&csv_path).ok();

    let mut upper_best: std::collections::HashMap<usize, f64> = Default::default();
    let mut omni: std::collections::HashMap<usize, f64> = Default::default();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 4 {
            continue;
        }
        let state: usize = fields[0].parse().unwrap();
        let value: f64 = fields[3].parse().unwrap();
        match fields[1] {
            "upper_prefix" => {
                let best = upper_best.entry(state).or_insert(f64::NEG_INFINITY);
                if value > *best {
                    *best = value;
                }
            }
            "omniscient" => {
                omni.insert(state, value);
            }
            _ => {}
        }
    }
    assert_eq!(upper_best.len(), omni.len());
    for (state, best) in upper_best {
        let o = omni[&state];
        assert!((best - o).abs() < 1e-9, "state {state}: {best} vs omniscient {o}");
    }
}

#[test]
fn bounds_sandwich_solved_values_row_wise() {
    let sol_path = temp_path("sandwich-sol.json");
    let status = bin()
        .args(["solve", "--model", "builtin:benchmark_4x7", "--k", "2", "--out"])
        .arg(&sol_path)
        .status()
        .unwrap();
    assert!(status.success());
    let values: Vec<f64> = parse_solution(&sol_path)["values"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    fs::remove_file(&sol_path).ok();

    let csv_path = temp_path("sandwich-bounds.csv");
    let status = bin()
        .args([
            "bounds",
            "--model",
            "builtin:benchmark_4x7",
            "--k",
            "2",
            "--upper-ell",
            "1",
            "--lower-tau",
            "1",
            "--out",
        ])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    fs::remove_file(&csv_path).ok();

    let mut upper_best = vec![f64::NEG_INFINITY; values.len()];
    let mut lower_state = vec![f64::INFINITY; values.len()];
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        let state: usize = fields[0].parse().unwrap();
        let value: f64 = fields[3].parse().unwrap();
        match fields[1] {
            "upper_prefix" if value > upper_best[state] => upper_best[state] = value,
            "lower_state" => lower_state[state] = value,
            _ => {}
        }
    }
    for (s, &u) in values.iter().enumerate() {
        assert!(lower_state[s] <= u + 1e-8, "state {s}: lower {} > U {u}", lower_state[s]);
        assert!(upper_best[s] >= u - 1e-8, "state {s}: upper {} < U {u}", upper_best[s]);
    }
}

#[test]
fn bounds_rejects_non_composable_set() {
    let out = bin()
        .args([
            "bounds",
            "--model",
            "builtin:benchmark_4x7",
            "--k",
            "4",
            "--upper-B",
            "3",
            "--out",
            "/tmp/never.csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains('3'), "stderr: {stderr}");
}

#[test]
fn bench_checksums_match_and_record_pruning() {
    let csv_path = temp_path("bench.csv");
    let status = bin()
        .args([
            "bench",
            "--model",
            "builtin:benchmark_4x7",
            "--k-list",
            "2,3",
            "--repeats",
            "1",
            "--out",
        ])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    fs::remove_file(&csv_path).ok();

    let mut checksums: std::collections::HashMap<String, Vec<(String, String)>> = Default::default();
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        assert_eq!(fields.len(), 9, "row: {line}");
        assert_eq!(fields[8], "ok");
        if fields[1] == "naive" {
            assert_eq!(fields[6], "0.0", "naive rows report no pruning");
        }
        checksums
            .entry(fields[0].to_string())
            .or_default()
            .push((fields[1].to_string(), fields[7].to_string()));
    }
    for (k, rows) in checksums {
        let first = &rows[0].1;
        assert!(rows.iter().all(|(_, sum)| sum == first), "k={k}: checksums differ: {rows:?}");
    }
}

#[test]
fn render_csv_covers_every_cell() {
    let sol_path = temp_path("render-sol.json");
    let status = bin()
        .args(["solve", "--model", "builtin:benchmark_4x7", "--out"])
        .arg(&sol_path)
        .status()
        .unwrap();
    assert!(status.success());

    let csv_path = temp_path("render.csv");
    let status = bin()
        .args(["render", "--solution"])
        .arg(&sol_path)
        .args(["--grid", "builtin:benchmark_4x7", "--format", "csv", "--out"])
        .arg(&csv_path)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 7, "header plus one row per cell");

    // Obstacle rows keep empty value/action fields.
    let obstacle_row = text.lines().find(|l| l.starts_with("1,3,")).unwrap();
    assert_eq!(obstacle_row.trim_end(), "1,3,,");

    let ascii = bin()
        .args(["render", "--solution"])
        .arg(&sol_path)
        .args(["--grid", "builtin:benchmark_4x7", "--format", "ascii"])
        .output()
        .unwrap();
    assert!(ascii.status.success());
    let art = String::from_utf8_lossy(&ascii.stdout);
    assert!(art.contains('#') && art.contains('$'), "ascii output:\n{art}");
    // Cells left of the terminal column head straight for it.
    let row2: Vec<char> = art.lines().nth(2).unwrap().chars().collect();
    assert_eq!(row2[6], '$');
    assert_eq!(row2[4], '→');
    assert_eq!(row2[5], '→');

    // Mismatched grid is an input error.
    let out = bin()
        .args(["render", "--solution"])
        .arg(&sol_path)
        .args(["--grid", "builtin:benchmark_6x11", "--format", "ascii"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    fs::remove_file(sol_path).ok();
    fs::remove_file(csv_path).ok();
}

#[test]
fn counterexample_gamma_zero_still_reports() {
    // Degenerate discount: the run stays well-formed; whether a witness
    // exists at gamma = 0 is not asserted, only the exit-code contract.
    let out = bin().args(["counterexample", "--gamma", "0.0"]).output().unwrap();
    let code = out.status.code();
    assert!(code == Some(0) || code == Some(3), "unexpected exit {code:?}");
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("per-cell value difference"), "stdout: {stdout}");
}
