use std::process::{Command, Output};

use ifdma_core::cli::{AllocReport, MapRow};

fn ifdma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifdma"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn subcarrier_column(text: &str) -> Vec<usize> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim_start().starts_with("bin"))
        .map(|l| l.split_whitespace().last().unwrap().parse().unwrap())
        .collect()
}

#[test]
fn map_power_of_two_table() {
    let o = ifdma(&["map", "--m", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(subcarrier_column(&text), vec![0, 4, 2, 6, 1, 5, 3, 7]);
    assert!(text.contains("     3       011       110           6"));
}

#[test]
fn map_composite_table() {
    let o = ifdma(&["map", "--radices", "2,2,3", "--json"]);
    assert!(o.status.success());
    let rows: Vec<MapRow> = serde_json::from_slice(&o.stdout).unwrap();
    let expected = [
        ("000", "000", 0), ("001", "100", 4), ("002", "200", 8), ("010", "010", 2),
        ("011", "110", 6), ("012", "210", 10), ("100", "001", 1), ("101", "101", 5),
        ("102", "201", 9), ("110", "011", 3), ("111", "111", 7), ("112", "211", 11),
    ];
    assert_eq!(rows.len(), 12);
    for (row, (d, r, s)) in rows.iter().zip(expected) {
        assert_eq!((row.digits.as_str(), row.reversed.as_str(), row.subcarrier), (d, r, s));
    }
}

#[test]
fn map_single_bit() {
    let text = stdout(&ifdma(&["map", "--m", "1"]));
    assert_eq!(subcarrier_column(&text), vec![0, 1]);
}

#[test]
fn map_json_round_trips() {
    for args in [&["map", "--m", "4", "--json"][..], &["map", "--radices", "3,2,5", "--json"]] {
        let o = ifdma(args);
        let rows: Vec<MapRow> = serde_json::from_slice(&o.stdout).unwrap();
        let again = serde_json::to_string_pretty(&rows).unwrap() + "\n";
        assert_eq!(again.as_bytes(), &o.stdout[..]);
    }
}

#[test]
fn bad_radices_exit_2() {
    assert_eq!(ifdma(&["map", "--radices", "2,1"]).status.code(), Some(2));
    assert_eq!(ifdma(&["map", "--radices", "two"]).status.code(), Some(2));
    assert_eq!(ifdma(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn alloc_sort_first_example() {
    let o = ifdma(&["alloc", "--m", "3", "--requests", "A:1,B:4,C:2", "--policy", "sort-first"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for line in ["B:{0,2,4,6}", "C:{1,5}", "A:{3}"] {
        assert!(text.lines().any(|l| l.starts_with(line)), "{line} missing in\n{text}");
    }
}

#[test]
fn alloc_composite_example() {
    let o = ifdma(&["alloc", "--radices", "2,2,3", "--requests", "A:3,B:1,C:6", "--json"]);
    assert!(o.status.success());
    let report: AllocReport = serde_json::from_slice(&o.stdout).unwrap();
    let got: Vec<(&str, Vec<usize>)> = report
        .allocations
        .iter()
        .map(|r| (r.name.as_str(), r.subcarriers.clone()))
        .collect();
    assert_eq!(
        got,
        vec![
            ("C", vec![0, 2, 4, 6, 8, 10]),
            ("A", vec![1, 5, 9]),
            ("B", vec![3]),
        ]
    );
    let again = serde_json::to_string_pretty(&report).unwrap() + "\n";
    assert_eq!(again.as_bytes(), &o.stdout[..]);
}

#[test]
fn alloc_full_band_with_dc_is_infeasible() {
    let o = ifdma(&["alloc", "--m", "3", "--requests", "X:8", "--dc", "4"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn alloc_dc_breaks_sort_first_but_not_min_small_change() {
    let sort = ifdma(&["alloc", "--m", "3", "--requests", "A:1,B:4,C:2", "--dc", "4"]);
    assert_eq!(sort.status.code(), Some(3));
    let min = ifdma(&[
        "alloc", "--m", "3", "--requests", "A:1,B:4,C:2", "--dc", "4", "--policy", "min-small-change", "--json",
    ]);
    assert!(min.status.success());
    let report: AllocReport = serde_json::from_slice(&min.stdout).unwrap();
    assert_eq!(report.dc_bin, Some(1));
    assert!(report.allocations.iter().all(|r| !r.subcarriers.contains(&4)));
}

#[test]
fn alloc_requests_file_matches_inline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reqs.json");
    std::fs::write(&path, r#"[{"name":"A","size":1},{"name":"B","size":4},{"name":"C","size":2}]"#).unwrap();
    let file = ifdma(&["alloc", "--m", "3", "--requests-file", path.to_str().unwrap()]);
    let inline = ifdma(&["alloc", "--m", "3", "--requests", "A:1,B:4,C:2"]);
    assert!(file.status.success());
    assert_eq!(file.stdout, inline.stdout);
}

#[test]
fn alloc_multistream_serves_any_size() {
    let o = ifdma(&["alloc", "--m", "3", "--requests", "A:3,B:5", "--multistream", "--json"]);
    assert!(o.status.success());
    let report: AllocReport = serde_json::from_slice(&o.stdout).unwrap();
    let mut all: Vec<usize> = report.allocations.iter().flat_map(|r| r.subcarriers.clone()).collect();
    all.sort();
    assert_eq!(all, (0..8).collect::<Vec<_>>());
}

#[test]
fn states_examples() {
    let fine = stdout(&ifdma(&["states", "--m", "2", "--mode", "fine"]));
    assert!(fine.contains("enumerated 26 AGREE"), "{fine}");
    let sup = stdout(&ifdma(&["states", "--m", "2", "--mode", "super"]));
    assert!(sup.contains("enumerated 11 AGREE"), "{sup}");
    let zero = stdout(&ifdma(&["states", "--m", "0", "--mode", "fine"]));
    assert!(zero.contains("f(0) = 2"));
    let big = stdout(&ifdma(&["states", "--m", "5", "--mode", "fine"]));
    assert!(big.contains("recurrence only"));
}

#[test]
fn wave_examples() {
    let o = ifdma(&["wave", "--N", "4", "--M", "16", "--d", "3", "--check", "equiv"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("PASS"));
    let o = ifdma(&["wave", "--N", "8", "--M", "8", "--d", "0"]);
    assert!(o.status.success());
    let o = ifdma(&["wave", "--N", "2", "--M", "16", "--psk", "--check", "envelope"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("envelope: max spread"));
    assert_eq!(ifdma(&["wave", "--N", "3", "--M", "16"]).status.code(), Some(2));
    assert_eq!(ifdma(&["wave", "--N", "4", "--M", "16", "--d", "4"]).status.code(), Some(2));
}

#[test]
fn wave_prints_default_seed() {
    let o = ifdma(&["wave", "--N", "2", "--M", "4"]);
    assert!(stdout(&o).starts_with("seed 1\n"));
}

#[test]
fn sim_zero_rate_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"m":4,"loads":[0.0,0.5],"policies":["min","ofdma"],"sim_time":200.0,"warmup_time":20.0,"replications":3}"#,
    )
    .unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = ifdma(&["sim", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let zero: Vec<&str> = text.lines().filter(|l| l.starts_with("min,full,0,")).collect();
    assert_eq!(zero, vec!["min,full,0,0.000000,0.000000,0.000000,0.000000,1.000000,1,3"]);
}

#[test]
fn sim_bad_config_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let missing = ifdma(&["sim", "--config", "/nonexistent.json", "--output", out.to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"loads":[0.5,0.1]}"#).unwrap();
    let bad = ifdma(&["sim", "--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}
