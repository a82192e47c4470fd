use std::path::Path;
use std::process::{Command, Output};

fn lsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsa-reid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn gen_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tmp");
    let out = lsa(&[
        "gen",
        "--ids",
        "4",
        "--per-id",
        "2",
        "--k",
        "8",
        "--d",
        "8",
        "--seed",
        "1",
        "--out",
        s(&data),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report = dir.path().join("r.json");
    let q = data.join("q");
    let g = data.join("g");
    let out = lsa(&[
        "eval",
        "--query",
        s(&q),
        "--gallery",
        s(&g),
        "--metric",
        "lsa",
        "--window",
        "4",
        "--out",
        s(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = read_json(&report);
    let map = r["map"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&map));
    assert_eq!(r["metric"], "lsa");
    assert_eq!(r["window"], 4);
    assert_eq!(r["n_query"], 4);
    assert_eq!(r["n_gallery"], 4);
    for key in ["rank1", "rank5", "rank10"] {
        assert!(r[key].is_f64());
    }
}

#[test]
fn mismatched_stripe_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(lsa(&[
        "gen",
        "--ids",
        "4",
        "--k",
        "8",
        "--d",
        "4",
        "--seed",
        "1",
        "--out",
        s(&a)
    ])
    .status
    .success());
    assert!(lsa(&[
        "gen",
        "--ids",
        "4",
        "--k",
        "4",
        "--d",
        "4",
        "--seed",
        "1",
        "--out",
        s(&b)
    ])
    .status
    .success());
    let report = dir.path().join("r.json");
    let out = lsa(&[
        "eval",
        "--query",
        s(&a.join("q")),
        "--gallery",
        s(&b.join("g")),
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("conform"));
    assert!(!report.exists());
}

#[test]
fn window_sweep_on_corrupted_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bench");
    let out = lsa(&[
        "gen",
        "--ids",
        "20",
        "--per-id",
        "4",
        "--shift-prob",
        "0.8",
        "--noise",
        "0.05",
        "--max-shift",
        "2",
        "--occl-prob",
        "0.2",
        "--corrupt",
        "erase",
        "--seed",
        "9",
        "--out",
        s(&data),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = dir.path().join("sweep.csv");
    let out = lsa(&[
        "sweep",
        "--query",
        s(&data.join("q")),
        "--gallery",
        s(&data.join("g")),
        "--param",
        "window",
        "--values",
        "1,2,4",
        "--out",
        s(&csv),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,rank1,rank5,rank10,map"));
    let rank1: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(rank1.len(), 3);
    assert!(rank1.windows(2).all(|w| w[0] <= w[1]), "{rank1:?}");
}

#[test]
fn unknown_subcommand() {
    let out = lsa(&["train"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());
}

#[test]
fn help_and_version() {
    let out = lsa(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["gen", "dist", "eval", "sweep", "loss-check"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(lsa(&["--version"]).status.success());
}

#[test]
fn gen_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = lsa(&["gen", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_input_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("nope");
    let out = lsa(&[
        "dist",
        "--query",
        s(&nowhere),
        "--gallery",
        s(&nowhere),
        "--out",
        s(&dir.path().join("d.bin")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dist_output_layout_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(lsa(&[
        "gen",
        "--ids",
        "5",
        "--per-id",
        "3",
        "--seed",
        "4",
        "--out",
        s(&data)
    ])
    .status
    .success());
    let run = |name: &str, threads: &str| {
        let out_path = dir.path().join(name);
        let out = lsa(&[
            "dist",
            "--query",
            s(&data.join("q")),
            "--gallery",
            s(&data.join("g")),
            "--metric",
            "combined",
            "--threads",
            threads,
            "--out",
            s(&out_path),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        std::fs::read(&out_path).unwrap()
    };
    let a = run("a.bin", "1");
    let b = run("b.bin", "4");
    assert_eq!(a, b);
    assert_eq!(a.len(), 5 * 10 * 8);
    let side = read_json(&dir.path().join("a.bin.json"));
    assert_eq!(side["n_query"], 5);
    assert_eq!(side["n_gallery"], 10);
    assert_eq!(side["metric"], "combined");
    let first = f64::from_le_bytes(a[..8].try_into().unwrap());
    assert!(first.is_finite() && first >= 0.0);
}

#[test]
fn gen_is_bitwise_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x", "y"] {
        let p = dir.path().join(name);
        assert!(lsa(&[
            "gen",
            "--ids",
            "6",
            "--shift-prob",
            "0.7",
            "--occl-prob",
            "0.3",
            "--seed",
            "12",
            "--out",
            s(&p)
        ])
        .status
        .success());
    }
    for sub in ["q", "g"] {
        for file in ["manifest.json", "local.bin", "global.bin"] {
            let a = std::fs::read(dir.path().join("x").join(sub).join(file)).unwrap();
            let b = std::fs::read(dir.path().join("y").join(sub).join(file)).unwrap();
            assert_eq!(a, b, "{sub}/{file}");
        }
    }
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(
        lsa(&["gen", "--ids", "6", "--seed", "2", "--out", s(&data)])
            .status
            .success()
    );
    let conf = dir.path().join("conf.json");
    std::fs::write(&conf, r#"{"metric": "hard", "window": 2}"#).unwrap();
    let report = dir.path().join("r.json");
    let (q, g) = (data.join("q"), data.join("g"));
    let base = [
        "eval",
        "--config",
        s(&conf),
        "--query",
        s(&q),
        "--gallery",
        s(&g),
        "--out",
        s(&report),
    ];
    assert!(lsa(&base).status.success());
    let r = read_json(&report);
    assert_eq!(
        (r["metric"].as_str(), r["window"].as_u64()),
        (Some("hard"), Some(2))
    );

    let mut with_flag = base.to_vec();
    with_flag.extend(["--window", "4"]);
    assert!(lsa(&with_flag).status.success());
    assert_eq!(read_json(&report)["window"], 4);
}

#[test]
fn eval_with_rerank() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert!(lsa(&[
        "gen",
        "--ids",
        "10",
        "--per-id",
        "4",
        "--seed",
        "3",
        "--out",
        s(&data)
    ])
    .status
    .success());
    let report = dir.path().join("r.json");
    let out = lsa(&[
        "eval",
        "--query",
        s(&data.join("q")),
        "--gallery",
        s(&data.join("g")),
        "--rerank",
        "--k1",
        "6",
        "--k2",
        "3",
        "--lambda",
        "0.3",
        "--out",
        s(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(read_json(&report)["rerank"], true);

    // k1 must stay below the gallery size (30 here)
    let out = lsa(&[
        "eval",
        "--query",
        s(&data.join("q")),
        "--gallery",
        s(&data.join("g")),
        "--rerank",
        "--k1",
        "40",
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn loss_check_table() {
    let out = lsa(&["loss-check", "--seed", "0", "--seeds", "3"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with(" pass")).count(), 9);
    assert!(text.contains("all passed"));
    assert_eq!(lsa(&["loss-check"]).status.code(), Some(1));
}
