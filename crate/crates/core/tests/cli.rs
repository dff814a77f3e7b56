use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use entchan::trec::{self, RunKind};

fn entchan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entchan"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path, seed: &str) {
    let out = entchan(&[
        "synth",
        "--out-dir",
        dir.to_str().unwrap(),
        "--seed",
        seed,
        "--num-queries",
        "12",
        "--pool-size",
        "60",
        "--num-rel",
        "8",
        "--unjudged-rate",
        "0.2",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn inputs(dir: &Path) -> Vec<String> {
    vec![
        "--qrels".into(),
        dir.join("qrels.txt").display().to_string(),
        "--pool".into(),
        dir.join("pool.run").display().to_string(),
        "--links".into(),
        dir.join("links.jsonl").display().to_string(),
    ]
}

fn run_with(dir: &Path, sub: &[&str]) -> Output {
    let mut args: Vec<String> = sub.iter().map(|s| s.to_string()).collect();
    args.extend(inputs(dir));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    entchan(&refs)
}

#[test]
fn synth_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(a.path(), "7");
    synth(b.path(), "7");
    for f in ["qrels.txt", "pool.run", "links.jsonl", "truth.json", "planted.run", "mixed.run"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn canonical_files_round_trip() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "3");
    let qrels_text = fs::read_to_string(d.path().join("qrels.txt")).unwrap();
    let qrels = trec::read_qrels(d.path().join("qrels.txt")).unwrap();
    assert_eq!(trec::render_qrels(&qrels), qrels_text);

    let run_text = fs::read_to_string(d.path().join("pool.run")).unwrap();
    let run = trec::read_run(d.path().join("pool.run"), RunKind::Doc, false).unwrap();
    assert_eq!(trec::render_run(&run), run_text);

    let links_text = fs::read_to_string(d.path().join("links.jsonl")).unwrap();
    let links = trec::read_entity_links(d.path().join("links.jsonl")).unwrap();
    assert_eq!(trec::render_entity_links(&links), links_text);
}

#[test]
fn every_subcommand_runs_on_synthetic_data() {
    let d = tempfile::tempdir().unwrap();
    let p = |f: &str| d.path().join(f).display().to_string();
    synth(d.path(), "11");
    let planted = p("planted.run");
    let mixed = p("mixed.run");
    let cons = p("cons.run");
    let steps: Vec<Vec<String>> = vec![
        vec!["index-check".into()],
        vec!["consensus".into(), "-o".into(), cons.clone()],
        vec!["coverage".into(), "--entity-run".into(), mixed.clone(), "-o".into(), p("cov_mixed.tsv")],
        vec!["coverage".into(), "--entity-run".into(), planted.clone(), "-o".into(), p("cov_planted.tsv")],
        vec!["coverage".into(), "--entity-run".into(), cons.clone(), "-o".into(), p("cov_cons.tsv")],
        vec!["coverage".into(), "--measure".into(), "oracle".into()],
        vec!["coverage".into(), "--measure".into(), "observable".into(), "--entity-run".into(), mixed.clone()],
        vec!["oer".into(), "--format".into(), "json".into()],
        vec!["rates".into(), "--entity-run".into(), mixed.clone()],
        vec!["derive-qrels".into()],
        vec!["partition-stats".into()],
        vec!["idf-rescale".into(), "--entity-run".into(), cons.clone()],
        vec!["oer-filter".into(), "--entity-run".into(), mixed.clone(), "--threshold".into(), "0.5".into()],
        vec!["rerank".into(), "--entity-run".into(), planted.clone(), "-o".into(), p("rerank.run")],
        vec!["eval".into(), "--doc-run".into(), p("rerank.run"), "-o".into(), p("ev_open.tsv")],
        vec![
            "eval".into(),
            "--mode".into(),
            "conditional".into(),
            "--entity-run".into(),
            planted.clone(),
            "--doc-run".into(),
            p("rerank.run"),
            "-o".into(),
            p("ev_cond.tsv"),
        ],
        vec!["eval".into(), "-o".into(), p("ev_pool.tsv")],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let out = run_with(d.path(), &args);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
    }

    let analysis: Vec<Vec<String>> = vec![
        vec!["frontier".into(), p("cov_mixed.tsv"), p("cov_planted.tsv"), p("cov_cons.tsv")],
        vec!["correlate".into(), p("cov_mixed.tsv"), p("cov_planted.tsv"), p("cov_cons.tsv")],
        vec![
            "correlate".into(),
            "--x".into(),
            format!("{}:relcov", p("cov_mixed.tsv")),
            "--y".into(),
            format!("{}:nonrelcov", p("cov_mixed.tsv")),
            "--method".into(),
            "spearman".into(),
        ],
        vec!["stratify".into(), "--values".into(), format!("{}:relcov", p("cov_planted.tsv"))],
        vec![
            "regress".into(),
            "--y".into(),
            format!("{}:map", p("ev_open.tsv")),
            "--y-minus".into(),
            format!("{}:map", p("ev_pool.tsv")),
            "--coverage".into(),
            format!("{}:relcov", p("cov_planted.tsv")),
            "--control".into(),
            format!("{}:map", p("ev_pool.tsv")),
        ],
        vec![
            "breakpoint".into(),
            "--y".into(),
            format!("{}:map", p("ev_open.tsv")),
            "--coverage".into(),
            format!("{}:relcov", p("cov_planted.tsv")),
            "--min-side".into(),
            "3".into(),
        ],
    ];
    for step in &analysis {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let out = entchan(&args);
        assert!(out.status.success(), "{step:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stdout.is_empty());
    }

    let frontier = String::from_utf8(entchan(&analysis[0].iter().map(String::as_str).collect::<Vec<_>>()).stdout).unwrap();
    assert!(frontier.starts_with("run_id\trelcov\tnonrelcov\ton_frontier\n"));
    assert!(frontier.lines().any(|l| l.starts_with("cov_planted\t") && l.ends_with("true")));
}

#[test]
fn exit_code_matrix() {
    let d = tempfile::tempdir().unwrap();
    synth(d.path(), "5");
    let bad = |name: &str, text: &str| {
        let path = d.path().join(name);
        fs::write(&path, text).unwrap();
        path.display().to_string()
    };
    let qrels = d.path().join("qrels.txt").display().to_string();
    let pool = d.path().join("pool.run").display().to_string();
    let links = d.path().join("links.jsonl").display().to_string();

    // (args, expected exit, expected stderr fragment)
    let cases: Vec<(Vec<String>, i32, &str)> = vec![
        (vec!["--no-such-flag".into()], 1, ""),
        (vec!["frobnicate".into()], 1, ""),
        (vec!["coverage".into()], 1, "--qrels"),
        (
            vec!["coverage".into(), "--qrels".into(), qrels.clone(), "--pool".into(), pool.clone(), "--links".into(), links.clone()],
            1,
            "--entity-run",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                bad("q3.txt", "301 0 D1 1\n301 0 D2\n"),
                "--pool".into(),
                pool.clone(),
                "--links".into(),
                links.clone(),
            ],
            2,
            "q3.txt:2:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                bad("qneg.txt", "301 0 D1 1\n\n301 0 D2 -1\n"),
                "--pool".into(),
                pool.clone(),
                "--links".into(),
                links.clone(),
            ],
            2,
            "qneg.txt:3:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                bad("qdup.txt", "301 0 D1 1\n301 0 D1 0\n"),
                "--pool".into(),
                pool.clone(),
                "--links".into(),
                links.clone(),
            ],
            2,
            "qdup.txt:2:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                qrels.clone(),
                "--pool".into(),
                bad("p.run", "301 Q0 D1 1 5.0 x\n301 Q0 D2 2 7.5 x\n"),
                "--links".into(),
                links.clone(),
            ],
            2,
            "p.run:2:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                qrels.clone(),
                "--pool".into(),
                bad("pnan.run", "301 Q0 D1 1 NaN x\n"),
                "--links".into(),
                links.clone(),
            ],
            2,
            "pnan.run:1:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                qrels.clone(),
                "--pool".into(),
                pool.clone(),
                "--links".into(),
                bad("l.jsonl", "{\"doc_id\":\"a\",\"entities\":[]}\n{\"doc_id\":\"b\",\"entities\":[{\"entity_id\":\"e\",\"rho\":1.5}]}\n"),
            ],
            2,
            "l.jsonl:2:",
        ),
        (
            vec![
                "index-check".into(),
                "--qrels".into(),
                qrels.clone(),
                "--pool".into(),
                pool.clone(),
                "--links".into(),
                bad("lbad.jsonl", "{\"doc_id\":\"a\",\"entities\":[]}\nnot json\n"),
            ],
            2,
            "lbad.jsonl:2:",
        ),
        (
            vec!["index-check".into(), "--qrels".into(), "/nonexistent/qrels".into(), "--pool".into(), pool.clone(), "--links".into(), links.clone()],
            2,
            "/nonexistent/qrels",
        ),
        (
            vec!["frontier".into(), bad("cov.tsv", "qid\tk\trelcov\tnonrelcov\n301\t20\t0.5\n")],
            2,
            "cov.tsv:2:",
        ),
    ];
    for (args, code, fragment) in cases {
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = entchan(&refs);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(code), "{args:?}: {stderr}");
        assert!(stderr.contains(fragment), "{args:?}: {stderr}");
    }
}

#[test]
fn env_overrides_flags() {
    let out = Command::new(env!("CARGO_BIN_EXE_entchan"))
        .args(["oer", "--show-config"])
        .env("ENTCHAN_ALPHA", "0.5")
        .env("ENTCHAN_K", "5,15")
        .output()
        .unwrap();
    assert!(out.status.success());
    let cfg: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["global"]["alpha"], 0.5);
    assert_eq!(cfg["global"]["k"], serde_json::json!([5, 15]));
    assert_eq!(cfg["global"]["tau_support"], 3.0);
}

#[test]
fn help_exits_zero() {
    assert_eq!(entchan(&["--help"]).status.code(), Some(0));
    assert_eq!(entchan(&["eval", "--help"]).status.code(), Some(0));
}
