use std::path::Path;
use std::process::{Command, Output};

use voradv::config::{parse_pairs, ExperimentConfig};
use voradv::data::read_dataset;
use voradv::theory::{gap_rows, CoverageRow, TheoryReport};
use voradv::{checkpoint, CliError};

fn voradv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_voradv")).args(args).output().expect("spawn voradv")
}

fn ok(args: &[&str]) -> Output {
    let out = voradv(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const SMALL_RUN: &[&str] = &[
    "--kind", "circles", "--codim", "2", "--n-per-class", "60", "--n-test-per-class", "40",
    "--retrainings", "2", "--epochs", "4", "--eps-points", "6",
];

#[test]
fn gen_data_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["gen-data", "--kind", "circles", "--codim", "498", "--n-per-class", "1000", "--n-test-per-class", "5", "--out", s(out)]);
    }
    let name = "circles_codim498_train.csv";
    assert_eq!(read(&a.join(name)), read(&b.join(name)));
    let text = String::from_utf8(read(&a.join(name))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 501);
    assert_eq!(lines.count(), 2000);

    ok(&["gen-data", "--kind", "planes", "--codim", "1", "--cover", "1.0", "--out", s(&a)]);
    let train = read_dataset(&a.join("planes_codim1_train.csv")).unwrap();
    assert_eq!((train.len(), train.dim()), (450, 3));
}

#[test]
fn rerun_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let mut args = vec!["run", "--out", s(&out)];
        args.extend_from_slice(SMALL_RUN);
        ok(&args);
        outs.push(out);
    }
    for f in ["aggregate.csv", "curves.csv", "checkpoints/model_000.mrlm", "checkpoints/model_001.mrlm"] {
        assert_eq!(read(&outs[0].join(f)), read(&outs[1].join(f)), "{f}");
    }

    // The echoed config alone reproduces the run.
    let again = dir.path().join("r3");
    let cfg = outs[0].join("config.txt");
    ok(&["run", "--config", s(&cfg), "--out", s(&again)]);
    assert_eq!(read(&outs[0].join("aggregate.csv")), read(&again.join("aggregate.csv")));

    let m = checkpoint::load(&outs[0].join("checkpoints/model_001.mrlm")).unwrap();
    assert_eq!((m.dims().d_in, m.dims().hidden, m.dims().n_classes), (4, 100, 2));
}

#[test]
fn config_echo_round_trips() {
    let cfg = voradv::config::load(None, &["--mode".into(), "voronoi".into(), "--codim".into(), "1,10".into(), "--lr".into(), "0.003".into()]).unwrap();
    let back = ExperimentConfig::from_map(&parse_pairs(&cfg.echo()).unwrap()).unwrap();
    assert_eq!(back, cfg);
}

#[test]
fn eval_reproduces_the_run_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let mut args = vec!["run", "--out", s(&out)];
    args.extend_from_slice(SMALL_RUN);
    ok(&args);
    ok(&["eval", "--run-dir", s(&out)]);
    assert_eq!(read(&out.join("aggregate.csv")), read(&out.join("eval/aggregate.csv")));
    ok(&["eval", "--run-dir", s(&out), "--attacks", "fgsm", "--out", s(&dir.path().join("e"))]);
    let text = String::from_utf8(read(&dir.path().join("e/curves.csv"))).unwrap();
    assert!(text.lines().skip(1).all(|l| !l.contains(",bim,")));
}

#[test]
fn sweep_writes_one_directory_per_codim() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    ok(&["run", "--out", s(&out), "--kind", "circles", "--codim", "1,3", "--n-per-class", "30", "--n-test-per-class", "20", "--retrainings", "1", "--epochs", "2", "--eps-points", "3"]);
    let sweep = String::from_utf8(read(&out.join("sweep.csv"))).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(out.join("codim_1/aggregate.csv").exists() && out.join("codim_3/aggregate.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    assert_eq!(voradv(&["run", "--no-such-key", "1"]).status.code(), Some(2));
    assert_eq!(voradv(&["run", "--epochs", "many"]).status.code(), Some(2));
    assert_eq!(voradv(&["run", "--train", "/definitely/missing.csv", "--test", "/x.csv"]).status.code(), Some(2));
    assert_eq!(voradv(&["run", "--mode", "natural", "--train-attack", "pgd", "--out", out]).status.code(), Some(2));
    assert_eq!(voradv(&["gen-data", "--kind", "planes", "--codim", "0", "--out", out]).status.code(), Some(2));

    let cfg = dir.path().join("bad.txt");
    std::fs::write(&cfg, "seed = 1\nseed = 2\n").unwrap();
    assert_eq!(voradv(&["run", "--config", s(&cfg)]).status.code(), Some(2));

    let bogus = TheoryReport {
        certification: vec![],
        gap: vec![],
        coverage: vec![CoverageRow { d: 3, k: 2, epsilon: 0.5, n: 450, bound: 0.1, mc_estimate: 0.2, mc_stderr: 0.01 }],
    };
    let err = bogus.check().unwrap_err();
    assert!(matches!(err, CliError::Invariant(_)));
    assert_eq!(err.exit_code(), 3);
}

fn idx_pair(dir: &Path, labels: &[u8]) -> (String, String) {
    let n = labels.len() as u32;
    let mut im = Vec::new();
    for v in [0x803u32, n, 2, 2] {
        im.extend_from_slice(&v.to_be_bytes());
    }
    im.extend((0..n * 4).map(|i| (i * 37 % 256) as u8));
    let mut lb = Vec::new();
    for v in [0x801u32, n] {
        lb.extend_from_slice(&v.to_be_bytes());
    }
    lb.extend_from_slice(labels);
    let (ip, lp) = (dir.join("im.idx"), dir.join("lb.idx"));
    std::fs::write(&ip, im).unwrap();
    std::fs::write(&lp, lb).unwrap();
    (ip.display().to_string(), lp.display().to_string())
}

#[test]
fn ingest_writes_a_stratified_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let labels: Vec<u8> = (0..200).map(|i| (i % 10) as u8).collect();
    let (im, lb) = idx_pair(dir.path(), &labels);
    let out = dir.path().join("o");
    ok(&["ingest-idx", "--images", &im, "--labels", &lb, "--subset-n", "25", "--role", "test", "--out", s(&out)]);
    let ds = read_dataset(&out.join("ingested_test.csv")).unwrap();
    assert_eq!((ds.len(), ds.dim()), (25, 4));
    assert!(ds.spec.is_none());
    let mut counts = [0usize; 10];
    for &l in &ds.labels {
        counts[l as usize - 1] += 1;
    }
    assert!(counts.iter().all(|&c| c == 2 || c == 3), "{counts:?}");
    assert!(ds.points.rows().flatten().all(|&x| (0.0..=1.0).contains(&x)));

    // Ingested data trains and evaluates like any other file pair.
    ok(&["ingest-idx", "--images", &im, "--labels", &lb, "--subset-n", "100", "--seed", "3", "--out", s(&out)]);
    let run = dir.path().join("run");
    let train = out.join("ingested_train.csv").display().to_string();
    let test = out.join("ingested_test.csv").display().to_string();
    ok(&["run", "--train", &train, "--test", &test, "--retrainings", "1", "--epochs", "2", "--eps-points", "3", "--out", s(&run)]);
    assert!(String::from_utf8(read(&run.join("config.txt"))).unwrap().contains("train = "));

    let swapped = voradv(&["ingest-idx", "--images", &lb, "--labels", &im, "--out", s(&out)]);
    assert_eq!(swapped.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&swapped.stderr).contains("magic"));
}

#[test]
fn theory_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["theory", "--mc-points", "2000", "--coverage-codims", "2,10,100,500", "--out", s(dir.path())]);
    let text = String::from_utf8(read(&dir.path().join("theory.csv"))).unwrap();
    assert!(text.contains("# certification") && text.contains("# gap") && text.contains("# coverage"));
    let bounds: Vec<f64> = text
        .split("# coverage")
        .nth(1)
        .unwrap()
        .lines()
        .skip(2)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(bounds.len(), 4);
    assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");

    let row = gap_rows(&[2], &[0.0]).unwrap().remove(0);
    assert_eq!((row.delta_nn, row.delta_ball, row.ratio_lower), (2.0, 1.0, 4.0));

    let certs = voradv::theory::certification_rows(&[0.45]).unwrap();
    let one = &certs[0];
    assert!((one.delta - 1.0102).abs() < 5e-5, "{}", one.delta);
    assert!(one.nn_ok && !one.ball_ok);
}
