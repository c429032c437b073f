use gwprune::{OffspringLaw, RealTree};
use std::process::{Command, Output};

fn gwprune(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwprune")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn domain_family_binary_example() {
    let o = gwprune(&["transform", "domain_family", "mechanism=u^2", "n=100"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with("# gamma = 2.0000000000000000e2\n"), "{text}");
    let law = OffspringLaw::from_text(&text).unwrap();
    assert_eq!(law.p(0), 0.5);
    assert_eq!(law.p(2), 0.5);
    assert_eq!(law.max_index(), 2);
}

#[test]
fn transform_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = gwprune(&["--out", d, "transform", "erase_discrete", "xi=[0.4, 0.3, 0.2, 0.1]", "h=2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let xi = OffspringLaw::from_text(&std::fs::read_to_string(dir.path().join("xi.law")).unwrap()).unwrap();
    let xi0 = OffspringLaw::new(vec![0.4, 0.3, 0.2, 0.1], "x").unwrap();
    let (want, _) = gwprune::offspring::erase_discrete(&xi0, &OffspringLaw::dirac(1), 2).unwrap();
    for k in 0..=want.max_index() {
        assert_eq!(xi.p(k), want.p(k));
    }

    for op in [
        vec!["pruned_law", "xi=binary", "theta=0.5"],
        vec!["erased_prune_law_discrete", "xi=binary", "h=1", "theta=0.5"],
        vec!["erased_law", "mechanism=u^2", "h=1"],
        vec!["ad_prune_law", "mechanism=u^1.5", "h=1"],
    ] {
        let mut args = vec!["--out", d, "transform"];
        args.extend(op.iter());
        let o = gwprune(&args);
        assert_eq!(o.status.code(), Some(0), "{op:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bundle = std::fs::read_to_string(dir.path().join("bundle.csv")).unwrap();
    assert!(bundle.starts_with("theta,hbar1,H2,H3,H4\n"));
}

#[test]
fn sample_reload_reproduces_functionals() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = gwprune(&["--out", d, "--seed", "7", "sample", "xi=binary", "count=5", "max_height=6"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    for (i, line) in summary.lines().skip(1).enumerate() {
        let text = std::fs::read_to_string(dir.path().join(format!("tree_{i:04}.txt"))).unwrap();
        assert!(text.starts_with("# seed=7 generator=ChaCha8Rng param_hash="));
        let t = RealTree::from_text(&text).unwrap();
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[1].parse::<usize>().unwrap(), t.node_count());
        assert_eq!(f[2].parse::<f64>().unwrap(), t.gamma());
        assert_eq!(f[3].parse::<f64>().unwrap(), t.total_length());
        assert_eq!(RealTree::from_text(&t.to_text()).unwrap().to_text(), t.to_text());
    }
}

#[test]
fn prune_writes_marks_and_cuts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = gwprune(&["--out", d, "prune", "xi=binary", "max_height=5", "regime=edges", "thetas=[0.1, 0.5, 2.0]"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let marked = std::fs::read_to_string(dir.path().join("marked.txt")).unwrap();
    let tree = RealTree::from_text(&marked).unwrap();
    let marks = gwprune::MarkSet::from_text(&marked).unwrap();
    assert_eq!(marks.len(), tree.edge_count());
    for (j, theta) in [0.1, 0.5, 2.0].into_iter().enumerate() {
        let cut = RealTree::from_text(&std::fs::read_to_string(dir.path().join(format!("cut_{j:02}.txt"))).unwrap()).unwrap();
        assert_eq!(cut.to_text(), gwprune::prune::cut(&tree, &marks, theta).to_text());
    }
}

#[test]
fn exit_codes() {
    assert_eq!(gwprune(&["experiment", "height", "mechanism=u^2", "n=1000"]).status.code(), Some(0));
    assert_eq!(gwprune(&["experiment", "height", "mechanism=u^2", "n=10"]).status.code(), Some(3));
    assert_eq!(gwprune(&["verify", "suite=unknown"]).status.code(), Some(2));
    assert_eq!(gwprune(&["transform", "domain_family", "mechanism=u^7/3x", "n=10"]).status.code(), Some(2));
    assert_eq!(gwprune(&["transform", "domain_family", "mechanism=u^2"]).status.code(), Some(2));
    assert_eq!(gwprune(&["sample", "noequals"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "mechanism = \"u^2\"\nn = = 3\n").unwrap();
    let o = gwprune(&["--config", cfg.to_str().unwrap(), "transform", "domain_family"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "n = 1000\nh = 1.0\n[mechanism]\nbeta = 1.0\nlabel = \"quad\"\n").unwrap();
    let o = gwprune(&["--config", cfg.to_str().unwrap(), "experiment", "height"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("height[quad],1000,"));
    let o = gwprune(&["--config", cfg.to_str().unwrap(), "experiment", "height", "n=[500, 1000]"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn experiment_height_row() {
    let o = gwprune(&["experiment", "height", "mechanism=u^2", "n=1000"]);
    let text = stdout(&o);
    let row = text.lines().nth(1).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    assert_eq!(f[0], "height[u^2]");
    assert!((f[3].parse::<f64>().unwrap() - 0.367879).abs() < 0.01);
    assert_eq!(f[6], "pass");
}

#[test]
fn verify_is_byte_identical_across_runs_and_workers() {
    let run = |workers: &str| {
        let dir = tempfile::tempdir().unwrap();
        let o = gwprune(&["--out", dir.path().to_str().unwrap(), "--workers", workers, "verify", "suite=counting", "seed=42"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(dir.path().join("report.txt")).unwrap(), std::fs::read(dir.path().join("report.csv")).unwrap())
    };
    let a = run("1");
    let b = run("1");
    let c = run("3");
    assert_eq!(a, b);
    assert_eq!(a, c);
}
