use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SYMMETRIC: &str = r#"
experiment = "orbits"
seed = 1
[params]
rho = ["9/20", "9/20", "9/20"]
[rule]
decision_points = ["1/2", "1/2", "1/2"]
[engine]
basin_grid = 60
"#;

fn polltri(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polltri")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_and_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let good = write_config(tmp.path(), "good.toml", SYMMETRIC);
    assert_eq!(polltri(&["validate", "--config", s(&good)]).status.code(), Some(0));

    let bad = write_config(tmp.path(), "bad.toml", "experiment = \"orbits\"\n[params]\nrho = [\"9/20\"]\nbogus = 1\n");
    assert_eq!(polltri(&["validate", "--config", s(&bad)]).status.code(), Some(2));

    let missing = tmp.path().join("nope.toml");
    assert_eq!(polltri(&["orbits", "--config", s(&missing)]).status.code(), Some(2));

    let recurrent = write_config(tmp.path(), "rec.toml", &SYMMETRIC.replace("9/20", "1/5"));
    assert_eq!(polltri(&["validate", "--config", s(&recurrent)]).status.code(), Some(3));
}

#[test]
fn orbits_atlas_is_deterministic_across_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sym.toml", SYMMETRIC);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(polltri(&["orbits", "--config", s(&cfg), "--out", s(&a), "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(polltri(&["orbits", "--config", s(&cfg), "--out", s(&b), "--jobs", "4"]).status.code(), Some(0));
    for f in ["atlas.json", "orbits.csv", "basin.csv"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }
    let atlas: serde_json::Value = serde_json::from_str(&read(&a, "atlas.json")).unwrap();
    assert_eq!(atlas["orbits"].as_array().unwrap().len(), 2);
    assert_eq!(atlas["certificate"], "finite");
    assert_eq!(atlas["unassigned"], 0);
}

#[test]
fn nonstable_orbits_are_undecided() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "ns.toml",
        "experiment = \"orbits\"\n[params]\nrho = [\"9/20\", \"9/20\", \"9/20\"]\n[rule.nonstable]\nalpha = \"sqrt2\"\nquadruples = 4096\n[engine]\nt_max = 30\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(polltri(&["orbits", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(5));
    assert!(read(&out, "atlas.json").contains("undecided"));
}

#[test]
fn sweep_assertion_writes_reproducer() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "sw.toml",
        "experiment = \"sweep\"\nseed = 5\n[params]\nrho = [\"9/20\", \"9/20\", \"9/20\"]\n[rule]\ndecision_points = [\"1/2\", \"1/2\", \"1/2\"]\n[engine]\nmax_orbits = 1\n[sweep]\nfinite_configurations = 400\n",
    );
    let out = tmp.path().join("sw");
    assert_eq!(polltri(&["sweep", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(4));
    let repro = read(&out, "reproducer.toml");
    assert!(repro.contains("decision_points"));
    // The reproducer is itself a valid configuration.
    let path = write_config(tmp.path(), "repro.toml", &repro);
    assert_eq!(polltri(&["validate", "--config", s(&path)]).status.code(), Some(0));
}

#[test]
fn simulate_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "run.toml",
        "experiment = \"simulate\"\nseed = 3\n[params]\nrho = [\"9/20\", \"9/20\", \"9/20\"]\n[rule]\ndecision_points = [\"1/2\", \"1/2\", \"1/2\"]\n[simulation]\nreplicas = 4\nswitches = 30\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(polltri(&["simulate", "--config", s(&cfg), "--out", s(&a), "--jobs", "1"]).status.code(), Some(0));
    assert_eq!(polltri(&["simulate", "--config", s(&cfg), "--out", s(&b), "--jobs", "3"]).status.code(), Some(0));
    let runs = read(&a, "runs.csv");
    assert_eq!(runs, read(&b, "runs.csv"));
    assert_eq!(runs.lines().count(), 1 + 4 * 30);

    let svg = tmp.path().join("runs.svg");
    let code = polltri(&["plot", "--input", s(&a.join("runs.csv")), "--config", s(&cfg), "--out", s(&svg)]).status.code();
    assert_eq!(code, Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("seagreen"));

    let empty = write_config(tmp.path(), "empty.csv", "");
    let frame = tmp.path().join("frame.svg");
    assert_eq!(polltri(&["plot", "--input", s(&empty), "--out", s(&frame)]).status.code(), Some(0));
    assert!(!std::fs::read_to_string(&frame).unwrap().contains("darkorange"));

    let junk = write_config(tmp.path(), "junk.csv", "step,side,x_decimal\n0,9,0.5\n");
    let out = polltri(&["plot", "--input", s(&junk), "--out", s(&frame)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn orbit_plot_draws_closed_chords() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "sym.toml", SYMMETRIC);
    let out = tmp.path().join("o");
    assert_eq!(polltri(&["orbits", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(0));
    let svg = tmp.path().join("orbits.svg");
    assert_eq!(polltri(&["plot", "--input", s(&out.join("orbits.csv")), "--config", s(&cfg), "--out", s(&svg)]).status.code(), Some(0));
    let text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("stroke=\"darkorange\"").count(), 2);
    assert_eq!(text.matches("<polygon").count(), 3);
}
