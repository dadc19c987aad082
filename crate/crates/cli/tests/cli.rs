use std::path::Path;
use std::process::{Command, Output};

const DEFAULT: &str = include_str!("../../../configs/default.toml");

fn warpsep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpsep")).args(args).env("WARPSEP_LOG", "warn").output().unwrap()
}

fn short_config(dir: &Path) -> String {
    let text = DEFAULT
        .replace("n_samples = 32768", "n_samples = 8192")
        .replace("max_iterations = 30", "max_iterations = 2")
        .replace("psobi_segment = 2048", "psobi_segment = 1024");
    assert_ne!(text, DEFAULT);
    let path = dir.join("short.toml");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn synth_run_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    let config = short_config(tmp.path());
    ok(&warpsep(&["synth", "--config", &config, "--seed", "9", "--out", &p("data")]));
    let manifest = std::fs::read_to_string(tmp.path().join("data/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 9"), "{manifest}");

    for algorithm in ["sobi", "p-sobi", "jefas-bss"] {
        let stdout = ok(&warpsep(&["--threads", "2", "run", &p("data"), "--algorithm", algorithm, "--out", &p(algorithm)]));
        assert!(stdout.starts_with(algorithm), "{stdout}");
        assert!(tmp.path().join(algorithm).join("run.json").exists());
    }
    let stdout = ok(&warpsep(&["eval", &p("data"), &p("sobi"), &p("p-sobi"), &p("jefas-bss"), "--out", &p("eval")]));
    for label in ["sobi", "p-sobi", "jefas-bss"] {
        assert!(stdout.lines().any(|l| l.starts_with(label)), "{stdout}");
    }
    let table = std::fs::read_to_string(tmp.path().join("eval/table.csv")).unwrap();
    assert!(table.starts_with("metric,sobi,p-sobi,jefas-bss"), "{table}");
}

#[test]
fn bad_config_reports_the_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, DEFAULT.replace("n_sources = 2", "n_sources = \"two\"")).unwrap();
    let out = warpsep(&["synth", "--config", &path.to_string_lossy(), "--out", &tmp.path().join("d").to_string_lossy()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = DEFAULT.lines().position(|l| l.starts_with("n_sources")).unwrap() + 1;
    assert!(stderr.contains(&format!("line {line}")), "{stderr}");
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn unknown_algorithm_is_rejected() {
    let out = warpsep(&["run", "nowhere", "--algorithm", "ica", "--out", "nowhere"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ica"));
}

#[test]
fn missing_data_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("absent");
    let out = warpsep(&["run", &data.to_string_lossy(), "--algorithm", "sobi", "--out", &tmp.path().join("r").to_string_lossy()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.json"));
}
