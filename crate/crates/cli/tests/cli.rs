use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn sectornet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sectornet"))
        .args(args)
        .env_remove("SECTORNET_OUT_DIR")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_fixture(out_dir: &Path, extra: &[&str]) -> Output {
    let prices = fixture("prices.csv");
    let fundamentals = fixture("fundamentals.csv");
    let mut args = vec![
        "run",
        "--prices",
        prices.to_str().unwrap(),
        "--fundamentals",
        fundamentals.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    sectornet(&args)
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

const ARTIFACTS: [&str; 13] = [
    "returns.csv",
    "fundamentals.csv",
    "rho.csv",
    "dist.csv",
    "centrality.json",
    "mst.dot",
    "mst.json",
    "mds.csv",
    "mds.json",
    "regression.csv",
    "portfolio.json",
    "coremap.json",
    "sweep.csv",
];

#[test]
fn run_writes_all_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = run_fixture(&out, &[]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let files = read_dir(&out);
    let mut expected: Vec<&str> = ARTIFACTS.to_vec();
    expected.push("manifest.json");
    expected.sort_unstable();
    assert_eq!(files.keys().map(String::as_str).collect::<Vec<_>>(), expected);

    let regression = String::from_utf8(files["regression.csv"].clone()).unwrap();
    assert!(regression.starts_with("country,metric,period,beta0,beta1,t1,p1,r_squared,n_obs\n"));
    assert_eq!(regression.lines().count(), 4);
    let dot = String::from_utf8(files["mst.dot"].clone()).unwrap();
    assert_eq!(dot.matches(" -- ").count(), 9);
}

#[test]
fn reruns_are_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&run_fixture(&a, &[])), 0);
    assert_eq!(code(&run_fixture(&b, &[])), 0);
    let (fa, mut fb) = (read_dir(&a), read_dir(&b));
    // the manifest records its own output directory
    let strip = |m: &[u8], dir: &Path| String::from_utf8_lossy(m).replace(dir.to_str().unwrap(), "<out>");
    assert_eq!(strip(&fa["manifest.json"], &a), strip(&fb["manifest.json"], &b));
    fb.insert("manifest.json".into(), fa["manifest.json"].clone());
    assert_eq!(fa, fb);

    // same directory twice
    let before = read_dir(&a);
    assert_eq!(code(&run_fixture(&a, &[])), 0);
    assert_eq!(before, read_dir(&a));
}

#[test]
fn mst_stage_alone_reproduces_run_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(code(&run_fixture(&out, &[])), 0);
    let first = fs::read(out.join("mst.dot")).unwrap();
    fs::remove_file(out.join("mst.dot")).unwrap();
    let result = sectornet(&["mst", "--out-dir", out.to_str().unwrap()]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert_eq!(first, fs::read(out.join("mst.dot")).unwrap());
}

#[test]
fn corr_from_prices_writes_matrices() {
    let dir = tempfile::tempdir().unwrap();
    let prices = fixture("prices.csv");
    let result = sectornet(&["corr", "--prices", prices.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    assert_eq!(
        read_dir(dir.path()).keys().cloned().collect::<Vec<_>>(),
        vec!["dist.csv".to_string(), "rho.csv".to_string()]
    );
}

#[test]
fn stages_chain_through_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let prices = fixture("prices.csv");
    let fundamentals = fixture("fundamentals.csv");
    let steps: [&[&str]; 8] = [
        &["ingest", "--prices", prices.to_str().unwrap(), "--fundamentals", fundamentals.to_str().unwrap()],
        &["corr"],
        &["centrality"],
        &["mst"],
        &["mds"],
        &["regress"],
        &["portfolio"],
        &["coremap"],
    ];
    for step in steps {
        let mut args = step.to_vec();
        args.extend(["--out-dir", out]);
        let result = sectornet(&args);
        assert_eq!(code(&result), 0, "{step:?}: {}", stderr(&result));
    }
    let staged = read_dir(dir.path());
    let full = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_fixture(full.path(), &[])), 0);
    let mut whole = read_dir(full.path());
    whole.remove("manifest.json");
    assert_eq!(staged, whole);
}

#[test]
fn regress_without_centrality_names_the_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let result = sectornet(&["regress", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&result), 2);
    assert!(stderr(&result).contains("centrality.json"), "{}", stderr(&result));
}

#[test]
fn missing_fundamentals_fails_at_startup() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let prices = fixture("prices.csv");
    let result = sectornet(&[
        "run",
        "--prices",
        prices.to_str().unwrap(),
        "--fundamentals",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&result), 2);
    assert!(stderr(&result).contains("absent.csv"));
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&sectornet(&["run", "--no-such-flag"])), 1);
    assert_eq!(code(&sectornet(&["frobnicate"])), 1);
    assert_eq!(code(&sectornet(&["run", "--out-dir", "x"])), 1);
    assert_eq!(code(&sectornet(&["centrality", "--theta-formula", "median"])), 1);
}

#[test]
fn help_documents_every_flag() {
    let result = sectornet(&["run", "--help"]);
    assert_eq!(code(&result), 0);
    let help = String::from_utf8(result.stdout).unwrap();
    for flag in [
        "--prices",
        "--fundamentals",
        "--power",
        "--n-pct",
        "--theta-formula",
        "--missing-policy",
        "--seed",
        "--out-dir",
        "--config",
        "SECTORNET_OUT_DIR",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    assert_eq!(code(&sectornet(&["--version"])), 0);
}

#[test]
fn invalid_data_and_numerical_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "date,FN,IT\n2016-01-04,100,abc\n").unwrap();
    let result = sectornet(&["corr", "--prices", bad.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&result), 2);
    assert!(stderr(&result).contains("line 2"), "{}", stderr(&result));

    // two blocks of co-moving sectors with orthogonal return patterns:
    // rho^c splits into two components
    let a: [f64; 8] = [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0];
    let b: [f64; 8] = [1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0, -1.0];
    let mut text = String::from("date,FN,IT,ID,BM\n2016-01-04,100,100,100,100\n");
    let mut level = [100.0f64; 4];
    for k in 0..8 {
        let r = [a[k], 2.0 * a[k], b[k], 3.0 * b[k]];
        for (p, r) in level.iter_mut().zip(r) {
            *p *= (0.01 * r).exp();
        }
        text.push_str(&format!("2016-01-{:02},{},{},{},{}\n", 5 + k, level[0], level[1], level[2], level[3]));
    }
    let split = dir.path().join("split");
    let prices = dir.path().join("split.csv");
    fs::write(&prices, text).unwrap();
    let out = split.to_str().unwrap();
    assert_eq!(code(&sectornet(&["corr", "--prices", prices.to_str().unwrap(), "--out-dir", out])), 0);
    let result = sectornet(&["centrality", "--out-dir", out]);
    assert_eq!(code(&result), 3, "{}", stderr(&result));
    assert!(stderr(&result).contains("reducible"), "{}", stderr(&result));
}

#[test]
fn out_dir_defaults_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let prices = fixture("prices.csv");
    let result = Command::new(env!("CARGO_BIN_EXE_sectornet"))
        .args(["corr", "--prices", prices.to_str().unwrap()])
        .env("SECTORNET_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&result), 0);
    assert!(dir.path().join("rho.csv").is_file());
}

#[test]
fn every_parameter_reaches_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("base");
    assert_eq!(code(&run_fixture(&base, &[])), 0);
    let base_manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(base.join("manifest.json")).unwrap()).unwrap();

    let mutations: [(&str, &[&str]); 16] = [
        ("power", &["--power", "16"]),
        ("n_pct", &["--n-pct", "5"]),
        ("theta_formula", &["--theta-formula", "cv"]),
        ("missing_policy", &["--missing-policy", "forward_fill"]),
        ("seed", &["--seed", "9"]),
        ("country", &["--country", "USA"]),
        ("period", &["--period", "2015-16"]),
        ("start", &["--start", "2015-02-02"]),
        ("end", &["--end", "2015-11-30"]),
        ("regression_source", &["--regression-source", "rho_power"]),
        ("mds_max_iter", &["--mds-max-iter", "500"]),
        ("mds_tol", &["--mds-tol", "1e-6"]),
        ("portfolio_theta", &["--portfolio-theta", "0.5"]),
        ("sweep_n", &["--sweep-n", "1,2,3"]),
        ("hamming_norm", &["--hamming-norm", "count"]),
        ("out_dir", &[]),
    ];
    for (i, (key, args)) in mutations.iter().enumerate() {
        let out = dir.path().join(format!("m{i}"));
        let result = run_fixture(&out, args);
        assert_eq!(code(&result), 0, "{key}: {}", stderr(&result));
        let manifest: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        assert_ne!(manifest["config"][key], base_manifest["config"][key], "{key} not recorded");
    }
}

#[test]
fn config_file_runs_markets_side_by_side() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("markets.toml");
    let prices = fixture("prices.csv");
    let fundamentals = fixture("fundamentals.csv");
    fs::write(
        &config,
        format!(
            "[[market]]\ncountry = \"A\"\nprices = {p:?}\nfundamentals = {f:?}\nout_dir = \"out/a\"\n\n\
             [[market]]\ncountry = \"B\"\nprices = {p:?}\nfundamentals = {f:?}\nout_dir = \"out/b\"\nn_pct = 10.0\n",
            p = prices.to_str().unwrap(),
            f = fundamentals.to_str().unwrap()
        ),
    )
    .unwrap();
    let result = sectornet(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&result), 0, "{}", stderr(&result));
    let a = read_dir(&dir.path().join("out/a"));
    let b = read_dir(&dir.path().join("out/b"));
    assert_eq!(a.len(), 14);
    assert_eq!(a["rho.csv"], b["rho.csv"]);
    assert_ne!(a["coremap.json"], b["coremap.json"]);
}
