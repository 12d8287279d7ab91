//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Lines go straight to the stderr handle so they show up in `cargo test`
//! output even when the test passes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use bohmian_runner::{load_config, run, ExperimentConfig, ExperimentKind, RunArtifacts};

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("presets")
        .join(format!("{name}.toml"))
}

struct Ran {
    arts: RunArtifacts,
    elapsed: Duration,
    dir: PathBuf,
}

impl Ran {
    fn check(&self, name: &str) -> bool {
        let c = self.arts.checks.iter().find(|c| c.name == name);
        c.unwrap_or_else(|| panic!("missing check {name}")).passed
    }

    fn checks_with_prefix(&self, prefix: &str) -> bool {
        let mut hits = self
            .arts
            .checks
            .iter()
            .filter(|c| c.name.starts_with(prefix))
            .peekable();
        hits.peek().is_some() && hits.all(|c| c.passed)
    }

    fn metric(&self, name: &str) -> f64 {
        *self
            .arts
            .metrics
            .get(name)
            .unwrap_or_else(|| panic!("missing metric {name}"))
    }
}

struct Suite {
    root: tempfile::TempDir,
    results: Vec<(u32, bool)>,
}

impl Suite {
    fn run(&self, name: &str, tag: &str, overrides: &[(&str, &str)]) -> Ran {
        let ov: Vec<(String, String)> = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let cfg = load_config(&preset(name), &ov, None).expect("preset resolves");
        let dir = self.root.path().join(format!("{name}-{tag}"));
        let start = Instant::now();
        let arts = run(&cfg, &dir).expect("run completes");
        Ran {
            arts,
            elapsed: start.elapsed(),
            dir,
        }
    }

    fn record(&mut self, id: u32, title: &str, pass: bool, detail: String, elapsed: Duration) {
        let mark = if pass { "PASS" } else { "FAIL" };
        let line = format!(
            "criterion {id:>2} {mark} {title}: {detail} [{:.1}s]",
            elapsed.as_secs_f64()
        );
        writeln!(std::io::stderr(), "{line}").ok();
        self.results.push((id, pass));
    }
}

fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .expect("output dir")
        .map(|e| {
            let e = e.expect("entry");
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).expect("file"),
            )
        })
        .collect()
}

#[test]
fn acceptance_criteria() {
    let mut suite = Suite {
        root: tempfile::tempdir().expect("temp dir"),
        results: Vec::new(),
    };
    let mut runs: BTreeMap<&'static str, Ran> = BTreeMap::new();
    for k in ExperimentKind::ALL {
        runs.insert(k.name(), suite.run(k.name(), "base", &[]));
    }

    let fg = &runs["free-gaussian"];
    let tv = fg.metric("total_variation");
    let iid = fg.metric("iid_baseline");
    let minute = Duration::from_secs(60);
    let pass = fg.check("total_variation_vs_iid") && tv <= 2.0 * iid && fg.elapsed <= minute;
    suite.record(
        1,
        "equivariance",
        pass,
        format!("tv {tv:.4e} vs 2 x iid {:.4e}", 2.0 * iid),
        fg.elapsed,
    );

    let two = &runs["two-outcome-measurement"];
    let f1 = two.metric("frequency[k=-1]");
    let overlap = two.metric("branch_overlap");
    let pass = (f1 - 0.3).abs() <= 3.0 * (0.21f64 / 1e4).sqrt() && overlap < 1e-4 && two.elapsed <= 2 * minute;
    suite.record(
        2,
        "instrumental Born rule",
        pass,
        format!("f1 {f1:.4}, overlap {overlap:.2e}"),
        two.elapsed,
    );

    let sg = &runs["stern-gerlach"];
    let up = sg.metric("frequency[up]");
    let pass = sg.check("born_frequency[up]") && sg.check("trajectories_never_cross");
    suite.record(
        3,
        "Stern-Gerlach spin",
        pass,
        format!("upper frequency {up:.4}"),
        sg.elapsed,
    );

    let mut worst = (0.0f64, 0.0f64);
    let mut all = true;
    for r in runs.values() {
        worst = (
            worst.0.max(r.metric("norm_drift")),
            worst.1.max(r.metric("energy_drift")),
        );
        all &= r.check("norm_drift") && r.check("energy_drift");
    }
    let pass = all && worst.0 < 1e-10 && worst.1 < 1e-6;
    let total: Duration = runs.values().map(|r| r.elapsed).sum();
    suite.record(
        4,
        "unitarity and energy",
        pass,
        format!(
            "worst norm drift {:.2e}, energy drift {:.2e} over {} presets",
            worst.0,
            worst.1,
            runs.len()
        ),
        total,
    );

    let ep = &runs["entangled-pair"];
    let (dp, de) = (ep.metric("product_delta_v1"), ep.metric("entangled_delta_v1"));
    let threshold = ep
        .arts
        .checks
        .iter()
        .find(|c| c.name == "entangled_delta_v1")
        .unwrap()
        .threshold;
    let pass = dp < 1e-10 && de > threshold && ep.check("entangled_delta_v1");
    suite.record(
        5,
        "non-locality",
        pass,
        format!("product {dp:.2e}, entangled {de:.3} > {threshold}"),
        ep.elapsed,
    );

    let rx = &runs["relaxation"];
    let (h0, h1, slope) = (rx.metric("h_initial"), rx.metric("h_final"), rx.metric("h_slope"));
    let pass = h0 > 1.0 && h1 < h0 / 3.0 && slope < 0.0 && rx.elapsed <= 5 * minute;
    suite.record(
        6,
        "H-theorem relaxation",
        pass,
        format!("H {h0:.3} -> {h1:.3}, slope {slope:.3e}"),
        rx.elapsed,
    );

    let pd = &runs["phonon-dispersion"];
    let pass = pd.check("dense_oracle") && pd.check("sound_speed_small_p");
    let detail = format!(
        "dense error {:.2e}, c_s {:.9} vs {:.9}",
        pd.metric("dense_oracle_max_error"),
        pd.metric("sound_speed_recovered"),
        pd.metric("sound_speed")
    );
    suite.record(7, "phonon dispersion", pass, detail, pd.elapsed);

    let single = pd.metric("single_mode_residual");
    let pass =
        (single - 8.3305e-4).abs() < 1e-6 && pd.check("single_mode_residual") && pd.check("residual_quadratic_scaling");
    let detail = format!(
        "single mode {single:.6e}, scaling spread {:.2e}",
        pd.metric("residual_scaling_spread")
    );
    suite.record(8, "emergent wave equation", pass, detail, pd.elapsed);

    let bc = &runs["boost-check"];
    let pass = bc.checks_with_prefix("residual_")
        && bc.check("identity_boost_bitwise")
        && bc.check("linear_surrogate_boosted");
    let detail = format!(
        "rest {:.3e}, boosted {:.3e}, linear {:.1e}",
        bc.metric("residual_rest"),
        bc.metric("residual_boosted"),
        bc.metric("linear_surrogate_boosted")
    );
    suite.record(9, "Lorentz boost", pass, detail, bc.elapsed);

    let sigma = (0.21f64 / 1e4).sqrt();
    let start = Instant::now();
    let mut shifts = Vec::new();
    for (tag, key, value) in [
        ("dt", "dt", "0.005"),
        ("cap", "speed_cap_factor", "100.0"),
        ("narrow", "pointer_width", "0.4"),
        ("wide", "pointer_width", "0.6"),
    ] {
        let r = suite.run("two-outcome-measurement", tag, &[(key, value)]);
        shifts.push((tag, (r.metric("frequency[k=-1]") - f1).abs()));
    }
    let pass = shifts.iter().all(|(_, s)| *s < 2.0 * sigma);
    let detail = shifts
        .iter()
        .map(|(t, s)| format!("{t} {:.2}s", s / sigma))
        .collect::<Vec<_>>()
        .join(", ");
    suite.record(
        10,
        "robustness of perceptibles",
        pass,
        format!("shifts in sigma: {detail}"),
        start.elapsed(),
    );

    let start = Instant::now();
    let mut same = true;
    for name in ["free-gaussian", "two-outcome-measurement", "phonon-trajectories"] {
        let again = suite.run(name, "rerun", &[]);
        same &= again.arts.manifest == runs[name].arts.manifest;
        same &= tree_bytes(&again.dir) == tree_bytes(&runs[name].dir);
    }
    suite.record(
        11,
        "determinism",
        same,
        "three presets rerun byte-identical".into(),
        start.elapsed(),
    );

    let failed: Vec<u32> = suite.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    assert_eq!(suite.results.len(), 11);
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

#[test]
fn resolved_config_is_echoed_in_full() {
    let cfg = load_config(&preset("stern-gerlach"), &[], Some(7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let small = ExperimentConfig::load(
        "experiment = \"free-gaussian\"\n[params]\nensemble_size = 500\n",
        &[],
        Some(3),
    )
    .unwrap();
    run(&small, dir.path()).unwrap();
    let echo = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::load(&echo, &[], None).unwrap(), small);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 3);
    assert_eq!(summary["config"]["params"]["ensemble_size"], 500);
    assert_eq!(summary["config"]["params"]["dt"], 0.01);
    assert!(summary["versions"]["bohmian-core"].is_string());
    assert_eq!(cfg.seed, 7);
}
