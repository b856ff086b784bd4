//! Acceptance suite: one line per criterion, driven by the files in
//! `configs/`. Checks listed as known limitations are reported but do not
//! fail the run.

use std::path::PathBuf;
use std::process::ExitCode;

use mbbm::config::ExperimentConfig;
use mbbm::experiments::{self, Check};

struct Criterion {
    id: u32,
    title: &'static str,
    configs: &'static [&'static str],
    known_limitations: &'static [&'static str],
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "spectral triple",
        configs: &["c01_spectral"],
        known_limitations: &[],
    },
    Criterion {
        id: 2,
        title: "mean semigroup",
        configs: &["c02_mean_semigroup"],
        known_limitations: &[],
    },
    Criterion {
        id: 3,
        title: "many-to-one",
        configs: &["c03_many_to_one"],
        known_limitations: &[],
    },
    Criterion {
        id: 4,
        title: "martingale means",
        configs: &["c04_martingale"],
        known_limitations: &[],
    },
    Criterion {
        id: 5,
        title: "McKean duality",
        configs: &["model_a_mckean", "model_b_typed_mckean"],
        known_limitations: &[],
    },
    Criterion {
        id: 6,
        title: "front speed and centring",
        configs: &["c06_front_speed"],
        known_limitations: &["speed-ratio"],
    },
    Criterion {
        id: 7,
        title: "C_v(r) stabilization",
        configs: &["c07_cv"],
        known_limitations: &["model-a:stabilization"],
    },
    Criterion {
        id: 8,
        title: "tail envelope",
        configs: &["c08_tail"],
        known_limitations: &[],
    },
    Criterion {
        id: 9,
        title: "overshoot law",
        configs: &["c09_overshoot"],
        known_limitations: &["independence"],
    },
    Criterion {
        id: 10,
        title: "decorated Poisson cross-check",
        configs: &["c10_dppp"],
        known_limitations: &[],
    },
    Criterion {
        id: 11,
        title: "bridge barrier estimate",
        configs: &["c11_bridge"],
        known_limitations: &[],
    },
];

fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn main() -> ExitCode {
    let mut hard_failures = Vec::new();
    for c in CRITERIA {
        let mut checks: Vec<Check> = Vec::new();
        let mut errors = Vec::new();
        let mut seconds = 0.0;
        for name in c.configs {
            let path = config_dir().join(format!("{name}.cfg"));
            match ExperimentConfig::load(&path).and_then(|cfg| experiments::run(&cfg)) {
                Ok(outcome) => {
                    seconds += outcome.wall_seconds;
                    checks.extend(outcome.checks);
                }
                Err(e) => errors.push(format!("{name}: {e}")),
            }
        }
        let failed: Vec<&Check> = checks.iter().filter(|k| k.required && !k.passed).collect();
        let unexpected = failed.iter().any(|k| !c.known_limitations.contains(&k.name.as_str()));
        let status = if !errors.is_empty() || unexpected {
            hard_failures.push(c.id);
            "FAIL".to_string()
        } else if failed.is_empty() {
            "PASS".to_string()
        } else {
            let names: Vec<&str> = failed.iter().map(|k| k.name.as_str()).collect();
            format!("FAIL (known limitation at desk scale: {})", names.join(", "))
        };
        println!("criterion {:>2} {:<30} {status} [{seconds:.1} s]", c.id, c.title);
        for k in &checks {
            let mark = match (k.required, k.passed) {
                (true, true) => "pass",
                (true, false) => "FAIL",
                (false, true) => "diag ok",
                (false, false) => "diag",
            };
            println!("      {mark:<7} {}: {}", k.name, k.detail);
        }
        for e in &errors {
            println!("      error   {e}");
        }
    }
    if hard_failures.is_empty() {
        println!("acceptance: all criteria pass or fail only on documented limitations");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures in criteria {hard_failures:?}");
        ExitCode::FAILURE
    }
}
