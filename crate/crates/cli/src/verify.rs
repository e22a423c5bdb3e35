//! Property suites behind `wavefluct verify <suite>`.

use clap::ValueEnum;
use serde::Serialize;

use wavefluct::checks::{self, timed, Check, LimitScenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Chatterjee,
    Lambda,
    Correctors,
    Green,
    Reciprocity,
    LimitEquivalence,
}

pub fn run_suite(suite: Suite) -> Vec<Check> {
    match suite {
        Suite::Chatterjee => timed("identity", checks::chatterjee_identity),
        Suite::Lambda => {
            let mut v = timed("lambda", checks::lambda_consistency);
            v.extend(timed("mu_eff", checks::mu_eff_dual_route));
            v
        }
        Suite::Correctors => {
            let mut v = timed("dilute", || checks::dilute_m(7, 16, 0.25));
            v.extend(timed("correctors", || checks::corrector_checks(3, 16, 3, checks::GAUGE_CG_TOL)));
            v
        }
        Suite::Green => {
            let mut v = timed("green", || checks::green_decay(12, 2));
            v.extend(timed("representation", || checks::representation(12, 2)));
            v
        }
        Suite::Reciprocity => {
            let cov = checks::synthetic_covariances(8, 1e-3);
            timed("reciprocity", || checks::route_equivalence(0.1, 200, 2, &cov, &LimitScenario::default()))
        }
        Suite::LimitEquivalence => {
            let cov = checks::synthetic_covariances(8, 1e-3);
            timed("routes", || checks::route_equivalence(1.0 / 20.0, 500, 1, &cov, &LimitScenario::default()))
        }
    }
}

pub fn table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&c.to_string());
        s.push('\n');
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    s
}
