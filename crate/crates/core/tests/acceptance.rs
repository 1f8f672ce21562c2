use scalar_closure::experiments::{
    run_gbm_moments, run_homogenize, run_intermittency, run_mc_vs_closure, run_ou_limit, run_propagator_check,
    run_property_suite, run_strain, EnsembleConfig, DEFAULT_SEED, GbmConfig, HomogenizeConfig, IntermittencyConfig,
    McVsClosureConfig, OuLimitConfig, Outcome, PropagatorConfig, StrainConfig,
};
use scalar_closure::error::Result;
use std::time::Instant;

const SEED: u64 = DEFAULT_SEED;

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome>>)> = vec![
        (
            "strain point source vs closed form",
            Box::new(|| {
                let cfg = StrainConfig { mc: EnsembleConfig { realizations: 0, ..StrainConfig::default().mc }, ..Default::default() };
                run_strain(&cfg, SEED)
            }),
        ),
        ("Monte Carlo vs white-noise closure", Box::new(|| run_mc_vs_closure(&McVsClosureConfig::default(), SEED))),
        ("OU closure converges to white noise", Box::new(|| run_ou_limit(&OuLimitConfig::default(), SEED))),
        ("Wick enumeration vs averaged series", Box::new(|| run_propagator_check(&PropagatorConfig::default(), SEED))),
        ("effective diffusivity", Box::new(|| run_homogenize(&HomogenizeConfig::default(), SEED))),
        ("GBM integral moments", Box::new(|| run_gbm_moments(&GbmConfig::default(), SEED))),
        ("strain intermittency", Box::new(|| run_intermittency(&IntermittencyConfig::default(), SEED))),
        ("deterministic invariants", Box::new(run_property_suite)),
    ];

    let mut failures = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(outcome) => {
                let verdict = if outcome.passed() { "PASS" } else { "FAIL" };
                println!("criterion {}: {verdict} {name} ({secs:.1} s)", k + 1);
                for c in &outcome.checks {
                    println!(
                        "    [{}] {}: measured {:.6e}, target {:.6e}, tolerance {:.1e}",
                        if c.passed { "ok" } else { "x" },
                        c.name,
                        c.measured,
                        c.expected,
                        c.tolerance
                    );
                }
                if !outcome.passed() {
                    failures += 1;
                }
            }
            Err(e) => {
                println!("criterion {}: FAIL {name} (error: {e})", k + 1);
                failures += 1;
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
