//! Minimal library tour: simulate a small panel experiment, fit the
//! BIC-tuned Lasso and its adaptive second stage on one draw, and print
//! the aggregate report.

use felasso::estimators::{fit_adaptive, fit_bic, BicPath};
use felasso::sim::{generate_panel, metrics_csv, preset, run_experiment, Preset};

fn main() -> felasso::Result<()> {
    // one draw from the long-panel gaussian design
    let mut config = preset(Preset::F);
    config.replications = 25;
    config.seed = 7;

    let (data, truth, _noise) = generate_panel(&config, 0)?;
    let grid = BicPath::default();
    let first = fit_bic(&data, &grid)?;
    let second = fit_adaptive(&data, &first, &grid)?;
    println!(
        "single draw: true support {:?}; lasso picked {:?} (lambda {:.3}), adaptive kept {:?}",
        truth.support_beta(),
        first.active_beta,
        first.penalty.lambda,
        second.active_beta
    );

    // the replication engine aggregates the table metrics
    let output = run_experiment(&config)?;
    print!("{}", metrics_csv(&output.report));
    Ok(())
}
