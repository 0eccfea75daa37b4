//! Compares the closed forms against quadrature and quantile references, first
//! on one pair by hand and then over random draws.

use mixmode::gmm::{kl_gaussian, w2_gaussian, QUADRATURE_POINTS};
use mixmode::oracle::{kl_quadrature_1d, run_suite, wasserstein_1d, GridSpec, OracleSuiteConfig};
use mixmode::GaussianComponent;

fn main() -> mixmode::Result<()> {
    let a = GaussianComponent::univariate(-1.0, 0.7)?;
    let b = GaussianComponent::univariate(2.0, 1.9)?;
    let grid = GridSpec::envelope([&a, &b], QUADRATURE_POINTS)?;
    println!("kl  closed {:.9}  quadrature {:.9}", kl_gaussian(&a, &b)?, kl_quadrature_1d(&a, &b, &grid)?);
    let (_, w2) = wasserstein_1d(&a, &b, 20001)?;
    println!("w2  closed {:.9}  quantile   {:.9}", w2_gaussian(&a, &b)?, w2);

    let report = run_suite(&OracleSuiteConfig { draws: 200, ..Default::default() })?;
    for c in &report.checks {
        println!(
            "{:<8} max error {:.2e} (tolerance {:.0e}) over {} draws",
            c.name, c.max_error, c.tolerance, c.draws
        );
    }
    assert!(report.passed());
    Ok(())
}
