//! Scores a few hand-built mixtures, including the case where MCE is fooled:
//! several weighted copies of the same Gaussian.

use mixmode::{all_metrics, EntropyEstimator, Mixture};

fn main() -> mixmode::Result<()> {
    let cases = [
        ("single gaussian", Mixture::univariate(&[(1.0, 0.0, 1.0)])?),
        ("two separated modes", Mixture::univariate(&[(0.5, -3.0, 0.5), (0.5, 3.0, 0.5)])?),
        ("dominant mode plus minor", Mixture::univariate(&[(0.9, -3.0, 0.5), (0.1, 3.0, 0.5)])?),
        ("four identical copies", Mixture::univariate(&[(0.25, 0.0, 1.0); 4])?),
    ];

    println!("{:<26} {:>7} {:>9} {:>7} {:>7}", "mixture", "mce", "wakld", "semd", "jsd");
    for (name, m) in &cases {
        let s = all_metrics(m, EntropyEstimator::default_for(m.dim(), 0))?;
        println!("{name:<26} {:>7.4} {:>9.4} {:>7.4} {:>7.4}", s.mce, s.wakld, s.semd, s.jsd);
    }

    // Identical copies have maximal weight entropy but one mode.
    let twin = &cases[3].1;
    let s = all_metrics(twin, EntropyEstimator::default_for(1, 0))?;
    assert_eq!(s.mce, 1.0);
    assert_eq!((s.wakld, s.semd), (0.0, 0.0));

    // d > 1 falls back to Monte Carlo for the mixture entropy.
    let m = Mixture::from_parts(
        vec![0.5, 0.5],
        vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
        vec![vec![0.5, 1.0], vec![0.5, 1.0]],
    )?;
    let est = EntropyEstimator::MonteCarlo { samples: 8192, seed: 7 };
    println!("2-d two modes: jsd = {:.4} (monte carlo, 8192 samples)", mixmode::jsd(&m, est)?);
    Ok(())
}
