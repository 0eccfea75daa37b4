//! Trains MDNs on the inverse sine problem and prints the metric curves along
//! the input axis. A shortened run (2 runs, 600 epochs) by default; pass `full` for 5 runs of 1000
//! epochs.

use mixmode::bench::{linspace, run_sine_experiment, SineExperimentConfig};
use mixmode::MetricName;

fn main() -> mixmode::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let cfg = if full {
        SineExperimentConfig::new(5, 0)
    } else {
        SineExperimentConfig {
            epochs: 600,
            n_points: 3000,
            grid: linspace(-17.5, 17.5, 71),
            hidden_widths: vec![64, 64],
            ..SineExperimentConfig::new(2, 0)
        }
    };
    let result = run_sine_experiment(&cfg)?;

    for run in &result.runs {
        println!("run {} (model seed {}): held-out nll {:.3}", run.run, run.model_seed, run.heldout_nll);
    }
    println!("{:>7} {:>7} {:>9} {:>7} {:>7}", "x", "mce", "wakld", "semd", "jsd");
    let c = &result.mean_curves;
    for (i, x) in result.grid.iter().enumerate().step_by(5) {
        println!(
            "{x:>7.2} {:>7.3} {:>9.3} {:>7.3} {:>7.3}",
            c.mce[i], c.wakld[i], c.semd[i], c.jsd[i]
        );
    }
    for m in MetricName::ALL {
        let inner = result.region_mean(m, |x| x.abs() < 1.0).unwrap_or(f64::NAN);
        let outer = result.region_mean(m, |x| x.abs() > 10.0).unwrap_or(f64::NAN);
        println!(
            "{}: inner {inner:.3}, outer {outer:.3}, peak at x = {:.2}",
            m.as_str(),
            result.peak_location(m).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
