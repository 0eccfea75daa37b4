//! A small version of the world-model bench: train an MDN per k on masked
//! transitions and compare mean scores on unimodal and multimodal inputs.

use mixmode::bench::{run_worldmodel_bench, separation_report, WorldModelBenchConfig};
use mixmode::MetricName;

fn main() -> mixmode::Result<()> {
    let cfg = WorldModelBenchConfig {
        k_grid: vec![2, 5, 10],
        repetitions: 1,
        train_samples: 5000,
        eval_per_label: 200,
        epochs: 150,
        jsd_samples: 1024,
        d_latent: 4,
        hidden_widths: vec![64, 64],
        ..Default::default()
    };
    let result = run_worldmodel_bench(&cfg)?;

    for s in &result.per_k {
        print!("k = {:>2}:", s.k);
        for m in MetricName::ALL {
            let sep = s.get(m);
            print!("  {} {:.3}/{:.3}", m.as_str(), sep.mean_unimodal, sep.mean_multimodal);
        }
        println!();
    }
    println!("{}", separation_report(&result));
    Ok(())
}
