//! Train, save, reload and score: the library path behind the CLI's
//! train-mdn and eval-metrics.

use mixmode::datasets::gen_inverse_sine;
use mixmode::mdn::{train, MdnConfig, MdnModel};
use mixmode::{all_metrics, EntropyEstimator};

fn main() -> mixmode::Result<()> {
    let data = gen_inverse_sine(1000, 1);
    let cfg = MdnConfig { hidden_widths: vec![24, 24], epochs: 1000, seed: 9, ..MdnConfig::new(1, 1, 4) };
    let (model, history) = train(&cfg, &data)?;
    println!(
        "{} params, nll {:.3} -> {:.3}",
        model.param_count(),
        history.epoch_nll[0],
        history.final_nll
    );

    let dir = std::env::temp_dir().join("mixmode-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.json");
    model.save(&path)?;
    let restored = MdnModel::load(&path)?;
    assert_eq!(restored.params(), model.params());

    // WAKLD is unbounded; one narrow component is enough to make it large.
    for x in [-12.0, -5.0, 0.0, 5.0, 12.0] {
        let m = restored.forward(&[x])?;
        let s = all_metrics(&m, EntropyEstimator::default_for(1, 0))?;
        println!("x = {x:>5}: mce {:.3} wakld {:.3} semd {:.3} jsd {:.3}", s.mce, s.wakld, s.semd, s.jsd);
    }
    println!("checkpoint at {}", path.display());
    Ok(())
}
