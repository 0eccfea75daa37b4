//! Experiment harnesses.
//!
//! [`run_sine_experiment`] trains k-component MDNs on the inverse sine data and
//! traces all four metrics along an input grid. [`run_worldmodel_bench`] trains
//! one MDN per `(k, repetition)` cell on mixed masked/unmasked latent
//! transitions and compares the metric means on held-out unimodal and
//! multimodal samples.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    gen_inverse_sine, gen_transitions_with, transitions_to_dataset, DatasetMeta, LatentShiftEnv, Modality,
    TransitionSample, TransitionSpec, DEFAULT_LATENT_DIM, DEFAULT_NOISE_STD, DEFAULT_TRAJECTORY_LEN,
};
use crate::error::{invalid, Error, Result};
use crate::gmm::{EntropyEstimator, QUADRATURE_POINTS};
use crate::mdn::{train, MdnConfig};
use crate::metrics::{all_metrics, MetricName};
use crate::seed::derive_seed;

/// Four per-metric series of equal length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricCurves {
    pub mce: Vec<f64>,
    pub wakld: Vec<f64>,
    pub semd: Vec<f64>,
    pub jsd: Vec<f64>,
}

impl MetricCurves {
    pub fn get(&self, name: MetricName) -> &[f64] {
        match name {
            MetricName::Mce => &self.mce,
            MetricName::Wakld => &self.wakld,
            MetricName::Semd => &self.semd,
            MetricName::Jsd => &self.jsd,
        }
    }

    fn get_mut(&mut self, name: MetricName) -> &mut Vec<f64> {
        match name {
            MetricName::Mce => &mut self.mce,
            MetricName::Wakld => &mut self.wakld,
            MetricName::Semd => &mut self.semd,
            MetricName::Jsd => &mut self.jsd,
        }
    }

    pub fn len(&self) -> usize {
        self.mce.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mce.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineExperimentConfig {
    pub runs: usize,
    pub epochs: usize,
    pub k: usize,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub n_points: usize,
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl SineExperimentConfig {
    /// k = 5, 1000 epochs, 3000 training points, grid `[-17.5, 17.5]` in steps of 0.1.
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            epochs: 1000,
            k: 5,
            grid: default_sine_grid(),
            seed,
            n_points: 3000,
            hidden_widths: vec![64, 64, 64],
            learning_rate: 1e-3,
            batch_size: 100,
        }
    }

    fn mdn_config(&self, seed: u64) -> MdnConfig {
        MdnConfig {
            hidden_widths: self.hidden_widths.clone(),
            seed,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            ..MdnConfig::new(1, 1, self.k)
        }
    }
}

pub fn default_sine_grid() -> Vec<f64> {
    linspace(-17.5, 17.5, 351)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineRun {
    pub run: usize,
    pub data_seed: u64,
    pub model_seed: u64,
    pub final_train_nll: f64,
    /// Mean NLL on a fresh noise draw over the same target grid.
    pub heldout_nll: f64,
    pub curves: MetricCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineExperimentResult {
    pub config: SineExperimentConfig,
    pub grid: Vec<f64>,
    pub mean_curves: MetricCurves,
    pub runs: Vec<SineRun>,
}

impl SineExperimentResult {
    pub fn run_seeds(&self) -> Vec<u64> {
        self.runs.iter().map(|r| r.model_seed).collect()
    }

    /// Mean of a metric's mean curve over grid points selected by `keep`.
    pub fn region_mean(&self, name: MetricName, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let vals: Vec<f64> = self
            .grid
            .iter()
            .zip(self.mean_curves.get(name))
            .filter(|(x, _)| keep(**x))
            .map(|(_, v)| *v)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Grid location of a metric's mean-curve maximum (first on ties).
    pub fn peak_location(&self, name: MetricName) -> Option<f64> {
        let curve = self.mean_curves.get(name);
        let mut best: Option<usize> = None;
        for (i, v) in curve.iter().enumerate() {
            if best.is_none_or(|b| *v > curve[b]) {
                best = Some(i);
            }
        }
        best.map(|i| self.grid[i])
    }
}

fn run_one_sine(cfg: &SineExperimentConfig, run: usize) -> Result<SineRun> {
    let data_seed = derive_seed(cfg.seed, &[run as u64, 0]);
    let model_seed = derive_seed(cfg.seed, &[run as u64, 1]);
    let heldout_seed = derive_seed(cfg.seed, &[run as u64, 2]);
    let data = gen_inverse_sine(cfg.n_points, data_seed);
    let (model, history) = train(&cfg.mdn_config(model_seed), &data).map_err(|e| {
        Error::InvalidArgument(format!("sine run {run} (model seed {model_seed}) failed: {e}"))
    })?;
    let heldout = gen_inverse_sine(cfg.n_points, heldout_seed);
    let heldout_nll = model.mean_nll(&heldout.inputs, &heldout.targets)?;
    let inputs: Vec<Vec<f64>> = cfg.grid.iter().map(|x| vec![*x]).collect();
    let mut curves = MetricCurves::default();
    let quad = EntropyEstimator::Quadrature {
        points: QUADRATURE_POINTS,
    };
    for m in model.predict(&inputs)? {
        let s = all_metrics(&m, quad)?;
        for name in MetricName::ALL {
            curves.get_mut(name).push(s.get(name));
        }
    }
    Ok(SineRun {
        run,
        data_seed,
        model_seed,
        final_train_nll: history.final_nll,
        heldout_nll,
        curves,
    })
}

/// Fresh data and a fresh model per run; JSD uses 1-D quadrature.
pub fn run_sine_experiment(cfg: &SineExperimentConfig) -> Result<SineExperimentResult> {
    if cfg.runs == 0 {
        return Err(invalid("need at least one run"));
    }
    if cfg.grid.is_empty() {
        return Err(invalid("evaluation grid is empty"));
    }
    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|r| run_one_sine(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    let mut mean_curves = MetricCurves::default();
    for name in MetricName::ALL {
        let out = mean_curves.get_mut(name);
        for i in 0..cfg.grid.len() {
            out.push(runs.iter().map(|r| r.curves.get(name)[i]).sum::<f64>() / runs.len() as f64);
        }
    }
    Ok(SineExperimentResult {
        config: cfg.clone(),
        grid: cfg.grid.clone(),
        mean_curves,
        runs,
    })
}

pub const DEFAULT_K_GRID: [usize; 11] = [2, 3, 4, 5, 6, 8, 10, 15, 20, 30, 50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldModelBenchConfig {
    pub k_grid: Vec<usize>,
    pub repetitions: usize,
    pub train_samples: usize,
    pub eval_per_label: usize,
    pub epochs: usize,
    pub jsd_samples: usize,
    pub seed: u64,
    pub d_latent: usize,
    pub observation_noise_std: f64,
    pub trajectory_len: usize,
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for WorldModelBenchConfig {
    fn default() -> Self {
        Self {
            k_grid: DEFAULT_K_GRID.to_vec(),
            repetitions: 3,
            train_samples: 10_000,
            eval_per_label: 2000,
            epochs: 200,
            jsd_samples: 4096,
            seed: 0,
            d_latent: DEFAULT_LATENT_DIM,
            observation_noise_std: DEFAULT_NOISE_STD,
            trajectory_len: DEFAULT_TRAJECTORY_LEN,
            hidden_widths: vec![64, 64, 64],
            learning_rate: 1e-3,
            batch_size: 100,
        }
    }
}

impl WorldModelBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() || self.k_grid.contains(&0) {
            return Err(invalid("k grid must be non-empty with positive entries"));
        }
        if self.repetitions == 0 {
            return Err(invalid("need at least one repetition"));
        }
        if self.train_samples == 0 || self.eval_per_label == 0 || self.jsd_samples == 0 {
            return Err(invalid("sample counts must be positive"));
        }
        Ok(())
    }

    pub fn cell_seed(&self, k: usize, repetition: usize) -> u64 {
        derive_seed(self.seed, &[k as u64, repetition as u64])
    }
}

/// Metric means for one `(k, repetition)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub k: usize,
    pub repetition: usize,
    pub seed: u64,
    pub final_train_nll: f64,
    pub n_unimodal: usize,
    pub n_multimodal: usize,
    /// Indexed like [`MetricName::ALL`].
    pub unimodal: [f64; 4],
    pub multimodal: [f64; 4],
}

impl CellResult {
    pub fn mean(&self, label: Modality, metric: MetricName) -> f64 {
        let idx = MetricName::ALL.iter().position(|m| *m == metric).expect("known metric");
        match label {
            Modality::Unimodal => self.unimodal[idx],
            Modality::Multimodal => self.multimodal[idx],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSeparation {
    pub metric: MetricName,
    pub mean_unimodal: f64,
    pub mean_multimodal: f64,
    /// True iff `mean_multimodal <= mean_unimodal`.
    pub overlap: bool,
}

impl MetricSeparation {
    pub fn new(metric: MetricName, mean_unimodal: f64, mean_multimodal: f64) -> Self {
        Self {
            metric,
            mean_unimodal,
            mean_multimodal,
            overlap: mean_multimodal <= mean_unimodal,
        }
    }

    pub fn margin(&self) -> f64 {
        self.mean_multimodal - self.mean_unimodal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSummary {
    pub k: usize,
    /// Indexed like [`MetricName::ALL`].
    pub metrics: [MetricSeparation; 4],
}

impl KSummary {
    pub fn get(&self, metric: MetricName) -> &MetricSeparation {
        self.metrics.iter().find(|m| m.metric == metric).expect("all metrics present")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationResult {
    pub config: WorldModelBenchConfig,
    pub cells: Vec<CellResult>,
    pub per_k: Vec<KSummary>,
}

impl SeparationResult {
    /// Averages cell means over repetitions, per k in grid order.
    pub fn from_cells(config: WorldModelBenchConfig, mut cells: Vec<CellResult>) -> Self {
        cells.sort_by_key(|c| (c.k, c.repetition));
        let mut per_k = Vec::new();
        let mut ks: Vec<usize> = cells.iter().map(|c| c.k).collect();
        ks.dedup();
        for k in ks {
            let group: Vec<&CellResult> = cells.iter().filter(|c| c.k == k).collect();
            let n = group.len() as f64;
            let metrics = MetricName::ALL.map(|m| {
                let uni = group.iter().map(|c| c.mean(Modality::Unimodal, m)).sum::<f64>() / n;
                let multi = group.iter().map(|c| c.mean(Modality::Multimodal, m)).sum::<f64>() / n;
                MetricSeparation::new(m, uni, multi)
            });
            per_k.push(KSummary { k, metrics });
        }
        Self { config, cells, per_k }
    }

    pub fn summary(&self, k: usize) -> Option<&KSummary> {
        self.per_k.iter().find(|s| s.k == k)
    }

    /// `(k, repetition, label, metric, value)` rows in a stable order.
    pub fn long_rows(&self) -> Vec<LongRow> {
        let mut rows = Vec::new();
        for c in &self.cells {
            for label in [Modality::Unimodal, Modality::Multimodal] {
                for metric in MetricName::ALL {
                    rows.push(LongRow {
                        k: c.k,
                        repetition: c.repetition,
                        label,
                        metric,
                        value: c.mean(label, metric),
                    });
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRow {
    pub k: usize,
    pub repetition: usize,
    pub label: Modality,
    pub metric: MetricName,
    pub value: f64,
}

pub fn write_long_csv<W: std::io::Write>(w: W, rows: &[LongRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Training and held-out transitions for one cell; ids never overlap.
pub fn cell_datasets(
    cfg: &WorldModelBenchConfig,
    env: &LatentShiftEnv,
    k: usize,
    repetition: usize,
) -> Result<(Vec<TransitionSample>, Vec<TransitionSample>)> {
    let seed = cfg.cell_seed(k, repetition);
    let train_spec = TransitionSpec {
        n: cfg.train_samples,
        mask_fraction: 0.5,
        trajectory_len: cfg.trajectory_len,
        first_id: 0,
    };
    let eval_spec = TransitionSpec {
        n: 2 * cfg.eval_per_label,
        mask_fraction: 0.5,
        trajectory_len: cfg.trajectory_len,
        first_id: cfg.train_samples as u64,
    };
    Ok((
        gen_transitions_with(env, &train_spec, derive_seed(seed, &[0]))?,
        gen_transitions_with(env, &eval_spec, derive_seed(seed, &[1]))?,
    ))
}

fn run_cell(cfg: &WorldModelBenchConfig, env: &LatentShiftEnv, k: usize, repetition: usize) -> Result<CellResult> {
    let seed = cfg.cell_seed(k, repetition);
    let context = |e: Error| Error::InvalidArgument(format!("bench cell k={k} repetition={repetition} (seed {seed}): {e}"));
    let (train_set, eval_set) = cell_datasets(cfg, env, k, repetition).map_err(context)?;
    let data = transitions_to_dataset(&train_set, DatasetMeta::new("latent-env", seed)).map_err(context)?;
    let mdn_cfg = MdnConfig {
        hidden_widths: cfg.hidden_widths.clone(),
        seed: derive_seed(seed, &[2]),
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        ..MdnConfig::new(data.input_dim(), data.target_dim(), k)
    };
    let (model, history) = train(&mdn_cfg, &data).map_err(context)?;
    let (uni, n_uni, multi, n_multi) = evaluate_cell(cfg, &model, &eval_set, seed).map_err(context)?;
    Ok(CellResult {
        k,
        repetition,
        seed,
        final_train_nll: history.final_nll,
        n_unimodal: n_uni,
        n_multimodal: n_multi,
        unimodal: uni,
        multimodal: multi,
    })
}

type LabelMeans = ([f64; 4], usize, [f64; 4], usize);

fn evaluate_cell(
    cfg: &WorldModelBenchConfig,
    model: &crate::mdn::MdnModel,
    eval_set: &[TransitionSample],
    seed: u64,
) -> Result<LabelMeans> {
    let inputs: Vec<Vec<f64>> = eval_set.iter().map(TransitionSample::model_input).collect();
    let mixtures = model.predict(&inputs)?;
    let mut sums: BTreeMap<Modality, ([f64; 4], usize)> = BTreeMap::new();
    for (idx, (sample, m)) in eval_set.iter().zip(&mixtures).enumerate() {
        let est = EntropyEstimator::MonteCarlo {
            samples: cfg.jsd_samples,
            seed: derive_seed(seed, &[3, idx as u64]),
        };
        let s = all_metrics(m, est)?;
        let entry = sums.entry(sample.label).or_insert(([0.0; 4], 0));
        for (acc, name) in entry.0.iter_mut().zip(MetricName::ALL) {
            *acc += s.get(name);
        }
        entry.1 += 1;
    }
    let mean = |label| {
        let (acc, n) = sums.get(&label).copied().unwrap_or(([0.0; 4], 0));
        (acc.map(|v| if n > 0 { v / n as f64 } else { 0.0 }), n)
    };
    let (u, nu) = mean(Modality::Unimodal);
    let (m, nm) = mean(Modality::Multimodal);
    Ok((u, nu, m, nm))
}

/// Trains and evaluates every `(k, repetition)` cell; cells run in parallel
/// and are merged in `(k, repetition)` order.
pub fn run_worldmodel_bench(cfg: &WorldModelBenchConfig) -> Result<SeparationResult> {
    cfg.validate()?;
    let env = LatentShiftEnv::with_noise(cfg.d_latent, cfg.observation_noise_std)?;
    let keys: Vec<(usize, usize)> = cfg
        .k_grid
        .iter()
        .flat_map(|&k| (0..cfg.repetitions).map(move |r| (k, r)))
        .collect();
    let cells = keys
        .par_iter()
        .map(|&(k, r)| run_cell(cfg, &env, k, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeparationResult::from_cells(cfg.clone(), cells))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeparationReport {
    pub metric: MetricName,
    /// Smallest grid k from which no larger grid k overlaps; `None` if the
    /// largest k overlaps.
    pub min_separated_k: Option<usize>,
    pub separated_everywhere: bool,
    /// `(k, mean_multimodal − mean_unimodal)`.
    pub margins: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport {
    pub k_values: Vec<usize>,
    pub metrics: Vec<MetricSeparationReport>,
}

impl SeparationReport {
    pub fn get(&self, metric: MetricName) -> &MetricSeparationReport {
        self.metrics.iter().find(|m| m.metric == metric).expect("all metrics present")
    }
}

pub fn separation_report(result: &SeparationResult) -> SeparationReport {
    let k_values: Vec<usize> = result.per_k.iter().map(|s| s.k).collect();
    let metrics = MetricName::ALL
        .iter()
        .map(|&metric| {
            let seps: Vec<&MetricSeparation> = result.per_k.iter().map(|s| s.get(metric)).collect();
            let mut min_k = None;
            for (s, k) in seps.iter().zip(&k_values).rev() {
                if s.overlap {
                    break;
                }
                min_k = Some(*k);
            }
            MetricSeparationReport {
                metric,
                min_separated_k: min_k,
                separated_everywhere: seps.iter().all(|s| !s.overlap),
                margins: seps.iter().zip(&k_values).map(|(s, k)| (*k, s.margin())).collect(),
            }
        })
        .collect();
    SeparationReport { k_values, metrics }
}

impl fmt::Display for SeparationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.metrics {
            let min_k = m.min_separated_k.map_or("none".to_string(), |k| k.to_string());
            writeln!(f, "{:<6} separated from k = {min_k}", m.metric.as_str().to_uppercase())?;
            for (k, margin) in &m.margins {
                writeln!(f, "    k = {k:>3}  margin {margin:+.6}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(margins: &[(usize, f64)]) -> SeparationResult {
        let cfg = WorldModelBenchConfig {
            k_grid: margins.iter().map(|m| m.0).collect(),
            repetitions: 1,
            ..Default::default()
        };
        let cells = margins
            .iter()
            .map(|&(k, margin)| CellResult {
                k,
                repetition: 0,
                seed: 0,
                final_train_nll: 0.0,
                n_unimodal: 1,
                n_multimodal: 1,
                unimodal: [1.0; 4],
                multimodal: [1.0 + margin; 4],
            })
            .collect();
        SeparationResult::from_cells(cfg, cells)
    }

    #[test]
    fn report_for_fully_separated_result() {
        let r = separation_report(&synthetic(&[(2, 0.5), (4, 0.1), (8, 1.0)]));
        for m in &r.metrics {
            assert_eq!(m.min_separated_k, Some(2));
            assert!(m.separated_everywhere);
        }
    }

    #[test]
    fn report_skips_overlap_at_low_k() {
        let r = separation_report(&synthetic(&[(2, -0.5), (4, 0.1), (8, 1.0)]));
        assert_eq!(r.get(MetricName::Jsd).min_separated_k, Some(4));
        assert!(!r.get(MetricName::Jsd).separated_everywhere);
        let r = separation_report(&synthetic(&[(2, 0.5), (4, 0.0), (8, 1.0)]));
        assert_eq!(r.get(MetricName::Mce).min_separated_k, Some(8));
        let r = separation_report(&synthetic(&[(2, 0.5), (4, 0.2), (8, -1.0)]));
        assert_eq!(r.get(MetricName::Mce).min_separated_k, None);
        assert!(r.to_string().contains("separated from k = none"));
    }

    #[test]
    fn overlap_flag_semantics() {
        assert!(MetricSeparation::new(MetricName::Mce, 1.0, 1.0).overlap);
        assert!(MetricSeparation::new(MetricName::Mce, 1.0, 0.5).overlap);
        assert!(!MetricSeparation::new(MetricName::Mce, 1.0, 1.5).overlap);
    }

    #[test]
    fn aggregation_is_the_arithmetic_mean() {
        let cfg = WorldModelBenchConfig {
            k_grid: vec![3],
            repetitions: 3,
            ..Default::default()
        };
        let cells: Vec<CellResult> = (0..3)
            .map(|r| CellResult {
                k: 3,
                repetition: r,
                seed: r as u64,
                final_train_nll: 0.0,
                n_unimodal: 1,
                n_multimodal: 1,
                unimodal: [r as f64; 4],
                multimodal: [10.0 * r as f64, 1.0, 2.0, 3.0],
            })
            .rev()
            .collect();
        let res = SeparationResult::from_cells(cfg, cells);
        let s = res.summary(3).unwrap();
        assert_eq!(s.get(MetricName::Mce).mean_unimodal, 1.0);
        assert_eq!(s.get(MetricName::Mce).mean_multimodal, 10.0);
        assert_eq!(res.cells.iter().map(|c| c.repetition).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(res.long_rows().len(), 3 * 2 * 4);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-15.0, 15.0, 301);
        assert_eq!((g[0], g[150], g[300]), (-15.0, 0.0, 15.0));
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn config_validation() {
        assert!(WorldModelBenchConfig { k_grid: vec![], ..Default::default() }.validate().is_err());
        assert!(WorldModelBenchConfig { repetitions: 0, ..Default::default() }.validate().is_err());
        assert!(WorldModelBenchConfig::default().validate().is_ok());
        let bad = SineExperimentConfig { runs: 0, ..SineExperimentConfig::new(1, 0) };
        assert!(run_sine_experiment(&bad).is_err());
    }

    #[test]
    fn tiny_sine_experiment_is_deterministic() {
        let cfg = SineExperimentConfig {
            epochs: 2,
            n_points: 200,
            grid: linspace(-12.0, 12.0, 7),
            hidden_widths: vec![8],
            ..SineExperimentConfig::new(2, 5)
        };
        let a = run_sine_experiment(&cfg).unwrap();
        let b = run_sine_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mean_curves.len(), 7);
        for name in MetricName::ALL {
            for i in 0..7 {
                let direct = (a.runs[0].curves.get(name)[i] + a.runs[1].curves.get(name)[i]) / 2.0;
                assert_eq!(a.mean_curves.get(name)[i], direct);
            }
        }
        assert_ne!(a.run_seeds()[0], a.run_seeds()[1]);
    }

    #[test]
    fn tiny_bench_cell_runs_and_is_deterministic() {
        let cfg = WorldModelBenchConfig {
            k_grid: vec![2],
            repetitions: 1,
            train_samples: 200,
            eval_per_label: 20,
            epochs: 1,
            jsd_samples: 64,
            hidden_widths: vec![8],
            d_latent: 3,
            ..Default::default()
        };
        let a = run_worldmodel_bench(&cfg).unwrap();
        assert_eq!(a, run_worldmodel_bench(&cfg).unwrap());
        assert_eq!(a.cells.len(), 1);
        assert_eq!((a.cells[0].n_unimodal, a.cells[0].n_multimodal), (20, 20));
    }
}
