//! Data generators with known modality structure.
//!
//! * [`gen_inverse_sine`]: the inverted noisy sine regression problem, whose
//!   conditional target distribution has up to five branches near the origin
//!   and a single branch for large |x|.
//! * [`LatentShiftEnv`] plus [`gen_transitions`]: a low-dimensional latent
//!   environment where each action shifts the state by a fixed offset. Hiding
//!   the action (masking) turns a unimodal transition into a four-way
//!   ambiguous one, which gives every sample a ground-truth modality label.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

impl DatasetMeta {
    pub fn new(generator: impl Into<String>, seed: u64) -> Self {
        Self {
            generator: generator.into(),
            seed,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

/// Paired regression inputs and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, generator: &str, seed: u64) -> Result<Self> {
        Self::with_meta(inputs, targets, DatasetMeta::new(generator, seed))
    }

    pub fn with_meta(inputs: Vec<Vec<f64>>, targets: Vec<Vec<f64>>, meta: DatasetMeta) -> Result<Self> {
        if inputs.is_empty() {
            return Err(invalid("dataset must contain at least one sample"));
        }
        if inputs.len() != targets.len() {
            return Err(invalid(format!("{} inputs but {} targets", inputs.len(), targets.len())));
        }
        let (di, dt) = (inputs[0].len(), targets[0].len());
        if di == 0 || dt == 0 {
            return Err(invalid("inputs and targets need at least one column"));
        }
        if inputs.iter().any(|r| r.len() != di) || targets.iter().any(|r| r.len() != dt) {
            return Err(invalid("ragged dataset rows"));
        }
        Ok(Self { inputs, targets, meta })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn target_dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Writes `input_0..,target_0..` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..self.input_dim())
            .map(|i| format!("input_{i}"))
            .chain((0..self.target_dim()).map(|i| format!("target_{i}")))
            .collect();
        w.write_record(&header)?;
        for (x, y) in self.inputs.iter().zip(&self.targets) {
            w.write_record(x.iter().chain(y).map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, meta: DatasetMeta) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        let di = header.iter().filter(|h| h.starts_with("input_")).count();
        let dt = header.iter().filter(|h| h.starts_with("target_")).count();
        if di + dt != header.len() || di == 0 || dt == 0 {
            return Err(Error::Format(format!("{} is not a regression dataset CSV", path.display())));
        }
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("bad number {v:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            inputs.push(vals[..di].to_vec());
            targets.push(vals[di..].to_vec());
        }
        Self::with_meta(inputs, targets, meta)
    }
}

/// JSON sidecar written next to every dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub format_version: u32,
    pub kind: DatasetKind,
    pub rows: usize,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Regression,
    Transitions,
}

impl DatasetSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if s.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} is not supported",
                s.format_version
            )));
        }
        Ok(s)
    }
}

pub const SINE_T_RANGE: (f64, f64) = (-10.0, 10.0);

/// `x + 7·sin(0.7·x)`.
pub fn sine_forward(t: f64) -> f64 {
    t + 7.0 * (0.7 * t).sin()
}

/// Inverse sine dataset with unit Gaussian noise.
pub fn gen_inverse_sine(n: usize, seed: u64) -> Dataset {
    gen_inverse_sine_with(n, 1.0, seed)
}

/// `n` linearly spaced `t ∈ [−10, 10]`, noisy `f(t)` as input and `t` as target.
pub fn gen_inverse_sine_with(n: usize, noise_std: f64, seed: u64) -> Dataset {
    let n = n.max(1);
    let (lo, hi) = SINE_T_RANGE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_std.max(0.0)).expect("finite std");
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let t = if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 };
        let eps = if noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        inputs.push(vec![sine_forward(t) + eps]);
        targets.push(vec![t]);
    }
    let meta = DatasetMeta::new("inverse-sine", seed).with("n", n).with("noise_std", noise_std);
    Dataset::with_meta(inputs, targets, meta).expect("n >= 1")
}

/// One of the four environment actions, or the masked placeholder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ActionToken {
    Left,
    Right,
    Jump,
    Noop,
    Masked,
}

impl ActionToken {
    pub const VALID: [ActionToken; 4] = [ActionToken::Left, ActionToken::Right, ActionToken::Jump, ActionToken::Noop];
    /// Width of the one-hot action encoding, masked slot included.
    pub const ONE_HOT_WIDTH: usize = 5;

    pub fn index(self) -> usize {
        match self {
            ActionToken::Left => 0,
            ActionToken::Right => 1,
            ActionToken::Jump => 2,
            ActionToken::Noop => 3,
            ActionToken::Masked => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionToken::Left => "LEFT",
            ActionToken::Right => "RIGHT",
            ActionToken::Jump => "JUMP",
            ActionToken::Noop => "NOOP",
            ActionToken::Masked => "MASKED",
        }
    }
}

impl fmt::Display for ActionToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionToken {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ActionToken::Left, ActionToken::Right, ActionToken::Jump, ActionToken::Noop, ActionToken::Masked]
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown action token {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Unimodal,
    Multimodal,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Unimodal => "UNIMODAL",
            Modality::Multimodal => "MULTIMODAL",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UNIMODAL" => Ok(Modality::Unimodal),
            "MULTIMODAL" => Ok(Modality::Multimodal),
            _ => Err(invalid(format!("unknown modality label {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSample {
    pub id: u64,
    pub state: Vec<f64>,
    /// What the model sees; `MASKED` hides the action.
    pub action_token: ActionToken,
    /// The action that actually drove the dynamics.
    pub driving_action: ActionToken,
    pub next_state: Vec<f64>,
    pub label: Modality,
}

impl TransitionSample {
    /// `state ⊕ one_hot(action_token)`, the MDN input.
    pub fn model_input(&self) -> Vec<f64> {
        encode_input(&self.state, self.action_token)
    }
}

pub fn encode_input(state: &[f64], token: ActionToken) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + ActionToken::ONE_HOT_WIDTH);
    x.extend_from_slice(state);
    let mut hot = [0.0; ActionToken::ONE_HOT_WIDTH];
    hot[token.index()] = 1.0;
    x.extend_from_slice(&hot);
    x
}

/// Synthetic latent dynamics: `next = clamp(state + offset(action) + η, box)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentShiftEnv {
    pub d_latent: usize,
    /// Offsets for LEFT, RIGHT, JUMP, NOOP in that order.
    pub action_offsets: [Vec<f64>; 4],
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub observation_noise_std: f64,
}

pub const DEFAULT_LATENT_DIM: usize = 8;
pub const DEFAULT_SHIFT: f64 = 2.0;
pub const DEFAULT_NOISE_STD: f64 = 0.05;
pub const DEFAULT_BOX: f64 = 10.0;
pub const MIN_OFFSET_SEPARATION: f64 = 1.0;

impl LatentShiftEnv {
    /// LEFT = −2·e₀, RIGHT = +2·e₀, JUMP = +2·e₁, NOOP = 0, box `[−10, 10]^d`,
    /// noise σ = 0.05.
    pub fn new(d_latent: usize) -> Result<Self> {
        Self::with_noise(d_latent, DEFAULT_NOISE_STD)
    }

    pub fn with_noise(d_latent: usize, observation_noise_std: f64) -> Result<Self> {
        if d_latent < 2 {
            return Err(invalid("latent dimension must be at least 2"));
        }
        let axis = |j: usize, v: f64| {
            let mut o = vec![0.0; d_latent];
            o[j] = v;
            o
        };
        let env = Self {
            d_latent,
            action_offsets: [
                axis(0, -DEFAULT_SHIFT),
                axis(0, DEFAULT_SHIFT),
                axis(1, DEFAULT_SHIFT),
                vec![0.0; d_latent],
            ],
            state_low: vec![-DEFAULT_BOX; d_latent],
            state_high: vec![DEFAULT_BOX; d_latent],
            observation_noise_std,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_latent;
        if self.action_offsets.iter().any(|o| o.len() != d) || self.state_low.len() != d || self.state_high.len() != d {
            return Err(invalid("environment vectors must have dimension d_latent"));
        }
        if self.state_low.iter().zip(&self.state_high).any(|(l, h)| !(l < h)) {
            return Err(invalid("state box must have low < high in every dimension"));
        }
        if !(self.observation_noise_std.is_finite() && self.observation_noise_std >= 0.0) {
            return Err(invalid("observation noise std must be finite and non-negative"));
        }
        for a in 0..4 {
            for b in a + 1..4 {
                if distance(&self.action_offsets[a], &self.action_offsets[b]) < MIN_OFFSET_SEPARATION {
                    return Err(invalid(format!(
                        "offsets for {} and {} are closer than {MIN_OFFSET_SEPARATION}",
                        ActionToken::VALID[a],
                        ActionToken::VALID[b]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn offset(&self, action: ActionToken) -> Result<&[f64]> {
        if action == ActionToken::Masked {
            return Err(invalid("MASKED is not an environment action; masking happens at dataset assembly"));
        }
        Ok(&self.action_offsets[action.index()])
    }

    /// Deterministic part of a step: `clamp(state + offset)`.
    pub fn mean_next_state(&self, state: &[f64], action: ActionToken) -> Result<Vec<f64>> {
        let offset = self.offset(action)?;
        if state.len() != self.d_latent {
            return Err(invalid(format!("state has dimension {}, expected {}", state.len(), self.d_latent)));
        }
        Ok(self.clamp(state.iter().zip(offset).map(|(s, o)| s + o).collect()))
    }

    pub fn step<R: Rng + ?Sized>(&self, state: &[f64], action: ActionToken, rng: &mut R) -> Result<Vec<f64>> {
        let offset = self.offset(action)?;
        if state.len() != self.d_latent {
            return Err(invalid(format!("state has dimension {}, expected {}", state.len(), self.d_latent)));
        }
        let mut next: Vec<f64> = state.iter().zip(offset).map(|(s, o)| s + o).collect();
        if self.observation_noise_std > 0.0 {
            let noise = Normal::new(0.0, self.observation_noise_std).expect("validated std");
            for v in &mut next {
                *v += noise.sample(rng);
            }
        }
        Ok(self.clamp(next))
    }

    fn clamp(&self, mut v: Vec<f64>) -> Vec<f64> {
        for ((x, lo), hi) in v.iter_mut().zip(&self.state_low).zip(&self.state_high) {
            *x = x.clamp(*lo, *hi);
        }
        v
    }

    /// Start state drawn uniformly from the central half of the box.
    pub fn random_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.state_low
            .iter()
            .zip(&self.state_high)
            .map(|(lo, hi)| {
                let (c, half) = (0.5 * (lo + hi), 0.25 * (hi - lo));
                rng.random_range(c - half..c + half)
            })
            .collect()
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `env_step`: one stochastic transition.
pub fn env_step<R: Rng + ?Sized>(env: &LatentShiftEnv, state: &[f64], action: ActionToken, rng: &mut R) -> Result<Vec<f64>> {
    env.step(state, action, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub n: usize,
    pub mask_fraction: f64,
    pub trajectory_len: usize,
    /// Id of the first emitted sample; later samples count up from it.
    pub first_id: u64,
}

pub const DEFAULT_TRAJECTORY_LEN: usize = 10;

impl TransitionSpec {
    pub fn new(n: usize, mask_fraction: f64) -> Self {
        Self {
            n,
            mask_fraction,
            trajectory_len: DEFAULT_TRAJECTORY_LEN,
            first_id: 0,
        }
    }
}

/// Random-policy rollouts with the first part of each trajectory masked.
pub fn gen_transitions(env: &LatentShiftEnv, n: usize, mask_fraction: f64, seed: u64) -> Result<Vec<TransitionSample>> {
    gen_transitions_with(env, &TransitionSpec::new(n, mask_fraction), seed)
}

/// Trajectory `[s, e)` of the global sample stream masks its first
/// `round(e·f) − round(s·f)` steps, so the total masked count is `round(n·f)`.
pub fn gen_transitions_with(env: &LatentShiftEnv, spec: &TransitionSpec, seed: u64) -> Result<Vec<TransitionSample>> {
    env.validate()?;
    if spec.n == 0 {
        return Err(invalid("need at least one transition"));
    }
    if !(0.0..=1.0).contains(&spec.mask_fraction) {
        return Err(invalid(format!("mask fraction {} outside [0, 1]", spec.mask_fraction)));
    }
    if spec.trajectory_len == 0 {
        return Err(invalid("trajectory length must be positive"));
    }
    let f = spec.mask_fraction;
    let masked_upto = |i: usize| (i as f64 * f).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.n);
    let mut start = 0;
    while start < spec.n {
        let end = (start + spec.trajectory_len).min(spec.n);
        let n_masked = masked_upto(end) - masked_upto(start);
        let mut state = env.random_start(&mut rng);
        for step in 0..end - start {
            let action = ActionToken::VALID[rng.random_range(0..4)];
            let next = env.step(&state, action, &mut rng)?;
            let masked = step < n_masked;
            out.push(TransitionSample {
                id: spec.first_id + (start + step) as u64,
                state: std::mem::replace(&mut state, next.clone()),
                action_token: if masked { ActionToken::Masked } else { action },
                driving_action: action,
                next_state: next,
                label: if masked { Modality::Multimodal } else { Modality::Unimodal },
            });
        }
        start = end;
    }
    Ok(out)
}

/// Regression view of transitions: `state ⊕ one_hot(token) → next_state`.
pub fn transitions_to_dataset(samples: &[TransitionSample], meta: DatasetMeta) -> Result<Dataset> {
    Dataset::with_meta(
        samples.iter().map(TransitionSample::model_input).collect(),
        samples.iter().map(|s| s.next_state.clone()).collect(),
        meta,
    )
}

/// Writes `state_0..,action,next_0..,label` rows.
pub fn write_transitions_csv(path: &Path, samples: &[TransitionSample]) -> Result<()> {
    let d = samples.first().map_or(0, |s| s.state.len());
    let mut w = csv::Writer::from_path(path)?;
    let header: Vec<String> = (0..d)
        .map(|i| format!("state_{i}"))
        .chain(std::iter::once("action".to_string()))
        .chain((0..d).map(|i| format!("next_{i}")))
        .chain(std::iter::once("label".to_string()))
        .collect();
    w.write_record(&header)?;
    for s in samples {
        let row: Vec<String> = s
            .state
            .iter()
            .map(f64::to_string)
            .chain(std::iter::once(s.action_token.to_string()))
            .chain(s.next_state.iter().map(f64::to_string))
            .chain(std::iter::once(s.label.to_string()))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a transitions CSV back; ids are row indices and the driving action
/// of masked rows is unknown, so it is recorded as `MASKED`.
pub fn read_transitions_csv(path: &Path) -> Result<Vec<TransitionSample>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let d = header.iter().filter(|h| h.starts_with("state_")).count();
    if d == 0 || header.len() != 2 * d + 2 {
        return Err(Error::Format(format!("{} is not a transitions CSV", path.display())));
    }
    let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Format(format!("bad number {v:?}: {e}")));
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let state = (0..d).map(|j| num(&rec[j])).collect::<Result<Vec<_>>>()?;
        let action_token: ActionToken = rec[d].parse()?;
        let next_state = (0..d).map(|j| num(&rec[d + 1 + j])).collect::<Result<Vec<_>>>()?;
        let label: Modality = rec[2 * d + 1].parse()?;
        if (label == Modality::Multimodal) != (action_token == ActionToken::Masked) {
            return Err(Error::Format(format!("row {i}: label {label} disagrees with action {action_token}")));
        }
        out.push(TransitionSample {
            id: i as u64,
            state,
            action_token,
            driving_action: action_token,
            next_state,
            label,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sine_shape_and_range() {
        let d = gen_inverse_sine(3000, 1);
        assert_eq!(d.len(), 3000);
        assert_eq!(d.targets[0][0], -10.0);
        assert_eq!(d.targets[2999][0], 10.0);
        assert!(d.targets.iter().all(|t| (-10.0..=10.0).contains(&t[0])));
        assert_eq!(d, gen_inverse_sine(3000, 1));
        assert_ne!(d.inputs, gen_inverse_sine(3000, 2).inputs);
    }

    #[test]
    fn noiseless_inverse_sine_passes_through_origin() {
        let d = gen_inverse_sine_with(3, 0.0, 0);
        assert_eq!(d.inputs[1], vec![0.0]);
        assert_eq!(d.targets[1], vec![0.0]);
        assert!((d.inputs[2][0] - sine_forward(10.0)).abs() < 1e-12);
    }

    #[test]
    fn noop_and_right_without_noise() {
        let env = LatentShiftEnv::with_noise(8, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = vec![0.5; 8];
        assert_eq!(env.step(&s, ActionToken::Noop, &mut rng).unwrap(), s);
        let right = env.step(&[0.0; 8], ActionToken::Right, &mut rng).unwrap();
        let mut expected = vec![0.0; 8];
        expected[0] = 2.0;
        assert_eq!(right, expected);
        assert!(env.step(&s, ActionToken::Masked, &mut rng).is_err());
        assert!(env.step(&[0.0; 3], ActionToken::Noop, &mut rng).is_err());
    }

    #[test]
    fn step_clamps_to_box() {
        let env = LatentShiftEnv::with_noise(2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(env.step(&[9.5, 0.0], ActionToken::Right, &mut rng).unwrap(), vec![10.0, 0.0]);
    }

    #[test]
    fn noisy_steps_center_on_offset() {
        let env = LatentShiftEnv::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut mean = vec![0.0; 8];
        for _ in 0..n {
            let next = env.step(&[0.0; 8], ActionToken::Right, &mut rng).unwrap();
            for (m, v) in mean.iter_mut().zip(&next) {
                *m += v / n as f64;
            }
        }
        let se = env.observation_noise_std / (n as f64).sqrt();
        let offset = env.offset(ActionToken::Right).unwrap();
        for (m, o) in mean.iter().zip(offset) {
            assert!((m - o).abs() < 3.0 * se, "{m} vs {o}");
        }
    }

    #[test]
    fn offsets_are_separated() {
        let env = LatentShiftEnv::new(8).unwrap();
        let mut bad = env.clone();
        bad.action_offsets[3] = bad.action_offsets[2].clone();
        assert!(bad.validate().is_err());
        assert!(LatentShiftEnv::new(1).is_err());
    }

    #[test]
    fn mask_fraction_extremes() {
        let env = LatentShiftEnv::new(4).unwrap();
        let none = gen_transitions(&env, 237, 0.0, 1).unwrap();
        assert!(none.iter().all(|s| s.label == Modality::Unimodal && s.action_token != ActionToken::Masked));
        let all = gen_transitions(&env, 237, 1.0, 1).unwrap();
        assert!(all.iter().all(|s| s.label == Modality::Multimodal && s.action_token == ActionToken::Masked));
    }

    #[test]
    fn half_masking_splits_evenly_and_masks_first() {
        let env = LatentShiftEnv::new(8).unwrap();
        let samples = gen_transitions(&env, 10_000, 0.5, 3).unwrap();
        let masked = samples.iter().filter(|s| s.label == Modality::Multimodal).count();
        assert!((masked as i64 - 5000).abs() <= 1);
        for traj in samples.chunks(DEFAULT_TRAJECTORY_LEN) {
            let labels: Vec<_> = traj.iter().map(|s| s.label).collect();
            let first_unimodal = labels.iter().position(|l| *l == Modality::Unimodal).unwrap_or(labels.len());
            assert!(labels[first_unimodal..].iter().all(|l| *l == Modality::Unimodal));
        }
        for s in &samples {
            assert_eq!(s.label == Modality::Multimodal, s.action_token == ActionToken::Masked);
            assert_ne!(s.driving_action, ActionToken::Masked);
        }
        let odd = gen_transitions(&env, 10_001, 0.3, 3).unwrap();
        let m = odd.iter().filter(|s| s.label == Modality::Multimodal).count();
        assert!((m as f64 - 3000.3).abs() <= 1.0);
    }

    #[test]
    fn trajectories_chain_states() {
        let env = LatentShiftEnv::new(3).unwrap();
        let samples = gen_transitions(&env, 40, 0.5, 8).unwrap();
        for traj in samples.chunks(DEFAULT_TRAJECTORY_LEN) {
            for w in traj.windows(2) {
                assert_eq!(w[0].next_state, w[1].state);
            }
        }
        assert_eq!(samples, gen_transitions(&env, 40, 0.5, 8).unwrap());
        assert!(gen_transitions(&env, 0, 0.5, 8).is_err());
        assert!(gen_transitions(&env, 10, 1.5, 8).is_err());
    }

    #[test]
    fn masked_transitions_are_multimodal_valid_ones_are_not() {
        let env = LatentShiftEnv::new(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let state = vec![0.0; 8];
        let centers: Vec<Vec<f64>> = ActionToken::VALID
            .iter()
            .map(|a| env.mean_next_state(&state, *a).unwrap())
            .collect();
        // masked: the driving action is uniform and unknown to the observer
        let mut hits = [0usize; 4];
        let mut spread = [0.0f64; 4];
        for _ in 0..4000 {
            let a = ActionToken::VALID[rng.random_range(0..4)];
            let next = env.step(&state, a, &mut rng).unwrap();
            let (best, dist) = centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, distance(c, &next)))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            hits[best] += 1;
            spread[best] = spread[best].max(dist);
        }
        assert!(hits.iter().filter(|h| **h > 0).count() >= 2);
        for a in 0..4 {
            for b in a + 1..4 {
                assert!(distance(&centers[a], &centers[b]) >= 10.0 * env.observation_noise_std);
            }
            assert!(spread[a] < 0.5 * MIN_OFFSET_SEPARATION);
        }
        // a known action yields one tight cluster
        for _ in 0..1000 {
            let next = env.step(&state, ActionToken::Jump, &mut rng).unwrap();
            assert!(distance(&next, &centers[2]) < 0.5);
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = gen_inverse_sine(50, 2);
        let p = dir.path().join("d.csv");
        d.write_csv(&p).unwrap();
        let back = Dataset::read_csv(&p, d.meta.clone()).unwrap();
        assert_eq!(back, d);

        let env = LatentShiftEnv::new(3).unwrap();
        let t = gen_transitions(&env, 30, 0.5, 1).unwrap();
        let p = dir.path().join("t.csv");
        write_transitions_csv(&p, &t).unwrap();
        let back = read_transitions_csv(&p).unwrap();
        assert_eq!(back.len(), 30);
        for (a, b) in t.iter().zip(&back) {
            assert_eq!((&a.state, a.action_token, &a.next_state, a.label), (&b.state, b.action_token, &b.next_state, b.label));
        }
        assert!(Dataset::read_csv(&p, d.meta).is_err());
    }

    #[test]
    fn model_input_encodes_token() {
        let x = encode_input(&[1.0, 2.0], ActionToken::Masked);
        assert_eq!(x, vec![1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!("masked".parse::<ActionToken>().unwrap(), ActionToken::Masked);
    }
}
