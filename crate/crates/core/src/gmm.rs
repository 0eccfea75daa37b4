//! Diagonal Gaussian mixtures.
//!
//! A [`Mixture`] is the object every multimodality metric consumes. Components
//! carry per-dimension standard deviations; all densities are evaluated in log
//! space and combined with log-sum-exp.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Smallest standard deviation a component may carry.
pub const STD_FLOOR: f64 = 1e-7;

/// Absolute tolerance on `Σ π = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Number of trapezoid nodes used by the 1-D quadrature entropy estimator.
pub const QUADRATURE_POINTS: usize = 20001;

/// Half-width of the quadrature support envelope, in units of the largest σ.
pub const ENVELOPE_SIGMAS: f64 = 10.0;

/// Default Monte Carlo sample count for mixture entropy in d > 1.
pub const DEFAULT_MC_SAMPLES: usize = 4096;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// One diagonal Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: Vec<f64>,
    std: Vec<f64>,
    // −Σ ln σ_j − d/2 ln 2π
    log_norm: f64,
}

impl GaussianComponent {
    /// Builds a component, raising every σ below [`STD_FLOOR`] to the floor.
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(invalid("component dimension must be at least 1"));
        }
        if mean.len() != std.len() {
            return Err(invalid(format!(
                "mean has dimension {} but std has dimension {}",
                mean.len(),
                std.len()
            )));
        }
        if let Some(m) = mean.iter().find(|m| !m.is_finite()) {
            return Err(invalid(format!("non-finite mean {m}")));
        }
        if let Some(s) = std.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(invalid(format!("std must be finite and positive, got {s}")));
        }
        let std: Vec<f64> = std.into_iter().map(|s| s.max(STD_FLOOR)).collect();
        let log_norm = -std.iter().map(|s| s.ln()).sum::<f64>() - HALF_LN_2PI * std.len() as f64;
        Ok(Self {
            mean,
            std,
            log_norm,
        })
    }

    pub fn univariate(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![mean], vec![std])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    /// Log density at `y`; the caller guarantees matching dimension.
    pub(crate) fn log_density_unchecked(&self, y: &[f64]) -> f64 {
        let mut quad = 0.0;
        for ((yj, mj), sj) in y.iter().zip(&self.mean).zip(&self.std) {
            let z = (yj - mj) / sj;
            quad += z * z;
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_density(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(self.log_density_unchecked(y))
    }

    /// Same σ, mean shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        check_dim(self.dim(), shift.len())?;
        let mean = self.mean.iter().zip(shift).map(|(m, s)| m + s).collect();
        Self::new(mean, self.std.clone())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        for (m, s) in self.mean.iter().zip(&self.std) {
            let z: f64 = StandardNormal.sample(rng);
            out.push(m + s * z);
        }
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(invalid(format!(
            "dimension mismatch: expected {expected}, got {got}"
        )));
    }
    Ok(())
}

/// `D_KL(a || b)` between diagonal Gaussians, in nats.
pub fn kl_gaussian(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(kl_unchecked(a, b))
}

pub(crate) fn kl_unchecked(a: &GaussianComponent, b: &GaussianComponent) -> f64 {
    let mut kl = 0.0;
    for j in 0..a.dim() {
        let (sa, sb) = (a.std[j], b.std[j]);
        let dm = a.mean[j] - b.mean[j];
        kl += (sb / sa).ln() + (sa * sa + dm * dm) / (2.0 * sb * sb) - 0.5;
    }
    // rounding can leave a tiny negative residue for identical inputs
    kl.max(0.0)
}

/// Closed-form 2-Wasserstein distance between diagonal Gaussians.
pub fn w2_gaussian(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(w2_unchecked(a, b))
}

pub(crate) fn w2_unchecked(a: &GaussianComponent, b: &GaussianComponent) -> f64 {
    let mut sq = 0.0;
    for j in 0..a.dim() {
        let dm = a.mean[j] - b.mean[j];
        let ds = a.std[j] - b.std[j];
        sq += dm * dm + ds * ds;
    }
    sq.sqrt()
}

/// Differential entropy `Σ_j ½ ln(2πe σ_j²)`.
pub fn entropy_gaussian(c: &GaussianComponent) -> f64 {
    c.std
        .iter()
        .map(|s| 0.5 * (2.0 * PI * std::f64::consts::E * s * s).ln())
        .sum()
}

/// Weights plus components; weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr", into = "MixtureRepr")]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

/// Wire format: `{"weights":[..], "means":[[..]], "stds":[[..]]}`.
#[derive(Serialize, Deserialize)]
struct MixtureRepr {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

impl TryFrom<MixtureRepr> for Mixture {
    type Error = Error;

    fn try_from(r: MixtureRepr) -> Result<Self> {
        Mixture::from_parts(r.weights, r.means, r.stds)
    }
}

impl From<Mixture> for MixtureRepr {
    fn from(m: Mixture) -> Self {
        MixtureRepr {
            means: m.components.iter().map(|c| c.mean.clone()).collect(),
            stds: m.components.iter().map(|c| c.std.clone()).collect(),
            weights: m.weights,
        }
    }
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(invalid(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(invalid("all components must share one dimension"));
        }
        if let Some(w) = weights
            .iter()
            .find(|w| !(w.is_finite() && (0.0..=1.0).contains(*w)))
        {
            return Err(invalid(format!("weight {w} outside [0, 1]")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            weights,
            components,
        })
    }

    /// Builds a mixture from parallel weight, mean and std arrays.
    pub fn from_parts(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        if means.len() != stds.len() {
            return Err(invalid(format!(
                "{} means but {} stds",
                means.len(),
                stds.len()
            )));
        }
        let components = means
            .into_iter()
            .zip(stds)
            .map(|(m, s)| GaussianComponent::new(m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, components)
    }

    /// 1-D convenience constructor from `(π, μ, σ)` triples.
    pub fn univariate(parts: &[(f64, f64, f64)]) -> Result<Self> {
        let weights = parts.iter().map(|p| p.0).collect();
        let components = parts
            .iter()
            .map(|&(_, m, s)| GaussianComponent::univariate(m, s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, components)
    }

    pub fn single(component: GaussianComponent) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Index of the largest weight; ties resolve to the lowest index.
    pub fn primary_index(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.weights.iter().enumerate().skip(1) {
            if w > self.weights[best] {
                best = i;
            }
        }
        best
    }

    /// `log Σ π_i N(y | μ_i, σ_i²)` via log-sum-exp.
    pub fn log_pdf(&self, y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), y.len())?;
        Ok(self.log_pdf_unchecked(y))
    }

    pub(crate) fn log_pdf_unchecked(&self, y: &[f64]) -> f64 {
        let mut terms = [0.0f64; 64];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if self.k() <= terms.len() {
            &mut terms[..self.k()]
        } else {
            heap.resize(self.k(), 0.0);
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (slot, (w, c)) in buf.iter_mut().zip(self.weights.iter().zip(&self.components)) {
            *slot = if *w > 0.0 {
                w.ln() + c.log_density_unchecked(y)
            } else {
                f64::NEG_INFINITY
            };
            max = max.max(*slot);
        }
        let sum: f64 = buf.iter().map(|t| (t - max).exp()).sum();
        max + sum.ln()
    }

    /// Draws `n` samples: a categorical component choice followed by a
    /// per-dimension Gaussian draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Vec<f64>> {
        self.sample_indexed(rng, n).into_iter().map(|(_, y)| y).collect()
    }

    /// Like [`Mixture::sample`] but also reports which component produced each draw.
    pub fn sample_indexed<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<(usize, Vec<f64>)> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let i = self.choose_component(rng.random::<f64>());
            let mut y = Vec::with_capacity(self.dim());
            self.components[i].draw(rng, &mut y);
            out.push((i, y));
        }
        out
    }

    fn choose_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in self.weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
        last_positive
    }

    /// Every component mean shifted by `shift`.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        let components = self
            .components
            .iter()
            .map(|c| c.translated(shift))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.weights.clone(), components)
    }

    /// Applies `perm` to weights and components simultaneously.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k()];
        if perm.len() != self.k() || perm.iter().any(|&p| p >= self.k() || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the component indices"));
        }
        Self::new(
            perm.iter().map(|&p| self.weights[p]).collect(),
            perm.iter().map(|&p| self.components[p].clone()).collect(),
        )
    }

    /// `[min μ − 10·max σ, max μ + 10·max σ]` over positive-weight components, 1-D only.
    pub fn support_envelope(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut smax: f64 = 0.0;
        for (w, c) in self.weights.iter().zip(&self.components) {
            if *w <= 0.0 {
                continue;
            }
            lo = lo.min(c.mean[0]);
            hi = hi.max(c.mean[0]);
            smax = smax.max(c.std[0]);
        }
        (lo - ENVELOPE_SIGMAS * smax, hi + ENVELOPE_SIGMAS * smax)
    }
}

/// How to estimate the differential entropy of a mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntropyEstimator {
    /// Component-stratified Monte Carlo with a fixed seed.
    MonteCarlo { samples: usize, seed: u64 },
    /// Trapezoid rule over the support envelope; 1-D only.
    Quadrature { points: usize },
}

impl EntropyEstimator {
    /// Quadrature when `dim == 1`, otherwise Monte Carlo with
    /// [`DEFAULT_MC_SAMPLES`] samples.
    pub fn default_for(dim: usize, seed: u64) -> Self {
        if dim == 1 {
            EntropyEstimator::Quadrature {
                points: QUADRATURE_POINTS,
            }
        } else {
            EntropyEstimator::MonteCarlo {
                samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }

    /// `(sample count, seed)` for Monte Carlo estimators.
    pub fn mc_meta(&self) -> Option<(usize, u64)> {
        match *self {
            EntropyEstimator::MonteCarlo { samples, seed } => Some((samples, seed)),
            EntropyEstimator::Quadrature { .. } => None,
        }
    }
}

/// Estimates `−E[log p(Y)]` for `Y ~ m`, in nats.
pub fn mixture_entropy(m: &Mixture, estimator: EntropyEstimator) -> Result<f64> {
    match estimator {
        EntropyEstimator::Quadrature { points } => {
            if m.dim() != 1 {
                return Err(Error::Unsupported(format!(
                    "quadrature entropy needs d = 1, mixture has d = {}",
                    m.dim()
                )));
            }
            if points < 3 {
                return Err(invalid("quadrature needs at least 3 points"));
            }
            Ok(quadrature_entropy(m, points))
        }
        EntropyEstimator::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(invalid("Monte Carlo entropy needs at least one sample"));
            }
            Ok(stratified_mc_entropy(m, samples, seed))
        }
    }
}

fn quadrature_entropy(m: &Mixture, points: usize) -> f64 {
    let (lo, hi) = m.support_envelope();
    let h = (hi - lo) / (points - 1) as f64;
    let mut acc = 0.0;
    for i in 0..points {
        let y = lo + h * i as f64;
        let lp = m.log_pdf_unchecked(&[y]);
        let p = lp.exp();
        let f = if p > 0.0 { -p * lp } else { 0.0 };
        acc += if i == 0 || i == points - 1 { 0.5 * f } else { f };
    }
    acc * h
}

/// Splits `n` draws over components in proportion to their weights
/// (largest remainder, at least one draw per positive-weight component when
/// `n` allows), then weights each stratum mean by its exact π.
fn stratified_mc_entropy(m: &Mixture, n: usize, seed: u64) -> f64 {
    let counts = stratum_sizes(m.weights(), n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = Vec::with_capacity(m.dim());
    let mut h = 0.0;
    for ((w, c), &n_i) in m.weights.iter().zip(&m.components).zip(&counts) {
        if n_i == 0 {
            continue;
        }
        let mut acc = 0.0;
        for _ in 0..n_i {
            c.draw(&mut rng, &mut y);
            acc += m.log_pdf_unchecked(&y);
        }
        h -= w * acc / n_i as f64;
    }
    h
}

pub(crate) fn stratum_sizes(weights: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = weights.iter().map(|w| (w * n as f64).floor() as usize).collect();
    let mut rema: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(i, w)| (w * n as f64 - counts[i] as f64, i))
        .collect();
    // larger remainder first, lower index on ties
    rema.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = counts.iter().sum();
    for &(_, i) in rema.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    // every positive-weight component gets a draw, taken from the largest stratum
    for i in 0..weights.len() {
        if weights[i] > 0.0 && counts[i] == 0 {
            let (big, &c) = counts.iter().enumerate().max_by_key(|(j, c)| (**c, std::cmp::Reverse(*j))).expect("k >= 1");
            if c > 1 {
                counts[big] -= 1;
                counts[i] = 1;
            }
        }
    }
    counts
}
