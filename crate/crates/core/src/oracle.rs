//! Slow numerical reference values for the closed forms in [`crate::gmm`].
//!
//! Nothing in the training or metric paths calls into this module. It backs the
//! cross-check suite run by `mixmode oracle-check` and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::gmm::{
    kl_gaussian, mixture_entropy, w2_gaussian, EntropyEstimator, GaussianComponent, Mixture, ENVELOPE_SIGMAS,
    QUADRATURE_POINTS,
};
use crate::seed::derive_seed;

/// Uniform trapezoid grid on `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    lower: f64,
    upper: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(lower: f64, upper: f64, points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && upper > lower) {
            return Err(invalid(format!("grid bounds [{lower}, {upper}] are not increasing")));
        }
        if points < 3 || points % 2 == 0 {
            return Err(invalid(format!("grid needs an odd point count >= 3, got {points}")));
        }
        Ok(Self { lower, upper, points })
    }

    /// `[min μ − 10·max σ, max μ + 10·max σ]` over the given 1-D components.
    pub fn envelope<'a>(components: impl IntoIterator<Item = &'a GaussianComponent>, points: usize) -> Result<Self> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut smax: f64 = 0.0;
        for c in components {
            require_1d(c.dim())?;
            lo = lo.min(c.mean()[0]);
            hi = hi.max(c.mean()[0]);
            smax = smax.max(c.std()[0]);
        }
        Self::new(lo - ENVELOPE_SIGMAS * smax, hi + ENVELOPE_SIGMAS * smax, points)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn with_points(self, points: usize) -> Result<Self> {
        Self::new(self.lower, self.upper, points)
    }

    fn trapezoid(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = (self.upper - self.lower) / (self.points - 1) as f64;
        let mut acc = 0.5 * (f(self.lower) + f(self.upper));
        for i in 1..self.points - 1 {
            acc += f(self.lower + h * i as f64);
        }
        acc * h
    }
}

fn require_1d(d: usize) -> Result<()> {
    if d != 1 {
        return Err(Error::Unsupported(format!("oracle is 1-D only, got d = {d}")));
    }
    Ok(())
}

fn log_normal_pdf(y: f64, mu: f64, sigma: f64) -> f64 {
    let z = (y - mu) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// `∫ p_a (log p_a − log p_b)` by the trapezoid rule.
pub fn kl_quadrature_1d(a: &GaussianComponent, b: &GaussianComponent, grid: &GridSpec) -> Result<f64> {
    require_1d(a.dim())?;
    require_1d(b.dim())?;
    let (ma, sa, mb, sb) = (a.mean()[0], a.std()[0], b.mean()[0], b.std()[0]);
    Ok(grid.trapezoid(|y| {
        let la = log_normal_pdf(y, ma, sa);
        la.exp() * (la - log_normal_pdf(y, mb, sb))
    }))
}

/// Standard normal quantiles at the midpoints `(i + ½) / q`.
#[derive(Debug, Clone)]
pub struct QuantileTable {
    z: Vec<f64>,
}

impl QuantileTable {
    pub fn new(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(invalid("quantile coupling needs at least one point"));
        }
        let std_normal = Normal::standard();
        let z = (0..q)
            .map(|i| std_normal.inverse_cdf((i as f64 + 0.5) / q as f64))
            .collect();
        Ok(Self { z })
    }

    /// `(W1, W2)` under the monotone quantile coupling of two 1-D Gaussians.
    pub fn coupling(&self, a: &GaussianComponent, b: &GaussianComponent) -> Result<(f64, f64)> {
        require_1d(a.dim())?;
        require_1d(b.dim())?;
        let (ma, sa, mb, sb) = (a.mean()[0], a.std()[0], b.mean()[0], b.std()[0]);
        let (mut s1, mut s2) = (0.0, 0.0);
        for &z in &self.z {
            let gap = ((ma + sa * z) - (mb + sb * z)).abs();
            s1 += gap;
            s2 += gap * gap;
        }
        let q = self.z.len() as f64;
        Ok((s1 / q, (s2 / q).sqrt()))
    }
}

/// `(W1, W2)` between 1-D Gaussians by quantile coupling on `q` midpoint quantiles.
pub fn wasserstein_1d(a: &GaussianComponent, b: &GaussianComponent, quantile_points: usize) -> Result<(f64, f64)> {
    QuantileTable::new(quantile_points)?.coupling(a, b)
}

/// `−∫ p log p` for a 1-D mixture by the trapezoid rule.
pub fn entropy_quadrature_1d(m: &Mixture, grid: &GridSpec) -> Result<f64> {
    require_1d(m.dim())?;
    Ok(grid.trapezoid(|y| {
        let lp = m.log_pdf(&[y]).expect("1-D mixture");
        let p = lp.exp();
        if p > 0.0 {
            -p * lp
        } else {
            0.0
        }
    }))
}

/// Default grid for a mixture: the positive-weight envelope with 20001 points.
pub fn mixture_grid(m: &Mixture) -> Result<GridSpec> {
    GridSpec::envelope(
        m.weights()
            .iter()
            .zip(m.components())
            .filter(|(w, _)| **w > 0.0)
            .map(|(_, c)| c),
        QUADRATURE_POINTS,
    )
}

pub const KL_TOLERANCE: f64 = 1e-6;
pub const W2_TOLERANCE: f64 = 1e-3;
pub const ENTROPY_TOLERANCE: f64 = 0.02;
pub const ENTROPY_MC_SAMPLES: usize = 65536;
pub const WASSERSTEIN_QUANTILES: usize = 20001;

/// Parameters of the closed-form versus oracle cross-check.
#[derive(Debug, Clone, Copy)]
pub struct OracleSuiteConfig {
    pub draws: usize,
    pub seed: u64,
    /// Added to every closed-form KL before comparison; a detector sanity hook.
    pub kl_fault: f64,
}

impl Default for OracleSuiteConfig {
    fn default() -> Self {
        Self {
            draws: 1000,
            seed: 0,
            kl_fault: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub tolerance: f64,
    pub draws: usize,
    pub max_error: f64,
    pub violations: usize,
    /// `(draw index, draw seed)` of the largest error.
    pub worst_draw: (usize, u64),
}

impl CheckOutcome {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            draws: 0,
            max_error: 0.0,
            violations: 0,
            worst_draw: (0, 0),
        }
    }

    fn record(&mut self, err: f64, draw: usize, seed: u64) {
        self.draws += 1;
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err > self.tolerance {
            self.violations += 1;
        }
        if err > self.max_error || self.draws == 1 {
            self.max_error = err;
            self.worst_draw = (draw, seed);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckOutcome::passed)
    }
}

fn random_component<R: Rng>(rng: &mut R) -> GaussianComponent {
    GaussianComponent::univariate(rng.random_range(-5.0..=5.0), rng.random_range(0.1..=5.0)).expect("valid draw")
}

/// Random 1-D mixture with `k ∈ [1, 10]`, μ ∈ [−5, 5], σ ∈ [0.1, 5].
pub fn random_mixture<R: Rng>(rng: &mut R) -> Mixture {
    let k = rng.random_range(1..=10usize);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let head: f64 = weights[..k - 1].iter().sum();
    weights[k - 1] = (1.0 - head).max(0.0);
    let components = (0..k).map(|_| random_component(rng)).collect();
    Mixture::new(weights, components).expect("valid draw")
}

/// Runs the KL, W2 and mixture-entropy cross-checks over seeded random draws.
pub fn run_suite(cfg: &OracleSuiteConfig) -> Result<OracleReport> {
    let quantiles = QuantileTable::new(WASSERSTEIN_QUANTILES)?;
    let mut kl = CheckOutcome::new("kl closed form vs quadrature", KL_TOLERANCE);
    let mut w2 = CheckOutcome::new("w2 closed form vs quantile coupling", W2_TOLERANCE);
    let mut ent = CheckOutcome::new("mc mixture entropy vs quadrature", ENTROPY_TOLERANCE);
    for draw in 0..cfg.draws {
        let seed = derive_seed(cfg.seed, &[draw as u64]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_component(&mut rng);
        let b = random_component(&mut rng);

        let grid = GridSpec::envelope([&a, &b], QUADRATURE_POINTS)?;
        let closed = kl_gaussian(&a, &b)? + cfg.kl_fault;
        kl.record((closed - kl_quadrature_1d(&a, &b, &grid)?).abs(), draw, seed);

        let (_, w2_oracle) = quantiles.coupling(&a, &b)?;
        w2.record((w2_gaussian(&a, &b)? - w2_oracle).abs(), draw, seed);

        let m = random_mixture(&mut rng);
        let mc = mixture_entropy(
            &m,
            EntropyEstimator::MonteCarlo {
                samples: ENTROPY_MC_SAMPLES,
                seed: derive_seed(seed, &[1]),
            },
        )?;
        let quad = entropy_quadrature_1d(&m, &mixture_grid(&m)?)?;
        ent.record((mc - quad).abs(), draw, seed);
    }
    Ok(OracleReport {
        seed: cfg.seed,
        checks: vec![kl, w2, ent],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n1(m: f64, s: f64) -> GaussianComponent {
        GaussianComponent::univariate(m, s).unwrap()
    }

    fn grid(a: &GaussianComponent, b: &GaussianComponent) -> GridSpec {
        GridSpec::envelope([a, b], QUADRATURE_POINTS).unwrap()
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(1.0, 0.0, 11).is_err());
        assert!(GridSpec::new(0.0, 1.0, 10).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1).is_err());
        assert!(GridSpec::new(0.0, 1.0, 3).is_ok());
    }

    #[test]
    fn kl_quadrature_examples() {
        let a = n1(0.3, 1.4);
        assert!(kl_quadrature_1d(&a, &a, &grid(&a, &a)).unwrap().abs() < 1e-10);
        let (a, b) = (n1(0.0, 1.0), n1(2.0, 1.0));
        assert!((kl_quadrature_1d(&a, &b, &grid(&a, &b)).unwrap() - 2.0).abs() < 1e-6);
        let (a, b) = (n1(0.0, 1.0), n1(0.0, 2.0));
        assert!((kl_quadrature_1d(&a, &b, &grid(&a, &b)).unwrap() - 0.318147).abs() < 1e-6);
    }

    #[test]
    fn wasserstein_examples() {
        let a = n1(1.0, 2.0);
        assert_eq!(wasserstein_1d(&a, &a, 1000).unwrap(), (0.0, 0.0));
        let (w1, w2) = wasserstein_1d(&n1(0.0, 0.7), &n1(5.0, 0.7), WASSERSTEIN_QUANTILES).unwrap();
        assert!((w1 - 5.0).abs() < 1e-3 && (w2 - 5.0).abs() < 1e-3);
        let (_, w2) = wasserstein_1d(&n1(0.0, 1.0), &n1(3.0, 2.0), WASSERSTEIN_QUANTILES).unwrap();
        assert!((w2 - 3.16228).abs() < 1e-3);
    }

    #[test]
    fn entropy_quadrature_examples() {
        let single = Mixture::single(n1(0.0, 1.0));
        let h = entropy_quadrature_1d(&single, &mixture_grid(&single).unwrap()).unwrap();
        assert!((h - 1.418_938_533).abs() < 1e-6);
        let dup = Mixture::univariate(&[(0.5, 0.0, 1.0), (0.5, 0.0, 1.0)]).unwrap();
        let hd = entropy_quadrature_1d(&dup, &mixture_grid(&dup).unwrap()).unwrap();
        assert!((hd - h).abs() < 1e-12);
        let far = Mixture::univariate(&[(0.5, -10.0, 1.0), (0.5, 10.0, 1.0)]).unwrap();
        let hf = entropy_quadrature_1d(&far, &mixture_grid(&far).unwrap()).unwrap();
        assert!((hf - (1.418_938_533 + 2f64.ln())).abs() < 1e-4);
    }

    #[test]
    fn oracles_reject_multivariate() {
        let c = GaussianComponent::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = GridSpec::new(-1.0, 1.0, 11).unwrap();
        assert!(matches!(kl_quadrature_1d(&c, &c, &g), Err(Error::Unsupported(_))));
        assert!(matches!(wasserstein_1d(&c, &c, 10), Err(Error::Unsupported(_))));
        assert!(matches!(entropy_quadrature_1d(&Mixture::single(c), &g), Err(Error::Unsupported(_))));
    }

    #[test]
    fn oracle_grid_is_converged() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let a = random_component(&mut rng);
            let b = random_component(&mut rng);
            let g = grid(&a, &b);
            let g2 = g.with_points(2 * g.points() - 1).unwrap();
            let d = (kl_quadrature_1d(&a, &b, &g).unwrap() - kl_quadrature_1d(&a, &b, &g2).unwrap()).abs();
            assert!(d < 1e-7, "{d}");
            let m = random_mixture(&mut rng);
            let g = mixture_grid(&m).unwrap();
            let g2 = g.with_points(2 * g.points() - 1).unwrap();
            let d = (entropy_quadrature_1d(&m, &g).unwrap() - entropy_quadrature_1d(&m, &g2).unwrap()).abs();
            assert!(d < 1e-7, "{d}");
        }
    }

    #[test]
    fn quick_suite_passes_and_fault_is_detected() {
        let cfg = OracleSuiteConfig { draws: 10, seed: 3, kl_fault: 0.0 };
        assert!(run_suite(&cfg).unwrap().passed());
        let faulty = OracleSuiteConfig { kl_fault: 1e-3, ..cfg };
        let report = run_suite(&faulty).unwrap();
        assert!(!report.passed());
        assert!(!report.checks[0].passed());
    }
}
