//! Crofton data as samplers plus counters, Monte Carlo estimators of the
//! average number of intersection points, and closed-form predictions.

mod count;

pub use count::{CountConfig, CountOutcome, Counter, Equation};

use crate::densities::{
    integrate_density, mixed_riemannian_density, EllipsoidDensity, FieldBase, FinslerField,
    Integral, ParamManifold, QuadratureConfig,
};
use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::geomcore::QuadForm;
use crate::numeric::{factorial, kappa, random_unit_vector, substream, unit_ball_volume, SampleSummary};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

/// A measured family of codimension-one level sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CroftonData {
    /// Affine hyperplanes of ℝ^dim meeting the ball of radius `radius`,
    /// with the motion-invariant measure normalized so that a unit segment
    /// is hit with measure 1.
    Euclid { dim: usize, radius: f64 },
    /// Great subspheres of S^{dim−1} ⊂ ℝ^dim with the invariant
    /// probability measure.
    Sphere { dim: usize },
    /// Independent product; factor i acts on its own block of coordinates.
    Product(Vec<CroftonData>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FactorKind {
    Euclid { radius: f64 },
    Sphere,
}

/// One codimension-one factor acting on `block` of the ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub block: Range<usize>,
}

impl Factor {
    pub fn dim(&self) -> usize {
        self.block.len()
    }

    pub fn mass(&self) -> f64 {
        match self.kind {
            FactorKind::Euclid { radius } => euclid_mass(self.dim(), radius),
            FactorKind::Sphere => 1.0,
        }
    }

    /// `C` in the Crofton density `C · vol_{1,g}` of this factor.
    pub fn crofton_constant(&self) -> f64 {
        match self.kind {
            FactorKind::Euclid { .. } => 1.0,
            FactorKind::Sphere => 1.0 / PI,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Equation {
        let (normal, offset) = match self.kind {
            FactorKind::Euclid { radius } => sample_euclid_hyperplane(self.dim(), radius, rng),
            FactorKind::Sphere => (sample_great_subsphere(self.dim(), rng), 0.0),
        };
        Equation {
            block: self.block.clone(),
            normal,
            offset,
        }
    }
}

impl CroftonData {
    pub fn euclid(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("euclid data needs dim ≥ 1".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        Ok(Self::Euclid { dim, radius })
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument("sphere data needs dim ≥ 2".into()));
        }
        Ok(Self::Sphere { dim })
    }

    pub fn product(factors: Vec<CroftonData>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("empty product of Crofton data".into()));
        }
        Ok(Self::Product(factors))
    }

    /// Flattened factors with their coordinate blocks.
    pub fn factors(&self) -> Vec<Factor> {
        let mut out = Vec::new();
        self.collect_factors(0, &mut out);
        out
    }

    fn collect_factors(&self, offset: usize, out: &mut Vec<Factor>) -> usize {
        match self {
            CroftonData::Euclid { dim, radius } => {
                out.push(Factor {
                    kind: FactorKind::Euclid { radius: *radius },
                    block: offset..offset + dim,
                });
                offset + dim
            }
            CroftonData::Sphere { dim } => {
                out.push(Factor {
                    kind: FactorKind::Sphere,
                    block: offset..offset + dim,
                });
                offset + dim
            }
            CroftonData::Product(fs) => fs.iter().fold(offset, |o, f| f.collect_factors(o, out)),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.factors().last().map_or(0, |f| f.block.end)
    }

    /// Total codimension n (every factor has codimension one).
    pub fn codim(&self) -> usize {
        self.factors().len()
    }

    /// Total mass of the restricted measure.
    pub fn mass(&self) -> f64 {
        self.factors().iter().map(Factor::mass).product()
    }

    /// Draws one γ as the list of its level-set equations.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Equation> {
        self.factors().iter().map(|f| f.sample(rng)).collect()
    }

    /// Euclidean radii multiplied by `s`.
    pub fn with_radius_scale(&self, s: f64) -> Self {
        match self {
            CroftonData::Euclid { dim, radius } => CroftonData::Euclid {
                dim: *dim,
                radius: radius * s,
            },
            CroftonData::Sphere { dim } => CroftonData::Sphere { dim: *dim },
            CroftonData::Product(fs) => {
                CroftonData::Product(fs.iter().map(|f| f.with_radius_scale(s)).collect())
            }
        }
    }

    /// Metric `g_i` of factor i lifted to the ambient product space.
    pub fn factor_metrics(&self) -> Result<Vec<FinslerField>> {
        let d = self.ambient_dim();
        self.factors()
            .iter()
            .map(|f| {
                let q = QuadForm::identity(f.dim()).lift(d, f.block.start)?;
                FinslerField::constant(FieldBase::Ambient(d), q)
            })
            .collect()
    }

    /// Crofton density `Π C_i · π_i^* vol_{1,g_i}` as a ring product.
    pub fn predicted_density(&self) -> Result<EllipsoidDensity> {
        let factors = self.factors();
        let densities = self
            .factor_metrics()?
            .into_iter()
            .zip(&factors)
            .map(|(g, f)| EllipsoidDensity::vol1(g)?.scaled(f.crofton_constant()))
            .collect::<Result<Vec<_>>>()?;
        EllipsoidDensity::product_all(&densities)
    }
}

/// `2R / κ_d`: measure of the hyperplanes of ℝ^d meeting a ball of radius R.
pub fn euclid_mass(d: usize, radius: f64) -> f64 {
    2.0 * radius / kappa(d)
}

/// Unit normal uniform on S^{d−1} and offset uniform on [−R, R].
pub fn sample_euclid_hyperplane<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> (Vec<f64>, f64) {
    let u = random_unit_vector(d, rng);
    let c = rng.random_range(-radius..=radius);
    (u, c)
}

/// Unit normal of a uniformly random great subsphere of S^{d−1}.
pub fn sample_great_subsphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    random_unit_vector(d, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateConfig {
    pub count: CountConfig,
    pub exec: Execution,
    /// Quadrature for the prediction; `None` skips it.
    pub prediction: Option<QuadratureConfig>,
    /// Abort when counting failures exceed this fraction of samples.
    pub max_failure_rate: f64,
    /// Redraws allowed per trial after degenerate or failed counts.
    pub max_attempts: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            count: CountConfig::default(),
            exec: Execution::Parallel,
            prediction: Some(QuadratureConfig::default()),
            max_failure_rate: 1e-3,
            max_attempts: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub prediction: Option<f64>,
    pub prediction_error: Option<f64>,
    pub seed: u64,
    /// Resampled near-tangencies.
    pub degenerate_events: usize,
    /// Resampled counts that did not stabilize under refinement.
    pub counting_failures: usize,
    pub min_count: usize,
    pub max_count: usize,
    /// Set when degenerate events reach 0.1% of the samples.
    pub flagged: bool,
}

impl EstimateReport {
    /// `|estimate − prediction|`, when a prediction exists.
    pub fn abs_err(&self) -> Option<f64> {
        self.prediction.map(|p| (self.estimate - p).abs())
    }

    /// True when the estimate lies within `k·stderr` of the prediction,
    /// allowing for the prediction's own error estimate and rounding.
    pub fn agrees(&self, k: f64) -> bool {
        match (self.prediction, self.abs_err()) {
            (Some(p), Some(e)) => {
                let floor = self.prediction_error.unwrap_or(0.0).max(1e-12 * p.abs());
                e <= k * self.stderr + floor
            }
            _ => true,
        }
    }
}

#[derive(Clone, Debug)]
struct Trial {
    count: Option<usize>,
    degenerate: usize,
    failures: usize,
    detail: Option<String>,
}

/// Runs `n_samples` seeded trials: trial i draws from substream (seed, i)
/// and redraws on degenerate or failed counts.
pub fn run_trials(
    counter: &Counter,
    factors: &[Factor],
    n_samples: usize,
    seed: u64,
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    check_dim(counter.features().param_dim(), factors.len(), "equations vs manifold dimension")?;
    let mass: f64 = factors.iter().map(Factor::mass).product();
    let trials = cfg.exec.map(n_samples, |i| {
        let mut rng = substream(seed, i as u64);
        let mut t = Trial {
            count: None,
            degenerate: 0,
            failures: 0,
            detail: None,
        };
        for _ in 0..cfg.max_attempts.max(1) {
            let eqs: Vec<Equation> = factors.iter().map(|f| f.sample(&mut rng)).collect();
            match counter.count(&eqs) {
                CountOutcome::Count(c) => {
                    t.count = Some(c);
                    break;
                }
                CountOutcome::Degenerate => t.degenerate += 1,
                CountOutcome::Failure(msg) => {
                    t.failures += 1;
                    t.detail = Some(msg);
                }
            }
        }
        t
    });
    let degenerate: usize = trials.iter().map(|t| t.degenerate).sum();
    let failures: usize = trials.iter().map(|t| t.failures).sum();
    let unresolved = trials.iter().filter(|t| t.count.is_none()).count();
    if unresolved > 0 || failures as f64 > cfg.max_failure_rate * n_samples as f64 {
        let detail = trials
            .iter()
            .find_map(|t| t.detail.clone())
            .unwrap_or_else(|| format!("{unresolved} trials exhausted their redraws"));
        return Err(Error::CountingFailures {
            failures: failures.max(unresolved),
            samples: n_samples,
            detail,
        });
    }
    let counts: Vec<usize> = trials.iter().map(|t| t.count.unwrap_or(0)).collect();
    let values: Vec<f64> = counts.iter().map(|&c| mass * c as f64).collect();
    let s = SampleSummary::from_values(&values);
    Ok(EstimateReport {
        estimate: s.mean,
        stderr: s.stderr(),
        n_samples,
        prediction: None,
        prediction_error: None,
        seed,
        degenerate_events: degenerate,
        counting_failures: failures,
        min_count: counts.iter().copied().min().unwrap_or(0),
        max_count: counts.iter().copied().max().unwrap_or(0),
        flagged: degenerate as f64 >= 1e-3 * n_samples as f64,
    })
}

/// Checks that `m` fits the data: dimensions, radii and sphere membership.
pub fn validate(m: &ParamManifold, data: &CroftonData) -> Result<()> {
    check_dim(data.ambient_dim(), m.ambient_dim(), "manifold vs Crofton data ambient")?;
    check_dim(data.codim(), m.param_dim(), "manifold dimension vs total codimension")?;
    let n = if m.param_dim() == 1 { 1024 } else { 128 };
    for f in data.factors() {
        let r = m.bounding_radius(f.block.clone(), n);
        match f.kind {
            FactorKind::Euclid { radius } => {
                if radius < r * (1.0 - 1e-9) {
                    return Err(Error::InvalidArgument(format!(
                        "sampling radius {radius} is smaller than the bounding radius {r}"
                    )));
                }
            }
            FactorKind::Sphere => {
                let off = m
                    .quadrature_nodes(n)
                    .iter()
                    .map(|(c, t, _)| {
                        let x = m.charts()[*c].eval(t);
                        (x[f.block.clone()].iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs()
                    })
                    .fold(0.0, f64::max);
                if off > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "manifold leaves the unit sphere of its factor (by {off:e})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `𝔐(M) ≈ mass · mean(#(M ∩ Y_γ))`, with the density-integral prediction
/// attached when configured.
pub fn estimate_crofton(
    m: &ParamManifold,
    data: &CroftonData,
    n_samples: usize,
    seed: u64,
    cfg: &EstimateConfig,
) -> Result<EstimateReport> {
    validate(m, data)?;
    let counter = Counter::new(m.clone(), cfg.count)?;
    let mut report = run_trials(&counter, &data.factors(), n_samples, seed, cfg)?;
    if let Some(q) = &cfg.prediction {
        let p = predict_product(m, data, q)?;
        report.prediction = Some(p.value);
        report.prediction_error = Some(p.error);
    }
    Ok(report)
}

/// Both routes to the predicted mean count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProductPrediction {
    /// `∫_M Π C_i π_i^* vol_{1,g_i}` (ring product of the factor densities).
    pub value: f64,
    /// Quadrature error estimate plus any Monte Carlo error of the route.
    pub error: f64,
    /// `C₁⋯C_n · n!vₙ / Π n_i!v_{n_i}`.
    pub constant: f64,
    /// `constant · vol_{g₁*,…,g_n*}(M)` (mixed Riemannian route).
    pub constant_form: f64,
    pub ring: Integral,
}

/// Predicts the mean count from the factor densities and cross-checks the
/// ring-product route against the mixed Riemannian volume route.
pub fn predict_product(m: &ParamManifold, data: &CroftonData, q: &QuadratureConfig) -> Result<ProductPrediction> {
    check_dim(data.ambient_dim(), m.ambient_dim(), "manifold vs Crofton data ambient")?;
    check_dim(data.codim(), m.param_dim(), "manifold dimension vs total codimension")?;
    let n = data.codim();
    let factors = data.factors();
    let ring = integrate_density(m, &data.predicted_density()?, q)?;
    let c_prod: f64 = factors.iter().map(Factor::crofton_constant).product();
    // Every factor has codimension one: n_i! v_{n_i} = 2.
    let constant = c_prod * factorial(n) * unit_ball_volume(n) / 2f64.powi(n as i32);
    let mixed = integrate_density(m, &mixed_riemannian_density(&data.factor_metrics()?)?, q)?;
    let constant_form = constant * mixed.value;
    let error = ring.error_estimate + ring.stderr;
    let gap = (constant_form - ring.value).abs();
    let tol = 1e-8 * ring.value.abs().max(1e-300) + error + constant * (mixed.error_estimate + mixed.stderr);
    if gap > tol {
        return Err(Error::Inconsistent(format!(
            "ring product {} vs mixed Riemannian form {constant_form}",
            ring.value
        )));
    }
    Ok(ProductPrediction {
        value: ring.value,
        error,
        constant,
        constant_form,
        ring,
    })
}
