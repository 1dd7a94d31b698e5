//! Average number of solutions of random systems `f₁ = c₁, …, f_n = c_n`
//! with `f_i` drawn from finite-dimensional function spaces on a compact
//! manifold X: prediction through Finsler ellipsoid mixed volumes and an
//! empirical estimate through random hyperplanes in the dual spaces.

use crate::croftonsim::{run_trials, Counter, EstimateConfig, EstimateReport, Factor, FactorKind};
use crate::densities::{
    d_m_density, integrate_density, mixed_riemannian_density, Chart, EllipsoidDensity, FieldBase,
    FieldPoint, FinslerField, ParamManifold, Polynomial, QuadratureConfig,
};
use crate::error::{check_dim, Error, Result};
use crate::geomcore::QuadForm;
use crate::numeric::{factorial, unit_ball_volume};
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

type ValuesFn = Arc<dyn Fn(&FieldPoint) -> Vec<f64> + Send + Sync>;
type GradientFn = Arc<dyn Fn(&FieldPoint) -> DMatrix<f64> + Send + Sync>;

/// A space V of smooth functions on X: a basis evaluated at points of X,
/// its gradients in chart coordinates (dim × k) and an inner product.
#[derive(Clone)]
pub struct FunctionSpace {
    label: String,
    dim: usize,
    values: ValuesFn,
    gradient: GradientFn,
    gram: QuadForm,
}

impl std::fmt::Debug for FunctionSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionSpace")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .finish()
    }
}

impl FunctionSpace {
    pub fn new(
        label: impl Into<String>,
        values: impl Fn(&FieldPoint) -> Vec<f64> + Send + Sync + 'static,
        gradient: impl Fn(&FieldPoint) -> DMatrix<f64> + Send + Sync + 'static,
        gram: QuadForm,
    ) -> Result<Self> {
        let dim = gram.dim();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty function space".into()));
        }
        if gram.rank(1e-12) < dim {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            label: label.into(),
            dim,
            values: Arc::new(values),
            gradient: Arc::new(gradient),
            gram,
        })
    }

    /// span{cos(k t_axis), sin(k t_axis)} with the L²(dt/π) inner product,
    /// in which the two are orthonormal.
    pub fn fourier(k: u32, axis: usize, param_dim: usize) -> Result<Self> {
        if k == 0 || axis >= param_dim {
            return Err(Error::InvalidArgument(format!(
                "fourier needs k ≥ 1 and axis < {param_dim}, got k = {k}, axis = {axis}"
            )));
        }
        let kf = k as f64;
        Self::new(
            format!("fourier({k})"),
            move |p| {
                let (s, c) = (kf * p.param[axis]).sin_cos();
                vec![c, s]
            },
            move |p| {
                let (s, c) = (kf * p.param[axis]).sin_cos();
                let mut g = DMatrix::zeros(2, param_dim);
                g[(0, axis)] = -kf * s;
                g[(1, axis)] = kf * c;
                g
            },
            QuadForm::identity(2),
        )
    }

    /// Restrictions of the ambient linear coordinates, standard inner product.
    pub fn linear_coords(ambient_dim: usize) -> Result<Self> {
        Self::new(
            "linear_coords",
            |p| p.point.clone(),
            |p| p.differential.clone(),
            QuadForm::identity(ambient_dim),
        )
    }

    pub fn constants(param_dim: usize) -> Result<Self> {
        Self::new(
            "constants",
            |_| vec![1.0],
            move |_| DMatrix::zeros(1, param_dim),
            QuadForm::identity(1),
        )
    }

    /// Polynomials in the chart parameters with a given Gram matrix.
    pub fn polynomial(basis: Vec<Polynomial>, gram: QuadForm) -> Result<Self> {
        check_dim(basis.len(), gram.dim(), "polynomial basis vs gram")?;
        let k = basis
            .first()
            .map(Polynomial::vars)
            .ok_or_else(|| Error::InvalidArgument("empty polynomial basis".into()))?;
        if basis.iter().any(|p| p.vars() != k) {
            return Err(Error::InvalidArgument("polynomials in different variables".into()));
        }
        let b2 = basis.clone();
        Self::new(
            "polynomial",
            move |p| basis.iter().map(|f| f.eval(&p.param)).collect(),
            move |p| {
                let mut g = DMatrix::zeros(b2.len(), k);
                for (i, f) in b2.iter().enumerate() {
                    for (j, v) in f.gradient(&p.param).into_iter().enumerate() {
                        g[(i, j)] = v;
                    }
                }
                g
            },
            gram,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gram(&self) -> &QuadForm {
        &self.gram
    }

    pub fn values(&self, p: &FieldPoint) -> Vec<f64> {
        (self.values)(p)
    }

    pub fn gradient(&self, p: &FieldPoint) -> DMatrix<f64> {
        (self.gradient)(p)
    }

    /// Every basis function multiplied by `s` (inner product unchanged).
    pub fn scaled(&self, s: f64) -> Self {
        let (v, g) = (self.values.clone(), self.gradient.clone());
        Self {
            label: format!("{}*{s}", self.label),
            dim: self.dim,
            values: Arc::new(move |p| v(p).into_iter().map(|x| s * x).collect()),
            gradient: Arc::new(move |p| g(p) * s),
            gram: self.gram.clone(),
        }
    }

    /// Basis `U b` with Gram `U G Uᵀ`; for orthogonal U this is the same
    /// inner-product space in a rotated basis.
    pub fn rotated(&self, u: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim, u.nrows(), "rotation rows")?;
        check_dim(self.dim, u.ncols(), "rotation columns")?;
        let (v, g) = (self.values.clone(), self.gradient.clone());
        let (u1, u2) = (u.clone(), u.clone());
        Ok(Self {
            label: format!("{}(rotated)", self.label),
            dim: self.dim,
            values: Arc::new(move |p| (&u1 * nalgebra::DVector::from_vec(v(p))).as_slice().to_vec()),
            gradient: Arc::new(move |p| &u2 * g(p)),
            gram: self.gram.congruence(&u.transpose())?,
        })
    }
}

/// Evaluation map θ: X → V*, in coordinates of an orthonormal basis of V.
#[derive(Clone, Debug)]
pub struct EvalMap {
    space: FunctionSpace,
    /// L⁻¹ for the Cholesky factor G = L Lᵀ; rows give orthonormal functions.
    whitening: DMatrix<f64>,
    radius: f64,
}

impl EvalMap {
    pub fn space(&self) -> &FunctionSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    /// `max |θ(x)|` over the quadrature nodes of X.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn theta(&self, p: &FieldPoint) -> Vec<f64> {
        let v = nalgebra::DVector::from_vec(self.space.values(p));
        (&self.whitening * v).as_slice().to_vec()
    }

    pub fn dtheta(&self, p: &FieldPoint) -> DMatrix<f64> {
        &self.whitening * self.space.gradient(p)
    }

    /// `h = θ*g`: the pulled-back dual metric, a field on the chart parameters.
    pub fn metric_field(&self, k: usize) -> FinslerField {
        let me = self.clone();
        let id = QuadForm::identity(self.dim());
        FinslerField::new(FieldBase::Params(k), move |p| {
            id.congruence(&me.dtheta(p)).expect("dθᵀdθ is PSD")
        })
    }
}

/// Orthonormalizes the basis and measures the radius of θ(X).
pub fn build_eval_map(space: &FunctionSpace, x: &ParamManifold) -> Result<EvalMap> {
    let chol = nalgebra::Cholesky::new(space.gram.matrix().clone()).ok_or(Error::NotPositiveDefinite)?;
    let whitening = chol
        .l()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?;
    let mut map = EvalMap {
        space: space.clone(),
        whitening,
        radius: 0.0,
    };
    let probe = FieldPoint::on_manifold(x, 0, x.charts()[0].lower());
    check_dim(space.dim, space.values(&probe).len(), "basis values")?;
    check_dim(x.param_dim(), space.gradient(&probe).ncols(), "basis gradient columns")?;
    let n = if x.param_dim() == 1 { x.quad_nodes().max(1024) } else { x.quad_nodes().min(256) };
    map.radius = x
        .quadrature_nodes(n)
        .iter()
        .map(|(c, t, _)| {
            let th = map.theta(&FieldPoint::on_manifold(x, *c, t));
            th.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .fold(0.0, f64::max);
    if !(map.radius > 0.0 && map.radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "evaluation map radius must be positive and finite, got {}",
            map.radius
        )));
    }
    Ok(map)
}

/// Predicted mean number of solutions and the two equivalent forms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZerosPrediction {
    /// `∫_X vol_{1,h₁}⋯vol_{1,h_n}`.
    pub value: f64,
    pub error: f64,
    /// `(n!/2ⁿ) · V(𝒯₁, …, 𝒯_n)` with `V = ∫_X D_n`.
    pub mixed_volume_form: f64,
    /// `(n! vₙ / 2ⁿ) · vol_{h₁,…,h_n}(X)`.
    pub mixed_riemannian_form: f64,
}

pub fn predict_zeros(maps: &[EvalMap], x: &ParamManifold, q: &QuadratureConfig) -> Result<ZerosPrediction> {
    let n = x.param_dim();
    check_dim(n, maps.len(), "number of function spaces vs dim X")?;
    let hs: Vec<FinslerField> = maps.iter().map(|m| m.metric_field(n)).collect();
    let ring = EllipsoidDensity::product_all(
        &hs.iter()
            .map(|h| EllipsoidDensity::vol1(h.clone()))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let value = integrate_density(x, &ring, q)?;
    let c = factorial(n) / 2f64.powi(n as i32);
    let mv = integrate_density(x, &d_m_density(&hs)?, q)?;
    let mr = integrate_density(x, &mixed_riemannian_density(&hs)?, q)?;
    let mixed_volume_form = c * mv.value;
    let mixed_riemannian_form = c * unit_ball_volume(n) * mr.value;
    let error = value.error_estimate + value.stderr;
    let tol = 1e-8 * value.value.abs().max(1e-300) + error + c * (mv.error_estimate + mv.stderr) * unit_ball_volume(n);
    for (name, v) in [("mixed volume", mixed_volume_form), ("mixed Riemannian", mixed_riemannian_form)] {
        if (v - value.value).abs() > tol {
            return Err(Error::Inconsistent(format!(
                "ring product {} vs {name} form {v}",
                value.value
            )));
        }
    }
    Ok(ZerosPrediction {
        value: value.value,
        error,
        mixed_volume_form,
        mixed_riemannian_form,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZerosConfig {
    pub estimate: EstimateConfig,
    /// Sampling radius as a multiple of max |θ_i|.
    pub radius_scale: f64,
}

impl Default for ZerosConfig {
    fn default() -> Self {
        Self {
            estimate: EstimateConfig::default(),
            radius_scale: 1.0,
        }
    }
}

/// Feature manifold t ↦ (θ₁(x(t)), …, θ_n(x(t))) used by the counter.
fn feature_manifold(maps: &[EvalMap], x: &ParamManifold) -> Result<ParamManifold> {
    let total: usize = maps.iter().map(EvalMap::dim).sum();
    let charts = (0..x.charts().len())
        .map(|ci| {
            let c = &x.charts()[ci];
            let (xm, ms) = (x.clone(), maps.to_vec());
            let (xd, md) = (x.clone(), maps.to_vec());
            Chart::new(
                c.lower().to_vec(),
                c.upper().to_vec(),
                c.periodic().to_vec(),
                total.max(c.param_dim()),
                Arc::new(move |t| {
                    let p = FieldPoint::on_manifold(&xm, ci, t);
                    let mut v: Vec<f64> = ms.iter().flat_map(|m| m.theta(&p)).collect();
                    v.resize(total.max(t.len()), 0.0);
                    v
                }),
                Some(Arc::new(move |t| {
                    let p = FieldPoint::on_manifold(&xd, ci, t);
                    let mut d = DMatrix::zeros(total.max(t.len()), t.len());
                    let mut row = 0;
                    for m in &md {
                        let dt = m.dtheta(&p);
                        d.view_mut((row, 0), (m.dim(), t.len())).copy_from(&dt);
                        row += m.dim();
                    }
                    d
                })),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamManifold::new(charts)?.with_quad_nodes(x.quad_nodes()))
}

/// Empirical mean number of solutions: per trial, each equation
/// ⟨θ_i(x), u_i⟩ = c_i is a random hyperplane of V_i* meeting the ball of
/// radius R_i ⊇ θ_i(X); estimate = (Π mass_i) · mean(count).
pub fn empirical_zeros(
    maps: &[EvalMap],
    x: &ParamManifold,
    n_samples: usize,
    seed: u64,
    cfg: &ZerosConfig,
) -> Result<EstimateReport> {
    check_dim(x.param_dim(), maps.len(), "number of function spaces vs dim X")?;
    if !(cfg.radius_scale >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "radius scale must be at least 1, got {}",
            cfg.radius_scale
        )));
    }
    let mut offset = 0;
    let factors: Vec<Factor> = maps
        .iter()
        .map(|m| {
            let f = Factor {
                kind: FactorKind::Euclid {
                    radius: m.radius() * cfg.radius_scale,
                },
                block: offset..offset + m.dim(),
            };
            offset += m.dim();
            f
        })
        .collect();
    let counter = Counter::new(feature_manifold(maps, x)?, cfg.estimate.count)?;
    let mut report = run_trials(&counter, &factors, n_samples, seed, &cfg.estimate)?;
    if let Some(q) = &cfg.estimate.prediction {
        let p = predict_zeros(maps, x, q)?;
        report.prediction = Some(p.value);
        report.prediction_error = Some(p.error);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::croftonsim::CountConfig;
    use std::f64::consts::{PI, TAU};

    fn circle() -> ParamManifold {
        ParamManifold::circle(1.0).unwrap()
    }

    #[test]
    fn fourier_theta_is_unit() {
        let m = build_eval_map(&FunctionSpace::fourier(1, 0, 1).unwrap(), &circle()).unwrap();
        let p = FieldPoint::on_manifold(&circle(), 0, &[0.9]);
        let th = m.theta(&p);
        assert!((th[0] - 0.9f64.cos()).abs() < 1e-15 && (th[1] - 0.9f64.sin()).abs() < 1e-15);
        assert!((m.radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_have_zero_metric() {
        let m = build_eval_map(&FunctionSpace::constants(1).unwrap(), &circle()).unwrap();
        let p = FieldPoint::on_manifold(&circle(), 0, &[0.3]);
        assert_eq!(m.metric_field(1).form_at(&p).matrix()[(0, 0)], 0.0);
        let pr = predict_zeros(&[m], &circle(), &QuadratureConfig::default()).unwrap();
        assert_eq!(pr.value, 0.0);
    }

    #[test]
    fn non_pd_gram_is_rejected() {
        let p = Polynomial::new(1, vec![(vec![1], 1.0)]).unwrap();
        let g = QuadForm::diag(&[0.0]).unwrap();
        assert!(FunctionSpace::polynomial(vec![p], g).is_err());
    }

    #[test]
    fn fourier_predictions() {
        for k in 1..=4u32 {
            let m = build_eval_map(&FunctionSpace::fourier(k, 0, 1).unwrap(), &circle()).unwrap();
            let p = predict_zeros(&[m], &circle(), &QuadratureConfig::default()).unwrap();
            assert!((p.value - TAU * k as f64).abs() < 1e-8 * TAU * k as f64);
            assert!((p.mixed_volume_form - p.value).abs() < 1e-10);
        }
    }

    #[test]
    fn sphere_linear_coords_metric_is_round() {
        let s = ParamManifold::unit_sphere().unwrap();
        let m = build_eval_map(&FunctionSpace::linear_coords(3).unwrap(), &s).unwrap();
        let p = FieldPoint::on_manifold(&s, 0, &[0.8, 2.0]);
        let h = m.metric_field(2).form_at(&p);
        assert!((h.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((h.matrix()[(1, 1)] - 0.8f64.sin().powi(2)).abs() < 1e-14);
        assert!(h.matrix()[(0, 1)].abs() < 1e-14);
        let q = QuadratureConfig {
            nodes: Some(64),
            mixvol: crate::mixvol::MixedVolumeConfig {
                quad_nodes: 512,
                ..Default::default()
            },
            ..Default::default()
        };
        // vol_{1,h}² = (2!/2²)·v₂·area density, so the integral is ½·π·4π.
        let p = predict_zeros(&[m.clone(), m], &s, &q).unwrap();
        assert!((p.value - 2.0 * PI * PI).abs() < 2.0 * p.error, "{p:?}");
    }

    #[test]
    fn circle_empirical_is_exact() {
        let m = build_eval_map(&FunctionSpace::fourier(1, 0, 1).unwrap(), &circle()).unwrap();
        let cfg = ZerosConfig {
            estimate: EstimateConfig {
                count: CountConfig {
                    curve_grid: 512,
                    ..Default::default()
                },
                ..Default::default()
            },
            ..Default::default()
        };
        let r = empirical_zeros(&[m], &circle(), 1000, 5, &cfg).unwrap();
        assert_eq!((r.min_count, r.max_count), (2, 2));
        assert!((r.estimate - TAU).abs() < 1e-12);
    }
}
