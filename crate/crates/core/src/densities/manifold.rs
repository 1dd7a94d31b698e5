//! Chart-based compact submanifolds with analytic differentials and
//! tensor-product midpoint quadrature grids.

use crate::error::{check_dim, Error, Result};
use nalgebra::DMatrix;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type DifferentialFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// Default number of quadrature nodes per parameter axis.
pub const DEFAULT_QUAD_NODES: usize = 256;

/// One chart: an axis-aligned parameter box, an immersion into ℝ^d and its
/// differential (d×k). Periodic axes wrap around (closed curves, tori).
#[derive(Clone)]
pub struct Chart {
    lower: Vec<f64>,
    upper: Vec<f64>,
    periodic: Vec<bool>,
    ambient_dim: usize,
    map: MapFn,
    differential: Option<DifferentialFn>,
}

impl std::fmt::Debug for Chart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Chart")
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .field("periodic", &self.periodic)
            .field("ambient_dim", &self.ambient_dim)
            .field("analytic_differential", &self.differential.is_some())
            .finish()
    }
}

impl Chart {
    /// A chart without an analytic differential falls back to central
    /// finite differences with step `1e-6·(upper − lower)`.
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        periodic: Vec<bool>,
        ambient_dim: usize,
        map: MapFn,
        differential: Option<DifferentialFn>,
    ) -> Result<Self> {
        check_dim(lower.len(), upper.len(), "chart box bounds")?;
        check_dim(lower.len(), periodic.len(), "chart periodic flags")?;
        if lower.is_empty() || lower.len() > ambient_dim {
            return Err(Error::InvalidArgument(format!(
                "chart of dimension {} in ambient dimension {ambient_dim}",
                lower.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("empty parameter box".into()));
        }
        Ok(Self {
            lower,
            upper,
            periodic,
            ambient_dim,
            map,
            differential,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.lower.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn has_analytic_differential(&self) -> bool {
        self.differential.is_some()
    }

    pub fn eval(&self, t: &[f64]) -> Vec<f64> {
        (self.map)(t)
    }

    pub fn differential(&self, t: &[f64]) -> DMatrix<f64> {
        match &self.differential {
            Some(d) => d(t),
            None => self.finite_difference(t),
        }
    }

    fn finite_difference(&self, t: &[f64]) -> DMatrix<f64> {
        let k = self.param_dim();
        let mut out = DMatrix::zeros(self.ambient_dim, k);
        let mut tp = t.to_vec();
        for j in 0..k {
            let h = 1e-6 * (self.upper[j] - self.lower[j]);
            tp[j] = t[j] + h;
            let fp = self.eval(&tp);
            tp[j] = t[j] - h;
            let fm = self.eval(&tp);
            tp[j] = t[j];
            for i in 0..self.ambient_dim {
                out[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
            }
        }
        out
    }

    /// Midpoint nodes per axis for `n` subdivisions.
    pub fn midpoints(&self, axis: usize, n: usize) -> Vec<f64> {
        let h = (self.upper[axis] - self.lower[axis]) / n as f64;
        (0..n).map(|j| self.lower[axis] + (j as f64 + 0.5) * h).collect()
    }

    /// Same immersion composed with the ambient affine map `x ↦ A x + b`.
    pub fn transformed(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        check_dim(self.ambient_dim, a.ncols(), "affine map columns")?;
        check_dim(a.nrows(), b.len(), "affine map offset")?;
        let map = self.map.clone();
        let (a1, b1) = (a.clone(), b.to_vec());
        let new_map: MapFn = Arc::new(move |t| {
            let x = map(t);
            (0..a1.nrows())
                .map(|i| b1[i] + (0..a1.ncols()).map(|j| a1[(i, j)] * x[j]).sum::<f64>())
                .collect()
        });
        let differential = self.differential.clone().map(|d| {
            let a2 = a.clone();
            Arc::new(move |t: &[f64]| &a2 * d(t)) as DifferentialFn
        });
        Self::new(
            self.lower.clone(),
            self.upper.clone(),
            self.periodic.clone(),
            a.nrows(),
            new_map,
            differential,
        )
    }
}

/// A compact k-dimensional submanifold of ℝ^d given by charts that
/// partition it up to measure zero.
#[derive(Clone, Debug)]
pub struct ParamManifold {
    charts: Vec<Chart>,
    quad_nodes: usize,
}

impl ParamManifold {
    pub fn new(charts: Vec<Chart>) -> Result<Self> {
        let first = charts
            .first()
            .ok_or_else(|| Error::InvalidArgument("manifold without charts".into()))?;
        for c in &charts {
            check_dim(first.param_dim(), c.param_dim(), "chart parameter dimension")?;
            check_dim(first.ambient_dim(), c.ambient_dim(), "chart ambient dimension")?;
        }
        Ok(Self {
            charts,
            quad_nodes: DEFAULT_QUAD_NODES,
        })
    }

    pub fn from_chart(chart: Chart) -> Self {
        Self {
            charts: vec![chart],
            quad_nodes: DEFAULT_QUAD_NODES,
        }
    }

    pub fn with_quad_nodes(mut self, n: usize) -> Self {
        self.quad_nodes = n.max(2);
        self
    }

    pub fn quad_nodes(&self) -> usize {
        self.quad_nodes
    }

    pub fn param_dim(&self) -> usize {
        self.charts[0].param_dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.charts[0].ambient_dim()
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn has_analytic_differentials(&self) -> bool {
        self.charts.iter().all(Chart::has_analytic_differential)
    }

    /// Quadrature nodes `(chart, parameter, weight)` of the composite
    /// midpoint rule with `n` nodes per axis.
    pub fn quadrature_nodes(&self, n: usize) -> Vec<(usize, Vec<f64>, f64)> {
        let mut out = Vec::new();
        for (ci, chart) in self.charts.iter().enumerate() {
            let k = chart.param_dim();
            let axes: Vec<Vec<f64>> = (0..k).map(|a| chart.midpoints(a, n)).collect();
            let w: f64 = (0..k)
                .map(|a| (chart.upper[a] - chart.lower[a]) / n as f64)
                .product();
            let total = n.pow(k as u32);
            for idx in 0..total {
                let mut rem = idx;
                let t: Vec<f64> = (0..k)
                    .map(|a| {
                        let v = axes[a][rem % n];
                        rem /= n;
                        v
                    })
                    .collect();
                out.push((ci, t, w));
            }
        }
        out
    }

    /// Verifies that the differential has full rank k at every quadrature
    /// node of the default grid.
    pub fn check_rank(&self) -> Result<()> {
        for (ci, t, _) in self.quadrature_nodes(self.quad_nodes) {
            let d = self.charts[ci].differential(&t);
            if !has_full_column_rank(&d) {
                return Err(Error::RankDeficientDifferential {
                    expected: self.param_dim(),
                    param: t,
                });
            }
        }
        Ok(())
    }

    /// Largest |x| over the charts' quadrature grid, restricted to the
    /// ambient coordinates in `block`.
    pub fn bounding_radius(&self, block: std::ops::Range<usize>, n: usize) -> f64 {
        self.quadrature_nodes(n)
            .into_iter()
            .map(|(ci, t, _)| {
                let x = self.charts[ci].eval(&t);
                x[block.clone()].iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Image under the ambient affine map `x ↦ A x + b`.
    pub fn transformed(&self, a: &DMatrix<f64>, b: &[f64]) -> Result<Self> {
        Ok(Self {
            charts: self
                .charts
                .iter()
                .map(|c| c.transformed(a, b))
                .collect::<Result<_>>()?,
            quad_nodes: self.quad_nodes,
        })
    }

    /// Cartesian product `M₁ × M₂ ⊂ ℝ^{d₁} × ℝ^{d₂}`, chart by chart.
    pub fn product(a: &ParamManifold, b: &ParamManifold) -> Result<Self> {
        let mut charts = Vec::new();
        for ca in &a.charts {
            for cb in &b.charts {
                charts.push(product_chart(ca, cb)?);
            }
        }
        Ok(Self {
            charts,
            quad_nodes: a.quad_nodes.min(b.quad_nodes),
        })
    }

    /// Circle of radius r in ℝ², t ↦ r(cos t, sin t).
    pub fn circle(r: f64) -> Result<Self> {
        positive(r, "circle radius")?;
        let chart = Chart::new(
            vec![0.0],
            vec![TAU],
            vec![true],
            2,
            Arc::new(move |t| vec![r * t[0].cos(), r * t[0].sin()]),
            Some(Arc::new(move |t| {
                DMatrix::from_column_slice(2, 1, &[-r * t[0].sin(), r * t[0].cos()])
            })),
        )?;
        Ok(Self::from_chart(chart))
    }

    /// Circle on the unit sphere S² ⊂ ℝ³ at polar angle θ₀ (θ₀ = π/2 is
    /// the equator, a great circle).
    pub fn latitude_circle(theta0: f64) -> Result<Self> {
        if !(theta0 > 0.0 && theta0 < PI) {
            return Err(Error::InvalidArgument(format!(
                "polar angle must lie in (0, π), got {theta0}"
            )));
        }
        let (s, c) = theta0.sin_cos();
        let chart = Chart::new(
            vec![0.0],
            vec![TAU],
            vec![true],
            3,
            Arc::new(move |t| vec![s * t[0].cos(), s * t[0].sin(), c]),
            Some(Arc::new(move |t| {
                DMatrix::from_column_slice(3, 1, &[-s * t[0].sin(), s * t[0].cos(), 0.0])
            })),
        )?;
        Ok(Self::from_chart(chart))
    }

    pub fn great_circle() -> Result<Self> {
        Self::latitude_circle(PI / 2.0)
    }

    /// Torus C₁ × C₂ ⊂ ℝ² × ℝ² with circle radii r₁, r₂.
    pub fn torus_embedded(r1: f64, r2: f64) -> Result<Self> {
        Self::product(&Self::circle(r1)?, &Self::circle(r2)?)
    }

    /// C₁ × C₂ ⊂ S² × S² ⊂ ℝ³ × ℝ³ with latitude circles at polar angles θ₁, θ₂.
    pub fn product_of_circles_on_spheres(theta1: f64, theta2: f64) -> Result<Self> {
        Self::product(&Self::latitude_circle(theta1)?, &Self::latitude_circle(theta2)?)
    }

    /// Unit sphere S² ⊂ ℝ³ in polar coordinates (θ, φ) ∈ [0, π] × [0, 2π).
    pub fn unit_sphere() -> Result<Self> {
        let chart = Chart::new(
            vec![0.0, 0.0],
            vec![PI, TAU],
            vec![false, true],
            3,
            Arc::new(|t| {
                let (st, ct) = t[0].sin_cos();
                let (sp, cp) = t[1].sin_cos();
                vec![st * cp, st * sp, ct]
            }),
            Some(Arc::new(|t| {
                let (st, ct) = t[0].sin_cos();
                let (sp, cp) = t[1].sin_cos();
                DMatrix::from_column_slice(3, 2, &[ct * cp, ct * sp, -st, -st * sp, st * cp, 0.0])
            })),
        )?;
        Ok(Self::from_chart(chart))
    }

    /// Graph surface (s, t) ↦ (s, p(s, t), t, q(s, t)) ⊂ ℝ² × ℝ² over a box.
    pub fn graph_surface(p: Polynomial, q: Polynomial, lower: [f64; 2], upper: [f64; 2]) -> Result<Self> {
        check_dim(2, p.vars(), "graph polynomial p")?;
        check_dim(2, q.vars(), "graph polynomial q")?;
        let (p1, q1) = (p.clone(), q.clone());
        let chart = Chart::new(
            lower.to_vec(),
            upper.to_vec(),
            vec![false, false],
            4,
            Arc::new(move |t| vec![t[0], p1.eval(t), t[1], q1.eval(t)]),
            Some(Arc::new(move |t| {
                let gp = p.gradient(t);
                let gq = q.gradient(t);
                DMatrix::from_row_slice(4, 2, &[1.0, 0.0, gp[0], gp[1], 0.0, 1.0, gq[0], gq[1]])
            })),
        )?;
        Ok(Self::from_chart(chart))
    }
}

fn product_chart(a: &Chart, b: &Chart) -> Result<Chart> {
    let (ka, kb) = (a.param_dim(), b.param_dim());
    let (da, db) = (a.ambient_dim(), b.ambient_dim());
    let (ma, mb) = (a.map.clone(), b.map.clone());
    let map: MapFn = Arc::new(move |t| {
        let mut x = ma(&t[..ka]);
        x.extend(mb(&t[ka..]));
        x
    });
    let differential = match (a.differential.clone(), b.differential.clone()) {
        (Some(dfa), Some(dfb)) => Some(Arc::new(move |t: &[f64]| {
            let mut m = DMatrix::zeros(da + db, ka + kb);
            m.view_mut((0, 0), (da, ka)).copy_from(&dfa(&t[..ka]));
            m.view_mut((da, ka), (db, kb)).copy_from(&dfb(&t[ka..]));
            m
        }) as DifferentialFn),
        _ => None,
    };
    Chart::new(
        [a.lower.clone(), b.lower.clone()].concat(),
        [a.upper.clone(), b.upper.clone()].concat(),
        [a.periodic.clone(), b.periodic.clone()].concat(),
        da + db,
        map,
        differential,
    )
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} must be positive, got {x}")))
    }
}

pub(crate) fn has_full_column_rank(d: &DMatrix<f64>) -> bool {
    let norms: f64 = d.column_iter().map(|c| c.norm()).product();
    if norms == 0.0 {
        return false;
    }
    let g = d.transpose() * d;
    g.determinant().max(0.0).sqrt() > 1e-10 * norms
}

/// Polynomial in k variables given by a coefficient table of
/// `(exponents, coefficient)` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    vars: usize,
    terms: Vec<(Vec<u32>, f64)>,
}

impl Polynomial {
    pub fn new(vars: usize, terms: Vec<(Vec<u32>, f64)>) -> Result<Self> {
        for (e, _) in &terms {
            check_dim(vars, e.len(), "polynomial exponent tuple")?;
        }
        Ok(Self { vars, terms })
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn terms(&self) -> &[(Vec<u32>, f64)] {
        &self.terms
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(t).map(|(&p, x)| x.powi(p as i32)).product::<f64>())
            .sum()
    }

    pub fn gradient(&self, t: &[f64]) -> Vec<f64> {
        (0..self.vars)
            .map(|v| {
                self.terms
                    .iter()
                    .filter(|(e, _)| e[v] > 0)
                    .map(|(e, c)| {
                        let mut prod = c * e[v] as f64;
                        for (i, (&p, x)) in e.iter().zip(t).enumerate() {
                            let p = if i == v { p - 1 } else { p };
                            prod *= x.powi(p as i32);
                        }
                        prod
                    })
                    .sum()
            })
            .collect()
    }
}
