//! Densities on chart-based manifolds: Finsler ellipsoid fields, ring
//! products of their 1-densities, mixed Riemannian densities and
//! quadrature over parametrized submanifolds.

mod density;
mod field;
mod manifold;

pub use density::{
    d_m_density, eval_vol1, mixed_riemannian_density, riemannian_volume, ring_product_eval,
    EllipsoidDensity,
};
pub use field::{pullback_field, FieldBase, FieldPoint, FinslerField};
pub use manifold::{
    Chart, DifferentialFn, MapFn, ParamManifold, Polynomial, DEFAULT_QUAD_NODES,
};

use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::geomcore::Frame;
use crate::mixvol::MixedVolumeConfig;
use crate::numeric::KahanSum;
use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    /// Midpoint nodes per parameter axis; `None` uses the manifold's default.
    pub nodes: Option<usize>,
    pub mixvol: MixedVolumeConfig,
    pub exec: Execution,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            nodes: None,
            mixvol: MixedVolumeConfig::default(),
            exec: Execution::Parallel,
        }
    }
}

/// Result of [`integrate_density`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Integral {
    pub value: f64,
    /// Richardson estimate `|I_n − I_{n/2}| / 3`.
    pub error_estimate: f64,
    /// Monte Carlo standard error propagated from stochastic mixed-volume
    /// routes (m ≥ 3); zero otherwise.
    pub stderr: f64,
    /// Set when a chart lacked an analytic differential.
    pub finite_difference: bool,
}

/// `∫_M d`: composite midpoint rule over every chart, with the value at a
/// node taken on the frame of coordinate vectors (pushed forward to the
/// ambient space for ambient densities).
pub fn integrate_density(
    m: &ParamManifold,
    d: &EllipsoidDensity,
    cfg: &QuadratureConfig,
) -> Result<Integral> {
    check_dim(m.param_dim(), d.degree(), "density degree vs manifold dimension")?;
    match d.base() {
        FieldBase::Ambient(dim) => check_dim(m.ambient_dim(), dim, "ambient density dimension")?,
        FieldBase::Params(dim) => check_dim(m.param_dim(), dim, "parameter density dimension")?,
    }
    let n = cfg.nodes.unwrap_or(m.quad_nodes()).max(2);
    let fine = midpoint_sum(m, d, n, cfg)?;
    let coarse = midpoint_sum(m, d, n / 2, cfg)?;
    Ok(Integral {
        value: fine.0,
        error_estimate: (fine.0 - coarse.0).abs() / 3.0,
        stderr: fine.1,
        finite_difference: !m.has_analytic_differentials(),
    })
}

fn midpoint_sum(
    m: &ParamManifold,
    d: &EllipsoidDensity,
    n: usize,
    cfg: &QuadratureConfig,
) -> Result<(f64, f64)> {
    let nodes = m.quadrature_nodes(n);
    let k = m.param_dim();
    let values = cfg.exec.map(nodes.len(), |i| {
        let (ci, t, w) = &nodes[i];
        let at = FieldPoint::on_manifold(m, *ci, t);
        if !manifold::has_full_column_rank(&at.differential) {
            return Err(Error::RankDeficientDifferential {
                expected: k,
                param: t.clone(),
            });
        }
        let frame = match d.base() {
            FieldBase::Ambient(_) => Frame::from_columns(at.differential.clone())?,
            FieldBase::Params(_) => Frame::from_columns(DMatrix::identity(k, k))?,
        };
        let r = d.eval(&at, &frame, &cfg.mixvol)?;
        Ok((w * r.value, w * r.stderr))
    });
    let mut sum = KahanSum::new();
    let mut err = KahanSum::new();
    for v in values {
        let (a, b) = v?;
        sum.add(a);
        err.add(b);
    }
    Ok((sum.value(), err.value()))
}
