//! Mixed volumes of ellipsoids and the densities `d_m(A₁, …, A_m)`.
//!
//! Three independent routes are provided:
//!
//! * exact routes for m ≤ 2 ([`mixed_area_2d`] and the 1D segment length),
//! * the calibrated Gaussian-determinant estimator [`mixed_volume_gauss`],
//! * the brute-force polynomial-fit oracle [`mixed_volume_oracle`], which
//!   never looks at determinants and serves as ground truth for the others.
//!
//! Normalization: `Vol(λ₁K₁ + … + λ_mK_m) = Σ V(K_{i₁}, …, K_{i_m}) λ_{i₁}…λ_{i_m}`,
//! so `V(K, …, K) = Vol(K)` and in the plane `A(K ⊕ L) = A(K) + 2V(K, L) + A(L)`.

mod gauss;
mod oracle;
mod planar;

pub use gauss::{gauss_calibration_constant, mixed_volume_gauss};
pub use oracle::{mixed_volume_oracle, OracleConfig};
pub use planar::{mixed_area_2d, mixed_area_2d_with_nodes};

use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::geomcore::{gram_volume, restrict_form, Ellipsoid, Frame, QuadForm};
use crate::numeric::unit_ball_volume;

/// Default node count of the planar support-function quadrature.
pub const DEFAULT_QUAD_NODES: usize = 4096;
/// Smallest sample count accepted by the Gaussian estimator.
pub const MIN_GAUSS_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedVolumeMethod {
    Exact1d,
    Exact2d,
    GaussEstimator,
    OraclePolyfit,
}

/// A mixed volume together with its Monte Carlo standard error; exact
/// routes carry `stderr = 0`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MixedVolumeResult {
    pub value: f64,
    pub stderr: f64,
    pub method: MixedVolumeMethod,
}

impl MixedVolumeResult {
    pub fn exact(value: f64, method: MixedVolumeMethod) -> Self {
        debug_assert!(matches!(
            method,
            MixedVolumeMethod::Exact1d | MixedVolumeMethod::Exact2d
        ));
        Self {
            value,
            stderr: 0.0,
            method,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(
            self.method,
            MixedVolumeMethod::Exact1d | MixedVolumeMethod::Exact2d
        )
    }

    pub fn scaled(self, s: f64) -> Self {
        Self {
            value: self.value * s,
            stderr: self.stderr * s.abs(),
            method: self.method,
        }
    }
}

/// Settings for routes that need them: planar quadrature size and the
/// Gaussian estimator used when m ≥ 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixedVolumeConfig {
    pub quad_nodes: usize,
    pub gauss_samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for MixedVolumeConfig {
    fn default() -> Self {
        Self {
            quad_nodes: DEFAULT_QUAD_NODES,
            gauss_samples: 20_000,
            seed: 0x5eed,
            exec: Execution::Parallel,
        }
    }
}

/// Volume `v_m · sqrt(det Q)` of the ellipsoid with support sqrt(uᵀQu).
pub fn ellipsoid_volume(q: &QuadForm) -> f64 {
    unit_ball_volume(q.dim()) * q.determinant().sqrt()
}

/// Mixed volume of m ellipsoids in ℝ^m, dispatching to the exact route for
/// m ≤ 2 and the Gaussian estimator otherwise.
pub fn mixed_volume(qs: &[QuadForm], cfg: &MixedVolumeConfig) -> Result<MixedVolumeResult> {
    let m = qs.len();
    if m == 0 {
        return Err(Error::InvalidArgument("mixed volume of zero bodies".into()));
    }
    for q in qs {
        check_dim(m, q.dim(), "mixed volume needs m forms of dimension m")?;
    }
    match m {
        1 => Ok(MixedVolumeResult::exact(
            2.0 * qs[0].quad(&[1.0]).sqrt(),
            MixedVolumeMethod::Exact1d,
        )),
        2 => Ok(mixed_area_2d_with_nodes(&qs[0], &qs[1], cfg.quad_nodes)?),
        _ => mixed_volume_gauss(qs, cfg.gauss_samples, cfg.seed, cfg.exec),
    }
}

/// Relative threshold below which a frame is treated as rank deficient.
const FRAME_RANK_RTOL: f64 = 1e-12;

/// `d_m(A₁, …, A_m)` evaluated on a frame: the mixed m-volume of the bodies
/// projected onto the span of the frame, in coordinates where the frame is
/// the standard basis.
pub fn eval_d_m(
    bodies: &[Ellipsoid],
    f: &Frame,
    cfg: &MixedVolumeConfig,
) -> Result<MixedVolumeResult> {
    let m = f.len();
    check_dim(m, bodies.len(), "eval_d_m needs one body per frame vector")?;
    if m == 0 {
        return Err(Error::InvalidArgument("empty frame".into()));
    }
    for b in bodies {
        check_dim(f.ambient_dim(), b.dim(), "eval_d_m body dimension")?;
    }
    let method = match m {
        1 => MixedVolumeMethod::Exact1d,
        2 => MixedVolumeMethod::Exact2d,
        _ => MixedVolumeMethod::GaussEstimator,
    };
    if frame_is_degenerate(f) {
        return Ok(MixedVolumeResult {
            value: 0.0,
            stderr: 0.0,
            method,
        });
    }
    let restricted = bodies
        .iter()
        .map(|b| restrict_form(b.form(), f))
        .collect::<Result<Vec<_>>>()?;
    mixed_volume(&restricted, cfg)
}

pub(crate) fn frame_is_degenerate(f: &Frame) -> bool {
    let d = f.ambient_dim();
    let vol = gram_volume(&QuadForm::identity(d), f).unwrap_or(0.0);
    let norms: f64 = (0..f.len())
        .map(|i| f.columns().column(i).norm())
        .product();
    norms == 0.0 || vol <= FRAME_RANK_RTOL * norms
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ellipsoid_volume_examples() {
        assert!((ellipsoid_volume(&QuadForm::identity(2)) - PI).abs() < 1e-15);
        assert!((ellipsoid_volume(&QuadForm::diag(&[4.0, 1.0]).unwrap()) - 2.0 * PI).abs() < 1e-14);
        assert!((ellipsoid_volume(&QuadForm::identity(3)) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn eval_d_m_examples() {
        let cfg = MixedVolumeConfig::default();
        let disk = Ellipsoid::unit_ball(2);
        let r = eval_d_m(&[disk.clone(), disk.clone()], &Frame::standard(2, 2).unwrap(), &cfg)
            .unwrap();
        assert!((r.value - PI).abs() < 1e-12);
        assert_eq!(r.stderr, 0.0);

        let ball = Ellipsoid::unit_ball(3);
        let r = eval_d_m(&[ball.clone(), ball.clone()], &Frame::standard(3, 2).unwrap(), &cfg)
            .unwrap();
        assert!((r.value - PI).abs() < 1e-12);

        let f = Frame::new(3, &[vec![1.0, 2.0, 0.5], vec![2.0, 4.0, 1.0]]).unwrap();
        let r = eval_d_m(&[ball.clone(), ball], &f, &cfg).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn eval_d_m_one_dimensional_is_width() {
        let e = Ellipsoid::new(QuadForm::diag(&[4.0, 9.0]).unwrap());
        let f = Frame::new(2, &[vec![1.0, 1.0]]).unwrap();
        let r = eval_d_m(&[e], &f, &MixedVolumeConfig::default()).unwrap();
        assert!((r.value - 2.0 * 13f64.sqrt()).abs() < 1e-14);
        assert_eq!(r.method, MixedVolumeMethod::Exact1d);
    }

    #[test]
    fn eval_d_m_rejects_mismatch() {
        let e = Ellipsoid::unit_ball(2);
        assert!(eval_d_m(&[e.clone()], &Frame::standard(2, 2).unwrap(), &Default::default()).is_err());
        let e3 = Ellipsoid::unit_ball(3);
        assert!(eval_d_m(&[e, e3], &Frame::standard(2, 2).unwrap(), &Default::default()).is_err());
    }
}
