//! Exact planar route: polarization of the support-function area formula
//! `A(K) = ½∫₀^{2π} (h² − h′²) dθ`, which gives
//! `V(K, L) = ½∫₀^{2π} (h_K h_L − h_K′ h_L′) dθ`.
//!
//! The formula holds for any planar convex body, including segments whose
//! support function has kinks. The integrand is analytic between kinks, so
//! the circle is cut at the directions orthogonal to each body's
//! minor axis (the kink directions of segment bodies) and every arc is
//! integrated with composite Gauss–Legendre panels.

use super::{MixedVolumeMethod, MixedVolumeResult, DEFAULT_QUAD_NODES};
use crate::error::{check_dim, Error, Result};
use crate::geomcore::QuadForm;
use crate::numeric::{gauss_legendre, KahanSum};
use std::f64::consts::TAU;

const PANEL_ORDER: usize = 16;

pub fn mixed_area_2d(q1: &QuadForm, q2: &QuadForm) -> Result<MixedVolumeResult> {
    mixed_area_2d_with_nodes(q1, q2, DEFAULT_QUAD_NODES)
}

/// [`mixed_area_2d`] with an explicit total node count (rounded up to a
/// multiple of the panel order, at least one panel per arc).
pub fn mixed_area_2d_with_nodes(
    q1: &QuadForm,
    q2: &QuadForm,
    nodes: usize,
) -> Result<MixedVolumeResult> {
    check_dim(2, q1.dim(), "mixed_area_2d first form")?;
    check_dim(2, q2.dim(), "mixed_area_2d second form")?;
    if nodes < PANEL_ORDER {
        return Err(Error::InvalidArgument(format!(
            "mixed_area_2d needs at least {PANEL_ORDER} nodes"
        )));
    }
    let a = PlanarSupport::new(q1);
    let b = PlanarSupport::new(q2);
    if a.is_zero() || b.is_zero() {
        return Ok(MixedVolumeResult::exact(0.0, MixedVolumeMethod::Exact2d));
    }

    let mut cuts: Vec<f64> = a.breakpoints().into_iter().chain(b.breakpoints()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    if cuts.is_empty() {
        cuts.push(0.0);
    }

    let (gx, gw) = gauss_legendre(PANEL_ORDER);
    let total_panels = nodes.div_ceil(PANEL_ORDER);
    let mut sum = KahanSum::new();
    for (i, &start) in cuts.iter().enumerate() {
        let end = if i + 1 < cuts.len() {
            cuts[i + 1]
        } else {
            cuts[0] + TAU
        };
        let len = end - start;
        if len <= 0.0 {
            continue;
        }
        let panels = ((len / TAU * total_panels as f64).round() as usize).max(1);
        let h = len / panels as f64;
        for p in 0..panels {
            let mid = start + (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                let theta = mid + 0.5 * h * x;
                let (ha, dha) = a.eval(theta);
                let (hb, dhb) = b.eval(theta);
                sum.add(0.5 * h * w * (ha * hb - dha * dhb));
            }
        }
    }
    let value = (0.5 * sum.value()).max(0.0);
    Ok(MixedVolumeResult::exact(value, MixedVolumeMethod::Exact2d))
}

struct PlanarSupport {
    q: [f64; 3],
    minor_angle: Option<f64>,
    scale: f64,
}

impl PlanarSupport {
    fn new(form: &QuadForm) -> Self {
        let m = form.matrix();
        let q = [m[(0, 0)], m[(0, 1)], m[(1, 1)]];
        let (vals, vecs) = form.eigen();
        let scale = vals[1];
        let minor_angle = if scale > 0.0 && vals[0] < vals[1] * (1.0 - 1e-12) {
            Some(vecs[(1, 0)].atan2(vecs[(0, 0)]))
        } else {
            None
        };
        Self {
            q,
            minor_angle,
            scale,
        }
    }

    fn is_zero(&self) -> bool {
        self.scale <= 0.0
    }

    /// Directions where h is smallest; for a segment these are its kinks.
    fn breakpoints(&self) -> Vec<f64> {
        match self.minor_angle {
            Some(a) => vec![a.rem_euclid(TAU), (a + std::f64::consts::PI).rem_euclid(TAU)],
            None => Vec::new(),
        }
    }

    /// Support value and its θ-derivative; the derivative is taken as 0
    /// where h vanishes (kink of a segment body).
    fn eval(&self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        let [a, b, d] = self.q;
        let hh = (a * c * c + 2.0 * b * c * s + d * s * s).max(0.0);
        let h = hh.sqrt();
        // u = (c, s), u' = (−s, c): d(uᵀQu)/dθ = 2 uᵀQu'
        let cross = -a * c * s + b * (c * c - s * s) + d * s * c;
        if h <= 1e-300 || hh <= 1e-30 * self.scale {
            (h, 0.0)
        } else {
            (h, cross / h)
        }
    }
}
