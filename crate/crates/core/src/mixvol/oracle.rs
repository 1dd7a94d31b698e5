//! Brute-force mixed-volume oracle: the coefficient of λ₁⋯λ_m in the volume
//! polynomial `Vol(λ₁E₁ + … + λ_mE_m)`, divided by m!.
//!
//! Each volume on a λ-grid is estimated by Monte Carlo membership sampling:
//! a point x lies in the Minkowski combination when
//! `min_u [Σ λ_i h_i(u) − ⟨x, u⟩] ≥ 0` over a dense direction set. The
//! degree-m homogeneous polynomial is then fitted by weighted least squares.
//! Nothing here uses determinants, so the oracle is independent of the
//! Gaussian route.

use super::{MixedVolumeMethod, MixedVolumeResult};
use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::geomcore::QuadForm;
use crate::numeric::{factorial, random_unit_vector, substream, unit_ball_volume};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

const MAX_CONDITION: f64 = 1e8;
const BLOCK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleConfig {
    /// λ values per axis (`≥ m + 1`), spread evenly over [0, 1].
    pub grid_size: usize,
    /// Membership samples per λ-grid point.
    pub n_membership_samples: usize,
    /// Size of the direction set (≥ 10⁴ for m ≥ 2).
    pub n_directions: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            grid_size: 4,
            n_membership_samples: 4000,
            n_directions: 10_000,
            seed: 0x0dac1e,
            exec: Execution::Parallel,
        }
    }
}

pub fn mixed_volume_oracle(qs: &[QuadForm], cfg: &OracleConfig) -> Result<MixedVolumeResult> {
    let m = qs.len();
    if !(1..=3).contains(&m) {
        return Err(Error::InvalidArgument(format!(
            "the oracle supports 1 ≤ m ≤ 3, got {m}"
        )));
    }
    for q in qs {
        check_dim(m, q.dim(), "oracle needs m forms of dimension m")?;
    }
    if cfg.grid_size < m + 1 {
        return Err(Error::InvalidArgument(format!(
            "grid_size must be at least m + 1 = {}",
            m + 1
        )));
    }
    if cfg.n_membership_samples < 10 {
        return Err(Error::InvalidArgument("too few membership samples".into()));
    }
    if m >= 2 && cfg.n_directions < 10_000 {
        return Err(Error::InvalidArgument(
            "the direction set needs at least 10^4 points".into(),
        ));
    }

    let dirs = DirectionSet::new(m, cfg.n_directions);
    let lambdas = lambda_grid(m, cfg.grid_size);
    let supports: Vec<Vec<f64>> = qs
        .iter()
        .map(|q| dirs.points.iter().map(|u| q.quad(u).sqrt()).collect())
        .collect();

    let estimates = cfg.exec.map(lambdas.len(), |p| {
        let body = CombinedBody::new(qs, &lambdas[p], &supports, &dirs);
        body.estimate_volume(cfg.n_membership_samples, cfg.seed, p as u64)
    });

    // weighted least squares for the homogeneous degree-m volume polynomial
    let exps = monomial_exponents(m);
    let k = exps.len();
    let n = lambdas.len();
    let mut a = DMatrix::<f64>::zeros(n, k);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let max_sigma = estimates.iter().map(|e| e.1).fold(0.0, f64::max);
    let sigma_floor = (max_sigma * 1e-3).max(1e-300);
    for (i, lam) in lambdas.iter().enumerate() {
        for (j, e) in exps.iter().enumerate() {
            a[(i, j)] = lam.iter().zip(e).map(|(l, &p)| l.powi(p as i32)).product();
        }
        y[i] = estimates[i].0;
        let s = estimates[i].1.max(sigma_floor);
        w[i] = 1.0 / (s * s);
    }
    let mut normal = DMatrix::<f64>::zeros(k, k);
    let mut rhs = DVector::<f64>::zeros(k);
    for i in 0..n {
        for r in 0..k {
            rhs[r] += w[i] * a[(i, r)] * y[i];
            for c in 0..k {
                normal[(r, c)] += w[i] * a[(i, r)] * a[(i, c)];
            }
        }
    }
    // equilibrate before judging conditioning
    let scale: Vec<f64> = (0..k).map(|j| normal[(j, j)].sqrt().max(1e-300)).collect();
    let equil = DMatrix::from_fn(k, k, |r, c| normal[(r, c)] / (scale[r] * scale[c]));
    let eig = SymmetricEigen::new(equil.clone());
    let (lmin, lmax) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::OracleFailure(format!(
            "polynomial fit condition number {condition:e} exceeds {MAX_CONDITION:e}"
        )));
    }
    let inv_equil = equil
        .try_inverse()
        .ok_or_else(|| Error::OracleFailure("singular normal equations".into()))?;
    let cov = DMatrix::from_fn(k, k, |r, c| inv_equil[(r, c)] / (scale[r] * scale[c]));
    let coef = &cov * &rhs;

    let resid: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..k).map(|j| a[(i, j)] * coef[j]).sum();
            w[i] * (y[i] - fit).powi(2)
        })
        .sum();
    let dof = (n - k).max(1) as f64;
    let inflate = (resid / dof).max(1.0);

    let mixed = exps
        .iter()
        .position(|e| e.iter().all(|&p| p == 1))
        .expect("mixed monomial present");
    let mf = factorial(m);
    Ok(MixedVolumeResult {
        value: (coef[mixed] / mf).max(0.0),
        stderr: (cov[(mixed, mixed)] * inflate).max(0.0).sqrt() / mf,
        method: MixedVolumeMethod::OraclePolyfit,
    })
}

/// Exponent tuples α with |α| = m in m variables.
fn monomial_exponents(m: usize) -> Vec<Vec<usize>> {
    fn rec(vars: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if vars == 1 {
            cur.push(left);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for p in 0..=left {
            cur.push(p);
            rec(vars - 1, left - p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(m, m, &mut Vec::new(), &mut out);
    out
}

fn lambda_grid(m: usize, g: usize) -> Vec<Vec<f64>> {
    let vals: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let mut out = Vec::new();
    let total = g.pow(m as u32);
    for idx in 0..total {
        let mut rem = idx;
        let lam: Vec<f64> = (0..m)
            .map(|_| {
                let v = vals[rem % g];
                rem /= g;
                v
            })
            .collect();
        if lam.iter().any(|&l| l > 0.0) {
            out.push(lam);
        }
    }
    out
}

/// Low-discrepancy direction set on S^{m−1}, grouped into spatially
/// compact blocks with bounding caps.
struct DirectionSet {
    points: Vec<Vec<f64>>,
    blocks: Vec<DirectionBlock>,
}

struct DirectionBlock {
    range: std::ops::Range<usize>,
    center: Vec<f64>,
    /// max |u − center| over the block
    radius: f64,
}

impl DirectionSet {
    fn new(m: usize, n: usize) -> Self {
        let points: Vec<Vec<f64>> = match m {
            1 => vec![vec![1.0], vec![-1.0]],
            2 => (0..n)
                .map(|j| {
                    let t = std::f64::consts::TAU * j as f64 / n as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            _ => fibonacci_sphere(n),
        };
        let block = if m == 1 { 1 } else { BLOCK };
        let blocks = points
            .chunks(block)
            .enumerate()
            .map(|(b, chunk)| {
                let mut c = vec![0.0; m];
                for u in chunk {
                    for (ci, ui) in c.iter_mut().zip(u) {
                        *ci += ui;
                    }
                }
                let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                let center: Vec<f64> = if norm > 0.0 {
                    c.iter().map(|x| x / norm).collect()
                } else {
                    chunk[0].clone()
                };
                let radius = chunk
                    .iter()
                    .map(|u| {
                        u.iter()
                            .zip(&center)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .fold(0.0, f64::max);
                DirectionBlock {
                    range: b * block..b * block + chunk.len(),
                    center,
                    radius,
                }
            })
            .collect();
        Self { points, blocks }
    }
}

/// Fibonacci lattice, reordered into latitude bands sorted by azimuth so
/// consecutive points are close.
fn fibonacci_sphere(n: usize) -> Vec<Vec<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut pts: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let z = 1.0 - (2.0 * j as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * j as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    let bands = ((n as f64 / (std::f64::consts::PI * BLOCK as f64)).sqrt().round() as usize).max(1);
    let key = |u: &Vec<f64>| {
        let band = (((u[2] + 1.0) / 2.0 * bands as f64) as usize).min(bands - 1);
        (band, u[1].atan2(u[0]))
    };
    pts.sort_by(|a, b| {
        let (ba, pa) = key(a);
        let (bb, pb) = key(b);
        ba.cmp(&bb).then(pa.total_cmp(&pb))
    });
    pts
}

struct CombinedBody<'a> {
    m: usize,
    dirs: &'a DirectionSet,
    support: Vec<f64>,
    block_min: Vec<f64>,
    outer_root: Option<DMatrix<f64>>,
    outer_volume: f64,
    inner_inverse: Option<DMatrix<f64>>,
}

impl<'a> CombinedBody<'a> {
    fn new(qs: &[QuadForm], lam: &[f64], supports: &[Vec<f64>], dirs: &'a DirectionSet) -> Self {
        let m = qs.len();
        let support: Vec<f64> = (0..dirs.points.len())
            .map(|j| lam.iter().zip(supports).map(|(l, s)| l * s[j]).sum())
            .collect();
        let block_min = dirs
            .blocks
            .iter()
            .map(|b| support[b.range.clone()].iter().copied().fold(f64::INFINITY, f64::min))
            .collect();

        // (Σ a_i)² ≤ (Σ w_i)(Σ a_i² / w_i): outer ellipsoid containing the sum
        let mut wsum = 0.0;
        let mut outer = DMatrix::zeros(m, m);
        let mut inner = DMatrix::zeros(m, m);
        for (q, &l) in qs.iter().zip(lam) {
            let tr = q.trace();
            if l <= 0.0 || tr <= 0.0 {
                continue;
            }
            let w = l * tr.sqrt();
            wsum += w;
            outer += q.matrix() * (l * l / w);
            inner += q.matrix() * (l * l);
        }
        outer *= wsum;
        let outer_det = outer.determinant();
        let tr_out = outer.trace() / m as f64;
        let (outer_root, outer_volume) = if wsum > 0.0 && outer_det > 1e-14 * tr_out.powi(m as i32)
        {
            let form = QuadForm::new(outer).expect("sum of PSD forms");
            let vol = unit_ball_volume(m) * form.determinant().sqrt();
            (Some(form.sqrt()), vol)
        } else {
            (None, 0.0)
        };
        let inner_inverse = if inner.determinant() > 1e-12 * (inner.trace() / m as f64).powi(m as i32) {
            inner.try_inverse()
        } else {
            None
        };
        Self {
            m,
            dirs,
            support,
            block_min,
            outer_root,
            outer_volume,
            inner_inverse,
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        if let Some(inv) = &self.inner_inverse {
            let mut q = 0.0;
            for r in 0..self.m {
                for c in 0..self.m {
                    q += x[r] * inv[(r, c)] * x[c];
                }
            }
            if q <= 1.0 {
                return true;
            }
        }
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (b, blk) in self.dirs.blocks.iter().enumerate() {
            let proj: f64 = blk.center.iter().zip(x).map(|(a, b)| a * b).sum();
            // every u in the block has ⟨x, u⟩ ≤ ⟨x, c⟩ + |x|·radius
            if self.block_min[b] - proj - nx * blk.radius >= 0.0 {
                continue;
            }
            for j in blk.range.clone() {
                let u = &self.dirs.points[j];
                let dot: f64 = u.iter().zip(x).map(|(a, b)| a * b).sum();
                if self.support[j] - dot < 0.0 {
                    return false;
                }
            }
        }
        true
    }

    /// (volume, standard error)
    fn estimate_volume(&self, n: usize, seed: u64, point: u64) -> (f64, f64) {
        let Some(root) = &self.outer_root else {
            return (0.0, 0.0);
        };
        let mut rng = substream(seed, point);
        let m = self.m;
        let mut hits = 0usize;
        let mut x = vec![0.0; m];
        for _ in 0..n {
            let dir = random_unit_vector(m, &mut rng);
            let rad = rng.random::<f64>().powf(1.0 / m as f64);
            for r in 0..m {
                x[r] = (0..m).map(|c| root[(r, c)] * dir[c] * rad).sum();
            }
            if self.contains(&x) {
                hits += 1;
            }
        }
        let p = hits as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
        (self.outer_volume * p, self.outer_volume * se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn exponents_and_grid_sizes() {
        assert_eq!(monomial_exponents(2).len(), 3);
        assert_eq!(monomial_exponents(3).len(), 10);
        assert_eq!(lambda_grid(2, 3).len(), 8);
        assert_eq!(lambda_grid(3, 4).len(), 63);
    }

    #[test]
    fn block_caps_cover_their_points() {
        let d = DirectionSet::new(3, 10_000);
        let mut mean = 0.0;
        for b in &d.blocks {
            for j in b.range.clone() {
                let dist: f64 = d.points[j]
                    .iter()
                    .zip(&b.center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt();
                assert!(dist <= b.radius + 1e-15);
            }
            mean += b.radius / d.blocks.len() as f64;
        }
        assert!(mean < 0.3, "blocks too wide on average: {mean}");
        assert_eq!(d.points.len(), 10_000);
    }

    #[test]
    fn disk_oracle() {
        let qs = [QuadForm::identity(2), QuadForm::identity(2)];
        let r = mixed_volume_oracle(&qs, &OracleConfig::default()).unwrap();
        assert!((r.value - PI).abs() < 3.0 * r.stderr, "{r:?}");
        assert_eq!(r.method, MixedVolumeMethod::OraclePolyfit);
    }

    #[test]
    fn rejects_bad_configuration() {
        let qs = [QuadForm::identity(2), QuadForm::identity(2)];
        let cfg = OracleConfig {
            grid_size: 2,
            ..Default::default()
        };
        assert!(mixed_volume_oracle(&qs, &cfg).is_err());
        let four: Vec<_> = (0..4).map(|_| QuadForm::identity(4)).collect();
        assert!(mixed_volume_oracle(&four, &OracleConfig::default()).is_err());
    }
}
