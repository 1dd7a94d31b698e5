//! Mixed volumes through random determinants: for independent centered
//! Gaussian vectors `X_i ~ N(0, Q_i)`, `V(E₁, …, E_m)` is proportional to
//! `E|det(X₁, …, X_m)|` with a constant depending on m only. The constant is
//! calibrated on the unit ball, `V(B, …, B) = v_m`, where
//! `E|det G| = Π_{k≤m} E χ_k` for a standard Gaussian matrix `G`.

use super::{MixedVolumeMethod, MixedVolumeResult, MIN_GAUSS_SAMPLES};
use crate::error::{check_dim, Error, Result};
use crate::exec::Execution;
use crate::geomcore::QuadForm;
use crate::numeric::{
    det_in_place, expected_abs_det_gaussian, substream, unit_ball_volume, SampleSummary,
};
use rand::Rng;
use rand_distr::StandardNormal;

const CHUNK: usize = 2048;

/// `c_m = v_m / E|det G_m|`.
pub fn gauss_calibration_constant(m: usize) -> f64 {
    unit_ball_volume(m) / expected_abs_det_gaussian(m)
}

pub fn mixed_volume_gauss(
    qs: &[QuadForm],
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<MixedVolumeResult> {
    let m = qs.len();
    if m == 0 {
        return Err(Error::InvalidArgument("mixed volume of zero bodies".into()));
    }
    for q in qs {
        check_dim(m, q.dim(), "mixed_volume_gauss needs m forms of dimension m")?;
    }
    if m == 1 {
        return Ok(MixedVolumeResult::exact(
            2.0 * qs[0].quad(&[1.0]).sqrt(),
            MixedVolumeMethod::Exact1d,
        ));
    }
    if n_samples < MIN_GAUSS_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "mixed_volume_gauss needs at least {MIN_GAUSS_SAMPLES} samples, got {n_samples}"
        )));
    }
    // row-major square roots
    let roots: Vec<Vec<f64>> = qs
        .iter()
        .map(|q| {
            let s = q.sqrt();
            (0..m).flat_map(|r| (0..m).map(move |c| (r, c))).map(|(r, c)| s[(r, c)]).collect()
        })
        .collect();

    let chunks = n_samples.div_ceil(CHUNK);
    let per_chunk = exec.map(chunks, |ci| {
        let mut rng = substream(seed, ci as u64);
        let len = CHUNK.min(n_samples - ci * CHUNK);
        let mut z = vec![0.0; m];
        let mut mat = vec![0.0; m * m];
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            for (col, root) in roots.iter().enumerate() {
                for zk in z.iter_mut() {
                    *zk = rng.sample(StandardNormal);
                }
                for r in 0..m {
                    let row = &root[r * m..(r + 1) * m];
                    mat[r * m + col] = row.iter().zip(&z).map(|(a, b)| a * b).sum();
                }
            }
            out.push(det_in_place(&mut mat, m).abs());
        }
        out
    });
    let values: Vec<f64> = per_chunk.into_iter().flatten().collect();
    let summary = SampleSummary::from_values(&values);
    let c = gauss_calibration_constant(m);
    Ok(MixedVolumeResult {
        value: c * summary.mean,
        stderr: c * summary.stderr(),
        method: MixedVolumeMethod::GaussEstimator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixvol::mixed_area_2d;
    use std::f64::consts::PI;

    #[test]
    fn calibration_identity_in_the_plane() {
        let r = mixed_volume_gauss(
            &[QuadForm::identity(2), QuadForm::identity(2)],
            50_000,
            11,
            Execution::Parallel,
        )
        .unwrap();
        assert!((r.value - PI).abs() < 3.0 * r.stderr, "{r:?}");
        assert!(r.stderr > 0.0);
    }

    #[test]
    fn agrees_with_exact_planar_route() {
        let q1 = QuadForm::diag(&[4.0, 1.0]).unwrap();
        let q2 = QuadForm::identity(2);
        let exact = mixed_area_2d(&q1, &q2).unwrap().value;
        let r = mixed_volume_gauss(&[q1, q2], 100_000, 5, Execution::Parallel).unwrap();
        assert!((r.value - exact).abs() < 3.0 * r.stderr, "{r:?} vs {exact}");
    }

    #[test]
    fn one_dimensional_short_circuit() {
        let r = mixed_volume_gauss(&[QuadForm::diag(&[2.25]).unwrap()], 1, 0, Execution::Sequential)
            .unwrap();
        assert_eq!(r.value, 3.0);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn rejects_small_sample_counts() {
        let qs = [QuadForm::identity(2), QuadForm::identity(2)];
        assert!(mixed_volume_gauss(&qs, 99, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn independent_of_execution_policy() {
        let qs = [QuadForm::identity(3), QuadForm::diag(&[1.0, 2.0, 3.0]).unwrap(), QuadForm::identity(3)];
        let a = mixed_volume_gauss(&qs, 10_000, 3, Execution::Sequential).unwrap();
        let b = mixed_volume_gauss(&qs, 10_000, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }
}
