//! Quick built-in consistency checks.

use crate::error::Result;
use crate::exec::Execution;
use crate::geomcore::{gram_volume, Ellipsoid, Frame, QuadForm};
use crate::mixvol::{
    eval_d_m, mixed_area_2d, mixed_volume_gauss, mixed_volume_oracle, MixedVolumeConfig, OracleConfig,
};
use crate::numeric::{kappa, random_unit_vector, substream, unit_ball_volume, SampleSummary};
use rand::Rng;
use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelftestLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn line(name: impl Into<String>, passed: bool, detail: String) -> SelftestLine {
    SelftestLine {
        name: name.into(),
        passed,
        detail,
    }
}

fn random_form<R: Rng>(d: usize, rng: &mut R) -> QuadForm {
    let a = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    QuadForm::new(a.transpose() * a).expect("AᵀA is PSD")
}

/// κ_d against Monte Carlo, exact planar route against the oracle, and the
/// diagonal identity `d_m(𝒯_g, …, 𝒯_g)(f) = v_m · gram_volume(g, f)`.
pub fn selftest(seed: u64, exec: Execution) -> Result<Vec<SelftestLine>> {
    let mut out = Vec::new();
    for d in 2..=5 {
        let n = 100_000;
        let vals = exec.map(n, |i| {
            let mut rng = substream(seed, i as u64);
            random_unit_vector(d, &mut rng)[0].abs()
        });
        let s = SampleSummary::from_values(&vals);
        let ok = (s.mean - kappa(d)).abs() <= 4.0 * s.stderr();
        out.push(line(
            format!("kappa_{d}"),
            ok,
            format!("closed form {:.6}, Monte Carlo {:.6} ± {:.6}", kappa(d), s.mean, s.stderr()),
        ));
    }

    let pairs = [
        (QuadForm::identity(2), QuadForm::identity(2)),
        (QuadForm::diag(&[4.0, 1.0])?, QuadForm::identity(2)),
    ];
    for (i, (a, b)) in pairs.iter().enumerate() {
        let exact = mixed_area_2d(a, b)?.value;
        let o = mixed_volume_oracle(
            &[a.clone(), b.clone()],
            &OracleConfig {
                seed: seed.wrapping_add(i as u64),
                exec,
                ..Default::default()
            },
        )?;
        let ok = (o.value - exact).abs() <= 4.0 * o.stderr;
        out.push(line(
            format!("exact2d_vs_oracle_{i}"),
            ok,
            format!("exact {exact:.8}, oracle {:.6} ± {:.6}", o.value, o.stderr),
        ));
    }

    let mut rng = substream(seed, u64::MAX);
    let cfg = MixedVolumeConfig {
        exec,
        seed,
        ..Default::default()
    };
    for m in 1..=3usize {
        let d = m + 1;
        let g = random_form(d, &mut rng);
        let vectors: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let f = Frame::new(d, &vectors)?;
        let bodies = vec![Ellipsoid::new(g.clone()); m];
        let r = eval_d_m(&bodies, &f, &cfg)?;
        let expect = unit_ball_volume(m) * gram_volume(&g, &f)?;
        let tol = if r.is_exact() { 1e-8 * expect.max(1.0) } else { 4.0 * r.stderr };
        out.push(line(
            format!("diagonal_identity_m{m}"),
            (r.value - expect).abs() <= tol,
            format!("d_m {:.10}, v_m·gram {:.10}", r.value, expect),
        ));
    }

    let qs = vec![QuadForm::identity(3); 3];
    let gauss = mixed_volume_gauss(&qs, 20_000, seed, exec)?;
    let ball = unit_ball_volume(3);
    out.push(line(
        "gauss_unit_ball",
        (gauss.value - ball).abs() <= 4.0 * gauss.stderr,
        format!("{:.6} ± {:.6} vs 4π/3", gauss.value, gauss.stderr),
    ));
    Ok(out)
}
