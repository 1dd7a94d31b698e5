use crofton::geomcore::{gram_volume, Ellipsoid, Frame, QuadForm};
use crofton::mixvol::{
    eval_d_m, mixed_area_2d, mixed_volume, mixed_volume_gauss, mixed_volume_oracle, MixedVolumeConfig,
    MixedVolumeMethod, OracleConfig,
};
use crofton::numeric::unit_ball_volume;
use crofton::Execution;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::PI;

fn form(d: usize) -> impl Strategy<Value = QuadForm> {
    prop::collection::vec(-1.0f64..1.0, d * d).prop_map(move |v| {
        let a = DMatrix::from_row_slice(d, d, &v);
        QuadForm::new(a.transpose() * a).unwrap()
    })
}

fn frame(d: usize, k: usize) -> impl Strategy<Value = Frame> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), k).prop_map(move |v| Frame::new(d, &v).unwrap())
}

fn cfg() -> MixedVolumeConfig {
    MixedVolumeConfig::default()
}

fn bodies(qs: &[QuadForm]) -> Vec<Ellipsoid> {
    qs.iter().cloned().map(Ellipsoid::new).collect()
}

/// Perimeter of the ellipse with semi-axes (a, b) by the periodic trapezoid rule.
fn perimeter(a: f64, b: f64) -> f64 {
    let n = 20_000;
    let h = 2.0 * PI / n as f64;
    (0..n)
        .map(|i| {
            let t = i as f64 * h;
            (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt()
        })
        .sum::<f64>()
        * h
}

#[test]
fn planar_examples() {
    let disk = QuadForm::identity(2);
    let v = mixed_area_2d(&disk, &disk).unwrap();
    assert!((v.value - PI).abs() < 1e-10);
    assert_eq!(v.method, MixedVolumeMethod::Exact2d);
    assert_eq!(v.stderr, 0.0);
    let e = mixed_area_2d(&QuadForm::diag(&[4.0, 1.0]).unwrap(), &disk).unwrap();
    assert!((e.value - perimeter(2.0, 1.0) / 2.0).abs() < 1e-9);
    // Segment [-1, 1]×{0} against the disk: half its perimeter, i.e. its length 2.
    let seg = mixed_area_2d(&QuadForm::diag(&[1.0, 0.0]).unwrap(), &disk).unwrap();
    assert!((seg.value - 2.0).abs() < 1e-9);
}

#[test]
fn one_dimensional_route_is_the_width() {
    let r = mixed_volume(&[QuadForm::diag(&[9.0]).unwrap()], &cfg()).unwrap();
    assert_eq!(r.method, MixedVolumeMethod::Exact1d);
    assert!((r.value - 6.0).abs() < 1e-14);
}

#[test]
fn rank_deficient_frame_gives_zero() {
    let f = Frame::new(3, &[vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0]]).unwrap();
    let r = eval_d_m(&bodies(&[QuadForm::identity(3), QuadForm::identity(3)]), &f, &cfg()).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn gauss_route_on_the_unit_ball() {
    let qs = vec![QuadForm::identity(3); 3];
    let r = mixed_volume_gauss(&qs, 50_000, 11, Execution::Parallel).unwrap();
    assert_eq!(r.method, MixedVolumeMethod::GaussEstimator);
    assert!((r.value - 4.0 * PI / 3.0).abs() <= 4.0 * r.stderr);
}

#[test]
fn gauss_matches_oracle_for_m3() {
    let qs = vec![
        QuadForm::diag(&[4.0, 1.0, 0.25]).unwrap(),
        QuadForm::identity(3),
        QuadForm::diag(&[1.0, 2.0, 1.0]).unwrap(),
    ];
    let g = mixed_volume_gauss(&qs, 40_000, 3, Execution::Parallel).unwrap();
    let o = mixed_volume_oracle(&qs, &OracleConfig::default()).unwrap();
    assert_eq!(o.method, MixedVolumeMethod::OraclePolyfit);
    assert!((g.value - o.value).abs() <= 4.0 * g.stderr.hypot(o.stderr));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn symmetric_under_permutation(a in form(3), b in form(3), f in frame(3, 2)) {
        let ab = eval_d_m(&bodies(&[a.clone(), b.clone()]), &f, &cfg()).unwrap().value;
        let ba = eval_d_m(&bodies(&[b, a]), &f, &cfg()).unwrap().value;
        prop_assert!((ab - ba).abs() <= 1e-10 * (1.0 + ab));
    }

    #[test]
    fn multihomogeneous(a in form(2), b in form(2), t in 0.0f64..5.0) {
        let f = Frame::standard(2, 2).unwrap();
        let base = eval_d_m(&bodies(&[a.clone(), b.clone()]), &f, &cfg()).unwrap().value;
        let scaled = eval_d_m(&bodies(&[a.scaled(t * t), b]), &f, &cfg()).unwrap().value;
        prop_assert!((scaled - t * base).abs() <= 1e-9 * (1.0 + t * base));
    }

    #[test]
    fn frame_homogeneous(a in form(3), b in form(3), f in frame(3, 2), t in -4.0f64..4.0) {
        let base = eval_d_m(&bodies(&[a.clone(), b.clone()]), &f, &cfg()).unwrap().value;
        let scaled = eval_d_m(&bodies(&[a, b]), &f.scale_vector(1, t), &cfg()).unwrap().value;
        prop_assert!((scaled - t.abs() * base).abs() <= 1e-9 * (1.0 + t.abs() * base));
    }

    #[test]
    fn monotone_in_each_body(a in form(2), b in form(2), extra in form(2)) {
        let f = Frame::standard(2, 2).unwrap();
        let base = eval_d_m(&bodies(&[a.clone(), b.clone()]), &f, &cfg()).unwrap().value;
        let bigger = eval_d_m(&bodies(&[a.add(&extra).unwrap(), b]), &f, &cfg()).unwrap().value;
        prop_assert!(bigger >= base - 1e-10 * (1.0 + base));
    }

    #[test]
    fn diagonal_identity_exact(g in form(3), f in frame(3, 2)) {
        let r = eval_d_m(&bodies(&[g.clone(), g.clone()]), &f, &cfg()).unwrap();
        let target = unit_ball_volume(2) * gram_volume(&g, &f).unwrap();
        prop_assert!((r.value - target).abs() <= 1e-8 * (1.0 + target));
    }
}
