use crofton::densities::{
    d_m_density, integrate_density, pullback_field, riemannian_volume, Chart, EllipsoidDensity, FieldBase, FieldPoint,
    FinslerField, ParamManifold, QuadratureConfig,
};
use crofton::geomcore::{gram_volume, Frame, QuadForm};
use crofton::mixvol::MixedVolumeConfig;
use crofton::numeric::{factorial, unit_ball_volume};
use crofton::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};
use std::sync::Arc;

fn quad(nodes: usize) -> QuadratureConfig {
    QuadratureConfig {
        nodes: Some(nodes),
        mixvol: MixedVolumeConfig {
            quad_nodes: 512,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// Unit circle through the diffeomorphism s(t) = t + a·sin t of [0, 2π).
fn warped_circle(a: f64) -> ParamManifold {
    let chart = Chart::new(
        vec![0.0],
        vec![TAU],
        vec![true],
        2,
        Arc::new(move |t| {
            let s = t[0] + a * t[0].sin();
            vec![s.cos(), s.sin()]
        }),
        Some(Arc::new(move |t| {
            let s = t[0] + a * t[0].sin();
            let ds = 1.0 + a * t[0].cos();
            DMatrix::from_column_slice(2, 1, &[-s.sin() * ds, s.cos() * ds])
        })),
    )
    .unwrap();
    ParamManifold::from_chart(chart)
}

/// The torus (cos u, sin u, r cos v, r sin v) with u, v warped independently.
fn warped_torus(r: f64, a: f64) -> ParamManifold {
    let chart = Chart::new(
        vec![0.0, 0.0],
        vec![TAU, TAU],
        vec![true, true],
        4,
        Arc::new(move |t| {
            let (u, v) = (t[0] + a * t[0].sin(), t[1] - a * (2.0 * t[1]).sin() / 2.0);
            vec![u.cos(), u.sin(), r * v.cos(), r * v.sin()]
        }),
        None,
    )
    .unwrap();
    ParamManifold::from_chart(chart)
}

fn length(m: &ParamManifold, g: QuadForm, nodes: usize) -> f64 {
    let d = riemannian_volume(FieldBase::Ambient(m.ambient_dim()), g, 1).unwrap();
    integrate_density(m, &d, &quad(nodes)).unwrap().value
}

#[test]
fn unit_circle_has_length_two_pi() {
    let c = ParamManifold::circle(1.0).unwrap();
    assert!((length(&c, QuadForm::identity(2), 64) - TAU).abs() < 1e-12);
}

#[test]
fn degenerate_metric_measures_projected_length() {
    // g = dx²: ∫|d(cos t)| = 4 over the unit circle.
    let c = ParamManifold::circle(1.0).unwrap();
    let v = length(&c, QuadForm::diag(&[1.0, 0.0]).unwrap(), 4096);
    assert!(v.is_finite());
    assert!((v - 4.0).abs() < 1e-5, "{v}");
}

#[test]
fn reparametrized_circle_has_the_same_length() {
    let g = QuadForm::diag(&[2.0, 0.5]).unwrap();
    let plain = length(&ParamManifold::circle(1.0).unwrap(), g.clone(), 2048);
    for a in [0.2, 0.5, -0.4] {
        let warped = length(&warped_circle(a), g.clone(), 2048);
        assert!(((warped - plain) / plain).abs() <= 1e-6, "a = {a}: {warped} vs {plain}");
    }
}

#[test]
fn reparametrized_torus_has_the_same_mixed_volume() {
    let h1 = FinslerField::constant(FieldBase::Ambient(4), QuadForm::diag(&[1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
    let h2 = FinslerField::constant(FieldBase::Ambient(4), QuadForm::diag(&[0.0, 0.0, 1.0, 1.0]).unwrap()).unwrap();
    let d = d_m_density(&[h1, h2]).unwrap();
    let plain = integrate_density(&ParamManifold::torus_embedded(1.0, 0.5).unwrap(), &d, &quad(128)).unwrap().value;
    let warped = integrate_density(&warped_torus(0.5, 0.3), &d, &quad(128)).unwrap().value;
    // D₂ of the two block ellipsoids on ∂u ∧ ∂v is 2·|∂u|·|∂v|: total 2·(2π)(π).
    assert!((plain - 2.0 * TAU * PI).abs() <= 1e-8 * plain);
    assert!(((warped - plain) / plain).abs() <= 1e-6, "{warped} vs {plain}");
}

#[test]
fn pullback_is_natural() {
    let m = ParamManifold::torus_embedded(1.0, 0.5).unwrap();
    let g1 = FinslerField::ambient(4, |x| QuadForm::diag(&[1.0 + x[0] * x[0], 1.0, 0.5, 0.0]).unwrap());
    let g2 = FinslerField::constant(FieldBase::Ambient(4), QuadForm::diag(&[0.0, 0.3, 1.0, 2.0]).unwrap()).unwrap();
    let ambient = integrate_density(&m, &d_m_density(&[g1.clone(), g2.clone()]).unwrap(), &quad(64)).unwrap();
    let pulled = d_m_density(&[pullback_field(&g1, &m).unwrap(), pullback_field(&g2, &m).unwrap()]).unwrap();
    let params = integrate_density(&m, &pulled, &quad(64)).unwrap();
    assert!((ambient.value - params.value).abs() <= 1e-8 * ambient.value);
}

#[test]
fn pulled_back_block_metric_vanishes_on_the_other_circle() {
    let m = ParamManifold::torus_embedded(1.0, 0.5).unwrap();
    let h1 = FinslerField::constant(FieldBase::Ambient(4), QuadForm::diag(&[1.0, 1.0, 0.0, 0.0]).unwrap()).unwrap();
    let p = pullback_field(&h1, &m).unwrap();
    let q = p.form_at(&FieldPoint::on_manifold(&m, 0, &[0.4, 1.3]));
    assert!((q.quad(&[1.0, 0.0]) - 1.0).abs() < 1e-12);
    assert!(q.quad(&[0.0, 1.0]).abs() < 1e-14);
}

#[test]
fn rank_deficient_chart_is_rejected() {
    let chart = Chart::new(
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![false, false],
        2,
        Arc::new(|t| vec![t[0] + t[1], t[0] + t[1]]),
        None,
    )
    .unwrap();
    let m = ParamManifold::from_chart(chart);
    let d = riemannian_volume(FieldBase::Ambient(2), QuadForm::identity(2), 2).unwrap();
    assert!(matches!(
        integrate_density(&m, &d, &quad(8)),
        Err(Error::RankDeficientDifferential { .. })
    ));
}

#[test]
fn continuity_check_flags_fast_fields() {
    let c = ParamManifold::circle(1.0).unwrap();
    let smooth = FinslerField::ambient(2, |x| QuadForm::diag(&[1.0 + x[0] * x[0], 1.0]).unwrap());
    assert!(smooth.continuity_check(&c, 256, 10.0).is_ok());
    let jumpy = FinslerField::ambient(2, |x| QuadForm::diag(&[1.0 + (1e4 * x[0]).sin().abs(), 1.0]).unwrap());
    assert!(jumpy.continuity_check(&c, 256, 10.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ring_product_of_vol1_is_gram_volume(
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        vectors in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 2),
    ) {
        let a = DMatrix::from_row_slice(4, 4, &entries);
        let g = QuadForm::new(a.transpose() * a).unwrap();
        let f = Frame::new(4, &vectors).unwrap();
        let vol1 = EllipsoidDensity::vol1(FinslerField::constant(FieldBase::Ambient(4), g.clone()).unwrap()).unwrap();
        let ring = EllipsoidDensity::product_all(&[vol1.clone(), vol1]).unwrap();
        let at = FieldPoint::ambient(&[0.0; 4]);
        let value = ring.eval(&at, &f, &MixedVolumeConfig::default()).unwrap().value * 4.0 / (factorial(2) * unit_ball_volume(2));
        let target = gram_volume(&g, &f).unwrap();
        prop_assert!((value - target).abs() <= 1e-8 * (1.0 + target));
    }

    #[test]
    fn densities_are_nonnegative_and_frame_homogeneous(
        entries in prop::collection::vec(-1.0f64..1.0, 9),
        vectors in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2),
        t in -3.0f64..3.0,
    ) {
        let a = DMatrix::from_row_slice(3, 3, &entries);
        let g1 = FinslerField::constant(FieldBase::Ambient(3), QuadForm::new(a.transpose() * &a).unwrap()).unwrap();
        let g2 = FinslerField::euclidean(3);
        let d = EllipsoidDensity::vol1(g1).unwrap().product(&EllipsoidDensity::vol1(g2).unwrap()).unwrap();
        let f = Frame::new(3, &vectors).unwrap();
        let at = FieldPoint::ambient(&[0.0; 3]);
        let cfg = MixedVolumeConfig::default();
        let base = d.eval(&at, &f, &cfg).unwrap().value;
        let scaled = d.eval(&at, &f.scale_vector(0, t), &cfg).unwrap().value;
        prop_assert!(base >= 0.0);
        prop_assert!((scaled - t.abs() * base).abs() <= 1e-9 * (1.0 + base));
    }
}
