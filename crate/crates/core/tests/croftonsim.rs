use crofton::croftonsim::{
    estimate_crofton, euclid_mass, sample_euclid_hyperplane, sample_great_subsphere, validate, CountConfig, CountOutcome,
    Counter, CroftonData, Equation, EstimateConfig, EstimateReport,
};
use crofton::densities::ParamManifold;
use crofton::numeric::{substream, SampleSummary};
use crofton::Error;
use nalgebra::DMatrix;
use std::f64::consts::{PI, TAU};

fn cfg(surface_grid: usize) -> EstimateConfig {
    EstimateConfig {
        count: CountConfig {
            surface_grid,
            ..Default::default()
        },
        prediction: None,
        ..Default::default()
    }
}

fn combined_close(a: &EstimateReport, b: &EstimateReport, k: f64) -> bool {
    (a.estimate - b.estimate).abs() <= k * a.stderr.hypot(b.stderr) + 1e-12 * a.estimate.abs()
}

#[test]
fn euclidean_masses_match_closed_forms() {
    // κ₂ = 2/π and κ₃ = 1/2.
    assert!((euclid_mass(2, 1.0) - PI).abs() < 1e-14);
    assert!((euclid_mass(3, 1.0) - 4.0).abs() < 1e-14);
    assert!((euclid_mass(2, 2.5) - 2.5 * PI).abs() < 1e-13);
}

#[test]
fn unit_segment_is_hit_with_measure_one() {
    let (d, radius, n) = (2, 1.0, 200_000);
    let mut rng = substream(3, 0);
    // Segment from (-0.3, 0.1) to (0.7, 0.1), inside the unit ball.
    let hits: Vec<f64> = (0..n)
        .map(|_| {
            let (u, c) = sample_euclid_hyperplane(d, radius, &mut rng);
            let s = |x: f64| u[0] * x + u[1] * 0.1 - c;
            let hit = (s(-0.3) > 0.0) != (s(0.7) > 0.0);
            euclid_mass(d, radius) * f64::from(u8::from(hit))
        })
        .collect();
    let s = SampleSummary::from_values(&hits);
    assert!((s.mean - 1.0).abs() <= 4.0 * s.stderr(), "{} ± {}", s.mean, s.stderr());
}

#[test]
fn great_subsphere_normals_are_uniform() {
    let mut rng = substream(4, 0);
    let v: Vec<f64> = (0..100_000).map(|_| sample_great_subsphere(3, &mut rng)[2].abs()).collect();
    let s = SampleSummary::from_values(&v);
    assert!((s.mean - 0.5).abs() <= 4.0 * s.stderr());
}

#[test]
fn lines_missing_the_circle_count_zero() {
    let counter = Counter::new(ParamManifold::circle(1.0).unwrap(), CountConfig::default()).unwrap();
    let far = Equation {
        block: 0..2,
        normal: vec![0.6, 0.8],
        offset: 1.2,
    };
    assert_eq!(counter.count(&[far]), CountOutcome::Count(0));
}

#[test]
fn estimate_is_invariant_under_enlarging_the_ball() {
    let m = ParamManifold::circle(1.0).unwrap();
    let a = estimate_crofton(&m, &CroftonData::euclid(2, 1.5).unwrap(), 40_000, 1, &cfg(64)).unwrap();
    let b = estimate_crofton(&m, &CroftonData::euclid(2, 3.0).unwrap(), 40_000, 2, &cfg(64)).unwrap();
    assert!(combined_close(&a, &b, 3.0), "{} ± {} vs {} ± {}", a.estimate, a.stderr, b.estimate, b.stderr);
    assert!((a.estimate - TAU).abs() <= 3.0 * a.stderr);
    assert!((b.estimate - TAU).abs() <= 3.0 * b.stderr);
}

#[test]
fn rigid_motions_leave_the_estimate_unchanged() {
    let m = ParamManifold::circle(0.8).unwrap();
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let moved = m.transformed(&rot, &[0.4, -0.3]).unwrap();
    let data = CroftonData::euclid(2, 2.0).unwrap();
    let a = estimate_crofton(&m, &data, 40_000, 5, &cfg(64)).unwrap();
    let b = estimate_crofton(&moved, &data, 40_000, 6, &cfg(64)).unwrap();
    assert!(combined_close(&a, &b, 3.0), "{} ± {} vs {} ± {}", a.estimate, a.stderr, b.estimate, b.stderr);
}

#[test]
fn joint_count_is_the_product_of_factor_counts() {
    let (r1, r2, scale) = (1.0, 0.5, 1.4);
    let torus = ParamManifold::torus_embedded(r1, r2).unwrap();
    let data = CroftonData::product(vec![
        CroftonData::euclid(2, r1 * scale).unwrap(),
        CroftonData::euclid(2, r2 * scale).unwrap(),
    ])
    .unwrap();
    let joint = estimate_crofton(&torus, &data, 8_000, 7, &cfg(64)).unwrap();
    let f1 = estimate_crofton(&ParamManifold::circle(r1).unwrap(), &CroftonData::euclid(2, r1 * scale).unwrap(), 40_000, 8, &cfg(64)).unwrap();
    let f2 = estimate_crofton(&ParamManifold::circle(r2).unwrap(), &CroftonData::euclid(2, r2 * scale).unwrap(), 40_000, 9, &cfg(64)).unwrap();
    let product = f1.estimate * f2.estimate;
    let product_se = (f2.estimate * f1.stderr).hypot(f1.estimate * f2.stderr);
    assert!(
        (joint.estimate - product).abs() <= 3.0 * joint.stderr.hypot(product_se),
        "{} ± {} vs {product} ± {product_se}",
        joint.estimate,
        joint.stderr
    );
}

#[test]
fn great_circle_meets_every_great_circle_twice() {
    let r = estimate_crofton(&ParamManifold::great_circle().unwrap(), &CroftonData::sphere(3).unwrap(), 5_000, 1, &cfg(64)).unwrap();
    assert_eq!((r.min_count, r.max_count, r.estimate, r.stderr), (2, 2, 2.0, 0.0));
    assert!(!r.flagged);
}

#[test]
fn prediction_is_attached_when_requested() {
    let m = ParamManifold::latitude_circle(PI / 3.0).unwrap();
    let mut c = cfg(64);
    c.prediction = Some(Default::default());
    let r = estimate_crofton(&m, &CroftonData::sphere(3).unwrap(), 20_000, 3, &c).unwrap();
    let p = r.prediction.unwrap();
    assert!((p - 2.0 * (PI / 3.0).sin()).abs() < 1e-8);
    assert!(r.agrees(4.0));
}

#[test]
fn invalid_inputs_are_rejected() {
    let circle = ParamManifold::circle(2.0).unwrap();
    assert!(matches!(validate(&circle, &CroftonData::euclid(2, 1.0).unwrap()), Err(Error::InvalidArgument(_))));
    assert!(matches!(validate(&circle, &CroftonData::euclid(3, 3.0).unwrap()), Err(Error::DimensionMismatch { .. })));
    let off_sphere = ParamManifold::circle(0.5).unwrap().transformed(&DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]), &[0.0; 3]).unwrap();
    assert!(validate(&off_sphere, &CroftonData::sphere(3).unwrap()).is_err());
    assert!(CroftonData::euclid(2, -1.0).is_err());
}
