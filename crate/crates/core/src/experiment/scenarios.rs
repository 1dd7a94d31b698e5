//! Built-in scenarios and their documented defaults.

use super::{ExperimentConfig, Grids, Outcome, ParamValue, RunOptions};
use crate::croftonsim::{estimate_crofton, CountConfig, CroftonData, EstimateConfig, EstimateReport};
use crate::densities::{ParamManifold, Polynomial, QuadratureConfig};
use crate::error::{Error, Result};
use crate::geomcore::QuadForm;
use crate::mixvol::{mixed_volume, mixed_volume_oracle, MixedVolumeConfig, OracleConfig};
use crate::zeros::{build_eval_map, empirical_zeros, FunctionSpace, ZerosConfig};
use std::f64::consts::PI;

type RunFn = fn(&ExperimentConfig, &RunOptions) -> Result<Outcome>;

/// A named scenario: parameters with defaults, sample count, grids and runner.
pub struct ScenarioDef {
    pub name: &'static str,
    pub description: &'static str,
    pub params: fn() -> Vec<(&'static str, ParamValue)>,
    pub n_samples: usize,
    pub grids: Grids,
    pub run: RunFn,
}

const CURVE: Grids = Grids {
    quad_nodes: 256,
    curve_grid: 4096,
    surface_grid: 512,
    mixvol_nodes: 4096,
};

const SURFACE: Grids = Grids {
    quad_nodes: 64,
    curve_grid: 4096,
    surface_grid: 64,
    mixvol_nodes: 512,
};

fn num(x: f64) -> ParamValue {
    ParamValue::Number(x)
}

fn table(rows: &[&[f64]]) -> ParamValue {
    ParamValue::Table(rows.iter().map(|r| r.to_vec()).collect())
}

static SCENARIOS: [ScenarioDef; 10] = [
    ScenarioDef {
        name: "crofton_euclid_circle",
        description: "circle of radius r in the plane against random lines; expects 2πr",
        params: || vec![("r", num(1.0)), ("radius_scale", num(1.0))],
        n_samples: 100_000,
        grids: CURVE,
        run: euclid_circle,
    },
    ScenarioDef {
        name: "crofton_sphere_great_circle",
        description: "great circle on S² against random great circles; always 2",
        params: Vec::new,
        n_samples: 100_000,
        grids: CURVE,
        run: great_circle,
    },
    ScenarioDef {
        name: "crofton_sphere_latitude",
        description: "latitude circle at polar angle theta0 on S²; expects 2 sin theta0",
        params: || vec![("theta0", num(PI / 6.0))],
        n_samples: 100_000,
        grids: CURVE,
        run: latitude,
    },
    ScenarioDef {
        name: "crofton_torus",
        description: "torus C₁×C₂ ⊂ ℝ²×ℝ² against products of random lines; expects (2πr₁)(2πr₂)",
        params: || vec![("r1", num(1.0)), ("r2", num(0.5)), ("radius_scale", num(1.0))],
        n_samples: 100_000,
        grids: SURFACE,
        run: torus,
    },
    ScenarioDef {
        name: "crofton_sphere_product",
        description: "latitude circles C₁×C₂ ⊂ S²×S² against products of great circles",
        params: || vec![("theta1", num(PI / 3.0)), ("theta2", num(PI / 4.0))],
        n_samples: 100_000,
        grids: SURFACE,
        run: sphere_product,
    },
    ScenarioDef {
        name: "crofton_graph_surface",
        description: "graph (s, p, t, q) over a box against products of random lines; p, q given as rows [i, j, coef]",
        params: || {
            vec![
                ("p", table(&[&[1.0, 0.0, 0.5], &[0.0, 1.0, -0.3], &[2.0, 0.0, 0.2]])),
                ("q", table(&[&[1.0, 0.0, 0.2], &[0.0, 1.0, 0.7], &[1.0, 1.0, 0.1]])),
                ("s_min", num(-1.0)),
                ("s_max", num(1.0)),
                ("t_min", num(-1.0)),
                ("t_max", num(1.0)),
                ("radius_scale", num(1.05)),
            ]
        },
        n_samples: 100_000,
        grids: SURFACE,
        run: graph_surface,
    },
    ScenarioDef {
        name: "zeros_fourier",
        description: "a cos kt + b sin kt = c on S¹; expects 2πk",
        params: || vec![("k", num(1.0)), ("radius_scale", num(1.0))],
        n_samples: 100_000,
        grids: CURVE,
        run: zeros_fourier,
    },
    ScenarioDef {
        name: "zeros_torus",
        description: "separable Fourier system on S¹×S¹; expects (2πk₁)(2πk₂)",
        params: || vec![("k1", num(1.0)), ("k2", num(2.0)), ("radius_scale", num(1.0))],
        n_samples: 100_000,
        grids: SURFACE,
        run: zeros_torus,
    },
    ScenarioDef {
        name: "zeros_sphere_linear",
        description: "two random affine-linear equations restricted to S²",
        params: || vec![("radius_scale", num(1.0))],
        n_samples: 100_000,
        grids: SURFACE,
        run: zeros_sphere_linear,
    },
    ScenarioDef {
        name: "mixed_volume_check",
        description: "mixed volume of m ≤ 3 ellipsoids: polynomial-fit oracle against the exact or Gaussian route",
        params: || {
            vec![
                ("m", num(2.0)),
                ("q1", ParamValue::Table(Vec::new())),
                ("q2", ParamValue::Table(Vec::new())),
                ("q3", ParamValue::Table(Vec::new())),
            ]
        },
        n_samples: 4000,
        grids: CURVE,
        run: mixed_volume_check,
    },
];

/// All built-in scenarios.
pub fn scenarios() -> &'static [ScenarioDef] {
    &SCENARIOS
}

pub fn scenario(name: &str) -> Result<&'static ScenarioDef> {
    SCENARIOS.iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<&str> = SCENARIOS.iter().map(|s| s.name).collect();
        Error::InvalidArgument(format!(
            "unknown scenario `{name}`; valid scenarios: {}",
            names.join(", ")
        ))
    })
}

fn estimate_config(cfg: &ExperimentConfig, opts: &RunOptions) -> EstimateConfig {
    let g = cfg.grids;
    EstimateConfig {
        count: CountConfig {
            curve_grid: g.curve_grid,
            surface_grid: g.surface_grid,
            ..Default::default()
        },
        exec: opts.exec,
        prediction: Some(QuadratureConfig {
            nodes: Some(g.quad_nodes),
            mixvol: MixedVolumeConfig {
                quad_nodes: g.mixvol_nodes,
                exec: opts.exec,
                ..Default::default()
            },
            exec: opts.exec,
        }),
        ..Default::default()
    }
}

fn outcome(r: EstimateReport) -> Outcome {
    Outcome {
        estimate: r.estimate,
        stderr: r.stderr,
        prediction: r.prediction,
        prediction_error: r.prediction_error.unwrap_or(0.0),
        degenerate_events: r.degenerate_events,
    }
}

fn crofton(m: &ParamManifold, data: &CroftonData, cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let e = estimate_config(cfg, opts);
    Ok(outcome(estimate_crofton(m, data, cfg.n_samples, cfg.seed, &e)?))
}

fn euclid_circle(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let r = cfg.number("r")?;
    let m = ParamManifold::circle(r)?;
    crofton(&m, &CroftonData::euclid(2, r * cfg.number("radius_scale")?)?, cfg, opts)
}

fn great_circle(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    crofton(&ParamManifold::great_circle()?, &CroftonData::sphere(3)?, cfg, opts)
}

fn latitude(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let m = ParamManifold::latitude_circle(cfg.number("theta0")?)?;
    crofton(&m, &CroftonData::sphere(3)?, cfg, opts)
}

fn torus(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let (r1, r2, s) = (cfg.number("r1")?, cfg.number("r2")?, cfg.number("radius_scale")?);
    let m = ParamManifold::torus_embedded(r1, r2)?;
    let data = CroftonData::product(vec![CroftonData::euclid(2, r1 * s)?, CroftonData::euclid(2, r2 * s)?])?;
    crofton(&m, &data, cfg, opts)
}

fn sphere_product(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let m = ParamManifold::product_of_circles_on_spheres(cfg.number("theta1")?, cfg.number("theta2")?)?;
    let data = CroftonData::product(vec![CroftonData::sphere(3)?, CroftonData::sphere(3)?])?;
    crofton(&m, &data, cfg, opts)
}

fn polynomial(rows: &[Vec<f64>]) -> Result<Polynomial> {
    let terms = rows
        .iter()
        .map(|r| match r.as_slice() {
            [i, j, c] if *i >= 0.0 && *j >= 0.0 && i.fract() == 0.0 && j.fract() == 0.0 => {
                Ok((vec![*i as u32, *j as u32], *c))
            }
            _ => Err(Error::InvalidArgument(format!(
                "polynomial rows are [i, j, coef] with integer exponents, got {r:?}"
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Polynomial::new(2, terms)
}

/// Largest block norm over a vertex grid that includes the box corners.
fn vertex_bounding_radius(m: &ParamManifold, block: std::ops::Range<usize>, n: usize) -> f64 {
    let mut r: f64 = 0.0;
    for c in m.charts() {
        for i in 0..=n {
            for j in 0..=n {
                let t = [
                    c.lower()[0] + (c.upper()[0] - c.lower()[0]) * i as f64 / n as f64,
                    c.lower()[1] + (c.upper()[1] - c.lower()[1]) * j as f64 / n as f64,
                ];
                let x = c.eval(&t);
                r = r.max(x[block.clone()].iter().map(|v| v * v).sum::<f64>().sqrt());
            }
        }
    }
    r
}

fn graph_surface(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let p = polynomial(cfg.table("p")?)?;
    let q = polynomial(cfg.table("q")?)?;
    let lower = [cfg.number("s_min")?, cfg.number("t_min")?];
    let upper = [cfg.number("s_max")?, cfg.number("t_max")?];
    let m = ParamManifold::graph_surface(p, q, lower, upper)?;
    let s = cfg.number("radius_scale")?;
    let r1 = vertex_bounding_radius(&m, 0..2, 256) * s;
    let r2 = vertex_bounding_radius(&m, 2..4, 256) * s;
    let data = CroftonData::product(vec![CroftonData::euclid(2, r1)?, CroftonData::euclid(2, r2)?])?;
    crofton(&m, &data, cfg, opts)
}

fn zeros_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ZerosConfig> {
    Ok(ZerosConfig {
        estimate: estimate_config(cfg, opts),
        radius_scale: cfg.number("radius_scale")?,
    })
}

fn harmonic(cfg: &ExperimentConfig, key: &str) -> Result<u32> {
    let k = cfg.number(key)?;
    if k >= 1.0 && k.fract() == 0.0 && k <= 1e6 {
        Ok(k as u32)
    } else {
        Err(Error::InvalidArgument(format!("`{key}` must be a positive integer, got {k}")))
    }
}

fn zeros_fourier(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let x = ParamManifold::circle(1.0)?.with_quad_nodes(cfg.grids.quad_nodes);
    let map = build_eval_map(&FunctionSpace::fourier(harmonic(cfg, "k")?, 0, 1)?, &x)?;
    let r = empirical_zeros(&[map], &x, cfg.n_samples, cfg.seed, &zeros_config(cfg, opts)?)?;
    Ok(outcome(r))
}

fn zeros_torus(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let x = ParamManifold::torus_embedded(1.0, 1.0)?.with_quad_nodes(cfg.grids.quad_nodes);
    let m1 = build_eval_map(&FunctionSpace::fourier(harmonic(cfg, "k1")?, 0, 2)?, &x)?;
    let m2 = build_eval_map(&FunctionSpace::fourier(harmonic(cfg, "k2")?, 1, 2)?, &x)?;
    let r = empirical_zeros(&[m1, m2], &x, cfg.n_samples, cfg.seed, &zeros_config(cfg, opts)?)?;
    Ok(outcome(r))
}

fn zeros_sphere_linear(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let x = ParamManifold::unit_sphere()?.with_quad_nodes(cfg.grids.quad_nodes);
    let m = build_eval_map(&FunctionSpace::linear_coords(3)?, &x)?;
    let r = empirical_zeros(&[m.clone(), m], &x, cfg.n_samples, cfg.seed, &zeros_config(cfg, opts)?)?;
    Ok(outcome(r))
}

fn default_forms(m: usize) -> Vec<Vec<Vec<f64>>> {
    match m {
        1 => vec![vec![vec![4.0]]],
        2 => vec![
            vec![vec![4.0, 0.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        ],
        _ => vec![
            vec![vec![4.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.3, 0.0], vec![0.3, 2.25, 0.0], vec![0.0, 0.0, 0.5]],
        ],
    }
}

fn mixed_volume_check(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Outcome> {
    let m = cfg.number("m")?;
    if !(m == 1.0 || m == 2.0 || m == 3.0) {
        return Err(Error::InvalidArgument(format!("`m` must be 1, 2 or 3, got {m}")));
    }
    let m = m as usize;
    let defaults = default_forms(m);
    let qs = ["q1", "q2", "q3"][..m]
        .iter()
        .zip(defaults)
        .map(|(k, d)| {
            let t = cfg.table(k)?;
            QuadForm::from_rows(if t.is_empty() { &d } else { t })
        })
        .collect::<Result<Vec<_>>>()?;
    let oracle = mixed_volume_oracle(
        &qs,
        &OracleConfig {
            n_membership_samples: cfg.n_samples,
            seed: cfg.seed,
            exec: opts.exec,
            ..Default::default()
        },
    )?;
    let route = mixed_volume(
        &qs,
        &MixedVolumeConfig {
            quad_nodes: cfg.grids.mixvol_nodes,
            seed: cfg.seed ^ 0x9e37_79b9_7f4a_7c15,
            exec: opts.exec,
            ..Default::default()
        },
    )?;
    Ok(Outcome {
        estimate: oracle.value,
        stderr: oracle.stderr.hypot(route.stderr),
        prediction: Some(route.value),
        prediction_error: 0.0,
        degenerate_events: 0,
    })
}
