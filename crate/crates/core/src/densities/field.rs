use super::manifold::ParamManifold;
use crate::error::{check_dim, Error, Result};
use crate::geomcore::{Ellipsoid, QuadForm};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Where a field's cotangent spaces live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldBase {
    /// The ambient space ℝ^d; frames are pushed forward by the chart differential.
    Ambient(usize),
    /// Chart parameters of a k-manifold; frames are the coordinate vectors.
    Params(usize),
}

impl FieldBase {
    pub fn dim(self) -> usize {
        match self {
            FieldBase::Ambient(d) | FieldBase::Params(d) => d,
        }
    }
}

/// A point of a parametrized manifold with everything a field may need.
#[derive(Clone, Debug)]
pub struct FieldPoint {
    pub chart: usize,
    pub param: Vec<f64>,
    pub point: Vec<f64>,
    pub differential: DMatrix<f64>,
}

impl FieldPoint {
    pub fn on_manifold(m: &ParamManifold, chart: usize, param: &[f64]) -> Self {
        let c = &m.charts()[chart];
        Self {
            chart,
            param: param.to_vec(),
            point: c.eval(param),
            differential: c.differential(param),
        }
    }

    /// A bare ambient point with no manifold attached.
    pub fn ambient(point: &[f64]) -> Self {
        Self {
            chart: 0,
            param: Vec::new(),
            point: point.to_vec(),
            differential: DMatrix::zeros(point.len(), 0),
        }
    }
}

type FormFn = Arc<dyn Fn(&FieldPoint) -> QuadForm + Send + Sync>;

/// A continuous field of ellipsoids `x ↦ 𝒯_g(x)` stored through the
/// quadratic forms `g_x`.
#[derive(Clone)]
pub struct FinslerField {
    base: FieldBase,
    form: FormFn,
}

impl std::fmt::Debug for FinslerField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FinslerField").field("base", &self.base).finish()
    }
}

impl FinslerField {
    pub fn new(base: FieldBase, form: impl Fn(&FieldPoint) -> QuadForm + Send + Sync + 'static) -> Self {
        Self {
            base,
            form: Arc::new(form),
        }
    }

    /// The same form at every point.
    pub fn constant(base: FieldBase, q: QuadForm) -> Result<Self> {
        check_dim(base.dim(), q.dim(), "constant field form")?;
        Ok(Self::new(base, move |_| q.clone()))
    }

    /// Euclidean metric of ℝ^d.
    pub fn euclidean(d: usize) -> Self {
        Self::new(FieldBase::Ambient(d), move |_| QuadForm::identity(d))
    }

    /// Ambient field given as a function of the point.
    pub fn ambient(d: usize, f: impl Fn(&[f64]) -> QuadForm + Send + Sync + 'static) -> Self {
        Self::new(FieldBase::Ambient(d), move |p| f(&p.point))
    }

    pub fn base(&self) -> FieldBase {
        self.base
    }

    pub fn form_at(&self, p: &FieldPoint) -> QuadForm {
        (self.form)(p)
    }

    pub fn ellipsoid_at(&self, p: &FieldPoint) -> Ellipsoid {
        Ellipsoid::new(self.form_at(p))
    }

    /// Largest entrywise difference quotient of the form between
    /// neighbouring nodes of an `n`-per-axis grid on `m`; errors when it
    /// exceeds `bound`.
    pub fn continuity_check(&self, m: &ParamManifold, n: usize, bound: f64) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (ci, chart) in m.charts().iter().enumerate() {
            let k = chart.param_dim();
            let nodes = m
                .quadrature_nodes(n)
                .into_iter()
                .filter(|(c, _, _)| *c == ci)
                .collect::<Vec<_>>();
            for (_, t, _) in &nodes {
                let here = self.form_at(&FieldPoint::on_manifold(m, ci, t));
                for axis in 0..k {
                    let h = (chart.upper()[axis] - chart.lower()[axis]) / n as f64;
                    let mut s = t.clone();
                    s[axis] += h;
                    if s[axis] > chart.upper()[axis] {
                        continue;
                    }
                    let there = self.form_at(&FieldPoint::on_manifold(m, ci, &s));
                    let q = (here.matrix() - there.matrix()).amax() / h;
                    worst = worst.max(q);
                }
            }
        }
        if worst > bound {
            return Err(Error::InvalidArgument(format!(
                "field varies too fast: difference quotient {worst:e} > {bound:e}"
            )));
        }
        Ok(worst)
    }
}

/// Inverse image of an ambient field under the chart immersion:
/// `(f*g)_t(ξ, η) = g_{x(t)}(Dx ξ, Dx η)`.
pub fn pullback_field(field: &FinslerField, m: &ParamManifold) -> Result<FinslerField> {
    match field.base() {
        FieldBase::Ambient(d) => check_dim(m.ambient_dim(), d, "pullback field dimension")?,
        FieldBase::Params(_) => {
            return Err(Error::InvalidArgument(
                "only ambient fields can be pulled back".into(),
            ))
        }
    }
    let inner = field.clone();
    Ok(FinslerField::new(FieldBase::Params(m.param_dim()), move |p| {
        inner
            .form_at(p)
            .congruence(&p.differential)
            .expect("pullback of a PSD form is PSD")
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pullback_of_euclidean_on_circle() {
        let r = 1.7;
        let c = ParamManifold::circle(r).unwrap();
        let h = pullback_field(&FinslerField::euclidean(2), &c).unwrap();
        let q = h.form_at(&FieldPoint::on_manifold(&c, 0, &[0.4]));
        assert!((q.matrix()[(0, 0)] - r * r).abs() < 1e-14);
    }

    #[test]
    fn pullback_of_zero_field() {
        let c = ParamManifold::circle(1.0).unwrap();
        let zero = FinslerField::constant(FieldBase::Ambient(2), QuadForm::zeros(2)).unwrap();
        let h = pullback_field(&zero, &c).unwrap();
        assert_eq!(h.form_at(&FieldPoint::on_manifold(&c, 0, &[1.0])).matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn lifted_factor_metric_kills_other_factor() {
        let torus = ParamManifold::torus_embedded(1.0, 0.5).unwrap();
        let h1 = FinslerField::constant(FieldBase::Ambient(4), QuadForm::identity(2).lift(4, 0).unwrap())
            .unwrap();
        let pb = pullback_field(&h1, &torus).unwrap();
        let q = pb.form_at(&FieldPoint::on_manifold(&torus, 0, &[0.2, 2.2]));
        assert!((q.matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        assert_eq!(q.quad(&[0.0, 1.0]), 0.0);
        assert_eq!(q.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn continuity_of_smooth_field() {
        let c = ParamManifold::circle(1.0).unwrap();
        let h = pullback_field(&FinslerField::ambient(2, |x| {
            QuadForm::diag(&[1.0 + x[0] * x[0], 2.0]).unwrap()
        }), &c)
        .unwrap();
        let q = h.continuity_check(&c, 128, 10.0).unwrap();
        assert!(q > 0.0 && q < 10.0);
        assert!(h.continuity_check(&c, 128, 1e-6).is_err());
    }
}
