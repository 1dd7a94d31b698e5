use super::field::{FieldBase, FieldPoint, FinslerField};
use crate::error::{check_dim, Error, Result};
use crate::geomcore::{Frame, QuadForm};
use crate::mixvol::{eval_d_m, MixedVolumeConfig, MixedVolumeResult};
use crate::numeric::{binomial, unit_ball_volume};

/// `scalar · (1/m!) · D₁(ℰ₁) ⋯ D₁(ℰ_m)` in the ring of normal densities.
///
/// Products of 1-densities of centrally symmetric ellipsoid fields satisfy
/// `D₁(ℰ₁)⋯D₁(ℰ_m) = m! D_m(ℰ₁, …, ℰ_m)`, so the value on a frame is
/// `scalar · d_m(ℰ₁(x), …, ℰ_m(x))(frame)`. Keeping the factors (rather
/// than values) makes ring products exact.
#[derive(Clone, Debug)]
pub struct EllipsoidDensity {
    factors: Vec<FinslerField>,
    scalar: f64,
}

impl EllipsoidDensity {
    /// `scalar · D_m(ℰ₁, …, ℰ_m)`.
    pub fn new(factors: Vec<FinslerField>, scalar: f64) -> Result<Self> {
        let first = factors
            .first()
            .ok_or_else(|| Error::InvalidArgument("density without factors".into()))?;
        if !(scalar >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative scalar {scalar}")));
        }
        for f in &factors {
            if f.base() != first.base() {
                return Err(Error::InvalidArgument(
                    "all factors of a density must share the same base".into(),
                ));
            }
        }
        if factors.len() > first.base().dim() {
            return Err(Error::InvalidArgument(format!(
                "degree {} exceeds dimension {}",
                factors.len(),
                first.base().dim()
            )));
        }
        Ok(Self { factors, scalar })
    }

    /// `vol_{1,g} = ½ D₁(𝒯_g)`: the half-width of 𝒯_g, i.e. sqrt(g(ξ, ξ)).
    pub fn vol1(field: FinslerField) -> Result<Self> {
        Self::new(vec![field], 0.5)
    }

    pub fn degree(&self) -> usize {
        self.factors.len()
    }

    pub fn scalar(&self) -> f64 {
        self.scalar
    }

    pub fn factors(&self) -> &[FinslerField] {
        &self.factors
    }

    pub fn base(&self) -> FieldBase {
        self.factors[0].base()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.factors.clone(), self.scalar * s)
    }

    /// Ring product: `(s/m!)ΠD₁ · (s'/m'!)ΠD₁ = s s' C(m+m', m) · (1/(m+m')!)ΠD₁`.
    pub fn product(&self, other: &EllipsoidDensity) -> Result<Self> {
        let (m, n) = (self.degree(), other.degree());
        let factors = self.factors.iter().chain(&other.factors).cloned().collect();
        Self::new(factors, self.scalar * other.scalar * binomial(m + n, m))
    }

    /// Product of several densities, left to right.
    pub fn product_all(densities: &[EllipsoidDensity]) -> Result<Self> {
        let (first, rest) = densities
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("empty product".into()))?;
        rest.iter().try_fold(first.clone(), |acc, d| acc.product(d))
    }

    /// Value on a frame of `degree` vectors at a point.
    pub fn eval(
        &self,
        at: &FieldPoint,
        f: &Frame,
        cfg: &MixedVolumeConfig,
    ) -> Result<MixedVolumeResult> {
        ring_product_eval(self, at, f, cfg)
    }
}

/// `vol_{1,g}(ξ) = sqrt(g_x(ξ, ξ))`.
pub fn eval_vol1(g: &FinslerField, at: &FieldPoint, xi: &[f64]) -> Result<f64> {
    let q = g.form_at(at);
    check_dim(q.dim(), xi.len(), "eval_vol1 vector")?;
    Ok(q.quad(xi).sqrt())
}

/// Evaluates `d.scalar · d_m(ℰ₁(x), …, ℰ_m(x))(f)`.
pub fn ring_product_eval(
    d: &EllipsoidDensity,
    at: &FieldPoint,
    f: &Frame,
    cfg: &MixedVolumeConfig,
) -> Result<MixedVolumeResult> {
    check_dim(d.degree(), f.len(), "density degree vs frame size")?;
    let bodies: Vec<_> = d.factors.iter().map(|e| e.ellipsoid_at(at)).collect();
    Ok(eval_d_m(&bodies, f, cfg)?.scaled(d.scalar))
}

/// `vol_{g₁,…,g_n} = (2ⁿ / n! vₙ) vol_{1,g₁} ⋯ vol_{1,g_n} = (1/vₙ) D_n(𝒯_{g₁}, …, 𝒯_{g_n})`.
pub fn mixed_riemannian_density(gs: &[FinslerField]) -> Result<EllipsoidDensity> {
    let n = gs.len();
    EllipsoidDensity::new(gs.to_vec(), 1.0 / unit_ball_volume(n))
}

/// `D_m(ℰ₁, …, ℰ_m)` itself.
pub fn d_m_density(fields: &[FinslerField]) -> Result<EllipsoidDensity> {
    EllipsoidDensity::new(fields.to_vec(), 1.0)
}

/// `degree`-dimensional Riemannian volume density of a constant metric (the
/// diagonal mixed Riemannian density).
pub fn riemannian_volume(base: FieldBase, g: QuadForm, degree: usize) -> Result<EllipsoidDensity> {
    let field = FinslerField::constant(base, g)?;
    mixed_riemannian_density(&vec![field; degree])
}
