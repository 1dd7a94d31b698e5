//! Small-dimension linear algebra: quadratic forms, frames, Gram volumes
//! and ellipsoids given by their support functions.
//!
//! All geometry lives in explicit chart coordinates; tangent and cotangent
//! spaces are identified through the chart basis, so the projection of a
//! body onto the span of a frame becomes the congruence `Bᵀ Q B`.

use crate::error::{check_dim, Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

const SYMMETRY_RTOL: f64 = 1e-12;
const PSD_CLAMP_RTOL: f64 = 1e-10;

/// A symmetric positive-semidefinite bilinear form on ℝ^dim.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadForm {
    matrix: DMatrix<f64>,
}

impl QuadForm {
    /// Validates symmetry and semidefiniteness. Eigenvalues in
    /// `[−1e-10·λ_max, 0)` are clamped to zero; anything more negative is
    /// rejected.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        check_dim(n, matrix.ncols(), "quadratic form must be square")?;
        if n == 0 {
            return Err(Error::InvalidArgument("quadratic form of dimension 0".into()));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite matrix entry".into()));
        }
        let scale = matrix.amax();
        let asymmetry = (&matrix - matrix.transpose()).amax();
        if asymmetry > SYMMETRY_RTOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        if n == 1 {
            return if sym[(0, 0)] >= 0.0 {
                Ok(Self { matrix: sym })
            } else if sym[(0, 0)] >= -PSD_CLAMP_RTOL * scale {
                Ok(Self::zeros(1))
            } else {
                Err(Error::NotPsd {
                    min_eigenvalue: sym[(0, 0)],
                })
            };
        }
        let eig = SymmetricEigen::new(sym.clone());
        let lmax = eig.eigenvalues.max();
        let lmin = eig.eigenvalues.min();
        if lmin >= 0.0 {
            return Ok(Self { matrix: sym });
        }
        if lmin < -PSD_CLAMP_RTOL * lmax.max(0.0) {
            return Err(Error::NotPsd {
                min_eigenvalue: lmin,
            });
        }
        let clamped = eig.eigenvalues.map(|l| l.max(0.0));
        let v = &eig.eigenvectors;
        let m = v * DMatrix::from_diagonal(&clamped) * v.transpose();
        Ok(Self {
            matrix: (&m + m.transpose()) * 0.5,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim(n, r.len(), "matrix row length")?;
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    /// Diagonal form; negative entries are rejected.
    pub fn diag(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// g(ξ, η).
    pub fn eval(&self, xi: &[f64], eta: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.matrix[(i, j)] * eta[j];
            }
            s += xi[i] * row;
        }
        s
    }

    /// g(ξ, ξ), clamped at zero against round-off.
    pub fn quad(&self, xi: &[f64]) -> f64 {
        self.eval(xi, xi).max(0.0)
    }

    /// Form scaled by `t ≥ 0`.
    pub fn scaled(&self, t: f64) -> Self {
        assert!(t >= 0.0, "forms can only be scaled by t >= 0");
        Self {
            matrix: &self.matrix * t,
        }
    }

    /// Sum of two forms of the same dimension.
    pub fn add(&self, other: &QuadForm) -> Result<Self> {
        check_dim(self.dim(), other.dim(), "form sum")?;
        Ok(Self {
            matrix: &self.matrix + &other.matrix,
        })
    }

    /// Lifts a form on the block `offset..offset+dim` to ℝ^total, zero
    /// elsewhere: `h(v₁, …, v_n) = g(v_i)`.
    pub fn lift(&self, total: usize, offset: usize) -> Result<Self> {
        if offset + self.dim() > total {
            return Err(Error::InvalidArgument(format!(
                "block {}..{} exceeds dimension {total}",
                offset,
                offset + self.dim()
            )));
        }
        let mut m = DMatrix::zeros(total, total);
        m.view_mut((offset, offset), (self.dim(), self.dim()))
            .copy_from(&self.matrix);
        Ok(Self { matrix: m })
    }

    /// Congruence `Aᵀ Q A` for a dim×k matrix `A`.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.dim(), a.nrows(), "congruence rows")?;
        let m = a.transpose() * &self.matrix * a;
        Self::new((&m + m.transpose()) * 0.5)
    }

    /// Eigenvalues (ascending) and matching orthonormal eigenvectors.
    pub fn eigen(&self) -> (Vec<f64>, DMatrix<f64>) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut idx: Vec<usize> = (0..self.dim()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let vals = idx.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let vecs = DMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, idx[c])]);
        (vals, vecs)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen().0.last().copied().unwrap_or(0.0)
    }

    /// Symmetric PSD square root `Q^{1/2}`.
    pub fn sqrt(&self) -> DMatrix<f64> {
        let (vals, vecs) = self.eigen();
        let d = DVector::from_iterator(vals.len(), vals.iter().map(|l| l.sqrt()));
        &vecs * DMatrix::from_diagonal(&d) * vecs.transpose()
    }

    /// Numerical rank with relative threshold `rtol·λ_max`.
    pub fn rank(&self, rtol: f64) -> usize {
        let (vals, _) = self.eigen();
        let lmax = vals.last().copied().unwrap_or(0.0);
        if lmax <= 0.0 {
            return 0;
        }
        vals.iter().filter(|&&l| l > rtol * lmax).count()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant().max(0.0)
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Centrally symmetric ellipsoid with support function `u ↦ sqrt(uᵀQu)`.
/// Rank-deficient `Q` gives lower-dimensional ellipsoids, down to the
/// point body `{0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    form: QuadForm,
}

impl Ellipsoid {
    pub fn new(form: QuadForm) -> Self {
        Self { form }
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::new(QuadForm::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.form.dim()
    }

    pub fn form(&self) -> &QuadForm {
        &self.form
    }

    pub fn support(&self, u: &[f64]) -> Result<f64> {
        check_dim(self.dim(), u.len(), "support direction")?;
        Ok(self.form.quad(u).sqrt())
    }
}

/// Ordered tuple of `k ≤ ambient_dim` vectors, standing for the decomposable
/// k-vector ξ₁∧…∧ξ_k. Stored as a d×k matrix whose columns are the vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    columns: DMatrix<f64>,
}

impl Frame {
    pub fn new(ambient_dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        for v in vectors {
            check_dim(ambient_dim, v.len(), "frame vector")?;
        }
        Self::from_columns(DMatrix::from_fn(ambient_dim, vectors.len(), |i, j| {
            vectors[j][i]
        }))
    }

    pub fn from_columns(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() > columns.nrows() {
            return Err(Error::InvalidArgument(format!(
                "frame of {} vectors in dimension {}",
                columns.ncols(),
                columns.nrows()
            )));
        }
        Ok(Self { columns })
    }

    /// First `k` standard basis vectors of ℝ^d.
    pub fn standard(d: usize, k: usize) -> Result<Self> {
        Self::from_columns(DMatrix::identity(d, k))
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.columns.column(i).iter().copied().collect()
    }

    /// Frame with vector `i` multiplied by `t`.
    pub fn scale_vector(&self, i: usize, t: f64) -> Self {
        let mut c = self.columns.clone();
        c.column_mut(i).scale_mut(t);
        Self { columns: c }
    }

    /// The frame `F·U` for a k×k matrix `U`.
    pub fn transform(&self, u: &DMatrix<f64>) -> Result<Self> {
        check_dim(self.len(), u.nrows(), "frame transform")?;
        Self::from_columns(&self.columns * u)
    }
}

/// k-dimensional g-volume of the parallelotope spanned by the frame:
/// `sqrt(det M)` with `M_ij = g(ξ_i, ξ_j)`.
pub fn gram_volume(g: &QuadForm, f: &Frame) -> Result<f64> {
    check_dim(g.dim(), f.ambient_dim(), "gram_volume frame")?;
    if f.is_empty() {
        return Ok(1.0);
    }
    let b = f.columns();
    let m = b.transpose() * g.matrix() * b;
    Ok(m.determinant().max(0.0).sqrt())
}

pub fn support(e: &Ellipsoid, u: &[f64]) -> Result<f64> {
    e.support(u)
}

/// Matrix `BᵀQB` of the projected body in frame coordinates (frame vectors
/// become the standard basis, so the frame parallelotope has unit volume).
pub fn restrict_form(q: &QuadForm, f: &Frame) -> Result<QuadForm> {
    check_dim(q.dim(), f.ambient_dim(), "restrict_form frame")?;
    q.congruence(f.columns())
}

/// The ellipsoid 𝒯_g with support function sqrt(g).
pub fn ellipsoid_of_form(g: &QuadForm) -> Ellipsoid {
    Ellipsoid::new(g.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(v: &[&[f64]]) -> Frame {
        let d = v[0].len();
        Frame::new(d, &v.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn gram_volume_examples() {
        let id = QuadForm::identity(2);
        assert_eq!(gram_volume(&id, &frame(&[&[1.0, 0.0], &[0.0, 2.0]])).unwrap(), 2.0);
        assert_eq!(gram_volume(&id, &frame(&[&[1.0, 0.0], &[2.0, 0.0]])).unwrap(), 0.0);
        let g = QuadForm::diag(&[4.0, 1.0]).unwrap();
        assert_eq!(gram_volume(&g, &frame(&[&[1.0, 0.0]])).unwrap(), 2.0);
    }

    #[test]
    fn gram_volume_rejects_mismatch() {
        let err = gram_volume(&QuadForm::identity(3), &frame(&[&[1.0, 0.0]])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn support_examples() {
        let b = Ellipsoid::unit_ball(3);
        assert_eq!(b.support(&[0.0, 0.0, 5.0]).unwrap(), 5.0);
        let e = Ellipsoid::new(QuadForm::diag(&[4.0, 1.0]).unwrap());
        assert_eq!(e.support(&[1.0, 0.0]).unwrap(), 2.0);
        let p = Ellipsoid::new(QuadForm::zeros(2));
        assert_eq!(p.support(&[0.3, -7.0]).unwrap(), 0.0);
    }

    #[test]
    fn restrict_examples() {
        let q = QuadForm::identity(4);
        let r = restrict_form(&q, &Frame::standard(4, 2).unwrap()).unwrap();
        assert_eq!(r, QuadForm::identity(2));
        let r = restrict_form(&QuadForm::identity(2), &frame(&[&[1.0, 1.0]])).unwrap();
        assert!((r.matrix()[(0, 0)] - 2.0).abs() < 1e-15);
        let r = restrict_form(&QuadForm::diag(&[1.0, 0.0]).unwrap(), &frame(&[&[0.0, 1.0]]))
            .unwrap();
        assert_eq!(r.matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn ellipsoid_of_form_examples() {
        let e = ellipsoid_of_form(&QuadForm::diag(&[4.0, 1.0]).unwrap());
        let u = [0.6, 0.8];
        assert!((e.support(&u).unwrap() - (4.0 * 0.36 + 0.64f64).sqrt()).abs() < 1e-15);
        assert_eq!(ellipsoid_of_form(&QuadForm::zeros(2)).support(&u).unwrap(), 0.0);
        assert_eq!(ellipsoid_of_form(&QuadForm::identity(2)).support(&u).unwrap(), 1.0);
    }

    #[test]
    fn psd_clamping_and_rejection() {
        // tiny negative eigenvalue from round-off is clamped
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-14]);
        let q = QuadForm::new(m).unwrap();
        assert!(q.eigen().0[0] >= 0.0);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.1]);
        assert!(matches!(QuadForm::new(bad), Err(Error::NotPsd { .. })));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(QuadForm::new(asym), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn lift_places_block() {
        let g = QuadForm::diag(&[2.0, 3.0]).unwrap();
        let h = g.lift(4, 2).unwrap();
        assert_eq!(h.quad(&[5.0, 5.0, 1.0, 1.0]), 5.0);
        assert!(g.lift(3, 2).is_err());
    }
}
