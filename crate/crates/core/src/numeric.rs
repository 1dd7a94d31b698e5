//! Numerical helpers shared by the geometry and estimation modules.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// Compensated summation; add values in a fixed order for reproducible sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = KahanSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Mean and standard error of a sample, accumulated in index order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std_dev: f64,
}

impl SampleSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                n,
                mean: 0.0,
                std_dev: 0.0,
            };
        }
        let mean = values.iter().copied().collect::<KahanSum>().value() / n as f64;
        let ss = values
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<KahanSum>()
            .value();
        let std_dev = if n > 1 {
            (ss / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { n, mean, std_dev }
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.std_dev / (self.n as f64).sqrt()
        }
    }
}

/// Independent random stream number `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point on the unit sphere S^{d−1} ⊂ ℝ^d (normalized Gaussian).
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Volume of the unit ball in ℝ^k: v_0 = 1, v_1 = 2, v_k = 2π/k · v_{k−2}.
pub fn unit_ball_volume(k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / k as f64 * unit_ball_volume(k - 2),
    }
}

/// κ_d = E|⟨u, e⟩| for u uniform on S^{d−1}, = Γ(d/2) / (√π Γ((d+1)/2)).
pub fn kappa(d: usize) -> f64 {
    assert!(d >= 1, "kappa needs d >= 1");
    let d = d as f64;
    (ln_gamma(d / 2.0) - ln_gamma((d + 1.0) / 2.0)).exp() / PI.sqrt()
}

/// E χ_k = √2 Γ((k+1)/2) / Γ(k/2), the mean norm of a standard Gaussian in ℝ^k.
pub fn chi_mean(k: usize) -> f64 {
    assert!(k >= 1);
    let k = k as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

/// E|det G| for an m×m matrix of independent standard normals: the
/// Gram–Schmidt factorization gives |det G| = Π χ_k with independent χ_k.
pub fn expected_abs_det_gaussian(m: usize) -> f64 {
    (1..=m).map(chi_mean).product()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Determinant of a small dense row-major m×m matrix by Gaussian
/// elimination with partial pivoting; the input is overwritten.
pub fn det_in_place(a: &mut [f64], m: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].abs();
        for r in col + 1..m {
            let v = a[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            det = -det;
        }
        let p = a[col * m + col];
        det *= p;
        for r in col + 1..m {
            let f = a[r * m + col] / p;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_closed_forms() {
        assert!((kappa(1) - 1.0).abs() < 1e-14);
        assert!((kappa(2) - 2.0 / PI).abs() < 1e-14);
        assert!((kappa(3) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let sum_w: f64 = w.iter().sum();
        assert!((sum_w - 2.0).abs() < 1e-14);
        // ∫ x^14 = 2/15 is exact for 8 nodes
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(7);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(12)).sum();
        assert!((i - 2.0 / 13.0).abs() < 1e-14);
    }

    #[test]
    fn det_matches_cofactor() {
        let mut a = vec![2.0, -1.0, 0.5, 1.0, 3.0, 2.0, 0.0, 1.0, 4.0];
        let expect = 2.0 * (12.0 - 2.0) + 1.0 * (4.0 - 0.0) + 0.5 * (1.0 - 0.0);
        assert!((det_in_place(&mut a, 3) - expect).abs() < 1e-12);
    }

    #[test]
    fn kahan_is_order_stable() {
        let v: Vec<f64> = (0..10000).map(|i| 1e-8 * i as f64 + 1.0).collect();
        let s: KahanSum = v.iter().copied().collect();
        assert!((s.value() - (10000.0 + 1e-8 * 49995000.0)).abs() < 1e-9);
    }
}
