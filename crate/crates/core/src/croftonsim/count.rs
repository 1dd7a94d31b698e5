//! Intersection counting against hyperplane-type level sets.
//!
//! A counter works on a *feature manifold*: a [`ParamManifold`] whose
//! points are feature vectors φ(t). Each [`Equation`] reads one block of φ
//! and asks for ⟨φ(t)[block], u⟩ = c. For Crofton data φ is the embedding
//! itself; for random function systems φ is the evaluation map.

use crate::densities::{Chart, ParamManifold};
use crate::error::{Error, Result};
use std::ops::Range;

/// ⟨φ(t)[block], normal⟩ − offset = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Equation {
    pub block: Range<usize>,
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Equation {
    fn residual(&self, phi: &[f64]) -> f64 {
        dot(&phi[self.block.clone()], &self.normal) - self.offset
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CountConfig {
    /// Finest cached grid for curves (vertices per axis).
    pub curve_grid: usize,
    /// Finest cached grid for surfaces (cells per axis).
    pub surface_grid: usize,
    /// |s| below this at a grid extremum signals a near-tangency.
    pub tangency_threshold: f64,
    /// Grid doublings allowed beyond the cached grid before giving up.
    pub max_refinements: usize,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            curve_grid: 4096,
            surface_grid: 512,
            tangency_threshold: 1e-9,
            max_refinements: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CountOutcome {
    Count(usize),
    /// Near-tangency or non-convergent refinement; the caller resamples.
    Degenerate,
    /// The count did not stabilize under grid refinement.
    Failure(String),
}

/// Feature values on a vertex grid of one chart.
#[derive(Clone, Debug)]
struct ChartGrid {
    /// Cells per axis.
    cells: Vec<usize>,
    /// Vertices per axis (cells, or cells + 1 on non-periodic axes).
    verts: Vec<usize>,
    dim: usize,
    k: usize,
    values: Vec<f64>,
    /// Differentials at the vertices, `dim × k` row-major per vertex.
    diffs: Vec<f64>,
}

impl ChartGrid {
    fn build(m: &ParamManifold, chart: usize, n: usize) -> Self {
        let c = &m.charts()[chart];
        let k = c.param_dim();
        let cells = vec![n; k];
        let verts: Vec<usize> = (0..k)
            .map(|a| if c.periodic()[a] { n } else { n + 1 })
            .collect();
        let dim = c.ambient_dim();
        let total: usize = verts.iter().product();
        let mut values = Vec::with_capacity(total * dim);
        let mut diffs = Vec::with_capacity(total * dim * k);
        for t in vertex_params(c, &verts, n) {
            values.extend(c.eval(&t));
            let d = c.differential(&t);
            for r in 0..dim {
                for a in 0..k {
                    diffs.push(d[(r, a)]);
                }
            }
        }
        Self {
            cells,
            verts,
            dim,
            k,
            values,
            diffs,
        }
    }

    /// Derivative of the equation's residual along `axis` at vertex `v`.
    fn derivative(&self, eq: &Equation, v: usize, axis: usize) -> f64 {
        let base = v * self.dim * self.k;
        eq.block
            .clone()
            .zip(&eq.normal)
            .map(|(r, u)| u * self.diffs[base + r * self.k + axis])
            .sum()
    }

    /// Rejects grids whose edges are much shorter than the arc the
    /// differential predicts: the chart oscillates between vertices and
    /// sign changes may alias away.
    fn check_resolution(&self, c: &Chart) -> Result<()> {
        let mut stride = vec![1usize; self.k];
        for a in (0..self.k.saturating_sub(1)).rev() {
            stride[a] = stride[a + 1] * self.verts[a + 1];
        }
        let total: usize = self.verts.iter().product();
        let point = |v: usize| &self.values[v * self.dim..(v + 1) * self.dim];
        let speed = |v: usize, a: usize| {
            let base = v * self.dim * self.k;
            (0..self.dim).map(|r| self.diffs[base + r * self.k + a].powi(2)).sum::<f64>().sqrt()
        };
        for a in 0..self.k {
            let h = (c.upper()[a] - c.lower()[a]) / self.cells[a] as f64;
            for v in 0..total {
                let i = v / stride[a] % self.verts[a];
                let w = if i + 1 < self.verts[a] {
                    v + stride[a]
                } else if c.periodic()[a] {
                    v - i * stride[a]
                } else {
                    continue;
                };
                let arc = h * speed(v, a).max(speed(w, a));
                let chord = point(v).iter().zip(point(w)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                if chord < MIN_CHORD_RATIO * arc {
                    return Err(Error::InvalidArgument(format!(
                        "counting grid of {} cells does not resolve the chart along axis {a}: \
                         edge {chord:.3e} vs predicted arc {arc:.3e}; increase the grid",
                        self.cells[a]
                    )));
                }
            }
        }
        Ok(())
    }

    fn residuals(&self, eq: &Equation) -> Vec<f64> {
        let (start, len) = (eq.block.start, eq.block.len());
        let u = &eq.normal[..len];
        self.values
            .chunks_exact(self.dim)
            .map(|p| dot(&p[start..start + len], u) - eq.offset)
            .collect()
    }
}

fn vertex_params(c: &Chart, verts: &[usize], n: usize) -> Vec<Vec<f64>> {
    let k = verts.len();
    let total: usize = verts.iter().product();
    (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut t = vec![0.0; k];
            for a in (0..k).rev() {
                t[a] = vertex_param(c.lower()[a], c.upper()[a], n, rem % verts[a]);
                rem /= verts[a];
            }
            t
        })
        .collect()
}

fn vertex_param(lo: f64, hi: f64, n: usize, j: usize) -> f64 {
    lo + (hi - lo) * j as f64 / n as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn positive(s: f64) -> bool {
    s >= 0.0
}

/// Safety factor on grid maxima of |∂φ/∂t| used as Lipschitz constants.
const LIPSCHITZ_SAFETY: f64 = 1.5;
/// Minimum edge/arc ratio of the base grid, about four cells per turn of a circle.
const MIN_CHORD_RATIO: f64 = 0.9;
/// Subdivision depth for cells or intervals that may hide roots.
const MAX_DEPTH: usize = 6;

type Counted<T> = std::result::Result<T, CountOutcome>;

/// Counts common zeros of `k` equations on a k-dimensional feature
/// manifold (k ∈ {1, 2}), with cached finest grids.
///
/// Cells without a sign change whose corner values are small compared to a
/// Lipschitz bound are subdivided, so pairs of nearby roots are not lost
/// between grid nodes.
#[derive(Clone, Debug)]
pub struct Counter {
    features: ParamManifold,
    cfg: CountConfig,
    grids: Vec<ChartGrid>,
    /// Per chart: `lipschitz[r][a]` bounds |∂φ_r/∂t_a|.
    lipschitz: Vec<Vec<Vec<f64>>>,
    base_n: usize,
}

impl Counter {
    pub fn new(features: ParamManifold, cfg: CountConfig) -> Result<Self> {
        let k = features.param_dim();
        let n = match k {
            1 => cfg.curve_grid,
            2 => cfg.surface_grid,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "counting supports 1- and 2-parameter manifolds, got {k}"
                )))
            }
        };
        if n < 8 {
            return Err(Error::InvalidArgument(format!("counting grid {n} is below 8")));
        }
        if !(cfg.tangency_threshold >= 0.0) {
            return Err(Error::InvalidArgument("negative tangency threshold".into()));
        }
        let base_n = n.div_ceil(4) * 4;
        let grids: Vec<ChartGrid> = (0..features.charts().len())
            .map(|c| ChartGrid::build(&features, c, base_n))
            .collect();
        for (c, g) in features.charts().iter().zip(&grids) {
            g.check_resolution(c)?;
        }
        let lipschitz = features
            .charts()
            .iter()
            .zip(&grids)
            .map(|(c, g)| {
                let mut lip = vec![vec![0.0f64; k]; c.ambient_dim()];
                for d in g.diffs.chunks_exact(c.ambient_dim() * k) {
                    for (r, row) in lip.iter_mut().enumerate() {
                        for (a, v) in row.iter_mut().enumerate() {
                            *v = v.max(d[r * k + a].abs());
                        }
                    }
                }
                for row in &mut lip {
                    for v in row {
                        *v *= LIPSCHITZ_SAFETY;
                    }
                }
                lip
            })
            .collect();
        Ok(Self {
            features,
            cfg,
            grids,
            lipschitz,
            base_n,
        })
    }

    pub fn features(&self) -> &ParamManifold {
        &self.features
    }

    pub fn config(&self) -> &CountConfig {
        &self.cfg
    }

    /// Number of common solutions summed over charts.
    pub fn count(&self, eqs: &[Equation]) -> CountOutcome {
        if eqs.len() != self.features.param_dim() {
            return CountOutcome::Failure(format!(
                "{} equations on a {}-parameter manifold",
                eqs.len(),
                self.features.param_dim()
            ));
        }
        let mut total = 0;
        for chart in 0..self.grids.len() {
            match self.stable_count(chart, eqs) {
                Ok(c) => total += c,
                Err(o) => return o,
            }
        }
        CountOutcome::Count(total)
    }

    /// Roots of a single equation on a curve, refined by bisection to 1e-12.
    pub fn curve_roots(&self, eq: &Equation) -> Counted<Vec<(usize, f64)>> {
        if self.features.param_dim() != 1 {
            return Err(CountOutcome::Failure("curve_roots on a surface".into()));
        }
        let eqs = std::slice::from_ref(eq);
        let mut out = Vec::new();
        for chart in 0..self.grids.len() {
            self.stable_count(chart, eqs)?;
            let g = &self.grids[chart];
            let res = g.residuals(eq);
            for (a, b) in self.curve_brackets(chart, g, &res, eq, 1)? {
                out.push((chart, self.bisect(chart, eq, a, b)));
            }
        }
        Ok(out)
    }

    fn bisect(&self, chart: usize, eq: &Equation, mut a: f64, mut b: f64) -> f64 {
        let c = &self.features.charts()[chart];
        let f = |t: f64| eq.residual(&c.eval(&[t]));
        let sa = positive(f(a));
        while b - a > 1e-12 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if positive(f(mid)) == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Count on the cached grid when the levels grid/4, grid/2 and grid
    /// agree; otherwise the grid keeps doubling until three consecutive
    /// levels agree.
    fn stable_count(&self, chart: usize, eqs: &[Equation]) -> Counted<usize> {
        let cached = &self.grids[chart];
        let res: Vec<Vec<f64>> = eqs.iter().map(|e| cached.residuals(e)).collect();
        let levels = match eqs.len() {
            1 => [4, 2, 1].map(|s| self.curve_brackets(chart, cached, &res[0], &eqs[0], s).map(|b| b.len())),
            _ => {
                let fine = self.surface_roots(chart, cached, &res, eqs, 1)?;
                [4, 2].map(|s| self.surface_level(chart, cached, &res, eqs, s, &fine))
                    .into_iter()
                    .chain([Ok(fine.len())])
                    .collect::<Vec<_>>()
                    .try_into()
                    .expect("three levels")
            }
        };
        let levels = [levels[0].clone()?, levels[1].clone()?, levels[2].clone()?];
        if levels[0] == levels[1] && levels[1] == levels[2] {
            return Ok(levels[2]);
        }
        let mut history = levels.to_vec();
        let mut n = self.base_n;
        for _ in 0..self.cfg.max_refinements {
            n *= 2;
            let g = ChartGrid::build(&self.features, chart, n);
            let res: Vec<Vec<f64>> = eqs.iter().map(|e| g.residuals(e)).collect();
            let c = match eqs.len() {
                1 => self.curve_brackets(chart, &g, &res[0], &eqs[0], 1)?.len(),
                _ => self.surface_roots(chart, &g, &res, eqs, 1)?.len(),
            };
            history.push(c);
            let h = &history[history.len() - 3..];
            if h[0] == h[1] && h[1] == h[2] {
                return Ok(c);
            }
        }
        Err(CountOutcome::Failure(format!(
            "count did not stabilize under refinement: {history:?}"
        )))
    }

    /// Lipschitz bound of the equation's residual along each axis.
    fn equation_lipschitz(&self, chart: usize, eq: &Equation) -> Vec<f64> {
        let lip = &self.lipschitz[chart];
        let unorm = dot(&eq.normal, &eq.normal).sqrt();
        (0..self.features.param_dim())
            .map(|a| unorm * eq.block.clone().map(|r| lip[r][a] * lip[r][a]).sum::<f64>().sqrt())
            .collect()
    }

    fn residual_and_slope(&self, chart: usize, eq: &Equation, t: &[f64], axis: usize) -> (f64, f64) {
        let c = &self.features.charts()[chart];
        let d = c.differential(t);
        let slope = eq.block.clone().zip(&eq.normal).map(|(r, u)| u * d[(r, axis)]).sum();
        (eq.residual(&c.eval(t)), slope)
    }

    /// Parameter brackets containing one sign change each, at the grid
    /// level with the given stride. Intervals without a sign change are
    /// subdivided when the residual has an interior extremum close enough
    /// to zero to hide a pair of roots.
    fn curve_brackets(
        &self,
        chart: usize,
        g: &ChartGrid,
        s: &[f64],
        eq: &Equation,
        stride: usize,
    ) -> Counted<Vec<(f64, f64)>> {
        let c = &self.features.charts()[chart];
        let periodic = c.periodic()[0];
        if stride == 1 && has_grid_tangency(s, periodic, self.cfg.tangency_threshold) {
            return Err(CountOutcome::Degenerate);
        }
        let n = g.cells[0];
        let lip = self.equation_lipschitz(chart, eq)[0];
        let h = (c.upper()[0] - c.lower()[0]) / n as f64 * stride as f64;
        let reach = 0.5 * lip * h;
        let mut out = Vec::new();
        for j in (0..n).step_by(stride) {
            let k = if j + stride < s.len() { j + stride } else { 0 };
            let (sa, sb) = (s[j], s[k]);
            let crossing = positive(sa) != positive(sb);
            if !crossing && sa.abs().min(sb.abs()) > reach {
                continue;
            }
            let ta = vertex_param(c.lower()[0], c.upper()[0], n, j);
            if crossing {
                out.push((ta, ta + h));
                continue;
            }
            let (da, db) = (g.derivative(eq, j, 0), g.derivative(eq, k, 0));
            if (da > 0.0) != (db > 0.0) {
                self.interval_brackets(chart, eq, [ta, sa, da], [ta + h, sb, db], lip, 1, &mut out)?;
            }
        }
        Ok(out)
    }

    /// Recursive search of `[a, b]` given `[t, s(t), s'(t)]` at both ends.
    #[allow(clippy::too_many_arguments)]
    fn interval_brackets(
        &self,
        chart: usize,
        eq: &Equation,
        a: [f64; 3],
        b: [f64; 3],
        lip: f64,
        depth: usize,
        out: &mut Vec<(f64, f64)>,
    ) -> Counted<()> {
        if positive(a[1]) != positive(b[1]) {
            out.push((a[0], b[0]));
            return Ok(());
        }
        let near = a[1].abs().min(b[1].abs());
        if near > 0.5 * lip * (b[0] - a[0]) || (a[2] > 0.0) == (b[2] > 0.0) {
            return Ok(());
        }
        if depth == MAX_DEPTH {
            if near < self.cfg.tangency_threshold {
                return Err(CountOutcome::Degenerate);
            }
            return Ok(());
        }
        let t = 0.5 * (a[0] + b[0]);
        let (sm, dm) = self.residual_and_slope(chart, eq, &[t], 0);
        let m = [t, sm, dm];
        self.interval_brackets(chart, eq, a, m, lip, depth + 1, out)?;
        self.interval_brackets(chart, eq, m, b, lip, depth + 1, out)
    }

    /// Newton-refined, deduplicated common roots at a grid level.
    fn surface_roots(
        &self,
        chart: usize,
        g: &ChartGrid,
        res: &[Vec<f64>],
        eqs: &[Equation],
        stride: usize,
    ) -> Counted<Vec<[f64; 2]>> {
        let c = &self.features.charts()[chart];
        let per = [c.periodic()[0], c.periodic()[1]];
        let scale = c.upper()[0] - c.lower()[0] + c.upper()[1] - c.lower()[1];
        let mut roots: Vec<[f64; 2]> = Vec::new();
        for (t0, step) in self.surface_candidates(chart, g, res, eqs, stride)? {
            match self.newton(chart, eqs, t0, step) {
                NewtonResult::Root(t) => {
                    if !roots.iter().any(|r| wrapped_distance(r, &t, c, per) < 1e-6 * scale) {
                        roots.push(t);
                    }
                }
                NewtonResult::Outside => {}
                NewtonResult::Degenerate => return Err(CountOutcome::Degenerate),
            }
        }
        Ok(roots)
    }

    /// Count at a coarser level: candidates close to a known fine-level
    /// root are attributed to it; the rest are refined by Newton.
    fn surface_level(
        &self,
        chart: usize,
        g: &ChartGrid,
        res: &[Vec<f64>],
        eqs: &[Equation],
        stride: usize,
        known: &[[f64; 2]],
    ) -> Counted<usize> {
        let c = &self.features.charts()[chart];
        let per = [c.periodic()[0], c.periodic()[1]];
        let scale = c.upper()[0] - c.lower()[0] + c.upper()[1] - c.lower()[1];
        let mut hit = vec![false; known.len()];
        let mut extra: Vec<[f64; 2]> = Vec::new();
        for (t0, step) in self.surface_candidates(chart, g, res, eqs, stride)? {
            let reach = 2.0 * step[0].hypot(step[1]);
            let nearest = (0..known.len())
                .map(|i| (wrapped_distance(&known[i], &t0, c, per), i))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((d, i)) = nearest {
                if d < reach && !hit[i] {
                    hit[i] = true;
                    continue;
                }
            }
            match self.newton(chart, eqs, t0, step) {
                NewtonResult::Root(t) => {
                    if let Some(i) = (0..known.len()).find(|&i| wrapped_distance(&known[i], &t, c, per) < 1e-6 * scale) {
                        hit[i] = true;
                    } else if !extra.iter().any(|r| wrapped_distance(r, &t, c, per) < 1e-6 * scale) {
                        extra.push(t);
                    }
                }
                NewtonResult::Outside => {}
                NewtonResult::Degenerate => return Err(CountOutcome::Degenerate),
            }
        }
        Ok(hit.iter().filter(|h| **h).count() + extra.len())
    }

    /// Starting points (and local cell sizes) from marching-squares segment
    /// intersections, subdividing cells that may hide a common root.
    fn surface_candidates(
        &self,
        chart: usize,
        g: &ChartGrid,
        res: &[Vec<f64>],
        eqs: &[Equation],
        stride: usize,
    ) -> Counted<Vec<([f64; 2], [f64; 2])>> {
        let c = &self.features.charts()[chart];
        let (f, h) = (&res[0], &res[1]);
        let per = [c.periodic()[0], c.periodic()[1]];
        let n = [g.cells[0] / stride, g.cells[1] / stride];
        let step = [
            (c.upper()[0] - c.lower()[0]) / n[0] as f64,
            (c.upper()[1] - c.lower()[1]) / n[1] as f64,
        ];
        let vidx = |i: usize, j: usize| {
            let i = if per[0] { (i * stride) % g.verts[0] } else { i * stride };
            let j = if per[1] { (j * stride) % g.verts[1] } else { j * stride };
            i * g.verts[1] + j
        };
        let lips = [self.equation_lipschitz(chart, &eqs[0]), self.equation_lipschitz(chart, &eqs[1])];
        let reach = |lip: &[f64]| 0.5 * (lip[0] * step[0] + lip[1] * step[1]);
        let reach = [reach(&lips[0]), reach(&lips[1])];
        let mut out = Vec::new();
        for i in 0..n[0] {
            for j in 0..n[1] {
                let corners = [vidx(i, j), vidx(i + 1, j), vidx(i, j + 1), vidx(i + 1, j + 1)];
                let fv = corners.map(|k| f[k]);
                let gv = corners.map(|k| h[k]);
                let (fm, gm) = (mixed(&fv), mixed(&gv));
                if !(fm || min_abs(&fv) <= reach[0]) || !(gm || min_abs(&gv) <= reach[1]) {
                    continue;
                }
                let lo = [c.lower()[0] + i as f64 * step[0], c.lower()[1] + j as f64 * step[1]];
                let grads = |e: &Equation| corners.map(|k| [g.derivative(e, k, 0), g.derivative(e, k, 1)]);
                let cell = Cell {
                    lo,
                    size: step,
                    f: fv,
                    g: gv,
                    fd: grads(&eqs[0]),
                    gd: grads(&eqs[1]),
                };
                self.cell_candidates(chart, eqs, &lips, &cell, 0, &mut out)?;
            }
        }
        Ok(out)
    }

    /// Recursive search of a cell where at least one residual has no sign
    /// change but may vanish inside (small corner values and a derivative
    /// that changes sign).
    fn cell_candidates(
        &self,
        chart: usize,
        eqs: &[Equation],
        lips: &[Vec<f64>; 2],
        cell: &Cell,
        depth: usize,
        out: &mut Vec<([f64; 2], [f64; 2])>,
    ) -> Counted<()> {
        let reach = |lip: &[f64]| 0.5 * (lip[0] * cell.size[0] + lip[1] * cell.size[1]);
        let possible = |v: &[f64; 4], d: &[[f64; 2]; 4], lip: &[f64]| {
            mixed(v)
                || (min_abs(v) <= reach(lip)
                    && (mixed_slope(d.map(|x| x[0])) || mixed_slope(d.map(|x| x[1]))))
        };
        if !possible(&cell.f, &cell.fd, &lips[0]) || !possible(&cell.g, &cell.gd, &lips[1]) {
            return Ok(());
        }
        if mixed(&cell.f) && mixed(&cell.g) {
            // A residual with an extremum in the cell can cross zero twice;
            // Newton from such a cell may land on the neighbouring root.
            let monotone = |d: &[[f64; 2]; 4]| !mixed_slope(d.map(|x| x[0])) && !mixed_slope(d.map(|x| x[1]));
            if depth == MAX_DEPTH
                || (monotone(&cell.fd) && monotone(&cell.gd) && self.injective(chart, eqs, cell))
            {
                push_intersections(&cell.f, &cell.g, cell.lo, cell.size, out);
                return Ok(());
            }
        } else if depth == MAX_DEPTH {
            return Ok(());
        }
        let half = [0.5 * cell.size[0], 0.5 * cell.size[1]];
        // Values on the 3×3 grid of the subdivided cell, indexed 3i + j.
        let at = |i: usize, j: usize| 3 * i + j;
        let mut fv = [0.0; 9];
        let mut gv = [0.0; 9];
        let mut fd = [[0.0; 2]; 9];
        let mut gd = [[0.0; 2]; 9];
        for (k, (i, j)) in [(0, 0), (2, 0), (0, 2), (2, 2)].into_iter().enumerate() {
            let q = at(i, j);
            (fv[q], gv[q], fd[q], gd[q]) = (cell.f[k], cell.g[k], cell.fd[k], cell.gd[k]);
        }
        let c = &self.features.charts()[chart];
        for (i, j) in [(1, 0), (0, 1), (1, 1), (2, 1), (1, 2)] {
            let t = [cell.lo[0] + i as f64 * half[0], cell.lo[1] + j as f64 * half[1]];
            let phi = c.eval(&t);
            let d = c.differential(&t);
            let q = at(i, j);
            fv[q] = eqs[0].residual(&phi);
            gv[q] = eqs[1].residual(&phi);
            let grad = |e: &Equation, a: usize| -> f64 {
                e.block.clone().zip(&e.normal).map(|(r, u)| u * d[(r, a)]).sum()
            };
            fd[q] = [grad(&eqs[0], 0), grad(&eqs[0], 1)];
            gd[q] = [grad(&eqs[1], 0), grad(&eqs[1], 1)];
        }
        for (i, j) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let idx = [at(i, j), at(i + 1, j), at(i, j + 1), at(i + 1, j + 1)];
            let sub = Cell {
                lo: [cell.lo[0] + i as f64 * half[0], cell.lo[1] + j as f64 * half[1]],
                size: half,
                f: idx.map(|k| fv[k]),
                g: idx.map(|k| gv[k]),
                fd: idx.map(|k| fd[k]),
                gd: idx.map(|k| gd[k]),
            };
            self.cell_candidates(chart, eqs, lips, &sub, depth + 1, out)?;
        }
        Ok(())
    }

    /// Corner Jacobians within half the inverse of the centre Jacobian: the
    /// residual map is then one-to-one on the cell and near-tangent level
    /// curves cannot cross twice there.
    fn injective(&self, chart: usize, eqs: &[Equation], cell: &Cell) -> bool {
        let c = &self.features.charts()[chart];
        let mid = [cell.lo[0] + 0.5 * cell.size[0], cell.lo[1] + 0.5 * cell.size[1]];
        let d = c.differential(&mid);
        let grad = |e: &Equation, a: usize| -> f64 { e.block.clone().zip(&e.normal).map(|(r, u)| u * d[(r, a)]).sum() };
        let j = [[grad(&eqs[0], 0), grad(&eqs[0], 1)], [grad(&eqs[1], 0), grad(&eqs[1], 1)]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 {
            return false;
        }
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        (0..4).all(|k| {
            let e = [
                [cell.fd[k][0] - j[0][0], cell.fd[k][1] - j[0][1]],
                [cell.gd[k][0] - j[1][0], cell.gd[k][1] - j[1][1]],
            ];
            let mut frob = 0.0;
            for r in 0..2 {
                for col in 0..2 {
                    let v = inv[r][0] * e[0][col] + inv[r][1] * e[1][col];
                    frob += v * v;
                }
            }
            frob <= 0.25
        })
    }

    /// Levenberg–Marquardt from a candidate. A stall at a nonzero local
    /// minimum of |F| means the level curves pass without meeting.
    fn newton(&self, chart: usize, eqs: &[Equation], t0: [f64; 2], step: [f64; 2]) -> NewtonResult {
        let c = &self.features.charts()[chart];
        let per = c.periodic();
        let span = [c.upper()[0] - c.lower()[0], c.upper()[1] - c.lower()[1]];
        let max_step = [span[0] / 8.0, span[1] / 8.0];
        let eval = |t: &[f64; 2]| {
            let phi = c.eval(t);
            let d = c.differential(t);
            let grad = |e: &Equation, col: usize| -> f64 {
                e.block.clone().zip(&e.normal).map(|(row, u)| d[(row, col)] * u).sum()
            };
            (
                [eqs[0].residual(&phi), eqs[1].residual(&phi)],
                [[grad(&eqs[0], 0), grad(&eqs[0], 1)], [grad(&eqs[1], 0), grad(&eqs[1], 1)]],
            )
        };
        let norm2 = |r: &[f64; 2]| r[0] * r[0] + r[1] * r[1];
        let stalled = |r: &[f64; 2]| {
            if r[0].abs().max(r[1].abs()) <= self.cfg.tangency_threshold {
                NewtonResult::Degenerate
            } else {
                NewtonResult::Outside
            }
        };
        let mut t = t0;
        let (mut r, mut j) = eval(&t);
        let mut lambda = 0.0;
        for _ in 0..100 {
            let n0 = j[0][0].hypot(j[0][1]);
            let n1 = j[1][0].hypot(j[1][1]);
            if r[0].abs().max(r[1].abs()) < 1e-10 {
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                if det.abs() <= 1e-9 * n0 * n1 {
                    return NewtonResult::Degenerate;
                }
                return match wrap_into(t, c, per) {
                    Some(w) => NewtonResult::Root(w),
                    None => NewtonResult::Outside,
                };
            }
            // Normal equations JᵀJ dt = Jᵀr, damped by λ·diag(JᵀJ).
            let a = [
                [j[0][0] * j[0][0] + j[1][0] * j[1][0], j[0][0] * j[0][1] + j[1][0] * j[1][1]],
                [0.0, j[0][1] * j[0][1] + j[1][1] * j[1][1]],
            ];
            let gv = [j[0][0] * r[0] + j[1][0] * r[1], j[0][1] * r[0] + j[1][1] * r[1]];
            if gv[0].hypot(gv[1]) <= 1e-15 * (a[0][0] + a[1][1]).sqrt() * norm2(&r).sqrt() {
                return stalled(&r);
            }
            let floor = 1e-300_f64.max(1e-15 * (a[0][0] + a[1][1]));
            loop {
                let d0 = a[0][0] + lambda * a[0][0].max(floor);
                let d1 = a[1][1] + lambda * a[1][1].max(floor);
                let det = d0 * d1 - a[0][1] * a[0][1];
                if det > 1e-14 * d0 * d1 {
                    let mut dt = [(d1 * gv[0] - a[0][1] * gv[1]) / det, (d0 * gv[1] - a[0][1] * gv[0]) / det];
                    for k in 0..2 {
                        dt[k] = dt[k].clamp(-max_step[k], max_step[k]);
                    }
                    let cand = [t[0] - dt[0], t[1] - dt[1]];
                    // Far outside a non-periodic box: the candidate belongs to no root here.
                    if (0..2).any(|k| {
                        !per[k] && (cand[k] < c.lower()[k] - 2.0 * step[k] || cand[k] > c.upper()[k] + 2.0 * step[k])
                    }) {
                        return NewtonResult::Outside;
                    }
                    let (rc, jc) = eval(&cand);
                    if norm2(&rc) < norm2(&r) {
                        (t, r, j) = (cand, rc, jc);
                        lambda = if lambda < 1e-9 { 0.0 } else { lambda / 10.0 };
                        break;
                    }
                }
                lambda = (lambda * 10.0).max(1e-6);
                if lambda > 1e12 {
                    return stalled(&r);
                }
            }
        }
        stalled(&r)
    }
}

struct Cell {
    lo: [f64; 2],
    size: [f64; 2],
    /// Corner values ordered (0,0), (1,0), (0,1), (1,1).
    f: [f64; 4],
    g: [f64; 4],
    /// Corner gradients in the same order.
    fd: [[f64; 2]; 4],
    gd: [[f64; 2]; 4],
}

fn push_intersections(f: &[f64; 4], g: &[f64; 4], lo: [f64; 2], size: [f64; 2], out: &mut Vec<([f64; 2], [f64; 2])>) {
    for p in &cell_segments(f) {
        for q in &cell_segments(g) {
            if let Some(local) = segment_intersection(p, q, 0.25) {
                out.push(([lo[0] + local[0] * size[0], lo[1] + local[1] * size[1]], size));
            }
        }
    }
}

fn min_abs(v: &[f64; 4]) -> f64 {
    v.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min)
}

/// Strictly positive and strictly negative entries both present, ignoring
/// entries that are zero up to rounding.
fn mixed_slope(d: [f64; 4]) -> bool {
    let tol = 1e-12 * d.iter().map(|x| x.abs()).fold(0.0, f64::max);
    d.iter().any(|x| *x > tol) && d.iter().any(|x| *x < -tol)
}

enum NewtonResult {
    Root([f64; 2]),
    Outside,
    Degenerate,
}

fn wrap_into(t: [f64; 2], c: &Chart, per: &[bool]) -> Option<[f64; 2]> {
    let mut out = t;
    for a in 0..2 {
        let (lo, hi) = (c.lower()[a], c.upper()[a]);
        if per[a] {
            out[a] = lo + (t[a] - lo).rem_euclid(hi - lo);
        } else if t[a] < lo || t[a] > hi {
            return None;
        }
    }
    Some(out)
}

fn wrapped_distance(a: &[f64; 2], b: &[f64; 2], c: &Chart, per: [bool; 2]) -> f64 {
    let mut s = 0.0;
    for k in 0..2 {
        let mut d = (a[k] - b[k]).abs();
        if per[k] {
            let span = c.upper()[k] - c.lower()[k];
            d = d.rem_euclid(span);
            d = d.min(span - d);
        }
        s += d * d;
    }
    s.sqrt()
}

fn mixed(v: &[f64; 4]) -> bool {
    let p = v.iter().filter(|x| positive(**x)).count();
    p > 0 && p < 4
}

/// Marching-squares zero segments of a bilinear cell in local coordinates.
/// Corners are ordered (0,0), (1,0), (0,1), (1,1).
fn cell_segments(v: &[f64; 4]) -> Vec<[[f64; 2]; 2]> {
    let [a, b, c, d] = *v;
    let cross = |x: f64, y: f64| x / (x - y);
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(4);
    // Edges in cyclic order: bottom, right, top, left.
    if positive(a) != positive(b) {
        pts.push([cross(a, b), 0.0]);
    }
    if positive(b) != positive(d) {
        pts.push([1.0, cross(b, d)]);
    }
    if positive(d) != positive(c) {
        pts.push([1.0 - cross(d, c), 1.0]);
    }
    if positive(c) != positive(a) {
        pts.push([0.0, 1.0 - cross(c, a)]);
    }
    match pts.len() {
        2 => vec![[pts[0], pts[1]]],
        4 => {
            // Saddle: the centre value decides which corners connect.
            let centre = 0.25 * (a + b + c + d);
            if positive(centre) == positive(a) {
                vec![[pts[0], pts[1]], [pts[2], pts[3]]]
            } else {
                vec![[pts[3], pts[0]], [pts[1], pts[2]]]
            }
        }
        _ => Vec::new(),
    }
}

/// Intersection of two segments, accepting parameters in [−eps, 1+eps].
fn segment_intersection(p: &[[f64; 2]; 2], q: &[[f64; 2]; 2], eps: f64) -> Option<[f64; 2]> {
    let r = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let s = [q[1][0] - q[0][0], q[1][1] - q[0][1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom.abs() < 1e-300 {
        return None;
    }
    let w = [q[0][0] - p[0][0], q[0][1] - p[0][1]];
    let a = (w[0] * s[1] - w[1] * s[0]) / denom;
    let b = (w[0] * r[1] - w[1] * r[0]) / denom;
    if a < -eps || a > 1.0 + eps || b < -eps || b > 1.0 + eps {
        return None;
    }
    Some([p[0][0] + a * r[0], p[0][1] + a * r[1]])
}

fn has_grid_tangency(s: &[f64], periodic: bool, threshold: f64) -> bool {
    let n = s.len();
    (0..n).any(|j| {
        if s[j].abs() >= threshold {
            return false;
        }
        let (prev, next) = match (j, periodic) {
            (0, false) => return false,
            (j, false) if j + 1 == n => return false,
            (j, _) => (s[(j + n - 1) % n], s[(j + 1) % n]),
        };
        (s[j] - prev) * (next - s[j]) <= 0.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densities::{ParamManifold, Polynomial};

    fn eq(block: Range<usize>, normal: Vec<f64>, offset: f64) -> Equation {
        Equation { block, normal, offset }
    }

    #[test]
    fn circle_line_counts() {
        let c = Counter::new(ParamManifold::circle(1.0).unwrap(), CountConfig::default()).unwrap();
        assert_eq!(c.count(&[eq(0..2, vec![1.0, 0.0], 0.0)]), CountOutcome::Count(2));
        assert_eq!(c.count(&[eq(0..2, vec![0.6, 0.8], 2.0)]), CountOutcome::Count(0));
        assert_eq!(c.count(&[eq(0..2, vec![0.6, 0.8], 0.999)]), CountOutcome::Count(2));
    }

    #[test]
    fn tangent_line_is_degenerate() {
        let c = Counter::new(ParamManifold::circle(1.0).unwrap(), CountConfig::default()).unwrap();
        assert_eq!(c.count(&[eq(0..2, vec![1.0, 0.0], 1.0)]), CountOutcome::Degenerate);
    }

    #[test]
    fn curve_roots_are_refined() {
        let c = Counter::new(ParamManifold::circle(1.0).unwrap(), CountConfig::default()).unwrap();
        let roots = c.curve_roots(&eq(0..2, vec![1.0, 0.0], 0.5)).unwrap();
        assert_eq!(roots.len(), 2);
        for (_, t) in roots {
            assert!((t.cos() - 0.5).abs() < 1e-11);
        }
    }

    #[test]
    fn torus_counts_factor() {
        let m = ParamManifold::torus_embedded(1.0, 0.5).unwrap();
        let cfg = CountConfig {
            surface_grid: 64,
            ..Default::default()
        };
        let c = Counter::new(m, cfg).unwrap();
        let e1 = eq(0..2, vec![0.8, 0.6], 0.3);
        let e2 = eq(2..4, vec![0.0, 1.0], -0.2);
        assert_eq!(c.count(&[e1.clone(), e2.clone()]), CountOutcome::Count(4));
        let e2_miss = eq(2..4, vec![0.0, 1.0], 0.7);
        assert_eq!(c.count(&[e1, e2_miss]), CountOutcome::Count(0));
    }

    #[test]
    fn linear_graph_surface_has_one_solution() {
        let p = Polynomial::new(2, vec![(vec![1, 0], 0.5), (vec![0, 1], -0.3)]).unwrap();
        let q = Polynomial::new(2, vec![(vec![1, 0], 0.2), (vec![0, 1], 0.7)]).unwrap();
        let m = ParamManifold::graph_surface(p, q, [-1.0, -1.0], [1.0, 1.0]).unwrap();
        let c = Counter::new(
            m,
            CountConfig {
                surface_grid: 64,
                ..Default::default()
            },
        )
        .unwrap();
        let out = c.count(&[eq(0..2, vec![0.6, 0.8], 0.1), eq(2..4, vec![-0.8, 0.6], 0.05)]);
        assert_eq!(out, CountOutcome::Count(1));
    }

    #[test]
    fn rejects_bad_configurations() {
        let m = ParamManifold::unit_sphere().unwrap();
        assert!(Counter::new(m.clone(), CountConfig { surface_grid: 4, ..Default::default() }).is_err());
        let c = Counter::new(m, CountConfig { surface_grid: 16, ..Default::default() }).unwrap();
        assert!(matches!(c.count(&[eq(0..3, vec![1.0, 0.0, 0.0], 0.0)]), CountOutcome::Failure(_)));
    }

    #[test]
    fn saddle_cells_split_consistently() {
        let segs = cell_segments(&[1.0, -1.0, -1.0, 1.0]);
        assert_eq!(segs.len(), 2);
        let segs = cell_segments(&[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(segs.len(), 1);
        assert!(cell_segments(&[1.0, 1.0, 1.0, 1.0]).is_empty());
    }
}
