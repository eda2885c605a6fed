//! Minimization of `wᵀKw` over the probability simplex.
//!
//! An active-set min-norm-point method runs first: it grows the support one
//! vertex at a time and solves the KKT system on it exactly, which is fast
//! when the minimizer is sparse and the kernel is positive definite on the
//! support. When the support grows too large or a reduced kernel matrix is
//! not positive definite, away-step conditional gradient with exact line
//! search takes over. Kernels here need not be positive semidefinite, so
//! small problems also restart from several seeded interior points and the
//! best local minimum is kept.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::tolerances::{ACTIVE_SET_MAX_SUPPORT, DENSE_KERNEL_MAX_POINTS, MULTISTART_COUNT, MULTISTART_MAX_POINTS};

/// Symmetric kernel matrix accessed by entry or by column.
pub trait Kernel: Sync {
    fn len(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn column(&self, j: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.entry(i, j);
        }
    }

    /// Writes the nonzero entries of column `j`. Kernels without exploitable
    /// sparsity return `false` and leave the buffers untouched.
    fn sparse_column(&self, _j: usize, _rows: &mut Vec<usize>, _values: &mut Vec<f64>) -> bool {
        false
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fully materialized kernel.
pub struct DenseKernel {
    n: usize,
    data: Vec<f64>,
}

impl DenseKernel {
    pub fn from_kernel(kernel: &dyn Kernel) -> Self {
        let n = kernel.len();
        let mut data = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..=j {
                let v = kernel.entry(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        DenseKernel { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let n = rows.len();
        DenseKernel {
            n,
            data: rows.into_iter().flatten().collect(),
        }
    }
}

impl Kernel for DenseKernel {
    fn len(&self) -> usize {
        self.n
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        // Symmetric, so the row is the column.
        out.copy_from_slice(&self.data[j * self.n..(j + 1) * self.n]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once the duality gap is at most `tol · min(1, objective)`.
    pub tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub objective: f64,
    /// Conditional-gradient gap `∇f(w)·(w - e_i)` at the best vertex `i`,
    /// recomputed from scratch at the returned iterate.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `wᵀKw` over the simplex, materializing the kernel when small.
pub fn minimize(kernel: &dyn Kernel, options: SolverOptions) -> Solution {
    let n = kernel.len();
    if n <= DENSE_KERNEL_MAX_POINTS && n > 1 {
        let dense = DenseKernel::from_kernel(kernel);
        solve(&dense, options)
    } else {
        solve(kernel, options)
    }
}

fn solve(kernel: &dyn Kernel, options: SolverOptions) -> Solution {
    let n = kernel.len();
    if n == 1 {
        return Solution {
            weights: vec![1.0],
            objective: kernel.entry(0, 0),
            gap: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let active = active_set(kernel, options);
    if n > MULTISTART_MAX_POINTS {
        if let Some(sol) = active {
            return sol;
        }
        return away_step_sparse(kernel, options).unwrap_or_else(|| away_step(kernel, vec![1.0 / n as f64; n], options));
    }
    let mut starts = vec![vec![1.0 / n as f64; n]];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let gamma = Gamma::new(0.5, 1.0).expect("valid Dirichlet shape");
    for _ in 0..MULTISTART_COUNT {
        let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|v| *v /= total);
            starts.push(w);
        }
    }
    let mut best = active;
    let mut total_iterations = best.as_ref().map_or(0, |b| b.iterations);
    for start in starts {
        let sol = away_step(kernel, start, options);
        total_iterations += sol.iterations;
        if best.as_ref().is_none_or(|b| better(&sol, b)) {
            best = Some(sol);
        }
    }
    let mut best = best.expect("at least one start");
    best.iterations = total_iterations;
    best
}

fn better(a: &Solution, b: &Solution) -> bool {
    (a.converged && !b.converged) || (a.converged == b.converged && a.objective < b.objective)
}

/// Lower-triangular Cholesky factor stored row by row.
struct Cholesky {
    rows: Vec<Vec<f64>>,
}

impl Cholesky {
    /// Appends a row for a new index with kernel entries `cross` against the
    /// current support and diagonal `diag`. Fails if the extension is not
    /// numerically positive definite.
    fn push(&mut self, cross: &[f64], diag: f64) -> bool {
        let mut row = Vec::with_capacity(cross.len() + 1);
        for (i, &c) in cross.iter().enumerate() {
            let li = &self.rows[i];
            let dot: f64 = li[..i].iter().zip(&row).map(|(a, b)| a * b).sum();
            row.push((c - dot) / li[i]);
        }
        let pivot = diag - row.iter().map(|x| x * x).sum::<f64>();
        if !(pivot > 1e-12 * diag.abs().max(f64::MIN_POSITIVE)) {
            return false;
        }
        row.push(pivot.sqrt());
        self.rows.push(row);
        true
    }

    /// Deletes index `k`, restoring the factor of the reduced matrix with a
    /// rank-one update of the trailing block.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        let mut x: Vec<f64> = self.rows[k..].iter_mut().map(|row| row.remove(k)).collect();
        for j in 0..x.len() {
            let diag = self.rows[k + j][k + j];
            let r = diag.hypot(x[j]);
            let (c, s) = (r / diag, x[j] / diag);
            self.rows[k + j][k + j] = r;
            for i in j + 1..x.len() {
                let lij = (self.rows[k + i][k + j] + s * x[i]) / c;
                x[i] = c * x[i] - s * lij;
                self.rows[k + i][k + j] = lij;
            }
        }
    }

    /// Solves `K y = 1`.
    fn solve_ones(&self) -> Vec<f64> {
        let m = self.rows.len();
        let mut z = vec![0.0; m];
        for i in 0..m {
            let dot: f64 = self.rows[i][..i].iter().zip(&z).map(|(a, b)| a * b).sum();
            z[i] = (1.0 - dot) / self.rows[i][i];
        }
        for i in (0..m).rev() {
            let dot: f64 = (i + 1..m).map(|k| self.rows[k][i] * z[k]).sum();
            z[i] = (z[i] - dot) / self.rows[i][i];
        }
        z
    }
}

/// Wolfe-style min-norm-point iterations. Returns `None` when the kernel is
/// not positive definite on an encountered support, the support outgrows
/// its cap, or the iteration cap is reached.
fn active_set(kernel: &dyn Kernel, options: SolverOptions) -> Option<Solution> {
    let n = kernel.len();
    // Cached support columns are bounded to about 256 MiB.
    let cap = ACTIVE_SET_MAX_SUPPORT.min(n).min((1 << 25) / n).max(1);
    let first = (0..n).min_by(|&a, &b| kernel.entry(a, a).total_cmp(&kernel.entry(b, b)))?;
    let mut support = vec![first];
    let mut weights = vec![1.0];
    let mut columns = vec![column_of(kernel, first)];
    let mut factor = Cholesky { rows: Vec::new() };
    if !factor.push(&[], columns[0][first]) {
        return None;
    }
    let mut kw = vec![0.0; n];
    for iterations in 0..options.max_iterations {
        kw.iter_mut().for_each(|v| *v = 0.0);
        for (col, &wj) in columns.iter().zip(&weights) {
            for (o, c) in kw.iter_mut().zip(col) {
                *o += wj * c;
            }
        }
        let f: f64 = support.iter().zip(&weights).map(|(&i, w)| w * kw[i]).sum();
        let (enter, low) = kw
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let gap = (2.0 * (f - low)).max(0.0);
        if gap <= options.tol * f.min(1.0) {
            let mut dense = vec![0.0; n];
            for (&i, &w) in support.iter().zip(&weights) {
                dense[i] = w;
            }
            return Some(Solution {
                weights: dense,
                objective: f,
                gap,
                iterations,
                converged: true,
            });
        }
        if support.len() >= cap || support.contains(&enter) {
            return None;
        }
        // Enter a batch of the most violated vertices; the batch grows with
        // the support so that large supports need few full gradient passes.
        let batch = (support.len() / 4).clamp(1, cap - support.len());
        let mut violated: Vec<usize> = (0..n).filter(|&i| kw[i] < f && i != enter).collect();
        if violated.len() > batch {
            violated.select_nth_unstable_by(batch - 1, |&a, &b| kw[a].total_cmp(&kw[b]));
            violated.truncate(batch - 1);
        }
        let mut entered = false;
        for candidate in std::iter::once(enter).chain(violated) {
            if support.contains(&candidate) {
                continue;
            }
            let col = column_of(kernel, candidate);
            let cross: Vec<f64> = support.iter().map(|&i| col[i]).collect();
            if factor.push(&cross, col[candidate]) {
                support.push(candidate);
                weights.push(0.0);
                columns.push(col);
                entered = true;
            } else if candidate == enter {
                return None;
            }
        }
        if !entered {
            return None;
        }
        loop {
            let y = factor.solve_ones();
            let total: f64 = y.iter().sum();
            if !(total > 0.0) {
                return None;
            }
            let affine: Vec<f64> = y.iter().map(|v| v / total).collect();
            if affine.iter().all(|&v| v > 0.0) {
                weights = affine;
                break;
            }
            // Walk toward the affine minimizer until a weight hits zero; the
            // blocking index leaves the support.
            let (drop, step) = weights
                .iter()
                .zip(&affine)
                .enumerate()
                .filter(|(_, (_, &v))| v <= 0.0)
                .map(|(i, (&w, &v))| (i, w / (w - v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("some affine weight is nonpositive");
            for (w, v) in weights.iter_mut().zip(&affine) {
                *w += step * (v - *w);
            }
            weights[drop] = 0.0;
            for k in (0..support.len()).rev() {
                // Zero weights with a positive affine coordinate are entrants
                // about to grow, so they stay.
                if weights[k] <= 1e-15 && affine[k] <= 0.0 {
                    support.remove(k);
                    weights.remove(k);
                    columns.remove(k);
                    factor.remove(k);
                }
            }
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
        }
    }
    None
}

fn column_of(kernel: &dyn Kernel, j: usize) -> Vec<f64> {
    let mut col = vec![0.0; kernel.len()];
    kernel.column(j, &mut col);
    col
}

/// `Kw` computed from the support of `w` only.
fn kernel_times(kernel: &dyn Kernel, w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut out = vec![0.0; n];
    let mut col = vec![0.0; n];
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            kernel.column(j, &mut col);
            for (o, c) in out.iter_mut().zip(&col) {
                *o += wj * c;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn certificate(kernel: &dyn Kernel, w: &[f64]) -> (f64, f64, Vec<f64>) {
    let kw = kernel_times(kernel, w);
    let f = dot(w, &kw);
    let min = kw.iter().copied().fold(f64::INFINITY, f64::min);
    ((2.0 * (f - min)).max(0.0), f, kw)
}

fn away_step(kernel: &dyn Kernel, mut w: Vec<f64>, options: SolverOptions) -> Solution {
    let n = w.len();
    let mut kw = kernel_times(kernel, &w);
    let mut f = dot(&w, &kw);
    let mut col = vec![0.0; n];
    let mut iterations = 0;
    loop {
        let (fw, fw_val) = kw
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let gap = 2.0 * (f - fw_val);
        if gap <= options.tol * f.min(1.0) || iterations >= options.max_iterations {
            // Confirm with an exact recomputation before accepting.
            let (exact_gap, exact_f, exact_kw) = certificate(kernel, &w);
            let converged = exact_gap <= options.tol * exact_f.min(1.0);
            if converged || iterations >= options.max_iterations {
                return Solution {
                    weights: w,
                    objective: exact_f,
                    gap: exact_gap,
                    iterations,
                    converged,
                };
            }
            kw = exact_kw;
            f = exact_f;
            continue;
        }
        iterations += 1;
        let (away, away_val) = kw
            .iter()
            .zip(&w)
            .enumerate()
            .filter(|(_, (_, &wi))| wi > 0.0)
            .fold((usize::MAX, f64::NEG_INFINITY), |acc, (i, (&v, _))| if v > acc.1 { (i, v) } else { acc });
        let toward = fw_val - f < f - away_val || away == usize::MAX || w[away] >= 1.0;
        if toward {
            // d = e_fw - w, step in [0, 1].
            kernel.column(fw, &mut col);
            let slope = fw_val - f;
            let curvature = col[fw] - 2.0 * fw_val + f;
            let step = line_step(slope, curvature, 1.0);
            for i in 0..n {
                w[i] *= 1.0 - step;
                kw[i] = (1.0 - step) * kw[i] + step * col[i];
            }
            w[fw] += step;
            f += 2.0 * step * slope + step * step * curvature;
        } else {
            // d = w - e_away, step in [0, w_a / (1 - w_a)].
            kernel.column(away, &mut col);
            let max_step = w[away] / (1.0 - w[away]);
            let slope = f - away_val;
            let curvature = f - 2.0 * away_val + col[away];
            let step = line_step(slope, curvature, max_step);
            for i in 0..n {
                w[i] *= 1.0 + step;
                kw[i] = (1.0 + step) * kw[i] - step * col[i];
            }
            w[away] -= step;
            if step >= max_step || w[away] < 0.0 {
                w[away] = 0.0;
            }
            f += 2.0 * step * slope + step * step * curvature;
        }
    }
}

/// Tournament tree over `n` values answering arg-min (or arg-max) queries
/// with `O(log n)` point updates.
struct ArgTree {
    size: usize,
    best: Vec<(f64, usize)>,
    want_min: bool,
}

impl ArgTree {
    fn new(values: &[f64], want_min: bool) -> Self {
        let size = values.len().next_power_of_two();
        let worst = if want_min { f64::INFINITY } else { f64::NEG_INFINITY };
        let mut best = vec![(worst, usize::MAX); 2 * size];
        for (i, &v) in values.iter().enumerate() {
            best[size + i] = (v, i);
        }
        let mut tree = ArgTree { size, best, want_min };
        for node in (1..size).rev() {
            tree.best[node] = tree.pick(tree.best[2 * node], tree.best[2 * node + 1]);
        }
        tree
    }

    fn pick(&self, a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
        let a_wins = if self.want_min { a.0 <= b.0 } else { a.0 >= b.0 };
        if a_wins {
            a
        } else {
            b
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut node = self.size + i;
        self.best[node] = (value, i);
        while node > 1 {
            node /= 2;
            self.best[node] = self.pick(self.best[2 * node], self.best[2 * node + 1]);
        }
    }

    fn top(&self) -> (f64, usize) {
        self.best[1]
    }
}

/// Away-step iterations for kernels with sparse columns. Weights and `Kw`
/// are stored up to a shared scale factor so that a step touches only the
/// entered column, and arg-min/arg-max lookups go through tournament trees.
/// Returns `None` when the kernel does not expose sparse columns.
fn away_step_sparse(kernel: &dyn Kernel, options: SolverOptions) -> Option<Solution> {
    let n = kernel.len();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    if !kernel.sparse_column(0, &mut rows, &mut values) {
        return None;
    }
    // w = scale·u and Kw = scale·v.
    let mut scale = 1.0;
    let mut u = vec![1.0 / n as f64; n];
    let mut v = sparse_times(kernel, &u, &mut rows, &mut values);
    let mut f = dot(&u, &v);
    let masked = |u: &[f64], v: &[f64]| -> Vec<f64> {
        u.iter().zip(v).map(|(&ui, &vi)| if ui > 0.0 { vi } else { f64::NEG_INFINITY }).collect()
    };
    let mut low = ArgTree::new(&v, true);
    let mut high = ArgTree::new(&masked(&u, &v), false);
    let mut iterations = 0;
    let mut stalls = 0;
    let mut force_check = false;
    loop {
        let (v_fw, fw) = low.top();
        let fw_val = scale * v_fw;
        let gap = 2.0 * (f - fw_val);
        if gap <= options.tol * f.min(1.0) || iterations >= options.max_iterations || force_check {
            force_check = false;
            let w: Vec<f64> = u.iter().map(|x| x * scale).collect();
            let kw = sparse_times(kernel, &w, &mut rows, &mut values);
            let exact_f = dot(&w, &kw);
            let exact_gap = (2.0 * (exact_f - kw.iter().copied().fold(f64::INFINITY, f64::min))).max(0.0);
            let converged = exact_gap <= options.tol * exact_f.min(1.0);
            if converged || iterations >= options.max_iterations || stalls >= 2 {
                return Some(Solution {
                    weights: w,
                    objective: exact_f,
                    gap: exact_gap,
                    iterations,
                    converged,
                });
            }
            scale = 1.0;
            u = w;
            v = kw;
            f = exact_f;
            low = ArgTree::new(&v, true);
            high = ArgTree::new(&masked(&u, &v), false);
            continue;
        }
        iterations += 1;
        let (v_away, away) = high.top();
        let away_val = scale * v_away;
        let away_weight = scale * u[away];
        let toward = fw_val - f < f - away_val || away_weight >= 1.0 - 1e-15;
        let (vertex, sign, step) = if toward {
            kernel.sparse_column(fw, &mut rows, &mut values);
            let diag = rows.iter().zip(&values).find(|(&i, _)| i == fw).map_or(0.0, |(_, &k)| k);
            let slope = fw_val - f;
            let curvature = diag - 2.0 * fw_val + f;
            let step = line_step(slope, curvature, 1.0);
            f += 2.0 * step * slope + step * step * curvature;
            (fw, 1.0, step)
        } else {
            kernel.sparse_column(away, &mut rows, &mut values);
            let diag = rows.iter().zip(&values).find(|(&i, _)| i == away).map_or(0.0, |(_, &k)| k);
            let max_step = away_weight / (1.0 - away_weight);
            let slope = f - away_val;
            let curvature = f - 2.0 * away_val + diag;
            let step = line_step(slope, curvature, max_step);
            f += 2.0 * step * slope + step * step * curvature;
            (away, -1.0, step.min(max_step))
        };
        if step == 0.0 {
            // No descent along the chosen direction: the tracked objective has
            // drifted, so recompute exactly; twice in a row means stalled.
            stalls += 1;
            force_check = true;
            continue;
        }
        stalls = 0;
        if toward && step >= 1.0 {
            u.iter_mut().for_each(|x| *x = 0.0);
            u[fw] = 1.0;
            scale = 1.0;
            v.iter_mut().for_each(|x| *x = 0.0);
            for (&i, &k) in rows.iter().zip(&values) {
                v[i] = k;
            }
            low = ArgTree::new(&v, true);
            high = ArgTree::new(&masked(&u, &v), false);
            continue;
        }
        // Toward: w <- (1-γ)w + γe. Away: w <- (1+γ)w - γe.
        scale *= 1.0 - sign * step;
        let delta = sign * step / scale;
        u[vertex] += delta;
        if !toward && (step >= away_weight / (1.0 - away_weight) || u[vertex] <= 0.0) {
            u[vertex] = 0.0;
        }
        for (&i, &k) in rows.iter().zip(&values) {
            v[i] += delta * k;
            low.set(i, v[i]);
            high.set(i, if u[i] > 0.0 { v[i] } else { f64::NEG_INFINITY });
        }
        high.set(vertex, if u[vertex] > 0.0 { v[vertex] } else { f64::NEG_INFINITY });
        if !(1e-150..=1e150).contains(&scale) {
            u.iter_mut().for_each(|x| *x *= scale);
            v.iter_mut().for_each(|x| *x *= scale);
            scale = 1.0;
            low = ArgTree::new(&v, true);
            high = ArgTree::new(&masked(&u, &v), false);
        }
    }
}

fn sparse_times(kernel: &dyn Kernel, w: &[f64], rows: &mut Vec<usize>, values: &mut Vec<f64>) -> Vec<f64> {
    let mut out = vec![0.0; w.len()];
    for (j, &wj) in w.iter().enumerate() {
        if wj > 0.0 {
            kernel.sparse_column(j, rows, values);
            for (&i, &k) in rows.iter().zip(values.iter()) {
                out[i] += wj * k;
            }
        }
    }
    out
}

/// Minimizer of `2γ·slope + γ²·curvature` on `[0, max_step]`.
fn line_step(slope: f64, curvature: f64, max_step: f64) -> f64 {
    if curvature > 0.0 {
        (-slope / curvature).clamp(0.0, max_step)
    } else {
        // Concave or flat along the segment: the better endpoint wins.
        let end = 2.0 * max_step * slope + max_step * max_step * curvature;
        if end < 0.0 {
            max_step
        } else {
            0.0
        }
    }
}

/// Dense brute-force oracle for tests: enumerates supports and solves the
/// KKT system `K_SS w = λ 1` on each. Exponential in `n`; keep `n <= 12`.
pub fn brute_force_minimum(kernel: &dyn Kernel) -> f64 {
    let n = kernel.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let m = idx.len();
        let mut a = vec![vec![0.0; m + 1]; m];
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                a[r][c] = kernel.entry(i, j);
            }
            a[r][m] = 1.0;
        }
        if let Some(x) = gauss_solve(a) {
            let total: f64 = x.iter().sum();
            if total.abs() < 1e-14 {
                continue;
            }
            let w: Vec<f64> = x.iter().map(|v| v / total).collect();
            if w.iter().any(|&v| v < -1e-12) {
                continue;
            }
            let mut f = 0.0;
            for (r, &i) in idx.iter().enumerate() {
                for (c, &j) in idx.iter().enumerate() {
                    f += w[r] * w[c] * kernel.entry(i, j);
                }
            }
            best = best.min(f);
        }
    }
    // Vertices are always feasible candidates.
    for i in 0..n {
        best = best.min(kernel.entry(i, i));
    }
    best
}

fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let m = a.len();
    for c in 0..m {
        let pivot = (c..m).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[pivot][c].abs() < 1e-13 {
            return None;
        }
        a.swap(c, pivot);
        for r in 0..m {
            if r != c {
                let factor = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= factor * a[c][k];
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
}
