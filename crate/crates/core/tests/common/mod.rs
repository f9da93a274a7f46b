//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus, ZeroConeT};
use nalgebra::{DMatrix, DVector};

/// Cell averages of `1/2 e^{-|x|}` over `[(j - 1/2) dx, (j + 1/2) dx]`.
pub fn kappa_cell_average(j: isize, dx: f64) -> f64 {
    if j == 0 {
        (1.0 - (-dx / 2.0).exp()) / dx
    } else {
        (-(j.unsigned_abs() as f64) * dx).exp() * (dx / 2.0).sinh() / dx
    }
}

/// The discretized bilayer problem with `f(v) = v^2` as an explicit quadratic
/// program: minimize `u^T Q u + c^T u` subject to `dx sum u = 1` and `G u <= h`.
pub struct SmallQp {
    pub n: usize,
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub g: Vec<(Vec<(usize, f64)>, f64)>,
    pub dx: f64,
}

impl SmallQp {
    pub fn new(n: usize, m: usize, dx: f64, alpha: f64) -> Self {
        let mut q = DMatrix::zeros(n, n);
        for i in 0..n {
            for k in 0..n {
                let kap = kappa_cell_average(i as isize - k as isize, dx);
                q[(i, k)] = -alpha * kap * dx * dx;
            }
            q[(i, i)] += dx;
        }
        let mut g = Vec::new();
        for i in 0..n {
            g.push((vec![(i, -1.0)], 0.0));
        }
        for i in 0..n {
            if i < m || i + m >= n {
                g.push((vec![(i, 1.0)], 1.0));
            }
        }
        for i in m..n {
            g.push((vec![(i, 1.0), (i - m, 1.0)], 1.0));
        }
        Self {
            n,
            q,
            c: vec![0.0; n],
            g,
            dx,
        }
    }

    /// Discrete L^2 projection of `y` onto the same constraint set:
    /// `dx |u - y|^2` up to a constant.
    pub fn projection(y: &[f64], m: usize, dx: f64) -> Self {
        let mut qp = Self::new(y.len(), m, dx, 0.0);
        qp.c = y.iter().map(|v| -2.0 * dx * v).collect();
        qp
    }

    pub fn energy(&self, u: &[f64]) -> f64 {
        let v = DVector::from_column_slice(u);
        (v.transpose() * &self.q * &v)[(0, 0)] + u.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>()
    }

    fn feasible(&self, u: &[f64]) -> bool {
        let mass: f64 = u.iter().sum::<f64>() * self.dx;
        if (mass - 1.0).abs() > 1e-9 {
            return false;
        }
        self.g
            .iter()
            .all(|(row, b)| row.iter().map(|(i, c)| c * u[*i]).sum::<f64>() <= b + 1e-9)
    }

    /// Global minimum by enumerating every active set of at most `n - 1`
    /// inequalities and solving the equality-constrained stationarity system.
    pub fn brute_force(&self) -> (f64, Vec<f64>) {
        let n = self.n;
        let total = self.g.len();
        let mut best = (f64::INFINITY, Vec::new());
        let mut chosen: Vec<usize> = Vec::new();
        self.enumerate(0, total, &mut chosen, &mut best);
        assert!(best.0.is_finite(), "no feasible stationary point among {n} cells");
        best
    }

    fn enumerate(&self, start: usize, total: usize, chosen: &mut Vec<usize>, best: &mut (f64, Vec<f64>)) {
        self.try_face(chosen, best);
        if chosen.len() == self.n - 1 {
            return;
        }
        for c in start..total {
            chosen.push(c);
            self.enumerate(c + 1, total, chosen, best);
            chosen.pop();
        }
    }

    fn try_face(&self, active: &[usize], best: &mut (f64, Vec<f64>)) {
        let n = self.n;
        let k = 1 + active.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = 2.0 * self.q[(i, j)];
            }
            kkt[(n, i)] = self.dx;
            kkt[(i, n)] = self.dx;
        }
        rhs[n] = 1.0;
        for i in 0..n {
            rhs[i] = -self.c[i];
        }
        for (r, &c) in active.iter().enumerate() {
            let (row, b) = &self.g[c];
            for (i, coef) in row {
                kkt[(n + 1 + r, *i)] = *coef;
                kkt[(*i, n + 1 + r)] = *coef;
            }
            rhs[n + 1 + r] = *b;
        }
        let lu = kkt.lu();
        let Some(sol) = lu.solve(&rhs) else { return };
        let u: Vec<f64> = sol.iter().take(n).copied().collect();
        if u.iter().any(|v| !v.is_finite()) || !self.feasible(&u) {
            return;
        }
        let e = self.energy(&u);
        if e < best.0 {
            *best = (e, u);
        }
    }

    /// Interior-point solution of the (convex) program.
    pub fn interior_point(&self) -> (f64, Vec<f64>) {
        let n = self.n;
        let mut p_cols = vec![Vec::new(); n];
        for (j, col) in p_cols.iter_mut().enumerate() {
            for i in 0..=j {
                let v = 2.0 * self.q[(i, j)];
                if v != 0.0 {
                    col.push((i, v));
                }
            }
        }
        let p = csc(n, n, &p_cols);
        let mut a_cols = vec![Vec::new(); n];
        for col in a_cols.iter_mut() {
            col.push((0, self.dx));
        }
        for (r, (row, _)) in self.g.iter().enumerate() {
            for (i, c) in row {
                a_cols[*i].push((r + 1, *c));
            }
        }
        let a = csc(1 + self.g.len(), n, &a_cols);
        let mut b = vec![1.0];
        b.extend(self.g.iter().map(|(_, h)| *h));
        let cones = [ZeroConeT(1), NonnegativeConeT(self.g.len())];
        let settings = DefaultSettings {
            verbose: false,
            tol_gap_abs: 1e-12,
            tol_gap_rel: 1e-12,
            tol_feas: 1e-12,
            ..DefaultSettings::default()
        };
        let q = self.c.clone();
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings).unwrap();
        solver.solve();
        assert!(
            matches!(
                solver.solution.status,
                SolverStatus::Solved | SolverStatus::AlmostSolved
            ),
            "interior point status {:?}",
            solver.solution.status
        );
        let u = solver.solution.x.clone();
        (self.energy(&u), u)
    }
}

fn csc(m: usize, n: usize, cols: &[Vec<(usize, f64)>]) -> CscMatrix<f64> {
    let mut colptr = vec![0];
    let mut rowval = Vec::new();
    let mut nzval = Vec::new();
    for col in cols.iter().take(n) {
        let mut c = col.clone();
        c.sort_by_key(|e| e.0);
        for (r, v) in c {
            rowval.push(r);
            nzval.push(v);
        }
        colptr.push(rowval.len());
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
