//! One-dimensional bilayer model: minimize
//! `F(u) = int f(u) - alpha int u (kappa * u)` over densities with unit mass,
//! `u >= 0` and `u + u(. - h) <= 1`, then certify regularity of the minimizer
//! by comparing it with its own mollifications.
//!
//! The grid is cell-centered on `[0, L]` (`x_i = (i + 1/2) dx`), functions are
//! zero-extended, and `h` must be a whole number `m` of cells.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Error, Result};
use crate::field::{convolve_with, l2_norm_sq, Boundary, GridFunction, Stencil};
use crate::gap::{
    check_ladder, classify_with, fit_ladder, gap_between, halving_ladder, Classification, DecayFit, FitOptions,
    Integrand,
};
use crate::kernel::{fmt17, Kernel, DEFAULT_TOLERANCE};

/// Tail bound used to truncate the attraction kernel.
pub const KAPPA_TAIL: f64 = 1e-12;

/// Feasibility slack used by the certificate and the solver checks.
pub const MASS_SLACK: f64 = 1e-8;
pub const MIN_SLACK: f64 = 1e-10;
pub const PAIR_SLACK: f64 = 1e-8;

/// Allowed energy increase under mollification before a solution is rejected.
pub const MINIMALITY_SLACK: f64 = 1e-10;

/// Energy increase per accepted step tolerated as rounding noise.
pub const ROUNDING_SLACK: f64 = 1e-13;

/// Largest allowed max/min spread of the nonlocal ratios.
pub const RATIO_SPREAD_LIMIT: f64 = 4.0;

/// `u -> kappa * u` on the grid, as a linear (non-periodic) convolution
/// evaluated by FFT.
#[derive(Clone)]
pub struct KappaOperator {
    n: usize,
    len: usize,
    spectrum: Vec<Complex<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    dx: f64,
    mass: f64,
}

impl std::fmt::Debug for KappaOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KappaOperator")
            .field("n", &self.n)
            .field("fft_len", &self.len)
            .field("mass", &self.mass)
            .finish()
    }
}

impl KappaOperator {
    /// Raw (not renormalized) cell-averaged weights of `kappa`, truncated to
    /// offsets below `n`.
    pub fn new(kappa: &Kernel, n: usize, dx: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("empty grid"));
        }
        let stencil = Stencil::for_kernel_capped(kappa, dx, false, n - 1)?;
        let half = stencil.half_width();
        let len = (n + 2 * half).next_power_of_two();
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        // weight for offset j sits at index j mod len
        for (t, w) in stencil.weights().iter().enumerate() {
            let j = t as isize - half as isize;
            buf[j.rem_euclid(len as isize) as usize] = Complex::new(w * dx, 0.0);
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        forward.process(&mut buf);
        Ok(Self {
            n,
            len,
            spectrum: buf,
            forward,
            inverse,
            dx,
            mass: stencil.mass(),
        })
    }

    /// `sum_j kappa_j dx` of the truncated weights.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        debug_assert_eq!(u.len(), self.n);
        let mut buf = vec![Complex::new(0.0, 0.0); self.len];
        for (b, &v) in buf.iter_mut().zip(u) {
            b.re = v;
        }
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        buf[..self.n].iter().map(|c| c.re * scale).collect()
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }
}

/// Numerical regularity data of an attraction kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaRegularity {
    pub l1: f64,
    pub derivative_l1: f64,
    pub derivative_variation: f64,
    pub min_value: f64,
}

/// `int |kappa|`, `int |kappa'|` and the total variation of `kappa'`
/// from samples on `[-R, R]`.
pub fn kappa_regularity(kappa: &Kernel) -> KappaRegularity {
    let r = kappa.support_radius();
    let n = 1 << 16;
    let step = 2.0 * r / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| -r + i as f64 * step).collect();
    let vals: Vec<f64> = xs.iter().map(|&x| kappa.eval(&[x])).collect();
    let l1 = vals.iter().map(|v| v.abs()).sum::<f64>() * step;
    let der: Vec<f64> = vals.windows(2).map(|w| (w[1] - w[0]) / step).collect();
    let derivative_l1 = der.iter().map(|d| d.abs()).sum::<f64>() * step;
    let derivative_variation = der.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let min_value = vals.iter().copied().fold(f64::INFINITY, f64::min);
    KappaRegularity {
        l1,
        derivative_l1,
        derivative_variation,
        min_value,
    }
}

/// A discretized instance of the bilayer problem.
#[derive(Debug, Clone)]
pub struct BilayerProblem {
    alpha: f64,
    h: f64,
    length: f64,
    dx: f64,
    n: usize,
    m: usize,
    f: Integrand,
    kappa: Kernel,
    op: KappaOperator,
}

impl BilayerProblem {
    /// Problem with the default attraction kernel `1/2 e^{-|x|}`.
    pub fn new(alpha: f64, h: f64, length: f64, dx: f64, f: Integrand) -> Result<Self> {
        Self::with_kappa(alpha, h, length, dx, f, Kernel::exponential_attraction(KAPPA_TAIL)?)
    }

    pub fn with_kappa(alpha: f64, h: f64, length: f64, dx: f64, f: Integrand, kappa: Kernel) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(format!("rod length h must be positive, got {h}")));
        }
        if !(length >= 4.0 && length.is_finite()) {
            return Err(invalid(format!("domain length must be at least 4, got {length}")));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(invalid("grid spacing must be positive"));
        }
        if kappa.dim() != 1 {
            return Err(invalid("attraction kernel must be one-dimensional"));
        }
        let m_real = h / dx;
        let m = m_real.round();
        if m < 1.0 || (m_real - m).abs() > 1e-9 * m_real.max(1.0) {
            return Err(invalid(format!("h / dx = {m_real} must be a positive integer")));
        }
        let n_real = length / dx;
        let n = n_real.round();
        if (n_real - n).abs() > 1e-9 * n_real {
            return Err(invalid(format!("L / dx = {n_real} must be an integer")));
        }
        let (lo, hi) = f.range();
        if lo > 0.0 || hi < 1.0 {
            return Err(invalid(format!("integrand {} is not certified on [0, 1]", f.name())));
        }
        let reg = kappa_regularity(&kappa);
        if reg.min_value < 0.0 {
            return Err(invalid("attraction kernel must be non-negative"));
        }
        if !(reg.l1.is_finite() && reg.derivative_l1.is_finite() && reg.derivative_variation.is_finite()) {
            return Err(invalid(
                "attraction kernel must lie in W^{1,1} with kappa' of bounded variation",
            ));
        }
        let n = n as usize;
        let op = KappaOperator::new(&kappa, n, dx)?;
        Ok(Self {
            alpha,
            h,
            length,
            dx,
            n,
            m: m as usize,
            f,
            kappa,
            op,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn rod_length(&self) -> f64 {
        self.h
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn spacing(&self) -> f64 {
        self.dx
    }
    pub fn cells(&self) -> usize {
        self.n
    }
    /// `h / dx`
    pub fn shift(&self) -> usize {
        self.m
    }
    pub fn integrand(&self) -> &Integrand {
        &self.f
    }
    pub fn kappa(&self) -> &Kernel {
        &self.kappa
    }
    pub fn kappa_operator(&self) -> &KappaOperator {
        &self.op
    }

    /// Same physics on a domain of a different length.
    pub fn resized(&self, length: f64) -> Result<Self> {
        Self::with_kappa(self.alpha, self.h, length, self.dx, self.f.clone(), self.kappa.clone())
    }

    /// Cell-centered grid function on this problem's grid.
    pub fn grid(&self, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != self.n {
            return Err(Error::GridMismatch(format!(
                "expected {} cells, got {}",
                self.n,
                values.len()
            )));
        }
        GridFunction::new(vec![0.5 * self.dx], self.dx, vec![self.n], values)
    }

    fn check_grid(&self, u: &GridFunction) -> Result<()> {
        let ok = u.dim() == 1
            && u.len() == self.n
            && (u.spacing() - self.dx).abs() <= 1e-12 * self.dx
            && (u.origin()[0] - 0.5 * self.dx).abs() <= 1e-12 * self.dx;
        if ok {
            Ok(())
        } else {
            Err(Error::GridMismatch("function is not on the problem grid".into()))
        }
    }

    fn energy_raw(&self, u: &[f64]) -> f64 {
        let local: f64 = u.iter().map(|&v| self.f.f(v)).sum();
        let nonlocal = if self.alpha == 0.0 {
            0.0
        } else {
            let ku = self.op.apply(u);
            u.iter().zip(&ku).map(|(a, b)| a * b).sum()
        };
        (local - self.alpha * nonlocal) * self.dx
    }

    fn gradient_raw(&self, u: &[f64]) -> Vec<f64> {
        if self.alpha == 0.0 {
            return u.iter().map(|&v| self.f.f1(v)).collect();
        }
        let ku = self.op.apply(u);
        u.iter()
            .zip(&ku)
            .map(|(&v, k)| self.f.f1(v) - 2.0 * self.alpha * k)
            .collect()
    }

    /// `int u (kappa * u)`
    pub fn interaction(&self, u: &GridFunction) -> Result<f64> {
        self.check_grid(u)?;
        let ku = self.op.apply(u.values());
        Ok(u.values().iter().zip(&ku).map(|(a, b)| a * b).sum::<f64>() * self.dx)
    }

    /// Initial feasible plateau of width `max(2h, 2)` centered at `L/2`.
    pub fn initial_guess(&self) -> Result<GridFunction> {
        let width = (2.0 * self.h).max(2.0);
        let k = ((width / self.dx).round() as usize).min(self.n);
        let start = (self.n - k) / 2;
        let height = (1.0 / (k as f64 * self.dx)).min(0.5);
        let mut v = vec![0.0; self.n];
        for x in &mut v[start..start + k] {
            *x = height;
        }
        self.grid(v)
    }
}

/// `F(u) = int f(u) - alpha int u (kappa * u)`.
pub fn energy(u: &GridFunction, p: &BilayerProblem) -> Result<f64> {
    p.check_grid(u)?;
    Ok(p.energy_raw(u.values()))
}

/// `F'(u) = f'(u) - 2 alpha kappa * u`.
pub fn energy_gradient(u: &GridFunction, p: &BilayerProblem) -> Result<GridFunction> {
    p.check_grid(u)?;
    u.with_values(p.gradient_raw(u.values()))
}

/// Constraint residuals of a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feasibility {
    /// `|sum u dx - 1|`
    pub mass: f64,
    pub min: f64,
    /// `max (u + tau_h u)` with zero extension.
    pub pair_max: f64,
}

impl Feasibility {
    pub fn of(u: &[f64], m: usize, dx: f64) -> Self {
        let mass = (u.iter().sum::<f64>() * dx - 1.0).abs();
        let min = u.iter().copied().fold(f64::INFINITY, f64::min);
        let n = u.len();
        let mut pair_max = f64::NEG_INFINITY;
        for i in 0..n + m {
            let a = if i < n { u[i] } else { 0.0 };
            let b = if i >= m && i - m < n { u[i - m] } else { 0.0 };
            pair_max = pair_max.max(a + b);
        }
        Self { mass, min, pair_max }
    }

    pub fn is_feasible(&self) -> bool {
        self.mass <= MASS_SLACK && self.min >= -MIN_SLACK && self.pair_max <= 1.0 + PAIR_SLACK
    }
}

/// Projection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_sweeps: 100_000,
        }
    }
}

struct Projected {
    values: Vec<f64>,
    sweeps: usize,
    converged: bool,
    last_step: f64,
}

/// Dual corrections of the pair half-spaces (indexed by the later cell) and
/// of the box.
struct Corrections {
    pair: Vec<f64>,
    boxed: Vec<f64>,
}

/// Dykstra's scheme over every pair half-space `u_i + u_{i-m} <= 1` and the
/// box `[0, 1]^N`, warm-started from `corr`. Returns the point, the sweep
/// count and the last sweep's movement.
fn dykstra(
    z: &[f64],
    m: usize,
    dx: f64,
    corr: &mut Corrections,
    tol: f64,
    max_sweeps: usize,
) -> (Vec<f64>, usize, f64) {
    let n = z.len();
    let mut x = z.to_vec();
    for i in m..n {
        x[i] -= corr.pair[i];
        x[i - m] -= corr.pair[i];
    }
    for (v, q) in x.iter_mut().zip(&corr.boxed) {
        *v -= q;
    }
    let mut last_step = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        // squared movement of every sub-projection in this sweep
        let mut moved = 0.0;
        for i in m..n {
            let c = corr.pair[i];
            let a = x[i] + c;
            let b = x[i - m] + c;
            let s = a + b;
            let d = if s > 1.0 { 0.5 * (s - 1.0) } else { 0.0 };
            let step = c - d;
            moved += 2.0 * step * step;
            x[i] = a - d;
            x[i - m] = b - d;
            corr.pair[i] = d;
        }
        for (v, q) in x.iter_mut().zip(corr.boxed.iter_mut()) {
            let t = *v + *q;
            let c = t.clamp(0.0, 1.0);
            moved += (c - *v) * (c - *v);
            *q = t - c;
            *v = c;
        }
        last_step = (moved * dx).sqrt();
        if last_step <= tol {
            return (x, sweep, last_step);
        }
    }
    (x, max_sweeps, last_step)
}

/// Mass residual below which the multiplier search stops.
const MASS_TOL: f64 = 1e-13;

/// Projection onto K. The mass constraint is handled by its multiplier:
/// `P_K(y) = P_C(y + lambda)` with C the box and pair constraints, and the
/// mass of `P_C(y + lambda)` is nondecreasing in lambda, so lambda is found by
/// a bracketed Illinois search. Each `P_C` is a Dykstra run warm-started from
/// the previous one.
fn project_raw(y: &[f64], m: usize, dx: f64, opts: &ProjectionOptions) -> Projected {
    let n = y.len();
    let mut corr = Corrections {
        pair: vec![0.0; n],
        boxed: vec![0.0; n],
    };
    let inner_tol = 1e-2 * opts.tol;
    let mut sweeps = 0;
    let mut last_step = 0.0;
    let mut eval = |lam: f64, corr: &mut Corrections| {
        let z: Vec<f64> = y.iter().map(|v| v + lam).collect();
        let (x, k, step) = dykstra(
            &z,
            m,
            dx,
            corr,
            inner_tol,
            opts.max_sweeps.saturating_sub(sweeps).max(1),
        );
        sweeps += k;
        last_step = step;
        let g = x.iter().sum::<f64>() * dx - 1.0;
        (x, g, step <= inner_tol)
    };

    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut done = ymin.is_finite() && ymax.is_finite();
    // at lo every entry of y + lo is below -1, so P_C is 0 and the mass is 0
    let mut lo = -ymax - 1.0;
    let mut glo = -1.0;
    let mut hi = 2.0 - ymin;
    let mut x = y.to_vec();
    let mut ghi = -1.0;
    let mut ok = done;
    for _ in 0..60 {
        if !ok {
            break;
        }
        (x, ghi, ok) = eval(hi, &mut corr);
        if ghi >= 0.0 {
            break;
        }
        let width = hi - lo;
        lo = hi;
        glo = ghi;
        hi += 2.0 * width;
    }
    ok &= ghi >= 0.0;
    done = !ok || ghi <= MASS_TOL;
    let mut side = 0;
    for _ in 0..200 {
        if done {
            break;
        }
        let mut c = (lo * ghi - hi * glo) / (ghi - glo);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
        }
        let gc;
        (x, gc, ok) = eval(c, &mut corr);
        done = !ok || gc.abs() <= MASS_TOL || hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0);
        if gc < 0.0 {
            lo = c;
            glo = gc;
            if side == -1 {
                ghi *= 0.5;
            }
            side = -1;
        } else {
            hi = c;
            ghi = gc;
            if side == 1 {
                glo *= 0.5;
            }
            side = 1;
        }
    }
    let mass_ok = (x.iter().sum::<f64>() * dx - 1.0).abs() <= MASS_SLACK;
    Projected {
        values: x,
        sweeps,
        converged: ok && mass_ok,
        last_step,
    }
}

/// Euclidean projection onto the discrete constraint set with default options.
pub fn project_k(u: &GridFunction, p: &BilayerProblem, tol: f64) -> Result<GridFunction> {
    project_k_with(
        u,
        p,
        &ProjectionOptions {
            tol,
            ..ProjectionOptions::default()
        },
    )
}

pub fn project_k_with(u: &GridFunction, p: &BilayerProblem, opts: &ProjectionOptions) -> Result<GridFunction> {
    p.check_grid(u)?;
    let r = project_raw(u.values(), p.m, p.dx, opts);
    if !r.converged {
        let feas = Feasibility::of(&r.values, p.m, p.dx);
        return Err(Error::NonConvergence {
            iterations: r.sweeps,
            detail: format!(
                "projection step {:e}; mass residual {:e}, min {:e}, max pair {:e}",
                r.last_step, feas.mass, feas.min, feas.pair_max
            ),
        });
    }
    u.with_values(r.values)
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Stop when `||u - P(u - s0 F'(u))|| <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    pub projection: ProjectionOptions,
    /// Sufficient-decrease constant of the backtracking line search.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50_000,
            projection: ProjectionOptions::default(),
            armijo: 1e-4,
            max_backtracks: 40,
        }
    }
}

/// Result of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct BilayerSolution {
    pub u: GridFunction,
    pub energy: f64,
    pub feasibility: Feasibility,
    /// Energy of every accepted iterate, starting with the initial guess.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Final value of `||u - P(u - s0 F'(u))||`.
    pub stationarity: f64,
}

impl BilayerSolution {
    /// Wraps an arbitrary profile (e.g. read from disk) for certification.
    pub fn from_profile(u: GridFunction, p: &BilayerProblem) -> Result<Self> {
        p.check_grid(&u)?;
        let energy = p.energy_raw(u.values());
        let feasibility = Feasibility::of(u.values(), p.m, p.dx);
        Ok(Self {
            u,
            energy,
            feasibility,
            history: vec![energy],
            iterations: 0,
            converged: false,
            stationarity: f64::NAN,
        })
    }

    /// Summary comment block appended to `solution.dat`.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# energy = {}", fmt17(self.energy));
        let _ = writeln!(out, "# mass_residual = {}", fmt17(self.feasibility.mass));
        let _ = writeln!(out, "# min = {}", fmt17(self.feasibility.min));
        let _ = writeln!(out, "# pair_max = {}", fmt17(self.feasibility.pair_max));
        let _ = writeln!(out, "# iterations = {}", self.iterations);
        let _ = writeln!(out, "# converged = {}", self.converged);
        let _ = writeln!(out, "# stationarity = {}", fmt17(self.stationarity));
        out
    }
}

/// Projected gradient descent from the default plateau.
pub fn minimize(p: &BilayerProblem, opts: &SolveOptions) -> Result<BilayerSolution> {
    let start = p.initial_guess()?;
    minimize_from(p, &start, opts)
}

/// Projected gradient descent from `start` (projected first).
pub fn minimize_from(p: &BilayerProblem, start: &GridFunction, opts: &SolveOptions) -> Result<BilayerSolution> {
    p.check_grid(start)?;
    if !(opts.tol > 0.0) {
        return Err(invalid("solver tolerance must be positive"));
    }
    let dx = p.dx;
    let project = |y: &[f64]| -> Result<Vec<f64>> {
        let r = project_raw(y, p.m, dx, &opts.projection);
        if !r.converged {
            return Err(Error::NonConvergence {
                iterations: r.sweeps,
                detail: format!("projection stalled at step {:e}", r.last_step),
            });
        }
        Ok(r.values)
    };
    let dist =
        |a: &[f64], b: &[f64]| -> f64 { (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * dx).sqrt() };
    let s0 = 1.0 / (p.f.f2_sup() + 2.0 * p.alpha * p.op.mass());
    let mut u = project(start.values())?;
    let mut fu = p.energy_raw(&u);
    let mut history = vec![fu];
    let mut iterations = 0;
    let mut converged = false;
    let mut stationarity = f64::INFINITY;
    while iterations < opts.max_iter {
        let g = p.gradient_raw(&u);
        let trial = |s: f64| -> Result<Vec<f64>> {
            let y: Vec<f64> = u.iter().zip(&g).map(|(v, d)| v - s * d).collect();
            project(&y)
        };
        let first = trial(s0)?;
        stationarity = dist(&u, &first);
        if stationarity <= opts.tol {
            converged = true;
            break;
        }
        let mut s = s0;
        let mut cand = first;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let fc = p.energy_raw(&cand);
            let slope: f64 = g
                .iter()
                .zip(cand.iter().zip(&u))
                .map(|(d, (c, v))| d * (c - v))
                .sum::<f64>()
                * dx;
            let slack = ROUNDING_SLACK * fu.abs().max(1.0);
            if fc <= fu + opts.armijo * slope + slack && fc <= fu + slack {
                accepted = Some((cand, fc));
                break;
            }
            s *= 0.5;
            cand = trial(s)?;
        }
        let Some((next, fnext)) = accepted else {
            break;
        };
        if next.iter().any(|v| v.abs() > 1.0 + PAIR_SLACK) {
            return Err(Error::Infeasible("iterate left the unit ball in sup norm".into()));
        }
        u = next;
        fu = fnext;
        history.push(fu);
        iterations += 1;
    }
    let u = recenter(&u);
    let energy = p.energy_raw(&u);
    let feasibility = Feasibility::of(&u, p.m, dx);
    Ok(BilayerSolution {
        u: p.grid(u)?,
        energy,
        feasibility,
        history,
        iterations,
        converged,
        stationarity,
    })
}

/// Integer shift bringing the centroid closest to the domain center, applied
/// only when the support still fits.
fn recenter(u: &[f64]) -> Vec<f64> {
    let n = u.len();
    let Some(first) = u.iter().position(|v| *v != 0.0) else {
        return u.to_vec();
    };
    let last = u.iter().rposition(|v| *v != 0.0).unwrap();
    let mass: f64 = u.iter().sum();
    let centroid: f64 = u.iter().enumerate().map(|(i, v)| (i as f64 + 0.5) * v).sum::<f64>() / mass;
    let shift = (0.5 * n as f64 - centroid).round() as isize;
    let lo = first as isize + shift;
    let hi = last as isize + shift;
    if shift == 0 || lo < 0 || hi >= n as isize {
        return u.to_vec();
    }
    let mut out = vec![0.0; n];
    for (i, &v) in u.iter().enumerate().take(last + 1).skip(first) {
        out[(i as isize + shift) as usize] = v;
    }
    out
}

/// Threshold below which a cell counts as empty when measuring support.
pub const SUPPORT_LEVEL: f64 = 1e-10;

/// Distance from the support of `u` (cells above [`SUPPORT_LEVEL`]) to the
/// nearer domain edge.
pub fn support_margin(u: &GridFunction) -> f64 {
    let v = u.values();
    match v.iter().position(|x| x.abs() > SUPPORT_LEVEL) {
        None => u.len() as f64 * u.spacing(),
        Some(first) => {
            let last = v.iter().rposition(|x| x.abs() > SUPPORT_LEVEL).unwrap();
            first.min(v.len() - 1 - last) as f64 * u.spacing()
        }
    }
}

/// Solves, doubling `L` (at most three times) while an attracting solution
/// comes closer than `margin` to the edge. Returns the problem actually solved.
pub fn minimize_with_margin(
    p: &BilayerProblem,
    opts: &SolveOptions,
    margin: f64,
) -> Result<(BilayerProblem, BilayerSolution)> {
    let mut problem = p.clone();
    let mut sol = minimize(&problem, opts)?;
    for _ in 0..3 {
        if problem.alpha == 0.0 || support_margin(&sol.u) >= margin {
            break;
        }
        problem = problem.resized(2.0 * problem.length)?;
        sol = minimize(&problem, opts)?;
    }
    Ok((problem, sol))
}

/// One row of the nonlocal smoothing table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlocalRow {
    pub eps: f64,
    /// `int u kappa*u - int u_eps kappa*u_eps`
    pub lhs: f64,
    /// `|lhs| / (eps^2 ||u||^2)`
    pub ratio: f64,
}

fn nonlocal_ratio(lhs: f64, base: f64, eps: f64, norm: f64) -> f64 {
    if norm == 0.0 || lhs.abs() <= 1e-13 * base.abs() {
        0.0
    } else {
        lhs.abs() / (eps * eps * norm)
    }
}

/// max/min of the ratios; 1 for an all-zero table.
pub fn ratio_spread(rows: &[NonlocalRow]) -> f64 {
    let max = rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Measured constants in `|int u kappa*u - u_eps kappa*u_eps| <= C eps^2 ||u||^2`.
pub fn nonlocal_smoothing_bound(
    u: &GridFunction,
    p: &BilayerProblem,
    mollifier: &Kernel,
    eps_list: &[f64],
) -> Result<Vec<NonlocalRow>> {
    nonlocal_smoothing_bound_with(u, p, mollifier, eps_list, Boundary::Zero)
}

pub fn nonlocal_smoothing_bound_with(
    u: &GridFunction,
    p: &BilayerProblem,
    mollifier: &Kernel,
    eps_list: &[f64],
    boundary: Boundary,
) -> Result<Vec<NonlocalRow>> {
    p.check_grid(u)?;
    let base = p.interaction(u)?;
    let norm = l2_norm_sq(u);
    eps_list
        .par_iter()
        .map(|&eps| {
            let ue = convolve_with(u, mollifier, eps, boundary)?;
            let lhs = base - p.interaction(&ue)?;
            let ratio = nonlocal_ratio(lhs, base, eps, norm);
            Ok(NonlocalRow { eps, lhs, ratio })
        })
        .collect()
}

/// Per-rung record of the smoothing comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateRung {
    pub eps: f64,
    pub feasibility: Feasibility,
    pub smoothed_energy: f64,
    /// `F(u_eps) - F(u)`, must be >= 0 up to slack.
    pub energy_increase: f64,
    /// `int f(u) - f(u_eps)`
    pub gap: f64,
    /// `int u kappa*u - int u_eps kappa*u_eps`
    pub nonlocal: f64,
    /// `|nonlocal| / (eps^2 ||u||^2)`
    pub ratio: f64,
    pub minimal: bool,
}

impl CertificateRung {
    /// Upper end of `0 <= F(u_eps) - F(u) <= -gap + alpha |nonlocal|`.
    pub fn chain_upper(&self, alpha: f64) -> f64 {
        -self.gap + alpha * self.nonlocal.abs()
    }
}

/// Outcome of [`certify`].
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub alpha: f64,
    pub edge: Boundary,
    pub rungs: Vec<CertificateRung>,
    pub fit: DecayFit,
    pub classification: Classification,
    pub ratio_spread: f64,
    /// Every rung passed the minimality check.
    pub minimal: bool,
}

impl Certificate {
    /// Minimality held at every rung, the ratios are stable and the gap decays
    /// like a W^{1,2} function.
    pub fn accepted(&self) -> bool {
        self.minimal
            && (self.alpha == 0.0 || self.ratio_spread <= RATIO_SPREAD_LIMIT)
            && self.classification.verdict == crate::gap::Verdict::W12Consistent
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let na = |v: Option<f64>| v.map(fmt17).unwrap_or_else(|| "NA".into());
        let _ = writeln!(out, "alpha = {}", fmt17(self.alpha));
        let edge = match self.edge {
            Boundary::Zero => "zero",
            Boundary::Reflect => "reflect",
        };
        let _ = writeln!(out, "edge = {edge}");
        let _ = writeln!(
            out,
            "# eps,feasible,mass_residual,min,pair_max,F_eps_minus_F,gap,nonlocal,ratio,chain_upper,minimal"
        );
        for r in &self.rungs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt17(r.eps),
                r.feasibility.is_feasible(),
                fmt17(r.feasibility.mass),
                fmt17(r.feasibility.min),
                fmt17(r.feasibility.pair_max),
                fmt17(r.energy_increase),
                fmt17(r.gap),
                fmt17(r.nonlocal),
                fmt17(r.ratio),
                fmt17(r.chain_upper(self.alpha)),
                r.minimal
            );
        }
        let _ = writeln!(out, "exponent = {}", na(self.fit.exponent));
        let _ = writeln!(out, "r2 = {}", fmt17(self.fit.r_squared));
        let _ = writeln!(out, "limit = {}", na(self.fit.limit_estimate));
        let _ = writeln!(out, "energy_bound = {}", na(self.classification.energy_bound));
        let _ = writeln!(out, "ratio_spread = {}", fmt17(self.ratio_spread));
        let _ = writeln!(out, "minimal = {}", self.minimal);
        let _ = writeln!(out, "verdict = {}", self.classification.verdict);
        let _ = writeln!(out, "accepted = {}", self.accepted());
        out
    }
}

/// Checks that every rung of `eps_list` resolves the scaled mollifier on the
/// problem grid.
pub fn check_resolution(p: &BilayerProblem, mollifier: &Kernel, eps_list: &[f64]) -> Result<()> {
    let eps_min = eps_list.iter().copied().fold(f64::INFINITY, f64::min);
    let reach = eps_min * mollifier.support_radius();
    if reach < crate::field::MIN_CELLS_PER_RADIUS * p.dx * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "kernel under-resolved at eps = {eps_min}: eps*R = {reach} < {} dx",
            crate::field::MIN_CELLS_PER_RADIUS
        )));
    }
    Ok(())
}

/// Smoothing comparison for a computed minimizer along `eps_list`.
///
/// Fails with [`Error::Infeasible`] if a mollified profile leaves the
/// constraint set.
pub fn certify(sol: &BilayerSolution, p: &BilayerProblem, mollifier: &Kernel, eps_list: &[f64]) -> Result<Certificate> {
    certify_with(sol, p, mollifier, eps_list, &FitOptions::default())
}

pub fn certify_with(
    sol: &BilayerSolution,
    p: &BilayerProblem,
    mollifier: &Kernel,
    eps_list: &[f64],
    opts: &FitOptions,
) -> Result<Certificate> {
    let u = &sol.u;
    p.check_grid(u)?;
    check_ladder(eps_list)?;
    if mollifier.dim() != 1 {
        return Err(invalid("bilayer mollifier must be one-dimensional"));
    }
    check_resolution(p, mollifier, eps_list)?;
    let feas = Feasibility::of(u.values(), p.m, p.dx);
    if !feas.is_feasible() {
        return Err(Error::Infeasible(format!(
            "solution is not admissible: mass residual {:e}, min {:e}, max pair {:e}",
            feas.mass, feas.min, feas.pair_max
        )));
    }
    let eps_max = eps_list.iter().copied().fold(0.0, f64::max);
    let reach = eps_max * mollifier.support_radius();
    let edge = if support_margin(u) >= 2.0 * reach {
        Boundary::Zero
    } else {
        Boundary::Reflect
    };
    let base_energy = p.energy_raw(u.values());
    let base_interaction = p.interaction(u)?;
    let norm = l2_norm_sq(u);
    let rungs = eps_list
        .par_iter()
        .map(|&eps| -> Result<CertificateRung> {
            let ue = convolve_with(u, mollifier, eps, edge)?;
            let feasibility = Feasibility::of(ue.values(), p.m, p.dx);
            if !feasibility.is_feasible() {
                return Err(Error::Infeasible(format!(
                    "mollified profile at eps = {eps} left the constraint set: mass residual {:e}, min {:e}, max pair {:e}",
                    feasibility.mass, feasibility.min, feasibility.pair_max
                )));
            }
            let smoothed_energy = p.energy_raw(ue.values());
            let energy_increase = smoothed_energy - base_energy;
            let nonlocal = base_interaction - p.interaction(&ue)?;
            let ratio = nonlocal_ratio(nonlocal, base_interaction, eps, norm);
            Ok(CertificateRung {
                eps,
                feasibility,
                smoothed_energy,
                energy_increase,
                gap: gap_between(u, &ue, &p.f),
                nonlocal,
                ratio,
                minimal: energy_increase >= -MINIMALITY_SLACK,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(f64, f64)> = rungs.iter().map(|r| (r.eps, r.gap)).collect();
    let mut fit = fit_ladder(&pairs, opts)?;
    fit.kernel_min_eig = mollifier.validate(DEFAULT_TOLERANCE).ok().map(|r| r.min_eigenvalue());
    let classification = classify_with(&fit, &p.f, opts);
    let rows: Vec<NonlocalRow> = rungs
        .iter()
        .map(|r| NonlocalRow {
            eps: r.eps,
            lhs: r.nonlocal,
            ratio: r.ratio,
        })
        .collect();
    Ok(Certificate {
        alpha: p.alpha,
        edge,
        minimal: rungs.iter().all(|r| r.minimal),
        rungs,
        fit,
        classification,
        ratio_spread: ratio_spread(&rows),
    })
}

/// Plain-text problem description (`key = value` lines).
#[derive(Debug, Clone, PartialEq)]
pub struct BilayerConfig {
    pub alpha: f64,
    pub h: f64,
    pub length: f64,
    pub dx: f64,
    /// Mollifier used by the certificate, `shape:dim:radius`.
    pub kernel: String,
    /// Integrand name.
    pub f: String,
    pub tol: f64,
    pub max_iter: usize,
    pub eps_max: f64,
    pub rungs: usize,
}

impl Default for BilayerConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            h: 0.5,
            length: 8.0,
            dx: 1.0 / 2048.0,
            kernel: "box:1:1".into(),
            f: "entropy".into(),
            tol: 1e-8,
            max_iter: 50_000,
            eps_max: 0.1,
            rungs: 5,
        }
    }
}

impl BilayerConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| -> Result<f64> {
            let x: f64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("bad number `{v}` for {key}")))?;
            if x.is_finite() {
                Ok(x)
            } else {
                Err(Error::Parse(format!("{key} must be finite")))
            }
        };
        let count = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad count `{v}` for {key}")))
        };
        match key {
            "alpha" => self.alpha = num(value)?,
            "h" => self.h = num(value)?,
            "L" | "length" => self.length = num(value)?,
            "dx" => self.dx = parse_spacing(value)?,
            "kernel" => self.kernel = value.to_string(),
            "f" => self.f = value.to_string(),
            "tol" => self.tol = num(value)?,
            "max_iter" => self.max_iter = count(value)?,
            "eps_max" => self.eps_max = num(value)?,
            "rungs" => self.rungs = count(value)?,
            other => {
                return Err(Error::Unknown {
                    what: "config key",
                    name: other.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<BilayerProblem> {
        BilayerProblem::new(self.alpha, self.h, self.length, self.dx, Integrand::by_name(&self.f)?)
    }

    pub fn mollifier(&self) -> Result<Kernel> {
        Kernel::parse_spec(&self.kernel)
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..SolveOptions::default()
        }
    }

    pub fn ladder(&self) -> Result<Vec<f64>> {
        if !(self.eps_max > 0.0) {
            return Err(invalid("eps_max must be positive"));
        }
        let l = halving_ladder(self.eps_max, self.rungs);
        check_ladder(&l)?;
        Ok(l)
    }
}

/// Accepts a decimal or a `1/N` fraction.
pub fn parse_spacing(v: &str) -> Result<f64> {
    let x = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad spacing `{v}`")))?;
            let b: f64 = b
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad spacing `{v}`")))?;
            a / b
        }
        None => v
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad spacing `{v}`")))?,
    };
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parse(format!("spacing must be positive, got `{v}`")))
    }
}
