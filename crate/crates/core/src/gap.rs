//! Mollification gaps `T(eps) = int f(u) - f(u * phi_eps)`, their small-eps
//! limit, the exact quadratic identity, and decay-rate ladders.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::field::{convolve_with, for_each_edge, gradient, mollifier_stencil, Boundary, GridFunction, Stencil};
use crate::kernel::{fmt17, Kernel, MomentReport, DEFAULT_TOLERANCE};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default cell cap for the O(N^2) double-sum oracle.
pub const DEFAULT_ORACLE_CAP: usize = 4096;

/// A convex integrand with its first two derivatives and curvature bounds.
#[derive(Clone)]
pub struct Integrand {
    name: String,
    f: Scalar,
    f1: Scalar,
    f2: Scalar,
    c1: f64,
    f2_sup: f64,
    range: (f64, f64),
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("name", &self.name)
            .field("c1", &self.c1)
            .field("f2_sup", &self.f2_sup)
            .field("range", &self.range)
            .finish()
    }
}

impl Integrand {
    /// Builds an integrand and checks `f(0) = f'(0) = 0` and
    /// `c1 <= f'' <= f2_sup` on a sample of `range`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        c1: f64,
        f2_sup: f64,
        range: (f64, f64),
    ) -> Result<Self> {
        let name = name.into();
        if !(c1 >= 0.0 && f2_sup >= c1 && f2_sup.is_finite()) {
            return Err(invalid(format!("{name}: need 0 <= c1 <= f2_sup < inf")));
        }
        if !(range.0 < range.1) {
            return Err(invalid(format!("{name}: empty sample range")));
        }
        if f(0.0).abs() > 1e-14 || f1(0.0).abs() > 1e-14 {
            return Err(invalid(format!("{name}: need f(0) = 0 and f'(0) = 0")));
        }
        let slack = 1e-12 * f2_sup.max(1.0);
        for k in 0..=256 {
            let v = range.0 + (range.1 - range.0) * k as f64 / 256.0;
            let c = f2(v);
            if !(c >= c1 - slack && c <= f2_sup + slack) {
                return Err(invalid(format!("{name}: f''({v}) = {c} outside [{c1}, {f2_sup}]")));
            }
        }
        Ok(Self {
            name,
            f: Arc::new(f),
            f1: Arc::new(f1),
            f2: Arc::new(f2),
            c1,
            f2_sup,
            range,
        })
    }

    /// `v^2`
    pub fn square() -> Self {
        Self::new("square", |v| v * v, |v| 2.0 * v, |_| 2.0, 2.0, 2.0, (-1e3, 1e3)).unwrap()
    }

    /// `(1 + v) ln(1 + v) - v`, with `f'' = 1 / (1 + v)` bounded in `[1/2, 1]` on `[0, 1]`.
    pub fn entropy() -> Self {
        Self::new(
            "entropy",
            |v| {
                let w = 1.0 + v;
                // ln_1p keeps f(v) accurate for tiny v
                w * v.ln_1p() - v
            },
            |v| v.ln_1p(),
            |v| 1.0 / (1.0 + v),
            0.5,
            1.0,
            (0.0, 1.0),
        )
        .unwrap()
    }

    /// `ln cosh v`, with `f'' = sech^2 v >= sech^2(1)` on `[-1, 1]`.
    pub fn logcosh() -> Self {
        let sech2 = |v: f64| {
            let c = v.cosh();
            1.0 / (c * c)
        };
        Self::new(
            "logcosh",
            |v: f64| {
                let a = v.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            },
            |v: f64| v.tanh(),
            sech2,
            sech2(1.0),
            1.0,
            (-1.0, 1.0),
        )
        .unwrap()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "square" | "v2" | "quadratic" => Ok(Self::square()),
            "entropy" => Ok(Self::entropy()),
            "logcosh" => Ok(Self::logcosh()),
            other => Err(Error::Unknown {
                what: "integrand",
                name: other.to_string(),
            }),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn c1(&self) -> f64 {
        self.c1
    }
    pub fn f2_sup(&self) -> f64 {
        self.f2_sup
    }
    /// Interval on which the curvature bounds were checked.
    pub fn range(&self) -> (f64, f64) {
        self.range
    }
    pub fn f(&self, v: f64) -> f64 {
        (self.f)(v)
    }
    pub fn f1(&self, v: f64) -> f64 {
        (self.f1)(v)
    }
    pub fn f2(&self, v: f64) -> f64 {
        (self.f2)(v)
    }
}

/// `int f(u) - f(u_eps)` with zero extension.
pub fn gap(u: &GridFunction, f: &Integrand, kernel: &Kernel, eps: f64) -> Result<f64> {
    gap_with(u, f, kernel, eps, Boundary::Zero)
}

/// [`gap`] with an explicit boundary continuation.
pub fn gap_with(u: &GridFunction, f: &Integrand, kernel: &Kernel, eps: f64, boundary: Boundary) -> Result<f64> {
    let ue = convolve_with(u, kernel, eps, boundary)?;
    Ok(gap_between(u, &ue, f))
}

/// `int f(u) - f(v)` on a shared grid.
pub fn gap_between(u: &GridFunction, v: &GridFunction, f: &Integrand) -> f64 {
    let s: f64 = u.values().iter().zip(v.values()).map(|(&a, &b)| f.f(a) - f.f(b)).sum();
    s * u.cell_volume()
}

/// `1/2 int f''(u) grad u . A grad u`, using the moment matrix of `kernel`.
/// Radial kernels return the radial form `1/2 a int f''(u) |grad u|^2`.
pub fn limit_functional(u: &GridFunction, f: &Integrand, kernel: &Kernel) -> Result<f64> {
    let report = kernel.validate(DEFAULT_TOLERANCE)?;
    limit_functional_with(u, f, &report)
}

/// [`limit_functional`] with precomputed moments.
pub fn limit_functional_with(u: &GridFunction, f: &Integrand, moments: &MomentReport) -> Result<f64> {
    if moments.dim != u.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel is {}-D but the grid is {}-D",
            moments.dim,
            u.dim()
        )));
    }
    let vol = u.cell_volume();
    let mut diag = vec![0.0; u.dim()];
    for_each_edge(u, |axis, d, mid| diag[axis] += f.f2(mid) * d * d);
    let mut general = 0.0;
    for (i, s) in diag.iter().enumerate() {
        general += moments.second_moment_entry(i, i) * s;
    }
    if u.dim() == 2 {
        let off = 0.5 * (moments.second_moment_entry(0, 1) + moments.second_moment_entry(1, 0));
        if off != 0.0 {
            let g = gradient(u)?;
            let cross: f64 = u
                .values()
                .iter()
                .zip(g[0].values().iter().zip(g[1].values()))
                .map(|(&v, (&gx, &gy))| f.f2(v) * gx * gy)
                .sum();
            general += 2.0 * off * cross;
        }
    }
    let general = 0.5 * general * vol;
    match moments.radial_moment {
        Some(a) => {
            let radial = 0.5 * a * diag.iter().sum::<f64>() * vol;
            let scale = radial.abs().max(general.abs());
            if scale > 0.0 && (radial - general).abs() > 1e-8 * scale {
                return Err(Error::Precondition(format!(
                    "radial form {radial} disagrees with the general form {general}"
                )));
            }
            Ok(radial)
        }
        None => Ok(general),
    }
}

/// Both sides of the discrete quadratic identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticGap {
    /// `1/2 sum_ij (u_i - u_j)^2 g_{i-j} dx^{2n}` over every pair of cells.
    pub double_sum: f64,
    /// `sum u^2 dx^n - sum (u * g) u dx^n`
    pub inner_product: f64,
}

impl QuadraticGap {
    pub fn discrepancy(&self) -> f64 {
        (self.double_sum - self.inner_product).abs()
    }
}

/// Brute-force double sum against the self-convolved kernel weights, with the
/// default cell cap.
pub fn quadratic_gap_oracle(u: &GridFunction, kernel: &Kernel, eps: f64) -> Result<QuadraticGap> {
    quadratic_gap_oracle_capped(u, kernel, eps, DEFAULT_ORACLE_CAP)
}

/// [`quadratic_gap_oracle`] refusing grids with more than `cap` cells.
pub fn quadratic_gap_oracle_capped(u: &GridFunction, kernel: &Kernel, eps: f64, cap: usize) -> Result<QuadraticGap> {
    if u.len() > cap {
        return Err(Error::TooLarge { size: u.len(), cap });
    }
    let base = mollifier_stencil(u, kernel, eps, Boundary::Zero)?;
    let g = base.self_convolve();
    let reach = g.half_width() as f64 * u.spacing();
    if reach > u.padding_radius() * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "padding violated: self-convolved support {reach} exceeds the zero margin {}",
            u.padding_radius()
        )));
    }
    let vol = u.cell_volume();
    let v = u.values();
    let double_sum = if u.dim() == 1 {
        let mut acc = 0.0;
        for (i, &a) in v.iter().enumerate() {
            for (k, &b) in v.iter().enumerate() {
                let d = a - b;
                acc += d * d * g.at(&[i as isize - k as isize]);
            }
        }
        0.5 * acc * vol * vol
    } else {
        let nx = u.shape()[0];
        let mut acc = 0.0;
        for (i, &a) in v.iter().enumerate() {
            let (ix, iy) = ((i % nx) as isize, (i / nx) as isize);
            for (k, &b) in v.iter().enumerate() {
                let (kx, ky) = ((k % nx) as isize, (k / nx) as isize);
                let d = a - b;
                acc += d * d * g.at(&[ix - kx, iy - ky]);
            }
        }
        0.5 * acc * vol * vol
    };
    let ug = g.apply(u, Boundary::Zero)?;
    let sq: f64 = v.iter().map(|a| a * a).sum();
    let cross: f64 = v.iter().zip(ug.values()).map(|(a, b)| a * b).sum();
    Ok(QuadraticGap {
        double_sum,
        inner_product: (sq - cross) * vol,
    })
}

/// The normalized stencil of `phi_eps * phi_eps` on `u`'s grid.
pub fn self_convolution_stencil(u: &GridFunction, kernel: &Kernel, eps: f64) -> Result<Stencil> {
    Ok(mollifier_stencil(u, kernel, eps, Boundary::Zero)?.self_convolve())
}

/// Classifier outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    W12Consistent,
    SubW12,
    Inconclusive,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::W12Consistent => "W12-consistent",
            Verdict::SubW12 => "sub-W12",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Fit and classification knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Minimum r^2 for an exponent to be reported.
    pub min_r2: f64,
    /// The largest rung is dropped when that raises r^2 by more than this.
    pub drop_gain: f64,
    /// Exponent window in which the Richardson limit is formed.
    pub richardson_window: (f64, f64),
    /// Exponents at or above this are W12-consistent.
    pub w12_threshold: f64,
    /// Exponents at or below this are sub-W12 (when c1 > 0).
    pub sub_threshold: f64,
    /// Ladders with every |T| at or below this are treated as identically zero.
    pub null_level: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_r2: 0.99,
            drop_gain: 0.005,
            richardson_window: (1.9, 2.1),
            w12_threshold: 1.9,
            sub_threshold: 1.8,
            null_level: 1e-12,
        }
    }
}

/// Least-squares power law `T ~ prefactor * eps^exponent` over a ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    /// Every rung, largest eps first.
    pub ladder: Vec<(f64, f64)>,
    /// eps values left out of the fit.
    pub dropped: Vec<f64>,
    /// Slope of log T against log eps, present when `r_squared >= min_r2`.
    pub exponent: Option<f64>,
    pub prefactor: Option<f64>,
    pub r_squared: f64,
    /// Richardson-extrapolated `T / eps^2`, present when the exponent is near 2.
    pub limit_estimate: Option<f64>,
    /// Every |T| was below the null level.
    pub null: bool,
    /// Smallest eigenvalue of the kernel's moment matrix, when known.
    pub kernel_min_eig: Option<f64>,
}

impl DecayFit {
    /// Rungs kept in the fit.
    pub fn kept(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.ladder.iter().filter(|(e, _)| !self.dropped.contains(e))
    }

    /// `eps,T,T_over_eps2` table with summary comments.
    pub fn to_csv(&self, verdict: Verdict) -> String {
        let mut out = String::from("eps,T,T_over_eps2\n");
        for (e, t) in self.kept() {
            out.push_str(&format!("{},{},{}\n", fmt17(*e), fmt17(*t), fmt17(t / (e * e))));
        }
        let na = |v: Option<f64>| v.map(fmt17).unwrap_or_else(|| "NA".into());
        out.push_str(&format!(
            "# exponent={} r2={} limit={} verdict={}\n",
            na(self.exponent),
            fmt17(self.r_squared),
            na(self.limit_estimate),
            verdict
        ));
        let dropped = if self.dropped.is_empty() {
            "none".to_string()
        } else {
            self.dropped.iter().map(|e| fmt17(*e)).collect::<Vec<_>>().join(",")
        };
        out.push_str(&format!("# dropped={dropped}\n"));
        out
    }
}

fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits a ladder of `(eps, T)` pairs given largest eps first.
pub fn fit_ladder(pairs: &[(f64, f64)], opts: &FitOptions) -> Result<DecayFit> {
    if pairs.len() < 2 {
        return Err(invalid("a fit needs at least two rungs"));
    }
    for w in pairs.windows(2) {
        if !(w[1].0 < w[0].0) {
            return Err(invalid("ladder eps values must be strictly decreasing"));
        }
    }
    for (e, t) in pairs {
        if !(e.is_finite() && *e > 0.0) {
            return Err(invalid(format!("bad ladder eps {e}")));
        }
        if !t.is_finite() {
            return Err(Error::NonFinite(format!("gap at eps = {e}")));
        }
    }
    let mut fit = DecayFit {
        ladder: pairs.to_vec(),
        dropped: Vec::new(),
        exponent: None,
        prefactor: None,
        r_squared: 0.0,
        limit_estimate: None,
        null: false,
        kernel_min_eig: None,
    };
    if pairs.iter().all(|(_, t)| t.abs() <= opts.null_level) {
        fit.null = true;
        fit.r_squared = 1.0;
        fit.limit_estimate = Some(0.0);
        return Ok(fit);
    }
    if pairs.iter().any(|(_, t)| *t <= 0.0) {
        return Ok(fit);
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|(e, t)| (e.ln(), t.ln())).collect();
    let (mut slope, mut intercept, mut r2) = linear_fit(&logs);
    if logs.len() >= 4 {
        let (s, i, r) = linear_fit(&logs[1..]);
        if r - r2 > opts.drop_gain {
            fit.dropped.push(pairs[0].0);
            (slope, intercept, r2) = (s, i, r);
        }
    }
    fit.r_squared = r2;
    if r2 >= opts.min_r2 {
        fit.exponent = Some(slope);
        fit.prefactor = Some(intercept.exp());
        let (lo, hi) = opts.richardson_window;
        if slope >= lo && slope <= hi {
            let n = pairs.len();
            let (e1, t1) = pairs[n - 2];
            let (e2, t2) = pairs[n - 1];
            let r2e = (e1 / e2).powi(2);
            let q1 = t1 / (e1 * e1);
            let q2 = t2 / (e2 * e2);
            fit.limit_estimate = Some((r2e * q2 - q1) / (r2e - 1.0));
        }
    }
    Ok(fit)
}

/// Checks that `eps_list` is a strictly decreasing geometric ladder.
pub fn check_ladder(eps_list: &[f64]) -> Result<()> {
    if eps_list.len() < 4 {
        return Err(invalid("a decay ladder needs at least four rungs"));
    }
    if eps_list.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid("ladder eps values must be positive"));
    }
    let q = eps_list[1] / eps_list[0];
    if !(q < 1.0) {
        return Err(invalid("ladder eps values must be strictly decreasing"));
    }
    for w in eps_list.windows(2) {
        if ((w[1] / w[0]) - q).abs() > 1e-9 * q {
            return Err(invalid("ladder must be geometric"));
        }
    }
    Ok(())
}

/// `eps_max * 2^-k` for `k = 0..rungs`.
pub fn halving_ladder(eps_max: f64, rungs: usize) -> Vec<f64> {
    (0..rungs).map(|k| eps_max * 0.5f64.powi(k as i32)).collect()
}

/// Gaps along a geometric ladder, fitted with the default options.
pub fn decay_ladder(u: &GridFunction, f: &Integrand, kernel: &Kernel, eps_list: &[f64]) -> Result<DecayFit> {
    decay_ladder_with(u, f, kernel, eps_list, Boundary::Zero, &FitOptions::default())
}

/// [`decay_ladder`] with explicit boundary handling and fit options.
pub fn decay_ladder_with(
    u: &GridFunction,
    f: &Integrand,
    kernel: &Kernel,
    eps_list: &[f64],
    boundary: Boundary,
    opts: &FitOptions,
) -> Result<DecayFit> {
    check_ladder(eps_list)?;
    let gaps: Vec<Result<f64>> = eps_list
        .par_iter()
        .map(|&e| gap_with(u, f, kernel, e, boundary))
        .collect();
    let pairs = eps_list
        .iter()
        .zip(gaps)
        .map(|(&e, t)| t.map(|t| (e, t)))
        .collect::<Result<Vec<_>>>()?;
    let mut fit = fit_ladder(&pairs, opts)?;
    fit.kernel_min_eig = kernel.validate(DEFAULT_TOLERANCE).ok().map(|r| r.min_eigenvalue());
    Ok(fit)
}

/// Verdict with the resulting energy bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    /// `int |grad u|^2 <= 2 Lambda / (c1 lambda_min(A))`, when all three are known.
    pub energy_bound: Option<f64>,
}

pub fn classify(fit: &DecayFit, f: &Integrand) -> Classification {
    classify_with(fit, f, &FitOptions::default())
}

pub fn classify_with(fit: &DecayFit, f: &Integrand, opts: &FitOptions) -> Classification {
    let verdict = if fit.null {
        Verdict::W12Consistent
    } else {
        match fit.exponent {
            Some(p) if fit.r_squared >= opts.min_r2 && p >= opts.w12_threshold => Verdict::W12Consistent,
            Some(p) if fit.r_squared >= opts.min_r2 && p <= opts.sub_threshold && f.c1() > 0.0 => Verdict::SubW12,
            _ => Verdict::Inconclusive,
        }
    };
    let energy_bound = match (verdict, fit.limit_estimate, fit.kernel_min_eig) {
        (Verdict::W12Consistent, Some(l), Some(m)) if f.c1() > 0.0 && m > 0.0 => Some(2.0 * l.max(0.0) / (f.c1() * m)),
        _ => None,
    };
    Classification { verdict, energy_bound }
}
