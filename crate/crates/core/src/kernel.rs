//! Mollifier kernels: construction, Dirac scaling, self-convolution and
//! moment validation.
//!
//! A [`Kernel`] is an immutable value. Scaling never resamples the profile;
//! it stores the accumulated scale factor and evaluates
//! `phi_eps(x) = eps^-n phi(x / eps)` on demand, so repeated scaling is exact
//! up to the rounding of the product of the factors.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::quad::{midpoint, richardson2, GL24, GL40};

/// Tolerance used when checking the mollifier assumptions.
pub const DEFAULT_TOLERANCE: f64 = 1e-6;

/// Radial (or per-axis) midpoint cells used by [`Kernel::validate`].
pub const DEFAULT_RADIAL_POINTS: usize = 4096;

const ANGULAR_POINTS: usize = 64;
const CARTESIAN_POINTS_2D: usize = 512;

/// Catalog of analytic kernel shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    /// Constant on the ball.
    Box,
    /// Hat function, 1-D only.
    Tent,
    /// Quadratic cap `c (1 - |y|^2 / R^2)`.
    Epanechnikov,
    /// Gaussian with standard deviation `R / 3`, cut at `R` and renormalized.
    TruncatedGaussian,
    /// Indicator of the cube `[-R, R]^2`; the only non-radial shape.
    ProductBox,
    /// `1/2 e^{-|x|}` truncated where the tail is negligible. Not a mollifier;
    /// used as the attraction kernel of the bilayer model.
    ExponentialAttraction,
}

impl Shape {
    pub fn tag(self) -> &'static str {
        match self {
            Shape::Box => "box",
            Shape::Tent => "tent",
            Shape::Epanechnikov => "epanechnikov",
            Shape::TruncatedGaussian => "truncated-gaussian",
            Shape::ProductBox => "product-box",
            Shape::ExponentialAttraction => "exponential-attraction",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "box" => Shape::Box,
            "tent" | "hat" => Shape::Tent,
            "epanechnikov" | "epan" => Shape::Epanechnikov,
            "truncated-gaussian" | "gaussian" | "tgauss" => Shape::TruncatedGaussian,
            "product-box" => Shape::ProductBox,
            "exponential-attraction" | "exp" => Shape::ExponentialAttraction,
            other => {
                return Err(Error::Unknown {
                    what: "kernel shape",
                    name: other.to_string(),
                })
            }
        })
    }
}

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Analytic { shape: Shape, norm: f64 },
    SelfConvolution(Arc<Kernel>),
    Custom { label: String, radial: RadialFn },
}

/// A kernel `phi` on R^n (n = 1 or 2) with compact support.
#[derive(Clone)]
pub struct Kernel {
    dim: usize,
    /// Support radius of the unscaled profile.
    radius: f64,
    scale: f64,
    profile: Profile,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("kind", &self.kind_label())
            .field("dim", &self.dim)
            .field("support_radius", &self.support_radius())
            .field("scale", &self.scale)
            .finish()
    }
}

/// Builds one of the catalog kernels.
pub fn make_kernel(shape: Shape, dim: usize, support_radius: f64) -> Result<Kernel> {
    if dim != 1 && dim != 2 {
        return Err(invalid(format!("kernel dimension must be 1 or 2, got {dim}")));
    }
    if !(support_radius > 0.0 && support_radius.is_finite()) {
        return Err(invalid(format!(
            "support radius must be positive and finite, got {support_radius}"
        )));
    }
    let r = support_radius;
    let norm = match (shape, dim) {
        (Shape::Box, 1) => 1.0 / (2.0 * r),
        (Shape::Box, 2) => 1.0 / (PI * r * r),
        (Shape::Tent, 1) => 1.0 / r,
        (Shape::Tent, _) => return Err(invalid("the tent kernel is only defined in one dimension")),
        (Shape::Epanechnikov, 1) => 3.0 / (4.0 * r),
        (Shape::Epanechnikov, 2) => 2.0 / (PI * r * r),
        (Shape::TruncatedGaussian, 1) => {
            let sigma = r / 3.0;
            let half = GL40.integrate(0.0, r, |x| (-0.5 * (x / sigma).powi(2)).exp());
            1.0 / (2.0 * half)
        }
        (Shape::TruncatedGaussian, 2) => {
            let sigma = r / 3.0;
            1.0 / (2.0 * PI * sigma * sigma * (1.0 - (-4.5f64).exp()))
        }
        (Shape::ProductBox, 2) => 1.0 / (4.0 * r * r),
        (Shape::ProductBox, _) => return Err(invalid("product-box is a two-dimensional kernel; use box in 1-D")),
        (Shape::ExponentialAttraction, 1) => 0.5,
        (Shape::ExponentialAttraction, _) => {
            return Err(invalid("the exponential attraction kernel is one-dimensional"))
        }
        _ => unreachable!(),
    };
    Ok(Kernel {
        dim,
        radius: r,
        scale: 1.0,
        profile: Profile::Analytic { shape, norm },
    })
}

impl Kernel {
    /// Parses `shape:dim:radius`, e.g. `box:1:1`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Parse(format!(
                "kernel spec `{spec}` must look like shape:dim:radius"
            )));
        }
        let shape: Shape = parts[0].parse()?;
        let dim: usize = parts[1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad kernel dimension `{}`", parts[1])))?;
        let radius: f64 = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad kernel radius `{}`", parts[2])))?;
        make_kernel(shape, dim, radius)
    }

    /// The bilayer attraction kernel `1/2 e^{-|x|}`, cut where `e^{-R} <= tail`.
    pub fn exponential_attraction(tail: f64) -> Result<Self> {
        if !(tail > 0.0 && tail < 1.0) {
            return Err(invalid("tail bound must lie in (0, 1)"));
        }
        make_kernel(Shape::ExponentialAttraction, 1, -tail.ln())
    }

    /// A radial kernel from an arbitrary profile `r -> phi(r)` supported on
    /// `[0, support_radius]`. No normalization is applied.
    pub fn custom(
        dim: usize,
        support_radius: f64,
        label: impl Into<String>,
        radial: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("kernel dimension must be 1 or 2, got {dim}")));
        }
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(invalid("support radius must be positive and finite"));
        }
        Ok(Kernel {
            dim,
            radius: support_radius,
            scale: 1.0,
            profile: Profile::Custom {
                label: label.into(),
                radial: Arc::new(radial),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Radius of the support after scaling.
    pub fn support_radius(&self) -> f64 {
        self.radius * self.scale
    }

    /// Accumulated Dirac scale factor.
    pub fn scale_factor(&self) -> f64 {
        self.scale
    }

    pub fn shape(&self) -> Option<Shape> {
        match &self.profile {
            Profile::Analytic { shape, .. } => Some(*shape),
            _ => None,
        }
    }

    pub fn is_radial(&self) -> bool {
        match &self.profile {
            Profile::Analytic { shape, .. } => *shape != Shape::ProductBox,
            Profile::SelfConvolution(base) => base.is_radial(),
            Profile::Custom { .. } => true,
        }
    }

    /// False for the attraction kernel, which must not be used as a Dirac sequence.
    pub fn is_mollifier(&self) -> bool {
        match &self.profile {
            Profile::Analytic { shape, .. } => *shape != Shape::ExponentialAttraction,
            Profile::SelfConvolution(base) => base.is_mollifier(),
            Profile::Custom { .. } => true,
        }
    }

    pub fn is_self_convolution(&self) -> bool {
        matches!(self.profile, Profile::SelfConvolution(_))
    }

    /// Human-readable description; `shape:dim:radius` for catalog kernels.
    pub fn kind_label(&self) -> String {
        match &self.profile {
            Profile::Analytic { shape, .. } => {
                format!("{}:{}:{}", shape, self.dim, self.support_radius())
            }
            Profile::SelfConvolution(base) => {
                if self.scale == 1.0 {
                    format!("self-convolution({})", base.kind_label())
                } else {
                    format!("self-convolution({})@{}", base.kind_label(), self.scale)
                }
            }
            Profile::Custom { label, .. } => {
                format!("custom({label}):{}:{}", self.dim, self.support_radius())
            }
        }
    }

    /// Dirac scaling `phi_eps(x) = eps^-n phi(x / eps)`.
    pub fn scale(&self, eps: f64) -> Result<Kernel> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(invalid(format!("scale factor must be positive, got {eps}")));
        }
        let mut k = self.clone();
        k.scale *= eps;
        Ok(k)
    }

    /// Radial profile `phi(r)` of the scaled kernel. For the non-radial
    /// product box this is the section along the first axis.
    pub fn radial(&self, r: f64) -> f64 {
        let s = self.scale;
        let jac = if self.dim == 1 { 1.0 / s } else { 1.0 / (s * s) };
        jac * self.base_radial(r.abs() / s)
    }

    /// Evaluates the scaled kernel at a point of R^n.
    pub fn eval(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim);
        if let Profile::Analytic {
            shape: Shape::ProductBox,
            norm,
        } = self.profile
        {
            let s = self.scale;
            let r = self.radius * s;
            return if y.iter().all(|c| c.abs() <= r) {
                norm / (s * s)
            } else {
                0.0
            };
        }
        let r = if self.dim == 1 { y[0].abs() } else { y[0].hypot(y[1]) };
        self.radial(r)
    }

    /// Points (in scaled coordinates, 1-D) where the profile may fail to be smooth.
    pub fn breakpoints_1d(&self) -> Vec<f64> {
        let r = self.support_radius();
        match &self.profile {
            Profile::SelfConvolution(base) => {
                let b = base.scale(self.scale).map(|k| k.breakpoints_1d()).unwrap_or_default();
                let mut out = Vec::with_capacity(b.len() * b.len());
                for x in &b {
                    for y in &b {
                        out.push(x + y);
                    }
                }
                out.sort_by(|a, b| a.total_cmp(b));
                out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * r);
                out
            }
            _ => vec![-r, 0.0, r],
        }
    }

    /// Base kernel of a self-convolution, carrying this kernel's scale.
    pub(crate) fn self_convolution_factor(&self) -> Option<Kernel> {
        match &self.profile {
            Profile::SelfConvolution(base) => base.scale(self.scale).ok(),
            _ => None,
        }
    }

    fn expensive(&self) -> bool {
        matches!(self.profile, Profile::SelfConvolution(_))
    }

    /// Unscaled radial profile.
    fn base_radial(&self, r: f64) -> f64 {
        if r > self.radius {
            return 0.0;
        }
        match &self.profile {
            Profile::Analytic { shape, norm } => {
                let t = r / self.radius;
                match shape {
                    Shape::Box | Shape::ProductBox => *norm,
                    Shape::Tent => norm * (1.0 - t),
                    Shape::Epanechnikov => norm * (1.0 - t * t),
                    Shape::TruncatedGaussian => norm * (-4.5 * t * t).exp(),
                    Shape::ExponentialAttraction => norm * (-r).exp(),
                }
            }
            Profile::SelfConvolution(base) => {
                if self.dim == 1 {
                    self_convolution_1d(base, r)
                } else {
                    self_convolution_2d(base, r)
                }
            }
            Profile::Custom { radial, .. } => radial(r),
        }
    }

    /// `gamma = phi * phi`, evaluated on demand by piecewise Gauss-Legendre
    /// quadrature. The support radius doubles.
    pub fn self_convolve(&self) -> Result<Kernel> {
        if !self.is_mollifier() {
            return Err(Error::Precondition(
                "self-convolution needs a compactly supported mollifier".into(),
            ));
        }
        if self.dim == 2 {
            if !self.is_radial() {
                return Err(Error::Unsupported("self-convolution of a non-radial 2-D kernel".into()));
            }
            if self.is_self_convolution() {
                return Err(Error::Unsupported("iterated self-convolution in 2-D".into()));
            }
        }
        Ok(Kernel {
            dim: self.dim,
            radius: 2.0 * self.support_radius(),
            scale: 1.0,
            profile: Profile::SelfConvolution(Arc::new(self.clone())),
        })
    }

    /// Moment data and assumption checks with the default quadrature size.
    pub fn validate(&self, tol: f64) -> Result<MomentReport> {
        self.validate_with(tol, DEFAULT_RADIAL_POINTS)
    }

    /// Composite midpoint quadrature over the support with `points` cells per
    /// radial (or axial) direction, refined once and Richardson-extrapolated.
    pub fn validate_with(&self, tol: f64, points: usize) -> Result<MomentReport> {
        if !(tol > 0.0) {
            return Err(invalid("tolerance must be positive"));
        }
        if points < 8 {
            return Err(invalid("need at least 8 quadrature points"));
        }
        let points = points + points % 2;
        let coarse;
        let fine;
        match (self.dim, self.is_radial()) {
            (1, _) => {
                coarse = self.moments_1d(points);
                fine = self.moments_1d(2 * points);
            }
            (2, true) => {
                coarse = self.moments_polar(points);
                fine = self.moments_polar(2 * points);
            }
            _ => {
                let n = CARTESIAN_POINTS_2D.min(points);
                coarse = self.moments_cartesian(n);
                fine = self.moments_cartesian(2 * n);
            }
        }
        let extrapolated: Vec<f64> = coarse
            .values
            .iter()
            .zip(&fine.values)
            .map(|(c, f)| richardson2(*c, *f))
            .collect();
        if extrapolated.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonIntegrable(format!(
                "{}: non-finite moment",
                self.kind_label()
            )));
        }
        let mass_c = coarse.values[0];
        let mass_f = fine.values[0];
        if (mass_f - mass_c).abs() > 1e-3 * mass_f.abs().max(1.0) {
            return Err(Error::NonIntegrable(format!(
                "{}: mass changes from {mass_c} to {mass_f} under refinement",
                self.kind_label()
            )));
        }
        let n = self.dim;
        let mass = extrapolated[0];
        let first_moment = extrapolated[1..1 + n].to_vec();
        let second_moment = extrapolated[1 + n..1 + n + n * n].to_vec();
        let trace_c: f64 = (0..n).map(|i| coarse.values[1 + n + i * n + i]).sum();
        let trace_f: f64 = (0..n).map(|i| fine.values[1 + n + i * n + i]).sum();
        let second_moment_finite =
            second_moment.iter().all(|v| v.is_finite()) && (trace_f - trace_c).abs() <= 1e-3 * trace_f.abs().max(1.0);

        let radial_moment = if self.is_radial() {
            Some(self.radial_moment(points))
        } else {
            None
        };
        let radial_identity = radial_moment.map(|a| {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    let target = if i == j { a } else { 0.0 };
                    worst = worst.max((second_moment[i * n + j] - target).abs());
                }
            }
            worst
        });
        let residuals = Residuals {
            positivity: (-coarse.min_value.min(fine.min_value)).max(0.0),
            mass: (mass - 1.0).abs(),
            first_moment: first_moment.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            second_moment_finite,
            radial_identity,
        };
        Ok(MomentReport {
            label: self.kind_label(),
            dim: n,
            support_radius: self.support_radius(),
            mass,
            first_moment,
            second_moment,
            radial_moment,
            residuals,
            tol,
        })
    }

    /// a(phi) = omega_n * int_0^R r^{n+1} phi(r) dr, with omega_1 = 2, omega_2 = pi.
    fn radial_moment(&self, points: usize) -> f64 {
        let r = self.support_radius();
        let (omega, power) = if self.dim == 1 { (2.0, 2) } else { (PI, 3) };
        let q = |n| midpoint(0.0, r, n, |x| x.powi(power) * self.radial(x));
        omega * richardson2(q(points), q(2 * points))
    }

    fn moments_1d(&self, cells_per_side: usize) -> RawMoments {
        let r = self.support_radius();
        let n = 2 * cells_per_side;
        let h = 2.0 * r / n as f64;
        let mut acc = [0.0; 3];
        let mut min_value = f64::INFINITY;
        for i in 0..n {
            let y = -r + (i as f64 + 0.5) * h;
            let v = self.eval(&[y]);
            min_value = min_value.min(v);
            acc[0] += v;
            acc[1] += y * v;
            acc[2] += y * y * v;
        }
        RawMoments {
            values: acc.iter().map(|a| a * h).collect(),
            min_value,
        }
    }

    fn moments_polar(&self, radial_cells: usize) -> RawMoments {
        let r_max = self.support_radius();
        let dr = r_max / radial_cells as f64;
        let dtheta = 2.0 * PI / ANGULAR_POINTS as f64;
        let angles: Vec<(f64, f64)> = (0..ANGULAR_POINTS)
            .map(|k| {
                let t = (k as f64 + 0.5) * dtheta;
                (t.cos(), t.sin())
            })
            .collect();
        // mass, m_x, m_y, A_xx, A_xy, A_yx, A_yy
        let mut acc = [0.0; 7];
        let mut min_value = f64::INFINITY;
        for i in 0..radial_cells {
            let r = (i as f64 + 0.5) * dr;
            let ring = if self.expensive() { Some(self.radial(r)) } else { None };
            let mut ring_acc = [0.0; 7];
            for &(c, s) in &angles {
                let y = [r * c, r * s];
                let v = ring.unwrap_or_else(|| self.eval(&y));
                min_value = min_value.min(v);
                ring_acc[0] += v;
                ring_acc[1] += y[0] * v;
                ring_acc[2] += y[1] * v;
                ring_acc[3] += y[0] * y[0] * v;
                ring_acc[4] += y[0] * y[1] * v;
                ring_acc[6] += y[1] * y[1] * v;
            }
            for k in 0..7 {
                acc[k] += ring_acc[k] * r;
            }
        }
        acc[5] = acc[4];
        RawMoments {
            values: acc.iter().map(|a| a * dr * dtheta).collect(),
            min_value,
        }
    }

    fn moments_cartesian(&self, cells: usize) -> RawMoments {
        let r = self.support_radius();
        let h = 2.0 * r / cells as f64;
        let mut acc = [0.0; 7];
        let mut min_value = f64::INFINITY;
        for i in 0..cells {
            let x = -r + (i as f64 + 0.5) * h;
            for j in 0..cells {
                let y = -r + (j as f64 + 0.5) * h;
                let v = self.eval(&[x, y]);
                min_value = min_value.min(v);
                acc[0] += v;
                acc[1] += x * v;
                acc[2] += y * v;
                acc[3] += x * x * v;
                acc[4] += x * y * v;
                acc[6] += y * y * v;
            }
        }
        acc[5] = acc[4];
        RawMoments {
            values: acc.iter().map(|a| a * h * h).collect(),
            min_value,
        }
    }
}

struct RawMoments {
    /// mass, first moment (n), second moment (n x n, row-major)
    values: Vec<f64>,
    min_value: f64,
}

/// gamma(x) = int phi(y) phi(x - y) dy for an even 1-D kernel, x >= 0.
fn self_convolution_1d(base: &Kernel, x: f64) -> f64 {
    let rb = base.support_radius();
    let lo = x - rb;
    let hi = rb;
    if lo >= hi {
        return 0.0;
    }
    let mut cuts = base.breakpoints_1d();
    let shifted: Vec<f64> = cuts.iter().map(|b| x - b).collect();
    cuts.extend(shifted);
    GL24.integrate_pieces(lo, hi, &cuts, |y| base.radial(y.abs()) * base.radial((x - y).abs()))
}

/// Radial profile of gamma = phi * phi for a radial 2-D kernel at distance s.
///
/// The overlap of the two support discs is split at a = s/2. On each half the
/// chord half-length B(a) has a square-root endpoint singularity, removed by
/// the substitution a = a_0 +/- w^2; the chord itself is mapped to [0, 1].
fn self_convolution_2d(base: &Kernel, s: f64) -> f64 {
    let r = base.support_radius();
    if s >= 2.0 * r {
        return 0.0;
    }
    let w_max = (r - 0.5 * s).max(0.0).sqrt();
    let pair = |a: f64, b2: f64| -> f64 {
        let d1 = (a * a + b2).sqrt();
        let d2 = ((a - s) * (a - s) + b2).sqrt();
        base.radial(d1.min(r)) * base.radial(d2.min(r))
    };
    let chord = |a: f64, half: f64| -> f64 {
        if half <= 0.0 {
            return 0.0;
        }
        2.0 * half * GL24.integrate(0.0, 1.0, |t| pair(a, (half * t) * (half * t)))
    };
    let left = GL24.integrate(0.0, w_max, |w| {
        let a = s - r + w * w;
        let half = (w * w * (2.0 * r - w * w)).max(0.0).sqrt();
        2.0 * w * chord(a, half)
    });
    let right = GL24.integrate(0.0, w_max, |w| {
        let a = r - w * w;
        let half = (w * w * (2.0 * r - w * w)).max(0.0).sqrt();
        2.0 * w * chord(a, half)
    });
    left + right
}

/// Per-assumption deviation magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    /// Largest negative excursion of the sampled profile (0 when phi >= 0).
    pub positivity: f64,
    /// |mass - 1|
    pub mass: f64,
    /// max_i |int y_i phi|
    pub first_moment: f64,
    pub second_moment_finite: bool,
    /// max_ij |A_ij - a delta_ij|, radial kernels only.
    pub radial_identity: Option<f64>,
}

/// Moment data of a kernel together with the assumption checks.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub label: String,
    pub dim: usize,
    pub support_radius: f64,
    pub mass: f64,
    pub first_moment: Vec<f64>,
    /// A(phi) = int y (x) y phi(y) dy, row-major.
    pub second_moment: Vec<f64>,
    /// a(phi), present for radial kernels.
    pub radial_moment: Option<f64>,
    pub residuals: Residuals,
    pub tol: f64,
}

/// Pass/fail for each mollifier assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionFlags {
    pub nonnegative: bool,
    pub unit_mass: bool,
    pub centered: bool,
    pub finite_second_moment: bool,
    pub radial_identity: Option<bool>,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.nonnegative
            && self.unit_mass
            && self.centered
            && self.finite_second_moment
            && self.radial_identity.unwrap_or(true)
    }
}

impl MomentReport {
    pub fn second_moment_entry(&self, i: usize, j: usize) -> f64 {
        self.second_moment[i * self.dim + j]
    }

    pub fn flags(&self) -> AssumptionFlags {
        let r = &self.residuals;
        AssumptionFlags {
            nonnegative: r.positivity <= self.tol,
            unit_mass: r.mass <= self.tol,
            centered: r.first_moment <= self.tol,
            finite_second_moment: r.second_moment_finite,
            radial_identity: r.radial_identity.map(|v| v <= self.tol),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.flags().all()
    }

    /// Smallest eigenvalue of A(phi).
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            return self.second_moment[0];
        }
        let (a, b, d) = (
            self.second_moment[0],
            0.5 * (self.second_moment[1] + self.second_moment[2]),
            self.second_moment[3],
        );
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - disc
    }

    /// Flat `name = value` block, one entry per line.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let flags = self.flags();
        let _ = writeln!(out, "kernel = {}", self.label);
        let _ = writeln!(out, "dim = {}", self.dim);
        let _ = writeln!(out, "support_radius = {}", fmt17(self.support_radius));
        let _ = writeln!(out, "mass = {}", fmt17(self.mass));
        for (i, m) in self.first_moment.iter().enumerate() {
            let _ = writeln!(out, "first_moment_{i} = {}", fmt17(*m));
        }
        for i in 0..self.dim {
            for j in 0..self.dim {
                let _ = writeln!(out, "A_{i}{j} = {}", fmt17(self.second_moment_entry(i, j)));
            }
        }
        if let Some(a) = self.radial_moment {
            let _ = writeln!(out, "a = {}", fmt17(a));
        }
        let r = &self.residuals;
        let _ = writeln!(out, "tol = {}", fmt17(self.tol));
        let _ = writeln!(out, "positivity_residual = {}", fmt17(r.positivity));
        let _ = writeln!(out, "mass_residual = {}", fmt17(r.mass));
        let _ = writeln!(out, "first_moment_residual = {}", fmt17(r.first_moment));
        if let Some(v) = r.radial_identity {
            let _ = writeln!(out, "radial_identity_residual = {}", fmt17(v));
        }
        let _ = writeln!(out, "nonnegative = {}", flags.nonnegative);
        let _ = writeln!(out, "unit_mass = {}", flags.unit_mass);
        let _ = writeln!(out, "centered = {}", flags.centered);
        let _ = writeln!(out, "finite_second_moment = {}", flags.finite_second_moment);
        if let Some(v) = flags.radial_identity {
            let _ = writeln!(out, "radial_identity = {v}");
        }
        let _ = writeln!(out, "assumptions_ok = {}", flags.all());
        out
    }
}

/// Shortest round-trip representation; at most 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:?}")
}
