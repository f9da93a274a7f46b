//! Uniform-grid functions, the analytic test corpus, discrete calculus and
//! convolution against kernels.
//!
//! Samples live at `origin + i * dx` and the function is taken to be zero
//! outside the stored box. Convolution uses cell-averaged kernel weights,
//! renormalized to unit discrete mass, so mass is preserved exactly and the
//! discrete Jensen inequality holds to rounding.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::kernel::{fmt17, Kernel};
use crate::quad::GL8;

/// Sub-samples per axis used to cell-average 2-D kernels.
const SUBSAMPLES_2D: usize = 8;

/// Gaussian samples below this value are stored as exact zeros, which gives
/// the Gaussian an effective compact support (|x| > 6.26).
pub const GAUSSIAN_CUTOFF: f64 = 1e-17;

/// Minimum number of grid cells across the scaled kernel radius.
pub const MIN_CELLS_PER_RADIUS: f64 = 8.0;

/// A real function sampled on a uniform grid, zero outside the box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: usize,
    origin: Vec<f64>,
    dx: f64,
    shape: Vec<usize>,
    values: Vec<f64>,
    padding: f64,
}

impl GridFunction {
    /// `shape` lists the node count per axis; values are row-major with the
    /// first axis fastest (`index = iy * nx + ix`).
    pub fn new(origin: Vec<f64>, dx: f64, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let dim = shape.len();
        if dim != 1 && dim != 2 {
            return Err(invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if origin.len() != dim {
            return Err(invalid("origin length does not match grid dimension"));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(invalid(format!("grid spacing must be positive, got {dx}")));
        }
        if shape.contains(&0) {
            return Err(invalid("grid axes must be non-empty"));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(invalid("value count does not match grid shape"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at index {i}")));
        }
        let padding = zero_margin(&shape, &values) as f64 * dx;
        Ok(Self {
            dim,
            origin,
            dx,
            shape,
            values,
            padding,
        })
    }

    /// Same geometry, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.origin.clone(), self.dx, self.shape.clone(), values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn origin(&self) -> &[f64] {
        &self.origin
    }
    pub fn spacing(&self) -> f64 {
        self.dx
    }
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Distance from the box boundary inside which every sample is zero.
    pub fn padding_radius(&self) -> f64 {
        self.padding
    }

    /// Cell volume `dx^n`.
    pub fn cell_volume(&self) -> f64 {
        self.dx.powi(self.dim as i32)
    }

    /// Coordinate of node `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin[axis] + i as f64 * self.dx
    }

    pub fn same_geometry(&self, other: &GridFunction) -> bool {
        self.dim == other.dim && self.shape == other.shape && self.dx == other.dx && self.origin == other.origin
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        self.with_values(self.values.iter().map(|&v| f(v)).collect())
    }

    /// Writes the plain-text grid format: a `# dim=.. origin=.. dx=..` header
    /// followed by `x value` rows (1-D) or one matrix row per y index (2-D).
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        let origin: Vec<String> = self.origin.iter().map(|o| fmt17(*o)).collect();
        writeln!(
            w,
            "# dim={} origin={} dx={}",
            self.dim,
            origin.join(","),
            fmt17(self.dx)
        )?;
        if self.dim == 1 {
            for (i, v) in self.values.iter().enumerate() {
                writeln!(w, "{} {}", fmt17(self.coord(0, i)), fmt17(*v))?;
            }
        } else {
            let nx = self.shape[0];
            for row in self.values.chunks(nx) {
                let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
                writeln!(w, "{}", cells.join(" "))?;
            }
        }
        Ok(())
    }

    /// Reads the format produced by [`GridFunction::write_text`]. Comment
    /// lines after the header are ignored.
    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(Error::Parse("empty grid file".into())),
            }
        };
        let header = header
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| Error::Parse("grid header must start with `#`".into()))?;
        let mut dim = None;
        let mut origin = None;
        let mut dx = None;
        for token in header.split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token `{token}`")))?;
            match key {
                "dim" => dim = Some(parse_num::<usize>(value)?),
                "origin" => origin = Some(value.split(',').map(parse_num::<f64>).collect::<Result<Vec<_>>>()?),
                "dx" => dx = Some(parse_num::<f64>(value)?),
                _ => {}
            }
        }
        let (dim, origin, dx) = match (dim, origin, dx) {
            (Some(d), Some(o), Some(x)) => (d, o, x),
            _ => return Err(Error::Parse("header needs dim, origin and dx".into())),
        };
        let mut values = Vec::new();
        let mut rows = 0usize;
        let mut nx = None;
        for line in lines {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if dim == 1 {
                if fields.len() != 2 {
                    return Err(Error::Parse(format!("expected `x value`, got `{t}`")));
                }
                values.push(parse_num::<f64>(fields[1])?);
            } else {
                match nx {
                    None => nx = Some(fields.len()),
                    Some(n) if n != fields.len() => return Err(Error::Parse("ragged matrix rows".into())),
                    _ => {}
                }
                for f in fields {
                    values.push(parse_num::<f64>(f)?);
                }
                rows += 1;
            }
        }
        let shape = if dim == 1 {
            vec![values.len()]
        } else {
            vec![nx.unwrap_or(0), rows]
        };
        Self::new(origin, dx, shape, values)
    }
}

fn parse_num<T: FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

/// Number of all-zero layers at the thinnest side of the box.
fn zero_margin(shape: &[usize], values: &[f64]) -> usize {
    match shape.len() {
        1 => {
            let n = shape[0];
            match values.iter().position(|v| *v != 0.0) {
                None => n,
                Some(first) => {
                    let last = values.iter().rposition(|v| *v != 0.0).unwrap();
                    first.min(n - 1 - last)
                }
            }
        }
        _ => {
            let (nx, ny) = (shape[0], shape[1]);
            let (mut x0, mut x1, mut y0, mut y1) = (usize::MAX, 0usize, usize::MAX, 0usize);
            let mut any = false;
            for iy in 0..ny {
                for ix in 0..nx {
                    if values[iy * nx + ix] != 0.0 {
                        any = true;
                        x0 = x0.min(ix);
                        x1 = x1.max(ix);
                        y0 = y0.min(iy);
                        y1 = y1.max(iy);
                    }
                }
            }
            if !any {
                return nx.min(ny);
            }
            x0.min(nx - 1 - x1).min(y0).min(ny - 1 - y1)
        }
    }
}

/// Families of analytic test functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `exp(-|x|^2)`
    Gaussian,
    /// `max(0, 1 - |x|)`, tensor product in 2-D
    Tent,
    /// indicator of `[0, 1)`, tensor product in 2-D
    StepIndicator,
    /// `max(0, 1 - |x|)^alpha`, tensor product in 2-D
    Cusp { alpha: f64 },
}

/// Known Sobolev membership of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularity {
    W12,
    NotW12,
    Boundary,
}

/// A test function with its known regularity and, when available in closed
/// form, its Dirichlet energy `int |grad u|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunctionSpec {
    pub family: Family,
}

impl TestFunctionSpec {
    pub fn new(family: Family) -> Result<Self> {
        if let Family::Cusp { alpha } = family {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(invalid(format!("cusp exponent must be positive, got {alpha}")));
            }
        }
        Ok(Self { family })
    }

    pub fn gaussian() -> Self {
        Self {
            family: Family::Gaussian,
        }
    }
    pub fn tent() -> Self {
        Self { family: Family::Tent }
    }
    pub fn step() -> Self {
        Self {
            family: Family::StepIndicator,
        }
    }
    pub fn cusp(alpha: f64) -> Result<Self> {
        Self::new(Family::Cusp { alpha })
    }

    /// Parses `family[:param]`, e.g. `gaussian`, `step`, `cusp:0.25`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (name, param) = match spec.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (spec.trim(), None),
        };
        let family = match name.to_ascii_lowercase().as_str() {
            "gaussian" => Family::Gaussian,
            "tent" => Family::Tent,
            "step" | "step-indicator" => Family::StepIndicator,
            "cusp" => {
                let alpha = param
                    .ok_or_else(|| Error::Parse("cusp needs an exponent, e.g. cusp:0.25".into()))
                    .and_then(parse_num::<f64>)?;
                Family::Cusp { alpha }
            }
            other => {
                return Err(Error::Unknown {
                    what: "test function family",
                    name: other.to_string(),
                })
            }
        };
        if param.is_some() && !matches!(family, Family::Cusp { .. }) {
            return Err(Error::Parse(format!("family `{name}` takes no parameter")));
        }
        Self::new(family)
    }

    pub fn label(&self) -> String {
        match self.family {
            Family::Gaussian => "gaussian".into(),
            Family::Tent => "tent".into(),
            Family::StepIndicator => "step".into(),
            Family::Cusp { alpha } => format!("cusp:{alpha}"),
        }
    }

    pub fn known_regularity(&self) -> Regularity {
        match self.family {
            Family::Gaussian | Family::Tent => Regularity::W12,
            Family::StepIndicator => Regularity::NotW12,
            Family::Cusp { alpha } => {
                if alpha > 0.5 {
                    Regularity::W12
                } else if alpha < 0.5 {
                    Regularity::NotW12
                } else {
                    Regularity::Boundary
                }
            }
        }
    }

    /// Closed-form `int |grad u|^2` in dimension `dim`, when finite and known.
    pub fn known_dirichlet_energy(&self, dim: usize) -> Option<f64> {
        use std::f64::consts::PI;
        // 1-D energy and L2 norm squared of the profile
        let (e1, l2) = match self.family {
            Family::Gaussian => {
                return Some(if dim == 1 { (PI / 2.0).sqrt() } else { PI });
            }
            Family::Tent => (2.0, 2.0 / 3.0),
            Family::StepIndicator => return None,
            Family::Cusp { alpha } if alpha > 0.5 => {
                (2.0 * alpha * alpha / (2.0 * alpha - 1.0), 2.0 / (2.0 * alpha + 1.0))
            }
            Family::Cusp { .. } => return None,
        };
        Some(if dim == 1 { e1 } else { 2.0 * e1 * l2 })
    }

    fn profile_1d(&self, x: f64) -> f64 {
        match self.family {
            Family::Gaussian => (-x * x).exp(),
            Family::Tent => (1.0 - x.abs()).max(0.0),
            Family::StepIndicator => {
                if (0.0..1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Cusp { alpha } => (1.0 - x.abs()).max(0.0).powf(alpha),
        }
    }

    /// Value at a point of R^n.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let v = match self.family {
            Family::Gaussian => (-x.iter().map(|c| c * c).sum::<f64>()).exp(),
            _ => x.iter().map(|&c| self.profile_1d(c)).product(),
        };
        if matches!(self.family, Family::Gaussian) && v < GAUSSIAN_CUTOFF {
            0.0
        } else {
            v
        }
    }
}

impl fmt::Display for TestFunctionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// An axis interval `[lo, hi]`, shared by every axis in 2-D.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(invalid(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// Parses `a:b`.
    pub fn parse(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("box `{s}` must look like a:b")))?;
        Self::new(parse_num(a)?, parse_num(b)?)
    }
}

/// Samples `spec` on `[lo, hi]^dim` with spacing `dx`; node 0 sits at `lo`
/// and the last node at `hi` (rounded to the grid).
pub fn sample(spec: &TestFunctionSpec, dim: usize, domain: Interval, dx: f64) -> Result<GridFunction> {
    sample_padded(spec, dim, domain, dx, 0.0)
}

/// Like [`sample`], additionally requiring a zero margin of at least
/// `min_padding` inside the box.
pub fn sample_padded(
    spec: &TestFunctionSpec,
    dim: usize,
    domain: Interval,
    dx: f64,
    min_padding: f64,
) -> Result<GridFunction> {
    if dim != 1 && dim != 2 {
        return Err(invalid(format!("dimension must be 1 or 2, got {dim}")));
    }
    if !(dx > 0.0 && dx.is_finite()) {
        return Err(invalid("grid spacing must be positive"));
    }
    let n = ((domain.hi - domain.lo) / dx).round() as usize + 1;
    if n < 3 {
        return Err(invalid("grid has fewer than three nodes per axis"));
    }
    let node = |i: usize| domain.lo + i as f64 * dx;
    let (shape, values) = if dim == 1 {
        (vec![n], (0..n).map(|i| spec.eval(&[node(i)])).collect())
    } else {
        let mut v = Vec::with_capacity(n * n);
        for iy in 0..n {
            for ix in 0..n {
                v.push(spec.eval(&[node(ix), node(iy)]));
            }
        }
        (vec![n, n], v)
    };
    let g = GridFunction::new(vec![domain.lo; dim], dx, shape, values)?;
    if g.padding_radius() <= 0.0 && g.values().iter().any(|v| *v != 0.0) {
        return Err(Error::Precondition(format!(
            "box [{}, {}] is too small: {} does not vanish at the boundary",
            domain.lo, domain.hi, spec
        )));
    }
    if g.padding_radius() < min_padding {
        return Err(Error::Precondition(format!(
            "box [{}, {}] leaves a zero margin of {} < requested {}",
            domain.lo,
            domain.hi,
            g.padding_radius(),
            min_padding
        )));
    }
    Ok(g)
}

/// How values outside the box are continued during convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Zero extension (the R^n setting; requires the padding contract).
    Zero,
    /// Even reflection about the outer cell faces; preserves constants and mass.
    Reflect,
}

/// Discrete kernel weights on a grid: `w[j]` for offsets `-half..=half` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    dim: usize,
    half: usize,
    dx: f64,
    weights: Vec<f64>,
}

impl Stencil {
    /// Cell-averaged weights of an already-scaled kernel, renormalized so that
    /// `sum w dx^n = 1` when `normalize` is set. Self-convolutions use the
    /// discrete self-convolution of the factor's weights.
    pub fn for_kernel(kernel: &Kernel, dx: f64, normalize: bool) -> Result<Self> {
        Self::for_kernel_capped(kernel, dx, normalize, usize::MAX)
    }

    /// As [`Stencil::for_kernel`], keeping at most `max_half` offsets per side.
    pub fn for_kernel_capped(kernel: &Kernel, dx: f64, normalize: bool, max_half: usize) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(invalid("grid spacing must be positive"));
        }
        if let Some(factor) = kernel.self_convolution_factor() {
            let base = Stencil::for_kernel(&factor, dx, normalize)?;
            let mut s = base.self_convolve();
            s.truncate(max_half);
            if normalize {
                s.normalize();
            }
            return Ok(s);
        }
        let dim = kernel.dim();
        let half = ((kernel.support_radius() / dx + 0.5).floor() as usize).min(max_half);
        let side = 2 * half + 1;
        let mut weights = vec![0.0; side.pow(dim as u32)];
        if dim == 1 {
            let bps = kernel.breakpoints_1d();
            for j in 0..=half {
                let c = j as f64 * dx;
                let avg = GL8.integrate_pieces(c - 0.5 * dx, c + 0.5 * dx, &bps, |y| kernel.eval(&[y])) / dx;
                weights[half + j] = avg;
                weights[half - j] = avg;
            }
        } else {
            let sub = SUBSAMPLES_2D;
            for jy in 0..=half {
                for jx in jy..=half {
                    let mut acc = 0.0;
                    for a in 0..sub {
                        let x = (jx as f64 - 0.5 + (a as f64 + 0.5) / sub as f64) * dx;
                        for b in 0..sub {
                            let y = (jy as f64 - 0.5 + (b as f64 + 0.5) / sub as f64) * dx;
                            acc += kernel.eval(&[x, y]);
                        }
                    }
                    let avg = acc / (sub * sub) as f64;
                    for (px, py) in [(jx, jy), (jy, jx)] {
                        for sx in [half - px, half + px] {
                            for sy in [half - py, half + py] {
                                weights[sy * side + sx] = avg;
                            }
                        }
                    }
                }
            }
        }
        let mut s = Stencil { dim, half, dx, weights };
        if normalize {
            s.normalize();
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn half_width(&self) -> usize {
        self.half
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at integer offset `j` (1-D) or `(jx, jy)`; zero outside.
    pub fn at(&self, offset: &[isize]) -> f64 {
        let h = self.half as isize;
        if offset.iter().any(|o| o.abs() > h) {
            return 0.0;
        }
        let side = 2 * self.half + 1;
        if self.dim == 1 {
            self.weights[(offset[0] + h) as usize]
        } else {
            self.weights[(offset[1] + h) as usize * side + (offset[0] + h) as usize]
        }
    }

    /// `sum w dx^n`
    pub fn mass(&self) -> f64 {
        self.weights.iter().sum::<f64>() * self.dx.powi(self.dim as i32)
    }

    fn normalize(&mut self) {
        let m = self.mass();
        for w in &mut self.weights {
            *w /= m;
        }
    }

    fn truncate(&mut self, max_half: usize) {
        if max_half >= self.half {
            return;
        }
        let side = 2 * self.half + 1;
        let new_side = 2 * max_half + 1;
        let off = self.half - max_half;
        self.weights = if self.dim == 1 {
            self.weights[off..off + new_side].to_vec()
        } else {
            let mut w = Vec::with_capacity(new_side * new_side);
            for y in off..off + new_side {
                w.extend_from_slice(&self.weights[y * side + off..y * side + off + new_side]);
            }
            w
        };
        self.half = max_half;
    }

    /// Discrete `w * w dx^n`; support doubles.
    pub fn self_convolve(&self) -> Stencil {
        let side = 2 * self.half + 1;
        let half2 = 2 * self.half;
        let side2 = 2 * half2 + 1;
        let vol = self.dx.powi(self.dim as i32);
        let mut out = vec![0.0; side2.pow(self.dim as u32)];
        if self.dim == 1 {
            for (a, wa) in self.weights.iter().enumerate() {
                for (b, wb) in self.weights.iter().enumerate() {
                    out[a + b] += wa * wb * vol;
                }
            }
        } else {
            for ay in 0..side {
                for ax in 0..side {
                    let wa = self.weights[ay * side + ax];
                    if wa == 0.0 {
                        continue;
                    }
                    for by in 0..side {
                        let row = (ay + by) * side2 + ax;
                        for bx in 0..side {
                            out[row + bx] += wa * self.weights[by * side + bx] * vol;
                        }
                    }
                }
            }
        }
        Stencil {
            dim: self.dim,
            half: half2,
            dx: self.dx,
            weights: out,
        }
    }

    /// Applies the stencil: `out[i] = sum_j w[j] u[i - j] dx^n`.
    pub fn apply(&self, u: &GridFunction, boundary: Boundary) -> Result<GridFunction> {
        if u.dim() != self.dim {
            return Err(Error::GridMismatch("stencil and grid dimensions differ".into()));
        }
        if (u.spacing() - self.dx).abs() > 1e-12 * self.dx {
            return Err(Error::GridMismatch("stencil built for a different spacing".into()));
        }
        if boundary == Boundary::Reflect && u.shape().iter().any(|&n| n <= self.half) {
            return Err(Error::Precondition(
                "reflecting convolution needs the stencil to be shorter than the grid".into(),
            ));
        }
        let vals = if self.dim == 1 {
            self.apply_1d(u.values(), boundary)
        } else {
            self.apply_2d(u.values(), u.shape()[0], u.shape()[1], boundary)
        };
        u.with_values(vals)
    }

    fn apply_1d(&self, u: &[f64], boundary: Boundary) -> Vec<f64> {
        let n = u.len() as isize;
        let h = self.half as isize;
        let w = &self.weights;
        let mut out = vec![0.0; u.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let i = i as isize;
            let mut acc = 0.0;
            for j in -h..=h {
                let k = i - j;
                let v = if (0..n).contains(&k) {
                    u[k as usize]
                } else {
                    match boundary {
                        Boundary::Zero => continue,
                        Boundary::Reflect => u[reflect(k, n)],
                    }
                };
                acc += w[(j + h) as usize] * v;
            }
            *o = acc * self.dx;
        }
        out
    }

    fn apply_2d(&self, u: &[f64], nx: usize, ny: usize, boundary: Boundary) -> Vec<f64> {
        let h = self.half as isize;
        let side = 2 * self.half + 1;
        let vol = self.dx * self.dx;
        let (nxi, nyi) = (nx as isize, ny as isize);
        let mut out = vec![0.0; nx * ny];
        for iy in 0..nyi {
            for ix in 0..nxi {
                let mut acc = 0.0;
                for jy in -h..=h {
                    let ky = iy - jy;
                    let ky = if (0..nyi).contains(&ky) {
                        ky as usize
                    } else if boundary == Boundary::Reflect {
                        reflect(ky, nyi)
                    } else {
                        continue;
                    };
                    let wrow = (jy + h) as usize * side;
                    for jx in -h..=h {
                        let kx = ix - jx;
                        let kx = if (0..nxi).contains(&kx) {
                            kx as usize
                        } else if boundary == Boundary::Reflect {
                            reflect(kx, nxi)
                        } else {
                            continue;
                        };
                        acc += self.weights[wrow + (jx + h) as usize] * u[ky * nx + kx];
                    }
                }
                out[iy as usize * nx + ix as usize] = acc * vol;
            }
        }
        out
    }
}

/// Half-sample symmetric reflection: -1 -> 0, n -> n - 1.
fn reflect(k: isize, n: isize) -> usize {
    let period = 2 * n;
    let mut m = k.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// `u_eps = u * phi_eps` with renormalized cell-averaged weights and zero
/// extension. Requires `eps R <= padding` and `eps R >= 8 dx`.
pub fn convolve(u: &GridFunction, kernel: &Kernel, eps: f64) -> Result<GridFunction> {
    convolve_with(u, kernel, eps, Boundary::Zero)
}

/// [`convolve`] with an explicit boundary continuation.
pub fn convolve_with(u: &GridFunction, kernel: &Kernel, eps: f64, boundary: Boundary) -> Result<GridFunction> {
    let stencil = mollifier_stencil(u, kernel, eps, boundary)?;
    stencil.apply(u, boundary)
}

/// Checks the convolution preconditions and builds the normalized stencil.
pub fn mollifier_stencil(u: &GridFunction, kernel: &Kernel, eps: f64, boundary: Boundary) -> Result<Stencil> {
    if !kernel.is_mollifier() {
        return Err(invalid(format!(
            "{} is not a mollifier and cannot be used as a Dirac sequence",
            kernel.kind_label()
        )));
    }
    if kernel.dim() != u.dim() {
        return Err(Error::GridMismatch(format!(
            "kernel is {}-D but the grid is {}-D",
            kernel.dim(),
            u.dim()
        )));
    }
    let scaled = kernel.scale(eps)?;
    let radius = scaled.support_radius();
    let dx = u.spacing();
    if radius < MIN_CELLS_PER_RADIUS * dx * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "kernel under-resolved: eps*R = {radius} < {MIN_CELLS_PER_RADIUS} dx = {}",
            MIN_CELLS_PER_RADIUS * dx
        )));
    }
    if boundary == Boundary::Zero && radius > u.padding_radius() * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "padding violated: eps*R = {radius} exceeds the zero margin {}",
            u.padding_radius()
        )));
    }
    Stencil::for_kernel(&scaled, dx, true)
}

/// Centered second-order differences, one component per axis, zero extension
/// at the box edge.
pub fn gradient(u: &GridFunction) -> Result<Vec<GridFunction>> {
    let dx = u.spacing();
    let v = u.values();
    let at = |k: isize, n: usize, stride: usize, base: usize| -> f64 {
        if k < 0 || k >= n as isize {
            0.0
        } else {
            v[base + k as usize * stride]
        }
    };
    let mut comps = Vec::with_capacity(u.dim());
    if u.dim() == 1 {
        let n = v.len();
        let g = (0..n)
            .map(|i| (at(i as isize + 1, n, 1, 0) - at(i as isize - 1, n, 1, 0)) / (2.0 * dx))
            .collect();
        comps.push(u.with_values(g)?);
    } else {
        let (nx, ny) = (u.shape()[0], u.shape()[1]);
        let mut gx = vec![0.0; nx * ny];
        let mut gy = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let (i, j) = (ix as isize, iy as isize);
                gx[iy * nx + ix] = (at(i + 1, nx, 1, iy * nx) - at(i - 1, nx, 1, iy * nx)) / (2.0 * dx);
                gy[iy * nx + ix] = (at(j + 1, ny, nx, ix) - at(j - 1, ny, nx, ix)) / (2.0 * dx);
            }
        }
        comps.push(u.with_values(gx)?);
        comps.push(u.with_values(gy)?);
    }
    Ok(comps)
}

/// Rectangle rule: `sum g dx^n`.
pub fn integrate(g: &GridFunction) -> f64 {
    g.values().iter().sum::<f64>() * g.cell_volume()
}

/// `sum g^2 dx^n`.
pub fn l2_norm_sq(g: &GridFunction) -> f64 {
    g.values().iter().map(|v| v * v).sum::<f64>() * g.cell_volume()
}

/// One-sided differences on every grid edge, paired with the midpoint value
/// `(u_a + u_b) / 2`. Visits edges to the zero extension as well.
pub(crate) fn for_each_edge(u: &GridFunction, mut visit: impl FnMut(usize, f64, f64)) {
    let dx = u.spacing();
    let v = u.values();
    let val = |k: isize, n: usize, stride: usize, base: usize| -> f64 {
        if k < 0 || k >= n as isize {
            0.0
        } else {
            v[base + k as usize * stride]
        }
    };
    let mut line = |axis: usize, n: usize, stride: usize, base: usize| {
        for k in -1..n as isize {
            let a = val(k, n, stride, base);
            let b = val(k + 1, n, stride, base);
            visit(axis, (b - a) / dx, 0.5 * (a + b));
        }
    };
    if u.dim() == 1 {
        line(0, v.len(), 1, 0);
    } else {
        let (nx, ny) = (u.shape()[0], u.shape()[1]);
        for iy in 0..ny {
            line(0, nx, 1, iy * nx);
        }
        for ix in 0..nx {
            line(1, ny, nx, ix);
        }
    }
}

/// `int |grad u|^2` from one-sided differences on grid edges (a midpoint rule
/// for the derivative). Exact for piecewise-linear functions with kinks at nodes.
pub fn dirichlet_energy(u: &GridFunction) -> f64 {
    let mut acc = 0.0;
    for_each_edge(u, |_, d, _| acc += d * d);
    acc * u.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{make_kernel, Shape};

    fn box1() -> Kernel {
        make_kernel(Shape::Box, 1, 1.0).unwrap()
    }

    #[test]
    fn new_validates_input() {
        assert!(GridFunction::new(vec![0.0], 0.1, vec![3], vec![0.0, 1.0]).is_err());
        assert!(GridFunction::new(vec![0.0], -0.1, vec![2], vec![0.0, 1.0]).is_err());
        assert!(matches!(
            GridFunction::new(vec![0.0], 0.1, vec![2], vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn padding_counts_zero_layers() {
        let g = GridFunction::new(vec![0.0], 0.5, vec![7], vec![0., 0., 1., 2., 0., 0., 0.]).unwrap();
        assert_eq!(g.padding_radius(), 1.0);
    }

    #[test]
    fn step_sampling_is_right_continuous() {
        let dx = 1.0 / 512.0;
        let u = sample(&TestFunctionSpec::step(), 1, Interval::new(-4.0, 5.0).unwrap(), dx).unwrap();
        let at = |x: f64| u.values()[((x + 4.0) / dx).round() as usize];
        assert_eq!(at(0.0), 1.0);
        assert_eq!(at(1.0), 0.0);
        assert_eq!(at(-dx), 0.0);
        assert_eq!(at(1.0 - dx), 1.0);
        assert!((integrate(&u) - 1.0).abs() <= dx);
    }

    #[test]
    fn sampled_families_match_formulas() {
        let dx = 1.0 / 256.0;
        let g = sample(&TestFunctionSpec::gaussian(), 1, Interval::new(-8.0, 8.0).unwrap(), dx).unwrap();
        for i in [0usize, 1000, 2048, 3000] {
            let x = g.coord(0, i);
            let want = (-x * x).exp();
            let want = if want < GAUSSIAN_CUTOFF { 0.0 } else { want };
            assert_eq!(g.values()[i], want);
        }
        let t = sample(&TestFunctionSpec::tent(), 1, Interval::new(-4.0, 4.0).unwrap(), dx).unwrap();
        assert_eq!(t.values()[1024], 1.0);
        assert_eq!(t.values()[1024 - 256], 0.0);
        assert!((t.values()[1024 + 128] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn too_small_box_is_rejected() {
        let r = sample(
            &TestFunctionSpec::gaussian(),
            1,
            Interval::new(-3.0, 3.0).unwrap(),
            0.01,
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
        let r = sample_padded(
            &TestFunctionSpec::tent(),
            1,
            Interval::new(-1.5, 1.5).unwrap(),
            0.01,
            1.0,
        );
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn regularity_labels_for_cusps() {
        assert_eq!(
            TestFunctionSpec::cusp(0.75).unwrap().known_regularity(),
            Regularity::W12
        );
        assert_eq!(
            TestFunctionSpec::cusp(0.25).unwrap().known_regularity(),
            Regularity::NotW12
        );
        assert_eq!(
            TestFunctionSpec::cusp(0.5).unwrap().known_regularity(),
            Regularity::Boundary
        );
        assert!(TestFunctionSpec::cusp(0.25)
            .unwrap()
            .known_dirichlet_energy(1)
            .is_none());
        assert!(TestFunctionSpec::cusp(-1.0).is_err());
    }

    #[test]
    fn parse_specs() {
        assert_eq!(
            TestFunctionSpec::parse("cusp:0.25").unwrap().family,
            Family::Cusp { alpha: 0.25 }
        );
        assert_eq!(
            TestFunctionSpec::parse("step-indicator").unwrap().family,
            Family::StepIndicator
        );
        assert!(TestFunctionSpec::parse("cusp").is_err());
        assert!(TestFunctionSpec::parse("tent:2").is_err());
        assert!(matches!(
            TestFunctionSpec::parse("sawtooth"),
            Err(Error::Unknown { .. })
        ));
    }

    #[test]
    fn convolution_reproduces_constants_on_plateau() {
        let dx = 1.0 / 128.0;
        let n = 1025;
        let vals: Vec<f64> = (0..n)
            .map(|i| if (100..=924).contains(&i) { 2.5 } else { 0.0 })
            .collect();
        let u = GridFunction::new(vec![0.0], dx, vec![n], vals).unwrap();
        let ue = convolve(&u, &box1(), 0.25).unwrap();
        for i in 300..700 {
            assert!((ue.values()[i] - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn box_smooths_step_into_ramp() {
        let dx = 1.0 / 512.0;
        let u = sample(&TestFunctionSpec::step(), 1, Interval::new(-2.0, 3.0).unwrap(), dx).unwrap();
        let eps = 0.1;
        let ue = convolve(&u, &box1(), eps).unwrap();
        // cell interpretation: the indicator covers [-dx/2, 1 - dx/2)
        for (i, v) in ue.values().iter().enumerate() {
            let x = u.coord(0, i);
            let ramp = |d: f64| ((d + eps) / (2.0 * eps)).clamp(0.0, 1.0);
            let want = ramp(x + 0.5 * dx) - ramp(x - 1.0 + 0.5 * dx);
            assert!((v - want).abs() < 1e-12, "x={x}: {v} vs {want}");
        }
    }

    #[test]
    fn convolution_preconditions() {
        let dx = 1.0 / 256.0;
        let u = sample(&TestFunctionSpec::tent(), 1, Interval::new(-1.5, 1.5).unwrap(), dx).unwrap();
        assert!(matches!(convolve(&u, &box1(), 0.6), Err(Error::Precondition(_))));
        assert!(matches!(convolve(&u, &box1(), 0.01), Err(Error::Precondition(_))));
        let att = Kernel::exponential_attraction(1e-12).unwrap();
        assert!(convolve(&u, &att, 0.01).is_err());
        let k2 = make_kernel(Shape::Box, 2, 1.0).unwrap();
        assert!(matches!(convolve(&u, &k2, 0.1), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn gradient_of_tent_and_constant() {
        let dx = 1.0 / 256.0;
        let t = sample(&TestFunctionSpec::tent(), 1, Interval::new(-4.0, 4.0).unwrap(), dx).unwrap();
        let g = &gradient(&t).unwrap()[0];
        for i in 0..t.len() {
            let x = t.coord(0, i);
            if x > -1.0 + 1.5 * dx && x < -1.5 * dx {
                assert!((g.values()[i] - 1.0).abs() < 1e-12);
            }
            if x > 1.5 * dx && x < 1.0 - 1.5 * dx {
                assert!((g.values()[i] + 1.0).abs() < 1e-12);
            }
        }
        let c = GridFunction::new(vec![0.0], dx, vec![50], vec![3.0; 50]).unwrap();
        let gc = &gradient(&c).unwrap()[0];
        assert!(gc.values()[1..49].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn energies_closed_form() {
        let dx = 1.0 / 256.0;
        let t = sample(&TestFunctionSpec::tent(), 1, Interval::new(-4.0, 4.0).unwrap(), dx).unwrap();
        assert!((dirichlet_energy(&t) - 2.0).abs() < 1e-3);
        let g = sample(&TestFunctionSpec::gaussian(), 1, Interval::new(-8.0, 8.0).unwrap(), dx).unwrap();
        assert!((dirichlet_energy(&g) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-4);
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
    }

    #[test]
    fn reflecting_convolution_keeps_constants() {
        let dx = 1.0 / 64.0;
        let u = GridFunction::new(vec![0.0], dx, vec![256], vec![0.25; 256]).unwrap();
        let ue = convolve_with(&u, &box1(), 0.2, Boundary::Reflect).unwrap();
        assert!(ue.values().iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!(convolve_with(&u, &box1(), 0.2, Boundary::Zero).is_err());
    }

    #[test]
    fn text_format_round_trip_2d() {
        let u = GridFunction::new(vec![-1.0, -2.0], 0.5, vec![3, 2], vec![0.0, 1.5, 0.0, 2.0, 1e-300, 0.1]).unwrap();
        let mut buf = Vec::new();
        u.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# dim=2 origin=-1.0,-2.0 dx=0.5\n"));
        let back = GridFunction::read_text(&buf[..]).unwrap();
        assert_eq!(back, u);
    }
}
