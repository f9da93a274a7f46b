//! Command-line front end: kernel moments, single gaps, decay ladders and the
//! bilayer solve/certify pipeline.

use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bilayer::{self, parse_spacing, BilayerConfig, BilayerSolution};
use crate::error::{invalid, Error, Result};
use crate::field::{sample, Interval, TestFunctionSpec};
use crate::gap::{self, check_ladder, classify_with, halving_ladder, DecayFit, FitOptions, Integrand, Verdict};
use crate::kernel::{fmt17, Kernel, DEFAULT_TOLERANCE};

/// Mollification-gap experiments.
#[derive(Debug, Parser)]
#[command(name = "jgap", version, about)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moment report of a kernel; writes moments.txt.
    Moments {
        /// shape:dim:radius
        #[arg(long, default_value = "box:1:1")]
        kernel: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
    },
    /// One gap evaluation; writes gap.txt.
    Gap {
        #[command(flatten)]
        experiment: Experiment,
        #[arg(long)]
        eps: f64,
    },
    /// Gap ladder with power-law fit; writes ladder.csv and ladder.svg.
    Ladder {
        #[command(flatten)]
        experiment: Experiment,
        #[arg(long, default_value_t = 0.16)]
        eps_max: f64,
        #[arg(long, default_value_t = 5)]
        rungs: usize,
        #[command(flatten)]
        thresholds: Thresholds,
    },
    /// Minimize the bilayer energy; writes solution.dat.
    BilayerSolve {
        #[command(flatten)]
        problem: ProblemArgs,
    },
    /// Certify a bilayer minimizer; writes certificate.txt (and solution.dat
    /// when it solves first).
    BilayerCertify {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Certify this profile instead of solving.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[command(flatten)]
        thresholds: Thresholds,
    },
}

/// Test function, kernel, integrand and grid.
#[derive(Debug, Clone, Args)]
pub struct Experiment {
    /// family[:param], e.g. gaussian, tent, step, cusp:0.25
    #[arg(long = "fn", default_value = "gaussian")]
    pub function: String,
    /// shape:dim:radius
    #[arg(long, default_value = "box:1:1")]
    pub kernel: String,
    /// Integrand: square, entropy, logcosh.
    #[arg(long = "f", default_value = "square")]
    pub integrand: String,
    /// Grid spacing; accepts 1/N.
    #[arg(long, default_value = "1/2048", value_parser = spacing_arg)]
    pub dx: f64,
    /// Sampling box a:b (every axis); defaults to one fitted to the function.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Thresholds {
    #[arg(long)]
    pub w12_threshold: Option<f64>,
    #[arg(long)]
    pub sub_threshold: Option<f64>,
    #[arg(long)]
    pub min_r2: Option<f64>,
}

impl Thresholds {
    fn options(&self) -> Result<FitOptions> {
        let mut o = FitOptions::default();
        if let Some(v) = self.w12_threshold {
            o.w12_threshold = v;
        }
        if let Some(v) = self.sub_threshold {
            o.sub_threshold = v;
        }
        if let Some(v) = self.min_r2 {
            o.min_r2 = v;
        }
        if !(o.sub_threshold < o.w12_threshold && (0.0..=1.0).contains(&o.min_r2)) {
            return Err(invalid("need sub-threshold < w12-threshold and min-r2 in [0, 1]"));
        }
        Ok(o)
    }
}

/// Bilayer problem from a config file plus flag overrides.
#[derive(Debug, Clone, Default, Args)]
pub struct ProblemArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long = "length", alias = "L")]
    pub length: Option<f64>,
    #[arg(long, value_parser = spacing_arg)]
    pub dx: Option<f64>,
    /// Certificate mollifier, shape:dim:radius.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Integrand name.
    #[arg(long = "f")]
    pub integrand: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long)]
    pub rungs: Option<usize>,
}

impl ProblemArgs {
    pub fn resolve(&self) -> Result<BilayerConfig> {
        let mut cfg = match &self.config {
            Some(path) => BilayerConfig::parse(&fs::read_to_string(path)?)?,
            None => BilayerConfig::default(),
        };
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.h {
            cfg.h = v;
        }
        if let Some(v) = self.length {
            cfg.length = v;
        }
        if let Some(v) = self.dx {
            cfg.dx = v;
        }
        if let Some(v) = &self.kernel {
            cfg.kernel = v.clone();
        }
        if let Some(v) = &self.integrand {
            cfg.f = v.clone();
        }
        if let Some(v) = self.tol {
            cfg.tol = v;
        }
        if let Some(v) = self.max_iter {
            cfg.max_iter = v;
        }
        if let Some(v) = self.eps_max {
            cfg.eps_max = v;
        }
        if let Some(v) = self.rungs {
            cfg.rungs = v;
        }
        Ok(cfg)
    }
}

fn spacing_arg(s: &str) -> std::result::Result<f64, String> {
    parse_spacing(s).map_err(|e| e.to_string())
}

fn default_box(spec: &TestFunctionSpec) -> Interval {
    use crate::field::Family;
    match spec.family {
        Family::Gaussian => Interval { lo: -7.0, hi: 7.0 },
        Family::StepIndicator => Interval { lo: -1.0, hi: 2.0 },
        _ => Interval { lo: -2.0, hi: 2.0 },
    }
}

struct Prepared {
    spec: TestFunctionSpec,
    kernel: Kernel,
    f: Integrand,
    domain: Interval,
}

impl Experiment {
    fn prepare(&self) -> Result<Prepared> {
        let spec = TestFunctionSpec::parse(&self.function)?;
        let kernel = Kernel::parse_spec(&self.kernel)?;
        let f = Integrand::by_name(&self.integrand)?;
        let domain = match &self.domain {
            Some(b) => Interval::parse(b)?,
            None => default_box(&spec),
        };
        Ok(Prepared {
            spec,
            kernel,
            f,
            domain,
        })
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = fs::File::create(&path)?;
    file.write_all(contents.as_bytes())?;
    Ok(path)
}

/// Executes a parsed command. Diagnostics go to stderr, short summaries to stdout.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let out = &cfg.out;
    match &cfg.command {
        Command::Moments { kernel, tol } => {
            if !(*tol > 0.0) {
                return Err(invalid("tolerance must be positive"));
            }
            let k = Kernel::parse_spec(kernel)?;
            let report = k.validate(*tol)?;
            let text = report.to_text();
            write_file(out, "moments.txt", &text)?;
            print!("{text}");
        }
        Command::Gap { experiment, eps } => {
            if !(*eps > 0.0 && eps.is_finite()) {
                return Err(invalid("eps must be positive"));
            }
            let p = experiment.prepare()?;
            let u = sample(&p.spec, p.kernel.dim(), p.domain, experiment.dx)?;
            let t = gap::gap(&u, &p.f, &p.kernel, *eps)?;
            let mut text = String::new();
            text.push_str(&format!("fn = {}\n", p.spec));
            text.push_str(&format!("kernel = {}\n", p.kernel.kind_label()));
            text.push_str(&format!("f = {}\n", p.f.name()));
            text.push_str(&format!("dx = {}\n", fmt17(experiment.dx)));
            text.push_str(&format!("eps = {}\n", fmt17(*eps)));
            text.push_str(&format!("gap = {}\n", fmt17(t)));
            text.push_str(&format!("gap_over_eps2 = {}\n", fmt17(t / (eps * eps))));
            if p.kernel.is_mollifier() && p.spec.known_regularity() == crate::field::Regularity::W12 {
                match gap::limit_functional(&u, &p.f, &p.kernel) {
                    Ok(l) => text.push_str(&format!("limit_functional = {}\n", fmt17(l))),
                    Err(e) => eprintln!("warning: limit functional unavailable: {e}"),
                }
            }
            write_file(out, "gap.txt", &text)?;
            print!("{text}");
        }
        Command::Ladder {
            experiment,
            eps_max,
            rungs,
            thresholds,
        } => {
            let opts = thresholds.options()?;
            let p = experiment.prepare()?;
            if !(*eps_max > 0.0 && eps_max.is_finite()) {
                return Err(invalid("eps-max must be positive"));
            }
            let eps = halving_ladder(*eps_max, *rungs);
            check_ladder(&eps)?;
            let u = sample(&p.spec, p.kernel.dim(), p.domain, experiment.dx)?;
            let fit = gap::decay_ladder_with(&u, &p.f, &p.kernel, &eps, crate::field::Boundary::Zero, &opts)?;
            let class = classify_with(&fit, &p.f, &opts);
            write_file(out, "ladder.csv", &fit.to_csv(class.verdict))?;
            write_file(out, "ladder.svg", &ladder_svg(&fit))?;
            println!("exponent = {}", fit.exponent.map(fmt17).unwrap_or_else(|| "NA".into()));
            println!("r2 = {}", fmt17(fit.r_squared));
            println!("verdict = {}", class.verdict);
        }
        Command::BilayerSolve { problem } => {
            let cfg = problem.resolve()?;
            let p = cfg.problem()?;
            let margin = 2.0 * cfg.eps_max * cfg.mollifier()?.support_radius();
            let (p, sol) = bilayer::minimize_with_margin(&p, &cfg.solve_options(), margin)?;
            write_solution(out, &sol)?;
            report_solution(&p, &sol);
            if !sol.converged {
                return Err(Error::NonConvergence {
                    iterations: sol.iterations,
                    detail: format!("stationarity {:e} above tol {:e}", sol.stationarity, cfg.tol),
                });
            }
        }
        Command::BilayerCertify {
            problem,
            solution,
            thresholds,
        } => {
            let opts = thresholds.options()?;
            let cfg = problem.resolve()?;
            let mollifier = cfg.mollifier()?;
            let eps = cfg.ladder()?;
            let p = cfg.problem()?;
            bilayer::check_resolution(&p, &mollifier, &eps)?;
            let (p, sol) = match solution {
                Some(path) => {
                    let file = fs::File::open(path)?;
                    let u = crate::field::GridFunction::read_text(BufReader::new(file))?;
                    let p = if (u.len() as f64 * u.spacing() - p.length()).abs() > 1e-9 * p.length() {
                        p.resized(u.len() as f64 * u.spacing())?
                    } else {
                        p
                    };
                    let sol = BilayerSolution::from_profile(u, &p)?;
                    (p, sol)
                }
                None => {
                    let margin = 2.0 * cfg.eps_max * mollifier.support_radius();
                    let (p, sol) = bilayer::minimize_with_margin(&p, &cfg.solve_options(), margin)?;
                    write_solution(out, &sol)?;
                    report_solution(&p, &sol);
                    (p, sol)
                }
            };
            let cert = bilayer::certify_with(&sol, &p, &mollifier, &eps, &opts)?;
            write_file(out, "certificate.txt", &cert.to_text())?;
            println!("verdict = {}", cert.classification.verdict);
            println!("accepted = {}", cert.accepted());
            if !cert.accepted() {
                let reason = if !cert.minimal {
                    "a mollified profile has lower energy, so the profile is not a minimizer"
                } else if cert.classification.verdict != Verdict::W12Consistent {
                    "the gap ladder does not decay like eps^2"
                } else {
                    "nonlocal ratios are not stable across the ladder"
                };
                return Err(Error::Precondition(format!("certificate refused: {reason}")));
            }
        }
    }
    Ok(())
}

fn write_solution(out: &Path, sol: &BilayerSolution) -> Result<()> {
    let mut buf = Vec::new();
    sol.u.write_text(&mut buf)?;
    buf.extend_from_slice(sol.summary().as_bytes());
    let text = String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))?;
    write_file(out, "solution.dat", &text)?;
    Ok(())
}

fn report_solution(p: &bilayer::BilayerProblem, sol: &BilayerSolution) {
    println!("L = {}", fmt17(p.length()));
    println!("energy = {}", fmt17(sol.energy));
    println!("iterations = {}", sol.iterations);
    println!("converged = {}", sol.converged);
}

/// Minimal log-log plot of a ladder with its fitted line.
pub fn ladder_svg(fit: &DecayFit) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let pts: Vec<(f64, f64)> = fit
        .ladder
        .iter()
        .filter(|(_, t)| *t > 0.0)
        .map(|(e, t)| (e.log10(), t.log10()))
        .collect();
    let mut svg =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n");
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if pts.is_empty() {
        svg.push_str(
            "<text x=\"24\" y=\"40\" font-family=\"monospace\" font-size=\"12\">no positive gaps</text>\n</svg>\n",
        );
        return svg;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    svg.push_str(&format!(
        "<path d=\"M{:.2} {:.2} L{:.2} {:.2} L{:.2} {:.2}\" stroke=\"black\" fill=\"none\"/>\n",
        PAD,
        PAD,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    ));
    if let (Some(p), Some(c)) = (fit.exponent, fit.prefactor) {
        let line = |x: f64| c.log10() + p * x;
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"steelblue\"/>\n",
            sx(x0),
            sy(line(x0)),
            sx(x1),
            sy(line(x1))
        ));
    }
    for (e, t) in &fit.ladder {
        if *t <= 0.0 {
            continue;
        }
        let fill = if fit.dropped.contains(e) { "white" } else { "black" };
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" stroke=\"black\" fill=\"{fill}\"/>\n",
            sx(e.log10()),
            sy(t.log10())
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"12\">log10 eps [{:.3}, {:.3}]</text>\n",
        PAD,
        H - 12.0,
        x0,
        x1
    ));
    svg.push_str(&format!(
        "<text x=\"8\" y=\"20\" font-family=\"monospace\" font-size=\"12\">log10 T [{:.3}, {:.3}]  slope {}</text>\n",
        y0,
        y1,
        fit.exponent.map(|p| format!("{p:.4}")).unwrap_or_else(|| "NA".into())
    ));
    svg.push_str("</svg>\n");
    svg
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
