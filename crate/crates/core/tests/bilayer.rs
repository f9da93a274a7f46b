mod common;

use common::SmallQp;
use jgap::bilayer::{
    certify, energy, minimize, minimize_from, nonlocal_smoothing_bound, project_k, ratio_spread, BilayerConfig,
    BilayerProblem, BilayerSolution, Feasibility, KappaOperator, SolveOptions,
};
use jgap::field::l2_norm_sq;
use jgap::{convolve, make_kernel, Error, GridFunction, Integrand, Kernel, Shape, Verdict};
use proptest::prelude::*;

fn square_problem(alpha: f64, h: f64, length: f64, dx: f64) -> BilayerProblem {
    BilayerProblem::new(alpha, h, length, dx, Integrand::square()).unwrap()
}

fn tight() -> SolveOptions {
    SolveOptions {
        tol: 1e-10,
        ..SolveOptions::default()
    }
}

fn check_qp(alpha: f64, h: f64, length: f64, dx: f64, brute: bool) {
    let p = square_problem(alpha, h, length, dx);
    let qp = SmallQp::new(p.cells(), p.shift(), dx, alpha);
    let (want, _) = if brute { qp.brute_force() } else { qp.interior_point() };
    let sol = minimize(&p, &tight()).unwrap();
    assert!(sol.converged);
    assert!(
        (sol.energy - want).abs() <= 1e-6,
        "alpha {alpha} h {h} dx {dx}: {} vs {want}",
        sol.energy
    );
    assert!((qp.energy(sol.u.values()) - sol.energy).abs() <= 1e-12);
}

#[test]
fn matches_exhaustive_active_sets() {
    for alpha in [0.0, 5.0, 20.0] {
        check_qp(alpha, 1.0, 4.0, 0.5, true);
    }
    for alpha in [3.0, 20.0] {
        check_qp(alpha, 0.8, 4.0, 0.4, true);
    }
}

#[test]
fn matches_interior_point_on_24_cells() {
    check_qp(0.5, 1.0, 4.0, 1.0 / 6.0, false);
    check_qp(0.0, 0.5, 4.0, 1.0 / 6.0, false);
}

#[test]
fn kappa_operator_matches_cell_averages() {
    let dx = 0.25;
    let p = square_problem(1.0, 0.5, 4.0, dx);
    let op: &KappaOperator = p.kappa_operator();
    let n = p.cells();
    for j in [0, 3, 15] {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = op.apply(&e);
        for (i, v) in col.iter().enumerate() {
            let want = common::kappa_cell_average(i as isize - j as isize, dx) * dx;
            assert!((v - want).abs() <= 1e-15, "({i}, {j})");
        }
    }
}

#[test]
fn uniform_minimizer_without_attraction() {
    let p = square_problem(0.0, 1.0, 4.0, 1.0 / 256.0);
    let sol = minimize(&p, &SolveOptions::default()).unwrap();
    assert!(sol.converged);
    let dev = sol.u.values().iter().map(|v| (v - 0.25).abs()).fold(0.0, f64::max);
    assert!(dev <= 1e-6, "{dev:e}");
    assert!((sol.energy - 0.25).abs() <= 1e-8);
    assert!(sol.feasibility.is_feasible());
}

#[test]
fn energy_examples() {
    let p = BilayerProblem::new(0.0, 1.0, 5.0, 1.0 / 64.0, Integrand::entropy()).unwrap();
    let zero = p.grid(vec![0.0; p.cells()]).unwrap();
    assert_eq!(energy(&zero, &p).unwrap(), 0.0);
    let flat = p.grid(vec![0.2; p.cells()]).unwrap();
    let f = Integrand::entropy();
    assert!((energy(&flat, &p).unwrap() - 5.0 * f.f(0.2)).abs() < 1e-13);
    let other = square_problem(0.0, 1.0, 4.0, 1.0 / 64.0);
    assert!(matches!(energy(&flat, &other), Err(Error::GridMismatch(_))));
}

#[test]
fn history_is_monotone_and_bounded() {
    let p = square_problem(20.0, 0.5, 8.0, 1.0 / 64.0);
    let sol = minimize(&p, &SolveOptions::default()).unwrap();
    assert!(sol.converged);
    for w in sol.history.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
    assert!(sol.u.values().iter().all(|v| *v <= 1.0 + 1e-8));
}

#[test]
fn strong_attraction_saturates_pairs() {
    let p = square_problem(20.0, 0.5, 8.0, 1.0 / 64.0);
    let sol = minimize(&p, &SolveOptions::default()).unwrap();
    assert!((sol.feasibility.pair_max - 1.0).abs() <= 1e-8);
    let m = p.shift();
    let v = sol.u.values();
    let saturated = (m..v.len()).filter(|&i| v[i] + v[i - m] > 1.0 - 1e-6).count();
    assert!(saturated as f64 * p.spacing() >= 0.5);
    let support = v.iter().filter(|x| **x > 1e-10).count() as f64 * p.spacing();
    assert!(support < 4.0, "support {support}");
}

#[test]
fn restart_is_a_fixed_point() {
    let p = square_problem(5.0, 0.5, 6.0, 1.0 / 64.0);
    let opts = tight();
    let sol = minimize(&p, &opts).unwrap();
    let again = minimize_from(&p, &sol.u, &opts).unwrap();
    assert!(again.converged);
    assert!(again.iterations <= 1);
    assert!((again.energy - sol.energy).abs() <= 1e-10);
}

#[test]
fn projection_examples() {
    let p = square_problem(0.0, 1.0, 4.0, 1.0 / 64.0);
    let zero = p.grid(vec![0.0; p.cells()]).unwrap();
    let u = project_k(&zero, &p, 1e-12).unwrap();
    assert!(u.values().iter().all(|v| (v - 0.25).abs() < 1e-12));

    let mut spike = vec![0.0; p.cells()];
    spike[100] = 2.0;
    let s = project_k(&p.grid(spike).unwrap(), &p, 1e-12).unwrap();
    assert!(Feasibility::of(s.values(), p.shift(), p.spacing()).is_feasible());
}

#[test]
fn projection_matches_qp_oracles() {
    let p = square_problem(0.0, 1.0, 4.0, 0.5);
    let mut spike = vec![0.0; 8];
    spike[3] = 2.0;
    for y in [spike, vec![3.0, -1.0, 0.5, 0.0, 0.0, 2.0, 0.1, -0.3]] {
        let u = project_k(&p.grid(y.clone()).unwrap(), &p, 1e-13).unwrap();
        let qp = SmallQp::projection(&y, p.shift(), 0.5);
        let (want, w) = qp.brute_force();
        assert!((qp.energy(u.values()) - want).abs() <= 1e-10);
        for (a, b) in u.values().iter().zip(&w) {
            assert!((a - b).abs() <= 1e-8);
        }
    }
    let y: Vec<f64> = (0..24).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.2).collect();
    let q = square_problem(0.0, 0.5, 4.0, 1.0 / 6.0);
    let u = project_k(&q.grid(y.clone()).unwrap(), &q, 1e-13).unwrap();
    let qp = SmallQp::projection(&y, q.shift(), 1.0 / 6.0);
    let (want, _) = qp.interior_point();
    assert!((qp.energy(u.values()) - want).abs() <= 1e-8);
}

#[test]
fn step_profile_is_refused() {
    let p = BilayerProblem::new(4.0, 0.5, 8.0, 1.0 / 512.0, Integrand::entropy()).unwrap();
    let values = (0..p.cells())
        .map(|i| {
            let x = (i as f64 + 0.5) * p.spacing();
            if (3.0..5.0).contains(&x) {
                0.5
            } else {
                0.0
            }
        })
        .collect();
    let sol = BilayerSolution::from_profile(p.grid(values).unwrap(), &p).unwrap();
    assert!(sol.feasibility.is_feasible());
    let k = make_kernel(Shape::Box, 1, 1.0).unwrap();
    let cert = certify(&sol, &p, &k, &[0.2, 0.1, 0.05, 0.025]).unwrap();
    assert!(!cert.minimal);
    assert!(!cert.accepted());
}

#[test]
fn infeasible_profile_is_rejected() {
    let p = square_problem(1.0, 0.5, 4.0, 1.0 / 64.0);
    let sol = BilayerSolution::from_profile(p.grid(vec![1.0; p.cells()]).unwrap(), &p).unwrap();
    let k = make_kernel(Shape::Box, 1, 1.0).unwrap();
    assert!(matches!(
        certify(&sol, &p, &k, &[1.0, 0.5, 0.25, 0.125]),
        Err(Error::Infeasible(_))
    ));
}

#[test]
fn uniform_solution_certifies() {
    let p = square_problem(0.0, 1.0, 4.0, 1.0 / 256.0);
    let sol = minimize(&p, &SolveOptions::default()).unwrap();
    let k = make_kernel(Shape::Box, 1, 1.0).unwrap();
    let cert = certify(&sol, &p, &k, &[0.5, 0.25, 0.125, 0.0625]).unwrap();
    assert!(cert.fit.null);
    assert_eq!(cert.classification.verdict, Verdict::W12Consistent);
    assert!(cert.accepted());
}

#[test]
fn nonlocal_ratios_are_bounded() {
    let p = square_problem(1.0, 0.5, 16.0, 1.0 / 512.0);
    let k = make_kernel(Shape::Box, 1, 1.0).unwrap();
    let eps = [0.2, 0.1, 0.05, 0.025];
    let zero = p.grid(vec![0.0; p.cells()]).unwrap();
    let rows = nonlocal_smoothing_bound(&zero, &p, &k, &eps).unwrap();
    assert!(rows.iter().all(|r| r.ratio == 0.0));
    assert_eq!(ratio_spread(&rows), 1.0);

    let smooth = p
        .grid(
            (0..p.cells())
                .map(|i| {
                    let x = (i as f64 + 0.5) * p.spacing() - 8.0;
                    (-x * x).exp() / std::f64::consts::PI.sqrt()
                })
                .map(|v| if v < 1e-17 { 0.0 } else { v })
                .collect(),
        )
        .unwrap();
    let step = p
        .grid(
            (0..p.cells())
                .map(|i| {
                    let x = (i as f64 + 0.5) * p.spacing();
                    if (7.5..8.5).contains(&x) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
        .unwrap();
    for u in [smooth, step] {
        let rows = nonlocal_smoothing_bound(&u, &p, &k, &eps).unwrap();
        let max = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        assert!(max.is_finite() && max < 1.0, "{max}");
        assert!(ratio_spread(&rows) <= 4.0);
    }
}

#[test]
fn problem_validation() {
    let f = Integrand::square;
    assert!(BilayerProblem::new(-1.0, 0.5, 8.0, 1.0 / 64.0, f()).is_err());
    assert!(BilayerProblem::new(1.0, 0.3, 8.0, 1.0 / 64.0, f()).is_err());
    assert!(BilayerProblem::new(1.0, 0.5, 3.0, 1.0 / 64.0, f()).is_err());
    assert!(BilayerProblem::new(1.0, 0.5, 8.0, 1.0 / 64.0, Integrand::logcosh()).is_ok());
    let bad = Kernel::custom(1, 1.0, "negative", |r| r - 0.5).unwrap();
    assert!(BilayerProblem::with_kappa(1.0, 0.5, 8.0, 1.0 / 64.0, f(), bad).is_err());
}

#[test]
fn config_parsing() {
    let cfg = BilayerConfig::parse("alpha = 2\nh = 0.25 # rods\nL = 6\ndx = 1/128\nf = square\n").unwrap();
    assert_eq!(cfg.alpha, 2.0);
    assert_eq!(cfg.h, 0.25);
    assert_eq!(cfg.length, 6.0);
    assert_eq!(cfg.dx, 1.0 / 128.0);
    assert_eq!(cfg.f, "square");
    assert_eq!(cfg.rungs, 5);
    assert!(cfg.problem().is_ok());
    assert!(matches!(BilayerConfig::parse("beta = 1"), Err(Error::Parse(_))));
    assert!(matches!(BilayerConfig::parse("alpha 1"), Err(Error::Parse(_))));
    assert!(matches!(BilayerConfig::parse("alpha = x"), Err(Error::Parse(_))));
}

fn feasible_profile(p: &BilayerProblem, raw: &[f64]) -> GridFunction {
    // values in [0.25, 0.5] on the middle half, rescaled to unit mass; the
    // pair constraint holds because every value stays at or below 1/2
    let n = p.cells();
    let dx = p.spacing();
    let mut v = vec![0.0; n];
    for (i, slot) in v.iter_mut().enumerate().take(3 * n / 4).skip(n / 4) {
        *slot = raw[i % raw.len()];
    }
    let mass: f64 = v.iter().sum::<f64>() * dx;
    p.grid(v.into_iter().map(|x| x / mass).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn feasible_sets_are_closed_under_mollification(
        raw in prop::collection::vec(0.25f64..0.5, 1..40),
        eps in 0.125f64..0.5,
        shape in prop::sample::select(vec![Shape::Box, Shape::Tent, Shape::Epanechnikov]),
    ) {
        let p = square_problem(1.0, 0.5, 8.0, 1.0 / 64.0);
        let u = feasible_profile(&p, &raw);
        prop_assert!(Feasibility::of(u.values(), p.shift(), p.spacing()).is_feasible());
        let k = make_kernel(shape, 1, 1.0).unwrap();
        let ue = convolve(&u, &k, eps).unwrap();
        prop_assert!(Feasibility::of(ue.values(), p.shift(), p.spacing()).is_feasible());
        let back = project_k(&ue, &p, 1e-12).unwrap();
        let diff = back.values().iter().zip(ue.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10, "{diff:e}");
    }

    #[test]
    fn projection_is_idempotent_and_nonexpansive(
        a in prop::collection::vec(-1.0f64..2.0, 256),
        b in prop::collection::vec(-1.0f64..2.0, 256),
    ) {
        let p = square_problem(0.0, 0.5, 4.0, 1.0 / 64.0);
        let (ga, gb) = (p.grid(a).unwrap(), p.grid(b).unwrap());
        let (pa, pb) = (project_k(&ga, &p, 1e-12).unwrap(), project_k(&gb, &p, 1e-12).unwrap());
        prop_assert!(Feasibility::of(pa.values(), p.shift(), p.spacing()).is_feasible());
        let ppa = project_k(&pa, &p, 1e-12).unwrap();
        let moved = ppa.values().iter().zip(pa.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(moved <= 1e-9, "{moved:e}");
        let d = |x: &GridFunction, y: &GridFunction| {
            l2_norm_sq(&x.with_values(x.values().iter().zip(y.values()).map(|(s, t)| s - t).collect()).unwrap())
        };
        prop_assert!(d(&pa, &pb) <= d(&ga, &gb) * (1.0 + 1e-9) + 1e-18);
    }

    #[test]
    fn uniform_profile_minimizes_square_without_attraction(
        raw in prop::collection::vec(0.25f64..0.5, 1..40),
    ) {
        // Cauchy-Schwarz: int u^2 >= 1 / L on unit mass
        let p = square_problem(0.0, 0.5, 8.0, 1.0 / 64.0);
        let u = feasible_profile(&p, &raw);
        prop_assert!(energy(&u, &p).unwrap() >= 1.0 / 8.0 - 1e-14);
    }
}
