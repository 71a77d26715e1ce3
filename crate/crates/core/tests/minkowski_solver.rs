use lpbm::funcgrid::build_gaussian;
use lpbm::functionals::{total_mass, Atom, DiscreteMeasure, LpMeasureOptions};
use lpbm::minkowski_solver::*;
use lpbm::{ClassTag, GridSpec, LogConcaveFn};
use proptest::prelude::*;

fn line(r: f64, n: usize) -> GridSpec {
    GridSpec::symmetric(1, r, n).unwrap()
}

fn atoms(pts: &[(&[f64], f64)]) -> Vec<Atom> {
    pts.iter().map(|(y, w)| Atom { y: y.to_vec(), w: *w }).collect()
}

fn two_atoms(w: f64) -> DiscreteMeasure {
    DiscreteMeasure::new(atoms(&[(&[1.0], w), (&[-1.0], w)]), true).unwrap()
}

fn cone_config() -> SolverConfig {
    let mut c = SolverConfig::for_measure(&two_atoms(1.0), 2.0).unwrap();
    c.grid = line(4.0, 1025);
    c.dual_grid = line(2.0, 4097);
    c
}

/// golden-section minimum of a unimodal function on [a, b]
fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-12 {
        let (c, d) = (b - g * (b - a), a + g * (b - a));
        if f(c) < f(d) { b = d } else { a = c }
    }
    0.5 * (a + b)
}

#[test]
fn measure_validation() {
    let v = validate_measure(&two_atoms(1.0), 2.0).unwrap();
    assert!(v.ok() && v.even && v.full_rank && v.rank == 1);
    let origin = DiscreteMeasure::new(atoms(&[(&[0.0], 1.0)]), true).unwrap();
    assert!(!validate_measure(&origin, 2.0).unwrap().full_rank);
    let lopsided = DiscreteMeasure::new(atoms(&[(&[1.0], 1.0), (&[2.0], 1.0)]), false).unwrap();
    let v = validate_measure(&lopsided, 2.0).unwrap();
    assert!(!v.even && v.require().is_err());
    let segment = DiscreteMeasure::new(atoms(&[(&[1.0, 1.0], 1.0), (&[-1.0, -1.0], 1.0)]), true).unwrap();
    let v = validate_measure(&segment, 2.0).unwrap();
    assert_eq!(v.rank, 1);
    assert!(v.require().unwrap_err().to_string().contains("lower-dimensional"));
}

#[test]
fn objective_of_abs() {
    // |x|* is the indicator of [-1, 1], J = 2
    let cfg = cone_config();
    let phi = MaxAffinePotential::cone_1d(1.0);
    let v = objective(&phi, &two_atoms(1.0), 2.0, &cfg).unwrap();
    let want = 1.0 - 2f64.ln();
    assert!((v - want).abs() < 2e-3, "{v} vs {want}");

    let zero = two_atoms(0.0);
    let j: f64 = 2.0;
    assert!((objective(&phi, &zero, 2.0, &cfg).unwrap() + j.ln()).abs() < 2e-3);

    let one = objective(&phi, &two_atoms(1.0), 2.0, &cfg).unwrap();
    let two = objective(&phi, &two_atoms(2.0), 2.0, &cfg).unwrap();
    assert!((two - one - 1.0).abs() < 1e-12);
}

#[test]
fn lower_bound_two_atoms() {
    let nu = two_atoms(1.0);
    let c = 2.0 / (std::f64::consts::PI * std::f64::consts::E);
    let h = |t: f64| c * t - t.ln();
    let t0 = golden(h, 1e-3, 100.0);
    let want = h(t0) - 2.0;
    let got = objective_lower_bound(&nu, 2.0).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");

    let lam = 3.0;
    let scaled = nu.scaled(lam);
    let c = lam * c;
    let t0 = golden(|t| c * t - t.ln(), 1e-4, 100.0);
    assert!((objective_lower_bound(&scaled, 2.0).unwrap() - (c * t0 - t0.ln() - 2.0 * lam)).abs() < 1e-9);
}

#[test]
fn lower_bound_circle() {
    let pts: Vec<Atom> = (0..8)
        .map(|k| {
            let t = std::f64::consts::PI * k as f64 / 4.0;
            Atom { y: vec![t.cos(), t.sin()], w: 1.0 }
        })
        .collect();
    let nu = DiscreteMeasure::new(pts, true).unwrap();
    let b = objective_lower_bound(&nu, 2.0).unwrap();
    assert!(b.is_finite());
    assert!(min_directional_moment(&nu, 64) > 0.0);
}

#[test]
fn two_atom_cone_solution() {
    let mut cfg = cone_config();
    cfg.family = PieceFamily::Cone;
    cfg.n_pieces = 2;
    let nu = two_atoms(1.0);
    let r = solve(&nu, &cfg).unwrap();
    let a_star = golden(|a| a * a - (2.0 * a).ln(), 0.05, 1.9);
    assert!((a_star - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    let a = r.phi0.max_slope();
    assert!((a - a_star).abs() / a_star < 1e-2, "{a}");
    let best = a_star * a_star - (2.0 * a_star).ln();
    assert!((r.objective_value - best).abs() / best < 1e-2, "{}", r.objective_value);
    assert!(r.objective_value >= r.feasibility.lower_bound - 1e-6);
    assert!(r.history.windows(2).all(|w| w[1] <= w[0]));

    // restarting at the optimum finds nothing better
    let again = solve_from(&nu, &cfg, &r.phi0).unwrap();
    assert!(again.objective_value >= r.objective_value - 1e-9);
}

fn gaussian_nu() -> (DiscreteMeasure, SolverConfig) {
    let s = line(6.0, 1025);
    let f = LogConcaveFn::new(build_gaussian(&s, 1.0).unwrap(), ClassTag::A0Prime);
    let j = total_mass(&f);
    let opts = LpMeasureOptions { merge_radius: None, eps_omega: Some(0.5) };
    let nu = forward_measure(&f, 2.0, 1.0 / j, &opts).unwrap();
    let mut cfg = SolverConfig::for_measure(&nu, 2.0).unwrap();
    cfg.restarts = 2;
    (nu, cfg)
}

#[test]
fn forward_measure_examples() {
    let s = line(6.0, 1025);
    let f = LogConcaveFn::new(build_gaussian(&s, 1.0).unwrap(), ClassTag::A0Prime);
    let nu1 = forward_measure(&f, 1.0, 1.0, &LpMeasureOptions::default()).unwrap();
    let dropped = nu1.omega.as_ref().unwrap().dropped_mass;
    assert!((nu1.total_mass() + dropped - total_mass(&f)).abs() / total_mass(&f) < 1e-3);
    let nu2 = forward_measure(&f, 2.0, 1.0, &LpMeasureOptions { merge_radius: None, eps_omega: Some(0.5) }).unwrap();
    assert!(nu2.atoms.iter().all(|a| a.y[0].abs() > 0.99));
    assert!(nu2.is_mirror_closed(1e-9));
    let general = LogConcaveFn::new(build_gaussian(&s, 1.0).unwrap(), ClassTag::A0);
    assert!(forward_measure(&general, 2.0, 1.0, &LpMeasureOptions::default()).is_err());
}

#[test]
fn gaussian_round_trip_and_separation() {
    let (nu, cfg) = gaussian_nu();
    let r = solve(&nu, &cfg).unwrap();
    let el = r.el_report.clone().unwrap();
    assert!(el.pass, "{el:?}");
    let tau = r.tau_estimate.clone().unwrap();
    assert!(tau.relative_spread < 0.05);
    assert!(r.objective_value >= r.feasibility.lower_bound - 1e-6);

    // a non-optimal potential has a much larger residual
    let off = MaxAffinePotential::cone_1d(2.0);
    let bad = verify_euler_lagrange(&off, &nu, 2.0, &cfg, &TentFamily::standard(1)).unwrap();
    assert!(-bad.margin >= 3.0 * r.el_residual, "{} vs {}", -bad.margin, r.el_residual);
}

#[test]
fn tests_outside_omega_are_excluded() {
    let (nu, cfg) = gaussian_nu();
    let phi = MaxAffinePotential::new(1, vec![Piece { slope: vec![1.0], intercept: 0.0 }]).unwrap();
    let tents = TentFamily { centers: vec![vec![0.0], vec![2.0]], half_width: 0.3 };
    let r = verify_euler_lagrange(&phi, &nu, 2.0, &cfg, &tents).unwrap();
    assert_eq!(r.components.len(), 1);
    assert!(r.witness.unwrap().contains("excluded"));
}

#[test]
fn tau_needs_mass_on_omega() {
    let nu = two_atoms(1.0);
    let cfg = cone_config();
    // vanishes on [-2, 2], so every atom sits in the zero set
    let phi = MaxAffinePotential::new(1, vec![Piece { slope: vec![1.0], intercept: 2.0 }]).unwrap();
    assert!(tau_constant(&phi, &nu, 2.0, &cfg).is_err());
}

#[test]
fn rejects_degenerate_inputs() {
    let origin = DiscreteMeasure::new(atoms(&[(&[0.0], 1.0)]), true).unwrap();
    assert!(SolverConfig::for_measure(&origin, 2.0).is_err());
    let mut cfg = cone_config();
    cfg.p = 1.0;
    assert!(solve(&two_atoms(1.0), &cfg).is_err());
    let mut cfg = cone_config();
    cfg.grid = line(1.0, 3);
    cfg.dual_grid = line(1.0, 3);
    let e = solve(&two_atoms(1.0), &cfg).unwrap_err();
    assert!(matches!(e, lpbm::Error::Infeasible(_)), "{e}");
    assert!(MaxAffinePotential::new(1, vec![Piece { slope: vec![1.0], intercept: -1.0 }]).is_err());
}

#[test]
fn seeded_solves_repeat() {
    let mut cfg = SolverConfig::for_measure(&two_atoms(1.0), 2.0).unwrap();
    cfg.grid = line(3.0, 257);
    cfg.dual_grid = line(2.0, 257);
    cfg.max_iters = 40;
    cfg.seed = 5;
    let a = solve(&two_atoms(1.0), &cfg).unwrap();
    let b = solve(&two_atoms(1.0), &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(12) })]
    #[test]
    fn history_is_monotone(ws in prop::collection::vec((0.3f64..2.5, 0.1f64..2.0), 1..4), seed in 0u64..1000) {
        let mut pts = Vec::new();
        for (y, w) in &ws {
            pts.push(Atom { y: vec![*y], w: *w });
            pts.push(Atom { y: vec![-*y], w: *w });
        }
        let nu = DiscreteMeasure::new(pts, true).unwrap();
        let mut cfg = SolverConfig::for_measure(&nu, 2.0).unwrap();
        cfg.grid = line(cfg.grid.hi[0], 257);
        cfg.dual_grid = line(cfg.dual_grid.hi[0], 257);
        cfg.max_iters = 25;
        cfg.restarts = 1;
        cfg.seed = seed;
        let r = solve(&nu, &cfg).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.objective_value >= r.feasibility.lower_bound - 1e-6);
    }

    #[test]
    fn objective_respects_lower_bound(s in 0.2f64..3.0, b in 0.0f64..1.0, w in 0.1f64..3.0) {
        let nu = two_atoms(w);
        let cfg = cone_config();
        let phi = MaxAffinePotential::new(1, vec![
            Piece { slope: vec![s], intercept: 0.0 },
            Piece { slope: vec![s * 0.5], intercept: b },
        ]).unwrap();
        let v = objective(&phi, &nu, 2.0, &cfg).unwrap();
        prop_assert!(v >= objective_lower_bound(&nu, 2.0).unwrap() - 1e-6);
    }
}
