use lpbm::funcgrid::*;
use lpbm::functionals::total_mass;
use lpbm::inequalities::*;
use lpbm::variation::{VariationMethod, DEFAULT_SCHEDULE};
use lpbm::{ClassTag, GridSpec, LogConcaveFn};
use proptest::prelude::*;

const SQRT_2PI: f64 = 2.5066282746310002;

fn line(r: f64, n: usize) -> GridSpec {
    GridSpec::symmetric(1, r, n).unwrap()
}

fn gauss(spec: &GridSpec, s: f64) -> LogConcaveFn {
    LogConcaveFn::new(build_gaussian(spec, s).unwrap(), ClassTag::A0Prime)
}

fn boxed(spec: &GridSpec, r: f64) -> LogConcaveFn {
    LogConcaveFn::new(build_indicator_box(spec, &[r]).unwrap(), ClassTag::A0)
}

fn cfg() -> CheckConfig {
    CheckConfig::default()
}

#[test]
fn pl_equality_for_equal_functions() {
    let s = line(6.0, 1025);
    let f = gauss(&s, 1.0);
    for p in [1.5, 2.0, 3.0] {
        for l in [0.25, 0.5, 0.75] {
            let r = check_prekopa_leindler(&f, &f, l, p, &cfg()).unwrap();
            assert!(r.pass && r.equality_detected, "{r:?}");
            assert!(r.margin.abs() < 1e-9);
        }
    }
}

#[test]
fn pl_boxes() {
    let s = line(3.0, 2049);
    let r = check_prekopa_leindler(&boxed(&s, 1.0), &boxed(&s, 2.0), 0.5, 2.0, &cfg()).unwrap();
    let (lhs, rhs) = (2.0 * 2.5f64.sqrt(), 2.0 * 2f64.sqrt());
    assert!((r.lhs - lhs).abs() / lhs < 1e-2, "{r:?}");
    assert!((r.rhs - rhs).abs() / rhs < 1e-2, "{r:?}");
    assert!(r.pass && r.margin > 0.3);
}

#[test]
fn pl_gaussians_and_random_pairs() {
    let s = line(6.0, 1025);
    let r = check_prekopa_leindler(&gauss(&s, 1.0), &gauss(&s, 4.0), 0.25, 3.0, &cfg()).unwrap();
    assert!(r.pass && r.margin > 0.0);
    let s = line(12.0, 1025);
    for k in 0..5 {
        let f = random_class_a0(&s, 2 * k).unwrap();
        let g = random_class_a0(&s, 2 * k + 1).unwrap();
        for r in check_prekopa_leindler_many(&f, &g, &[0.25, 0.5, 0.75], 2.0, &cfg()).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }
    let s2 = GridSpec::symmetric(2, 12.0, 65).unwrap();
    let f = random_class_a0(&s2, 11).unwrap();
    let g = random_class_a0(&s2, 12).unwrap();
    assert!(check_prekopa_leindler(&f, &g, 0.5, 2.0, &cfg()).unwrap().pass);
}

#[test]
fn pl_rejects_bad_lambda() {
    let s = line(3.0, 65);
    let f = gauss(&s, 1.0);
    assert!(check_prekopa_leindler(&f, &f, 0.0, 2.0, &cfg()).is_err());
    assert!(check_prekopa_leindler(&f, &f, 1.0, 2.0, &cfg()).is_err());
}

#[test]
fn t_logconcavity() {
    let s = line(6.0, 1025);
    let f = gauss(&s, 1.0);
    let ts: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let r = check_t_logconcavity(&f, &f, 2.0, &ts, TPath::Dilation, &cfg()).unwrap();
    assert!(r.pass && r.components.len() == 8);
    // log J(t) = log(1+t)/4 + const has a strictly negative second difference
    let t = [0.1, 0.2, 0.3];
    let want = (1.1f64.ln() + 1.3f64.ln()) / 8.0 - 1.2f64.ln() / 4.0;
    let r = check_t_logconcavity(&f, &f, 2.0, &t, TPath::Dilation, &cfg()).unwrap();
    assert_eq!(r.components.len(), 1);
    assert!((r.margin + want).abs() < 1e-5, "{} vs {}", r.margin, -want);

    let b = line(3.0, 1025);
    let (k1, k2) = (boxed(&b, 1.0), boxed(&b, 2.0));
    let ts: Vec<f64> = (1..=5).map(|i| i as f64 / 5.0).collect();
    assert!(check_t_logconcavity(&k1, &k2, 2.0, &ts, TPath::Dilation, &cfg()).unwrap().pass);
    let ts = [0.1, 0.3, 0.5, 0.7, 0.9];
    assert!(check_t_logconcavity(&k1, &k2, 2.0, &ts, TPath::Interpolation, &cfg()).unwrap().pass);
    assert!(check_t_logconcavity(&k1, &k2, 2.0, &[0.5, 1.0, 1.5], TPath::Interpolation, &cfg()).is_err());
}

#[test]
fn minkowski_type() {
    let s = line(6.0, 2049);
    let f = gauss(&s, 1.0);
    let r = check_minkowski_type(&f, &f, 2.0, VariationMethod::FiniteDifference, &cfg()).unwrap();
    assert!(r.pass && r.equality_detected, "{r:?}");
    let r = check_minkowski_type(&f, &gauss(&s, 2.0), 2.0, VariationMethod::FiniteDifference, &cfg()).unwrap();
    assert!(r.pass && r.margin > 0.1);
    let r = check_minkowski_type(&f, &gauss(&s, 0.5), 2.0, VariationMethod::IntegralFormula, &cfg()).unwrap();
    assert!((r.lhs - SQRT_2PI / 16.0).abs() < 1e-4);
    assert!(r.pass, "{r:?}");
}

#[test]
fn santalo() {
    let s = line(6.0, 1025);
    let r = check_santalo(&gauss(&s, 1.0), None, &cfg()).unwrap();
    assert!(r.pass && r.equality_detected);
    assert!((r.params["product"] / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-3);

    let b = line(3.0, 1025);
    let r = check_santalo(&boxed(&b, 1.0), None, &cfg()).unwrap();
    assert!(r.pass && !r.equality_detected);
    assert!((r.params["product"] - 4.0).abs() < 0.05, "{r:?}");

    let r = check_santalo(&gauss(&s, 4.0), None, &cfg()).unwrap();
    assert!(r.params["product"] <= 2.0 * std::f64::consts::PI * (1.0 + 1e-3));

    let odd = LogConcaveFn::new(
        GridFunction::from_fn(s, |x| x[0] * x[0] / 2.0 + 0.1 * x[0].max(0.0)).unwrap(),
        ClassTag::A0,
    );
    assert!(check_santalo(&odd, None, &cfg()).is_err());
}

#[test]
fn unique_determination() {
    let s = line(6.0, 1025);
    let f1 = gauss(&s, 1.0);
    let probes = [gauss(&s, 1.0), boxed(&s, 1.0)];
    let r = check_unique_determination(&f1, &f1, &probes, 2.0, 1e-3, &cfg()).unwrap();
    assert!(r.pass);
    assert!(r.components.iter().all(|&c| c == 0.0));

    let r = check_unique_determination(&f1, &gauss(&s, 2.0), &probes, 2.0, 1e-3, &cfg()).unwrap();
    assert!(!r.pass);
    assert!(r.witness.unwrap().contains("precondition"));

    // box with the Gaussian's mass
    let f2 = boxed(&s, SQRT_2PI / 2.0);
    let gap = (total_mass(&f1) - total_mass(&f2)).abs() / total_mass(&f1);
    let r = check_unique_determination(&f1, &f2, &probes, 2.0, gap.max(1e-3) * 2.0, &cfg()).unwrap();
    assert!(!r.pass);
    assert!(r.components.iter().any(|&c| c > 1e-2), "{r:?}");
    assert!(r.witness.unwrap().contains("distinguished"));
}

#[test]
fn random_functions_are_class_a0() {
    for dim in [1, 2] {
        let s = GridSpec::symmetric(dim, 12.0, if dim == 1 { 257 } else { 33 }).unwrap();
        for seed in 0..10 {
            let f = random_class_a0(&s, seed).unwrap();
            assert!(require_class(&f, ClassTag::A0).is_ok());
            assert!(f.phi().is_even());
            assert_eq!(random_class_a0(&s, seed).unwrap(), f);
        }
    }
    let bad = LogConcaveFn::new(GridFunction::from_fn(line(3.0, 33), |x| -x[0] * x[0]).unwrap(), ClassTag::A0);
    assert!(require_class(&bad, ClassTag::A0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(16) })]
    #[test]
    fn pl_is_symmetric_under_swap(seed in 0u64..10_000, lambda in 0.05f64..0.95, p in 1.1f64..4.0) {
        let s = line(12.0, 257);
        let f = random_class_a0(&s, seed).unwrap();
        let g = random_class_a0(&s, seed + 1).unwrap();
        let a = check_prekopa_leindler(&f, &g, lambda, p, &cfg()).unwrap();
        let b = check_prekopa_leindler(&g, &f, 1.0 - lambda, p, &cfg()).unwrap();
        prop_assert!((a.margin - b.margin).abs() <= 1e-9);
        prop_assert!(a.pass);
    }

    #[test]
    fn santalo_holds_for_even_a0(seed in 0u64..10_000) {
        let s = line(12.0, 513);
        let f = random_class_a0(&s, seed).unwrap();
        let r = check_santalo(&f, None, &cfg()).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }

    #[test]
    fn minkowski_type_holds(seed in 0u64..10_000) {
        let s = line(12.0, 513);
        let f = random_class_a0(&s, seed).unwrap();
        let g = random_class_a0(&s, seed + 1).unwrap();
        let c = CheckConfig { schedule: DEFAULT_SCHEDULE.to_vec(), ..cfg() };
        let r = check_minkowski_type(&f, &g, 2.0, VariationMethod::FiniteDifference, &c).unwrap();
        prop_assert!(r.pass, "{:?}", r);
    }
}
