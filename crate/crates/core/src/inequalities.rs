//! Numerical checks of the functional inequalities, each producing a
//! `MarginReport`.

use crate::asplund::{SumOptions, SumPipeline};
use crate::error::{invalid, Result};
use crate::funcgrid::{check_class, ClassTag, GridFunction, GridSpec, LogConcaveFn};
use crate::functionals::{entropy, mass_of, total_mass};
use crate::legendre::{conjugate_fast, default_dual_spec};
use crate::minkowski_solver::{MaxAffinePotential, Piece};
use crate::report::{MarginReport, DEFAULT_EQ_TOL, DEFAULT_TOL};
use crate::variation::{delta_j_integral, delta_j_numeric, VariationMethod, VariationOptions, DEFAULT_SCHEDULE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub tol: f64,
    pub eq_tol: f64,
    /// Dual grid shared by all conjugations of a check.
    pub dual: Option<GridSpec>,
    /// t schedule for the numeric first variation.
    pub schedule: Vec<f64>,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { tol: DEFAULT_TOL, eq_tol: DEFAULT_EQ_TOL, dual: None, schedule: DEFAULT_SCHEDULE.to_vec() }
    }
}

impl CheckConfig {
    fn sum_options(&self) -> SumOptions {
        SumOptions { dual: self.dual.clone(), coef_floor: None }
    }

    fn variation_options(&self) -> VariationOptions {
        VariationOptions { dual: self.dual.clone(), eps_omega: None }
    }
}

/// Largest node-wise gap between two potentials; +inf when their finite
/// regions differ.
pub fn sup_distance(a: &GridFunction, b: &GridFunction) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| match (x.is_finite(), y.is_finite()) {
            (true, true) => (x - y).abs(),
            (false, false) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn pipeline_masses(pipe: &SumPipeline) -> Result<(f64, f64)> {
    Ok((
        mass_of(&conjugate_fast(&pipe.phi_star, &pipe.primal)?),
        mass_of(&conjugate_fast(&pipe.psi_star, &pipe.primal)?),
    ))
}

fn pl_from_pipeline(pipe: &SumPipeline, jf: f64, jg: f64, lambda: f64, cfg: &CheckConfig) -> Result<MarginReport> {
    let lhs = mass_of(&pipe.potential(1.0 - lambda, lambda)?);
    let rhs = jf.powf(1.0 - lambda) * jg.powf(lambda);
    Ok(MarginReport::new("prekopa_leindler", lhs, rhs, cfg.tol, cfg.eq_tol)
        .param("lambda", lambda)
        .param("p", pipe.p))
}

/// J((1−λ)·f ⊕_p λ·g) ≥ J(f)^{1−λ} J(g)^λ. J(f) and J(g) are taken through
/// the same conjugation pipeline as the left side.
pub fn check_prekopa_leindler(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    lambda: f64,
    p: f64,
    cfg: &CheckConfig,
) -> Result<MarginReport> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return invalid("lambda must lie in (0, 1)");
    }
    let pipe = SumPipeline::new(f, g, p, &cfg.sum_options())?;
    let (jf, jg) = pipeline_masses(&pipe)?;
    Ok(pl_from_pipeline(&pipe, jf, jg, lambda, cfg)?.param("sup_distance", sup_distance(f.phi(), g.phi())))
}

/// Same check for several λ with the conjugates computed once.
pub fn check_prekopa_leindler_many(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    lambdas: &[f64],
    p: f64,
    cfg: &CheckConfig,
) -> Result<Vec<MarginReport>> {
    if lambdas.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return invalid("lambda must lie in (0, 1)");
    }
    let pipe = SumPipeline::new(f, g, p, &cfg.sum_options())?;
    let (jf, jg) = pipeline_masses(&pipe)?;
    let d = sup_distance(f.phi(), g.phi());
    lambdas
        .iter()
        .map(|&l| Ok(pl_from_pipeline(&pipe, jf, jg, l, cfg)?.param("sup_distance", d)))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TPath {
    /// t ↦ J(f ⊕_p t·g), t > 0
    Dilation,
    /// t ↦ J((1−t)·f ⊕_p t·g), t ∈ (0,1)
    Interpolation,
}

/// Midpoint concavity of log J along the path, one margin per consecutive
/// triple of `t_grid`.
pub fn check_t_logconcavity(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    t_grid: &[f64],
    path: TPath,
    cfg: &CheckConfig,
) -> Result<MarginReport> {
    if t_grid.len() < 3 {
        return invalid("t grid needs at least 3 points");
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("t grid must be strictly increasing");
    }
    let ok = match path {
        TPath::Dilation => t_grid.iter().all(|&t| t > 0.0 && t.is_finite()),
        TPath::Interpolation => t_grid.iter().all(|&t| t > 0.0 && t < 1.0),
    };
    if !ok {
        return invalid("t grid outside the domain of the path");
    }
    let pipe = SumPipeline::new(f, g, p, &cfg.sum_options())?;
    let mut logj = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (a, b) = match path {
            TPath::Dilation => (1.0, t),
            TPath::Interpolation => (1.0 - t, t),
        };
        logj.push(mass_of(&pipe.potential(a, b)?).ln());
    }
    let margins: Vec<f64> = (0..t_grid.len() - 2)
        .map(|i| {
            let (t0, t1, t2) = (t_grid[i], t_grid[i + 1], t_grid[i + 2]);
            let chord = ((t2 - t1) * logj[i] + (t1 - t0) * logj[i + 2]) / (t2 - t0);
            logj[i + 1] - chord
        })
        .collect();
    let (k, m) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let name = match path {
        TPath::Dilation => "t_logconcavity:dilation",
        TPath::Interpolation => "t_logconcavity:interpolation",
    };
    Ok(MarginReport::with_margin(name, m, 0.0, m, cfg.tol, cfg.eq_tol)
        .witness(format!("t={}", t_grid[k + 1]))
        .components(margins))
}

/// δJ_p(f,g) ≥ J(f)[n/p + ((1−p)/p) log J(f) + log J(g)] + Ent(f)/p.
pub fn check_minkowski_type(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    lhs_method: VariationMethod,
    cfg: &CheckConfig,
) -> Result<MarginReport> {
    let (jf, jg) = (total_mass(f), total_mass(g));
    if !(jf > 0.0 && jg > 0.0) {
        return invalid("Minkowski-type check needs J(f), J(g) > 0");
    }
    let n = f.dim() as f64;
    let rhs = jf * (n / p + (1.0 - p) / p * jf.ln() + jg.ln()) + entropy(f)? / p;
    let vopts = cfg.variation_options();
    let lhs = match lhs_method {
        VariationMethod::IntegralFormula => delta_j_integral(f, g, p, &vopts)?.value,
        _ => delta_j_numeric(f, g, p, &cfg.schedule, &vopts)?.value,
    };
    let r = MarginReport::new("minkowski_type", lhs, rhs, cfg.tol, cfg.eq_tol)
        .param("p", p)
        .param("sup_distance", sup_distance(f.phi(), g.phi()));
    Ok(if lhs == f64::INFINITY { r.witness("divergent") } else { r })
}

/// J(e^{−φ})·J(e^{−φ*}) ≤ (2π)^n. margin = 1 − product/(2π)^n, so `tol` is
/// relative.
pub fn check_santalo(f: &LogConcaveFn, dual: Option<&GridSpec>, cfg: &CheckConfig) -> Result<MarginReport> {
    if !f.phi().is_even() {
        return invalid("Santalo check needs an even function");
    }
    let j = total_mass(f);
    if !(j > 0.0 && j.is_finite()) {
        return invalid("Santalo check needs J(f) in (0, inf)");
    }
    let dspec = match dual {
        Some(d) => d.clone(),
        None => default_dual_spec(f.phi())?,
    };
    let js = mass_of(&conjugate_fast(f.phi(), &dspec)?);
    let bound = (2.0 * std::f64::consts::PI).powi(f.dim() as i32);
    let product = j * js;
    Ok(MarginReport::with_margin("santalo", bound, product, 1.0 - product / bound, cfg.tol, cfg.eq_tol)
        .param("product", product)
        .param("mass", j)
        .param("dual_mass", js)
        .param("ratio", product / bound))
}

/// If J(f1) = J(f2) and every probe variation agrees, f1 and f2 should be
/// close. margin = −max relative probe discrepancy; the report fails with a
/// precondition witness when the masses differ by more than `mass_tol`.
pub fn check_unique_determination(
    f1: &LogConcaveFn,
    f2: &LogConcaveFn,
    probes: &[LogConcaveFn],
    p: f64,
    mass_tol: f64,
    cfg: &CheckConfig,
) -> Result<MarginReport> {
    let (j1, j2) = (total_mass(f1), total_mass(f2));
    if !(j1 > 0.0 && j2 > 0.0) {
        return invalid("unique-determination check needs J(f1), J(f2) > 0");
    }
    if probes.is_empty() {
        return invalid("at least one probe is required");
    }
    let dist = sup_distance(f1.phi(), f2.phi());
    let mass_gap = (j1 - j2).abs() / j1.max(j2);
    if mass_gap > mass_tol {
        return Ok(MarginReport::with_margin("unique_determination", j1, j2, -mass_gap, cfg.tol, cfg.eq_tol)
            .param("mass_gap", mass_gap)
            .param("sup_distance", dist)
            .fail("precondition failed: J(f1) != J(f2)"));
    }
    let vopts = cfg.variation_options();
    let mut comps = Vec::with_capacity(probes.len());
    for g in probes {
        let a = delta_j_numeric(f1, g, p, &cfg.schedule, &vopts)?.value;
        let b = delta_j_numeric(f2, g, p, &cfg.schedule, &vopts)?.value;
        let scale = a.abs().max(b.abs());
        comps.push(if scale > 0.0 { (a - b).abs() / scale } else { 0.0 });
    }
    let (k, worst) = comps.iter().copied().enumerate().fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let r = MarginReport::with_margin("unique_determination", worst, 0.0, -worst, cfg.tol, cfg.eq_tol)
        .param("mass_gap", mass_gap)
        .param("sup_distance", dist)
        .components(comps);
    Ok(if worst > cfg.tol {
        r.witness(format!("distinguished by probe {k}"))
    } else {
        r.witness("indistinguishable by probes")
    })
}

/// Seeded even max-affine potential with slopes in [−3,3]^n, intercepts in
/// [0,1] and boundary values at least `min_boundary` on `spec`.
pub fn random_max_affine(spec: &GridSpec, rng: &mut ChaCha8Rng, min_boundary: f64) -> Result<MaxAffinePotential> {
    if !spec.is_symmetric() {
        return invalid("random potentials need a symmetric grid");
    }
    let dim = spec.dim;
    let boundary: Vec<usize> = (0..spec.len()).filter(|&i| spec.on_boundary(i)).collect();
    for _ in 0..10_000 {
        let k = rng.random_range(1..=3 * dim);
        let pieces = (0..k)
            .map(|_| Piece {
                slope: (0..dim).map(|_| rng.random_range(-3.0..=3.0)).collect(),
                intercept: rng.random_range(0.0..1.0),
            })
            .collect();
        let m = MaxAffinePotential { dim, pieces };
        let low = boundary
            .iter()
            .map(|&i| m.eval(&spec.node(i)[..dim]))
            .fold(f64::INFINITY, f64::min);
        if low >= min_boundary {
            return Ok(m);
        }
    }
    invalid("could not draw a coercive potential on this grid")
}

/// CLASS_A0 function e^{−φ} for a random max-affine φ.
pub fn random_class_a0(spec: &GridSpec, seed: u64) -> Result<LogConcaveFn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_max_affine(spec, &mut rng, 16.0)?;
    LogConcaveFn::checked(m.sample(spec)?, ClassTag::A0, 1e-9)
}

/// Convenience: class check used by callers that gate on input validity.
pub fn require_class(f: &LogConcaveFn, tag: ClassTag) -> Result<()> {
    let r = check_class(f.phi(), tag, 1e-9);
    if !r.pass {
        return invalid(format!(
            "input is not {}: {}",
            tag.as_str(),
            r.witness.unwrap_or_else(|| "check failed".into())
        ));
    }
    Ok(())
}
