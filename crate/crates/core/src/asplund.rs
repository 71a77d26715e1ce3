//! Lp scalar action, Lp Asplund sum and infimal convolution.

use crate::error::{invalid, Result};
use crate::funcgrid::{check_convex, ClassTag, GridFunction, GridSpec, LogConcaveFn};
use crate::legendre::{common_dual_spec, conjugate_fast, default_dual_spec};
use rayon::prelude::*;

pub const DEFAULT_COEF_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, Default)]
pub struct SumOptions {
    /// Dual grid for the conjugates; defaults to the union of both default duals.
    pub dual: Option<GridSpec>,
    /// Lower clamp for α and β (default 1e-12).
    pub coef_floor: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct PSumResult {
    pub result: LogConcaveFn,
    /// (α(φ*)^p + β(ψ*)^p)^{1/p} on the dual grid, before the final conjugation.
    pub phi_star_combined: GridFunction,
    /// Minimum second difference of the combined dual function.
    pub combined_convexity: f64,
}

fn require_a0(f: &LogConcaveFn, what: &str) -> Result<()> {
    if f.tag() < ClassTag::A0 {
        return invalid(format!("{what} must be CLASS_A0, got {}", f.tag().as_str()));
    }
    Ok(())
}

fn require_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid(format!("p must be a finite real > 1, got {p}"));
    }
    Ok(())
}

/// (φ ·_p α)(x) = α^{1/p} φ(α^{-1/p} x), resampled by interpolation.
pub fn p_scale(f: &LogConcaveFn, alpha: f64, p: f64) -> Result<LogConcaveFn> {
    require_a0(f, "f")?;
    require_p(p)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid("alpha must be positive");
    }
    let a = alpha.powf(1.0 / p);
    let phi = f.phi();
    let g = GridFunction::from_fn(f.spec().clone(), |x| {
        let z: Vec<f64> = x.iter().map(|v| v / a).collect();
        phi.eval(&z).scale(a).raw()
    })?;
    Ok(LogConcaveFn::new(g, f.tag()))
}

/// Conjugates of a pair computed once, combined for any (α, β).
#[derive(Clone, Debug)]
pub struct SumPipeline {
    pub primal: GridSpec,
    pub phi_star: GridFunction,
    pub psi_star: GridFunction,
    pub p: f64,
    floor: f64,
    tag: ClassTag,
}

impl SumPipeline {
    pub fn new(f: &LogConcaveFn, g: &LogConcaveFn, p: f64, opts: &SumOptions) -> Result<Self> {
        require_a0(f, "f")?;
        require_a0(g, "g")?;
        require_p(p)?;
        if f.spec() != g.spec() {
            return invalid("f and g must share a grid");
        }
        let dual = match &opts.dual {
            Some(d) => d.clone(),
            None => common_dual_spec(&default_dual_spec(f.phi())?, &default_dual_spec(g.phi())?)?,
        };
        Ok(SumPipeline {
            primal: f.spec().clone(),
            phi_star: conjugate_fast(f.phi(), &dual)?,
            psi_star: conjugate_fast(g.phi(), &dual)?,
            p,
            floor: opts.coef_floor.unwrap_or(DEFAULT_COEF_FLOOR),
            tag: ClassTag::A0,
        })
    }

    pub fn dual(&self) -> &GridSpec {
        self.phi_star.spec()
    }

    /// (α a^p + β b^p)^{1/p} with (+inf)^p = +inf and 0^p = 0.
    pub fn combine(&self, alpha: f64, beta: f64) -> GridFunction {
        let (alpha, beta) = (alpha.max(self.floor), beta.max(self.floor));
        let p = self.p;
        let vals = self
            .phi_star
            .values()
            .iter()
            .zip(self.psi_star.values())
            .map(|(&a, &b)| lp_combine(a, b, alpha, beta, p))
            .collect();
        let even = self.phi_star.is_even() && self.psi_star.is_even();
        GridFunction::from_parts(self.dual().clone(), vals, even)
    }

    /// Potential of α·f ⊕_p β·g on the primal grid.
    pub fn potential(&self, alpha: f64, beta: f64) -> Result<GridFunction> {
        conjugate_fast(&self.combine(alpha, beta), &self.primal)
    }

    pub fn sum(&self, alpha: f64, beta: f64) -> Result<PSumResult> {
        let combined = self.combine(alpha, beta);
        let result = conjugate_fast(&combined, &self.primal)?;
        let combined_convexity = check_convex(&combined, 0.0).margin;
        Ok(PSumResult {
            result: LogConcaveFn::new(result, self.tag),
            phi_star_combined: combined,
            combined_convexity,
        })
    }
}

pub(crate) fn lp_combine(a: f64, b: f64, alpha: f64, beta: f64, p: f64) -> f64 {
    if a.is_infinite() || b.is_infinite() {
        return f64::INFINITY;
    }
    let (a, b) = (a.max(0.0), b.max(0.0));
    let m = a.max(b);
    if m == 0.0 {
        return 0.0;
    }
    m * (alpha * (a / m).powf(p) + beta * (b / m).powf(p)).powf(1.0 / p)
}

/// α·f ⊕_p β·g through the dual side: conjugate, combine, conjugate back.
pub fn p_sum(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    alpha: f64,
    beta: f64,
    p: f64,
    opts: &SumOptions,
) -> Result<PSumResult> {
    if !(alpha > 0.0 && beta > 0.0) {
        return invalid("alpha and beta must be positive");
    }
    SumPipeline::new(f, g, p, opts)?.sum(alpha, beta)
}

/// (φ□ψ)(x) = min over nodes y of φ(x−y) + ψ(y), by exhaustive search.
/// Pairs whose difference leaves the grid are ignored.
pub fn inf_convolution(phi: &GridFunction, psi: &GridFunction) -> Result<GridFunction> {
    if phi.spec() != psi.spec() {
        return invalid("inf_convolution needs a shared grid");
    }
    let spec = phi.spec().clone();
    if !spec.is_symmetric() {
        return invalid("inf_convolution needs an origin-symmetric grid");
    }
    if phi.finite_count() == 0 || psi.finite_count() == 0 {
        return invalid("inf_convolution of an all-+inf function");
    }
    let n = spec.n_axis as isize;
    let c = spec.center_index() as isize;
    let dim = spec.dim;
    let ys: Vec<(usize, f64)> = psi
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(j, &v)| (j, v))
        .collect();
    let vals: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|i| {
            let xi = spec.unravel(i);
            let mut best = f64::INFINITY;
            for &(j, pv) in &ys {
                let yj = spec.unravel(j);
                let mut k = [0usize; 2];
                let mut inside = true;
                for a in 0..dim {
                    let kk = xi[a] as isize - yj[a] as isize + c;
                    if kk < 0 || kk >= n {
                        inside = false;
                        break;
                    }
                    k[a] = kk as usize;
                }
                if !inside {
                    continue;
                }
                let v = phi.values()[spec.ravel(k)] + pv;
                if v < best {
                    best = v;
                }
            }
            best
        })
        .collect();
    let g = GridFunction::new(spec, vals, false)?;
    if phi.is_even() && psi.is_even() && g.mirror_defect() == 0.0 {
        g.with_even()
    } else {
        Ok(g)
    }
}

#[derive(Clone, Debug)]
pub struct MonotoneFamily {
    pub t: Vec<f64>,
    pub members: Vec<LogConcaveFn>,
    /// Largest amount by which a node breaks φ_1 ≤ φ_t ≤ φ_s ≤ φ (s < t).
    pub max_violation: f64,
    pub ordered: bool,
}

/// f_t = e^{-φ_t} with φ_t = φ □_p (ψ ·_p t) for each t in `t_list`.
pub fn monotone_family(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    t_list: &[f64],
    tol: f64,
    opts: &SumOptions,
) -> Result<MonotoneFamily> {
    if t_list.is_empty() {
        return invalid("empty t list");
    }
    if t_list.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return invalid("t values must lie in (0, 1]");
    }
    if t_list.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("t values must be increasing");
    }
    let pipe = SumPipeline::new(f, g, p, opts)?;
    let mut members = Vec::with_capacity(t_list.len());
    for &t in t_list {
        members.push(LogConcaveFn::new(pipe.potential(1.0, t)?, ClassTag::A0));
    }
    let excess = |lo: &GridFunction, hi: &GridFunction| -> f64 {
        lo.values()
            .iter()
            .zip(hi.values())
            .map(|(&a, &b)| if b.is_infinite() { 0.0 } else if a.is_infinite() { f64::INFINITY } else { a - b })
            .fold(0.0, f64::max)
    };
    let mut worst = excess(members[0].phi(), f.phi());
    for w in members.windows(2) {
        worst = worst.max(excess(w[1].phi(), w[0].phi()));
    }
    Ok(MonotoneFamily {
        t: t_list.to_vec(),
        members,
        max_violation: worst,
        ordered: worst <= tol,
    })
}
