//! First variation δJ_p(f,g) by three methods, and the admissibility and
//! compatibility checkers.

use crate::asplund::{SumOptions, SumPipeline};
use crate::error::{invalid, Error, Result};
use crate::funcgrid::{grid_lines, convexity_margin, ClassTag, GridFunction, GridSpec, LogConcaveFn};
use crate::functionals::{integral_f_log_f, mass_of, raw_pushforward, total_mass};
use crate::legendre::{common_dual_spec, conjugate_fast, conjugate_fast_with_reliability, default_dual_spec};
use crate::report::MarginReport;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SCHEDULE: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_CONVEXITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum VariationMethod {
    FiniteDifference,
    ClosedFormSelf,
    IntegralFormula,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// (J(t) − J(0))/t for each t of the schedule
    #[serde(with = "crate::serial::ext_vec")]
    pub quotients: Vec<f64>,
    /// linear extrapolations to t = 0 from consecutive pairs
    #[serde(with = "crate::serial::ext_vec")]
    pub level1: Vec<f64>,
    /// quadratic extrapolations to t = 0 from consecutive triples
    #[serde(with = "crate::serial::ext_vec")]
    pub level2: Vec<f64>,
    #[serde(with = "crate::serial::ext")]
    pub error_estimate: f64,
    pub divergent: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationResult {
    #[serde(with = "crate::serial::ext")]
    pub value: f64,
    pub method: VariationMethod,
    pub t_schedule_used: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrapolation: Option<Extrapolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl VariationResult {
    fn plain(value: f64, method: VariationMethod) -> Self {
        VariationResult { value, method, t_schedule_used: Vec::new(), extrapolation: None, note: None }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VariationOptions {
    /// Dual grid for all conjugations (default: union of the default duals).
    pub dual: Option<GridSpec>,
    /// Ω cut for the integral formula (default 1e-8 · max φ*).
    pub eps_omega: Option<f64>,
}

impl VariationOptions {
    fn sum_options(&self) -> SumOptions {
        SumOptions { dual: self.dual.clone(), coef_floor: None }
    }
}

fn check_schedule(ts: &[f64]) -> Result<()> {
    if ts.len() < 3 {
        return invalid("t schedule needs at least 3 points");
    }
    if ts.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return invalid("t schedule must lie in (0, 1]");
    }
    if ts.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("t schedule must be strictly decreasing");
    }
    Ok(())
}

/// Neville extrapolation of the quotients to t = 0, truncated at order 2.
pub fn extrapolate(ts: &[f64], d: &[f64]) -> Extrapolation {
    let lin = |i: usize, j: usize, a: f64, b: f64| (ts[i] * b - ts[j] * a) / (ts[i] - ts[j]);
    let level1: Vec<f64> = (0..d.len() - 1).map(|i| lin(i, i + 1, d[i], d[i + 1])).collect();
    let level2: Vec<f64> = (0..d.len().saturating_sub(2))
        .map(|i| lin(i, i + 2, level1[i], level1[i + 1]))
        .collect();
    let best = *level2.last().unwrap_or(level1.last().unwrap());
    let error_estimate = if level2.len() >= 2 {
        (level2[level2.len() - 1] - level2[level2.len() - 2]).abs()
    } else {
        (best - level1.last().copied().unwrap_or(best)).abs()
    };
    let growing = d.windows(2).all(|w| w[1] > w[0]);
    let divergent = growing && d[0] > 0.0 && d[d.len() - 1] >= 2.0 * d[0];
    let mut warnings = Vec::new();
    let monotone = d.windows(2).all(|w| w[1] >= w[0]) || d.windows(2).all(|w| w[1] <= w[0]);
    if !monotone && !divergent {
        warnings.push("difference quotients are not monotone in t; grid may be too coarse".into());
    }
    Extrapolation { quotients: d.to_vec(), level1, level2, error_estimate, divergent, warnings }
}

fn finish(ts: &[f64], d: Vec<f64>, method: VariationMethod) -> VariationResult {
    let ex = extrapolate(ts, &d);
    let value = if ex.divergent {
        f64::INFINITY
    } else {
        *ex.level2.last().unwrap_or(ex.level1.last().unwrap())
    };
    VariationResult { value, method, t_schedule_used: ts.to_vec(), extrapolation: Some(ex), note: None }
}

/// lim (J(f ⊕_p t·g) − J(f))/t by difference quotients on the schedule and
/// Richardson extrapolation. J(f) is taken through the same conjugation
/// pipeline at t = 0 so that discretization bias cancels in the quotient.
pub fn delta_j_numeric(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    schedule: &[f64],
    opts: &VariationOptions,
) -> Result<VariationResult> {
    check_schedule(schedule)?;
    if !(total_mass(f) > 0.0) {
        return invalid("delta_J needs J(f) > 0");
    }
    let pipe = SumPipeline::new(f, g, p, &opts.sum_options())?;
    let j0 = mass_of(&conjugate_fast(&pipe.phi_star, &pipe.primal)?);
    let mut d = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let jt = mass_of(&pipe.potential(1.0, t)?);
        d.push((jt - j0) / t);
    }
    Ok(finish(schedule, d, VariationMethod::FiniteDifference))
}

/// δJ_p(f,f) = (n/p) J(f) + (1/p) ∫ f log f.
pub fn delta_j_self_closed(f: &LogConcaveFn, p: f64) -> Result<VariationResult> {
    let j = total_mass(f);
    if !(j > 0.0) {
        return invalid("delta_J needs J(f) > 0");
    }
    let n = f.dim() as f64;
    Ok(VariationResult::plain(n / p * j + integral_f_log_f(f) / p, VariationMethod::ClosedFormSelf))
}

/// (1/p) ∫ (ψ*(∇φ))^p (φ*(∇φ))^{1−p} e^{−φ} dx over stencil-safe nodes.
pub fn delta_j_integral(f: &LogConcaveFn, g: &LogConcaveFn, p: f64, opts: &VariationOptions) -> Result<VariationResult> {
    if f.tag() < ClassTag::A0Prime || g.tag() < ClassTag::A0Prime {
        return invalid("integral formula needs CLASS_A0_PRIME inputs");
    }
    if !(p > 1.0) {
        return invalid("p must exceed 1");
    }
    let dual = match &opts.dual {
        Some(d) => d.clone(),
        None => common_dual_spec(&default_dual_spec(f.phi())?, &default_dual_spec(g.phi())?)?,
    };
    let psi_star = conjugate_fast(g.phi(), &dual)?;
    let raw = raw_pushforward(f.phi());
    if raw.atoms.is_empty() {
        return Err(Error::Numerical("no stencil-safe node for the integral formula".into()));
    }
    let smax = raw.atoms.iter().map(|a| a.s).fold(0.0, f64::max);
    let eps = opts.eps_omega.unwrap_or(1e-8 * smax);
    let dim = f.dim();
    let mut sum = 0.0;
    let mut bad = 0usize;
    for a in &raw.atoms {
        let q = psi_star.eval(&a.y[..dim]);
        let Some(q) = q.value() else {
            bad += 1;
            continue;
        };
        if a.s > eps {
            sum += q.max(0.0).powf(p) * a.s.powf(1.0 - p) * a.w;
        } else if q != 0.0 {
            bad += 1;
        }
    }
    let frac = bad as f64 / raw.atoms.len() as f64;
    if frac > 1e-3 {
        return Err(Error::Numerical(format!(
            "integrand non-finite on {:.3}% of nodes (Ω cut eps = {eps:e})",
            100.0 * frac
        )));
    }
    let mut r = VariationResult::plain(sum / p, VariationMethod::IntegralFormula);
    if bad > 0 {
        r.note = Some(format!("{bad} nodes skipped (non-finite integrand, Ω cut eps = {eps:e})"));
    }
    Ok(r)
}

/// Compares lim (J((1−t)·f ⊕_p t·g) − J(f))/t with δJ_p(f,g) − δJ_p(f,f).
/// margin = −(relative discrepancy), so the report passes when the
/// discrepancy is at most `rel_tol`.
pub fn delta_j_decomposition_check(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    schedule: &[f64],
    rel_tol: f64,
    opts: &VariationOptions,
) -> Result<MarginReport> {
    check_schedule(schedule)?;
    let pipe = SumPipeline::new(f, g, p, &opts.sum_options())?;
    let j0 = mass_of(&conjugate_fast(&pipe.phi_star, &pipe.primal)?);
    let mut d = Vec::with_capacity(schedule.len());
    for &t in schedule {
        let jt = mass_of(&pipe.potential(1.0 - t, t)?);
        d.push((jt - j0) / t);
    }
    let lhs = finish(schedule, d, VariationMethod::FiniteDifference).value;
    let dfg = delta_j_numeric(f, g, p, schedule, opts)?.value;
    let dff = delta_j_self_closed(f, p)?.value;
    let rhs = dfg - dff;
    if !(lhs.is_finite() && rhs.is_finite()) {
        return Ok(MarginReport::with_margin("decomposition", lhs, rhs, f64::NAN, rel_tol, rel_tol)
            .fail("a side of the decomposition is not finite"));
    }
    let scale = lhs.abs().max(rhs.abs()).max(dff.abs());
    let disc = (lhs - rhs).abs() / scale;
    Ok(MarginReport::with_margin("decomposition", lhs, rhs, -disc, rel_tol, rel_tol)
        .param("relative_discrepancy", disc)
        .param("delta_fg", dfg)
        .param("delta_ff", dff))
}

/// Default c grid: 32 log-spaced values in [1e-4, 1e4].
pub fn default_c_grid() -> Vec<f64> {
    (0..32).map(|k| 10f64.powf(-4.0 + 8.0 * k as f64 / 31.0)).collect()
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..10).map(|k| k as f64 / 10.0).collect()
}

/// Searches c for which (φ*)^p − c(ψ*)^p is discretely convex on the dual
/// nodes where both conjugates are reliable. Witness: the largest such c.
pub fn check_admissible(
    f: &LogConcaveFn,
    g: &LogConcaveFn,
    p: f64,
    c_grid: &[f64],
    tol: f64,
    opts: &VariationOptions,
) -> Result<MarginReport> {
    if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0)) {
        return invalid("c grid must be nonempty and positive");
    }
    let dual = match &opts.dual {
        Some(d) => d.clone(),
        None => common_dual_spec(&default_dual_spec(f.phi())?, &default_dual_spec(g.phi())?)?,
    };
    let (fs, rf) = conjugate_fast_with_reliability(f.phi(), &dual)?;
    let (gs, rg) = conjugate_fast_with_reliability(g.phi(), &dual)?;
    let use_node = |i: usize| rf[i] && rg[i] && fs.values()[i].is_finite() && gs.values()[i].is_finite();
    let lines = grid_lines(&dual);
    let mut best: Option<(f64, f64)> = None; // (c, margin) of best failure
    let mut witness: Option<(f64, f64)> = None;
    for &c in c_grid {
        let h: Vec<f64> = fs
            .values()
            .iter()
            .zip(gs.values())
            .map(|(&a, &b)| a.max(0.0).powf(p) - c * b.max(0.0).powf(p))
            .collect();
        let (m, _) = convexity_margin(&h, &lines, use_node);
        if m >= -tol {
            if witness.is_none_or(|(wc, _)| c > wc) {
                witness = Some((c, m));
            }
        } else if best.is_none_or(|(_, bm)| m > bm) {
            best = Some((c, m));
        }
    }
    Ok(match witness {
        Some((c, m)) => MarginReport::with_margin("admissible", m, 0.0, m.min(f64::MAX), tol, tol)
            .witness(format!("c = {c}"))
            .param("c", c),
        None => {
            let (c, m) = best.unwrap();
            MarginReport::with_margin("admissible", m, 0.0, m, tol, tol)
                .witness(format!("no c in grid works; best c = {c}"))
                .param("c", c)
        }
    })
}

fn second_diff(v: &[f64], spec: &GridSpec, i: usize, k: usize) -> f64 {
    let ij = spec.unravel(i);
    let mut a = ij;
    let mut b = ij;
    a[k] -= 1;
    b[k] += 1;
    let h = spec.step(k);
    (v[spec.ravel(a)] - 2.0 * v[i] + v[spec.ravel(b)]) / (h * h)
}

fn mixed_diff(v: &[f64], spec: &GridSpec, i: usize) -> f64 {
    let [r, c] = spec.unravel(i);
    let at = |a: usize, b: usize| v[spec.ravel([a, b])];
    (at(r + 1, c + 1) - at(r + 1, c - 1) - at(r - 1, c + 1) + at(r - 1, c - 1)) / (4.0 * spec.step(0) * spec.step(1))
}

fn central_grad(v: &[f64], spec: &GridSpec, i: usize, k: usize) -> f64 {
    let ij = spec.unravel(i);
    let mut a = ij;
    let mut b = ij;
    a[k] -= 1;
    b[k] += 1;
    (v[spec.ravel(b)] - v[spec.ravel(a)]) / (2.0 * spec.step(k))
}

fn hessian(v: &[f64], spec: &GridSpec, i: usize) -> [[f64; 2]; 2] {
    if spec.dim == 1 {
        [[second_diff(v, spec, i, 0), 0.0], [0.0, 1.0]]
    } else {
        let m = mixed_diff(v, spec, i);
        [[second_diff(v, spec, i, 0), m], [m, second_diff(v, spec, i, 1)]]
    }
}

fn det(h: &[[f64; 2]; 2]) -> f64 {
    h[0][0] * h[1][1] - h[0][1] * h[1][0]
}

/// Sufficient conditions for the determinant bound on the punctured dual
/// grid: route (i) convexity of (φ*)^α/α (log φ* at α = 0), route (ii) the
/// quadratic-form ratio ⟨∇φ*, (∇²φ*)^{-1}∇φ*⟩/φ*, and the direct ratio
/// det∇²(φ*)^p / ((φ*)^{n(p−1)} det∇²φ*). Requires φ* > 0 with positive
/// definite discrete Hessian on every usable node.
pub fn check_compatibility(
    f: &LogConcaveFn,
    p: f64,
    alpha_grid: &[f64],
    tol: f64,
    opts: &VariationOptions,
) -> Result<MarginReport> {
    if alpha_grid.iter().any(|&a| !(0.0..1.0).contains(&a)) {
        return invalid("alpha grid must lie in [0, 1)");
    }
    let dual = match &opts.dual {
        Some(d) => d.clone(),
        None => default_dual_spec(f.phi())?,
    };
    let (star, rel) = conjugate_fast_with_reliability(f.phi(), &dual)?;
    let v = star.values();
    let origin = dual.origin_index();
    let n = dual.n_axis;
    let usable = |i: usize| {
        v[i].is_finite() && rel[i] && Some(i) != origin && !dual.on_boundary(i)
    };
    // nodes whose full 3x3 (or 3-point) stencil is usable
    let stencil_ok = |i: usize| -> bool {
        if !usable(i) {
            return false;
        }
        let ij = dual.unravel(i);
        if dual.dim == 1 {
            return usable(i - 1) && usable(i + 1);
        }
        for di in 0..3 {
            for dj in 0..3 {
                let (a, b) = (ij[0] + di, ij[1] + dj);
                if a == 0 || b == 0 || a > n || b > n {
                    return false;
                }
                let k = dual.ravel([a - 1, b - 1]);
                if k != i && !(v[k].is_finite() && rel[k] && Some(k) != origin) {
                    return false;
                }
            }
        }
        true
    };
    let punct: Vec<usize> = (0..dual.len()).filter(|&i| stencil_ok(i)).collect();
    let name = "compatibility";
    if punct.is_empty() {
        return Ok(MarginReport::with_margin(name, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, tol, tol)
            .fail("no usable node on the punctured dual grid"));
    }
    let hess: Vec<[[f64; 2]; 2]> = punct.iter().map(|&i| hessian(v, &dual, i)).collect();
    let curv_scale = hess.iter().map(|h| h[0][0].abs()).fold(0.0, f64::max);
    let thr = 1e-6 * curv_scale;
    for (&i, h) in punct.iter().zip(&hess) {
        let pd = h[0][0] > thr && det(h) > thr * thr;
        if !(v[i] > 0.0) || !pd {
            let y = dual.node(i);
            return Ok(MarginReport::with_margin(name, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, tol, tol)
                .fail(format!(
                    "φ* is not strictly positive and strictly convex at y=({}, {}): flat region, determinant ratio undefined",
                    y[0], y[1]
                )));
        }
    }
    // route (i)
    let lines = grid_lines(&dual);
    let mut alphas = alpha_grid.to_vec();
    alphas.sort_by(f64::total_cmp);
    let mut route_i: Option<(f64, f64)> = None;
    let mut best_i = f64::NEG_INFINITY;
    for &a in &alphas {
        let fa: Vec<f64> = v
            .iter()
            .map(|&s| {
                if !(s.is_finite() && s > 0.0) {
                    f64::INFINITY
                } else if a == 0.0 {
                    s.ln()
                } else {
                    s.powf(a) / a
                }
            })
            .collect();
        let (m, _) = convexity_margin(&fa, &lines, usable);
        best_i = best_i.max(m);
        if m >= -tol {
            route_i = Some((a, m));
            break;
        }
    }
    // route (ii) and the direct determinant ratio
    let dimf = dual.dim as f64;
    let vp: Vec<f64> = v.iter().map(|&s| if s.is_finite() { s.max(0.0).powf(p) } else { s }).collect();
    let mut k1 = 0.0f64;
    let mut kdet = 0.0f64;
    for (&i, h) in punct.iter().zip(&hess) {
        let g0 = central_grad(v, &dual, i, 0);
        let q = if dual.dim == 1 {
            g0 * g0 / h[0][0]
        } else {
            let g1 = central_grad(v, &dual, i, 1);
            let d = det(h);
            (h[1][1] * g0 * g0 - 2.0 * h[0][1] * g0 * g1 + h[0][0] * g1 * g1) / d
        };
        k1 = k1.max(q / v[i]);
        let hp = hessian(&vp, &dual, i);
        let dp = if dual.dim == 1 { hp[0][0] } else { det(&hp) };
        let dd = if dual.dim == 1 { h[0][0] } else { det(h) };
        kdet = kdet.max(dp / (v[i].powf(dimf * (p - 1.0)) * dd));
    }
    let mut r = match route_i {
        Some((a, m)) => MarginReport::with_margin(name, m, 0.0, m, tol, tol)
            .witness(format!("route (i) alpha = {a}; route (ii) k1 = {k1}; determinant k = {kdet}"))
            .param("alpha", a),
        None => MarginReport::with_margin(name, best_i, 0.0, 0.0, tol, tol)
            .witness(format!("route (i) fails on the alpha grid; route (ii) k1 = {k1}; determinant k = {kdet}")),
    };
    r = r.param("k1", k1).param("k_det", kdet).param("route_i_best_margin", best_i);
    if !(k1.is_finite() || kdet.is_finite() || route_i.is_some()) {
        r = r.fail("no route yields a finite witness");
    }
    Ok(r)
}

/// Convenience: the punctured-grid ratio of route (ii) for a raw conjugate.
pub fn quadratic_form_ratio(star: &GridFunction) -> Option<f64> {
    let spec = star.spec();
    if spec.dim != 1 {
        return None;
    }
    let v = star.values();
    let o = spec.origin_index()?;
    let mut k = 0.0f64;
    for i in 1..spec.n_axis - 1 {
        if i == o {
            continue;
        }
        let h = second_diff(v, spec, i, 0);
        let g = central_grad(v, spec, i, 0);
        k = k.max(g * g / h / v[i]);
    }
    Some(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extrapolation_is_exact_on_quadratics() {
        let ts: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        let d: Vec<f64> = ts.iter().map(|t| 0.7 + 0.3 * t - 2.0 * t * t).collect();
        let ex = extrapolate(&ts, &d);
        assert!((ex.level2[1] - 0.7).abs() < 1e-12);
        assert!(ex.error_estimate < 1e-12);
        assert!(!ex.divergent);
    }

    #[test]
    fn divergence_detection() {
        let ts: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];
        let d: Vec<f64> = ts.iter().map(|t| 1.0 / t.sqrt()).collect();
        assert!(extrapolate(&ts, &d).divergent);
    }

    #[test]
    fn schedule_validation() {
        assert!(check_schedule(&[0.1, 0.05]).is_err());
        assert!(check_schedule(&[0.05, 0.1, 0.2]).is_err());
        assert!(check_schedule(&[2.0, 0.1, 0.05]).is_err());
        assert!(check_schedule(&DEFAULT_SCHEDULE).is_ok());
    }

    #[test]
    fn c_grid_shape() {
        let c = default_c_grid();
        assert_eq!(c.len(), 32);
        assert!((c[0] - 1e-4).abs() < 1e-18);
        assert!((c[31] - 1e4).abs() < 1e-8);
    }
}
