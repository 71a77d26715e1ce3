//! Discrete Legendre–Fenchel conjugation: brute-force oracle, linear-time
//! transform, biconjugate.

use crate::error::{invalid, Result};
use crate::funcgrid::{GridFunction, GridSpec};
use crate::report::MarginReport;
use rayon::prelude::*;

/// A potential together with its conjugate on a dual grid.
#[derive(Clone, Debug)]
pub struct ConjugatePair {
    pub primal: GridFunction,
    pub dual: GridFunction,
    /// Per dual node: the maximizing primal node is off the box boundary, so
    /// the discrete value is not a truncation artifact.
    pub reliable: Vec<bool>,
}

impl ConjugatePair {
    pub fn new(primal: &GridFunction, dual_spec: &GridSpec) -> Result<Self> {
        let (dual, reliable) = conjugate_fast_with_reliability(primal, dual_spec)?;
        Ok(ConjugatePair { primal: primal.clone(), dual, reliable })
    }
}

/// Largest finite difference quotient magnitude between axis neighbours.
/// Also reports whether a finite node borders a +inf node.
fn observed_slope(phi: &GridFunction) -> (f64, bool) {
    let spec = phi.spec();
    let v = phi.values();
    let n = spec.n_axis;
    let mut slope = 0.0f64;
    let mut bounded = false;
    for idx in 0..spec.len() {
        let ij = spec.unravel(idx);
        for k in 0..spec.dim {
            if ij[k] + 1 >= n {
                continue;
            }
            let mut nb = ij;
            nb[k] += 1;
            let (a, b) = (v[idx], v[spec.ravel(nb)]);
            match (a.is_finite(), b.is_finite()) {
                (true, true) => slope = slope.max((b - a).abs() / spec.step(k)),
                (true, false) | (false, true) => bounded = true,
                _ => {}
            }
        }
    }
    (slope, bounded)
}

/// Symmetric dual grid with the same node count as the primal grid. The
/// radius is the largest observed slope, rounded up. When the finite region
/// ends inside the box the radius is at least `0.5 / h`, which keeps the
/// linear cap of the conjugate steep relative to the grid spacing.
pub fn default_dual_spec(phi: &GridFunction) -> Result<GridSpec> {
    let (mut r, bounded) = observed_slope(phi);
    if bounded {
        r = r.max(0.5 / phi.spec().min_step());
    }
    let r = r.ceil().max(1.0);
    GridSpec::symmetric(phi.dim(), r, phi.spec().n_axis)
}

/// The smallest symmetric grid containing both, with the finer node count.
pub fn common_dual_spec(a: &GridSpec, b: &GridSpec) -> Result<GridSpec> {
    if a.dim != b.dim {
        return invalid("dual grids differ in dimension");
    }
    let r = (0..a.dim)
        .map(|k| a.hi[k].max(b.hi[k]).max(-a.lo[k]).max(-b.lo[k]))
        .fold(0.0, f64::max);
    GridSpec::symmetric(a.dim, r, a.n_axis.max(b.n_axis))
}

fn check_inputs(phi: &GridFunction, dual: &GridSpec) -> Result<()> {
    dual.validate()?;
    if dual.dim != phi.dim() {
        return invalid("dual grid dimension differs from primal");
    }
    if phi.finite_count() == 0 {
        return invalid("conjugate of an all-+inf function");
    }
    Ok(())
}

fn maybe_even(phi: &GridFunction, dual: &GridSpec, mut vals: Vec<f64>) -> GridFunction {
    let even = phi.is_even() && dual.is_symmetric();
    if even {
        // Both entries of a mirrored pair are lower bounds of the same
        // supremum; the larger one is kept on both sides.
        for i in 0..vals.len() {
            let j = dual.mirror_index(i);
            if j > i {
                let m = vals[i].max(vals[j]);
                vals[i] = m;
                vals[j] = m;
            }
        }
    }
    GridFunction::from_parts(dual.clone(), vals, even)
}

/// φ*(y) = max over finite primal nodes x of ⟨x,y⟩ − φ(x), by exhaustive search.
pub fn conjugate_oracle(phi: &GridFunction, dual: &GridSpec) -> Result<GridFunction> {
    check_inputs(phi, dual)?;
    let spec = phi.spec();
    let pts: Vec<([f64; 2], f64)> = (0..spec.len())
        .filter(|&i| phi.values()[i].is_finite())
        .map(|i| (spec.node(i), phi.values()[i]))
        .collect();
    let vals: Vec<f64> = (0..dual.len())
        .into_par_iter()
        .map(|j| {
            let y = dual.node(j);
            let mut best = f64::NEG_INFINITY;
            for (x, v) in &pts {
                let c = x[0] * y[0] + x[1] * y[1] - v;
                if c > best {
                    best = c;
                }
            }
            best
        })
        .collect();
    let even = phi.is_even() && dual.is_symmetric();
    Ok(GridFunction::from_parts(dual.clone(), vals, even))
}

/// 1D discrete conjugate by a lower-hull sweep. `vals` may contain +inf;
/// an all-+inf input yields -inf everywhere. `arg` receives the maximizing
/// node index (usize::MAX when none).
fn lft_1d(xs: &[f64], vals: &[f64], ys: &[f64], out: &mut [f64], arg: &mut [usize], hull: &mut Vec<usize>) {
    hull.clear();
    for (i, &v) in vals.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (v - vals[a]) - (vals[b] - vals[a]) * (xs[i] - xs[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        out.fill(f64::NEG_INFINITY);
        arg.fill(usize::MAX);
        return;
    }
    let mut k = 0;
    for (j, &y) in ys.iter().enumerate() {
        let mut cur = xs[hull[k]] * y - vals[hull[k]];
        while k + 1 < hull.len() {
            let nxt = xs[hull[k + 1]] * y - vals[hull[k + 1]];
            if nxt > cur {
                k += 1;
                cur = nxt;
            } else {
                break;
            }
        }
        out[j] = cur;
        arg[j] = hull[k];
    }
}

/// Linear-time conjugate: exact discrete supremum, same contract as the oracle.
pub fn conjugate_fast(phi: &GridFunction, dual: &GridSpec) -> Result<GridFunction> {
    Ok(conjugate_fast_with_reliability(phi, dual)?.0)
}

pub fn conjugate_fast_with_reliability(
    phi: &GridFunction,
    dual: &GridSpec,
) -> Result<(GridFunction, Vec<bool>)> {
    check_inputs(phi, dual)?;
    let spec = phi.spec();
    let n = spec.n_axis;
    let m = dual.n_axis;
    let mut hull = Vec::with_capacity(n);
    if spec.dim == 1 {
        let xs = spec.axis_coords(0);
        let ys = dual.axis_coords(0);
        let mut out = vec![0.0; m];
        let mut arg = vec![0usize; m];
        lft_1d(&xs, phi.values(), &ys, &mut out, &mut arg, &mut hull);
        let reliable = arg.iter().map(|&a| a != 0 && a != n - 1).collect();
        return Ok((maybe_even(phi, dual, out), reliable));
    }
    let x0 = spec.axis_coords(0);
    let x1 = spec.axis_coords(1);
    let y0 = dual.axis_coords(0);
    let y1 = dual.axis_coords(1);
    // pass 1: rows of constant x0, conjugate along axis 1
    let mut h = vec![0.0; n * m];
    let mut a1 = vec![0usize; n * m];
    for i0 in 0..n {
        let row = &phi.values()[i0 * n..(i0 + 1) * n];
        lft_1d(&x1, row, &y1, &mut h[i0 * m..(i0 + 1) * m], &mut a1[i0 * m..(i0 + 1) * m], &mut hull);
    }
    // pass 2: for each y1, conjugate along axis 0 of -h
    let mut out = vec![0.0; m * m];
    let mut reliable = vec![false; m * m];
    let mut col = vec![0.0; n];
    let mut res = vec![0.0; m];
    let mut a0 = vec![0usize; m];
    for j1 in 0..m {
        for i0 in 0..n {
            col[i0] = -h[i0 * m + j1];
        }
        lft_1d(&x0, &col, &y0, &mut res, &mut a0, &mut hull);
        for j0 in 0..m {
            let o = j0 * m + j1;
            out[o] = res[j0];
            let i0 = a0[j0];
            reliable[o] = i0 != usize::MAX && {
                let i1 = a1[i0 * m + j1];
                i0 != 0 && i0 != n - 1 && i1 != 0 && i1 != n - 1
            };
        }
    }
    Ok((maybe_even(phi, dual, out), reliable))
}

/// φ** on the primal grid, through the default dual grid.
pub fn biconjugate(phi: &GridFunction) -> Result<GridFunction> {
    let dual = default_dual_spec(phi)?;
    biconjugate_via(phi, &dual)
}

pub fn biconjugate_via(phi: &GridFunction, dual: &GridSpec) -> Result<GridFunction> {
    let star = conjugate_fast(phi, dual)?;
    conjugate_fast(&star, phi.spec())
}

/// Checks (αφ)*(y) = α φ*(y/α) on the nodes of a dual grid scaled by α.
pub fn scale_conjugate_check(phi: &GridFunction, alpha: f64, tol: f64) -> Result<MarginReport> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid("alpha must be positive");
    }
    let base = default_dual_spec(phi)?;
    let scaled = GridSpec::symmetric(phi.dim(), base.hi[0] * alpha, base.n_axis)?;
    let star = conjugate_fast(phi, &base)?;
    let aphi = phi.map(|v| if v.is_finite() { alpha * v } else { v })?;
    let astar = conjugate_fast(&aphi, &scaled)?;
    let mut worst = 0.0f64;
    let mut at = [0.0; 2];
    for j in 0..scaled.len() {
        let y = scaled.node(j);
        let yy = [y[0] / alpha, y[1] / alpha];
        let rhs = star.eval(&yy[..phi.dim()]).scale(alpha);
        let lhs = astar.values()[j];
        let d = match rhs.value() {
            Some(r) if lhs.is_finite() => (lhs - r).abs(),
            None if lhs.is_infinite() => 0.0,
            _ => f64::INFINITY,
        };
        if d > worst {
            worst = d;
            at = y;
        }
    }
    Ok(MarginReport::with_margin("scale_conjugate", worst, 0.0, -worst, tol, tol)
        .witness(format!("max discrepancy at y=({}, {})", at[0], at[1]))
        .param("alpha", alpha))
}
