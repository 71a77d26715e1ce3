//! Total mass, entropy and pushforward (surface-area) measures.

use crate::error::{invalid, Error, Result};
use crate::funcgrid::{GridFunction, GridSpec, LogConcaveFn};
use crate::legendre::default_dual_spec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Composite trapezoid weight of each node.
pub(crate) fn trapezoid_weights(spec: &GridSpec) -> Vec<f64> {
    let n = spec.n_axis;
    let axis_w = |k: usize| -> Vec<f64> {
        let h = spec.step(k);
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h }).collect()
    };
    let w0 = axis_w(0);
    if spec.dim == 1 {
        return w0;
    }
    let w1 = axis_w(1);
    let mut w = Vec::with_capacity(n * n);
    for a in &w0 {
        for b in &w1 {
            w.push(a * b);
        }
    }
    w
}

/// ∫ e^{-φ} over the grid box (e^{-inf} = 0).
pub fn mass_of(phi: &GridFunction) -> f64 {
    trapezoid_weights(phi.spec())
        .iter()
        .zip(phi.values())
        .map(|(w, &v)| if v.is_finite() { w * (-v).exp() } else { 0.0 })
        .sum()
}

/// J(f) = ∫ f.
pub fn total_mass(f: &LogConcaveFn) -> f64 {
    mass_of(f.phi())
}

/// ∫ f log f = -∫ φ e^{-φ}, with 0 log 0 = 0.
pub fn integral_f_log_f(f: &LogConcaveFn) -> f64 {
    trapezoid_weights(f.spec())
        .iter()
        .zip(f.phi().values())
        .map(|(w, &v)| if v.is_finite() { -w * v * (-v).exp() } else { 0.0 })
        .sum()
}

/// Ent(f) = ∫ f log f − J(f) log J(f).
pub fn entropy(f: &LogConcaveFn) -> Result<f64> {
    let j = total_mass(f);
    if !(j > 0.0) {
        return invalid("entropy needs J(f) > 0");
    }
    Ok(integral_f_log_f(f) - j * j.ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub y: Vec<f64>,
    pub w: f64,
}

/// Ω cut applied to an Lp surface measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaCut {
    /// atoms with φ*(y) <= eps were attributed to the zero set of φ*
    pub eps: f64,
    /// μ₁ mass of the dropped atoms
    pub dropped_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub atoms: Vec<Atom>,
    pub even: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaCut>,
}

impl DiscreteMeasure {
    pub fn new(atoms: Vec<Atom>, even: bool) -> Result<Self> {
        let m = DiscreteMeasure { atoms, even: false, omega: None };
        m.validate()?;
        if even && !m.is_mirror_closed(1e-9) {
            return invalid("measure declared even but atoms are not mirror closed");
        }
        Ok(DiscreteMeasure { even, ..m })
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.atoms.first() else {
            return Ok(());
        };
        let d = first.y.len();
        if d != 1 && d != 2 {
            return invalid("atom dimension must be 1 or 2");
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.y.len() != d {
                return invalid(format!("atom {i} has inconsistent dimension"));
            }
            if !a.y.iter().all(|v| v.is_finite()) {
                return invalid(format!("atom {i} has a non-finite coordinate"));
            }
            if !(a.w >= 0.0 && a.w.is_finite()) {
                return invalid(format!("atom {i} has an invalid weight {}", a.w));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.y.len())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.w).sum()
    }

    pub fn scaled(&self, c: f64) -> DiscreteMeasure {
        DiscreteMeasure {
            atoms: self.atoms.iter().map(|a| Atom { y: a.y.clone(), w: a.w * c }).collect(),
            even: self.even,
            omega: self.omega.clone(),
        }
    }

    /// Every atom has a partner at −y (within `tol`) whose weight agrees
    /// within `tol` relative to the larger weight.
    pub fn is_mirror_closed(&self, tol: f64) -> bool {
        let tol = tol.max(1e-300);
        let key = |y: &[f64]| -> (i64, i64) {
            let k0 = (y[0] / tol).round() as i64;
            let k1 = if y.len() > 1 { (y[1] / tol).round() as i64 } else { 0 };
            (k0, k1)
        };
        let mut buckets: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, a) in self.atoms.iter().enumerate() {
            buckets.entry(key(&a.y)).or_default().push(i);
        }
        self.atoms.iter().all(|a| {
            let neg: Vec<f64> = a.y.iter().map(|v| -v).collect();
            let (k0, k1) = key(&neg);
            for d0 in -1..=1 {
                for d1 in -1..=1 {
                    if let Some(list) = buckets.get(&(k0 + d0, k1 + d1)) {
                        for &j in list {
                            let b = &self.atoms[j];
                            let close = b.y.iter().zip(&neg).all(|(u, v)| (u - v).abs() <= tol);
                            let wt = (a.w - b.w).abs() <= tol * a.w.max(b.w).max(1.0);
                            if close && wt {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: DiscreteMeasure = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = if self.dim() == 2 { String::from("y0,y1,w\n") } else { String::from("y0,w\n") };
        for a in &self.atoms {
            for v in &a.y {
                s.push_str(&format!("{v},"));
            }
            s.push_str(&format!("{}\n", a.w));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('y') {
                continue;
            }
            let nums: std::result::Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            if nums.len() < 2 {
                return Err(Error::Parse(format!("line {}: need coordinates and a weight", ln + 1)));
            }
            let w = nums[nums.len() - 1];
            atoms.push(Atom { y: nums[..nums.len() - 1].to_vec(), w });
        }
        let m = DiscreteMeasure { atoms, even: false, omega: None };
        m.validate()?;
        let even = m.is_mirror_closed(1e-9);
        Ok(DiscreteMeasure { even, ..m })
    }
}

/// Σ w_k g(y_k).
pub fn measure_integral(mu: &DiscreteMeasure, g: impl Fn(&[f64]) -> f64) -> f64 {
    mu.atoms.iter().map(|a| a.w * g(&a.y)).sum()
}

/// Node-level pushforward sample: gradient by central differences, weight
/// e^{-φ(x)} times the node's quadrature weight, and φ*(∇φ(x)) through the
/// gradient identity φ*(∇φ(x)) = ⟨x,∇φ(x)⟩ − φ(x).
#[derive(Clone, Copy, Debug)]
pub(crate) struct RawAtom {
    pub y: [f64; 2],
    pub w: f64,
    pub s: f64,
    pub node: usize,
}

pub(crate) struct RawPushforward {
    pub atoms: Vec<RawAtom>,
    pub used: usize,
    pub skipped: usize,
    pub skipped_mass: f64,
}

pub(crate) fn raw_pushforward(phi: &GridFunction) -> RawPushforward {
    let spec = phi.spec();
    let v = phi.values();
    let n = spec.n_axis;
    let qw = trapezoid_weights(spec);
    let mut atoms = Vec::new();
    let (mut skipped, mut skipped_mass) = (0usize, 0.0f64);
    for idx in 0..spec.len() {
        let val = v[idx];
        if !val.is_finite() {
            continue;
        }
        let ij = spec.unravel(idx);
        let mut g = [0.0; 2];
        let mut ok = true;
        for k in 0..spec.dim {
            if ij[k] == 0 || ij[k] == n - 1 {
                ok = false;
                break;
            }
            let mut a = ij;
            let mut b = ij;
            a[k] -= 1;
            b[k] += 1;
            let (va, vb) = (v[spec.ravel(a)], v[spec.ravel(b)]);
            if !(va.is_finite() && vb.is_finite()) {
                ok = false;
                break;
            }
            g[k] = (vb - va) / (2.0 * spec.step(k));
        }
        let w = qw[idx] * (-val).exp();
        if !ok {
            skipped += 1;
            skipped_mass += w;
            continue;
        }
        let x = spec.node(idx);
        let s = x[0] * g[0] + x[1] * g[1] - val;
        atoms.push(RawAtom { y: g, w, s, node: idx });
    }
    RawPushforward { used: atoms.len(), atoms, skipped, skipped_mass }
}

/// Merges atoms sharing a cell of the origin-centred lattice of spacing `r`.
/// Position and φ* value are weight-averaged. Returns (y, weight, s) triples.
pub(crate) fn merge_atoms(raw: &[RawAtom], r: f64, dim: usize) -> Vec<([f64; 2], f64, f64)> {
    let key = |y: &[f64; 2]| -> (i64, i64) {
        ((y[0] / r).round() as i64, if dim > 1 { (y[1] / r).round() as i64 } else { 0 })
    };
    let mut order: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].w > 0.0).collect();
    order.sort_by(|&a, &b| {
        key(&raw[a].y)
            .cmp(&key(&raw[b].y))
            .then(raw[a].y[0].total_cmp(&raw[b].y[0]))
            .then(raw[a].y[1].total_cmp(&raw[b].y[1]))
            .then(raw[a].node.cmp(&raw[b].node))
    });
    let mut out = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let k = key(&raw[order[i]].y);
        let (mut w, mut y0, mut y1, mut s) = (0.0, 0.0, 0.0, 0.0);
        while i < order.len() && key(&raw[order[i]].y) == k {
            let a = &raw[order[i]];
            w += a.w;
            y0 += a.w * a.y[0];
            y1 += a.w * a.y[1];
            s += a.w * a.s;
            i += 1;
        }
        out.push(([y0 / w, y1 / w], w, s / w));
    }
    out
}

/// Pushforward measure with coverage bookkeeping.
#[derive(Clone, Debug)]
pub struct Pushforward {
    pub measure: DiscreteMeasure,
    /// φ* value attached to each atom (weight-averaged through merging).
    pub phi_star: Vec<f64>,
    pub cells_used: usize,
    pub cells_skipped: usize,
    pub skipped_mass: f64,
}

/// Default merge radius: half the spacing of the default dual grid.
pub fn default_merge_radius(phi: &GridFunction) -> Result<f64> {
    let d = default_dual_spec(phi)?;
    Ok(0.5 * d.min_step())
}

fn to_atoms(merged: &[([f64; 2], f64, f64)], dim: usize, weight: impl Fn(f64, f64) -> f64) -> Vec<Atom> {
    merged
        .iter()
        .map(|(y, w, s)| Atom { y: y[..dim].to_vec(), w: weight(*w, *s) })
        .collect()
}

/// μ(f,·): pushforward of e^{-φ}dx under ∇φ.
pub fn surface_measure(f: &LogConcaveFn, merge_radius: Option<f64>) -> Result<Pushforward> {
    let phi = f.phi();
    let r = match merge_radius {
        Some(r) if r > 0.0 => r,
        Some(_) => return invalid("merge radius must be positive"),
        None => default_merge_radius(phi)?,
    };
    let raw = raw_pushforward(phi);
    if raw.atoms.is_empty() {
        return Err(Error::Numerical("no stencil-safe node; pushforward is empty".into()));
    }
    let merged = merge_atoms(&raw.atoms, r, phi.dim());
    let atoms = to_atoms(&merged, phi.dim(), |w, _| w);
    Ok(Pushforward {
        measure: DiscreteMeasure { atoms, even: phi.is_even(), omega: None },
        phi_star: merged.iter().map(|m| m.2).collect(),
        cells_used: raw.used,
        cells_skipped: raw.skipped,
        skipped_mass: raw.skipped_mass,
    })
}

#[derive(Clone, Debug, Default)]
pub struct LpMeasureOptions {
    pub merge_radius: Option<f64>,
    /// Ω cut; defaults to 1e-8 · max φ*(∇φ).
    pub eps_omega: Option<f64>,
}

/// μ_p(f,·) = (φ*)^{1−p} μ₁(f,·) restricted to {φ* > ε_Ω}.
pub fn lp_surface_measure(f: &LogConcaveFn, p: f64, opts: &LpMeasureOptions) -> Result<Pushforward> {
    if !p.is_finite() {
        return invalid("p must be finite");
    }
    let phi = f.phi();
    let r = match opts.merge_radius {
        Some(r) if r > 0.0 => r,
        Some(_) => return invalid("merge radius must be positive"),
        None => default_merge_radius(phi)?,
    };
    let raw = raw_pushforward(phi);
    let smax = raw.atoms.iter().map(|a| a.s).fold(0.0, f64::max);
    let eps = opts.eps_omega.unwrap_or(1e-8 * smax);
    let (kept, dropped): (Vec<RawAtom>, Vec<RawAtom>) = raw.atoms.iter().partition(|a| a.s > eps);
    if kept.is_empty() {
        return Err(Error::Numerical(format!(
            "numerical Ω is empty: no pushforward atom has φ* > {eps:e}"
        )));
    }
    let merged = merge_atoms(&kept, r, phi.dim());
    let atoms = to_atoms(&merged, phi.dim(), |w, s| w * s.powf(1.0 - p));
    Ok(Pushforward {
        measure: DiscreteMeasure {
            atoms,
            even: phi.is_even(),
            omega: Some(OmegaCut { eps, dropped_mass: dropped.iter().map(|a| a.w).sum() }),
        },
        phi_star: merged.iter().map(|m| m.2).collect(),
        cells_used: raw.used,
        cells_skipped: raw.skipped,
        skipped_mass: raw.skipped_mass,
    })
}
