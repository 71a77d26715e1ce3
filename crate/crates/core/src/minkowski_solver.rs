//! Lp Minkowski problem: minimize Φ_{p,ν}(φ) = (1/p)∫φ^p dν − log J(e^{−φ*})
//! over even max-affine potentials, then check the Euler–Lagrange identity.

use crate::error::{invalid, Error, Result};
use crate::funcgrid::{ClassTag, GridFunction, GridSpec, LogConcaveFn};
use crate::functionals::{lp_surface_measure, mass_of, trapezoid_weights, DiscreteMeasure, LpMeasureOptions};
use crate::legendre::conjugate_fast;
use crate::report::MarginReport;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub slope: Vec<f64>,
    pub intercept: f64,
}

/// φ(y) = max(0, max_i ⟨a_i,y⟩ − b_i) with b_i ≥ 0 and every piece mirrored.
/// Only one piece of each mirrored pair is stored; the zero piece is implicit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxAffinePotential {
    pub dim: usize,
    pub pieces: Vec<Piece>,
}

impl MaxAffinePotential {
    pub fn new(dim: usize, pieces: Vec<Piece>) -> Result<Self> {
        let m = MaxAffinePotential { dim, pieces };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dim == 1 || self.dim == 2) {
            return invalid(format!("dimension must be 1 or 2, got {}", self.dim));
        }
        for (i, p) in self.pieces.iter().enumerate() {
            if p.slope.len() != self.dim {
                return invalid(format!("piece {i}: slope has {} components", p.slope.len()));
            }
            if p.slope.iter().any(|v| !v.is_finite()) || !p.intercept.is_finite() {
                return invalid(format!("piece {i}: non-finite parameter"));
            }
            if p.intercept < 0.0 {
                return invalid(format!("piece {i}: intercept must be >= 0"));
            }
        }
        Ok(())
    }

    /// φ(y) = s|y| in 1D (two pieces).
    pub fn cone_1d(s: f64) -> Self {
        MaxAffinePotential { dim: 1, pieces: vec![Piece { slope: vec![s], intercept: 0.0 }] }
    }

    /// Number of affine pieces including mirrors and the zero piece.
    pub fn n_pieces(&self) -> usize {
        2 * self.pieces.len() + 1
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for p in &self.pieces {
            let d: f64 = p.slope.iter().zip(y).map(|(a, v)| a * v).sum();
            best = best.max(d.abs() - p.intercept);
        }
        best
    }

    pub fn max_slope(&self) -> f64 {
        self.pieces.iter().map(|p| norm(&p.slope)).fold(0.0, f64::max)
    }

    /// Samples φ on a symmetric grid.
    pub fn sample(&self, spec: &GridSpec) -> Result<GridFunction> {
        if spec.dim != self.dim {
            return invalid("grid dimension does not match the potential");
        }
        GridFunction::from_fn(spec.clone(), |y| self.eval(y))
    }

    /// Slopes of all pieces, mirrors and zero piece included.
    pub fn all_slopes(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]];
        for p in &self.pieces {
            out.push(p.slope.clone());
            out.push(p.slope.iter().map(|v| -v).collect());
        }
        out
    }

    /// True when x lies in conv{a_i} (within `tol`), where φ* is finite.
    pub fn in_hull(&self, x: &[f64], tol: f64) -> bool {
        self.hull().contains(x, tol)
    }

    fn hull(&self) -> Hull {
        if self.dim == 1 {
            Hull::Interval(self.max_slope())
        } else {
            Hull::Polygon(convex_hull(&self.all_slopes().iter().map(|s| [s[0], s[1]]).collect::<Vec<_>>()))
        }
    }
}

enum Hull {
    Interval(f64),
    Polygon(Vec<[f64; 2]>),
}

impl Hull {
    fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Hull::Interval(r) => x[0].abs() <= r + tol,
            Hull::Polygon(h) => match h.len() {
                0 => false,
                1 => (x[0] - h[0][0]).hypot(x[1] - h[0][1]) <= tol,
                2 => segment_distance(x, h[0], h[1]) <= tol,
                k => (0..k).all(|i| {
                    let (a, b) = (h[i], h[(i + 1) % k]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    (e[0] * (x[1] - a[1]) - e[1] * (x[0] - a[0])) / e[0].hypot(e[1]) >= -tol
                }),
            },
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn segment_distance(x: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    let e = [b[0] - a[0], b[1] - a[1]];
    let l2 = e[0] * e[0] + e[1] * e[1];
    let t = if l2 > 0.0 { (((x[0] - a[0]) * e[0] + (x[1] - a[1]) * e[1]) / l2).clamp(0.0, 1.0) } else { 0.0 };
    (x[0] - a[0] - t * e[0]).hypot(x[1] - a[1] - t * e[1])
}

/// Andrew's monotone chain, counter-clockwise, collinear points dropped.
fn convex_hull(pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut p = pts.to_vec();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut h: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = h.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while h.len() >= start + 2 && cross(h[h.len() - 2], h[h.len() - 1], q) <= 0.0 {
                h.pop();
            }
            h.push(q);
        }
        h.pop();
    }
    h
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PieceFamily {
    /// Free slopes and intercepts b ≥ 0.
    General,
    /// Intercepts fixed at 0, so φ is positively homogeneous.
    Cone,
}

fn default_family() -> PieceFamily {
    PieceFamily::General
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: f64,
    /// Affine pieces besides the zero piece; mirrored pairs = n_pieces / 2.
    pub n_pieces: usize,
    pub max_iters: usize,
    pub step_init: f64,
    pub shrink_factor: f64,
    pub min_step: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Grid on which φ is sampled before conjugation.
    pub grid: GridSpec,
    /// Grid carrying φ* and e^{−φ*}; its radius caps the slopes.
    pub dual_grid: GridSpec,
    #[serde(default = "default_family")]
    pub family: PieceFamily,
    /// Ω cut on φ values for τ and the Euler–Lagrange check.
    pub eps_omega: f64,
    pub el_tol: f64,
}

impl SolverConfig {
    /// Defaults sized from the atom cloud of ν.
    pub fn for_measure(nu: &DiscreteMeasure, p: f64) -> Result<Self> {
        let dim = nu.dim();
        let r = nu.atoms.iter().map(|a| norm(&a.y)).fold(0.0, f64::max);
        if !(r > 0.0) {
            return invalid("lower-dimensional support: every atom sits at the origin");
        }
        let radius = (1.5 * r).ceil();
        let n = if dim == 1 { 2049 } else { 129 };
        Ok(SolverConfig {
            p,
            n_pieces: 16,
            max_iters: 400,
            step_init: 0.25,
            shrink_factor: 0.5,
            min_step: 1e-4,
            restarts: 4,
            seed: 0,
            grid: GridSpec::symmetric(dim, radius, n)?,
            dual_grid: GridSpec::symmetric(dim, r.ceil(), n)?,
            family: PieceFamily::General,
            eps_omega: 1e-8,
            el_tol: 0.05,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return invalid(format!("p must be a finite real > 1, got {}", self.p));
        }
        if self.n_pieces < 2 {
            return invalid("n_pieces must be at least 2");
        }
        if self.restarts == 0 {
            return invalid("restarts must be at least 1");
        }
        if !(self.step_init > 0.0 && self.min_step > 0.0 && self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return invalid("step_init, min_step must be positive and shrink_factor in (0,1)");
        }
        self.grid.validate()?;
        self.dual_grid.validate()?;
        if !(self.grid.is_symmetric() && self.dual_grid.is_symmetric()) {
            return invalid("solver grids must be symmetric about the origin");
        }
        if self.grid.dim != self.dual_grid.dim {
            return invalid("grid and dual_grid dimensions differ");
        }
        Ok(())
    }

    fn slope_cap(&self) -> f64 {
        self.dual_grid.hi[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureValidation {
    pub even: bool,
    pub full_rank: bool,
    pub rank: usize,
    pub finite_moment: bool,
    /// Σ w |y|^p
    pub p_moment: f64,
    pub escaping_mass: String,
}

impl MeasureValidation {
    pub fn ok(&self) -> bool {
        self.even && self.full_rank && self.finite_moment
    }

    pub fn require(&self) -> Result<()> {
        if !self.full_rank {
            return invalid(format!("lower-dimensional support: atoms span a {}-dimensional subspace", self.rank));
        }
        if !self.even {
            return invalid("measure is not even (atoms are not mirror-closed)");
        }
        if !self.finite_moment {
            return invalid("p-th moment is not finite");
        }
        Ok(())
    }
}

pub fn validate_measure(nu: &DiscreteMeasure, p: f64) -> Result<MeasureValidation> {
    nu.validate()?;
    if nu.is_empty() || !(nu.total_mass() > 0.0) {
        return invalid("measure has no mass");
    }
    let dim = nu.dim();
    let scale = nu.atoms.iter().map(|a| norm(&a.y)).fold(0.0, f64::max);
    let tol = 1e-9 * scale.max(1e-300);
    let mut m = [[0.0; 2]; 2];
    for a in nu.atoms.iter().filter(|a| a.w > 0.0) {
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] += a.w * a.y[i] * a.y[j];
            }
        }
    }
    let tr = m[0][0] + m[1][1];
    let rank = if !(tr > 0.0) || scale <= tol {
        0
    } else if dim == 1 {
        1
    } else {
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if det > 1e-12 * tr * tr { 2 } else { 1 }
    };
    let p_moment: f64 = nu.atoms.iter().map(|a| a.w * norm(&a.y).powf(p)).sum();
    Ok(MeasureValidation {
        even: nu.is_mirror_closed(1e-9 * scale.max(1.0)),
        full_rank: rank == dim,
        rank,
        finite_moment: p_moment.is_finite(),
        p_moment,
        escaping_mass: "not applicable to discrete measures".into(),
    })
}

/// φ* on the dual grid: conjugate of the sampled potential, +inf outside conv{a_i}.
pub fn conjugate_masked(phi: &MaxAffinePotential, grid: &GridSpec, dual: &GridSpec) -> Result<GridFunction> {
    let star = conjugate_fast(&phi.sample(grid)?, dual)?;
    let tol = 1e-9 * dual.min_step();
    let hull = phi.hull();
    let vals = (0..dual.len())
        .map(|i| {
            let x = dual.node(i);
            if hull.contains(&x[..dual.dim], tol) { star.values()[i] } else { f64::INFINITY }
        })
        .collect();
    let g = GridFunction::new(dual.clone(), vals, false)?;
    if g.mirror_defect() == 0.0 { g.with_even() } else { Ok(g) }
}

fn first_term(phi: &MaxAffinePotential, nu: &DiscreteMeasure, p: f64) -> f64 {
    nu.atoms.iter().map(|a| a.w * phi.eval(&a.y).powf(p)).sum::<f64>() / p
}

/// Fewest finite nodes per axis for e^{−φ*} to count as resolved.
pub const MIN_SUPPORT_NODES: usize = 5;

fn dual_mass(phi: &MaxAffinePotential, cfg: &SolverConfig) -> Result<f64> {
    let star = conjugate_masked(phi, &cfg.grid, &cfg.dual_grid)?;
    if star.finite_count() < MIN_SUPPORT_NODES.pow(star.dim() as u32) {
        return Err(Error::Infeasible(format!(
            "support of e^-phi* covers {} dual nodes; J is not resolved on this grid",
            star.finite_count()
        )));
    }
    let j = mass_of(&star);
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::Infeasible(format!(
            "J(e^-phi*) = {j:e} on the dual grid; enlarge grid or dual_grid"
        )));
    }
    Ok(j)
}

/// Φ_{p,ν}(φ). An infeasible point (J numerically 0 or not finite) is an
/// `Error::Infeasible`.
pub fn objective(phi: &MaxAffinePotential, nu: &DiscreteMeasure, p: f64, cfg: &SolverConfig) -> Result<f64> {
    let j = dual_mass(phi, cfg)?;
    Ok(first_term(phi, nu, p) - j.ln())
}

fn unit_ball_volume(n: usize) -> f64 {
    if n == 1 { 2.0 } else { std::f64::consts::PI }
}

/// m_ν = min over sampled directions θ of Σ w |⟨y,θ⟩|.
pub fn min_directional_moment(nu: &DiscreteMeasure, n_dirs: usize) -> f64 {
    let dirs: Vec<[f64; 2]> = if nu.dim() == 1 {
        vec![[1.0, 0.0]]
    } else {
        (0..n_dirs.max(1))
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / n_dirs.max(1) as f64;
                [t.cos(), t.sin()]
            })
            .collect()
    };
    dirs.iter()
        .map(|th| {
            nu.atoms
                .iter()
                .map(|a| a.w * a.y.iter().zip(th).map(|(y, t)| y * t).sum::<f64>().abs())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// min_t H(t) − ν(ℝⁿ) with H(t) = c_ν t^{1/n} − log t and
/// c_ν = V(B₁)^{1/n} m_ν / (2π e^{1/n}).
pub fn objective_lower_bound(nu: &DiscreteMeasure, _p: f64) -> Result<f64> {
    let n = nu.dim() as f64;
    let m = min_directional_moment(nu, 64);
    if !(m > 0.0) {
        return invalid("directional moment vanishes; measure is lower-dimensional");
    }
    let c = unit_ball_volume(nu.dim()).powf(1.0 / n) * m / (2.0 * std::f64::consts::PI * (1.0 / n).exp());
    let t0 = (n / c).powf(n);
    Ok(c * t0.powf(1.0 / n) - t0.ln() - nu.total_mass())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    /// ∫_Ω φ^{p−1} dν / μ(Ω)
    pub from_nu_moment: f64,
    /// ν(Ω) / μ_p(Ω)
    pub from_lp_measure: f64,
    pub tau: f64,
    pub relative_spread: f64,
    /// 1 / J(e^{−φ*}), the value forced by the Euler–Lagrange identity
    pub inverse_mass: f64,
}

pub const TAU_SPREAD_LIMIT: f64 = 0.1;

struct DualPicture {
    /// (y, weight, φ(y)) of μ(e^{−φ*}) atoms
    atoms: Vec<(Vec<f64>, f64, f64)>,
    j: f64,
}

fn dual_picture(phi: &MaxAffinePotential, cfg: &SolverConfig) -> Result<DualPicture> {
    let star = conjugate_masked(phi, &cfg.grid, &cfg.dual_grid)?;
    let j = mass_of(&star);
    if !(j > 0.0 && j.is_finite()) {
        return Err(Error::Infeasible(format!("J(e^-phi*) = {j:e}")));
    }
    let atoms = argmax_pushforward(phi, &cfg.grid, &star)?
        .into_iter()
        .map(|(y, w)| {
            let s = phi.eval(&y);
            (y, w, s)
        })
        .collect();
    Ok(DualPicture { atoms, j })
}

/// Pushforward of e^{−φ*}dx under ∇φ*: each dual node carries its trapezoid
/// mass to the maximizer of ⟨x,y⟩ − φ(y) over the sampling grid.
fn argmax_pushforward(phi: &MaxAffinePotential, grid: &GridSpec, star: &GridFunction) -> Result<Vec<(Vec<f64>, f64)>> {
    let sampled = phi.sample(grid)?;
    let pv = sampled.values();
    let dual = star.spec();
    let dim = dual.dim;
    let qw = trapezoid_weights(dual);
    let ys: Vec<[f64; 2]> = (0..grid.len()).map(|j| grid.node(j)).collect();
    let out = (0..dual.len())
        .into_par_iter()
        .filter(|&i| star.values()[i].is_finite())
        .map(|i| {
            let x = dual.node(i);
            let mut best = (f64::NEG_INFINITY, 0usize);
            for (j, y) in ys.iter().enumerate() {
                let v = x[0] * y[0] + x[1] * y[1] - pv[j];
                if v > best.0 {
                    best = (v, j);
                }
            }
            let y = ys[best.1][..dim].to_vec();
            (y, qw[i] * (-star.values()[i]).exp())
        })
        .collect();
    Ok(out)
}

/// Both formulas for τ in ν = τ μ_p(e^{−φ*},·); errors when they disagree by
/// more than 10% or Ω carries no mass.
pub fn tau_constant(phi: &MaxAffinePotential, nu: &DiscreteMeasure, p: f64, cfg: &SolverConfig) -> Result<TauEstimate> {
    let pic = dual_picture(phi, cfg)?;
    let eps = cfg.eps_omega;
    let (mut nu_mom, mut nu_omega) = (0.0, 0.0);
    for a in &nu.atoms {
        let s = phi.eval(&a.y);
        if s > eps {
            nu_mom += a.w * s.powf(p - 1.0);
            nu_omega += a.w;
        }
    }
    let (mut mu1, mut mup) = (0.0, 0.0);
    for (_, w, s) in &pic.atoms {
        if *s > eps {
            mu1 += w;
            mup += w * s.powf(1.0 - p);
        }
    }
    if !(nu_omega > 0.0 && mu1 > 0.0) {
        return Err(Error::Numerical("numerical Ω carries no mass".into()));
    }
    let t1 = nu_mom / mu1;
    let t2 = nu_omega / mup;
    let spread = (t1 - t2).abs() / t1.abs().max(t2.abs());
    let est = TauEstimate {
        from_nu_moment: t1,
        from_lp_measure: t2,
        tau: 0.5 * (t1 + t2),
        relative_spread: spread,
        inverse_mass: 1.0 / pic.j,
    };
    if spread > TAU_SPREAD_LIMIT {
        return Err(Error::Numerical(format!(
            "tau formulas disagree by {:.1}% ({t1:e} vs {t2:e})",
            100.0 * spread
        )));
    }
    Ok(est)
}

/// Even tent test functions g(y) = T(y − c) + T(y + c), T(z) = max(0, 1 − |z|/r).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentFamily {
    pub centers: Vec<Vec<f64>>,
    pub half_width: f64,
}

impl TentFamily {
    /// Tents at radii {1.5, 2, 2.5, 3} along the axes (and diagonals in 2D),
    /// half-width 1.
    pub fn standard(dim: usize) -> Self {
        let radii = [1.5, 2.0, 2.5, 3.0];
        let dirs: Vec<Vec<f64>> = if dim == 1 {
            vec![vec![1.0]]
        } else {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![s, s], vec![s, -s]]
        };
        let centers = dirs
            .iter()
            .flat_map(|d| radii.iter().map(move |r| d.iter().map(|v| v * r).collect()))
            .collect();
        TentFamily { centers, half_width: 1.0 }
    }

    fn eval(&self, k: usize, y: &[f64]) -> f64 {
        let c = &self.centers[k];
        let t = |sign: f64| {
            let d = y.iter().zip(c).map(|(a, b)| (a - sign * b).powi(2)).sum::<f64>().sqrt();
            (1.0 - d / self.half_width).max(0.0)
        };
        t(1.0) + t(-1.0)
    }
}

/// Compares ∫g φ^{p−1} dν with (1/J)∫g dμ(e^{−φ*},·) on Ω for each tent g.
/// margin = −max relative discrepancy, tol = `cfg.el_tol`.
pub fn verify_euler_lagrange(
    phi: &MaxAffinePotential,
    nu: &DiscreteMeasure,
    p: f64,
    cfg: &SolverConfig,
    tests: &TentFamily,
) -> Result<MarginReport> {
    if tests.centers.is_empty() || !(tests.half_width > 0.0) {
        return invalid("test family is empty");
    }
    let pic = dual_picture(phi, cfg)?;
    let eps = cfg.eps_omega;
    let mut comps = Vec::new();
    let mut notes = Vec::new();
    let mut worst = (0.0f64, 0.0, 0.0);
    for k in 0..tests.centers.len() {
        let mut support_in_omega = false;
        let mut lhs = 0.0;
        for a in &nu.atoms {
            let g = tests.eval(k, &a.y);
            let s = phi.eval(&a.y);
            if g > 0.0 && s > eps {
                support_in_omega = true;
                lhs += g * a.w * s.powf(p - 1.0);
            }
        }
        let mut rhs = 0.0;
        for (y, w, s) in &pic.atoms {
            let g = tests.eval(k, y);
            if g > 0.0 && *s > eps {
                support_in_omega = true;
                rhs += g * w;
            }
        }
        rhs /= pic.j;
        if !support_in_omega {
            notes.push(format!("test {k} excluded: support misses Ω"));
            continue;
        }
        let d = (lhs - rhs).abs() / lhs.abs().max(rhs.abs());
        comps.push(d);
        if d >= worst.0 {
            worst = (d, lhs, rhs);
        }
    }
    if comps.is_empty() {
        return Err(Error::Numerical("no test function meets Ω".into()));
    }
    let mut r = MarginReport::with_margin("euler_lagrange", worst.1, worst.2, -worst.0, cfg.el_tol, cfg.el_tol)
        .param("residual", worst.0)
        .param("half_width", tests.half_width)
        .param("tests_used", comps.len() as f64)
        .param("inverse_mass", 1.0 / pic.j)
        .components(comps);
    r.equality_detected = false;
    if !notes.is_empty() {
        r = r.witness(notes.join("; "));
    }
    Ok(r)
}

/// ν = normalization · μ_p(f,·).
pub fn forward_measure(
    f: &LogConcaveFn,
    p: f64,
    normalization: f64,
    opts: &LpMeasureOptions,
) -> Result<DiscreteMeasure> {
    if f.tag() < ClassTag::A0Prime {
        return invalid("forward_measure needs a CLASS_A0_PRIME input");
    }
    if !f.phi().is_even() {
        return invalid("forward_measure needs an even input");
    }
    if !(normalization > 0.0 && normalization.is_finite()) {
        return invalid("normalization must be positive");
    }
    Ok(lp_surface_measure(f, p, opts)?.measure.scaled(normalization))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityDiagnostics {
    #[serde(with = "crate::serial::ext")]
    pub lower_bound: f64,
    pub restarts_feasible: usize,
    pub restarts_total: usize,
    pub best_restart: usize,
    #[serde(with = "crate::serial::ext_vec")]
    pub restart_objectives: Vec<f64>,
    pub dual_mass: f64,
    /// J(e^{−φ})·J(e^{−φ*}) against (2π)^n
    pub santalo_product: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub phi0: MaxAffinePotential,
    pub objective_value: f64,
    #[serde(with = "crate::serial::ext")]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_estimate: Option<TauEstimate>,
    #[serde(with = "crate::serial::ext")]
    pub el_residual: f64,
    pub el_report: Option<MarginReport>,
    pub history: Vec<f64>,
    pub feasibility: FeasibilityDiagnostics,
}

impl SolveResult {
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iter,objective\n");
        for (i, v) in self.history.iter().enumerate() {
            s.push_str(&format!("{i},{v}\n"));
        }
        s
    }
}

struct Run {
    phi: MaxAffinePotential,
    value: f64,
    history: Vec<f64>,
}

/// Pieces tangent to s·(√(ρ² + |y|²) − ρ) at points spread over the atom cloud.
fn tangent_init(dim: usize, pairs: usize, s: f64, rho: f64, reach: f64, rng: Option<&mut ChaCha8Rng>) -> MaxAffinePotential {
    let mut jitter = vec![(0.0, 0.0); pairs];
    if let Some(r) = rng {
        for j in jitter.iter_mut() {
            *j = (r.random_range(-0.15..0.15), r.random_range(-0.2..0.2));
        }
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let pieces = (0..pairs)
        .map(|k| {
            let frac = (k as f64 + 1.0) / pairs as f64;
            let rad = reach * frac * (1.0 + jitter[k].0);
            let dir = if dim == 1 {
                vec![1.0]
            } else {
                let t = golden * k as f64 + jitter[k].1;
                vec![t.cos(), t.sin()]
            };
            let slope_mag = s * rad / (rho * rho + rad * rad).sqrt();
            let q = s * ((rho * rho + rad * rad).sqrt() - rho);
            Piece {
                slope: dir.iter().map(|d| d * slope_mag).collect(),
                intercept: (slope_mag * rad - q).max(0.0),
            }
        })
        .collect();
    MaxAffinePotential { dim, pieces }
}

fn scaled(phi: &MaxAffinePotential, c: f64) -> MaxAffinePotential {
    MaxAffinePotential {
        dim: phi.dim,
        pieces: phi
            .pieces
            .iter()
            .map(|p| Piece { slope: p.slope.iter().map(|v| v * c).collect(), intercept: p.intercept * c })
            .collect(),
    }
}

fn clamp_slope(p: &mut Piece, cap: f64) {
    let n = norm(&p.slope);
    if n > cap {
        for v in p.slope.iter_mut() {
            *v *= cap / n;
        }
    }
}

/// Points about which piece k can be rotated without moving its value there:
/// the extreme and mean positions of the atoms where it is the active piece,
/// reflected to the side where ⟨a_k,y⟩ > 0.
fn pivots(phi: &MaxAffinePotential, k: usize, nu: &DiscreteMeasure) -> Vec<Vec<f64>> {
    let pc = &phi.pieces[k];
    let an = norm(&pc.slope);
    if an == 0.0 {
        return Vec::new();
    }
    let dim = phi.dim;
    let (mut lo, mut hi) = ((f64::INFINITY, vec![0.0; dim]), (f64::NEG_INFINITY, vec![0.0; dim]));
    let (mut wsum, mut mean) = (0.0, vec![0.0; dim]);
    for a in &nu.atoms {
        let d: f64 = pc.slope.iter().zip(&a.y).map(|(s, y)| s * y).sum();
        let v = d.abs() - pc.intercept;
        if v <= 0.0 || v < phi.eval(&a.y) {
            continue;
        }
        let y: Vec<f64> = a.y.iter().map(|c| c * d.signum()).collect();
        let t = d.abs() / an;
        if t < lo.0 {
            lo = (t, y.clone());
        }
        if t > hi.0 {
            hi = (t, y.clone());
        }
        wsum += a.w;
        for (m, c) in mean.iter_mut().zip(&y) {
            *m += a.w * c;
        }
    }
    if wsum == 0.0 {
        return vec![pc.slope.iter().map(|s| s * pc.intercept / (an * an)).collect()];
    }
    mean.iter_mut().for_each(|m| *m /= wsum);
    vec![lo.1, mean, hi.1]
}

fn active_pieces(phi: &MaxAffinePotential, nu: &DiscreteMeasure) -> Vec<bool> {
    let mut active = vec![false; phi.pieces.len()];
    for a in &nu.atoms {
        let top = phi.eval(&a.y);
        if top <= 0.0 {
            continue;
        }
        for (k, pc) in phi.pieces.iter().enumerate() {
            let d: f64 = pc.slope.iter().zip(&a.y).map(|(s, y)| s * y).sum();
            if d.abs() - pc.intercept >= top {
                active[k] = true;
            }
        }
    }
    active
}

/// Moves a piece that is active on no atom onto the corner between two
/// active pieces, lifted so that it cuts the corner. Returns the best
/// strictly improving candidate.
fn revive(
    phi: &MaxAffinePotential,
    value: f64,
    nu: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Option<(MaxAffinePotential, f64)> {
    let active = active_pieces(phi, nu);
    let on: Vec<usize> = (0..active.len()).filter(|&k| active[k]).collect();
    let dead = (0..active.len()).find(|&k| !active[k])?;
    let cap = cfg.slope_cap();
    let mut best: Option<(MaxAffinePotential, f64)> = None;
    for (x, &i) in on.iter().enumerate() {
        for &j in &on[x + 1..] {
            let (pi, pj) = (&phi.pieces[i], &phi.pieces[j]);
            for mirror in [1.0, -1.0] {
                let slope: Vec<f64> = pi.slope.iter().zip(&pj.slope).map(|(a, b)| 0.5 * (a + mirror * b)).collect();
                let mid = 0.5 * (pi.intercept + pj.intercept);
                if norm(&slope) == 0.0 || norm(&slope) > cap {
                    continue;
                }
                for frac in [0.05, 0.15, 0.3] {
                    let mut cand = phi.clone();
                    cand.pieces[dead] = Piece { slope: slope.clone(), intercept: (mid - frac * mid.max(0.1)).max(0.0) };
                    if let Ok(v) = objective(&cand, nu, cfg.p, cfg) {
                        if v < best.as_ref().map_or(value, |b| b.1) {
                            best = Some((cand, v));
                        }
                    }
                }
            }
        }
    }
    best
}

/// Pattern search over coordinates, pivots about active atoms and a global
/// scaling move. Only strict decreases are accepted and the step shrinks after
/// a sweep without progress; a collapsed mesh is re-expanded while the
/// previous cycle still lowered the objective.
fn pattern_search(
    start: MaxAffinePotential,
    nu: &DiscreteMeasure,
    cfg: &SolverConfig,
) -> Option<Run> {
    let p = cfg.p;
    let cap = cfg.slope_cap();
    let eval = |phi: &MaxAffinePotential| objective(phi, nu, p, cfg).ok();
    let mut phi = start;
    let mut value = eval(&phi)?;
    let mut history = vec![value];
    let mut step = cfg.step_init;
    let dim = phi.dim;
    let n_coord = if cfg.family == PieceFamily::Cone { dim } else { dim + 1 };
    let mut iters = 0;
    // value when the current mesh cycle started; the mesh is re-expanded
    // after it collapses for as long as a cycle still makes progress
    let mut cycle_start = value;
    while iters < cfg.max_iters {
        if step < cfg.min_step {
            let stalled = !(value < cycle_start - 1e-9 * value.abs().max(1.0));
            let revived = if cfg.family == PieceFamily::General { revive(&phi, value, nu, cfg) } else { None };
            match revived {
                Some((cand, v)) => {
                    phi = cand;
                    value = v;
                }
                None if stalled => break,
                None => {}
            }
            cycle_start = value;
            step = cfg.step_init * cfg.shrink_factor;
        }
        iters += 1;
        let mut improved = false;
        for k in 0..phi.pieces.len() {
            for c in 0..n_coord {
                for sign in [1.0, -1.0] {
                    let mut cand = phi.clone();
                    let pc = &mut cand.pieces[k];
                    if c < dim {
                        pc.slope[c] += sign * step;
                        clamp_slope(pc, cap);
                    } else {
                        pc.intercept = (pc.intercept + sign * step).max(0.0);
                    }
                    if cand == phi {
                        continue;
                    }
                    if let Some(v) = eval(&cand) {
                        if v < value {
                            phi = cand;
                            value = v;
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        for k in 0..phi.pieces.len() {
            for y in pivots(&phi, k, nu) {
                for c in 0..dim {
                    for sign in [1.0, -1.0] {
                        let mut cand = phi.clone();
                        let pc = &mut cand.pieces[k];
                        pc.slope[c] += sign * step;
                        pc.intercept = (pc.intercept + sign * step * y[c]).max(0.0);
                        if norm(&pc.slope) > cap || cfg.family == PieceFamily::Cone {
                            continue;
                        }
                        if let Some(v) = eval(&cand) {
                            if v < value {
                                phi = cand;
                                value = v;
                                improved = true;
                                break;
                            }
                        }
                    }
                }
            }
        }
        for sign in [1.0, -1.0] {
            let c = 1.0 + sign * step;
            let mut cand = scaled(&phi, c);
            for pc in cand.pieces.iter_mut() {
                clamp_slope(pc, cap);
            }
            if let Some(v) = eval(&cand) {
                if v < value {
                    phi = cand;
                    value = v;
                    improved = true;
                    break;
                }
            }
        }
        history.push(value);
        if !improved {
            step *= cfg.shrink_factor;
        }
    }
    Some(Run { phi, value, history })
}

/// Best scale s for the cone s|y| over a log-spaced scan.
fn best_cone_scale(nu: &DiscreteMeasure, cfg: &SolverConfig) -> Option<f64> {
    let cap = cfg.slope_cap();
    let dim = nu.dim();
    let dirs = if dim == 1 { 1 } else { 16 };
    let mut best: Option<(f64, f64)> = None;
    for k in 0..=60 {
        let s = cap * 10f64.powf(-3.0 * (1.0 - k as f64 / 60.0));
        let cone = if dim == 1 {
            MaxAffinePotential::cone_1d(s)
        } else {
            let pieces = (0..dirs)
                .map(|j| {
                    let t = std::f64::consts::PI * j as f64 / dirs as f64;
                    Piece { slope: vec![s * t.cos(), s * t.sin()], intercept: 0.0 }
                })
                .collect();
            MaxAffinePotential { dim, pieces }
        };
        if let Ok(v) = objective(&cone, nu, cfg.p, cfg) {
            if best.is_none_or(|b| v < b.1) {
                best = Some((s, v));
            }
        }
    }
    best.map(|b| b.0)
}

fn initial_potential(nu: &DiscreteMeasure, cfg: &SolverConfig, restart: usize) -> Option<MaxAffinePotential> {
    let dim = nu.dim();
    let pairs = (cfg.n_pieces / 2).max(1);
    let s = best_cone_scale(nu, cfg)?;
    let mass = nu.total_mass();
    let mean_r = nu.atoms.iter().map(|a| a.w * norm(&a.y)).sum::<f64>() / mass;
    let reach = nu.atoms.iter().map(|a| norm(&a.y)).fold(0.0, f64::max).min(3.0 * mean_r);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(restart as u64));
    let (s, rho) = if restart == 0 {
        (s, mean_r)
    } else {
        (s * rng.random_range(0.7..1.4), mean_r * rng.random_range(0.5..2.0))
    };
    let init = if cfg.family == PieceFamily::Cone {
        let mut m = tangent_init(dim, pairs, s, rho, reach, if restart == 0 { None } else { Some(&mut rng) });
        for pc in m.pieces.iter_mut() {
            let n = norm(&pc.slope).max(1e-300);
            for v in pc.slope.iter_mut() {
                *v *= s / n;
            }
            pc.intercept = 0.0;
        }
        m
    } else {
        tangent_init(dim, pairs, s * 1.5, rho, reach, if restart == 0 { None } else { Some(&mut rng) })
    };
    let mut init = init;
    for pc in init.pieces.iter_mut() {
        clamp_slope(pc, cfg.slope_cap());
    }
    Some(init)
}

fn finish(nu: &DiscreteMeasure, cfg: &SolverConfig, runs: Vec<Option<Run>>) -> Result<SolveResult> {
    let objectives: Vec<f64> = runs.iter().map(|r| r.as_ref().map_or(f64::INFINITY, |r| r.value)).collect();
    let feasible = runs.iter().filter(|r| r.is_some()).count();
    let best_idx = (0..runs.len())
        .filter(|&i| runs[i].is_some())
        .min_by(|&a, &b| objectives[a].total_cmp(&objectives[b]).then(a.cmp(&b)))
        .ok_or_else(|| {
            Error::Infeasible(format!(
                "all {} restarts infeasible: J(e^-phi*) vanished, diverged or was unresolved on the {}-node dual grid of radius {}",
                runs.len(),
                cfg.dual_grid.len(),
                cfg.dual_grid.hi[0]
            ))
        })?;
    let best = runs.into_iter().nth(best_idx).flatten().expect("feasible run");
    let lower_bound = objective_lower_bound(nu, cfg.p)?;
    let mut warnings = Vec::new();
    let tau_estimate = match tau_constant(&best.phi, nu, cfg.p, cfg) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("tau: {e}"));
            None
        }
    };
    let el_report = match verify_euler_lagrange(&best.phi, nu, cfg.p, cfg, &TentFamily::standard(nu.dim())) {
        Ok(r) => Some(r),
        Err(e) => {
            warnings.push(format!("euler-lagrange: {e}"));
            None
        }
    };
    let star = conjugate_masked(&best.phi, &cfg.grid, &cfg.dual_grid)?;
    let dual_mass = mass_of(&star);
    let primal_mass = mass_of(&best.phi.sample(&cfg.grid)?);
    Ok(SolveResult {
        tau: tau_estimate.as_ref().map_or(f64::NAN, |t| t.tau),
        el_residual: el_report.as_ref().map_or(f64::NAN, |r| -r.margin),
        phi0: best.phi,
        objective_value: best.value,
        tau_estimate,
        el_report,
        history: best.history,
        feasibility: FeasibilityDiagnostics {
            lower_bound,
            restarts_feasible: feasible,
            restarts_total: objectives.len(),
            best_restart: best_idx,
            restart_objectives: objectives,
            dual_mass,
            santalo_product: primal_mass * dual_mass,
            warnings,
        },
    })
}

/// Minimizes Φ_{p,ν} over even max-affine potentials with `cfg.restarts`
/// independent seeded restarts.
pub fn solve(nu: &DiscreteMeasure, cfg: &SolverConfig) -> Result<SolveResult> {
    cfg.validate()?;
    validate_measure(nu, cfg.p)?.require()?;
    if nu.dim() != cfg.grid.dim {
        return invalid("measure and grid dimensions differ");
    }
    let runs: Vec<Option<Run>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| initial_potential(nu, cfg, r).and_then(|init| pattern_search(init, nu, cfg)))
        .collect();
    finish(nu, cfg, runs)
}

/// Single pattern search started from `init`.
pub fn solve_from(nu: &DiscreteMeasure, cfg: &SolverConfig, init: &MaxAffinePotential) -> Result<SolveResult> {
    cfg.validate()?;
    validate_measure(nu, cfg.p)?.require()?;
    init.validate()?;
    finish(nu, cfg, vec![pattern_search(init.clone(), nu, cfg)])
}
