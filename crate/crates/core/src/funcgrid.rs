//! Extended-real potentials sampled on regular grids in dimension 1 and 2.

use crate::error::{invalid, Error, Result};
use crate::extreal::ExtReal;
use crate::report::MarginReport;
use serde::{Deserialize, Serialize};

/// Regular box grid. Values are stored row-major with axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub n_axis: usize,
}

impl GridSpec {
    pub fn new(dim: usize, lo: Vec<f64>, hi: Vec<f64>, n_axis: usize) -> Result<Self> {
        let s = GridSpec { dim, lo, hi, n_axis };
        s.validate()?;
        Ok(s)
    }

    /// `[-radius, radius]^dim` with `n_axis` nodes per axis.
    pub fn symmetric(dim: usize, radius: f64, n_axis: usize) -> Result<Self> {
        Self::new(dim, vec![-radius; dim], vec![radius; dim], n_axis)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Grid(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.lo.len() != self.dim || self.hi.len() != self.dim {
            return Err(Error::Grid("lo/hi length must equal dim".into()));
        }
        if self.n_axis < 3 || self.n_axis % 2 == 0 {
            return Err(Error::Grid(format!("n_axis must be odd and >= 3, got {}", self.n_axis)));
        }
        for k in 0..self.dim {
            if !(self.lo[k].is_finite() && self.hi[k].is_finite() && self.hi[k] > self.lo[k]) {
                return Err(Error::Grid(format!("axis {k}: need finite lo < hi")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|k| self.lo[k] == -self.hi[k])
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n_axis - 1) as f64
    }

    pub fn min_step(&self) -> f64 {
        (0..self.dim).map(|k| self.step(k)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.step(k)).product()
    }

    pub fn center_index(&self) -> usize {
        (self.n_axis - 1) / 2
    }

    /// Coordinate of node `i` on `axis`. On symmetric grids this is computed
    /// as `(i - c) * h` so that mirrored nodes are exact negatives and the
    /// center node is exactly zero.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if self.lo[axis] == -self.hi[axis] {
            (i as f64 - self.center_index() as f64) * self.step(axis)
        } else {
            self.lo[axis] + i as f64 * self.step(axis)
        }
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        (0..self.n_axis).map(|i| self.coord(axis, i)).collect()
    }

    pub fn unravel(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n_axis, idx % self.n_axis]
        }
    }

    pub fn ravel(&self, ij: [usize; 2]) -> usize {
        if self.dim == 1 {
            ij[0]
        } else {
            ij[0] * self.n_axis + ij[1]
        }
    }

    /// Node coordinates; the second entry is 0 in 1D.
    pub fn node(&self, idx: usize) -> [f64; 2] {
        let ij = self.unravel(idx);
        if self.dim == 1 {
            [self.coord(0, ij[0]), 0.0]
        } else {
            [self.coord(0, ij[0]), self.coord(1, ij[1])]
        }
    }

    pub fn origin_index(&self) -> Option<usize> {
        if self.is_symmetric() {
            let c = self.center_index();
            Some(self.ravel([c, c]))
        } else {
            None
        }
    }

    /// Index of the node at `-x` (symmetric grids only).
    pub fn mirror_index(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    pub fn on_boundary(&self, idx: usize) -> bool {
        let ij = self.unravel(idx);
        let last = self.n_axis - 1;
        (0..self.dim).any(|k| ij[k] == 0 || ij[k] == last)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lo[k] && x[k] <= self.hi[k])
    }

    /// Cell coordinate along an axis, snapped to the nearest integer when
    /// within 1e-9 of a node. `None` outside the box.
    fn locate(&self, axis: usize, x: f64) -> Option<(usize, f64)> {
        let h = self.step(axis);
        let mut t = (x - self.lo[axis]) / h;
        let r = t.round();
        if (t - r).abs() < 1e-9 {
            t = r;
        }
        let last = (self.n_axis - 1) as f64;
        if !(0.0..=last).contains(&t) {
            return None;
        }
        let i = (t.floor() as usize).min(self.n_axis - 2);
        Some((i, t - i as f64))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassTag {
    #[serde(rename = "GENERAL")]
    General,
    #[serde(rename = "CLASS_A")]
    A,
    #[serde(rename = "CLASS_A0")]
    A0,
    #[serde(rename = "CLASS_A0_PRIME")]
    A0Prime,
}

impl ClassTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassTag::General => "GENERAL",
            ClassTag::A => "CLASS_A",
            ClassTag::A0 => "CLASS_A0",
            ClassTag::A0Prime => "CLASS_A0_PRIME",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "GENERAL" | "general" => Ok(ClassTag::General),
            "CLASS_A" | "A" | "a" => Ok(ClassTag::A),
            "CLASS_A0" | "A0" | "a0" => Ok(ClassTag::A0),
            "CLASS_A0_PRIME" | "A0_PRIME" | "a0-prime" | "a0prime" => Ok(ClassTag::A0Prime),
            _ => invalid(format!("unknown class tag {s:?}")),
        }
    }
}

/// Potential values on a grid. `f64::INFINITY` is the +inf sentinel; NaN and
/// -inf are rejected at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
    even: bool,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>, even: bool) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return invalid(format!("expected {} values, got {}", spec.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return invalid(format!("value at node {i} is NaN or -inf"));
        }
        let f = GridFunction { spec, values, even: false };
        if even {
            f.with_even()
        } else {
            Ok(f)
        }
    }

    /// Samples `phi` at every node. Non-finite positive results become +inf.
    pub fn from_fn(spec: GridSpec, phi: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let vals = (0..spec.len())
            .map(|i| {
                let x = spec.node(i);
                phi(&x[..spec.dim])
            })
            .collect();
        let even = spec.is_symmetric();
        let f = GridFunction::new(spec, vals, false)?;
        if even && f.mirror_defect() == 0.0 {
            Ok(GridFunction { even: true, ..f })
        } else {
            Ok(f)
        }
    }

    /// Internal constructor for values already known to be valid.
    pub(crate) fn from_parts(spec: GridSpec, values: Vec<f64>, even: bool) -> Self {
        debug_assert_eq!(values.len(), spec.len());
        debug_assert!(values.iter().all(|v| !v.is_nan() && *v != f64::NEG_INFINITY));
        GridFunction { spec, values, even }
    }

    /// Declares evenness after verifying exact mirror symmetry.
    pub fn with_even(mut self) -> Result<Self> {
        if !self.spec.is_symmetric() {
            return invalid("evenness requires an origin-symmetric grid");
        }
        let d = self.mirror_defect();
        if d != 0.0 {
            return invalid(format!("values are not mirror symmetric (defect {d:e})"));
        }
        self.even = true;
        Ok(self)
    }

    /// Largest |φ(x) - φ(-x)| over node pairs (inf when only one side is finite).
    pub fn mirror_defect(&self) -> f64 {
        if !self.spec.is_symmetric() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.values.len() {
            let a = self.values[i];
            let b = self.values[self.spec.mirror_index(i)];
            if a.is_infinite() || b.is_infinite() {
                if a != b {
                    return f64::INFINITY;
                }
            } else {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_even(&self) -> bool {
        self.even
    }

    pub fn at(&self, idx: usize) -> ExtReal {
        ExtReal::new(self.values[idx]).expect("validated")
    }

    pub fn origin_value(&self) -> Option<f64> {
        self.spec.origin_index().map(|i| self.values[i])
    }

    pub fn finite_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_finite()).count()
    }

    pub fn min_finite(&self) -> Option<f64> {
        self.values.iter().copied().filter(|v| v.is_finite()).reduce(f64::min)
    }

    pub fn max_finite(&self) -> Option<f64> {
        self.values.iter().copied().filter(|v| v.is_finite()).reduce(f64::max)
    }

    /// Multilinear interpolation. +inf outside the box or when any node with
    /// nonzero interpolation weight is +inf.
    pub fn eval(&self, x: &[f64]) -> ExtReal {
        let spec = &self.spec;
        let mut cells = [(0usize, 0.0f64); 2];
        for (k, cell) in cells.iter_mut().enumerate().take(spec.dim) {
            match spec.locate(k, x[k]) {
                Some(c) => *cell = c,
                None => return ExtReal::INF,
            }
        }
        let mut acc = 0.0;
        if spec.dim == 1 {
            let (i, t) = cells[0];
            for (di, w) in [(0, 1.0 - t), (1, t)] {
                if w != 0.0 {
                    let v = self.values[i + di];
                    if v.is_infinite() {
                        return ExtReal::INF;
                    }
                    acc += w * v;
                }
            }
        } else {
            let (i, s) = cells[0];
            let (j, t) = cells[1];
            for (di, wi) in [(0, 1.0 - s), (1, s)] {
                for (dj, wj) in [(0, 1.0 - t), (1, t)] {
                    let w = wi * wj;
                    if w != 0.0 {
                        let v = self.values[spec.ravel([i + di, j + dj])];
                        if v.is_infinite() {
                            return ExtReal::INF;
                        }
                        acc += w * v;
                    }
                }
            }
        }
        ExtReal::new(acc).unwrap_or(ExtReal::INF)
    }

    /// Central differences with step equal to the grid spacing.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut g = Vec::with_capacity(self.spec.dim);
        for k in 0..self.spec.dim {
            let h = self.spec.step(k);
            let mut xp = x[..self.spec.dim].to_vec();
            let mut xm = xp.clone();
            xp[k] += h;
            xm[k] -= h;
            let (fp, fm) = (self.eval(&xp), self.eval(&xm));
            match (fp.value(), fm.value()) {
                (Some(a), Some(b)) => g.push((a - b) / (2.0 * h)),
                _ => {
                    return Err(Error::Numerical(format!(
                        "gradient stencil at {:?} touches +inf or the grid boundary",
                        &x[..self.spec.dim]
                    )))
                }
            }
        }
        Ok(g)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        GridFunction::new(self.spec.clone(), self.values.iter().map(|&v| f(v)).collect(), false)
    }
}

/// Grid lines used by discrete convexity tests: axis lines, and in 2D both
/// diagonal families.
pub(crate) fn grid_lines(spec: &GridSpec) -> Vec<Vec<usize>> {
    let n = spec.n_axis;
    if spec.dim == 1 {
        return vec![(0..n).collect()];
    }
    let mut lines = Vec::new();
    for i in 0..n {
        lines.push((0..n).map(|j| spec.ravel([i, j])).collect());
        lines.push((0..n).map(|j| spec.ravel([j, i])).collect());
    }
    // diagonals i - j = d and anti-diagonals i + j = s
    for d in -(n as isize - 1)..(n as isize) {
        let line: Vec<usize> = (0..n as isize)
            .filter_map(|i| {
                let j = i - d;
                (0..n as isize).contains(&j).then(|| spec.ravel([i as usize, j as usize]))
            })
            .collect();
        if line.len() >= 3 {
            lines.push(line);
        }
    }
    for s in 0..(2 * n - 1) {
        let line: Vec<usize> = (0..n)
            .filter_map(|i| {
                let j = s as isize - i as isize;
                (0..n as isize).contains(&j).then(|| spec.ravel([i, j as usize]))
            })
            .collect();
        if line.len() >= 3 {
            lines.push(line);
        }
    }
    lines
}

/// Minimum second difference over the given lines, restricted to triples
/// whose three nodes pass `use_node`. Returns (margin, worst node index).
/// A +inf node strictly between finite nodes of a line gives -inf.
pub(crate) fn convexity_margin(
    values: &[f64],
    lines: &[Vec<usize>],
    use_node: impl Fn(usize) -> bool,
) -> (f64, Option<usize>) {
    let mut worst = f64::INFINITY;
    let mut at = None;
    for line in lines {
        let first = line.iter().position(|&i| values[i].is_finite() && use_node(i));
        let last = line.iter().rposition(|&i| values[i].is_finite() && use_node(i));
        if let (Some(a), Some(b)) = (first, last) {
            for &i in &line[a..=b] {
                if use_node(i) && values[i].is_infinite() {
                    return (f64::NEG_INFINITY, Some(i));
                }
            }
        }
        for w in line.windows(3) {
            if !(use_node(w[0]) && use_node(w[1]) && use_node(w[2])) {
                continue;
            }
            let (a, b, c) = (values[w[0]], values[w[1]], values[w[2]]);
            if a.is_finite() && b.is_finite() && c.is_finite() {
                let d = a - 2.0 * b + c;
                if d < worst {
                    worst = d;
                    at = Some(w[1]);
                }
            }
        }
    }
    (worst, at)
}

fn node_label(spec: &GridSpec, idx: usize) -> String {
    let x = spec.node(idx);
    if spec.dim == 1 {
        format!("x=({})", x[0])
    } else {
        format!("x=({}, {})", x[0], x[1])
    }
}

/// Discrete convexity: all axis and diagonal second differences of finite
/// values are >= -tol and the finite region is discretely convex.
pub fn check_convex(f: &GridFunction, tol: f64) -> MarginReport {
    let lines = grid_lines(f.spec());
    let (m, at) = convexity_margin(f.values(), &lines, |_| true);
    let margin = if m == f64::INFINITY { 0.0 } else { m };
    let mut r = MarginReport::new("convexity", margin, 0.0, tol, tol);
    if let Some(i) = at {
        r = r.witness(if m == f64::NEG_INFINITY {
            format!("non-convex domain at {}", node_label(f.spec(), i))
        } else {
            format!("worst second difference at {}", node_label(f.spec(), i))
        });
    }
    r
}

pub const DEFAULT_COERCIVITY_MARGIN: f64 = 4.0;

/// Verifies the conditions of `target`: convexity for every class, plus the
/// boundary-shell coercivity proxy for CLASS_A, plus nonnegativity and
/// φ(o)=0 for CLASS_A0 / CLASS_A0_PRIME.
pub fn check_class(f: &GridFunction, target: ClassTag, tol: f64) -> MarginReport {
    check_class_with(f, target, tol, DEFAULT_COERCIVITY_MARGIN)
}

pub fn check_class_with(
    f: &GridFunction,
    target: ClassTag,
    tol: f64,
    coercivity_margin: f64,
) -> MarginReport {
    let name = format!("class:{}", target.as_str());
    let Some(minv) = f.min_finite() else {
        return MarginReport::with_margin(name, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY, tol, tol)
            .fail("improper: no finite value");
    };
    let mut conds: Vec<(&str, f64)> = vec![("convexity", check_convex(f, tol).margin)];
    if target >= ClassTag::A {
        let reference = f.origin_value().filter(|v| v.is_finite()).unwrap_or(minv);
        let shell = (0..f.spec().len())
            .filter(|&i| f.spec().on_boundary(i))
            .map(|i| f.values()[i])
            .fold(f64::INFINITY, f64::min);
        conds.push(("coercivity", shell - (reference + coercivity_margin)));
    }
    if target >= ClassTag::A0 {
        conds.push(("nonnegativity", minv));
        let o = match f.origin_value() {
            Some(v) if v.is_finite() => -v.abs(),
            _ => f64::NEG_INFINITY,
        };
        conds.push(("phi(o)=0", o));
    }
    let (worst_name, worst) = conds
        .iter()
        .copied()
        .fold(("", f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
    let mut r = MarginReport::with_margin(name, worst, 0.0, worst, tol, tol);
    for (k, v) in &conds {
        r = r.param(k, *v);
    }
    if worst < -tol {
        r.witness(format!("failed: {worst_name}"))
    } else {
        r
    }
}

pub fn build_gaussian(spec: &GridSpec, s: f64) -> Result<GridFunction> {
    if !(s > 0.0 && s.is_finite()) {
        return invalid("gaussian scale s must be positive");
    }
    GridFunction::from_fn(spec.clone(), |x| x.iter().map(|v| v * v).sum::<f64>() / (2.0 * s))
}

/// 0 on the box `[-r_k, r_k]`, +inf elsewhere.
pub fn build_indicator_box(spec: &GridSpec, radius: &[f64]) -> Result<GridFunction> {
    if radius.len() != spec.dim {
        return invalid("radius length must equal dim");
    }
    for k in 0..spec.dim {
        if !(radius[k] > 0.0) {
            return invalid("box radius must be positive");
        }
        if radius[k] > spec.hi[k] || -radius[k] < spec.lo[k] {
            return invalid(format!("box exceeds grid domain on axis {k}"));
        }
    }
    let slack: Vec<f64> = (0..spec.dim).map(|k| 1e-9 * spec.step(k)).collect();
    GridFunction::from_fn(spec.clone(), |x| {
        if (0..x.len()).all(|k| x[k].abs() <= radius[k] + slack[k]) {
            0.0
        } else {
            f64::INFINITY
        }
    })
}

/// |x|^q / (q s).
pub fn build_power(spec: &GridSpec, q: f64, s: f64) -> Result<GridFunction> {
    if !(q > 1.0) {
        return invalid("power q must exceed 1");
    }
    if !(s > 0.0 && s.is_finite()) {
        return invalid("power scale s must be positive");
    }
    if q == 2.0 {
        return build_gaussian(spec, s);
    }
    GridFunction::from_fn(spec.clone(), |x| {
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        r.powf(q) / (q * s)
    })
}

/// A potential φ with its declared class, standing for f = e^{-φ}.
#[derive(Clone, Debug, PartialEq)]
pub struct LogConcaveFn {
    potential: GridFunction,
    tag: ClassTag,
}

impl LogConcaveFn {
    /// Declares the class without verification.
    pub fn new(potential: GridFunction, tag: ClassTag) -> Self {
        LogConcaveFn { potential, tag }
    }

    /// Declares the class after `check_class` passes (CLASS_A0_PRIME is
    /// checked as CLASS_A0; smoothness cannot be certified on a grid).
    pub fn checked(potential: GridFunction, tag: ClassTag, tol: f64) -> Result<Self> {
        let r = check_class(&potential, tag, tol);
        if !r.pass {
            return invalid(format!(
                "{} check failed: {}",
                tag.as_str(),
                r.witness.unwrap_or_default()
            ));
        }
        Ok(LogConcaveFn { potential, tag })
    }

    pub fn phi(&self) -> &GridFunction {
        &self.potential
    }

    pub fn into_phi(self) -> GridFunction {
        self.potential
    }

    pub fn tag(&self) -> ClassTag {
        self.tag
    }

    pub fn spec(&self) -> &GridSpec {
        self.potential.spec()
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    /// f(x) = e^{-φ(x)}.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.potential.eval(x).exp_neg()
    }

    pub fn with_tag(self, tag: ClassTag) -> Self {
        LogConcaveFn { tag, ..self }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&GridFile::from_fn(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: GridFile = serde_json::from_str(s)?;
        g.into_fn()
    }
}

/// On-disk form of a grid function.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridFile {
    pub spec: GridSpec,
    #[serde(with = "crate::serial::ext_vec")]
    pub values: Vec<f64>,
    pub even: bool,
    pub tag: String,
}

impl GridFile {
    pub fn from_fn(f: &LogConcaveFn) -> Self {
        GridFile {
            spec: f.spec().clone(),
            values: f.phi().values().to_vec(),
            even: f.phi().is_even(),
            tag: f.tag().as_str().to_string(),
        }
    }

    pub fn from_grid(g: &GridFunction) -> Self {
        GridFile {
            spec: g.spec().clone(),
            values: g.values().to_vec(),
            even: g.is_even(),
            tag: ClassTag::General.as_str().to_string(),
        }
    }

    pub fn into_fn(self) -> Result<LogConcaveFn> {
        let tag = ClassTag::parse(&self.tag)?;
        let g = GridFunction::new(self.spec, self.values, self.even)?;
        Ok(LogConcaveFn::new(g, tag))
    }
}
