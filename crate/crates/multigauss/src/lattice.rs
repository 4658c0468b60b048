//! Periodic square lattices, step distributions and finite differences.
//!
//! Sites are addressed row-major: site `(x, y)` with `x, y ∈ [0, side)` has
//! index `y * side + x`. Every coordinate operation wraps modulo `side`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four unit directions `+e1, +e2, -e1, -e2`.
pub const DIRECTIONS: [(i64, i64); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

/// Torus of side `L^N` in two dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorusLattice {
    base: usize,
    scales: u32,
    side: usize,
}

impl TorusLattice {
    pub fn new(base: usize, scales: u32) -> Result<Self> {
        if base < 2 {
            return Err(Error::InvalidLattice(format!(
                "base L = {base} must exceed 1"
            )));
        }
        if scales < 1 {
            return Err(Error::InvalidLattice(
                "number of scales N must be at least 1".into(),
            ));
        }
        let side = base
            .checked_pow(scales)
            .filter(|&s| s.checked_mul(s).is_some())
            .ok_or_else(|| {
                Error::InvalidLattice(format!("L^N overflows for L = {base}, N = {scales}"))
            })?;
        Ok(Self { base, scales, side })
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn scales(&self) -> u32 {
        self.scales
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of sites `|Λ|`.
    pub fn volume(&self) -> usize {
        self.side * self.side
    }

    /// `L^j` for `0 <= j <= N`.
    pub fn block_side(&self, scale: u32) -> usize {
        self.base.pow(scale)
    }

    pub fn index(&self, x: i64, y: i64) -> usize {
        let s = self.side as i64;
        (y.rem_euclid(s) as usize) * self.side + x.rem_euclid(s) as usize
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.side, idx / self.side)
    }

    pub fn shift(&self, idx: usize, dx: i64, dy: i64) -> usize {
        let (x, y) = self.coords(idx);
        self.index(x as i64 + dx, y as i64 + dy)
    }

    /// Representative of a coordinate in `(-side/2, side/2]`.
    pub fn centred(&self, c: usize) -> i64 {
        let s = self.side as i64;
        let c = c as i64 % s;
        if 2 * c > s {
            c - s
        } else {
            c
        }
    }

    /// Wrapped ℓ∞ distance between two sites.
    pub fn linf_distance(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        let d = |u: usize, v: usize| {
            let t = u.abs_diff(v);
            t.min(self.side - t)
        };
        d(ax, bx).max(d(ay, by))
    }
}

/// Finite set of nonzero steps `J`, symmetric under the lattice symmetries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(i64, i64)>", into = "Vec<(i64, i64)>")]
pub struct StepDistribution {
    points: Vec<(i64, i64)>,
}

impl StepDistribution {
    /// Validates `points`. Asymmetric input is rejected, never symmetrised.
    pub fn new(mut points: Vec<(i64, i64)>) -> Result<Self> {
        points.sort_unstable();
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidStepDistribution("duplicate step".into()));
        }
        if points.contains(&(0, 0)) {
            return Err(Error::InvalidStepDistribution(
                "0 is not allowed in J".into(),
            ));
        }
        for nn in DIRECTIONS {
            if points.binary_search(&nn).is_err() {
                return Err(Error::InvalidStepDistribution(format!(
                    "missing nearest-neighbour step {nn:?}"
                )));
            }
        }
        for &(a, b) in &points {
            for image in [(-a, b), (a, -b), (-b, a)] {
                if points.binary_search(&image).is_err() {
                    return Err(Error::InvalidStepDistribution(format!(
                        "not closed under reflections and rotations: {:?} present, {:?} missing",
                        (a, b),
                        image
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn nearest_neighbour() -> Self {
        Self::new(DIRECTIONS.to_vec()).expect("nearest-neighbour steps are valid")
    }

    /// All nonzero vectors of ℓ∞ norm at most `radius`.
    pub fn linf_ball(radius: i64) -> Result<Self> {
        if radius < 1 {
            return Err(Error::InvalidStepDistribution(
                "radius must be at least 1".into(),
            ));
        }
        let mut pts = Vec::new();
        for a in -radius..=radius {
            for b in -radius..=radius {
                if (a, b) != (0, 0) {
                    pts.push((a, b));
                }
            }
        }
        Self::new(pts)
    }

    pub fn points(&self) -> &[(i64, i64)] {
        &self.points
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Maximal ℓ∞ norm of a step.
    pub fn range(&self) -> usize {
        self.points
            .iter()
            .map(|&(a, b)| a.unsigned_abs().max(b.unsigned_abs()) as usize)
            .max()
            .unwrap_or(0)
    }

    /// `v_J² = (2|J|)^{-1} Σ_{x∈J} x_1²`.
    pub fn v_squared(&self) -> f64 {
        let s: i64 = self.points.iter().map(|&(a, _)| a * a).sum();
        s as f64 / (2.0 * self.size() as f64)
    }
}

impl TryFrom<Vec<(i64, i64)>> for StepDistribution {
    type Error = Error;
    fn try_from(v: Vec<(i64, i64)>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StepDistribution> for Vec<(i64, i64)> {
    fn from(j: StepDistribution) -> Self {
        j.points
    }
}

/// Real value per site of a torus.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    side: usize,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            values: vec![0.0; side * side],
        }
    }

    pub fn constant(side: usize, c: f64) -> Self {
        Self {
            side,
            values: vec![c; side * side],
        }
    }

    pub fn from_values(side: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::SizeMismatch {
                expected: side * side,
                got: values.len(),
            });
        }
        Ok(Self { side, values })
    }

    pub fn from_fn(side: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                values.push(f(x, y));
            }
        }
        Self { side, values }
    }

    /// Indicator of one site.
    pub fn delta(side: usize, idx: usize) -> Self {
        let mut f = Self::zeros(side);
        f.values[idx] = 1.0;
        f
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, x: i64, y: i64) -> f64 {
        let s = self.side as i64;
        self.values[(y.rem_euclid(s) as usize) * self.side + x.rem_euclid(s) as usize]
    }

    pub fn at(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn set(&mut self, idx: usize, v: f64) {
        self.values[idx] = v;
    }

    fn check(&self, other: &Self) {
        assert_eq!(self.side, other.side, "fields live on different tori");
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            side: self.side,
            values,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.check(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            side: self.side,
            values,
        }
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        self.check(other);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + c * b)
            .collect();
        Self {
            side: self.side,
            values,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().map(|a| c * a).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().map(|a| a + c).collect(),
        }
    }

    /// `(u, v) = Σ_x u(x) v(x)`.
    pub fn dot(&self, other: &Self) -> f64 {
        self.check(other);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Field `x ↦ self(x - (dx, dy))`: the profile moved by `(dx, dy)`.
    pub fn translated(&self, dx: i64, dy: i64) -> Self {
        let s = self.side as i64;
        let mut out = Self::zeros(self.side);
        for y in 0..s {
            for x in 0..s {
                out.values[(y as usize) * self.side + x as usize] = self.get(x - dx, y - dy);
            }
        }
        out
    }

    /// Sites with a nonzero value.
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] != 0.0)
            .collect()
    }
}

fn check_range(side: usize, j: &StepDistribution) -> Result<()> {
    if side <= 2 * j.range() {
        return Err(Error::TorusTooSmall {
            side,
            range: j.range(),
        });
    }
    Ok(())
}

/// `(Δ_J f)(x) = |J|^{-1} Σ_{y∈J} (f(x+y) - f(x))`.
pub fn laplacian_j(j: &StepDistribution, f: &LatticeField) -> Result<LatticeField> {
    let side = f.side();
    check_range(side, j)?;
    let norm = 1.0 / j.size() as f64;
    let out = LatticeField::from_fn(side, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let c = f.get(x, y);
        let s: f64 = j
            .points()
            .iter()
            .map(|&(a, b)| f.get(x + a, y + b) - c)
            .sum();
        norm * s
    });
    Ok(out)
}

/// Unnormalised nearest-neighbour Laplacian `Δf(x) = Σ_{μ∈ê} (f(x+μ) - f(x))`.
pub fn laplacian_nn(f: &LatticeField) -> Result<LatticeField> {
    let side = f.side();
    if side < 3 {
        return Err(Error::TorusTooSmall { side, range: 1 });
    }
    Ok(LatticeField::from_fn(side, |x, y| {
        let (x, y) = (x as i64, y as i64);
        let c = f.get(x, y);
        DIRECTIONS
            .iter()
            .map(|&(a, b)| f.get(x + a, y + b) - c)
            .sum()
    }))
}

/// Forward difference `∇^μ f(x) = f(x+μ) - f(x)` for one direction.
pub fn difference(f: &LatticeField, mu: (i64, i64)) -> LatticeField {
    LatticeField::from_fn(f.side(), |x, y| {
        let (x, y) = (x as i64, y as i64);
        f.get(x + mu.0, y + mu.1) - f.get(x, y)
    })
}

/// Iterated difference `∇^{μ_1} ⋯ ∇^{μ_n} f`.
pub fn grad(f: &LatticeField, alpha: &[(i64, i64)]) -> Result<LatticeField> {
    if alpha.is_empty() {
        return Err(Error::Precondition(
            "multi-index must have length at least 1".into(),
        ));
    }
    for mu in alpha {
        if !DIRECTIONS.contains(mu) {
            return Err(Error::Precondition(format!(
                "{mu:?} is not a unit direction"
            )));
        }
    }
    let mut g = f.clone();
    for &mu in alpha.iter().rev() {
        g = difference(&g, mu);
    }
    Ok(g)
}

/// All `4^n` iterated differences of order `n` (the identity for `n = 0`).
pub fn all_gradients(f: &LatticeField, n: usize) -> Vec<LatticeField> {
    let mut layer = vec![f.clone()];
    for _ in 0..n {
        layer = layer
            .iter()
            .flat_map(|g| DIRECTIONS.iter().map(move |&mu| difference(g, mu)))
            .collect();
    }
    layer
}

/// Sitewise maximum over direction tuples of `|∇^n f(x)|`.
pub fn gradient_magnitude(f: &LatticeField, n: usize) -> LatticeField {
    let grads = all_gradients(f, n);
    let mut out = LatticeField::zeros(f.side());
    for g in &grads {
        for (o, v) in out.values.iter_mut().zip(g.values()) {
            *o = o.max(v.abs());
        }
    }
    out
}

/// `max_x max_α |∇^α f(x)|` over all direction tuples of length `n`.
pub fn grad_n_max(f: &LatticeField, n: usize) -> f64 {
    all_gradients(f, n)
        .iter()
        .map(LatticeField::max_abs)
        .fold(0.0, f64::max)
}

/// `‖f‖_{C²_j} = max_{n=0,1,2} L^{nj} ‖∇^n f‖_∞`.
pub fn norm_c2j(f: &LatticeField, base: usize, j: u32) -> f64 {
    let lj = (base as f64).powi(j as i32);
    (0..=2)
        .map(|n| lj.powi(n as i32) * grad_n_max(f, n))
        .fold(0.0, f64::max)
}

/// Spectral gap of `-Δ_J` on the torus: smallest nonzero Fourier eigenvalue.
pub fn spectral_gap(j: &StepDistribution, side: usize) -> f64 {
    let mut gap = f64::INFINITY;
    let w = 2.0 * std::f64::consts::PI / side as f64;
    for k2 in 0..side {
        for k1 in 0..side {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let (p1, p2) = (w * k1 as f64, w * k2 as f64);
            let v: f64 = j
                .points()
                .iter()
                .map(|&(a, b)| 1.0 - (p1 * a as f64 + p2 * b as f64).cos())
                .sum::<f64>()
                / j.size() as f64;
            gap = gap.min(v);
        }
    }
    gap
}
