//! Polymer activities, the `U` functional, charge components and regulators.
//!
//! Scaled norms follow one convention throughout: with `b` the block side,
//! `‖∇_jφ‖²_{L²_j(X)} = Σ_{x∈X} |∇φ(x)|²`, the boundary term is
//! `b Σ_{x∈∂X} |∇φ(x)|²` and `‖∇^a_jφ‖²_{L∞(B*)} = b^{2a} max_{B*} |∇^aφ|²`,
//! where `|∇φ(x)|²` sums over the four unit directions.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{LatticeField, DIRECTIONS};
use crate::polymer::{
    block_star, boundary, closure_in, components, small_set_neighbourhood, BlockLattice, Polymer,
};

/// Evaluator of an activity on one polymer.
pub type ActivityFn = dyn Fn(&Polymer, &LatticeField) -> f64 + Send + Sync;

/// Region outside of which the field may not influence `F(X, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Locality {
    /// `X*`.
    SmallSetNeighbourhood,
    /// Sites within `ℓ¹` distance `k` of `X`.
    L1(usize),
}

/// `F(X, φ)` for polymers of one block lattice.
#[derive(Clone)]
pub struct PolymerActivity {
    blocks: BlockLattice,
    eval: Arc<ActivityFn>,
    factorised: bool,
    locality: Locality,
}

impl std::fmt::Debug for PolymerActivity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PolymerActivity")
            .field("scale", &self.blocks.scale())
            .field("factorised", &self.factorised)
            .field("locality", &self.locality)
            .finish()
    }
}

impl PolymerActivity {
    /// With `factorised` set, `eval` is called on connected polymers only and
    /// the value on `X` is the product over components (1 on the empty set).
    pub fn new(
        blocks: BlockLattice,
        eval: impl Fn(&Polymer, &LatticeField) -> f64 + Send + Sync + 'static,
        factorised: bool,
        locality: Locality,
    ) -> Self {
        Self {
            blocks,
            eval: Arc::new(eval),
            factorised,
            locality,
        }
    }

    pub fn zero(blocks: BlockLattice) -> Self {
        Self::new(blocks, |_, _| 0.0, false, Locality::L1(0))
    }

    pub fn blocks(&self) -> &BlockLattice {
        &self.blocks
    }

    pub fn is_factorised(&self) -> bool {
        self.factorised
    }

    pub fn locality(&self) -> Locality {
        self.locality
    }

    pub fn evaluate(&self, x: &Polymer, phi: &LatticeField) -> f64 {
        if self.factorised {
            components(&self.blocks, x)
                .iter()
                .map(|c| (self.eval)(c, phi))
                .product()
        } else {
            (self.eval)(x, phi)
        }
    }

    /// Sites the value on `x` may depend on.
    pub fn dependence_region(&self, x: &Polymer) -> Vec<usize> {
        match self.locality {
            Locality::SmallSetNeighbourhood => {
                small_set_neighbourhood(&self.blocks, x).sites(&self.blocks)
            }
            Locality::L1(k) => {
                crate::polymer::l1_neighbourhood(self.blocks.lattice(), &x.sites(&self.blocks), k)
            }
        }
    }

    /// Largest change of `F(x, ·)` when `phi` is replaced by `perturbed` outside
    /// the dependence region.
    pub fn locality_defect(
        &self,
        x: &Polymer,
        phi: &LatticeField,
        perturbed: &LatticeField,
    ) -> f64 {
        let mut mixed = perturbed.clone();
        for s in self.dependence_region(x) {
            mixed.set(s, phi.at(s));
        }
        (self.evaluate(x, phi) - self.evaluate(x, &mixed)).abs()
    }

    /// `|F(X) - ∏_{Y∈Comp(X)} F(Y)|` computed through the raw evaluator.
    pub fn factorisation_defect(&self, x: &Polymer, phi: &LatticeField) -> f64 {
        let whole = self.evaluate(x, phi);
        let parts: f64 = components(&self.blocks, x)
            .iter()
            .map(|c| self.evaluate(c, phi))
            .product();
        (whole - parts).abs()
    }
}

/// Coefficients of `U_j(X, φ) = ½ s |∇φ|²_X + Σ_q L^{-2j} z_q Σ_{x∈X} cos(√β q φ(x))`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UCoupling {
    pub s: f64,
    /// `z_1, …, z_{q_max}`.
    pub z: Vec<f64>,
    pub beta: f64,
}

impl UCoupling {
    pub fn new(s: f64, z: Vec<f64>, beta: f64) -> Result<Self> {
        if z.is_empty() {
            return Err(Error::Config(
                "U needs at least one charge coefficient".into(),
            ));
        }
        if !(beta > 0.0) {
            return Err(Error::Config(format!("β = {beta} must be positive")));
        }
        Ok(Self { s, z, beta })
    }

    pub fn zero(beta: f64) -> Self {
        Self {
            s: 0.0,
            z: vec![0.0],
            beta,
        }
    }

    pub fn q_max(&self) -> usize {
        self.z.len()
    }
}

/// `U_j(X, φ)` with `|∇φ|²_X = Σ_{x∈X} Σ_{μ∈ê} ½(∇^μφ(x))²`, so that `U` is
/// additive over disjoint polymers.
pub fn eval_u(u: &UCoupling, bl: &BlockLattice, x: &Polymer, phi: &LatticeField) -> f64 {
    eval_u_sites(u, bl.lattice(), bl.block_side(), &x.sites(bl), phi)
}

/// [`eval_u`] on an explicit site list.
pub fn eval_u_sites(
    u: &UCoupling,
    lattice: &crate::lattice::TorusLattice,
    block_side: usize,
    sites: &[usize],
    phi: &LatticeField,
) -> f64 {
    let sqrt_beta = u.beta.sqrt();
    let vol = (block_side * block_side) as f64;
    let mut grad = 0.0;
    let mut cosines = 0.0;
    for &x in sites {
        let v = phi.at(x);
        for &(dx, dy) in &DIRECTIONS {
            let d = phi.at(lattice.shift(x, dx, dy)) - v;
            grad += 0.5 * d * d;
        }
        for (q, z) in u.z.iter().enumerate() {
            if *z != 0.0 {
                cosines += z * (sqrt_beta * (q + 1) as f64 * v).cos();
            }
        }
    }
    0.5 * u.s * grad + cosines / vol
}

/// `F̂_q(X, φ)` for all `|q| ≤ q_max` from `points` equispaced shifts over one
/// period `2π/√β`. Fails if `F(X, φ + 2π/√β)` differs from `F(X, φ)` by more than 1e-8.
pub fn charge_components(
    f: &PolymerActivity,
    x: &Polymer,
    phi: &LatticeField,
    beta: f64,
    q_max: usize,
    points: usize,
) -> Result<Vec<Complex64>> {
    let period = 2.0 * PI / beta.sqrt();
    let start = f.evaluate(x, phi);
    let end = f.evaluate(x, &phi.add_constant(period));
    if (start - end).abs() > 1e-8 * (1.0 + start.abs()) {
        return Err(Error::NotPeriodic((start - end).abs()));
    }
    let samples: Vec<f64> = (0..points)
        .map(|k| f.evaluate(x, &phi.add_constant(period * k as f64 / points as f64)))
        .collect();
    Ok(fourier_coefficients(&samples, q_max))
}

/// Single charge `F̂_q(X, φ)`.
pub fn charge_component(
    f: &PolymerActivity,
    q: i64,
    x: &Polymer,
    phi: &LatticeField,
    beta: f64,
    points: usize,
) -> Result<Complex64> {
    let all = charge_components(f, x, phi, beta, q.unsigned_abs() as usize, points)?;
    Ok(all[(q + q.abs()) as usize])
}

/// Trapezoid coefficients `(1/n) Σ_k e^{-2πiqk/n} s_k` for `q = -q_max..=q_max`.
pub fn fourier_coefficients(samples: &[f64], q_max: usize) -> Vec<Complex64> {
    let n = samples.len() as f64;
    (-(q_max as i64)..=q_max as i64)
        .map(|q| {
            samples
                .iter()
                .enumerate()
                .map(|(k, &s)| Complex64::from_polar(s, -2.0 * PI * q as f64 * k as f64 / n))
                .sum::<Complex64>()
                / n
        })
        .collect()
}

/// Neutral part `F̂_0(X, φ)`.
pub fn neutral_part(
    f: &PolymerActivity,
    x: &Polymer,
    phi: &LatticeField,
    beta: f64,
    points: usize,
) -> Result<f64> {
    Ok(charge_component(f, 0, x, phi, beta, points)?.re)
}

/// Norm and regulator parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegulatorParams {
    pub kappa: f64,
    pub c1: f64,
    pub c2: f64,
    pub c4: f64,
    pub cw: f64,
    pub h: f64,
    pub a: f64,
    pub r: f64,
    pub beta: f64,
    /// Number of fractional scales `M` with `L = ℓ^M`.
    pub fractional: u32,
}

impl RegulatorParams {
    /// `κ = 1/log L`, `c_1 = 1`, `c_2 = 1/30`, `τ = c_1/c_2`,
    /// `c_4 = max(2c_1, 2τc_1, 2c_2)`, `c_w = c_2/4`, `h = 1`, `A = 2^10`.
    pub fn defaults(base: usize, beta: f64) -> Self {
        let (c1, c2) = (1.0, 1.0 / 30.0);
        let tau = c1 / c2;
        Self {
            kappa: 1.0 / (base as f64).ln(),
            c1,
            c2,
            c4: (2.0 * c1).max(2.0 * tau * c1).max(2.0 * c2),
            cw: c2 / 4.0,
            h: 1.0,
            a: 1024.0,
            r: 1.0,
            beta,
            fractional: 1,
        }
    }

    pub fn tau(&self) -> f64 {
        self.c1 / self.c2
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.kappa, self.c1, self.c2, self.c4, self.cw, self.h, self.a, self.r, self.beta,
        ];
        if all.iter().any(|v| !(*v > 0.0)) || self.fractional == 0 {
            return Err(Error::Config(
                "regulator parameters must be positive".into(),
            ));
        }
        if self.c2 >= 1.0 {
            return Err(Error::Config(format!("c_2 = {} must be below 1", self.c2)));
        }
        Ok(())
    }
}

/// Sitewise derivative data of one field.
struct Derivatives {
    grad_sq: Vec<f64>,
    sup: [LatticeField; 3],
}

impl Derivatives {
    fn new(phi: &LatticeField) -> Self {
        let side = phi.side();
        let n = phi.len();
        let v = phi.values();
        let step = |x: usize, k: usize| {
            let (px, py) = (x % side, x / side);
            match k {
                0 => py * side + (px + 1) % side,
                1 => ((py + 1) % side) * side + px,
                2 => py * side + (px + side - 1) % side,
                _ => ((py + side - 1) % side) * side + px,
            }
        };
        let nb: Vec<[usize; 4]> = (0..n)
            .map(|x| [step(x, 0), step(x, 1), step(x, 2), step(x, 3)])
            .collect();
        let mut grad_sq = vec![0.0; n];
        let mut s0 = vec![0.0; n];
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for x in 0..n {
            s0[x] = v[x].abs();
            let mut g2 = 0.0;
            let mut m1 = 0.0_f64;
            let mut m2 = 0.0_f64;
            for mu in 0..4 {
                let xm = nb[x][mu];
                let d = v[xm] - v[x];
                g2 += d * d;
                m1 = m1.max(d.abs());
                for nu in 0..4 {
                    let dd = v[nb[xm][nu]] - v[xm] - v[nb[x][nu]] + v[x];
                    m2 = m2.max(dd.abs());
                }
            }
            grad_sq[x] = g2;
            s1[x] = m1;
            s2[x] = m2;
        }
        let field = |values| LatticeField::from_values(side, values).expect("square");
        Self {
            grad_sq,
            sup: [field(s0), field(s1), field(s2)],
        }
    }

    fn bulk(&self, sites: &[usize]) -> f64 {
        sites.iter().map(|&x| self.grad_sq[x]).sum()
    }
}

/// Geometry shared by the regulator terms of one polymer.
struct RegulatorGeometry {
    sites: Vec<usize>,
    boundary: Vec<usize>,
    /// Blocks of `B*` for each block of the polymer.
    stars: Vec<Vec<usize>>,
    block_of: Vec<usize>,
    num_blocks: usize,
    b: f64,
}

/// Per-block maxima of `|∇^aφ|` for `a = 0, 1, 2`.
struct BlockMaxima([Vec<f64>; 3]);

impl RegulatorGeometry {
    fn new(bl: &BlockLattice, x: &Polymer) -> Self {
        let sites = x.sites(bl);
        let boundary = boundary(bl.lattice(), &sites);
        let stars = x
            .blocks()
            .iter()
            .map(|&b| block_star(bl, b).blocks().to_vec())
            .collect();
        let block_of = (0..bl.lattice().volume())
            .map(|s| bl.block_of_site(s))
            .collect();
        Self {
            sites,
            boundary,
            stars,
            block_of,
            num_blocks: bl.num_blocks(),
            b: bl.block_side() as f64,
        }
    }

    fn maxima(&self, d: &Derivatives) -> BlockMaxima {
        let mut m = [
            vec![0.0; self.num_blocks],
            vec![0.0; self.num_blocks],
            vec![0.0; self.num_blocks],
        ];
        for (a, ma) in m.iter_mut().enumerate() {
            for (s, &v) in d.sup[a].values().iter().enumerate() {
                let b = self.block_of[s];
                if v > ma[b] {
                    ma[b] = v;
                }
            }
        }
        BlockMaxima(m)
    }

    /// `‖∇_jφ‖²_{L²_j(X)} + c_2 ‖∇_jφ‖²_{L²_j(∂X)}`.
    fn quadratic(&self, d: &Derivatives, c2: f64) -> f64 {
        d.bulk(&self.sites) + c2 * self.b * d.bulk(&self.boundary)
    }

    /// `‖∇^a_jφ‖²_{L∞(B*)}` for the `k`-th block.
    fn block_sup(&self, m: &BlockMaxima, a: usize, k: usize) -> f64 {
        let sup = self.stars[k].iter().map(|&b| m.0[a][b]).fold(0.0, f64::max);
        self.b.powi(2 * a as i32) * sup * sup
    }

    /// `W_j(X, ∇^a_jφ)²`.
    fn w(&self, m: &BlockMaxima, a: usize) -> f64 {
        (0..self.stars.len()).map(|k| self.block_sup(m, a, k)).sum()
    }
}

/// `log G_j(X, φ)`.
pub fn log_regulator_g(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
) -> f64 {
    let geo = RegulatorGeometry::new(bl, x);
    let d = Derivatives::new(phi);
    params.kappa * (geo.quadratic(&d, params.c2) + geo.w(&geo.maxima(&d), 2))
}

pub fn regulator_g(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
) -> f64 {
    log_regulator_g(params, bl, x, phi).exp()
}

/// `(w_j(X, φ)², g_j(X, φ))`.
pub fn strong_regulators(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
) -> (f64, f64) {
    let geo = RegulatorGeometry::new(bl, x);
    let m = geo.maxima(&Derivatives::new(phi));
    let w2 = (0..geo.stars.len())
        .map(|k| geo.block_sup(&m, 1, k).max(geo.block_sup(&m, 2, k)))
        .sum();
    (w2, log_strong_g(params, &geo, &m).exp())
}

fn log_strong_g(params: &RegulatorParams, geo: &RegulatorGeometry, m: &BlockMaxima) -> f64 {
    params.c4 * params.kappa * (0..=2).map(|a| geo.w(m, a)).sum::<f64>()
}

/// `log g_j(X, ξ)`.
pub fn log_strong_g_of(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    xi: &LatticeField,
) -> f64 {
    let geo = RegulatorGeometry::new(bl, x);
    let m = geo.maxima(&Derivatives::new(xi));
    log_strong_g(params, &geo, &m)
}

/// `log G^Ψ_j` with the supremum over `t` taken on the given points.
fn log_psi_on(
    params: &RegulatorParams,
    geo: &RegulatorGeometry,
    phi: &LatticeField,
    u: &LatticeField,
    ts: &[f64],
) -> f64 {
    let ds: Vec<Derivatives> = ts
        .iter()
        .map(|&t| Derivatives::new(&phi.axpy(t, u)))
        .collect();
    let ms: Vec<BlockMaxima> = ds.iter().map(|d| geo.maxima(d)).collect();
    let quad = ds
        .iter()
        .map(|d| geo.quadratic(d, params.c2))
        .fold(f64::NEG_INFINITY, f64::max);
    let w: f64 = (0..geo.stars.len())
        .map(|k| {
            ms.iter()
                .map(|m| geo.block_sup(m, 2, k))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    params.kappa * (quad + w)
}

/// `log G^Ψ_j(X, φ; u)`. Each supremum over `t ∈ [0,1]` is of a convex function
/// of `t` and is taken at an endpoint.
pub fn log_regulator_g_psi(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
    u: &LatticeField,
) -> f64 {
    log_psi_on(params, &RegulatorGeometry::new(bl, x), phi, u, &[0.0, 1.0])
}

pub fn regulator_g_psi(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
    u: &LatticeField,
) -> f64 {
    log_regulator_g_psi(params, bl, x, phi, u).exp()
}

/// `log G^Ψ_j` with every supremum taken over the grid `t = k/(n-1)`.
pub fn log_regulator_g_psi_grid(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
    u: &LatticeField,
    n: usize,
) -> f64 {
    let ts: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1).max(1) as f64).collect();
    log_psi_on(params, &RegulatorGeometry::new(bl, x), phi, u, &ts)
}

/// `G^Ψ_j(X, 0; u)` and the crude bound obtained by replacing every local
/// quantity with the global `C²_j` norm of `u`.
pub fn psi_zero_point_bound(
    params: &RegulatorParams,
    bl: &BlockLattice,
    x: &Polymer,
    u: &LatticeField,
) -> (f64, f64) {
    let value = log_regulator_g_psi(params, bl, x, &LatticeField::zeros(u.side()), u);
    let geo = RegulatorGeometry::new(bl, x);
    let b = geo.b;
    let norm = (0..=2)
        .map(|n| b.powi(n) * crate::lattice::grad_n_max(u, n as usize))
        .fold(0.0, f64::max);
    let per_site = 4.0 * (norm / b).powi(2);
    let bound = params.kappa
        * (per_site * geo.sites.len() as f64
            + params.c2 * b * per_site * geo.boundary.len() as f64
            + norm.powi(2) * geo.stars.len() as f64);
    (value.exp(), bound.exp())
}

/// Lower-bound probe of the `T_j` seminorm of `F(X, ·)` at `φ`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeminormEstimate {
    pub value: f64,
    /// Richardson disagreement above 10% in some derivative.
    pub unstable: bool,
}

/// `Σ_{n≤n_max} (h^n/n!) max over probe tuples of |D^nF(X,φ)(f_1,…,f_n)|` with
/// mixed derivatives by central differences and one Richardson step.
pub fn tj_seminorm_estimate(
    f: &PolymerActivity,
    x: &Polymer,
    phi: &LatticeField,
    h: f64,
    n_max: usize,
    probes: &[LatticeField],
) -> Result<SeminormEstimate> {
    if n_max > 6 {
        return Err(Error::Config(
            "derivative order above 6 is not supported".into(),
        ));
    }
    let mut value = 0.0;
    let mut unstable = false;
    let mut factorial = 1.0;
    for n in 0..=n_max {
        if n > 0 {
            factorial *= n as f64;
        }
        let mut best = 0.0_f64;
        for tuple in multisets(probes.len(), n) {
            let dirs: Vec<&LatticeField> = tuple.iter().map(|&i| &probes[i]).collect();
            let coarse = mixed_difference(f, x, phi, &dirs, 1e-2);
            let fine = mixed_difference(f, x, phi, &dirs, 5e-3);
            let extrapolated = (4.0 * fine - coarse) / 3.0;
            let scale = extrapolated.abs().max(1e-8);
            if n > 0 && (fine - coarse).abs() > 0.1 * scale {
                unstable = true;
            }
            best = best.max(extrapolated.abs());
        }
        value += h.powi(n as i32) / factorial * best;
    }
    Ok(SeminormEstimate { value, unstable })
}

fn mixed_difference(
    f: &PolymerActivity,
    x: &Polymer,
    phi: &LatticeField,
    dirs: &[&LatticeField],
    step: f64,
) -> f64 {
    let n = dirs.len();
    let mut acc = 0.0;
    for signs in 0..1u32 << n {
        let mut shifted = phi.clone();
        let mut sign = 1.0;
        for (i, d) in dirs.iter().enumerate() {
            let s = if signs >> i & 1 == 1 { -1.0 } else { 1.0 };
            sign *= s;
            shifted = shifted.axpy(s * step, d);
        }
        acc += sign * f.evaluate(x, &shifted);
    }
    acc / (2.0 * step).powi(n as i32)
}

fn multisets(k: usize, n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for tail in multisets(k, n - 1) {
        let start = tail.last().copied().unwrap_or(0);
        for i in start..k {
            let mut t = tail.clone();
            t.push(i);
            out.push(t);
        }
    }
    out
}

/// Both sides of the change-of-scale inequality on one instance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ChangeOfScale {
    pub log_lhs: f64,
    pub log_rhs: f64,
    pub holds: bool,
}

impl ChangeOfScale {
    /// `log rhs - log lhs`.
    pub fn log_margin(&self) -> f64 {
        self.log_rhs - self.log_lhs
    }
}

/// Checks `G(X, φ, ξ_o, (ξ_B)) ≤ max_a g(X', ξ_a) G'(X', φ)` where `X'` is the
/// closure of `x` in the partition `coarse` and `ξ_blocks[k]` belongs to the
/// `k`-th block of `x`.
pub fn check_change_of_scale_instance(
    params: &RegulatorParams,
    fine: &BlockLattice,
    coarse: &BlockLattice,
    x: &Polymer,
    phi: &LatticeField,
    xi_o: &LatticeField,
    xi_blocks: &[LatticeField],
) -> Result<ChangeOfScale> {
    if xi_blocks.len() != x.len() {
        return Err(Error::SizeMismatch {
            expected: x.len(),
            got: xi_blocks.len(),
        });
    }
    let geo = RegulatorGeometry::new(fine, x);
    let d_o = Derivatives::new(&phi.add(xi_o));
    let mut lhs = geo.quadratic(&d_o, params.c2);
    for (k, xi) in xi_blocks.iter().enumerate() {
        lhs += geo.block_sup(&geo.maxima(&Derivatives::new(&phi.add(xi))), 2, k);
    }
    let log_lhs = params.kappa * lhs;

    let closure = closure_in(fine, coarse, x)?;
    let coarse_geo = RegulatorGeometry::new(coarse, &closure);
    let d_phi = Derivatives::new(phi);
    let g_coarse = params.kappa
        * (coarse_geo.quadratic(&d_phi, params.c2) + coarse_geo.w(&coarse_geo.maxima(&d_phi), 2));
    let refined = RegulatorGeometry::new(fine, &fine.refine(coarse, &closure));
    let strong = std::iter::once(xi_o)
        .chain(xi_blocks.iter())
        .map(|xi| log_strong_g(params, &refined, &refined.maxima(&Derivatives::new(xi))))
        .fold(f64::NEG_INFINITY, f64::max);
    let log_rhs = strong + g_coarse;
    Ok(ChangeOfScale {
        log_lhs,
        log_rhs,
        holds: log_lhs <= log_rhs * (1.0 + 1e-12) + 1e-12,
    })
}
