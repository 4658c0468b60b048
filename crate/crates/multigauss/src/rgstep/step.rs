//! One renormalisation step with a local perturbation.

use std::collections::HashMap;
use std::sync::Arc;

use super::{
    bits, block_u, eval_z, neutral_origin_terms, ExpectationFunctional, MaskGraph, RgState,
};
use crate::activities::{eval_u, Locality, PolymerActivity, UCoupling};
use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::polymer::{
    all_polymers, closure, components, small_set_neighbourhood, small_sets, small_sets_containing,
    BlockLattice, Polymer, ENUMERATION_LIMIT,
};

/// Largest `(j+1)`-block count for which the step is enumerated.
pub const COARSE_LIMIT: usize = 4;

/// `Loc_{Y,D}` applied to `ψ ↦ E[K(Y, ψ + ζ)]`.
pub trait Localisation: Send + Sync {
    fn localise(
        &self,
        y: &Polymer,
        block: usize,
        f: &dyn Fn(&LatticeField) -> f64,
        phi: &LatticeField,
    ) -> f64;
}

/// `Loc ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroLoc;

impl Localisation for ZeroLoc {
    fn localise(
        &self,
        _: &Polymer,
        _: usize,
        _: &dyn Fn(&LatticeField) -> f64,
        _: &LatticeField,
    ) -> f64 {
        0.0
    }
}

/// Value at `ψ = 0` shared equally among the blocks of `Y`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantLoc;

impl Localisation for ConstantLoc {
    fn localise(
        &self,
        y: &Polymer,
        _: usize,
        f: &dyn Fn(&LatticeField) -> f64,
        phi: &LatticeField,
    ) -> f64 {
        f(&LatticeField::zeros(phi.side())) / y.len() as f64
    }
}

/// Even second-order expansion along `φ`, by central differences with step `h`,
/// shared equally among the blocks of `Y`.
#[derive(Debug, Clone, Copy)]
pub struct Taylor2Loc {
    pub step: f64,
}

impl Default for Taylor2Loc {
    fn default() -> Self {
        Self { step: 1e-3 }
    }
}

impl Localisation for Taylor2Loc {
    fn localise(
        &self,
        y: &Polymer,
        _: usize,
        f: &dyn Fn(&LatticeField) -> f64,
        phi: &LatticeField,
    ) -> f64 {
        let h = self.step;
        let f0 = f(&LatticeField::zeros(phi.side()));
        let curvature = (f(&phi.scale(h)) + f(&phi.scale(-h)) - 2.0 * f0) / (h * h);
        (f0 + 0.5 * curvature) / y.len() as f64
    }
}

/// Configurable choice of [`Localisation`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocKind {
    #[default]
    Zero,
    Constant,
    Taylor2,
}

impl LocKind {
    pub fn build(self) -> Arc<dyn Localisation> {
        match self {
            LocKind::Zero => Arc::new(ZeroLoc),
            LocKind::Constant => Arc::new(ConstantLoc),
            LocKind::Taylor2 => Arc::new(Taylor2Loc::default()),
        }
    }
}

/// Caller-chosen next-scale couplings: the bulk energy increment `𝓔_{j+1}` and `U_{j+1}`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepCouplings {
    pub energy: f64,
    pub u_next: UCoupling,
}

/// Enumerated step from scale `j` to `j+1`.
pub struct RgStep {
    state: RgState,
    expectation: Arc<ExpectationFunctional>,
    couplings: StepCouplings,
    loc: Arc<dyn Localisation>,
    coarse: BlockLattice,
    fine_graph: MaskGraph,
    coarse_graph: MaskGraph,
    parent: Vec<usize>,
    refine: Vec<u64>,
    stars: Vec<u64>,
    small: Vec<(u64, u64)>,
    neutral: HashMap<u64, f64>,
    e_next: f64,
    origin_fine: usize,
    origin_coarse: usize,
}

impl RgStep {
    /// `charge_points` sets the number of shifts used for neutral parts.
    pub fn new(
        state: RgState,
        expectation: Arc<ExpectationFunctional>,
        couplings: StepCouplings,
        loc: Arc<dyn Localisation>,
        charge_points: usize,
    ) -> Result<Self> {
        expectation.require_fixed()?;
        let fine = state.blocks.clone();
        if fine.num_blocks() > ENUMERATION_LIMIT {
            return Err(Error::Budget {
                count: fine.num_blocks(),
                limit: ENUMERATION_LIMIT,
            });
        }
        let coarse = fine.coarser()?;
        if coarse.num_blocks() > COARSE_LIMIT {
            return Err(Error::Budget {
                count: coarse.num_blocks(),
                limit: COARSE_LIMIT,
            });
        }
        let fine_graph = MaskGraph::new(&fine)?;
        let coarse_graph = MaskGraph::new(&coarse)?;
        let parent: Vec<usize> = (0..fine.num_blocks()).map(|b| fine.parent(b)).collect();
        let mut refine = vec![0u64; coarse.num_blocks()];
        for (d, &p) in parent.iter().enumerate() {
            refine[p] |= 1 << d;
        }
        let stars = (0..coarse.num_blocks())
            .map(|b| small_set_neighbourhood(&coarse, &Polymer::single(b)).mask())
            .collect();
        let small = small_sets(&fine)
            .into_iter()
            .map(|y| {
                (
                    y.mask(),
                    bits(y.mask()).fold(0u64, |m, d| m | 1 << parent[d]),
                )
            })
            .collect();
        let neutral = neutral_origin_terms(&state, &expectation, charge_points)?;
        let e_next = neutral.values().sum();
        Ok(Self {
            origin_fine: fine.block_of_site(0),
            origin_coarse: coarse.block_of_site(0),
            state,
            expectation,
            couplings,
            loc,
            coarse,
            fine_graph,
            coarse_graph,
            parent,
            refine,
            stars,
            small,
            neutral,
            e_next,
        })
    }

    /// `𝔢_{j+1}`.
    pub fn e_next(&self) -> f64 {
        self.e_next
    }

    /// `E_{j+1} = E_j + 𝓔_{j+1}`.
    pub fn energy_next(&self) -> f64 {
        self.state.energy + self.couplings.energy
    }

    /// `e_{j+1} = e_j + 𝔢_{j+1}`.
    pub fn local_energy_next(&self) -> f64 {
        self.state.local_energy + self.e_next
    }

    pub fn coarse(&self) -> &BlockLattice {
        &self.coarse
    }

    pub fn state(&self) -> &RgState {
        &self.state
    }

    fn coarse_block_volume(&self) -> f64 {
        (self.coarse.block_side() * self.coarse.block_side()) as f64
    }

    /// `J(B, X, φ')` on its support, keyed by `(B, mask of X)`.
    pub fn j_table(&self, phi: &LatticeField) -> HashMap<(usize, u64), f64> {
        let mut table = HashMap::new();
        for &(y, closure) in &self.small {
            let polymer = Polymer::from_mask(y);
            let f = |psi: &LatticeField| {
                self.expectation
                    .expect(|z| self.state.k_bulk.evaluate(&polymer, &psi.add(z)))
            };
            for d in bits(y) {
                let mut q = self.loc.localise(&polymer, d, &f, phi);
                if d == self.origin_fine {
                    q += self.neutral[&y];
                }
                if q == 0.0 {
                    continue;
                }
                let b = self.parent[d];
                *table.entry((b, closure)).or_insert(0.0) += q;
                *table.entry((b, 1u64 << b)).or_insert(0.0) -= q;
            }
        }
        table
    }

    /// `𝓔K(X, φ') = Σ_{B⊂X} J(B, X, φ')` for every connected coarse mask.
    pub fn expected_k(&self, j: &HashMap<(usize, u64), f64>) -> Vec<f64> {
        let full = self.coarse_graph.full();
        (0..=full)
            .map(|x| {
                if self.coarse_graph.is_connected(x) {
                    bits(x)
                        .map(|b| j.get(&(b, x)).copied().unwrap_or(0.0))
                        .sum()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `K̄(X, φ)` for every connected coarse mask.
    pub fn k_bar(&self, phi: &LatticeField) -> Vec<f64> {
        let u_fine = block_u(&self.state.u, &self.state.blocks, phi);
        let mut out = vec![0.0; (self.coarse_graph.full() + 1) as usize];
        let connected: Vec<bool> = (0..out.len() as u64)
            .map(|m| self.coarse_graph.is_connected(m))
            .collect();
        let mut memo: HashMap<u64, f64> = HashMap::new();
        for y in 1..=self.fine_graph.full() {
            let closure = bits(y).fold(0u64, |m, d| m | 1 << self.parent[d]);
            if !connected[closure as usize] {
                continue;
            }
            let mut prod = 1.0;
            for c in self.fine_graph.components(y) {
                prod *= *memo
                    .entry(c)
                    .or_insert_with(|| self.state.perturbed_activity(&Polymer::from_mask(c), phi));
                if prod == 0.0 {
                    break;
                }
            }
            if prod == 0.0 {
                continue;
            }
            let region = bits(closure).fold(0u64, |m, b| m | self.refine[b]);
            let outside: f64 = bits(region & !y).map(|d| u_fine[d]).sum();
            out[closure as usize] += outside.exp() * prod;
        }
        out
    }

    /// `K^Ψ_{j+1}(X, φ')` for every coarse mask `X`.
    pub fn k_next_all(&self, phi: &LatticeField) -> Vec<f64> {
        let graph = &self.coarse_graph;
        let full = graph.full();
        let size = (full + 1) as usize;
        let vol = self.coarse_block_volume();
        let energy = self.couplings.energy;
        let origin = 1u64 << self.origin_coarse;
        let u_next = block_u(&self.couplings.u_next, &self.coarse, phi);
        let j = self.j_table(phi);
        let ek = self.expected_k(&j);
        let replacement: Vec<f64> = (0..self.coarse.num_blocks())
            .map(|b| {
                let local = if b == self.origin_coarse {
                    self.e_next
                } else {
                    0.0
                };
                (-energy * vol + local + u_next[b]).exp()
            })
            .collect();

        // E[(e^{U_j} - e^{…})^{X₀} (K̄ - 𝓔K)^{[X₁]}] for disjoint X₀, X₁.
        let mut moments = vec![0.0; size * size];
        for (w, zeta) in self.expectation.points() {
            let field = phi.add(zeta);
            let u_fine = block_u(&self.state.u, &self.state.blocks, &field);
            let diff: Vec<f64> = (0..self.coarse.num_blocks())
                .map(|b| {
                    bits(self.refine[b]).map(|d| u_fine[d]).sum::<f64>().exp() - replacement[b]
                })
                .collect();
            let kbar = self.k_bar(&field);
            for x0 in 0..=full {
                let a: f64 = bits(x0).map(|b| diff[b]).product();
                let rest = full & !x0;
                let mut x1 = rest;
                loop {
                    let b: f64 = graph
                        .components(x1)
                        .iter()
                        .map(|&c| kbar[c as usize] - ek[c as usize])
                        .product();
                    moments[x0 as usize * size + x1 as usize] += w * a * b;
                    if x1 == 0 {
                        break;
                    }
                    x1 = (x1 - 1) & rest;
                }
            }
        }

        let mut table = vec![0.0; size];
        for x0 in 0..=full {
            let rest0 = full & !x0;
            let mut x1 = rest0;
            loop {
                let moment = moments[x0 as usize * size + x1 as usize];
                let rest1 = rest0 & !x1 & !graph.halo(x1);
                let mut z = rest1;
                loop {
                    if moment != 0.0 {
                        let t = x0 | x1 | z;
                        let local = if t & origin != 0 { self.e_next } else { 0.0 };
                        let prefactor =
                            (energy * vol * t.count_ones() as f64 - local).exp() * moment;
                        let comps = graph.components(z);
                        self.assign_blocks(&comps, 0, 1.0, 0, &j, &mut |weight, stars| {
                            let x = stars | x0 | x1;
                            debug_assert_eq!(t & !x, 0);
                            let outside: f64 = bits(x & !t).map(|b| u_next[b]).sum();
                            table[x as usize] += prefactor * weight * outside.exp();
                        });
                    }
                    if z == 0 {
                        break;
                    }
                    z = (z - 1) & rest1;
                }
                if x1 == 0 {
                    break;
                }
                x1 = (x1 - 1) & rest0;
            }
        }
        table
    }

    /// Every choice of `B_{Z''} ∈ Z''`, reporting `∏ J(B_{Z''}, Z'')` and `∪ B*_{Z''}`.
    fn assign_blocks(
        &self,
        comps: &[u64],
        idx: usize,
        weight: f64,
        stars: u64,
        j: &HashMap<(usize, u64), f64>,
        emit: &mut dyn FnMut(f64, u64),
    ) {
        if idx == comps.len() {
            emit(weight, stars);
            return;
        }
        let comp = comps[idx];
        for b in bits(comp) {
            if let Some(&v) = j.get(&(b, comp)) {
                if v != 0.0 {
                    self.assign_blocks(comps, idx + 1, weight * v, stars | self.stars[b], j, emit);
                }
            }
        }
    }

    /// `e^{-E_{j+1}|Λ| + e_{j+1}} Σ_X e^{U_{j+1}(Λ∖X, φ')} K(X, φ')` for a table from [`Self::k_next_all`].
    pub fn z_next(&self, phi: &LatticeField, table: &[f64]) -> f64 {
        let u_next = block_u(&self.couplings.u_next, &self.coarse, phi);
        let full = self.coarse_graph.full();
        let sum: f64 = (0..=full)
            .map(|x| bits(full & !x).map(|b| u_next[b]).sum::<f64>().exp() * table[x as usize])
            .sum();
        let volume = self.coarse.lattice().volume() as f64;
        (-self.energy_next() * volume + self.local_energy_next()).exp() * sum
    }

    /// `K^Ψ_{j+1}` as an activity on the coarse blocks. Each evaluation
    /// recomputes the full table, so this is meant for spot checks.
    pub fn into_activity(self) -> PolymerActivity {
        let step = Arc::new(self);
        let coarse = step.coarse.clone();
        PolymerActivity::new(
            coarse,
            move |x, phi| step.k_next_all(phi)[x.mask() as usize],
            false,
            Locality::SmallSetNeighbourhood,
        )
    }
}

/// `K_{j+1}(X, φ')` without perturbation, from `K_bulk` alone, enumerated
/// along the original expansion order with polymer sets instead of masks.
pub fn k_next_bulk(
    state: &RgState,
    expectation: &ExpectationFunctional,
    couplings: &StepCouplings,
    loc: &dyn Localisation,
    phi: &LatticeField,
) -> Result<Vec<f64>> {
    expectation.require_fixed()?;
    let fine = &state.blocks;
    let coarse = fine.coarser()?;
    if coarse.num_blocks() > COARSE_LIMIT || fine.num_blocks() > ENUMERATION_LIMIT {
        return Err(Error::Budget {
            count: fine.num_blocks(),
            limit: ENUMERATION_LIMIT,
        });
    }
    let vol = (coarse.block_side() * coarse.block_side()) as f64;
    let energy = couplings.energy;
    let samples: Vec<(f64, LatticeField)> =
        expectation.points().map(|(w, z)| (w, phi.add(z))).collect();

    let mut j_memo: HashMap<(usize, Polymer), f64> = HashMap::new();
    let mut j_bulk = |b: usize, x: &Polymer| -> Result<f64> {
        if let Some(&v) = j_memo.get(&(b, x.clone())) {
            return Ok(v);
        }
        let single = Polymer::single(b);
        let mut v = 0.0;
        if x.contains(b) {
            for &d in fine.refine(&coarse, &single).blocks() {
                for y in small_sets_containing(fine, d) {
                    let hit =
                        (closure(fine, &y)? == *x) as i32 as f64 - (*x == single) as i32 as f64;
                    if hit != 0.0 {
                        let f = |psi: &LatticeField| {
                            expectation.expect(|z| state.k_bulk.evaluate(&y, &psi.add(z)))
                        };
                        v += hit * loc.localise(&y, d, &f, phi);
                    }
                }
            }
        }
        j_memo.insert((b, x.clone()), v);
        Ok(v)
    };

    let mut kbar_memo: HashMap<(Polymer, usize), f64> = HashMap::new();
    let mut kbar = |c: &Polymer, k: usize| -> Result<f64> {
        if let Some(&v) = kbar_memo.get(&(c.clone(), k)) {
            return Ok(v);
        }
        let region = fine.refine(&coarse, c);
        let field = &samples[k].1;
        let mut v = 0.0;
        for sub in 1..(1u64 << region.len()) {
            let y = Polymer::new(bits(sub).map(|i| region.blocks()[i]).collect());
            if closure(fine, &y)? != *c {
                continue;
            }
            let weight: f64 = components(fine, &y)
                .iter()
                .map(|comp| state.k_bulk.evaluate(comp, field))
                .product();
            v += eval_u(&state.u, fine, &region.difference(&y), field).exp() * weight;
        }
        kbar_memo.insert((c.clone(), k), v);
        Ok(v)
    };

    let stars: Vec<Polymer> = (0..coarse.num_blocks())
        .map(|b| small_set_neighbourhood(&coarse, &Polymer::single(b)))
        .collect();
    let polymers = all_polymers(&coarse)?;
    let subsets = |p: &Polymer| -> Vec<Polymer> {
        (0..1u64 << p.len())
            .map(|m| Polymer::new(bits(m).map(|i| p.blocks()[i]).collect()))
            .collect()
    };

    let mut out = vec![0.0; polymers.len()];
    for (xi, x) in polymers.iter().enumerate() {
        let mut total = 0.0;
        for t in subsets(x) {
            for x_prime in subsets(&t) {
                let x0 = t.difference(&x_prime);
                let comps = components(&coarse, &x_prime);
                for pick in 0..1u64 << comps.len() {
                    let chosen: Vec<&Polymer> = bits(pick).map(|i| &comps[i]).collect();
                    let z = chosen.iter().fold(Polymer::empty(), |acc, c| acc.union(c));
                    let x1 = x_prime.difference(&z);
                    let x1_comps = components(&coarse, &x1);
                    let mut choice = vec![0usize; chosen.len()];
                    loop {
                        let mut cover = x0.union(&x1);
                        let mut j_prod = 1.0;
                        for (c, &i) in chosen.iter().zip(&choice) {
                            let b = c.blocks()[i];
                            cover = cover.union(&stars[b]);
                            j_prod *= j_bulk(b, c)?;
                        }
                        if cover == *x && j_prod != 0.0 {
                            let mut moment = 0.0;
                            for (k, (w, field)) in samples.iter().enumerate() {
                                let mut a = 1.0;
                                for &b in x0.blocks() {
                                    let single = Polymer::single(b);
                                    let fine_u = eval_u(
                                        &state.u,
                                        fine,
                                        &fine.refine(&coarse, &single),
                                        field,
                                    );
                                    let next_u = eval_u(&couplings.u_next, &coarse, &single, phi);
                                    a *= fine_u.exp() - (-energy * vol + next_u).exp();
                                }
                                for c in &x1_comps {
                                    let ek: f64 = c
                                        .blocks()
                                        .iter()
                                        .map(|&b| j_bulk(b, c))
                                        .collect::<Result<Vec<_>>>()?
                                        .iter()
                                        .sum();
                                    a *= kbar(c, k)? - ek;
                                }
                                moment += w * a;
                            }
                            let outside =
                                eval_u(&couplings.u_next, &coarse, &x.difference(&t), phi);
                            total += (energy * vol * t.len() as f64).exp()
                                * outside.exp()
                                * moment
                                * j_prod;
                        }
                        // next choice of blocks, odometer style
                        let mut i = 0;
                        while i < choice.len() {
                            choice[i] += 1;
                            if choice[i] < chosen[i].len() {
                                break;
                            }
                            choice[i] = 0;
                            i += 1;
                        }
                        if i == choice.len() {
                            break;
                        }
                    }
                }
            }
        }
        out[xi] = total;
    }
    Ok(out)
}

/// Options of [`check_rg_consistency`].
#[derive(Debug, Clone, Default)]
pub struct ConsistencyOptions {
    /// Shifts per period for neutral parts; 0 means 16.
    pub charge_points: usize,
    /// Added to `K^Ψ_{j+1}` on one polymer, for sensitivity probes.
    pub perturbation: Option<(Polymer, f64)>,
}

/// Largest relative gap between `E[Z_j(φ'+ζ)]` and `Z_{j+1}(φ')` over `phis`.
pub fn check_rg_consistency(
    state: &RgState,
    expectation: Arc<ExpectationFunctional>,
    couplings: &StepCouplings,
    loc: Arc<dyn Localisation>,
    phis: &[LatticeField],
    options: &ConsistencyOptions,
) -> Result<f64> {
    expectation.require_fixed()?;
    let points = if options.charge_points == 0 {
        16
    } else {
        options.charge_points
    };
    let step = RgStep::new(
        state.clone(),
        expectation.clone(),
        couplings.clone(),
        loc,
        points,
    )?;
    let mut worst: f64 = 0.0;
    for phi in phis {
        let lhs = expectation.try_expect(|z| eval_z(state, &phi.add(z)))?;
        let mut table = step.k_next_all(phi);
        if let Some((x, delta)) = &options.perturbation {
            table[x.mask() as usize] += delta;
        }
        worst = worst.max(super::relative_gap(lhs, step.z_next(phi, &table)));
    }
    Ok(worst)
}
