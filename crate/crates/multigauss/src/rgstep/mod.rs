//! Exact polymer algebra on small tori: partition functions, reblocking of
//! an external field and one renormalisation step with a local perturbation.
//!
//! Everything here enumerates polymers as bitmasks over blocks, so block
//! counts are bounded by [`ENUMERATION_LIMIT`](crate::polymer::ENUMERATION_LIMIT).

mod expectation;
mod fixture;
mod step;

use std::collections::HashMap;

pub use expectation::{hermite_rule, ExpectationFunctional, ExpectationKind};
pub use fixture::{random_fixture, FixtureOptions, RgFixture, TrigActivity, TrigTerm};
pub use step::{
    check_rg_consistency, k_next_bulk, ConsistencyOptions, ConstantLoc, LocKind, Localisation,
    RgStep, StepCouplings, Taylor2Loc, ZeroLoc,
};

use crate::activities::{eval_u, neutral_part, Locality, PolymerActivity, UCoupling};
use crate::error::{Error, Result};
use crate::lattice::LatticeField;
use crate::polymer::{components, small_sets_containing, BlockLattice, Polymer, ENUMERATION_LIMIT};

/// Largest fine block count accepted by [`s_reblock`].
pub const REBLOCK_LIMIT: usize = 20;

/// Coordinates of the partition function at scale `j`.
#[derive(Debug, Clone)]
pub struct RgState {
    pub blocks: BlockLattice,
    /// `E_j`.
    pub energy: f64,
    /// `e_j`.
    pub local_energy: f64,
    pub u: UCoupling,
    /// `K_j(·; 0)`.
    pub k_bulk: PolymerActivity,
    /// `K_j(·; (Ψ_k)_{k<j})`.
    pub k_pert: PolymerActivity,
    pub psi: Option<PolymerActivity>,
}

impl RgState {
    /// State without perturbation: `K_pert = K_bulk`, no `Ψ`.
    pub fn bulk(blocks: BlockLattice, u: UCoupling, k: PolymerActivity) -> Self {
        Self {
            blocks,
            energy: 0.0,
            local_energy: 0.0,
            u,
            k_bulk: k.clone(),
            k_pert: k,
            psi: None,
        }
    }

    pub fn scale(&self) -> u32 {
        self.blocks.scale()
    }

    /// Block holding the origin.
    pub fn origin_block(&self) -> usize {
        self.blocks.block_of_site(0)
    }

    /// `(K_pert + Ψ)(Y, φ)` on a connected polymer.
    pub fn perturbed_activity(&self, y: &Polymer, phi: &LatticeField) -> f64 {
        let psi = self.psi.as_ref().map_or(0.0, |p| p.evaluate(y, phi));
        self.k_pert.evaluate(y, phi) + psi
    }

    /// Largest violation over connected polymers avoiding the origin of
    /// `K_pert = K_bulk` and `Ψ = 0`.
    pub fn invariant_defect(&self, phis: &[LatticeField]) -> Result<f64> {
        let graph = MaskGraph::new(&self.blocks)?;
        let origin = 1u64 << self.origin_block();
        let mut worst: f64 = 0.0;
        for mask in 1..graph.full() + 1 {
            if mask & origin != 0 || !graph.is_connected(mask) {
                continue;
            }
            let y = Polymer::from_mask(mask);
            for phi in phis {
                worst = worst
                    .max((self.k_pert.evaluate(&y, phi) - self.k_bulk.evaluate(&y, phi)).abs());
                if let Some(p) = &self.psi {
                    worst = worst.max(p.evaluate(&y, phi).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Block adjacency as bitmasks.
#[derive(Debug, Clone)]
pub(crate) struct MaskGraph {
    n: usize,
    nbr: Vec<u64>,
}

impl MaskGraph {
    pub(crate) fn new(bl: &BlockLattice) -> Result<Self> {
        let n = bl.num_blocks();
        if n > 63 {
            return Err(Error::Budget {
                count: n,
                limit: 63,
            });
        }
        let nbr = (0..n)
            .map(|b| bl.neighbours(b).iter().fold(0u64, |m, &c| m | (1 << c)))
            .collect();
        Ok(Self { n, nbr })
    }

    pub(crate) fn full(&self) -> u64 {
        (1u64 << self.n) - 1
    }

    /// Blocks adjacent to some block of `mask`, `mask` itself excluded.
    pub(crate) fn halo(&self, mask: u64) -> u64 {
        bits(mask).fold(0, |m, b| m | self.nbr[b]) & !mask
    }

    /// Connected components ordered by lowest block.
    pub(crate) fn components(&self, mask: u64) -> Vec<u64> {
        let mut rest = mask;
        let mut out = Vec::new();
        while rest != 0 {
            let mut comp = rest & rest.wrapping_neg();
            loop {
                let grown = comp | (self.halo(comp) & mask);
                if grown == comp {
                    break;
                }
                comp = grown;
            }
            rest &= !comp;
            out.push(comp);
        }
        out
    }

    pub(crate) fn is_connected(&self, mask: u64) -> bool {
        mask != 0 && self.components(mask).len() == 1
    }
}

/// Indices of set bits.
pub(crate) fn bits(mask: u64) -> impl Iterator<Item = usize> {
    let mut m = mask;
    std::iter::from_fn(move || {
        if m == 0 {
            None
        } else {
            let b = m.trailing_zeros() as usize;
            m &= m - 1;
            Some(b)
        }
    })
}

/// `F^X = ∏_{B∈𝓑(X)} F(B)`.
pub fn block_power(x: &Polymer, f: impl Fn(usize) -> f64) -> f64 {
    x.blocks().iter().map(|&b| f(b)).product()
}

/// `F^{[X]} = ∏_{Y∈Comp(X)} F(Y)`.
pub fn component_power(bl: &BlockLattice, x: &Polymer, f: impl Fn(&Polymer) -> f64) -> f64 {
    components(bl, x).iter().map(f).product()
}

fn enumeration_guard(bl: &BlockLattice) -> Result<()> {
    let n = bl.num_blocks();
    if n > ENUMERATION_LIMIT {
        return Err(Error::Budget {
            count: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// `U(B, φ)` for every block.
pub(crate) fn block_u(u: &UCoupling, bl: &BlockLattice, phi: &LatticeField) -> Vec<f64> {
    (0..bl.num_blocks())
        .map(|b| eval_u(u, bl, &Polymer::single(b), phi))
        .collect()
}

/// `Σ_{X} e^{U(Λ∖X)} ∏_{Y∈Comp(X)} a(Y)` with `a` memoised on connected masks.
pub(crate) fn polymer_sum(
    graph: &MaskGraph,
    u_blocks: &[f64],
    mut a: impl FnMut(u64) -> f64,
) -> f64 {
    let mut memo: HashMap<u64, f64> = HashMap::new();
    let full = graph.full();
    let mut total = 0.0;
    for mask in 0..=full {
        let mut prod = 1.0;
        for c in graph.components(mask) {
            prod *= *memo.entry(c).or_insert_with(|| a(c));
            if prod == 0.0 {
                break;
            }
        }
        if prod != 0.0 {
            let outside: f64 = bits(full & !mask).map(|b| u_blocks[b]).sum();
            total += outside.exp() * prod;
        }
    }
    total
}

/// `e^{-E|Λ| + e} Σ_{X∈𝓟_j} e^{U(Λ∖X, φ)} ∏_{Y∈Comp(X)} (K_pert + Ψ)(Y, φ)`.
pub fn eval_z(state: &RgState, phi: &LatticeField) -> Result<f64> {
    enumeration_guard(&state.blocks)?;
    let graph = MaskGraph::new(&state.blocks)?;
    let u_blocks = block_u(&state.u, &state.blocks, phi);
    let sum = polymer_sum(&graph, &u_blocks, |m| {
        state.perturbed_activity(&Polymer::from_mask(m), phi)
    });
    let volume = state.blocks.lattice().volume() as f64;
    Ok((-state.energy * volume + state.local_energy).exp() * sum)
}

/// Reblocking map: for connected `X`,
/// `Ψ(X, φ) = -K(X, φ) + Σ_{Y⊂X} ∏_{B⊂X∖Y} (e^{U(B,φ+u)} - e^{U(B,φ)}) K(Y, φ+u)`,
/// with `K` on disconnected `Y` the product over components; `Ψ` is
/// multiplicative over components.
pub fn f_psi(u_field: &LatticeField, u: &UCoupling, k: &PolymerActivity) -> PolymerActivity {
    let bl = k.blocks().clone();
    let shift = u_field.clone();
    let coupling = u.clone();
    let k = k.clone();
    let eval_bl = bl.clone();
    PolymerActivity::new(
        bl,
        move |x: &Polymer, phi: &LatticeField| {
            let shifted = phi.add(&shift);
            let blocks = x.blocks();
            let delta: Vec<f64> = blocks
                .iter()
                .map(|&b| {
                    let single = Polymer::single(b);
                    eval_u(&coupling, &eval_bl, &single, &shifted).exp()
                        - eval_u(&coupling, &eval_bl, &single, phi).exp()
                })
                .collect();
            let mut total = -k.evaluate(x, phi);
            for sub in 0..(1u64 << blocks.len()) {
                let mut weight = 1.0;
                let mut inside = Vec::new();
                for (i, &b) in blocks.iter().enumerate() {
                    if sub >> i & 1 == 1 {
                        inside.push(b);
                    } else {
                        weight *= delta[i];
                    }
                }
                if weight == 0.0 {
                    continue;
                }
                let y = Polymer::new(inside);
                let ky = component_power(&eval_bl, &y, |c| k.evaluate(c, &shifted));
                total += weight * ky;
            }
            total
        },
        true,
        Locality::SmallSetNeighbourhood,
    )
}

/// Largest [`relative_gap`] between `Z(φ+u)` and `Z^Ψ(φ)` over `phis`, where the left side uses
/// `K_pert` without `Ψ` and the right side `K_pert + Ψ` with `Ψ = F_Ψ[u, U, K_pert]`.
pub fn check_reblocking(
    state: &RgState,
    u_field: &LatticeField,
    phis: &[LatticeField],
) -> Result<f64> {
    reblocking_mismatch(state, u_field, phis, 1.0)
}

/// [`check_reblocking`] with `K_pert` replaced by `c·K_pert` on both sides
/// while `Ψ` is kept from the unscaled activity.
pub fn reblocking_mismatch(
    state: &RgState,
    u_field: &LatticeField,
    phis: &[LatticeField],
    c: f64,
) -> Result<f64> {
    let psi = f_psi(u_field, &state.u, &state.k_pert);
    let scaled = scaled(&state.k_pert, c);
    let plain = RgState {
        k_pert: scaled.clone(),
        psi: None,
        ..state.clone()
    };
    let with_psi = RgState {
        k_pert: scaled,
        psi: Some(psi),
        ..state.clone()
    };
    let mut worst: f64 = 0.0;
    for phi in phis {
        let lhs = eval_z(&plain, &phi.add(u_field))?;
        let rhs = eval_z(&with_psi, phi)?;
        worst = worst.max(relative_gap(lhs, rhs));
    }
    Ok(worst)
}

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// `c·F`.
pub fn scaled(f: &PolymerActivity, c: f64) -> PolymerActivity {
    let inner = f.clone();
    PolymerActivity::new(
        f.blocks().clone(),
        move |x, phi| c * inner.evaluate(x, phi),
        false,
        f.locality(),
    )
}

/// `F + G` on the same block lattice.
pub fn sum(f: &PolymerActivity, g: &PolymerActivity) -> PolymerActivity {
    let (a, b) = (f.clone(), g.clone());
    PolymerActivity::new(
        f.blocks().clone(),
        move |x, phi| a.evaluate(x, phi) + b.evaluate(x, phi),
        false,
        f.locality(),
    )
}

/// `(𝕊F)(X) = Σ_{Y connected, Ȳ = X} F(Y)` for connected `(j+1)`-polymers,
/// multiplicative over components.
pub fn s_reblock(f: &PolymerActivity) -> Result<PolymerActivity> {
    let fine = f.blocks().clone();
    if fine.num_blocks() > REBLOCK_LIMIT {
        return Err(Error::Budget {
            count: fine.num_blocks(),
            limit: REBLOCK_LIMIT,
        });
    }
    let coarse = fine.coarser()?;
    let graph = MaskGraph::new(&fine)?;
    let parent: Vec<usize> = (0..fine.num_blocks()).map(|b| fine.parent(b)).collect();
    let f = f.clone();
    let eval_coarse = coarse.clone();
    Ok(PolymerActivity::new(
        coarse,
        move |x: &Polymer, phi: &LatticeField| {
            let refined: Vec<usize> = fine.refine(&eval_coarse, x).blocks().to_vec();
            let mut total = 0.0;
            for sub in 1..(1u64 << refined.len()) {
                let mask = bits(sub).fold(0u64, |m, i| m | 1 << refined[i]);
                let covered = Polymer::new(bits(mask).map(|b| parent[b]).collect());
                if covered == *x && graph.is_connected(mask) {
                    total += f.evaluate(&Polymer::from_mask(mask), phi);
                }
            }
            total
        },
        true,
        Locality::SmallSetNeighbourhood,
    ))
}

/// `Σ_{small X ∋ origin} E[Ψ̂_0(X,ζ) + K̂_pert,0(X,ζ) - K̂_bulk,0(X,ζ)]`, with the
/// neutral parts taken from `points` constant shifts.
pub fn e_next(state: &RgState, expectation: &ExpectationFunctional, points: usize) -> Result<f64> {
    Ok(neutral_origin_terms(state, expectation, points)?
        .values()
        .sum())
}

/// Per small set `X ∋ origin`, the summand of [`e_next`].
pub(crate) fn neutral_origin_terms(
    state: &RgState,
    expectation: &ExpectationFunctional,
    points: usize,
) -> Result<HashMap<u64, f64>> {
    let beta = state.u.beta;
    let mut out = HashMap::new();
    for y in small_sets_containing(&state.blocks, state.origin_block()) {
        let value = expectation.try_expect(|zeta| {
            let mut v = neutral_part(&state.k_pert, &y, zeta, beta, points)?
                - neutral_part(&state.k_bulk, &y, zeta, beta, points)?;
            if let Some(psi) = &state.psi {
                v += neutral_part(psi, &y, zeta, beta, points)?;
            }
            Ok(v)
        })?;
        out.insert(y.mask(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
