//! Serialisable trigonometric activities and random RG states.

use std::collections::HashMap;
use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{sum, RgState, StepCouplings};
use crate::activities::{Locality, PolymerActivity, UCoupling};
use crate::error::Result;
use crate::lattice::{LatticeField, TorusLattice, DIRECTIONS};
use crate::polymer::{small_sets, small_sets_containing, Adjacency, BlockLattice, Polymer};
use crate::rng::Rng;

/// One summand `(c + a cos(√β φ(x) + θ)) exp(-κ |∇φ|²_X / |X|)` on a fixed polymer.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigTerm {
    pub polymer: Polymer,
    pub constant: f64,
    pub amplitude: f64,
    pub site: usize,
    pub phase: f64,
    pub stiffness: f64,
}

/// Activity equal to the sum of its terms on their polymers and 0 elsewhere.
/// Periodic under `φ → φ + 2π/√β`.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrigActivity {
    pub terms: Vec<TrigTerm>,
}

impl TrigActivity {
    pub fn to_activity(&self, bl: &BlockLattice, beta: f64) -> PolymerActivity {
        let mut by_polymer: HashMap<Polymer, Vec<TrigTerm>> = HashMap::new();
        for t in &self.terms {
            by_polymer
                .entry(t.polymer.clone())
                .or_default()
                .push(t.clone());
        }
        let sqrt_beta = beta.sqrt();
        let eval_bl = bl.clone();
        PolymerActivity::new(
            bl.clone(),
            move |x: &Polymer, phi: &LatticeField| {
                let Some(terms) = by_polymer.get(x) else {
                    return 0.0;
                };
                let lattice = eval_bl.lattice();
                let sites = x.sites(&eval_bl);
                let mut grad = 0.0;
                for &s in &sites {
                    for &(dx, dy) in &DIRECTIONS {
                        grad += (phi.at(lattice.shift(s, dx, dy)) - phi.at(s)).powi(2);
                    }
                }
                grad /= sites.len() as f64;
                terms
                    .iter()
                    .map(|t| {
                        (t.constant + t.amplitude * (sqrt_beta * phi.at(t.site) + t.phase).cos())
                            * (-t.stiffness * grad).exp()
                    })
                    .sum()
            },
            false,
            Locality::L1(1),
        )
    }
}

/// Complete, serialisable input of one renormalisation step.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RgFixture {
    pub base: usize,
    pub scales: u32,
    pub scale: u32,
    pub energy: f64,
    pub local_energy: f64,
    pub u: UCoupling,
    pub k_bulk: TrigActivity,
    /// `K_pert - K_bulk`; terms sit on polymers containing the origin block.
    pub k_delta: TrigActivity,
    pub psi: Option<TrigActivity>,
    pub energy_next: f64,
    pub u_next: UCoupling,
}

impl RgFixture {
    pub fn lattice(&self) -> Result<TorusLattice> {
        TorusLattice::new(self.base, self.scales)
    }

    pub fn blocks(&self) -> Result<BlockLattice> {
        BlockLattice::new(&self.lattice()?, self.scale, Adjacency::Linf)
    }

    pub fn state(&self) -> Result<RgState> {
        let bl = self.blocks()?;
        let beta = self.u.beta;
        let k_bulk = self.k_bulk.to_activity(&bl, beta);
        let k_pert = sum(&k_bulk, &self.k_delta.to_activity(&bl, beta));
        Ok(RgState {
            energy: self.energy,
            local_energy: self.local_energy,
            u: self.u.clone(),
            k_bulk,
            k_pert,
            psi: self.psi.as_ref().map(|p| p.to_activity(&bl, beta)),
            blocks: bl,
        })
    }

    pub fn couplings(&self) -> StepCouplings {
        StepCouplings {
            energy: self.energy_next,
            u_next: self.u_next.clone(),
        }
    }
}

/// Shape of a random fixture.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FixtureOptions {
    pub base: usize,
    pub scales: u32,
    pub scale: u32,
    pub beta: f64,
    /// Bulk terms.
    pub terms: usize,
    /// Terms of `K_pert - K_bulk` and of `Ψ`.
    pub origin_terms: usize,
    /// Largest `|c|`, `|a|` of a term.
    pub amplitude: f64,
    /// Bulk terms only on single blocks.
    pub single_block: bool,
    pub with_psi: bool,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            base: 2,
            scales: 2,
            scale: 1,
            beta: 2.0 * PI,
            terms: 6,
            origin_terms: 2,
            amplitude: 0.3,
            single_block: false,
            with_psi: true,
        }
    }
}

fn random_terms(
    rng: &mut Rng,
    bl: &BlockLattice,
    pool: &[Polymer],
    count: usize,
    amplitude: f64,
) -> TrigActivity {
    let terms = (0..count)
        .map(|_| {
            let polymer = pool[rng.random_range(0..pool.len())].clone();
            let sites = polymer.sites(bl);
            TrigTerm {
                site: sites[rng.random_range(0..sites.len())],
                polymer,
                constant: rng.random_range(-amplitude..amplitude),
                amplitude: rng.random_range(-amplitude..amplitude),
                phase: rng.random_range(0.0..2.0 * PI),
                stiffness: rng.random_range(0.0..0.2),
            }
        })
        .collect();
    TrigActivity { terms }
}

fn random_u(rng: &mut Rng, beta: f64) -> UCoupling {
    let s: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
    let z: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
    UCoupling {
        s,
        z: vec![z],
        beta,
    }
}

/// Random state respecting `K_pert = K_bulk` and `Ψ = 0` away from the origin.
pub fn random_fixture(opts: &FixtureOptions, rng: &mut Rng) -> Result<RgFixture> {
    let lattice = TorusLattice::new(opts.base, opts.scales)?;
    let bl = BlockLattice::new(&lattice, opts.scale, Adjacency::Linf)?;
    let pool: Vec<Polymer> = if opts.single_block {
        (0..bl.num_blocks()).map(Polymer::single).collect()
    } else {
        small_sets(&bl)
    };
    let origin_pool = small_sets_containing(&bl, bl.block_of_site(0));
    let k_bulk = random_terms(rng, &bl, &pool, opts.terms, opts.amplitude);
    let k_delta = random_terms(rng, &bl, &origin_pool, opts.origin_terms, opts.amplitude);
    let psi = opts
        .with_psi
        .then(|| random_terms(rng, &bl, &origin_pool, opts.origin_terms, opts.amplitude));
    Ok(RgFixture {
        base: opts.base,
        scales: opts.scales,
        scale: opts.scale,
        energy: rng.random_range(-0.1..0.1),
        local_energy: rng.random_range(-0.1..0.1),
        u: random_u(rng, opts.beta),
        k_bulk,
        k_delta,
        psi,
        energy_next: rng.random_range(-0.1..0.1),
        u_next: random_u(rng, opts.beta),
    })
}
