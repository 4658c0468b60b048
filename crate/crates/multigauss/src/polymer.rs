//! Blocks, polymers and their neighbourhoods at a fixed scale.

use std::collections::{BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::lattice::{TorusLattice, DIRECTIONS};

/// Largest block count for which every polymer is enumerated.
pub const ENUMERATION_LIMIT: usize = 16;

/// When two blocks count as touching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adjacency {
    /// Shared edge or corner.
    #[default]
    Linf,
    /// Shared edge only.
    L1,
}

/// Partition of the torus into blocks of side `L^j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLattice {
    lattice: TorusLattice,
    scale: u32,
    block_side: usize,
    per_side: usize,
    adjacency: Adjacency,
}

impl BlockLattice {
    pub fn new(lattice: &TorusLattice, scale: u32, adjacency: Adjacency) -> Result<Self> {
        if scale > lattice.scales() {
            return Err(Error::ScaleOutOfRange {
                scale,
                scales: lattice.scales(),
            });
        }
        let block_side = lattice.block_side(scale);
        Ok(Self {
            lattice: *lattice,
            scale,
            block_side,
            per_side: lattice.side() / block_side,
            adjacency,
        })
    }

    /// Blocks of an arbitrary side dividing the torus side, for fractional
    /// scales `j + k/M` with `L = ℓ^M`. The reported integer scale is the
    /// largest `j` with `L^j ≤ block_side`.
    pub fn with_block_side(
        lattice: &TorusLattice,
        block_side: usize,
        adjacency: Adjacency,
    ) -> Result<Self> {
        if block_side == 0 || !lattice.side().is_multiple_of(block_side) {
            return Err(Error::InvalidLattice(format!(
                "block side {block_side} does not divide {}",
                lattice.side()
            )));
        }
        let mut scale = 0;
        while scale < lattice.scales() && lattice.block_side(scale + 1) <= block_side {
            scale += 1;
        }
        Ok(Self {
            lattice: *lattice,
            scale,
            block_side,
            per_side: lattice.side() / block_side,
            adjacency,
        })
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn blocks_per_side(&self) -> usize {
        self.per_side
    }

    pub fn adjacency(&self) -> Adjacency {
        self.adjacency
    }

    pub fn num_blocks(&self) -> usize {
        self.per_side * self.per_side
    }

    pub fn block_coords(&self, b: usize) -> (usize, usize) {
        (b % self.per_side, b / self.per_side)
    }

    pub fn block_index(&self, bx: i64, by: i64) -> usize {
        let n = self.per_side as i64;
        (by.rem_euclid(n) * n + bx.rem_euclid(n)) as usize
    }

    pub fn block_of_site(&self, site: usize) -> usize {
        let (x, y) = self.lattice.coords(site);
        (y / self.block_side) * self.per_side + x / self.block_side
    }

    /// Sites of block `b`, row by row.
    pub fn block_sites(&self, b: usize) -> Vec<usize> {
        let (bx, by) = self.block_coords(b);
        let s = self.block_side;
        let side = self.lattice.side();
        let mut out = Vec::with_capacity(s * s);
        for y in by * s..(by + 1) * s {
            for x in bx * s..(bx + 1) * s {
                out.push(y * side + x);
            }
        }
        out
    }

    /// Distinct neighbours of `b` other than itself, sorted.
    pub fn neighbours(&self, b: usize) -> Vec<usize> {
        let (bx, by) = self.block_coords(b);
        let (bx, by) = (bx as i64, by as i64);
        let mut out = Vec::with_capacity(8);
        for dy in -1..=1_i64 {
            for dx in -1..=1_i64 {
                if (dx, dy) == (0, 0) || (self.adjacency == Adjacency::L1 && dx != 0 && dy != 0) {
                    continue;
                }
                let n = self.block_index(bx + dx, by + dy);
                if n != b {
                    out.push(n);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.neighbours(a).contains(&b)
    }

    /// Block lattice one scale up.
    pub fn coarser(&self) -> Result<Self> {
        Self::new(&self.lattice, self.scale + 1, self.adjacency)
    }

    /// `(j+1)`-block containing block `b`.
    pub fn parent(&self, b: usize) -> usize {
        let (bx, by) = self.block_coords(b);
        let base = self.lattice.base();
        let n = self.per_side / base;
        (by / base) * n + bx / base
    }

    /// Block of the coarser partition `coarse` containing block `b`.
    pub fn parent_in(&self, coarse: &BlockLattice, b: usize) -> usize {
        let (bx, by) = self.block_coords(b);
        coarse.block_of_site(by * self.block_side * self.lattice.side() + bx * self.block_side)
    }

    /// Blocks of `self` inside the coarse polymer `x`.
    pub fn refine(&self, coarse: &BlockLattice, x: &Polymer) -> Polymer {
        Polymer::new(
            (0..self.num_blocks())
                .filter(|&b| x.contains(self.parent_in(coarse, b)))
                .collect(),
        )
    }

    pub fn full(&self) -> Polymer {
        Polymer {
            blocks: (0..self.num_blocks()).collect(),
        }
    }
}

/// Set of blocks at one scale, stored sorted.
#[derive(
    Debug,
    Clone,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Default,
    serde::Serialize,
    serde::Deserialize,
)]
#[serde(transparent)]
pub struct Polymer {
    blocks: Vec<usize>,
}

impl Polymer {
    pub fn new(mut blocks: Vec<usize>) -> Self {
        blocks.sort_unstable();
        blocks.dedup();
        Self { blocks }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(b: usize) -> Self {
        Self { blocks: vec![b] }
    }

    pub fn from_mask(mask: u64) -> Self {
        Self {
            blocks: (0..64).filter(|&i| mask >> i & 1 == 1).collect(),
        }
    }

    /// Bit mask of the blocks; panics for ids ≥ 64.
    pub fn mask(&self) -> u64 {
        self.blocks.iter().fold(0, |m, &b| {
            assert!(b < 64, "block id {b} does not fit a mask");
            m | 1 << b
        })
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, b: usize) -> bool {
        self.blocks.binary_search(&b).is_ok()
    }

    pub fn union(&self, other: &Self) -> Self {
        Self::new(self.blocks.iter().chain(&other.blocks).copied().collect())
    }

    pub fn intersection(&self, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .copied()
                .filter(|b| other.contains(*b))
                .collect(),
        }
    }

    pub fn difference(&self, other: &Self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .copied()
                .filter(|b| !other.contains(*b))
                .collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Self) -> bool {
        self.blocks.iter().all(|b| !other.contains(*b))
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.blocks.iter().all(|b| other.contains(*b))
    }

    /// Sites covered, sorted.
    pub fn sites(&self, bl: &BlockLattice) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .blocks
            .iter()
            .flat_map(|&b| bl.block_sites(b))
            .collect();
        out.sort_unstable();
        out
    }

    /// Whether some block of `self` touches some block of `other`.
    pub fn touches(&self, other: &Self, bl: &BlockLattice) -> bool {
        self.blocks
            .iter()
            .any(|&a| other.blocks.iter().any(|&b| bl.adjacent(a, b)))
    }
}

/// Maximal connected sub-polymers, ordered by smallest block.
pub fn components(bl: &BlockLattice, x: &Polymer) -> Vec<Polymer> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in x.blocks() {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(b) = queue.pop_front() {
            for n in bl.neighbours(b) {
                if x.contains(n) && seen.insert(n) {
                    comp.push(n);
                    queue.push_back(n);
                }
            }
        }
        out.push(Polymer::new(comp));
    }
    out
}

pub fn is_connected(bl: &BlockLattice, x: &Polymer) -> bool {
    components(bl, x).len() == 1
}

/// Connected with between 1 and 4 blocks.
pub fn is_small_set(bl: &BlockLattice, x: &Polymer) -> bool {
    (1..=4).contains(&x.len()) && is_connected(bl, x)
}

/// Smallest `(j+1)`-polymer containing `x`.
pub fn closure(bl: &BlockLattice, x: &Polymer) -> Result<Polymer> {
    if bl.scale() >= bl.lattice().scales() {
        return Err(Error::ScaleOutOfRange {
            scale: bl.scale() + 1,
            scales: bl.lattice().scales(),
        });
    }
    Ok(Polymer::new(
        x.blocks().iter().map(|&b| bl.parent(b)).collect(),
    ))
}

/// Smallest polymer of the coarser partition `coarse` containing `x`.
pub fn closure_in(bl: &BlockLattice, coarse: &BlockLattice, x: &Polymer) -> Result<Polymer> {
    if !coarse.block_side().is_multiple_of(bl.block_side()) || coarse.lattice() != bl.lattice() {
        return Err(Error::Precondition("partitions are not nested".into()));
    }
    Ok(Polymer::new(
        x.blocks()
            .iter()
            .map(|&b| bl.parent_in(coarse, b))
            .collect(),
    ))
}

/// Union of all small sets meeting `x`.
///
/// A block lies in a small set with `b` iff its graph distance to `b` is at
/// most 3, so this is a depth-3 breadth-first search.
pub fn small_set_neighbourhood(bl: &BlockLattice, x: &Polymer) -> Polymer {
    let mut dist = vec![usize::MAX; bl.num_blocks()];
    let mut queue = VecDeque::new();
    for &b in x.blocks() {
        dist[b] = 0;
        queue.push_back(b);
    }
    while let Some(b) = queue.pop_front() {
        if dist[b] == 3 {
            continue;
        }
        for n in bl.neighbours(b) {
            if dist[n] == usize::MAX {
                dist[n] = dist[b] + 1;
                queue.push_back(n);
            }
        }
    }
    Polymer::new((0..dist.len()).filter(|&b| dist[b] != usize::MAX).collect())
}

/// `B*` of a single block.
pub fn block_star(bl: &BlockLattice, b: usize) -> Polymer {
    small_set_neighbourhood(bl, &Polymer::single(b))
}

/// All small sets, sorted.
pub fn small_sets(bl: &BlockLattice) -> Vec<Polymer> {
    let mut found: BTreeSet<Polymer> = BTreeSet::new();
    let mut frontier: Vec<Polymer> = (0..bl.num_blocks()).map(Polymer::single).collect();
    found.extend(frontier.iter().cloned());
    for _ in 1..4 {
        let mut next = BTreeSet::new();
        for p in &frontier {
            for &b in p.blocks() {
                for n in bl.neighbours(b) {
                    if !p.contains(n) {
                        let q = p.union(&Polymer::single(n));
                        if !found.contains(&q) {
                            next.insert(q);
                        }
                    }
                }
            }
        }
        found.extend(next.iter().cloned());
        frontier = next.into_iter().collect();
    }
    found.into_iter().collect()
}

/// Small sets containing block `b`.
pub fn small_sets_containing(bl: &BlockLattice, b: usize) -> Vec<Polymer> {
    small_sets(bl)
        .into_iter()
        .filter(|p| p.contains(b))
        .collect()
}

/// Every polymer including the empty one, in mask order. Refuses above
/// [`ENUMERATION_LIMIT`] blocks.
pub fn all_polymers(bl: &BlockLattice) -> Result<Vec<Polymer>> {
    let n = bl.num_blocks();
    if n > ENUMERATION_LIMIT {
        return Err(Error::Budget {
            count: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok((0..1u64 << n).map(Polymer::from_mask).collect())
}

/// Sites at `ℓ¹` distance at most `k` from `sites`, sorted.
pub fn l1_neighbourhood(lattice: &TorusLattice, sites: &[usize], k: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; lattice.volume()];
    let mut queue = VecDeque::new();
    for &s in sites {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(s) = queue.pop_front() {
        if dist[s] == k {
            continue;
        }
        for &(dx, dy) in &DIRECTIONS {
            let n = lattice.shift(s, dx, dy);
            if dist[n] == usize::MAX {
                dist[n] = dist[s] + 1;
                queue.push_back(n);
            }
        }
    }
    (0..dist.len()).filter(|&s| dist[s] != usize::MAX).collect()
}

/// Inner vertex boundary: sites of `sites` with a nearest neighbour outside.
pub fn boundary(lattice: &TorusLattice, sites: &[usize]) -> Vec<usize> {
    let mut inside = vec![false; lattice.volume()];
    sites.iter().for_each(|&s| inside[s] = true);
    let mut out: Vec<usize> = sites
        .iter()
        .copied()
        .filter(|&s| {
            DIRECTIONS
                .iter()
                .any(|&(dx, dy)| !inside[lattice.shift(s, dx, dy)])
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blocks(base: usize, scales: u32, j: u32, adj: Adjacency) -> BlockLattice {
        BlockLattice::new(&TorusLattice::new(base, scales).unwrap(), j, adj).unwrap()
    }

    #[test]
    fn corner_contact_is_connected_under_linf() {
        let bl = blocks(2, 2, 1, Adjacency::Linf);
        let x = Polymer::new(vec![0, 3]);
        assert_eq!(components(&bl, &x).len(), 1);
        let bl1 = blocks(4, 2, 1, Adjacency::L1);
        assert_eq!(components(&bl1, &Polymer::new(vec![0, 5])).len(), 2);
    }

    #[test]
    fn small_set_rules() {
        let bl = blocks(4, 2, 1, Adjacency::Linf);
        assert!(is_small_set(&bl, &Polymer::single(5)));
        assert!(!is_small_set(&bl, &Polymer::new(vec![0, 1, 2, 3, 4])));
        assert!(!is_small_set(&bl, &Polymer::new(vec![0, 10])));
        assert!(!is_small_set(&bl, &Polymer::empty()));
    }

    #[test]
    fn closure_of_single_block() {
        let bl = blocks(2, 3, 1, Adjacency::Linf);
        assert_eq!(
            closure(&bl, &Polymer::single(5)).unwrap(),
            Polymer::single(0)
        );
        assert_eq!(
            closure(&bl, &Polymer::new(vec![1, 2])).unwrap(),
            Polymer::new(vec![0, 1])
        );
    }

    #[test]
    fn boundary_of_block() {
        let lat = TorusLattice::new(4, 2).unwrap();
        let bl = BlockLattice::new(&lat, 1, Adjacency::Linf).unwrap();
        let sites = Polymer::single(5).sites(&bl);
        assert_eq!(boundary(&lat, &sites).len(), 12);
        assert!(boundary(&lat, &bl.full().sites(&bl)).is_empty());
    }

    #[test]
    fn l1_ball() {
        let lat = TorusLattice::new(4, 2).unwrap();
        assert_eq!(l1_neighbourhood(&lat, &[0], 1).len(), 5);
        assert_eq!(l1_neighbourhood(&lat, &[0], 2).len(), 13);
    }

    #[test]
    fn polymer_set_algebra() {
        let a = Polymer::new(vec![3, 1, 2, 3]);
        let b = Polymer::new(vec![2, 5]);
        assert_eq!(a.blocks(), &[1, 2, 3]);
        assert_eq!(a.union(&b).blocks(), &[1, 2, 3, 5]);
        assert_eq!(a.intersection(&b).blocks(), &[2]);
        assert_eq!(a.difference(&b).blocks(), &[1, 3]);
        assert_eq!(Polymer::from_mask(a.mask()), a);
        assert_eq!(serde_json::to_string(&a).unwrap(), "[1,2,3]");
    }

    #[test]
    fn enumeration_guard() {
        let bl = blocks(2, 3, 0, Adjacency::Linf);
        assert!(matches!(all_polymers(&bl), Err(Error::Budget { .. })));
        assert_eq!(
            all_polymers(&blocks(2, 2, 0, Adjacency::Linf))
                .unwrap()
                .len(),
            1 << 16
        );
    }
}
