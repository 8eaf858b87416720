//! Patch-to-rank assignment and the per-rank dof layout of one level.

use crate::error::{Error, Result};
use crate::topology::DofMapper;

const ELIMINATED: u32 = u32::MAX;

/// Contiguous blocks of patches per rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankPartition {
    owner: Vec<usize>,
    owned: Vec<Vec<usize>>,
}

impl RankPartition {
    /// Rank `r` owns patches `r K / R .. (r + 1) K / R`.
    pub fn contiguous(patches: usize, ranks: usize) -> Result<Self> {
        if ranks == 0 || ranks > patches {
            return Err(Error::Config(format!(
                "cannot distribute {patches} patches over {ranks} ranks"
            )));
        }
        let owned: Vec<Vec<usize>> = (0..ranks)
            .map(|r| (r * patches / ranks..(r + 1) * patches / ranks).collect())
            .collect();
        let mut owner = vec![0; patches];
        for (r, ps) in owned.iter().enumerate() {
            for &k in ps {
                owner[k] = r;
            }
        }
        Ok(Self { owner, owned })
    }

    pub fn ranks(&self) -> usize {
        self.owned.len()
    }

    pub fn num_patches(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, patch: usize) -> usize {
        self.owner[patch]
    }

    pub fn owned(&self, rank: usize) -> &[usize] {
        &self.owned[rank]
    }

    /// Ranks holding the global dof, ascending.
    pub fn dof_ranks(&self, mapper: &DofMapper, dof: usize) -> Vec<usize> {
        let mut ranks: Vec<usize> = mapper
            .dof_patches(dof)
            .iter()
            .map(|&k| self.owner[k as usize])
            .collect();
        ranks.dedup();
        ranks
    }
}

/// Dofs shared with one neighbor rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub rank: usize,
    /// Local indices in ascending global order; both sides list the same
    /// global dofs in the same order.
    pub local: Vec<u32>,
}

/// Summation recipe of one shared dof: `(rank, slot)` in ascending rank
/// order, where `slot` indexes the local vector for this rank and the
/// received buffer of the neighbor otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedSum {
    pub local: u32,
    pub terms: Vec<(usize, usize)>,
}

/// The dofs of one rank on one level.
#[derive(Debug, Clone)]
pub struct RankLayout {
    rank: usize,
    dofs: Vec<u32>,
    global_to_local: Vec<u32>,
    patches: Vec<usize>,
    patch_maps: Vec<Vec<u32>>,
    exchanges: Vec<Exchange>,
    sums: Vec<SharedSum>,
}

impl RankLayout {
    pub fn build(mapper: &DofMapper, partition: &RankPartition, rank: usize) -> Result<Self> {
        if partition.num_patches() != mapper.num_patches() {
            return Err(Error::Config("partition and dof mapper differ in patch count".into()));
        }
        let patches = partition.owned(rank).to_vec();
        let mut dofs: Vec<u32> = patches
            .iter()
            .flat_map(|&k| mapper.local_to_global(k).iter().copied())
            .filter(|&g| g != ELIMINATED)
            .collect();
        dofs.sort_unstable();
        dofs.dedup();
        let mut global_to_local = vec![ELIMINATED; mapper.num_dofs()];
        for (l, &g) in dofs.iter().enumerate() {
            global_to_local[g as usize] = l as u32;
        }
        let patch_maps = patches
            .iter()
            .map(|&k| {
                mapper
                    .local_to_global(k)
                    .iter()
                    .map(|&g| if g == ELIMINATED { ELIMINATED } else { global_to_local[g as usize] })
                    .collect()
            })
            .collect();

        let mut exchanges: Vec<Exchange> = Vec::new();
        let mut sums = Vec::new();
        let mut shared_ranks = Vec::with_capacity(dofs.len());
        for (l, &g) in dofs.iter().enumerate() {
            let ranks = partition.dof_ranks(mapper, g as usize);
            if ranks.len() > 1 {
                for &q in ranks.iter().filter(|&&q| q != rank) {
                    match exchanges.iter_mut().find(|e| e.rank == q) {
                        Some(e) => e.local.push(l as u32),
                        None => exchanges.push(Exchange {
                            rank: q,
                            local: vec![l as u32],
                        }),
                    }
                }
                shared_ranks.push((l, ranks));
            }
        }
        exchanges.sort_by_key(|e| e.rank);
        for (l, ranks) in shared_ranks {
            let terms = ranks
                .iter()
                .map(|&q| {
                    if q == rank {
                        (q, l)
                    } else {
                        let e = exchanges.iter().find(|e| e.rank == q).expect("neighbor listed");
                        let slot = e.local.binary_search(&(l as u32)).expect("shared dof listed");
                        (q, slot)
                    }
                })
                .collect();
            sums.push(SharedSum { local: l as u32, terms });
        }
        Ok(Self {
            rank,
            dofs,
            global_to_local,
            patches,
            patch_maps,
            exchanges,
            sums,
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    /// Global dof of each local index, ascending.
    pub fn dofs(&self) -> &[u32] {
        &self.dofs
    }

    pub fn local(&self, global: u32) -> Option<u32> {
        self.global_to_local
            .get(global as usize)
            .copied()
            .filter(|&l| l != ELIMINATED)
    }

    /// Owned patches, ascending.
    pub fn patches(&self) -> &[usize] {
        &self.patches
    }

    /// Rank-local index per patch-local tensor index of the `i`-th owned
    /// patch.
    pub fn patch_map(&self, i: usize) -> &[u32] {
        &self.patch_maps[i]
    }

    pub fn exchanges(&self) -> &[Exchange] {
        &self.exchanges
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.exchanges.iter().map(|e| e.rank)
    }

    pub fn shared_sums(&self) -> &[SharedSum] {
        &self.sums
    }

    /// Scatters rank-local values into a global vector of length `n`.
    pub fn scatter(&self, local: &[f64], global: &mut [f64]) {
        for (&g, &v) in self.dofs.iter().zip(local) {
            global[g as usize] = v;
        }
    }

    /// Gathers the rank's entries of a global vector.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&g| global[g as usize]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::make_unit_grid;

    #[test]
    fn contiguous_blocks() {
        let p = RankPartition::contiguous(7, 3).unwrap();
        assert_eq!(p.owned(0), &[0, 1]);
        assert_eq!(p.owned(1), &[2, 3]);
        assert_eq!(p.owned(2), &[4, 5, 6]);
        assert!(RankPartition::contiguous(2, 3).is_err());
        assert!(RankPartition::contiguous(2, 0).is_err());
    }

    #[test]
    fn exchange_plans_are_symmetric() {
        let domain = make_unit_grid(&[4, 2]).unwrap();
        let mapper = DofMapper::build(&domain, 1, 2).unwrap();
        let part = RankPartition::contiguous(8, 4).unwrap();
        let layouts: Vec<_> = (0..4).map(|r| RankLayout::build(&mapper, &part, r).unwrap()).collect();
        for a in &layouts {
            for e in a.exchanges() {
                let b = &layouts[e.rank];
                let back = b.exchanges().iter().find(|x| x.rank == a.rank()).unwrap();
                let ga: Vec<u32> = e.local.iter().map(|&l| a.dofs()[l as usize]).collect();
                let gb: Vec<u32> = back.local.iter().map(|&l| b.dofs()[l as usize]).collect();
                assert_eq!(ga, gb);
            }
        }
        // every dof is held by some rank
        let mut seen = vec![false; mapper.num_dofs()];
        for a in &layouts {
            for &g in a.dofs() {
                seen[g as usize] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }
}
