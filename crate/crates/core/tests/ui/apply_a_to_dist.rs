use patchmg::parallel::{DistributedVector, RankHierarchy};

fn apply(h: &RankHierarchy<'_>, d: &DistributedVector) {
    let _ = h.apply_a(1, d);
}

fn main() {}
