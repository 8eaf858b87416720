use patchmg::parallel::{AccumulatedVector, DistributedVector};

fn main() {
    let a = AccumulatedVector::zeros(3);
    let d = DistributedVector::zeros(3);
    let _ = &a + &d;
}
