use patchmg::parallel::{parallel_dot, DistributedVector, Loopback};

fn main() {
    let d = DistributedVector::zeros(2);
    let _ = parallel_dot(&Loopback::new(), &d, &d);
}
