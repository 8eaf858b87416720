use patchmg::parallel::{parallel_dot, AccumulatedVector, Loopback};

fn main() {
    let a = AccumulatedVector::zeros(2);
    let _ = parallel_dot(&Loopback::new(), &a, &a);
}
