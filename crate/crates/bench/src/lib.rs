//! Fixtures shared by the criterion benchmarks in `benches/`.

use stripwet::{build_continuous, build_pq, IncrementLaw, KernelOptions, ReturnKernel};

pub const P: f64 = 0.3;

pub fn pq_kernel(n_max: usize) -> ReturnKernel {
    build_pq(P, 1, n_max).expect("valid pq kernel")
}

pub fn gauss_kernel(n_max: usize, nodes: usize) -> ReturnKernel {
    let law = IncrementLaw::gaussian(1.0).expect("valid law");
    build_continuous(&law, 1.0, &KernelOptions { n_max: Some(n_max), n_nodes: nodes, ..Default::default() })
        .expect("valid gaussian kernel")
}
