use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{unitary_step, ComplexMatrix, C64};
use crate::state::DensityOperator;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Entries uniform in `[-scale, scale]`.
pub fn random_hermitian(r: &mut ChaCha8Rng, dim: usize, scale: f64) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim);
    for i in 0..dim {
        m.set(i, i, C64::new(r.random_range(-scale..scale), 0.0));
        for j in i + 1..dim {
            let z = C64::new(r.random_range(-scale..scale), r.random_range(-scale..scale));
            m.set(i, j, z);
            m.set(j, i, z.conj());
        }
    }
    m
}

pub fn random_unitary(r: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    unitary_step(&random_hermitian(r, dim, 3.0), 1.0).unwrap()
}

pub fn random_psd(r: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    let a = ComplexMatrix::from_fn(dim, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
    &a * &a.adjoint()
}

pub fn random_density(r: &mut ChaCha8Rng, dim: usize) -> DensityOperator {
    let p = random_psd(r, dim);
    let tr = p.trace().re;
    DensityOperator::new(p.scale_real(1.0 / tr)).unwrap()
}
