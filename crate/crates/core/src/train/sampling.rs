use rand::Rng;

use crate::dense::{DenseFactors, DenseMatrix};
use crate::kg::Triple;

/// Copy of `t` with the object replaced by a uniformly drawn entity.
#[inline]
pub fn corrupt_object<R: Rng + ?Sized>(t: Triple, num_entities: usize, rng: &mut R) -> Triple {
    Triple::new(
        t.subject,
        rng.random_range(0..num_entities as u32),
        t.relation,
    )
}

/// `n` object corruptions of `t` (local closed-world negatives, unfiltered).
pub fn sample_negatives<R: Rng + ?Sized>(
    t: Triple,
    n: usize,
    num_entities: usize,
    rng: &mut R,
) -> Vec<Triple> {
    (0..n)
        .map(|_| corrupt_object(t, num_entities, rng))
        .collect()
}

/// Half-width of the initialization interval, `√6 / √(2D)`.
pub fn init_bound(dim: usize) -> f64 {
    6f64.sqrt() / ((2 * dim) as f64).sqrt()
}

/// Every entry i.i.d. uniform on `[-√6/√(2D), √6/√(2D)]`.
pub fn init_factors<R: Rng + ?Sized>(
    num_entities: usize,
    num_relations: usize,
    dim: usize,
    rng: &mut R,
) -> DenseFactors {
    let bound = init_bound(dim) as f32;
    let mut gen = |rows| DenseMatrix::from_fn(rows, dim, |_, _| rng.random_range(-bound..=bound));
    let subjects = gen(num_entities);
    let objects = gen(num_entities);
    let relations = gen(2 * num_relations);
    DenseFactors {
        subjects,
        objects,
        relations,
    }
}
