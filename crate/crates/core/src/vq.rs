//! Post-hoc vector quantization baseline (VQ-CP).
//!
//! Each trained factor matrix `X` is replaced by `α · sign(X)` where
//! `α = ‖X‖₁ / (rows · cols)`, the minimizer of `‖X - α S‖_F` over
//! `S ∈ {±1}` and `α > 0`.

use crate::dense::{DenseFactors, DenseMatrix};
use crate::error::{check_id, Error, Result};
use crate::kg::Triple;
use crate::packed::{check_bit_shapes, hamming_kernel, score_objects_bits, BitMatrix};

/// Sign bits (`x >= 0` → 1) and the mean absolute value of `m`.
pub fn vq_quantize(m: &DenseMatrix) -> Result<(BitMatrix, f64)> {
    let n = m.as_slice().len();
    let l1: f64 = m.as_slice().iter().map(|&x| (x as f64).abs()).sum();
    if n == 0 || l1 == 0.0 {
        return Err(Error::DegenerateMatrix);
    }
    Ok((BitMatrix::from_signs(m), l1 / n as f64))
}

/// `‖X - α S‖_F²` for sign bits `S`.
pub fn reconstruction_error(m: &DenseMatrix, bits: &BitMatrix, alpha: f64) -> f64 {
    let mut err = 0.0;
    for r in 0..m.rows() {
        for (d, &x) in m.row(r).iter().enumerate() {
            let s = if bits.get(r, d) { alpha } else { -alpha };
            err += (x as f64 - s).powi(2);
        }
    }
    err
}

/// Three sign matrices with one scale each; scores are
/// `α_A α_B α_C (2 BitC - D)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VqFactors {
    pub subjects: BitMatrix,
    pub objects: BitMatrix,
    pub relations: BitMatrix,
    /// Scales of the subject, object and relation matrices.
    pub alphas: [f64; 3],
}

impl VqFactors {
    pub fn new(
        subjects: BitMatrix,
        objects: BitMatrix,
        relations: BitMatrix,
        alphas: [f64; 3],
    ) -> Result<Self> {
        check_bit_shapes(&subjects, &objects, &relations)?;
        if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidHyperparam(format!(
                "scales must be positive: {alphas:?}"
            )));
        }
        Ok(VqFactors {
            subjects,
            objects,
            relations,
            alphas,
        })
    }

    /// Quantize each factor matrix independently.
    pub fn from_dense(f: &DenseFactors) -> Result<Self> {
        let (subjects, a) = vq_quantize(&f.subjects)?;
        let (objects, b) = vq_quantize(&f.objects)?;
        let (relations, c) = vq_quantize(&f.relations)?;
        Ok(VqFactors {
            subjects,
            objects,
            relations,
            alphas: [a, b, c],
        })
    }

    pub fn dim(&self) -> usize {
        self.subjects.dim()
    }

    pub fn num_entities(&self) -> usize {
        self.subjects.rows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.rows() / 2
    }

    fn scale(&self) -> f64 {
        self.alphas[0] * self.alphas[1] * self.alphas[2]
    }

    pub fn score(&self, t: Triple) -> Result<f64> {
        check_id("entity", t.subject, self.num_entities())?;
        check_id("entity", t.object, self.num_entities())?;
        check_id("relation", t.relation, self.relations.rows())?;
        Ok(self.score_unchecked(t))
    }

    pub fn score_unchecked(&self, t: Triple) -> f64 {
        let count = hamming_kernel(
            self.subjects.row(t.subject as usize),
            self.objects.row(t.object as usize),
            self.relations.row(t.relation as usize),
            self.dim(),
        );
        self.scale() * (2.0 * count as f64 - self.dim() as f64)
    }

    pub fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        let scale = self.scale();
        score_objects_bits(
            &self.subjects,
            &self.objects,
            &self.relations,
            subject,
            relation,
            |c| scale * c,
            out,
        );
    }
}
