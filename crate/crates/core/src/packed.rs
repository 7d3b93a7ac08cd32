//! Bit-plane factor matrices and XNOR/popcount scoring.
//!
//! Bit `d` of a row lives in word `d / 64`, bit `d % 64` (little-endian
//! words). A set bit means the coefficient is `+Δ`, a clear bit `-Δ`.
//! Padding bits past `dim` are kept zero and masked off when scoring.
//!
//! With `XNOR(x, y) = !(x ^ y)`, the number of agreeing triple products is
//! `BitC = popcount(XNOR(XNOR(a, b), c))` and the score is
//! `Δ³ (2 BitC - D)`.

use crate::dense::{DenseFactors, DenseMatrix};
use crate::error::{check_id, Error, Result};
use crate::kg::Triple;
use crate::quantize::quantized_bit;

pub const WORD_BITS: usize = 64;

/// Words needed to hold `dim` bits.
#[inline]
pub const fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

/// Mask of the valid bits in the last word of a `dim`-bit row.
#[inline]
pub const fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Row-major matrix of sign bits, `words_for(dim)` words per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    dim: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        let words_per_row = words_for(dim);
        BitMatrix {
            rows,
            dim,
            words_per_row,
            data: vec![0; rows * words_per_row],
        }
    }

    /// Wrap raw words; fails if the length is wrong or any padding bit is set.
    pub fn from_words(rows: usize, dim: usize, data: Vec<u64>) -> Result<Self> {
        let words_per_row = words_for(dim);
        if data.len() != rows * words_per_row {
            return Err(Error::ShapeMismatch(format!(
                "{} words for {rows} rows of {dim} bits",
                data.len()
            )));
        }
        let m = BitMatrix {
            rows,
            dim,
            words_per_row,
            data,
        };
        if !m.padding_is_zero() {
            return Err(Error::Format("nonzero padding bits".into()));
        }
        Ok(m)
    }

    /// Sign bits of a real matrix (`x >= 0` → 1).
    pub fn from_signs(m: &DenseMatrix) -> Self {
        let mut out = BitMatrix::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for (d, &x) in m.row(r).iter().enumerate() {
                if quantized_bit(x) {
                    out.set(r, d, true);
                }
            }
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub fn words(&self) -> &[u64] {
        &self.data
    }

    pub fn get(&self, r: usize, d: usize) -> bool {
        assert!(d < self.dim);
        self.row(r)[d / WORD_BITS] >> (d % WORD_BITS) & 1 == 1
    }

    pub fn set(&mut self, r: usize, d: usize, bit: bool) {
        assert!(d < self.dim);
        let w = &mut self.data[r * self.words_per_row + d / WORD_BITS];
        let m = 1u64 << (d % WORD_BITS);
        if bit {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    pub fn padding_is_zero(&self) -> bool {
        if self.words_per_row == 0 {
            return true;
        }
        let mask = tail_mask(self.dim);
        (0..self.rows).all(|r| self.row(r)[self.words_per_row - 1] & !mask == 0)
    }

    /// `±scale` per bit.
    pub fn to_dense(&self, scale: f32) -> DenseMatrix {
        DenseMatrix::from_fn(self.rows, self.dim, |r, d| {
            if self.get(r, d) {
                scale
            } else {
                -scale
            }
        })
    }

    #[cfg(test)]
    pub(crate) fn words_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }
}

/// The deployable binarized model: three bit matrices and a shared `Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedFactors {
    pub subjects: BitMatrix,
    pub objects: BitMatrix,
    pub relations: BitMatrix,
    delta: f64,
}

impl PackedFactors {
    pub fn new(
        subjects: BitMatrix,
        objects: BitMatrix,
        relations: BitMatrix,
        delta: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        check_bit_shapes(&subjects, &objects, &relations)?;
        Ok(PackedFactors {
            subjects,
            objects,
            relations,
            delta,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
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

    pub fn check_triple(&self, t: Triple) -> Result<()> {
        check_id("entity", t.subject, self.num_entities())?;
        check_id("entity", t.object, self.num_entities())?;
        check_id("relation", t.relation, self.relations.rows())
    }

    /// Number of agreeing sign products for `t`.
    #[inline]
    pub fn bit_count(&self, t: Triple) -> u32 {
        hamming_kernel(
            self.subjects.row(t.subject as usize),
            self.objects.row(t.object as usize),
            self.relations.row(t.relation as usize),
            self.dim(),
        )
    }

    pub fn score(&self, t: Triple) -> Result<f64> {
        self.check_triple(t)?;
        Ok(self.score_unchecked(t))
    }

    #[inline]
    pub fn score_unchecked(&self, t: Triple) -> f64 {
        let cube = self.delta * self.delta * self.delta;
        cube * (2.0 * self.bit_count(t) as f64 - self.dim() as f64)
    }

    pub fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        let cube = self.delta * self.delta * self.delta;
        score_objects_bits(
            &self.subjects,
            &self.objects,
            &self.relations,
            subject,
            relation,
            |c| cube * c,
            out,
        );
    }

    /// The `±Δ` real-valued model with identical scores.
    pub fn unpack(&self) -> DenseFactors {
        let s = self.delta as f32;
        DenseFactors {
            subjects: self.subjects.to_dense(s),
            objects: self.objects.to_dense(s),
            relations: self.relations.to_dense(s),
        }
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidHyperparam(format!(
            "delta must be positive, got {delta}"
        )))
    }
}

pub(crate) fn check_bit_shapes(a: &BitMatrix, b: &BitMatrix, c: &BitMatrix) -> Result<()> {
    if a.dim() != b.dim() || a.dim() != c.dim() {
        return Err(Error::ShapeMismatch(format!(
            "bit dims {}, {}, {}",
            a.dim(),
            b.dim(),
            c.dim()
        )));
    }
    if a.rows() != b.rows() || c.rows() % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "rows {}, {}, {}",
            a.rows(),
            b.rows(),
            c.rows()
        )));
    }
    Ok(())
}

/// Binarize every entry with `Q_Δ`.
pub fn binarize_factors(factors: &DenseFactors, delta: f64) -> Result<PackedFactors> {
    check_delta(delta)?;
    Ok(PackedFactors {
        subjects: BitMatrix::from_signs(&factors.subjects),
        objects: BitMatrix::from_signs(&factors.objects),
        relations: BitMatrix::from_signs(&factors.relations),
        delta,
    })
}

pub fn score_packed(packed: &PackedFactors, t: Triple) -> Result<f64> {
    packed.score(t)
}

#[inline(always)]
fn xnor(x: u64, y: u64) -> u64 {
    !(x ^ y)
}

/// `popcount(XNOR(XNOR(u, v), w))` over the first `dim` bits.
///
/// Rows must have equal length; bits past `dim` are ignored.
#[inline]
pub fn hamming_kernel(u: &[u64], v: &[u64], w: &[u64], dim: usize) -> u32 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("popcnt") {
            // SAFETY: the popcnt feature was just detected.
            return unsafe { hamming_popcnt(u, v, w, dim) };
        }
    }
    hamming_portable(u, v, w, dim)
}

#[inline(always)]
fn hamming_body(u: &[u64], v: &[u64], w: &[u64], dim: usize) -> u32 {
    let n = words_for(dim);
    debug_assert!(u.len() >= n && v.len() >= n && w.len() >= n);
    if n == 0 {
        return 0;
    }
    let mut count = 0u32;
    for i in 0..n - 1 {
        count += xnor(xnor(u[i], v[i]), w[i]).count_ones();
    }
    let last = n - 1;
    count + (xnor(xnor(u[last], v[last]), w[last]) & tail_mask(dim)).count_ones()
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "popcnt")]
unsafe fn hamming_popcnt(u: &[u64], v: &[u64], w: &[u64], dim: usize) -> u32 {
    hamming_body(u, v, w, dim)
}

/// Fallback without the hardware instruction.
pub fn hamming_portable(u: &[u64], v: &[u64], w: &[u64], dim: usize) -> u32 {
    hamming_body(u, v, w, dim)
}

/// Agreement counts for `(subject, j, relation)` over every `j`, mapped
/// through `score(2 BitC - D)`.
pub(crate) fn score_objects_bits(
    subjects: &BitMatrix,
    objects: &BitMatrix,
    relations: &BitMatrix,
    subject: u32,
    relation: u32,
    score: impl Fn(f64) -> f64,
    out: &mut [f64],
) {
    let dim = subjects.dim();
    let a = subjects.row(subject as usize);
    let c = relations.row(relation as usize);
    // XNOR(XNOR(a, b), c) = XNOR(XNOR(a, c), b)
    let query: Vec<u64> = a.iter().zip(c).map(|(&x, &y)| xnor(x, y)).collect();
    let ones = vec![u64::MAX; query.len()];
    for (j, slot) in out.iter_mut().enumerate().take(objects.rows()) {
        let count = hamming_kernel(&query, objects.row(j), &ones, dim);
        *slot = score(2.0 * count as f64 - dim as f64);
    }
}
