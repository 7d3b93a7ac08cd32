//! Real-valued CP factor matrices and the trilinear score
//! `θ_ijk = Σ_d a_id · b_jd · c_kd`.

use crate::error::{check_id, Error, Result};
use crate::kg::Triple;

/// Row-major `rows × cols` matrix of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Subject (`A`), object (`B`) and relation (`C`) embeddings.
///
/// `A` and `B` have `N_e` rows; `C` has `2 N_r` rows, inverses after the
/// originals. All share `dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseFactors {
    pub subjects: DenseMatrix,
    pub objects: DenseMatrix,
    pub relations: DenseMatrix,
}

impl DenseFactors {
    pub fn zeros(num_entities: usize, num_relations: usize, dim: usize) -> Self {
        DenseFactors {
            subjects: DenseMatrix::zeros(num_entities, dim),
            objects: DenseMatrix::zeros(num_entities, dim),
            relations: DenseMatrix::zeros(2 * num_relations, dim),
        }
    }

    pub fn new(
        subjects: DenseMatrix,
        objects: DenseMatrix,
        relations: DenseMatrix,
    ) -> Result<Self> {
        let dim = subjects.cols();
        if objects.cols() != dim || relations.cols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "column counts {}, {}, {}",
                subjects.cols(),
                objects.cols(),
                relations.cols()
            )));
        }
        if objects.rows() != subjects.rows() {
            return Err(Error::ShapeMismatch(format!(
                "{} subject rows vs {} object rows",
                subjects.rows(),
                objects.rows()
            )));
        }
        if relations.rows() % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} relation rows is not 2·N_r",
                relations.rows()
            )));
        }
        Ok(DenseFactors {
            subjects,
            objects,
            relations,
        })
    }

    pub fn dim(&self) -> usize {
        self.subjects.cols()
    }

    pub fn num_entities(&self) -> usize {
        self.subjects.rows()
    }

    /// Original relations, `N_r`.
    pub fn num_relations(&self) -> usize {
        self.relations.rows() / 2
    }

    pub fn check_triple(&self, t: Triple) -> Result<()> {
        check_id("entity", t.subject, self.num_entities())?;
        check_id("entity", t.object, self.num_entities())?;
        check_id("relation", t.relation, self.relations.rows())
    }

    pub fn is_finite(&self) -> bool {
        self.subjects.is_finite() && self.objects.is_finite() && self.relations.is_finite()
    }

    /// Score of `t`; errors on out-of-range ids.
    pub fn score(&self, t: Triple) -> Result<f64> {
        self.check_triple(t)?;
        Ok(self.score_unchecked(t))
    }

    #[inline]
    pub fn score_unchecked(&self, t: Triple) -> f64 {
        dot3(
            self.subjects.row(t.subject as usize),
            self.objects.row(t.object as usize),
            self.relations.row(t.relation as usize),
        )
    }

    /// Scores of `(subject, j, relation)` for every entity `j`, written to `out`.
    pub fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        let a = self.subjects.row(subject as usize);
        let c = self.relations.row(relation as usize);
        let query: Vec<f32> = a.iter().zip(c).map(|(x, y)| x * y).collect();
        for (j, slot) in out.iter_mut().enumerate().take(self.num_entities()) {
            *slot = dot2(&query, self.objects.row(j));
        }
    }
}

/// Score of `t` under `factors`.
pub fn score_dense(factors: &DenseFactors, t: Triple) -> Result<f64> {
    factors.score(t)
}

const LANES: usize = 8;

/// `Σ a_d b_d c_d` with eight independent `f32` accumulators, reduced in `f64`.
#[inline]
pub fn dot3(a: &[f32], b: &[f32], c: &[f32]) -> f64 {
    let n = a.len().min(b.len()).min(c.len());
    let (a, b, c) = (&a[..n], &b[..n], &c[..n]);
    let mut acc = [0f32; LANES];
    let chunks = n / LANES * LANES;
    for ((ca, cb), cc) in a[..chunks]
        .chunks_exact(LANES)
        .zip(b[..chunks].chunks_exact(LANES))
        .zip(c[..chunks].chunks_exact(LANES))
    {
        for l in 0..LANES {
            acc[l] += ca[l] * cb[l] * cc[l];
        }
    }
    for d in chunks..n {
        acc[d % LANES] += a[d] * b[d] * c[d];
    }
    acc.iter().map(|&x| x as f64).sum()
}

/// Same lane structure as [`dot3`] for a precomputed `a ∘ c`.
///
/// `(a_d c_d) b_d` and `a_d b_d c_d` can round differently, so batch scores
/// are rounded like single scores only up to `f32` precision.
#[inline]
fn dot2(q: &[f32], b: &[f32]) -> f64 {
    let n = q.len().min(b.len());
    let (q, b) = (&q[..n], &b[..n]);
    let mut acc = [0f32; LANES];
    let chunks = n / LANES * LANES;
    for (cq, cb) in q[..chunks]
        .chunks_exact(LANES)
        .zip(b[..chunks].chunks_exact(LANES))
    {
        for l in 0..LANES {
            acc[l] += cq[l] * cb[l];
        }
    }
    for d in chunks..n {
        acc[d % LANES] += q[d] * b[d];
    }
    acc.iter().map(|&x| x as f64).sum()
}
