//! Little-endian model files and size accounting.
//!
//! ```text
//! dense  (CPKG): magic, u32 version, u32 N_e, u32 N_r, u32 D,
//!                A, B, C as row-major f32
//! packed (BCPK): magic, u32 version, u32 N_e, u32 N_r, u32 D, f64 Δ,
//!                A, B, C as rows of ⌈D/64⌉ u64 words
//! vq     (VQCP): magic, u32 version, u32 N_e, u32 N_r, u32 D,
//!                f64 α_A, α_B, α_C, then words as in BCPK
//! ```
//!
//! Relation matrices hold `2 N_r` rows. Vocabularies live beside the model
//! as TSV files, not inside it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::dense::{DenseFactors, DenseMatrix};
use crate::error::{Error, Result};
use crate::eval::Scorer;
use crate::kg::Triple;
use crate::packed::{words_for, BitMatrix, PackedFactors};
use crate::vq::VqFactors;

pub const DENSE_MAGIC: &[u8; 4] = b"CPKG";
pub const PACKED_MAGIC: &[u8; 4] = b"BCPK";
pub const VQ_MAGIC: &[u8; 4] = b"VQCP";
pub const FORMAT_VERSION: u32 = 1;

/// Magic, version, `N_e`, `N_r`, `D`.
const BASE_HEADER: usize = 4 + 4 * 4;
pub const DENSE_HEADER_BYTES: usize = BASE_HEADER;
pub const PACKED_HEADER_BYTES: usize = BASE_HEADER + 8;
pub const VQ_HEADER_BYTES: usize = BASE_HEADER + 3 * 8;

/// Rows across the three matrices, `2 N_e + 2 N_r`.
fn total_rows(num_entities: usize, num_relations: usize) -> usize {
    2 * num_entities + 2 * num_relations
}

pub fn dense_payload_len(num_entities: usize, num_relations: usize, dim: usize) -> usize {
    4 * dim * total_rows(num_entities, num_relations)
}

pub fn packed_payload_len(num_entities: usize, num_relations: usize, dim: usize) -> usize {
    8 * words_for(dim) * total_rows(num_entities, num_relations)
}

pub fn dense_file_len(num_entities: usize, num_relations: usize, dim: usize) -> usize {
    DENSE_HEADER_BYTES + dense_payload_len(num_entities, num_relations, dim)
}

pub fn packed_file_len(num_entities: usize, num_relations: usize, dim: usize) -> usize {
    PACKED_HEADER_BYTES + packed_payload_len(num_entities, num_relations, dim)
}

pub fn vq_file_len(num_entities: usize, num_relations: usize, dim: usize) -> usize {
    VQ_HEADER_BYTES + packed_payload_len(num_entities, num_relations, dim)
}

fn write_header<W: Write>(
    w: &mut W,
    magic: &[u8; 4],
    ne: usize,
    nr: usize,
    dim: usize,
) -> Result<()> {
    let to_u32 = |x: usize, what: &str| {
        u32::try_from(x).map_err(|_| Error::Format(format!("{what} {x} does not fit in u32")))
    };
    w.write_all(magic)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&to_u32(ne, "N_e")?.to_le_bytes())?;
    w.write_all(&to_u32(nr, "N_r")?.to_le_bytes())?;
    w.write_all(&to_u32(dim, "D")?.to_le_bytes())?;
    Ok(())
}

fn write_bits<W: Write>(w: &mut W, m: &BitMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(8 * m.words().len());
    for word in m.words() {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_dense<W: Write>(mut w: W, f: &DenseFactors) -> Result<()> {
    write_header(
        &mut w,
        DENSE_MAGIC,
        f.num_entities(),
        f.num_relations(),
        f.dim(),
    )?;
    for m in [&f.subjects, &f.objects, &f.relations] {
        let mut buf = Vec::with_capacity(4 * m.as_slice().len());
        for x in m.as_slice() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn write_packed<W: Write>(mut w: W, p: &PackedFactors) -> Result<()> {
    write_header(
        &mut w,
        PACKED_MAGIC,
        p.num_entities(),
        p.num_relations(),
        p.dim(),
    )?;
    w.write_all(&p.delta().to_le_bytes())?;
    for m in [&p.subjects, &p.objects, &p.relations] {
        write_bits(&mut w, m)?;
    }
    Ok(())
}

pub fn write_vq<W: Write>(mut w: W, v: &VqFactors) -> Result<()> {
    write_header(
        &mut w,
        VQ_MAGIC,
        v.num_entities(),
        v.num_relations(),
        v.dim(),
    )?;
    for a in v.alphas {
        w.write_all(&a.to_le_bytes())?;
    }
    for m in [&v.subjects, &v.objects, &v.relations] {
        write_bits(&mut w, m)?;
    }
    Ok(())
}

/// Byte cursor over a fully read file.
struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )))
        }
    }
}

/// Shape from a header after checking magic and version.
fn read_header(c: &mut Cursor<'_>, magic: &[u8; 4]) -> Result<(usize, usize, usize)> {
    let got = c.take(4)?;
    if got != magic {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(got),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    Ok((c.u32()? as usize, c.u32()? as usize, c.u32()? as usize))
}

/// Payload must be exactly `expected` more bytes.
fn check_payload(c: &Cursor<'_>, expected: usize) -> Result<()> {
    let remaining = c.bytes.len() - c.pos;
    if remaining < expected {
        Err(Error::Format(format!(
            "truncated file: {remaining} payload bytes, expected {expected}"
        )))
    } else if remaining > expected {
        Err(Error::Format(format!(
            "{} trailing bytes",
            remaining - expected
        )))
    } else {
        Ok(())
    }
}

fn read_bits(c: &mut Cursor<'_>, rows: usize, dim: usize) -> Result<BitMatrix> {
    let bytes = c.take(8 * rows * words_for(dim))?;
    let words = bytes
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    BitMatrix::from_words(rows, dim, words)
}

fn parse_dense(bytes: &[u8]) -> Result<DenseFactors> {
    let mut c = Cursor { bytes, pos: 0 };
    let (ne, nr, dim) = read_header(&mut c, DENSE_MAGIC)?;
    check_payload(&c, dense_payload_len(ne, nr, dim))?;
    let mut read = |rows: usize| -> Result<DenseMatrix> {
        let raw = c.take(4 * rows * dim)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("non-finite parameter".into()));
        }
        DenseMatrix::from_vec(rows, dim, data)
    };
    let subjects = read(ne)?;
    let objects = read(ne)?;
    let relations = read(2 * nr)?;
    c.finish()?;
    DenseFactors::new(subjects, objects, relations)
}

fn parse_packed(bytes: &[u8]) -> Result<PackedFactors> {
    let mut c = Cursor { bytes, pos: 0 };
    let (ne, nr, dim) = read_header(&mut c, PACKED_MAGIC)?;
    let delta = c.f64()?;
    check_payload(&c, packed_payload_len(ne, nr, dim))?;
    let subjects = read_bits(&mut c, ne, dim)?;
    let objects = read_bits(&mut c, ne, dim)?;
    let relations = read_bits(&mut c, 2 * nr, dim)?;
    c.finish()?;
    PackedFactors::new(subjects, objects, relations, delta)
        .map_err(|e| Error::Format(e.to_string()))
}

fn parse_vq(bytes: &[u8]) -> Result<VqFactors> {
    let mut c = Cursor { bytes, pos: 0 };
    let (ne, nr, dim) = read_header(&mut c, VQ_MAGIC)?;
    let alphas = [c.f64()?, c.f64()?, c.f64()?];
    check_payload(&c, packed_payload_len(ne, nr, dim))?;
    let subjects = read_bits(&mut c, ne, dim)?;
    let objects = read_bits(&mut c, ne, dim)?;
    let relations = read_bits(&mut c, 2 * nr, dim)?;
    c.finish()?;
    VqFactors::new(subjects, objects, relations, alphas).map_err(|e| Error::Format(e.to_string()))
}

fn read_all<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Ok(bytes)
}

pub fn read_dense<R: Read>(r: R) -> Result<DenseFactors> {
    parse_dense(&read_all(r)?)
}

pub fn read_packed<R: Read>(r: R) -> Result<PackedFactors> {
    parse_packed(&read_all(r)?)
}

pub fn read_vq<R: Read>(r: R) -> Result<VqFactors> {
    parse_vq(&read_all(r)?)
}

/// Any of the three model kinds.
#[derive(Debug, Clone)]
pub enum Model {
    Dense(DenseFactors),
    Packed(PackedFactors),
    Vq(VqFactors),
}

impl Model {
    /// Dispatch on the file magic.
    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        match bytes.get(..4) {
            Some(m) if m == DENSE_MAGIC => parse_dense(bytes).map(Model::Dense),
            Some(m) if m == PACKED_MAGIC => parse_packed(bytes).map(Model::Packed),
            Some(m) if m == VQ_MAGIC => parse_vq(bytes).map(Model::Vq),
            Some(m) => Err(Error::Format(format!(
                "unknown magic {:?}",
                String::from_utf8_lossy(m)
            ))),
            None => Err(Error::Format("truncated file".into())),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_bytes(&read_path(path.as_ref())?)
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        match self {
            Model::Dense(f) => write_dense(w, f),
            Model::Packed(p) => write_packed(w, p),
            Model::Vq(v) => write_vq(w, v),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        write_atomic(path.as_ref(), &buf)
    }

    pub fn size_report(&self) -> SizeReport {
        match self {
            Model::Dense(f) => SizeReport::dense(f.num_entities(), f.num_relations(), f.dim()),
            Model::Packed(p) => SizeReport::packed(p.num_entities(), p.num_relations(), p.dim()),
            Model::Vq(v) => SizeReport::vq(v.num_entities(), v.num_relations(), v.dim()),
        }
    }

    pub fn num_entities(&self) -> usize {
        match self {
            Model::Dense(f) => f.num_entities(),
            Model::Packed(p) => p.num_entities(),
            Model::Vq(v) => v.num_entities(),
        }
    }

    pub fn num_relations(&self) -> usize {
        match self {
            Model::Dense(f) => f.num_relations(),
            Model::Packed(p) => p.num_relations(),
            Model::Vq(v) => v.num_relations(),
        }
    }
}

impl Scorer for Model {
    fn num_entities(&self) -> usize {
        Model::num_entities(self)
    }
    fn num_relation_vectors(&self) -> usize {
        2 * self.num_relations()
    }
    fn dim(&self) -> usize {
        match self {
            Model::Dense(f) => f.dim(),
            Model::Packed(p) => p.dim(),
            Model::Vq(v) => v.dim(),
        }
    }
    fn score(&self, t: Triple) -> f64 {
        match self {
            Model::Dense(f) => f.score_unchecked(t),
            Model::Packed(p) => p.score_unchecked(t),
            Model::Vq(v) => v.score_unchecked(t),
        }
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        match self {
            Model::Dense(f) => f.score_objects(subject, relation, out),
            Model::Packed(p) => p.score_objects(subject, relation, out),
            Model::Vq(v) => v.score_objects(subject, relation, out),
        }
    }
}

fn read_path(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Write to a sibling temp file, then rename over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn save_dense(path: impl AsRef<Path>, f: &DenseFactors) -> Result<()> {
    let mut buf = Vec::with_capacity(dense_file_len(f.num_entities(), f.num_relations(), f.dim()));
    write_dense(&mut buf, f)?;
    write_atomic(path.as_ref(), &buf)
}

pub fn save_packed(path: impl AsRef<Path>, p: &PackedFactors) -> Result<()> {
    let mut buf = Vec::with_capacity(packed_file_len(
        p.num_entities(),
        p.num_relations(),
        p.dim(),
    ));
    write_packed(&mut buf, p)?;
    write_atomic(path.as_ref(), &buf)
}

pub fn save_vq(path: impl AsRef<Path>, v: &VqFactors) -> Result<()> {
    let mut buf = Vec::new();
    write_vq(&mut buf, v)?;
    write_atomic(path.as_ref(), &buf)
}

pub fn load_dense(path: impl AsRef<Path>) -> Result<DenseFactors> {
    parse_dense(&read_path(path.as_ref())?)
}

pub fn load_packed(path: impl AsRef<Path>) -> Result<PackedFactors> {
    parse_packed(&read_path(path.as_ref())?)
}

pub fn load_vq(path: impl AsRef<Path>) -> Result<VqFactors> {
    parse_vq(&read_path(path.as_ref())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Dense,
    Packed,
    Vq,
}

/// Storage accounting for one model.
///
/// For dense models the `bits_*` fields count 32-bit floats (the at-rest
/// format), which gives `64 D` bits per entity and `32 D` per relation
/// vector; the `*_f64` fields give the double-precision equivalents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SizeReport {
    pub kind: ModelKind,
    pub dim: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    /// Subject plus object row.
    pub bits_per_entity: usize,
    pub bits_per_relation_vector: usize,
    /// Relation and its inverse.
    pub bits_per_original_relation: usize,
    pub bits_per_entity_f64: Option<usize>,
    pub bits_per_relation_vector_f64: Option<usize>,
    /// On-disk size including header and word padding.
    pub file_bytes: usize,
}

impl SizeReport {
    fn with(
        kind: ModelKind,
        ne: usize,
        nr: usize,
        dim: usize,
        bits_per_coef: usize,
        file_bytes: usize,
    ) -> Self {
        let rel = bits_per_coef * dim;
        let f64s = (kind == ModelKind::Dense).then_some(64 * dim);
        SizeReport {
            kind,
            dim,
            num_entities: ne,
            num_relations: nr,
            bits_per_entity: 2 * rel,
            bits_per_relation_vector: rel,
            bits_per_original_relation: 2 * rel,
            bits_per_entity_f64: f64s.map(|x| 2 * x),
            bits_per_relation_vector_f64: f64s,
            file_bytes,
        }
    }

    pub fn dense(ne: usize, nr: usize, dim: usize) -> Self {
        Self::with(
            ModelKind::Dense,
            ne,
            nr,
            dim,
            32,
            dense_file_len(ne, nr, dim),
        )
    }

    pub fn packed(ne: usize, nr: usize, dim: usize) -> Self {
        Self::with(
            ModelKind::Packed,
            ne,
            nr,
            dim,
            1,
            packed_file_len(ne, nr, dim),
        )
    }

    pub fn vq(ne: usize, nr: usize, dim: usize) -> Self {
        Self::with(ModelKind::Vq, ne, nr, dim, 1, vq_file_len(ne, nr, dim))
    }

    /// On-disk bytes of one padded row.
    pub fn row_bytes(&self) -> usize {
        match self.kind {
            ModelKind::Dense => 4 * self.dim,
            ModelKind::Packed | ModelKind::Vq => 8 * words_for(self.dim),
        }
    }

    /// `key value` lines.
    pub fn to_key_value(&self) -> String {
        let mut s = format!(
            "kind {:?}\ndim {}\nentities {}\nrelations {}\nbits_per_entity {}\nbits_per_relation_vector {}\nbits_per_original_relation {}\n",
            self.kind,
            self.dim,
            self.num_entities,
            self.num_relations,
            self.bits_per_entity,
            self.bits_per_relation_vector,
            self.bits_per_original_relation,
        );
        if let (Some(e), Some(r)) = (self.bits_per_entity_f64, self.bits_per_relation_vector_f64) {
            s += &format!("bits_per_entity_f64 {e}\nbits_per_relation_vector_f64 {r}\n");
        }
        s += &format!(
            "row_bytes {}\nfile_bytes {}\n",
            self.row_bytes(),
            self.file_bytes
        );
        s
    }
}
