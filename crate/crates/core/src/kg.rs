//! Triple files, integer vocabularies, inverse-relation augmentation and the
//! filter index of known-true triples.
//!
//! The graph is a sparse view of a boolean `N_e × N_e × N_r` tensor; the
//! dense tensor is never materialized.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{check_id, Error, Result};

/// Suffix appended to a relation name to name its inverse on export.
pub const INVERSE_SUFFIX: &str = "_inv";

/// An integer-id fact `(subject, object, relation)`.
///
/// Relation ids `>= N_r` denote inverse relations: `k + N_r` is the inverse of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub subject: u32,
    pub object: u32,
    pub relation: u32,
}

impl Triple {
    pub const fn new(subject: u32, object: u32, relation: u32) -> Self {
        Triple {
            subject,
            object,
            relation,
        }
    }

    /// `(j, i, k + N_r)` for `(i, j, k)`; maps inverse relations back again.
    pub fn inverse(self, num_relations: usize) -> Triple {
        let n = num_relations as u32;
        let relation = if self.relation < n {
            self.relation + n
        } else {
            self.relation - n
        };
        Triple::new(self.object, self.subject, relation)
    }
}

/// A triple as read from a file, before id assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl RawTriple {
    pub fn new(subject: &str, relation: &str, object: &str) -> Self {
        RawTriple {
            subject: subject.to_owned(),
            relation: relation.to_owned(),
            object: object.to_owned(),
        }
    }
}

/// Parse `subject \t relation \t object` lines. Blank lines are skipped.
pub fn parse_triples<R: BufRead>(reader: R) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        out.push(RawTriple::new(fields[0], fields[1], fields[2]));
    }
    Ok(out)
}

pub fn parse_triples_str(text: &str) -> Result<Vec<RawTriple>> {
    parse_triples(text.as_bytes())
}

pub fn read_triples_file(path: impl AsRef<Path>) -> Result<Vec<RawTriple>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_triples(BufReader::new(file))
}

/// Bidirectional string ↔ id map with ids assigned densely from 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    /// Id of `name`, assigning the next free id on first sight.
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn id(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `id \t name` lines sorted by id.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, name) in self.names.iter().enumerate() {
            writeln!(w, "{id}\t{name}")?;
        }
        Ok(())
    }

    /// Inverse of [`Vocab::write_tsv`]. Ids must be exactly `0..n` in order.
    pub fn read_tsv<R: Read>(r: R) -> Result<Self> {
        let mut vocab = Vocab::new();
        for (idx, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: idx + 1,
                message: "expected `id \\t name`".into(),
            })?;
            let id: usize = id.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad id {id:?}"),
            })?;
            if id != vocab.len() || vocab.id(name).is_some() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("id {id} out of sequence or duplicate name {name:?}"),
                });
            }
            vocab.intern(name);
        }
        Ok(vocab)
    }
}

/// Counts reported while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    /// Exact duplicate lines dropped, summed over splits.
    pub duplicates_removed: usize,
    /// Valid/test triples whose entity or relation never occurs in train.
    pub unseen_in_train: usize,
}

/// Vocabularies, id-mapped splits and the filter index.
///
/// Immutable once built.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocab,
    relations: Vocab,
    train: Vec<Triple>,
    valid: Vec<Triple>,
    test: Vec<Triple>,
    known: HashMap<(u32, u32), Vec<u32>>,
    augmented: bool,
    stats: BuildStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl KnowledgeGraph {
    /// Assign ids by first appearance over train, then valid, then test.
    ///
    /// With `augment`, every train triple `(i, j, k)` is followed by its
    /// inverse `(j, i, k + N_r)`. The filter index always holds every split
    /// together with the inverse of each of its triples.
    pub fn build(
        train: &[RawTriple],
        valid: &[RawTriple],
        test: &[RawTriple],
        augment: bool,
    ) -> Result<Self> {
        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        for t in train.iter().chain(valid).chain(test) {
            entities.intern(&t.subject);
            relations.intern(&t.relation);
            entities.intern(&t.object);
        }
        for name in relations.names() {
            let inv = format!("{name}{INVERSE_SUFFIX}");
            if relations.id(&inv).is_some() {
                return Err(Error::RelationNameCollision(inv));
            }
        }

        let num_relations = relations.len();
        let mut stats = BuildStats::default();
        let mut map_split = |raw: &[RawTriple]| -> Vec<Triple> {
            let mut seen = HashSet::with_capacity(raw.len());
            let mut out = Vec::with_capacity(raw.len());
            for t in raw {
                let triple = Triple::new(
                    entities.id(&t.subject).expect("interned"),
                    entities.id(&t.object).expect("interned"),
                    relations.id(&t.relation).expect("interned"),
                );
                if seen.insert(triple) {
                    out.push(triple);
                } else {
                    stats.duplicates_removed += 1;
                }
            }
            out
        };
        let mut train_ids = map_split(train);
        let valid_ids = map_split(valid);
        let test_ids = map_split(test);

        // Ids are assigned in train order first, so anything past the train
        // maxima was never seen in train.
        let mut train_entities = HashSet::new();
        let mut train_relations = HashSet::new();
        for t in &train_ids {
            train_entities.insert(t.subject);
            train_entities.insert(t.object);
            train_relations.insert(t.relation);
        }
        stats.unseen_in_train = valid_ids
            .iter()
            .chain(&test_ids)
            .filter(|t| {
                !train_entities.contains(&t.subject)
                    || !train_entities.contains(&t.object)
                    || !train_relations.contains(&t.relation)
            })
            .count();

        if stats.duplicates_removed > 0 {
            log::warn!("dropped {} duplicate triples", stats.duplicates_removed);
        }
        if stats.unseen_in_train > 0 {
            log::warn!(
                "{} valid/test triples mention an entity or relation absent from train",
                stats.unseen_in_train
            );
        }

        let mut known: HashMap<(u32, u32), Vec<u32>> = HashMap::new();
        for t in train_ids.iter().chain(&valid_ids).chain(&test_ids) {
            for u in [*t, t.inverse(num_relations)] {
                known
                    .entry((u.subject, u.relation))
                    .or_default()
                    .push(u.object);
            }
        }
        for objects in known.values_mut() {
            objects.sort_unstable();
            objects.dedup();
        }

        if augment {
            let raw = std::mem::take(&mut train_ids);
            train_ids.reserve(raw.len() * 2);
            for t in raw {
                train_ids.push(t);
                train_ids.push(t.inverse(num_relations));
            }
        }

        Ok(KnowledgeGraph {
            entities,
            relations,
            train: train_ids,
            valid: valid_ids,
            test: test_ids,
            known,
            augmented: augment,
            stats,
        })
    }

    /// Load `train.txt`, `valid.txt` and `test.txt` from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>, augment: bool) -> Result<Self> {
        let dir = dir.as_ref();
        let train = read_triples_file(dir.join("train.txt"))?;
        let valid = read_triples_file(dir.join("valid.txt"))?;
        let test = read_triples_file(dir.join("test.txt"))?;
        Self::build(&train, &valid, &test, augment)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    /// Original relations only; the model holds twice as many relation vectors.
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn train(&self) -> &[Triple] {
        &self.train
    }

    pub fn valid(&self) -> &[Triple] {
        &self.valid
    }

    pub fn test(&self) -> &[Triple] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Triple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub fn stats(&self) -> BuildStats {
        self.stats
    }

    pub fn check_triple(&self, t: Triple) -> Result<()> {
        check_id("entity", t.subject, self.num_entities())?;
        check_id("entity", t.object, self.num_entities())?;
        check_id("relation", t.relation, 2 * self.num_relations())
    }

    /// Whether `t` is a known-true fact of any split (inverses included).
    pub fn is_known(&self, t: Triple) -> Result<bool> {
        self.check_triple(t)?;
        Ok(self
            .known_objects(t.subject, t.relation)
            .binary_search(&t.object)
            .is_ok())
    }

    /// Sorted objects `j` such that `(subject, j, relation)` is known.
    pub fn known_objects(&self, subject: u32, relation: u32) -> &[u32] {
        self.known
            .get(&(subject, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Look up a string triple in this graph's vocabularies.
    pub fn resolve(&self, raw: &RawTriple) -> Option<Triple> {
        Some(Triple::new(
            self.entities.id(&raw.subject)?,
            self.entities.id(&raw.object)?,
            self.relations.id(&raw.relation)?,
        ))
    }

    /// Relation names for all `2 N_r` relation vectors, inverses suffixed.
    pub fn relation_vector_names(&self) -> Vec<String> {
        let names = self.relations.names();
        names
            .iter()
            .cloned()
            .chain(names.iter().map(|n| format!("{n}{INVERSE_SUFFIX}")))
            .collect()
    }

    pub fn write_entity_tsv<W: Write>(&self, w: W) -> Result<()> {
        self.entities.write_tsv(w)
    }

    /// `id \t name` for every relation vector, inverses included.
    pub fn write_relation_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (id, name) in self.relation_vector_names().iter().enumerate() {
            writeln!(w, "{id}\t{name}")?;
        }
        Ok(())
    }
}
