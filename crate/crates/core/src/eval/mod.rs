//! Filtered link-prediction ranking (MRR, Hits@N), ensembles and triple
//! classification.
//!
//! Each test triple `(i, j, k)` yields two queries: the object side ranks
//! `(i, ?, k)` and the subject side ranks `(j, ?, k + N_r)`, i.e. the object
//! side of the inverse relation. Candidates forming any other known-true
//! triple are dropped from the ranking. Ties count half ("mid-rank").

mod classify;

use std::fmt;

use rayon::prelude::*;

use crate::dense::DenseFactors;
use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, Triple};
use crate::packed::PackedFactors;
use crate::vq::VqFactors;

pub use classify::{classify, tune_threshold, tune_threshold_scores, Threshold};

/// Anything that assigns a confidence score to a triple.
pub trait Scorer: Sync {
    fn num_entities(&self) -> usize;

    /// Rows of the relation matrix, `2 N_r`.
    fn num_relation_vectors(&self) -> usize;

    fn dim(&self) -> usize;

    /// Score of an in-range triple.
    fn score(&self, t: Triple) -> f64;

    /// Scores of `(subject, j, relation)` for every entity `j`.
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = self.score(Triple::new(subject, j as u32, relation));
        }
    }
}

impl Scorer for DenseFactors {
    fn num_entities(&self) -> usize {
        DenseFactors::num_entities(self)
    }
    fn num_relation_vectors(&self) -> usize {
        self.relations.rows()
    }
    fn dim(&self) -> usize {
        DenseFactors::dim(self)
    }
    fn score(&self, t: Triple) -> f64 {
        self.score_unchecked(t)
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        DenseFactors::score_objects(self, subject, relation, out)
    }
}

impl Scorer for PackedFactors {
    fn num_entities(&self) -> usize {
        PackedFactors::num_entities(self)
    }
    fn num_relation_vectors(&self) -> usize {
        self.relations.rows()
    }
    fn dim(&self) -> usize {
        PackedFactors::dim(self)
    }
    fn score(&self, t: Triple) -> f64 {
        self.score_unchecked(t)
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        PackedFactors::score_objects(self, subject, relation, out)
    }
}

impl Scorer for VqFactors {
    fn num_entities(&self) -> usize {
        VqFactors::num_entities(self)
    }
    fn num_relation_vectors(&self) -> usize {
        self.relations.rows()
    }
    fn dim(&self) -> usize {
        VqFactors::dim(self)
    }
    fn score(&self, t: Triple) -> f64 {
        self.score_unchecked(t)
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        VqFactors::score_objects(self, subject, relation, out)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn num_entities(&self) -> usize {
        (**self).num_entities()
    }
    fn num_relation_vectors(&self) -> usize {
        (**self).num_relation_vectors()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score(&self, t: Triple) -> f64 {
        (**self).score(t)
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        (**self).score_objects(subject, relation, out)
    }
}

impl<S: Scorer + ?Sized + Send> Scorer for Box<S> {
    fn num_entities(&self) -> usize {
        (**self).num_entities()
    }
    fn num_relation_vectors(&self) -> usize {
        (**self).num_relation_vectors()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn score(&self, t: Triple) -> f64 {
        (**self).score(t)
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        (**self).score_objects(subject, relation, out)
    }
}

/// Sum of member scores.
#[derive(Debug, Clone)]
pub struct Ensemble<S> {
    members: Vec<S>,
}

impl<S: Scorer> Ensemble<S> {
    /// Members must agree on entity and relation-vector counts.
    pub fn new(members: Vec<S>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::ShapeMismatch("empty ensemble".into()))?;
        let shape = (first.num_entities(), first.num_relation_vectors());
        for m in &members[1..] {
            if (m.num_entities(), m.num_relation_vectors()) != shape {
                return Err(Error::ShapeMismatch(format!(
                    "ensemble member has {} entities / {} relation vectors, expected {} / {}",
                    m.num_entities(),
                    m.num_relation_vectors(),
                    shape.0,
                    shape.1
                )));
            }
        }
        Ok(Ensemble { members })
    }

    pub fn members(&self) -> &[S] {
        &self.members
    }
}

impl<S: Scorer> Scorer for Ensemble<S> {
    fn num_entities(&self) -> usize {
        self.members[0].num_entities()
    }
    fn num_relation_vectors(&self) -> usize {
        self.members[0].num_relation_vectors()
    }
    fn dim(&self) -> usize {
        self.members.iter().map(Scorer::dim).sum()
    }
    fn score(&self, t: Triple) -> f64 {
        self.members.iter().map(|m| m.score(t)).sum()
    }
    fn score_objects(&self, subject: u32, relation: u32, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let mut buf = vec![0.0; out.len()];
        for m in &self.members {
            m.score_objects(subject, relation, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o += b;
            }
        }
    }
}

/// Which argument of the test triple is replaced by every entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Rank `(i, ?, k)`.
    Object,
    /// Rank `(?, j, k)`, realized as `(j, ?, k + N_r)`.
    Subject,
}

/// Fractional filtered rank of `true_object` among `scores`.
///
/// `known` lists objects forming known triples with the query; all of them
/// except the true one are skipped. Result is
/// `1 + #strictly-higher + #ties / 2`.
pub fn filtered_rank(scores: &[f64], true_object: u32, known: &[u32]) -> f64 {
    let target = scores[true_object as usize];
    let (mut higher, mut ties) = (0usize, 0usize);
    for (j, &s) in scores.iter().enumerate() {
        if j == true_object as usize {
            continue;
        }
        if s > target {
            higher += 1;
        } else if s == target {
            ties += 1;
        }
    }
    for &j in known {
        if j == true_object {
            continue;
        }
        let s = scores[j as usize];
        if s > target {
            higher -= 1;
        } else if s == target {
            ties -= 1;
        }
    }
    1.0 + higher as f64 + ties as f64 / 2.0
}

fn check_compatible<S: Scorer + ?Sized>(scorer: &S, graph: &KnowledgeGraph) -> Result<()> {
    if scorer.num_entities() != graph.num_entities()
        || scorer.num_relation_vectors() != 2 * graph.num_relations()
    {
        return Err(Error::ShapeMismatch(format!(
            "model has {} entities / {} relation vectors, graph has {} / {}",
            scorer.num_entities(),
            scorer.num_relation_vectors(),
            graph.num_entities(),
            2 * graph.num_relations()
        )));
    }
    Ok(())
}

fn query(t: Triple, direction: Direction, graph: &KnowledgeGraph) -> Triple {
    match direction {
        Direction::Object => t,
        Direction::Subject => t.inverse(graph.num_relations()),
    }
}

fn rank_with_buffer<S: Scorer + ?Sized>(
    scorer: &S,
    q: Triple,
    graph: &KnowledgeGraph,
    buf: &mut [f64],
) -> f64 {
    scorer.score_objects(q.subject, q.relation, buf);
    filtered_rank(buf, q.object, graph.known_objects(q.subject, q.relation))
}

/// Filtered fractional rank of `t` for one query direction.
pub fn rank_triple<S: Scorer + ?Sized>(
    scorer: &S,
    t: Triple,
    graph: &KnowledgeGraph,
    direction: Direction,
) -> Result<f64> {
    check_compatible(scorer, graph)?;
    graph.check_triple(t)?;
    let mut buf = vec![0.0; graph.num_entities()];
    Ok(rank_with_buffer(
        scorer,
        query(t, direction, graph),
        graph,
        &mut buf,
    ))
}

/// Ranking metrics over a set of queries. Hits are percentages.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    /// Object-side and subject-side rank of each triple, interleaved.
    pub ranks: Vec<f64>,
    pub queries: usize,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<f64>) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let n = ranks.len() as f64;
        let mrr = ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n;
        let hits = |k: f64| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Ok(EvalReport {
            mrr,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
            queries: ranks.len(),
            ranks,
        })
    }

    /// `key value` lines: `mrr`, `hits1`, `hits3`, `hits10`, `queries`.
    pub fn to_key_value(&self) -> String {
        format!(
            "mrr {:.6}\nhits1 {:.4}\nhits3 {:.4}\nhits10 {:.4}\nqueries {}\n",
            self.mrr, self.hits1, self.hits3, self.hits10, self.queries
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>8} {:>8} {:>8} {:>8}",
            "MRR", "H@1", "H@3", "H@10", "queries"
        )?;
        write!(
            f,
            "{:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8}",
            100.0 * self.mrr,
            self.hits1,
            self.hits3,
            self.hits10,
            self.queries
        )
    }
}

/// Filtered MRR and Hits@{1,3,10} over both directions of every triple.
pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    triples: &[Triple],
    graph: &KnowledgeGraph,
) -> Result<EvalReport> {
    if triples.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    check_compatible(scorer, graph)?;
    for &t in triples {
        graph.check_triple(t)?;
    }
    let ne = graph.num_entities();
    let ranks: Vec<[f64; 2]> = triples
        .par_iter()
        .map_init(
            || vec![0.0; ne],
            |buf, &t| {
                [Direction::Object, Direction::Subject]
                    .map(|d| rank_with_buffer(scorer, query(t, d, graph), graph, buf))
            },
        )
        .collect();
    EvalReport::from_ranks(ranks.into_iter().flatten().collect())
}

/// [`evaluate`] on the summed scores of `models`.
pub fn evaluate_ensemble<S: Scorer>(
    models: &[S],
    triples: &[Triple],
    graph: &KnowledgeGraph,
) -> Result<EvalReport> {
    let members: Vec<&S> = models.iter().collect();
    evaluate(&Ensemble::new(members)?, triples, graph)
}
