//! Clustered random knowledge graphs with known structure.
//!
//! Entities fall into equal clusters and every relation permutes the
//! clusters, so `(i, r, j)` can only hold when `j` lies in the
//! target of `i`'s cluster under `r`. Observed triples are a random subset of
//! those candidates; negatives put the object in any other cluster and are
//! therefore false by construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kg::RawTriple;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub clusters: usize,
    pub cluster_size: usize,
    pub relations: usize,
    /// Observed objects per (subject, relation), drawn from the target cluster.
    pub objects_per_query: usize,
    pub valid_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            clusters: 8,
            cluster_size: 10,
            relations: 4,
            objects_per_query: 5,
            valid_fraction: 0.1,
            test_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub train: Vec<RawTriple>,
    pub valid: Vec<RawTriple>,
    pub test: Vec<RawTriple>,
    /// One corrupted triple per valid triple.
    pub valid_negatives: Vec<RawTriple>,
    /// One corrupted triple per test triple.
    pub test_negatives: Vec<RawTriple>,
    /// `targets[r][c]` is the cluster that relation `r` maps cluster `c` to.
    pub targets: Vec<Vec<usize>>,
}

pub fn entity_name(i: usize) -> String {
    format!("e{i}")
}

pub fn relation_name(r: usize) -> String {
    format!("r{r}")
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticGraph> {
    if cfg.clusters < 2 || cfg.cluster_size == 0 || cfg.relations == 0 {
        return Err(Error::InvalidHyperparam(
            "need >= 2 clusters, non-empty clusters and >= 1 relation".into(),
        ));
    }
    if cfg.objects_per_query == 0 || cfg.objects_per_query > cfg.cluster_size {
        return Err(Error::InvalidHyperparam(format!(
            "objects_per_query must be in 1..={}",
            cfg.cluster_size
        )));
    }
    let held_out = cfg.valid_fraction + cfg.test_fraction;
    if !(cfg.valid_fraction >= 0.0 && cfg.test_fraction >= 0.0 && held_out < 1.0) {
        return Err(Error::InvalidHyperparam(
            "held-out fractions must sum below 1".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.clusters * cfg.cluster_size;
    let targets: Vec<Vec<usize>> = (0..cfg.relations)
        .map(|_| {
            let mut p: Vec<usize> = (0..cfg.clusters).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();

    let mut all = Vec::new();
    for (r, target) in targets.iter().enumerate() {
        for i in 0..n {
            let base = target[i / cfg.cluster_size] * cfg.cluster_size;
            let mut members: Vec<usize> = (base..base + cfg.cluster_size).collect();
            members.shuffle(&mut rng);
            for &j in &members[..cfg.objects_per_query] {
                all.push((i, r, j));
            }
        }
    }
    all.shuffle(&mut rng);

    let n_valid = (cfg.valid_fraction * all.len() as f64).round() as usize;
    let n_test = (cfg.test_fraction * all.len() as f64).round() as usize;
    let raw = |&(i, r, j): &(usize, usize, usize)| {
        RawTriple::new(&entity_name(i), &relation_name(r), &entity_name(j))
    };
    let valid_ids = &all[..n_valid];
    let test_ids = &all[n_valid..n_valid + n_test];

    let mut corrupt = |ids: &[(usize, usize, usize)]| -> Vec<RawTriple> {
        ids.iter()
            .map(|&(i, r, _)| {
                let good = targets[r][i / cfg.cluster_size];
                let j = loop {
                    let j = rng.random_range(0..n);
                    if j / cfg.cluster_size != good {
                        break j;
                    }
                };
                raw(&(i, r, j))
            })
            .collect()
    };
    let valid_negatives = corrupt(valid_ids);
    let test_negatives = corrupt(test_ids);

    Ok(SyntheticGraph {
        train: all[n_valid + n_test..].iter().map(raw).collect(),
        valid: valid_ids.iter().map(raw).collect(),
        test: test_ids.iter().map(raw).collect(),
        valid_negatives,
        test_negatives,
        targets,
    })
}

impl SyntheticGraph {
    /// Whether `(i, r, j)` is consistent with the cluster structure.
    pub fn is_plausible(&self, cfg: &SyntheticConfig, i: usize, r: usize, j: usize) -> bool {
        self.targets[r][i / cfg.cluster_size] == j / cfg.cluster_size
    }

    /// Distinct entity names used by any split.
    pub fn entity_count(&self) -> usize {
        self.train
            .iter()
            .chain(&self.valid)
            .chain(&self.test)
            .flat_map(|t| [t.subject.as_str(), t.object.as_str()])
            .collect::<HashSet<_>>()
            .len()
    }
}
