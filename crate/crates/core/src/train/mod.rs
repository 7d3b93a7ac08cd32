//! SGD training of dense CP and binarized CP under logistic loss with
//! object-corruption negative sampling.
//!
//! Every epoch shuffles the (augmented) train triples and, for each positive,
//! takes one step on it and one on each freshly drawn negative. Validation
//! filtered MRR is checked every `eval_every` epochs and the best checkpoint
//! is kept.

mod grad;
mod loss;
mod sampling;

use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseFactors;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::kg::KnowledgeGraph;
use crate::packed::{binarize_factors, PackedFactors};

pub use grad::{
    binarized_theta, example_objective, grad_rows_bcp, grad_rows_dense, Lambdas, RowGradients,
};
pub use loss::{logistic_loss, loss_slope, sigmoid, softplus};
pub use sampling::{corrupt_object, init_bound, init_factors, sample_negatives};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Real-valued CP.
    Dense,
    /// Binarized CP trained with the straight-through estimator.
    Binarized,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dense => "cp",
            Mode::Binarized => "bcp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub learning_rate: f64,
    pub lambdas: Lambdas,
    /// Quantization scale `Δ`; required in binarized mode.
    pub delta: Option<f64>,
    pub negatives: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Epochs between validation checks.
    pub eval_every: usize,
}

impl Default for Hyperparams {
    /// The WN18RR optimum: D = 400, η = 0.05, λ = 1e-4, Δ = 0.5, 5 negatives,
    /// 1000 epochs.
    fn default() -> Self {
        Hyperparams {
            dim: 400,
            learning_rate: 0.05,
            lambdas: Lambdas::uniform(1e-4),
            delta: Some(0.5),
            negatives: 5,
            max_epochs: 1000,
            seed: 0,
            eval_every: 50,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self, mode: Mode) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparam(m));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        let l = self.lambdas;
        if [l.subject, l.object, l.relation]
            .iter()
            .any(|x| !(*x >= 0.0 && x.is_finite()))
        {
            return bad(format!("L2 weights must be >= 0, got {l:?}"));
        }
        if self.eval_every == 0 {
            return bad("eval_every must be >= 1".into());
        }
        match (mode, self.delta) {
            (Mode::Binarized, None) => bad("binarized training needs delta".into()),
            (_, Some(d)) if !(d > 0.0 && d.is_finite()) => {
                bad(format!("delta must be positive, got {d}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub mode: Mode,
}

/// Per-epoch training objective and, on checkpoint epochs, validation MRR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of `E_ijk` over every positive and negative example of the epoch.
    pub loss: f64,
    pub val_mrr: Option<f64>,
}

impl fmt::Display for EpochRecord {
    /// `epoch \t loss \t val_mrr` (last field empty off-checkpoint).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{:.6}\t", self.epoch, self.loss)?;
        if let Some(m) = self.val_mrr {
            write!(f, "{m:.6}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the retained checkpoint; 0 is the initialization.
    pub best_epoch: usize,
    pub best_val_mrr: Option<f64>,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation checkpoint (last epoch if never validated).
    pub factors: DenseFactors,
    /// Binarized best checkpoint, in binarized mode.
    pub packed: Option<PackedFactors>,
    pub log: TrainLog,
}

pub fn train(config: &TrainConfig, graph: &KnowledgeGraph) -> Result<TrainOutcome> {
    train_with(config, graph, |_| {})
}

/// [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    config: &TrainConfig,
    graph: &KnowledgeGraph,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let hp = &config.hyper;
    hp.validate(config.mode)?;
    if !graph.is_augmented() {
        log::warn!("training on a graph without inverse triples");
    }
    let start = Instant::now();
    let delta = match config.mode {
        Mode::Dense => None,
        Mode::Binarized => hp.delta,
    };
    let ne = graph.num_entities();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut factors = init_factors(ne, graph.num_relations(), hp.dim, &mut rng);
    let mut order = graph.train().to_vec();

    let mut epochs = Vec::with_capacity(hp.max_epochs);
    let mut best: Option<(usize, f64, DenseFactors)> = None;

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &t in &order {
            total += grad::sgd_step(&mut factors, t, 1.0, hp.learning_rate, hp.lambdas, delta);
            for _ in 0..hp.negatives {
                let neg = corrupt_object(t, ne, &mut rng);
                total +=
                    grad::sgd_step(&mut factors, neg, 0.0, hp.learning_rate, hp.lambdas, delta);
            }
        }
        if !total.is_finite() || !factors.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }

        let checkpoint = epoch % hp.eval_every == 0 || epoch == hp.max_epochs;
        let val_mrr = if checkpoint && !graph.valid().is_empty() {
            Some(validation_mrr(&factors, delta, graph)?)
        } else {
            None
        };
        if let Some(mrr) = val_mrr {
            if best.as_ref().is_none_or(|b| mrr > b.1) {
                best = Some((epoch, mrr, factors.clone()));
            }
        }
        let record = EpochRecord {
            epoch,
            loss: total,
            val_mrr,
        };
        log::debug!("{record}");
        on_epoch(&record);
        epochs.push(record);
    }

    let (best_epoch, best_val_mrr, factors) = match best {
        Some((e, m, f)) => (e, Some(m), f),
        None => (hp.max_epochs, None, factors),
    };
    let packed = match delta {
        Some(d) => Some(binarize_factors(&factors, d)?),
        None => None,
    };
    Ok(TrainOutcome {
        factors,
        packed,
        log: TrainLog {
            epochs,
            best_epoch,
            best_val_mrr,
            elapsed: start.elapsed(),
        },
    })
}

fn validation_mrr(
    factors: &DenseFactors,
    delta: Option<f64>,
    graph: &KnowledgeGraph,
) -> Result<f64> {
    let report = match delta {
        None => evaluate(factors, graph.valid(), graph)?,
        Some(d) => evaluate(&binarize_factors(factors, d)?, graph.valid(), graph)?,
    };
    Ok(report.mrr)
}
