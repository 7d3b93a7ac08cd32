//! Single-threaded score throughput: float CP against XNOR/popcount B-CP.
//!
//! Each point draws a random dense model, binarizes it, and times
//! `repetitions` scores of the same random triples through both kernels.
//! Timings are medians over trials after one untimed warmup pass.

use std::hint::black_box;
use std::time::Instant;

use bcp_core::packed::words_for;
use bcp_core::train::init_factors;
use bcp_core::{binarize_factors, DenseFactors, PackedFactors, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scores per trial in the reference measurement.
pub const PAPER_REPETITIONS: usize = 100_000;
pub const MIN_TRIALS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Scores per trial.
    pub repetitions: usize,
    /// Timed trials per point; at least [`MIN_TRIALS`].
    pub trials: usize,
    pub entities: usize,
    pub relations: usize,
    pub delta: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: PAPER_REPETITIONS,
            trials: MIN_TRIALS,
            entities: 1000,
            relations: 10,
            delta: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub dim: usize,
    pub float_ns: f64,
    pub packed_ns: f64,
    pub speedup: f64,
    /// Median cost of the loop with an empty kernel.
    pub empty_ns: f64,
    pub float_checksum: f64,
    pub packed_checksum: f64,
}

impl BenchRow {
    /// Loop overhead as a fraction of the cheaper kernel.
    pub fn overhead_fraction(&self) -> f64 {
        self.empty_ns / self.float_ns.min(self.packed_ns)
    }
}

/// A model pair and the triples to score.
pub struct Workload {
    pub dense: DenseFactors,
    pub packed: PackedFactors,
    pub triples: Vec<Triple>,
}

impl Workload {
    pub fn new(dim: usize, cfg: &BenchConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ dim as u64);
        let dense = init_factors(cfg.entities, cfg.relations, dim, &mut rng);
        let packed = binarize_factors(&dense, cfg.delta).expect("positive delta");
        let ne = cfg.entities as u32;
        let nr = 2 * cfg.relations as u32;
        let triples = (0..cfg.repetitions)
            .map(|_| {
                Triple::new(
                    rng.random_range(0..ne),
                    rng.random_range(0..ne),
                    rng.random_range(0..nr),
                )
            })
            .collect();
        Workload {
            dense,
            packed,
            triples,
        }
    }
}

/// One timed pass: `(elapsed ns, checksum)`.
fn time_pass(triples: &[Triple], mut kernel: impl FnMut(Triple) -> f64) -> (f64, f64) {
    let start = Instant::now();
    let mut sum = 0.0;
    for &t in triples {
        sum += kernel(black_box(t));
    }
    let elapsed = start.elapsed().as_nanos() as f64;
    (elapsed, black_box(sum))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median ns per score and the checksum, which must agree across trials.
fn measure(triples: &[Triple], trials: usize, mut kernel: impl FnMut(Triple) -> f64) -> (f64, f64) {
    let (_, checksum) = time_pass(triples, &mut kernel);
    let mut times = Vec::with_capacity(trials);
    for _ in 0..trials {
        let (ns, sum) = time_pass(triples, &mut kernel);
        assert_eq!(
            sum.to_bits(),
            checksum.to_bits(),
            "kernel is not deterministic"
        );
        times.push(ns / triples.len() as f64);
    }
    (median(times), checksum)
}

pub fn bench_point(dim: usize, cfg: &BenchConfig) -> BenchRow {
    let w = Workload::new(dim, cfg);
    let trials = cfg.trials.max(MIN_TRIALS);
    let (empty_ns, _) = measure(&w.triples, trials, |t| t.subject as f64);
    let (float_ns, float_checksum) = measure(&w.triples, trials, |t| w.dense.score_unchecked(t));
    let (packed_ns, packed_checksum) = measure(&w.triples, trials, |t| w.packed.score_unchecked(t));
    BenchRow {
        dim,
        float_ns,
        packed_ns,
        speedup: float_ns / packed_ns,
        empty_ns,
        float_checksum,
        packed_checksum,
    }
}

/// One row per dimension, measured in order on the calling thread.
pub fn bench_scores(dims: &[usize], cfg: &BenchConfig) -> Vec<BenchRow> {
    pin_to_current_cpu();
    dims.iter()
        .map(|&d| {
            let row = bench_point(d, cfg);
            log::debug!(
                "D={d} float={:.1}ns packed={:.1}ns",
                row.float_ns,
                row.packed_ns
            );
            row
        })
        .collect()
}

/// `dmin, dmin + step, …` up to and including `dmax`.
pub fn sweep(dmin: usize, dmax: usize, step: usize) -> Vec<usize> {
    (dmin..=dmax).step_by(step.max(1)).collect()
}

/// Keep the thread on one CPU where the OS supports it.
#[cfg(target_os = "linux")]
fn pin_to_current_cpu() {
    // SAFETY: plain libc calls on a zeroed, correctly sized cpu_set_t.
    unsafe {
        let cpu = libc::sched_getcpu();
        if cpu < 0 {
            return;
        }
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu as usize, &mut set);
        if libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) != 0 {
            log::debug!("could not pin benchmark thread");
        }
    }
}

#[cfg(not(target_os = "linux"))]
fn pin_to_current_cpu() {}

pub fn to_tsv(rows: &[BenchRow]) -> String {
    let mut s = String::from("D\tfloat_ns\tpacked_ns\tspeedup\n");
    for r in rows {
        s += &format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\n",
            r.dim, r.float_ns, r.packed_ns, r.speedup
        );
    }
    s
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("dim,words,float_ns,packed_ns,speedup,empty_ns\n");
    for r in rows {
        s += &format!(
            "{},{},{:.3},{:.3},{:.3},{:.3}\n",
            r.dim,
            words_for(r.dim),
            r.float_ns,
            r.packed_ns,
            r.speedup,
            r.empty_ns
        );
    }
    s
}

/// Coefficient of determination of a least-squares line `y ~ x`.
pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy * sxy / (sxx * syy)
}

/// `(R² against word count, R² against D)` for the packed timings.
pub fn packed_fit(rows: &[BenchRow]) -> (f64, f64) {
    let y: Vec<f64> = rows.iter().map(|r| r.packed_ns).collect();
    let words: Vec<f64> = rows.iter().map(|r| words_for(r.dim) as f64).collect();
    let dims: Vec<f64> = rows.iter().map(|r| r.dim as f64).collect();
    (r_squared(&words, &y), r_squared(&dims, &y))
}
