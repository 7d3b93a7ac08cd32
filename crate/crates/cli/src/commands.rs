use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcp_bench::{bench_scores, packed_fit, sweep, to_csv, to_tsv, BenchConfig};
use bcp_core::io::{write_atomic, Model};
use bcp_core::kg::{read_triples_file, RawTriple};
use bcp_core::{
    binarize_factors, classify, evaluate_ensemble, train_with, tune_threshold, Hyperparams,
    KnowledgeGraph, Lambdas, Mode, Split, TrainConfig, Triple, Vocab, VqFactors,
};

use crate::{
    BenchArgs, ClassifyArgs, Cli, Command, EvalArgs, ModeArg, PackArgs, QuantizeArgs, SizeArgs,
    SplitArg, TrainArgs,
};

/// Failure that is not the caller's fault; exits with status 2.
#[derive(Debug)]
pub struct Internal(pub String);

impl std::fmt::Display for Internal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Internal {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<Internal>()) {
        2
    } else {
        1
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Internal(format!("thread pool: {e}")))?;
    }
    let threads = rayon::current_num_threads();
    match cli.command {
        Command::Train(a) => train(a, threads),
        Command::Eval(a) => eval(a),
        Command::Pack(a) => pack(a),
        Command::QuantizeVq(a) => quantize_vq(a),
        Command::Classify(a) => classify_cmd(a),
        Command::Bench(a) => bench(a),
        Command::Size(a) => size(a),
    }
}

/// `path` with `.suffix` appended to the file name.
pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// `key \t value` lines beside an output.
struct Manifest(String);

impl Manifest {
    fn new(command: &str) -> Self {
        let mut m = Manifest(String::new());
        m.add("command", command);
        m.add("version", env!("CARGO_PKG_VERSION"));
        m
    }

    fn add(&mut self, key: &str, value: impl std::fmt::Display) -> &mut Self {
        let _ = writeln!(self.0, "{key}\t{value}");
        self
    }

    fn save(&self, output: &Path) -> Result<()> {
        let path = sidecar(output, "manifest");
        write_atomic(&path, self.0.as_bytes())
            .with_context(|| format!("writing {}", path.display()))
    }
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn load_graph(dir: &Path, augment: bool) -> Result<KnowledgeGraph> {
    KnowledgeGraph::load_dir(dir, augment)
        .with_context(|| format!("loading dataset {}", dir.display()))
}

fn write_vocabs(graph: &KnowledgeGraph, model_path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    graph.write_entity_tsv(&mut buf)?;
    write_atomic(&sidecar(model_path, "entities.tsv"), &buf)?;
    buf.clear();
    graph.write_relation_tsv(&mut buf)?;
    write_atomic(&sidecar(model_path, "relations.tsv"), &buf)?;
    Ok(())
}

/// Entity and relation-vector vocabularies stored beside a model, if any.
fn read_vocabs(model_path: &Path) -> Result<Option<(Vocab, Vocab)>> {
    let ents = sidecar(model_path, "entities.tsv");
    let rels = sidecar(model_path, "relations.tsv");
    if !ents.exists() || !rels.exists() {
        return Ok(None);
    }
    let read = |p: &Path| -> Result<Vocab> {
        Vocab::read_tsv(fs::File::open(p)?).with_context(|| format!("reading {}", p.display()))
    };
    Ok(Some((read(&ents)?, read(&rels)?)))
}

fn copy_vocabs(from: &Path, to: &Path) -> Result<()> {
    for suffix in ["entities.tsv", "relations.tsv"] {
        let src = sidecar(from, suffix);
        if src.exists() {
            fs::copy(&src, sidecar(to, suffix))
                .with_context(|| format!("copying {}", src.display()))?;
        }
    }
    Ok(())
}

fn check_model_matches(model: &Model, path: &Path, graph: &KnowledgeGraph) -> Result<()> {
    if model.num_entities() != graph.num_entities()
        || model.num_relations() != graph.num_relations()
    {
        bail!(
            "{} has {} entities and {} relations, the dataset {} and {}",
            path.display(),
            model.num_entities(),
            model.num_relations(),
            graph.num_entities(),
            graph.num_relations()
        );
    }
    if let Some((ents, rels)) = read_vocabs(path)? {
        if ents.names() != graph.entities().names() || rels.names() != graph.relation_vector_names()
        {
            bail!("{} was trained with a different vocabulary", path.display());
        }
    }
    Ok(())
}

fn train(a: TrainArgs, threads: usize) -> Result<()> {
    let graph = load_graph(&a.data, true)?;
    let mode = match a.mode {
        ModeArg::Cp => Mode::Dense,
        ModeArg::Bcp => Mode::Binarized,
    };
    let config = TrainConfig {
        hyper: Hyperparams {
            dim: a.dim,
            learning_rate: a.lr,
            lambdas: Lambdas::uniform(a.l2),
            delta: (mode == Mode::Binarized).then_some(a.delta),
            negatives: a.neg,
            max_epochs: a.epochs,
            seed: a.seed,
            eval_every: a.eval_every,
        },
        mode,
    };
    config.hyper.validate(mode)?;
    log::info!(
        "{} entities, {} relations, {} training triples (with inverses)",
        graph.num_entities(),
        graph.num_relations(),
        graph.train().len()
    );

    let log_path = sidecar(&a.out, "log.tsv");
    let mut log_file = BufWriter::new(
        fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    writeln!(log_file, "epoch\tloss\tval_mrr")?;
    let mut write_err = None;
    let outcome = train_with(&config, &graph, |rec| {
        log::info!(
            "epoch {}\tloss {:.4}{}",
            rec.epoch,
            rec.loss,
            rec.val_mrr
                .map(|m| format!("\tval_mrr {m:.4}"))
                .unwrap_or_default()
        );
        if let Err(e) = writeln!(log_file, "{rec}").and_then(|_| log_file.flush()) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    log_file.flush()?;

    let model = match (&outcome.packed, mode) {
        (Some(p), Mode::Binarized) => {
            let latent = sidecar(&a.out, "latent");
            Model::Dense(outcome.factors.clone()).save(&latent)?;
            write_vocabs(&graph, &latent)?;
            Model::Packed(p.clone())
        }
        _ => Model::Dense(outcome.factors.clone()),
    };
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    write_vocabs(&graph, &a.out)?;

    let log = &outcome.log;
    let mut m = Manifest::new("train");
    m.add("data", a.data.display())
        .add("mode", mode)
        .add("dim", a.dim)
        .add("lr", a.lr)
        .add("l2", a.l2)
        .add(
            "delta",
            config
                .hyper
                .delta
                .map(|d| d.to_string())
                .unwrap_or_else(|| "none".into()),
        )
        .add("neg", a.neg)
        .add("epochs", a.epochs)
        .add("seed", a.seed)
        .add("eval_every", a.eval_every)
        .add("threads", threads)
        .add("out", a.out.display())
        .add("entities", graph.num_entities())
        .add("relations", graph.num_relations())
        .add("best_epoch", log.best_epoch)
        .add(
            "best_val_mrr",
            log.best_val_mrr
                .map(|x| format!("{x:.6}"))
                .unwrap_or_else(|| "none".into()),
        )
        .add("elapsed_s", format!("{:.3}", log.elapsed.as_secs_f64()));
    m.save(&a.out)?;
    println!("best_epoch {}", log.best_epoch);
    if let Some(mrr) = log.best_val_mrr {
        println!("best_val_mrr {mrr:.6}");
    }
    println!("model {}", a.out.display());
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let graph = load_graph(&a.data, false)?;
    let models = a
        .model
        .iter()
        .map(|p| {
            let m = load_model(p)?;
            check_model_matches(&m, p, &graph)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let split = match a.split {
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    };
    let report = evaluate_ensemble(&models, graph.split(split), &graph)?;
    println!("{report}");
    print!("{}", report.to_key_value());
    Ok(())
}

fn dense_input(path: &Path) -> Result<bcp_core::DenseFactors> {
    match load_model(path)? {
        Model::Dense(f) => Ok(f),
        _ => bail!("{} is not a dense model", path.display()),
    }
}

fn pack(a: PackArgs) -> Result<()> {
    let dense = dense_input(&a.model)?;
    let packed = binarize_factors(&dense, a.delta)?;
    let model = Model::Packed(packed);
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    copy_vocabs(&a.model, &a.out)?;
    let mut m = Manifest::new("pack");
    m.add("model", a.model.display())
        .add("delta", a.delta)
        .add("out", a.out.display());
    m.save(&a.out)?;
    print!("{}", model.size_report().to_key_value());
    Ok(())
}

fn quantize_vq(a: QuantizeArgs) -> Result<()> {
    let dense = dense_input(&a.model)?;
    let vq = VqFactors::from_dense(&dense)?;
    let [sa, sb, sc] = vq.alphas;
    let model = Model::Vq(vq);
    model
        .save(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    copy_vocabs(&a.model, &a.out)?;
    let mut m = Manifest::new("quantize-vq");
    m.add("model", a.model.display())
        .add("out", a.out.display())
        .add("alpha_subject", sa)
        .add("alpha_object", sb)
        .add("alpha_relation", sc);
    m.save(&a.out)?;
    println!("alpha_subject {sa}\nalpha_object {sb}\nalpha_relation {sc}");
    Ok(())
}

fn resolve_file(path: &Path, ents: &Vocab, rels: &Vocab) -> Result<Vec<Triple>> {
    let raw = read_triples_file(path).with_context(|| format!("reading {}", path.display()))?;
    raw.iter()
        .enumerate()
        .map(|(i, t): (usize, &RawTriple)| {
            let id = |v: &Vocab, name: &str, what: &str| {
                v.id(name).with_context(|| {
                    format!("{}:{}: unknown {what} {name:?}", path.display(), i + 1)
                })
            };
            Ok(Triple::new(
                id(ents, &t.subject, "entity")?,
                id(ents, &t.object, "entity")?,
                id(rels, &t.relation, "relation")?,
            ))
        })
        .collect()
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let (ents, rels) = read_vocabs(&a.model)?.with_context(|| {
        format!(
            "{} has no vocabulary files ({} and {})",
            a.model.display(),
            sidecar(&a.model, "entities.tsv").display(),
            sidecar(&a.model, "relations.tsv").display()
        )
    })?;
    if ents.len() != model.num_entities() || rels.len() != 2 * model.num_relations() {
        bail!("vocabulary files do not match {}", a.model.display());
    }
    let threshold = match (a.threshold, a.tune) {
        (Some(t), _) => t,
        (None, Some(files)) => {
            let pos = resolve_file(&files[0], &ents, &rels)?;
            let neg = resolve_file(&files[1], &ents, &rels)?;
            let th = tune_threshold(&model, &pos, &neg)?;
            println!("tuned_threshold {}", th.value);
            println!("tuning_accuracy {:.4}", th.accuracy);
            th.value
        }
        (None, None) => bail!("give --threshold or --tune"),
    };
    let pos = resolve_file(&a.pos, &ents, &rels)?;
    let neg = resolve_file(&a.neg, &ents, &rels)?;
    let acc = classify(&model, &pos, &neg, threshold)?;
    println!("threshold {threshold}");
    println!("accuracy {acc:.4}");
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    if a.dmin == 0 || a.dmin > a.dmax || a.step == 0 {
        bail!("need 1 <= dmin <= dmax and step >= 1");
    }
    if a.reps == 0 {
        bail!("--reps must be >= 1");
    }
    let cfg = BenchConfig {
        repetitions: a.reps,
        trials: a.trials,
        seed: a.seed,
        ..BenchConfig::default()
    };
    let rows = bench_scores(&sweep(a.dmin, a.dmax, a.step), &cfg);
    print!("{}", to_tsv(&rows));
    let worst = rows
        .iter()
        .map(|r| r.overhead_fraction())
        .fold(0.0, f64::max);
    log::info!("largest loop overhead {:.2}% of a kernel", 100.0 * worst);
    if rows.len() > 2 {
        let (words, dims) = packed_fit(&rows);
        log::info!("packed timing R^2: {words:.3} vs word count, {dims:.3} vs D");
    }
    if let Some(csv) = &a.csv {
        write_atomic(csv, to_csv(&rows).as_bytes())
            .with_context(|| format!("writing {}", csv.display()))?;
        let mut m = Manifest::new("bench");
        m.add("dmin", a.dmin)
            .add("dmax", a.dmax)
            .add("step", a.step)
            .add("reps", a.reps)
            .add("trials", cfg.trials.max(bcp_bench::MIN_TRIALS))
            .add("seed", a.seed)
            .add("entities", cfg.entities)
            .add("relations", cfg.relations)
            .add("delta", cfg.delta);
        m.save(csv)?;
    }
    Ok(())
}

fn size(a: SizeArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    print!("{}", model.size_report().to_key_value());
    let on_disk = fs::metadata(&a.model)?.len();
    println!("file_bytes_on_disk {on_disk}");
    Ok(())
}
