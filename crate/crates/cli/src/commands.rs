//! Dataset generation, training, sweeps and exports.

use std::path::Path;

use anyhow::{bail, Context};
use bowslab::container::{self, Split};
use bowslab::corpus::{self, SegmentMode, StopwordList};
use bowslab::diagnostics::geometry::antipodal_pairs;
use bowslab::linalg::{offdiag_frobenius, second_moment_sparse, sym_eig, top_m_projector, MomentMode};
use bowslab::models::checkpoint::{self, Checkpoint, Model};
use bowslab::models::{train_ae, train_mlp, Activation, AeBatch, MlpClassifier, MlpShape, OptimizerKind, Schedule, TiedAutoencoder, TrainConfig};
use bowslab::report::{export_matrix, Cell, Table};
use bowslab::synth::{self, CurveKind, LatentCurveSpec, PhaseSelection};
use bowslab::tasks;
use bowslab::SparseBinary;
use ndarray::Array2;

use crate::config::{key, parse_grid, required, Key, Params};
use crate::run::Run;

pub const BUILD_CORPUS: &[Key] = &[
    required("input", "raw text file"),
    key("segment", "line", "record boundaries: line or paragraph"),
    key("vocab", "2000", "vocabulary size"),
    key("context", "20", "records per window"),
    key("stride", "1", "records between window starts"),
    key("val-fraction", "0.1", "trailing share of records held out for validation"),
    key("stopwords", "builtin", "builtin, none, or a file with one word per line"),
    key("max-records", "0", "truncate the record list (0 keeps all)"),
    key("seed", "0", "recorded in the run name only; the build is deterministic"),
];

pub const GEN_SYNTH: &[Key] = &[
    key("kind", "cyclic", "cyclic, figure8 or sphere"),
    key("features", "12", "number of binary features"),
    key("n", "100000", "training samples"),
    key("n-val", "10000", "validation samples"),
    key("sharpness", "5", "logit gain β"),
    key("base-logit", "-2", "logit offset b"),
    key("angle-noise", "0.1", "latent angle noise σθ (radians)"),
    key("phase", "uniform", "uniform or cycling month selection"),
    key("seed", "42", "random seed"),
];

pub const GEN_TASK: &[Key] = &[
    key("task", "modadd", "modadd or map"),
    key("modulus", "113", "modular-addition modulus"),
    key("train-fraction", "0.5", "share of all modular pairs used for training"),
    key("cities", "data/us_cities_top1000.csv", "city table (map task)"),
    key("top-k", "1000", "most populated cities kept (map task)"),
    key("n-train", "100000", "training pairs (map task)"),
    key("n-val", "10000", "validation pairs (map task)"),
    key("seed", "42", "random seed"),
];

const TRAIN_KEYS: [Key; 7] = [
    key("epochs", "20", "passes over the training set"),
    key("batch", "1024", "mini-batch size"),
    key("lr", "0.001", "base learning rate"),
    key("schedule", "cosine", "cosine or constant"),
    key("optimizer", "adam", "adam or adamw (any weight decay implies adamw)"),
    key("weight-decay", "0", "decoupled weight decay"),
    key("seed", "42", "initialization and shuffling seed"),
];

pub fn train_ae_schema() -> Vec<Key> {
    let mut s = vec![
        required("data", "training dataset (.bows)"),
        key("val", "", "validation dataset (.bows)"),
        key("latent", "200", "latent dimension m"),
        key("activation", "relu", "relu or linear"),
    ];
    s.extend(TRAIN_KEYS);
    s
}

pub fn train_task_schema() -> Vec<Key> {
    let mut s = vec![
        required("data", "pair dataset"),
        key("embed-dim", "100", "token embedding width"),
        key("hidden", "200,200,200", "hidden layer widths"),
    ];
    s.extend(TRAIN_KEYS);
    s
}

pub fn sweep_schema() -> Vec<Key> {
    let mut s = vec![
        required("data", "training dataset (.bows)"),
        key("val", "", "validation dataset (.bows)"),
        key("grid", "latent", "swept quantity: latent or weight-decay"),
        key("values", "2..12", "grid values: a..b or a comma list"),
        key("latent", "200", "latent dimension when sweeping weight decay"),
        key("activation", "relu", "relu or linear"),
        key("group", "", "feature group for the overlap curve: months or a comma list of words/ids"),
        key("save-models", "false", "write a checkpoint per grid point"),
    ];
    s.extend(TRAIN_KEYS);
    s
}

pub const EXPORT_EMBEDDINGS: &[Key] = &[
    required("model", "checkpoint"),
    key("data", "", "dataset whose vocabulary or token names label the rows"),
    key("seed", "0", "recorded in the run name only"),
];

pub fn read_bows(path: &Path) -> anyhow::Result<corpus::BowsDataset> {
    container::load_bows(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_pairs(path: &Path) -> anyhow::Result<tasks::PairDataset> {
    container::load_pairs(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<Checkpoint> {
    checkpoint::load(path).with_context(|| format!("reading {}", path.display()))
}

pub fn train_config(p: &Params) -> anyhow::Result<TrainConfig> {
    let cfg = TrainConfig {
        epochs: p.get("epochs")?,
        batch_size: p.get("batch")?,
        base_lr: p.get("lr")?,
        schedule: p.get::<Schedule>("schedule")?,
        weight_decay: p.get("weight-decay")?,
        optimizer: p.get::<OptimizerKind>("optimizer")?,
        seed: p.get("seed")?,
        shuffle: true,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn build_corpus(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let input = p.require_path("input")?;
    let raw = std::fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
    let mode = match p.str("segment") {
        "line" => SegmentMode::Line,
        "paragraph" => SegmentMode::Paragraph,
        other => bail!(crate::config::ConfigError(format!("unknown segment mode `{other}`"))),
    };
    let mut records = corpus::segment_records(&raw, mode)?;
    let max: usize = p.get("max-records")?;
    if max > 0 {
        records.truncate(max);
    }
    let stopwords = match p.str("stopwords") {
        "builtin" => StopwordList::english(),
        "none" => StopwordList::none(),
        path => StopwordList::from_file(Path::new(path))?,
    };
    let frac: f64 = p.get("val-fraction")?;
    if !(0.0..1.0).contains(&frac) {
        bail!(crate::config::ConfigError(format!("val-fraction must lie in [0, 1), got {frac}")));
    }
    let n_val = (records.len() as f64 * frac).round() as usize;
    let (train_records, val_records) = records.split_at(records.len() - n_val);
    let (context, stride): (usize, usize) = (p.get("context")?, p.get("stride")?);
    let build = corpus::build_vocab(train_records, p.get("vocab")?, &stopwords)?;
    let train = corpus::encode_bows(train_records, &build.vocab, context, stride, Split::Train)?;
    container::save_bows(&run.path("train.bows"), &train)?;
    run.metric("records", records.len());
    run.metric("train_records", train_records.len());
    run.metric("val_records", val_records.len());
    run.metric("train_windows", train.len());
    run.metric("dropped_windows", train.dropped_windows);
    run.metric("vocab_size", build.vocab.len());
    run.metric("vocab_short", build.short);
    if n_val > 0 {
        let val = corpus::encode_bows(val_records, &build.vocab, context, stride, Split::Validation)?;
        container::save_bows(&run.path("validation.bows"), &val)?;
        run.metric("val_windows", val.len());
    }

    let mut vocab = Table::new(["rank", "word", "record_count"]);
    for (i, (w, f)) in build.vocab.words.iter().zip(&build.vocab.frequencies).enumerate() {
        vocab.push(vec![(i + 1).into(), w.as_str().into(), Cell::Int(*f as i64)])?;
    }
    vocab.write_csv(&run.path("vocab.csv"))?;
    let hist = corpus::word_frequency_histogram(&train)?;
    let mut t = Table::new(["rank", "word", "active_samples"]);
    for (i, (w, c)) in hist.iter().enumerate() {
        t.push(vec![(i + 1).into(), w.as_str().into(), Cell::Int(*c as i64)])?;
    }
    t.write_csv(&run.path("word_frequency.csv"))?;
    let counts: Vec<u64> = hist.iter().map(|(_, c)| *c).collect();
    run.metric_f64("rank_frequency_slope", corpus::rank_frequency_slope(&counts, counts.len()));
    Ok(())
}

pub fn curve_spec(p: &Params) -> anyhow::Result<LatentCurveSpec> {
    let spec = LatentCurveSpec {
        kind: p.get::<CurveKind>("kind")?,
        num_features: p.get("features")?,
        sharpness: p.get("sharpness")?,
        base_logit: p.get("base-logit")?,
        angle_noise: p.get("angle-noise")?,
        phase: match p.str("phase") {
            "uniform" => PhaseSelection::Uniform,
            "cycling" => PhaseSelection::Cycling,
            other => bail!(crate::config::ConfigError(format!("unknown phase selection `{other}`"))),
        },
        seed: p.get("seed")?,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn gen_synth(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let spec = curve_spec(p)?;
    let train = synth::as_dataset(&spec, synth::generate(&spec, p.get("n")?)?, Split::Train);
    let val = synth::as_dataset(&spec, synth::generate_validation(&spec, p.get("n-val")?)?, Split::Validation);
    container::save_bows(&run.path("train.bows"), &train)?;
    container::save_bows(&run.path("validation.bows"), &val)?;
    let names = spec.feature_names();
    let dirs = spec.directions();
    let axes: Vec<String> = (0..dirs.ncols()).map(|k| format!("z{k}")).collect();
    export_matrix(&dirs, &run.path("directions.csv"), &axes, Some(&names))?;
    run.metric("train_samples", train.len());
    run.metric("val_samples", val.len());
    run.metric_f64("mean_active", Some(train.samples.nnz() as f64 / train.len().max(1) as f64));
    Ok(())
}

pub fn gen_task(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let seed: u64 = p.get("seed")?;
    let data = match p.str("task") {
        "modadd" => tasks::gen_modadd(p.get("modulus")?, p.get("train-fraction")?, seed)?,
        "map" => {
            let table = tasks::load_cities(&p.require_path("cities")?, p.get("top-k")?)?;
            let mut t = Table::new(["token", "name", "latitude", "longitude", "population"]);
            for (i, c) in table.cities.iter().enumerate() {
                t.push(vec![i.into(), c.name.as_str().into(), c.latitude.into(), c.longitude.into(), Cell::Int(c.population as i64)])?;
            }
            t.write_csv(&run.path("cities.csv"))?;
            run.metric("cities", table.cities.len());
            run.metric("cities_short", table.short);
            tasks::gen_map_pairs(&table, p.get("n-train")?, p.get("n-val")?, seed)?
        }
        other => bail!(crate::config::ConfigError(format!("unknown task `{other}`"))),
    };
    container::save_pairs(&run.path("pairs.dat"), &data)?;
    run.metric("train_pairs", data.indices(Split::Train).len());
    run.metric("val_pairs", data.indices(Split::Validation).len());
    run.metric("classes", data.num_classes);
    Ok(())
}

fn save_checkpoint(run: &Run, name: &str, model: Model, p: &Params) -> anyhow::Result<()> {
    let ckpt = Checkpoint { model, config: p.echo(), seed: p.get("seed")? };
    checkpoint::save(&run.path(name), &ckpt)?;
    Ok(())
}

fn loss_table(history: &[f64]) -> anyhow::Result<Table> {
    let mut t = Table::new(["epoch", "loss"]);
    for (e, l) in history.iter().enumerate() {
        t.push(vec![(e + 1).into(), (*l).into()])?;
    }
    Ok(t)
}

fn full_loss(ae: &TiedAutoencoder, data: &SparseBinary) -> anyhow::Result<f64> {
    // Chunked so the dense batch stays small for wide vocabularies.
    let mut total = 0.0;
    let rows: Vec<usize> = (0..data.rows()).collect();
    for chunk in rows.chunks(4096) {
        total += ae.loss(&AeBatch::sparse(data, chunk))? * chunk.len() as f64;
    }
    Ok(total / data.rows().max(1) as f64)
}

fn load_val(p: &Params, d: usize) -> anyhow::Result<Option<SparseBinary>> {
    p.path("val")
        .map(|path| {
            let v = read_bows(&path)?;
            if v.samples.cols() != d {
                bail!(bowslab::Error::Dimension(format!("validation has {} features, training {d}", v.samples.cols())));
            }
            Ok(v.samples)
        })
        .transpose()
}

struct AeOutcome {
    model: TiedAutoencoder,
    history: Vec<f64>,
}

fn fit_ae(data: &SparseBinary, latent: usize, activation: Activation, cfg: &TrainConfig) -> anyhow::Result<AeOutcome> {
    let mut model = TiedAutoencoder::init(latent, data.cols(), activation, cfg.seed)?;
    let history = train_ae(&mut model, data, cfg)?.into_result()?;
    Ok(AeOutcome { model, history })
}

fn record_ae_metrics(run: &mut Run, prefix: &str, out: &AeOutcome, val: Option<&SparseBinary>) -> anyhow::Result<()> {
    let w = &out.model.w;
    run.metric_f64(&format!("{prefix}final_train_loss"), out.history.last().copied());
    run.metric_f64(&format!("{prefix}w_frobenius_sq"), Some(w.iter().map(|x| x * x).sum()));
    if let Some(v) = val {
        run.metric_f64(&format!("{prefix}val_loss"), Some(full_loss(&out.model, v)?));
    }
    Ok(())
}

pub fn train_ae_cmd(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let data = read_bows(&p.require_path("data")?)?;
    let val = load_val(p, data.samples.cols())?;
    let cfg = train_config(p)?;
    let out = fit_ae(&data.samples, p.get("latent")?, p.get::<Activation>("activation")?, &cfg)?;
    loss_table(&out.history)?.write_csv(&run.path("loss.csv"))?;
    record_ae_metrics(run, "", &out, val.as_ref())?;
    run.metric("optimizer", cfg.effective_optimizer().name());
    if data.vocab.len() <= GRAM_EXPORT_LIMIT {
        let g = out.model.gram();
        export_matrix(&g, &run.path("gram.csv"), &data.vocab.words, Some(&data.vocab.words))?;
    }
    save_checkpoint(run, "model.ckpt", Model::Autoencoder(out.model), p)
}

/// Full Gram matrices are only written for narrow inputs.
const GRAM_EXPORT_LIMIT: usize = 256;

pub fn train_task_cmd(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let data = read_pairs(&p.require_path("data")?)?;
    let shape = MlpShape { num_tokens: data.num_tokens, embed_dim: p.get("embed-dim")?, hidden: p.list("hidden")?, num_classes: data.num_classes };
    let cfg = train_config(p)?;
    let mut model = MlpClassifier::init(&shape, cfg.seed)?;
    let history = train_mlp(&mut model, &data, &cfg)?.into_result()?;
    loss_table(&history)?.write_csv(&run.path("loss.csv"))?;
    for split in [Split::Train, Split::Validation] {
        let (pairs, labels) = data.subset(split);
        if pairs.is_empty() {
            continue;
        }
        let ev = model.evaluate(&pairs, &labels)?;
        run.metric_f64(&format!("{}_loss", split.name()), Some(ev.loss));
        run.metric_f64(&format!("{}_accuracy", split.name()), Some(ev.accuracy));
    }
    run.metric("optimizer", cfg.effective_optimizer().name());
    save_checkpoint(run, "model.ckpt", Model::Classifier(model), p)
}

/// Resolves `months`, words, or numeric ids against a vocabulary.
pub fn resolve_group(spec: &str, words: &[String]) -> anyhow::Result<(Vec<usize>, Vec<String>)> {
    let names: Vec<String> = if spec == "months" {
        synth::MONTHS.iter().map(|s| s.to_string()).collect()
    } else {
        spec.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    let mut ids = Vec::with_capacity(names.len());
    for n in &names {
        let id = match words.iter().position(|w| w == n) {
            Some(i) => i,
            None => match n.parse::<usize>() {
                Ok(i) if i < words.len() => i,
                _ => bail!(crate::config::ConfigError(format!("`{n}` is not in the vocabulary"))),
            },
        };
        ids.push(id);
    }
    let labels = ids.iter().map(|&i| words[i].clone()).collect();
    Ok((ids, labels))
}

pub fn sweep_cmd(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let data = read_bows(&p.require_path("data")?)?;
    let val = load_val(p, data.samples.cols())?;
    let base = train_config(p)?;
    let activation: Activation = p.get("activation")?;
    let grid = p.str("grid").to_string();
    let values = parse_grid(p.str("values"))?;
    let group = match p.str("group") {
        "" => None,
        g => Some(resolve_group(g, &data.vocab.words)?),
    };
    let save_models: bool = p.get("save-models")?;
    let d = data.samples.cols();
    let narrow = d <= GRAM_EXPORT_LIMIT;
    let oracle = if narrow { Some(sym_eig(&second_moment_sparse(&data.samples, MomentMode::Centered)?.matrix)?) } else { None };

    let mut summary = Table::new(["value", "latent", "weight_decay", "final_train_loss", "val_loss", "w_frobenius_sq", "trace_gram", "group_offdiag_frobenius", "projector_distance", "antipodal_paired"]);
    for &v in &values {
        let (latent, wd) = match grid.as_str() {
            "latent" => {
                if v < 1.0 || v.fract() != 0.0 {
                    bail!(crate::config::ConfigError(format!("latent sizes must be positive integers, got {v}")));
                }
                (v as usize, base.weight_decay)
            }
            "weight-decay" => (p.get("latent")?, v),
            other => bail!(crate::config::ConfigError(format!("unknown sweep grid `{other}`"))),
        };
        let cfg = TrainConfig { weight_decay: wd, ..base.clone() };
        let out = fit_ae(&data.samples, latent, activation, &cfg)?;
        let tag = format!("{grid}-{v}");
        let g = out.model.gram();
        let val_loss = val.as_ref().map(|s| full_loss(&out.model, s)).transpose()?;
        let group_frob = group.as_ref().map(|(ids, _)| {
            let sub = g.select(ndarray::Axis(0), ids).select(ndarray::Axis(1), ids);
            offdiag_frobenius(&sub)
        });
        let (proj, paired) = match &oracle {
            Some(dec) if latent <= d => {
                let pm = top_m_projector(dec, latent)?;
                let diff: f64 = (&g - &pm).iter().map(|x| x * x).sum::<f64>().sqrt();
                (Some(diff), Some(antipodal_pairs(&g, Default::default()).paired))
            }
            _ => (None, None),
        };
        if narrow {
            export_matrix(&g, &run.path(&format!("gram-{tag}.csv")), &data.vocab.words, Some(&data.vocab.words))?;
        }
        loss_table(&out.history)?.write_csv(&run.path(&format!("loss-{tag}.csv")))?;
        summary.push(vec![
            v.into(),
            latent.into(),
            wd.into(),
            out.history.last().copied().into(),
            val_loss.into(),
            out.model.w.iter().map(|x| x * x).sum::<f64>().into(),
            g.diag().sum().into(),
            group_frob.into(),
            proj.into(),
            paired.map_or(Cell::Missing, Cell::from),
        ])?;
        if save_models {
            let ckpt = Checkpoint { model: Model::Autoencoder(out.model), config: p.echo(), seed: cfg.seed };
            checkpoint::save(&run.path(&format!("model-{tag}.ckpt")), &ckpt)?;
        }
    }
    summary.write_csv(&run.path("sweep.csv"))?;
    run.metric("grid_points", values.len());
    Ok(())
}

pub fn export_embeddings(p: &Params, run: &mut Run) -> anyhow::Result<()> {
    let ckpt = read_checkpoint(&p.require_path("model")?)?;
    let labels = match p.path("data") {
        None => None,
        Some(path) => Some(match container::load(&path).with_context(|| format!("reading {}", path.display()))? {
            container::DatasetFile::Bows(b) => b.vocab.words,
            container::DatasetFile::Pairs(t) => t.token_names,
        }),
    };
    let (table, kind): (Array2<f64>, &str) = match ckpt.model {
        Model::Autoencoder(ae) => (ae.w.t().to_owned(), "autoencoder"),
        Model::Classifier(mlp) => (mlp.embedding, "classifier"),
    };
    let rows = labels.unwrap_or_else(|| (0..table.nrows()).map(|i| format!("f{i}")).collect());
    if rows.len() != table.nrows() {
        bail!(bowslab::Error::Dimension(format!("{} labels for {} embedding rows", rows.len(), table.nrows())));
    }
    let cols: Vec<String> = (0..table.ncols()).map(|k| format!("dim{k}")).collect();
    export_matrix(&table, &run.path("embeddings.csv"), &cols, Some(&rows))?;
    run.metric("model", kind);
    run.metric("rows", table.nrows());
    run.metric("dims", table.ncols());
    Ok(())
}
