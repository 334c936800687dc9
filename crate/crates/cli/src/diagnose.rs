//! `diagnose <name>`: read-only measurements over a saved model.

use anyhow::{bail, Context};
use bowslab::container::Split;
use bowslab::corpus::BowsDataset;
use bowslab::diagnostics::geometry::{antipodal_pairs, data_geometry, group_geometry, PairingRule};
use bowslab::diagnostics::interference::{breakdown_table, interference_breakdown};
use bowslab::diagnostics::superposition::{census_superposition, evaluate_probe, linear_superposition_test, onehot_vs_context, LinearProbe, ProbeMethod, SuperpositionVerdict};
use bowslab::diagnostics::value::{fourier_projection, fourier_vc_directions, probe_table, radius_cv, vc_ablation, AblationMode};
use bowslab::linalg::MomentMode;
use bowslab::models::checkpoint::Model;
use bowslab::models::{MlpClassifier, TiedAutoencoder, TrainConfig};
use bowslab::report::{export_matrix, Cell, Table};
use bowslab::tasks::{self, PairDataset};
use ndarray::Array1;

use crate::commands::{read_bows, read_checkpoint, read_pairs, resolve_group};
use crate::config::{key, ConfigError, Key, Params};
use crate::run::Run;

pub const NAMES: &[&str] = &[
    "superposition",
    "census",
    "probe-fev",
    "interference",
    "onehot-context",
    "geometry",
    "data-geometry",
    "antipodal",
    "fourier",
    "coordinate-probe",
    "vc-ablation",
];

pub const SCHEMA: &[Key] = &[
    key("model", "", "model checkpoint"),
    key("data", "", "training dataset (.bows) or pair dataset"),
    key("val", "", "evaluation dataset (.bows); defaults to the training set"),
    key("features", "months", "feature group: months or a comma list of words/ids"),
    key("feature", "", "single feature (word or id)"),
    key("eps", "0.5", "recoverability tolerance ε (R² floor is 1 − ε)"),
    key("min-occurrences", "10", "evaluation occurrences a feature needs to be tested"),
    key("probe", "closed-form", "linear decoder fit: closed-form or gradient"),
    key("probe-ridge", "1e-6", "ridge on the closed-form decoder"),
    key("probe-epochs", "5", "epochs for the gradient decoder"),
    key("sample", "0", "evaluation sample index (interference)"),
    key("top-k", "10", "contributions listed per feature (interference)"),
    key("moment", "correlation", "data-side matrix: raw, centered or correlation"),
    key("modulus", "0", "Fourier modulus (0 uses the embedding row count)"),
    key("fourier-top", "5", "frequencies whose projections are exported"),
    key("vc-frequencies", "5", "frequencies whose directions form the value-coding subspace"),
    key("vc-source", "auto", "value-coding directions: auto, fourier or coordinates"),
    key("mode", "both", "ablation: keep, remove or both"),
    key("cities", "data/us_cities_top1000.csv", "city table matching the map task's tokens"),
    key("coord-train", "800", "cities used to fit the coordinate probe"),
    key("coord-ridge", "1e-4", "coordinate probe ridge"),
    key("seed", "42", "probe split and gradient probe seed"),
];

fn need(p: &Params, k: &str, diag: &str) -> anyhow::Result<std::path::PathBuf> {
    p.path(k).ok_or_else(|| ConfigError(format!("diagnostic `{diag}` needs `--{k}`")).into())
}

fn load_ae(p: &Params, diag: &str) -> anyhow::Result<TiedAutoencoder> {
    let path = need(p, "model", diag)?;
    match read_checkpoint(&path)?.model {
        Model::Autoencoder(ae) => Ok(ae),
        Model::Classifier(_) => bail!(bowslab::Error::Format(format!("{} holds a classifier; `{diag}` needs an autoencoder", path.display()))),
    }
}

fn load_mlp(p: &Params, diag: &str) -> anyhow::Result<MlpClassifier> {
    let path = need(p, "model", diag)?;
    match read_checkpoint(&path)?.model {
        Model::Classifier(m) => Ok(m),
        Model::Autoencoder(_) => bail!(bowslab::Error::Format(format!("{} holds an autoencoder; `{diag}` needs a classifier", path.display()))),
    }
}

fn load_bows(p: &Params, diag: &str) -> anyhow::Result<(BowsDataset, BowsDataset)> {
    let train = read_bows(&need(p, "data", diag)?)?;
    let eval = match p.path("val") {
        Some(v) => read_bows(&v)?,
        None => train.clone(),
    };
    if eval.samples.cols() != train.samples.cols() {
        bail!(bowslab::Error::Dimension("training and evaluation datasets differ in width".into()));
    }
    Ok((train, eval))
}

fn load_table(p: &Params, diag: &str, tokens: usize) -> anyhow::Result<tasks::CityTable> {
    let path = need(p, "cities", diag)?;
    let table = tasks::load_cities(&path, tokens).with_context(|| format!("reading {}", path.display()))?;
    if table.cities.len() != tokens {
        bail!(bowslab::Error::Dimension(format!("{} holds {} cities, the model embeds {tokens} tokens", path.display(), table.cities.len())));
    }
    Ok(table)
}

fn check_width(ae: &TiedAutoencoder, d: &BowsDataset) -> anyhow::Result<()> {
    if ae.input_dim() != d.samples.cols() {
        bail!(bowslab::Error::Dimension(format!("model expects {} features, dataset has {}", ae.input_dim(), d.samples.cols())));
    }
    Ok(())
}

fn probe_method(p: &Params) -> anyhow::Result<ProbeMethod> {
    Ok(match p.str("probe") {
        "closed-form" => ProbeMethod::ClosedForm { ridge: p.get("probe-ridge")? },
        "gradient" => ProbeMethod::Gradient(TrainConfig { epochs: p.get("probe-epochs")?, seed: p.get("seed")?, ..TrainConfig::default() }),
        other => bail!(ConfigError(format!("unknown probe `{other}`"))),
    })
}

fn single_feature(p: &Params, words: &[String]) -> anyhow::Result<usize> {
    match p.str("feature") {
        "" => bail!(ConfigError("this diagnostic needs `--feature`".into())),
        f => Ok(resolve_group(f, words)?.0[0]),
    }
}

fn verdict_table(v: &SuperpositionVerdict, words: &[String]) -> anyhow::Result<Table> {
    let mut t = Table::new(["feature", "label", "r2_linear", "r2_nonlinear", "class", "partner", "partner_label", "partner_inner", "interferes"]);
    for f in &v.features {
        let (pid, plabel, pinner) = match f.partner {
            Some((j, x)) => (Cell::from(j), Cell::Text(words[j].clone()), Cell::Num(x)),
            None => (Cell::Missing, Cell::Missing, Cell::Missing),
        };
        t.push(vec![f.feature.into(), words[f.feature].as_str().into(), f.r2_linear.into(), f.r2_nonlinear.into(), f.class.name().into(), pid, plabel, pinner, f.interferes.into()])?;
    }
    Ok(t)
}

pub fn run(name: &str, p: &Params, run: &mut Run) -> anyhow::Result<()> {
    match name {
        "superposition" => {
            let ae = load_ae(p, name)?;
            let (train, eval) = load_bows(p, name)?;
            check_width(&ae, &train)?;
            let words = &train.vocab.words;
            let (ids, _) = resolve_group(p.str("features"), words)?;
            let v = linear_superposition_test(&ae, &train.samples, &eval.samples, &ids, p.get("eps")?, &probe_method(p)?)?;
            verdict_table(&v, words)?.write_csv(&run.path("superposition.csv"))?;
            for class in ["linear", "nonlinear", "unrecovered"] {
                run.metric(class, v.features.iter().filter(|f| f.class.name() == class).count());
            }
            run.metric_f64("mean_r2_linear", v.mean_r2_linear());
            run.metric_f64("probe_fev", v.fev);
            run.metric("all_interfere", v.all_interfere());
        }
        "census" => {
            let ae = load_ae(p, name)?;
            let (train, eval) = load_bows(p, name)?;
            check_width(&ae, &train)?;
            let c = census_superposition(&ae, &train.samples, &eval.samples, p.get("eps")?, p.get("min-occurrences")?, &probe_method(p)?)?;
            verdict_table(&c.verdict, &train.vocab.words)?.write_csv(&run.path("census.csv"))?;
            run.metric("linear", c.linear);
            run.metric("nonlinear", c.nonlinear);
            run.metric("unrecovered", c.unrecovered);
            run.metric("tested", c.tested());
            run.metric("skipped", c.skipped);
            run.metric_f64("r2_threshold", Some(c.r2_threshold));
            run.metric_f64("probe_fev", c.fev);
        }
        "probe-fev" => {
            let ae = load_ae(p, name)?;
            let (train, eval) = load_bows(p, name)?;
            check_width(&ae, &train)?;
            let probe = LinearProbe::fit(&ae, &train.samples, &probe_method(p)?)?;
            run.metric_f64("probe_fev", evaluate_probe(&ae, &probe, &eval.samples)?.fev);
        }
        "interference" => {
            let ae = load_ae(p, name)?;
            let (train, eval) = load_bows(p, name)?;
            check_width(&ae, &train)?;
            let words = &train.vocab.words;
            let s: usize = p.get("sample")?;
            if s >= eval.len() {
                bail!(ConfigError(format!("sample {s} out of range for {} samples", eval.len())));
            }
            let x = eval.samples.dense_rows([s]);
            let features: Vec<usize> = match p.str("feature") {
                "" => eval.samples.row(s).iter().map(|&j| j as usize).collect(),
                _ => vec![single_feature(p, words)?],
            };
            let top_k: usize = p.get("top-k")?;
            let rows = features
                .iter()
                .map(|&i| Ok((s, interference_breakdown(&ae, x.row(0), i, top_k, Some(words))?)))
                .collect::<anyhow::Result<Vec<_>>>()?;
            breakdown_table(&rows, Some(words))?.write_csv(&run.path("interference.csv"))?;
            run.metric("features", rows.len());
        }
        "onehot-context" => {
            let ae = load_ae(p, name)?;
            let (train, eval) = load_bows(p, name)?;
            check_width(&ae, &train)?;
            let i = single_feature(p, &train.vocab.words)?;
            let r = onehot_vs_context(&ae, &eval.samples, i, p.get("min-occurrences")?)?;
            run.metric("feature", train.vocab.words[i].as_str());
            run.metric("occurrences", r.occurrences);
            run.metric("insufficient", r.insufficient);
            run.metric_f64("r2_onehot", Some(r.r2_onehot));
            run.metric_f64("r2_context", r.r2_context);
            run.metric_f64("fraction_context_better", r.fraction_context_better);
        }
        "geometry" | "data-geometry" => {
            let (train, _) = load_bows(p, name)?;
            let (ids, labels) = resolve_group(p.str("features"), &train.vocab.words)?;
            let report = if name == "geometry" {
                let ae = load_ae(p, name)?;
                check_width(&ae, &train)?;
                group_geometry(&ae, p.str("features"), &ids, &labels)?
            } else {
                let mode = match p.str("moment") {
                    "raw" => MomentMode::Raw,
                    "centered" => MomentMode::Centered,
                    "correlation" => MomentMode::Correlation,
                    other => bail!(ConfigError(format!("unknown moment `{other}`"))),
                };
                data_geometry(&train.samples, p.str("features"), &ids, &labels, mode)?
            };
            report.table()?.write_csv(&run.path("geometry.csv"))?;
            run.metric_f64("ordering_score", Some(report.ordering_score));
            run.metric_f64("offdiag_frobenius", Some(report.offdiag_frobenius));
            run.metric("degenerate", report.degenerate);
        }
        "antipodal" => {
            let ae = load_ae(p, name)?;
            let r = antipodal_pairs(&ae.gram(), PairingRule::default());
            let mut t = Table::new(["feature", "partner"]);
            for (i, partner) in r.partners.iter().enumerate() {
                t.push(vec![i.into(), partner.map_or(Cell::Missing, Cell::from)])?;
            }
            t.write_csv(&run.path("antipodal.csv"))?;
            run.metric("paired", r.paired);
        }
        "fourier" => {
            let mlp = load_mlp(p, name)?;
            let modulus = match p.get::<usize>("modulus")? {
                0 => mlp.embedding.nrows(),
                m => m,
            };
            let r = fourier_projection(mlp.embedding.view(), modulus, 0.0, p.get("fourier-top")?)?;
            r.table()?.write_csv(&run.path("fourier.csv"))?;
            let mut t = Table::new(["frequency", "token", "cos", "sin"]);
            for (q, proj) in &r.projections {
                for (a, row) in proj.rows().into_iter().enumerate() {
                    t.push(vec![(*q).into(), a.into(), row[0].into(), row[1].into()])?;
                }
            }
            t.write_csv(&run.path("fourier_projections.csv"))?;
            let strong = |f: &&bowslab::diagnostics::FrequencyFit, adj: bool| {
                if adj { f.adjusted_r2 } else { f.r2 }.is_some_and(|r| r >= 0.9)
            };
            run.metric("frequencies_r2_ge_0_9", r.fits.iter().filter(|f| strong(f, false)).count());
            run.metric("frequencies_adjusted_r2_ge_0_9", r.fits.iter().filter(|f| strong(f, true)).count());
            run.metric_f64("top_energy_share", Some(r.top(p.get("fourier-top")?).iter().map(|f| f.energy).sum()));
            if let Some((q, proj)) = r.projections.first() {
                run.metric("top_frequency", *q);
                run.metric_f64("top_radius_cv", radius_cv(proj));
            }
        }
        "coordinate-probe" => {
            let mlp = load_mlp(p, name)?;
            let table = load_table(p, name, mlp.embedding.nrows())?;
            let probe = probe_table(&mlp.embedding, &table.coordinates(), p.get("coord-train")?, p.get("coord-ridge")?, p.get("seed")?)?;
            run.metric_f64("r2_latitude", probe.r2_per_axis[0]);
            run.metric_f64("r2_longitude", probe.r2_per_axis[1]);
            run.metric_f64("mean_r2", probe.mean_r2);
            let dirs = probe.fit.coef.t().to_owned();
            let cols: Vec<String> = (0..dirs.ncols()).map(|k| format!("dim{k}")).collect();
            export_matrix(&dirs, &run.path("probe_directions.csv"), &cols, Some(&["latitude".into(), "longitude".into()]))?;
        }
        "vc-ablation" => {
            let mlp = load_mlp(p, name)?;
            let data: PairDataset = read_pairs(&need(p, "data", name)?)?;
            let source = match p.str("vc-source") {
                "auto" if data.task == "map" => "coordinates",
                "auto" => "fourier",
                s => s,
            };
            let dirs: Vec<Array1<f64>> = match source {
                "fourier" => {
                    let r = fourier_projection(mlp.embedding.view(), mlp.embedding.nrows(), 0.0, 0)?;
                    fourier_vc_directions(&r, p.get("vc-frequencies")?)
                }
                "coordinates" => {
                    let table = load_table(p, name, mlp.embedding.nrows())?;
                    probe_table(&mlp.embedding, &table.coordinates(), p.get("coord-train")?, p.get("coord-ridge")?, p.get("seed")?)?.directions()
                }
                other => bail!(ConfigError(format!("unknown vc-source `{other}`"))),
            };
            let (pairs, labels) = data.subset(Split::Validation);
            let base = mlp.evaluate(&pairs, &labels)?;
            run.metric("vc_directions", dirs.len());
            run.metric_f64("baseline_accuracy", Some(base.accuracy));
            run.metric_f64("baseline_loss", Some(base.loss));
            let modes: &[(&str, AblationMode)] = match p.str("mode") {
                "keep" => &[("keep", AblationMode::Keep)],
                "remove" => &[("remove", AblationMode::Remove)],
                "both" => &[("keep", AblationMode::Keep), ("remove", AblationMode::Remove)],
                other => bail!(ConfigError(format!("unknown ablation mode `{other}`"))),
            };
            for (label, mode) in modes {
                let ev = vc_ablation(&mlp, &dirs, *mode, &pairs, &labels)?;
                run.metric_f64(&format!("{label}_accuracy"), Some(ev.accuracy));
                run.metric_f64(&format!("{label}_loss"), Some(ev.loss));
            }
        }
        other => bail!(ConfigError(format!("unknown diagnostic `{other}`"))),
    }
    Ok(())
}
