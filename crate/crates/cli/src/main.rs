//! `bowslab` experiment runner.
//!
//! Every subcommand writes into a fresh run directory holding its artifacts,
//! a `config.txt` echo (replayable with `--config`), and `metrics.json`.
//! Failures print a single `error: kind=... message="..."` line and exit
//! nonzero.

mod commands;
mod config;
mod diagnose;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgMatches, Command};

use config::{Key, Params};
use run::Run;

type Handler = fn(&Params, &mut Run) -> anyhow::Result<()>;

struct Sub {
    name: &'static str,
    about: &'static str,
    schema: Vec<Key>,
    handler: Handler,
}

fn subcommands() -> Vec<Sub> {
    vec![
        Sub { name: "build-corpus", about: "Encode a text file into train/validation bag-of-words windows", schema: commands::BUILD_CORPUS.to_vec(), handler: commands::build_corpus },
        Sub { name: "gen-synth", about: "Sample a synthetic latent-curve dataset", schema: commands::GEN_SYNTH.to_vec(), handler: commands::gen_synth },
        Sub { name: "gen-task", about: "Generate a modular-addition or city-direction pair dataset", schema: commands::GEN_TASK.to_vec(), handler: commands::gen_task },
        Sub { name: "train-ae", about: "Train a tied-weight autoencoder", schema: commands::train_ae_schema(), handler: commands::train_ae_cmd },
        Sub { name: "train-task", about: "Train a pair classifier", schema: commands::train_task_schema(), handler: commands::train_task_cmd },
        Sub { name: "sweep", about: "Train autoencoders over a latent-size or weight-decay grid", schema: commands::sweep_schema(), handler: commands::sweep_cmd },
        Sub { name: "export-embeddings", about: "Write encoder columns or token embeddings as CSV", schema: commands::EXPORT_EMBEDDINGS.to_vec(), handler: commands::export_embeddings },
    ]
}

fn cli(subs: &[Sub]) -> Command {
    let mut root = Command::new("bowslab")
        .about("Desk-scale superposition laboratory")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg(Arg::new("out").long("out").global(true).value_name("DIR").value_parser(value_parser!(PathBuf)).help(format!("output root [env: {}, default: runs]", run::OUT_ENV)))
        .arg(Arg::new("workers").long("workers").global(true).value_name("N").value_parser(value_parser!(usize)).help("worker threads (1 gives bit-reproducible runs)"))
        .arg(Arg::new("config").long("config").global(true).value_name("FILE").value_parser(value_parser!(PathBuf)).help("key=value file; flags override it"));
    for s in subs {
        root = root.subcommand(config::with_flags(Command::new(s.name).about(s.about), &s.schema));
    }
    let diag = Command::new("diagnose")
        .about("Run a diagnostic over a saved model")
        .arg(Arg::new("diagnostic").required(true).value_parser(diagnose::NAMES.to_vec()));
    root.subcommand(config::with_flags(diag, diagnose::SCHEMA))
}

fn execute(matches: &ArgMatches) -> anyhow::Result<()> {
    if let Some(&n) = matches.get_one::<usize>("workers") {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = matches.get_one::<PathBuf>("out").cloned();
    let config_file = matches.get_one::<PathBuf>("config").cloned();
    let subs = subcommands();
    let (name, sub) = matches.subcommand().expect("subcommand required");
    if name == "diagnose" {
        let diag: &String = sub.get_one("diagnostic").expect("required");
        let params = Params::resolve(diagnose::SCHEMA, config_file.as_deref(), sub)?;
        let seed = params.get("seed")?;
        let run = Run::create(out.as_deref(), &format!("diagnose-{diag}"), &format!("bowslab diagnose {diag}"), params.clone(), seed)?;
        return complete(run, |r| diagnose::run(diag, &params, r));
    }
    let s = subs.iter().find(|s| s.name == name).expect("registered subcommand");
    let params = Params::resolve(&s.schema, config_file.as_deref(), sub)?;
    let seed = params.get("seed")?;
    let run = Run::create(out.as_deref(), name, &format!("bowslab {name}"), params.clone(), seed)?;
    complete(run, |r| (s.handler)(&params, r))
}

fn complete(mut run: Run, body: impl FnOnce(&mut Run) -> anyhow::Result<()>) -> anyhow::Result<()> {
    match body(&mut run) {
        Ok(()) => run.finish().map(drop),
        Err(e) => {
            run.abandon();
            Err(e)
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(b) = e.downcast_ref::<bowslab::Error>() {
        b.kind()
    } else if e.downcast_ref::<config::ConfigError>().is_some() {
        "config"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "internal"
    }
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn report(kind: &str, message: &str) -> ExitCode {
    let flat = message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error: kind={kind} message=\"{flat}\"");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let subs = subcommands();
    let matches = match cli(&subs).try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return report("usage", first);
        }
    };
    match execute(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(error_kind(&e), &message(&e)),
    }
}
