//! Command-line front end: `hicu build-tree | embed | train | eval | synth | inspect`.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Arg, ArgMatches, Command};

use commands::{EvalOptions, InspectOptions, TrainOptions};
use config::{resolve, KEYS};

/// Exit status for usage and configuration errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for every other failure.
pub const EXIT_FAILURE: i32 = 1;

fn with_keys(mut cmd: Command) -> Command {
    for (key, help) in KEYS {
        cmd = cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help(*help));
    }
    cmd
}

fn path_arg(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_name("PATH")
        .value_parser(clap::value_parser!(PathBuf))
        .help(help)
}

pub fn command() -> Command {
    let sub = |name: &'static str, about: &'static str| with_keys(Command::new(name).about(about));
    Command::new("hicu")
        .about("Hierarchical curriculum training for multi-label text classification over code trees")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(path_arg("config", "key = value config file; flags override it").global(true))
        .subcommand(sub("build-tree", "Build the label tree from a range table and datasets"))
        .subcommand(sub("embed", "Train Poincaré embeddings of the label tree"))
        .subcommand(
            sub("train", "Train a model with the curriculum (hicu) or directly on the leaves (flat)")
                .arg(path_arg("resume", "continue from this checkpoint"))
                .arg(
                    Arg::new("stop-after")
                        .long("stop-after")
                        .value_name("EPOCHS")
                        .value_parser(clap::value_parser!(usize))
                        .help("pause after this many epochs and write a resumable checkpoint"),
                ),
        )
        .subcommand(
            sub("eval", "Evaluate a checkpoint or a dumped score matrix on the test split")
                .arg(path_arg("checkpoint", "checkpoint to evaluate"))
                .arg(path_arg("scores", "score matrix written by --dump-scores").conflicts_with("checkpoint"))
                .arg(path_arg("baseline", "eval.json of a run to compare against"))
                .arg(path_arg("dump-scores", "write the score matrix here")),
        )
        .subcommand(sub("synth", "Generate a synthetic corpus with a five-level code tree"))
        .subcommand(
            sub("inspect", "Show the tokens a label attends to in one document")
                .arg(path_arg("checkpoint", "trained checkpoint").required(true))
                .arg(Arg::new("doc-id").long("doc-id").required(true).help("document id"))
                .arg(Arg::new("label").long("label").required(true).help("leaf code"))
                .arg(
                    Arg::new("top-n")
                        .long("top-n")
                        .value_parser(clap::value_parser!(usize))
                        .default_value("16")
                        .help("tokens to show"),
                ),
        )
}

fn flag_pairs(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter_map(|(k, _)| m.get_one::<String>(k).map(|v| (k.to_string(), v.clone())))
        .collect()
}

fn usage_line(e: &clap::Error) -> String {
    let text = e.to_string();
    let first = text.lines().next().unwrap_or("").trim();
    first.strip_prefix("error: ").unwrap_or(first).to_string()
}

fn dispatch(name: &str, m: &ArgMatches) -> hicu::Result<String> {
    let file = m.get_one::<PathBuf>("config");
    let cfg = resolve(file.map(PathBuf::as_path), &flag_pairs(m), std::env::var("HICU_SEED").ok())?;
    let path = |k: &str| m.try_get_one::<PathBuf>(k).ok().flatten().cloned();
    Ok(match name {
        "build-tree" => commands::cmd_build_tree(&cfg)?.to_string(),
        "embed" => commands::cmd_embed(&cfg)?.to_string(),
        "synth" => commands::cmd_synth(&cfg)?.to_string(),
        "train" => {
            let opts = TrainOptions {
                resume: path("resume"),
                stop_after: m.get_one::<usize>("stop-after").copied(),
            };
            commands::cmd_train(&cfg, &opts)?.to_string()
        }
        "eval" => {
            let opts = EvalOptions {
                checkpoint: path("checkpoint"),
                scores: path("scores"),
                baseline: path("baseline"),
                dump_scores: path("dump-scores"),
            };
            commands::cmd_eval(&cfg, &opts)?.to_string()
        }
        "inspect" => {
            let opts = InspectOptions {
                checkpoint: path("checkpoint").expect("required"),
                doc_id: m.get_one::<String>("doc-id").expect("required").clone(),
                label: m.get_one::<String>("label").expect("required").clone(),
                top_n: *m.get_one::<usize>("top-n").expect("defaulted"),
            };
            commands::cmd_inspect(&cfg, &opts)?.to_string()
        }
        _ => unreachable!("clap rejects unknown subcommands"),
    })
}

/// Runs the CLI on `args` and returns the process exit status. Results go
/// to stdout; failures print one line `error[CODE]: detail` to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    print!("{e}");
                    if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                        EXIT_USAGE
                    } else {
                        0
                    }
                }
                _ => {
                    eprintln!("error[E_USAGE]: {}", usage_line(&e));
                    EXIT_USAGE
                }
            };
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    match dispatch(name, sub) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            let detail = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {detail}", e.code());
            match e {
                hicu::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_FAILURE,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        command().debug_assert();
    }

    #[test]
    fn bad_values_are_usage_errors() {
        assert_eq!(run(["hicu", "train", "--correction", "mul"]), EXIT_USAGE);
        assert_eq!(run(["hicu", "train", "--nonsense", "1"]), EXIT_USAGE);
        assert_eq!(run(["hicu", "frobnicate"]), EXIT_USAGE);
    }

    #[test]
    fn missing_inputs_fail_before_work() {
        assert_eq!(run(["hicu", "train", "--out", "/nonexistent/x"]), EXIT_USAGE);
        assert_eq!(run(["hicu", "eval"]), EXIT_USAGE);
    }
}
