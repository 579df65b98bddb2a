//! `fruitsize` command line: `fit`, `synth`, `eval` and `detmetrics`.
//!
//! Every subcommand runs in three phases. Reading and validating inputs
//! fails with exit code 1, computing and writing fails with exit code 2.
//! Outputs are written only after everything else succeeded.

mod detmetrics;
mod eval;
mod fit;
mod output;
mod synth;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "fruitsize", version, about = "Size fruit from point clouds and depth images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit spheres and/or ellipsoids to clouds or masked depth images.
    Fit(fit::FitArgs),
    /// Generate a synthetic benchmark with ground truth.
    Synth(synth::SynthArgs),
    /// Sizing-error metrics of predictions against ground truth.
    Eval(eval::EvalArgs),
    /// Detection and segmentation metrics of predicted masks.
    Detmetrics(detmetrics::DetArgs),
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: e.to_string(),
        }
    }

    pub fn runtime(e: impl fmt::Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

trait Phase<T> {
    fn validation(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T> Phase<T> for std::result::Result<T, Error> {
    fn validation(self) -> CliResult<T> {
        self.map_err(CliError::validation)
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(CliError::runtime)
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let rendered = e.to_string();
            eprintln!("{}", rendered.lines().next().unwrap_or("invalid arguments"));
            return EXIT_VALIDATION;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Synth(a) => synth::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Detmetrics(a) => detmetrics::run(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

/// Overlays explicitly given flags on the `--config` JSON object. Flags that
/// were not given (`null`, empty lists, `false`) leave config values alone.
fn merge_config<A: Serialize + DeserializeOwned + Clone>(flags: &A, config: Option<&Path>) -> CliResult<A> {
    let Some(path) = config else {
        return Ok(flags.clone());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    let mut base: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: malformed config: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(CliError::validation(format!(
            "{}: config must be a JSON object",
            path.display()
        )));
    };
    let Value::Object(flag_map) = serde_json::to_value(flags).map_err(CliError::runtime)? else {
        unreachable!("argument structs serialize to objects")
    };
    for (k, v) in flag_map {
        let given = match &v {
            Value::Null | Value::Bool(false) => false,
            Value::Array(a) => !a.is_empty(),
            _ => true,
        };
        if given || !base_map.contains_key(&k) {
            base_map.insert(k, v);
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::validation(format!("{}: malformed config: {e}", path.display())))
}

fn require_file(flag: &str, path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::validation(format!(
            "{flag}: no such file '{}'",
            path.display()
        )))
    }
}

fn thread_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    match jobs {
        Some(0) => return Err(CliError::validation("--jobs must be at least 1")),
        Some(n) => b = b.num_threads(n),
        None => {}
    }
    b.build().map_err(CliError::runtime)
}

fn resolve(base: &Path, rel: &Path) -> PathBuf {
    if rel.is_absolute() {
        rel.to_owned()
    } else {
        base.join(rel)
    }
}
