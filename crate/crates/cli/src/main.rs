//! `kinship` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinship_core::config::{Overrides, RunConfig};
use kinship_core::dataset::{generate_synthetic_dataset, SynthSpec};
use kinship_core::experiment::{self, RunOutput};
use kinship_core::io::write_atomic;
use kinship_core::preprocess::{load_grayscale, preprocess_stages, Method};
use kinship_core::{Error, ErrorClass, Result};

#[derive(Parser, Debug)]
#[command(name = "kinship", version, about = "Kinship verification from parent/child face pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic family dataset with a manifest.
    Synth(SynthArgs),
    /// Preprocess one image, or every dataset image for each method.
    Preprocess(PreprocessArgs),
    /// Extract feature sets for every configured method.
    Extract(RunArgs),
    /// Train one projection basis per method and fold from stored features.
    Train(RunArgs),
    /// Score stored features with stored bases and write reports.
    Eval(RunArgs),
    /// Run the whole sweep in memory and write reports.
    RunAll(RunArgs),
    /// Re-render the text report from a report CSV.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = SynthSpec::default().n_families)]
    families: usize,
    #[arg(long, default_value_t = SynthSpec::default().seed)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().kin_noise)]
    kin_noise: f64,
    #[arg(long, default_value_t = SynthSpec::default().illumination)]
    illumination: f64,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "200x200", value_parser = parse_size)]
    size: (usize, usize),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Pair manifest; replaces the configured dataset.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated methods: basic, retinex, mask, retinex+mask.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Comma-separated feature counts.
    #[arg(long, value_delimiter = ',')]
    d_sweep: Option<Vec<usize>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Single input image; without it every dataset image is processed.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    /// Output PNG for `--input`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Method for `--input` (default: retinex+mask).
    #[arg(long)]
    method: Option<Method>,
    /// Also write every intermediate stage into this directory.
    #[arg(long)]
    debug: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// `report.csv` written by eval or run-all.
    #[arg(long)]
    csv: PathBuf,
    /// Write the text report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HEIGHTxWIDTH")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((n(h)?, n(w)?))
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(
            self.config.as_deref(),
            &Overrides {
                output_dir: self.output_dir.clone(),
                manifest: self.manifest.clone(),
                methods: self.methods.clone(),
                d_sweep: self.d_sweep.clone(),
                k: self.k,
                seed: self.seed,
            },
        )
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn finish_run(out: &RunOutput, cfg: &RunConfig) {
    print!("{}", out.sweep.render_text());
    eprintln!("reports written to {}", cfg.output_dir.display());
}

fn synth(a: &SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_families: a.families,
        image_size: a.size,
        kin_noise: a.kin_noise,
        illumination: a.illumination,
        seed: a.seed,
    };
    let m = generate_synthetic_dataset(&spec, &a.out)?;
    println!("{}", a.out.join("manifest.csv").display());
    eprintln!("{} pairs written", m.len());
    Ok(())
}

fn preprocess(a: &PreprocessArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    if let Some(input) = &a.input {
        let method = a.method.unwrap_or(Method::RetinexMask);
        let stages = preprocess_stages(&load_grayscale(input)?, &cfg.preprocess.with_method(method))?;
        let output = a.output.as_ref().expect("clap enforces --output");
        stages.output().save_png(output)?;
        if let Some(dir) = &a.debug {
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            print_paths(&stages.write_debug(dir, stem)?);
        }
        println!("{}", output.display());
        return Ok(());
    }
    let manifest = experiment::prepare_dataset(&cfg)?;
    let methods = a.method.map(|m| vec![m]).unwrap_or_else(|| cfg.methods.clone());
    for method in methods {
        let pcfg = cfg.preprocess.with_method(method);
        let dir = cfg.output_dir.join("preprocessed").join(method.file_tag());
        for e in &manifest.entries {
            for rel in [&e.parent, &e.child] {
                let stages = preprocess_stages(&load_grayscale(&manifest.resolve(rel))?, &pcfg)?;
                let stem = rel.with_extension("").to_string_lossy().replace(['/', '\\'], "_");
                stages.output().save_png(&dir.join(format!("{stem}.png")))?;
                if let Some(debug) = &a.debug {
                    stages.write_debug(&debug.join(method.file_tag()), &stem)?;
                }
            }
        }
        println!("{}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Preprocess(a) => preprocess(&a),
        Command::Extract(a) => {
            print_paths(&experiment::stage_extract(&a.resolve()?)?);
            Ok(())
        }
        Command::Train(a) => {
            print_paths(&experiment::stage_train(&a.resolve()?)?);
            Ok(())
        }
        Command::Eval(a) => {
            let cfg = a.resolve()?;
            finish_run(&experiment::stage_eval(&cfg)?, &cfg);
            Ok(())
        }
        Command::RunAll(a) => {
            let cfg = a.resolve()?;
            finish_run(&experiment::run_all(&cfg)?, &cfg);
            Ok(())
        }
        Command::Report(a) => {
            let text = experiment::render_report(&a.csv)?;
            match &a.out {
                Some(p) => write_atomic(p, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
