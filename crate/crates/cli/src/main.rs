use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use docloop_core::dataset::{self, assign_split, BuildOptions, ImageFormat, Split};
use docloop_core::eval::harness::EvalOutcome;
use docloop_core::eval::{evaluate, report, simulate, EvalOptions, MetricsReport, SimOptions};
use docloop_core::feedback::assemble_dataset;
use docloop_core::manifest::ManifestIndex;
use docloop_core::pipeline::{Pipeline, SubprocessBackend};
use docloop_core::templates::Registry;
use docloop_core::DocumentClass;
use docloop_service::{AppState, ServiceConfig, DEFAULT_PORT};
use serde_json::json;

#[derive(Parser)]
#[command(name = "docloop", version, about = "Synthetic ID documents, template extraction and a feedback loop")]
struct Cli {
    /// Template directory; the bundled templates are used when absent.
    #[arg(long, global = true, env = "TEMPLATES_DIR")]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Oracle,
    Subprocess,
}

#[derive(Subcommand)]
enum Command {
    /// Generate annotated base documents for one class, or `all`.
    Gen {
        #[arg(long)]
        class: String,
        #[arg(long)]
        count: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fan out generated base documents into a split dataset tree.
    Augment {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jpeg: bool,
    },
    /// Generate, render and fan out a whole dataset in one pass.
    Build {
        #[arg(long, default_value_t = 100)]
        per_class: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jpeg: bool,
    },
    /// Print the split sizes for N base documents per class.
    Split {
        #[arg(long)]
        total: u64,
    },
    /// Identify, extract and validate every image of a split.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: Backend,
        /// Command line of the subprocess backend.
        #[arg(long)]
        backend_cmd: Option<String>,
        /// Resolve images by content hash instead of file name.
        #[arg(long)]
        by_hash: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two `eval` reports side by side.
    Compare {
        #[arg(long)]
        without: PathBuf,
        #[arg(long)]
        with: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the feedback loop against the coverage detector stub.
    Simulate {
        #[arg(long, default_value_t = 3)]
        rounds: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        per_class: u64,
        /// Keeps the request queue and rejected store here instead of a
        /// temporary directory.
        #[arg(long)]
        work: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge approved rejected images into a new training dataset.
    Assemble {
        #[arg(long)]
        base: PathBuf,
        #[arg(long, env = "REJECTED_DIR")]
        rejected: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: Backend,
        #[arg(long)]
        backend_cmd: Option<String>,
        /// Dataset whose manifests back the oracle.
        #[arg(long, env = "DATASET_DIR")]
        dataset: Option<PathBuf>,
    },
}

fn registry(dir: &Option<PathBuf>) -> Result<Registry> {
    Ok(match dir {
        Some(d) => Registry::load_dir(d).with_context(|| format!("loading templates from {}", d.display()))?,
        None => Registry::bundled(),
    })
}

fn classes(arg: &str) -> Result<Vec<DocumentClass>> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(DocumentClass::ALL.to_vec());
    }
    arg.split(',').map(|c| Ok(c.trim().parse()?)).collect()
}

fn format(jpeg: bool) -> ImageFormat {
    if jpeg {
        ImageFormat::Jpeg
    } else {
        ImageFormat::Png
    }
}

fn pipeline(
    backend: Backend,
    cmd: Option<&str>,
    dataset: Option<&Path>,
    registry: Registry,
) -> Result<Pipeline> {
    let registry = Arc::new(registry);
    match backend {
        Backend::Oracle => {
            let index = match dataset {
                Some(d) => ManifestIndex::load_jsonl(dataset::manifests_path(d))?,
                None => ManifestIndex::new(),
            };
            Ok(Pipeline::oracle(Arc::new(index), registry))
        }
        Backend::Subprocess => {
            let Some(cmd) = cmd else {
                bail!("--backend subprocess needs --backend-cmd");
            };
            let mut parts = cmd.split_whitespace();
            let program = parts.next().context("empty --backend-cmd")?;
            let args: Vec<&str> = parts.collect();
            let backend = Arc::new(SubprocessBackend::spawn(program, &args)?);
            Ok(Pipeline::new(backend.clone(), backend, registry))
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn print_summary(summary: &dataset::DatasetSummary) {
    println!("{} images", summary.images);
    for split in Split::ALL {
        println!("  {:<10} {}", split.as_str(), summary.count(split));
    }
}

fn print_eval(split: Split, out: &EvalOutcome) {
    let m = out.metrics();
    println!("split {split}: {} images", out.counts.total_images);
    println!("  accuracy   {:.4}", m.accuracy);
    println!("  precision  {:.4}", m.macro_precision);
    println!("  recall     {:.4}", m.macro_recall);
    println!("  f1         {:.4}", m.macro_f1);
    if let (Some(mean), Some(min)) = (out.mean_validation(), out.min_validation()) {
        println!("  validation mean {mean:.4}, min {min:.4} over {} images", out.validated());
    }
    println!("  true positives:");
    for class in DocumentClass::ALL {
        let tp = m.per_class.get(&class).map_or(0, |c| c.tp);
        println!("    {:<16} {tp}", class.display_name());
    }
}

fn load_metrics(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    // accept both a bare report and an `eval --out` file
    let m = v.get("metrics").cloned().unwrap_or(v);
    Ok(serde_json::from_value(m).with_context(|| format!("{} is not a metrics report", path.display()))?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            class,
            count,
            seed,
            out,
        } => {
            let reg = registry(&cli.templates)?;
            for c in classes(&class)? {
                let written = dataset::generate_to_dir(c, count, seed, &out, &reg)?;
                let warnings: usize = written.iter().map(|m| m.warnings.len()).sum();
                println!("{}: {} documents, {warnings} render warnings", c.id(), written.len());
            }
        }
        Command::Augment { input, out, jpeg } => {
            print_summary(&dataset::augment_dir(&input, &out, format(jpeg))?);
        }
        Command::Build {
            per_class,
            seed,
            out,
            jpeg,
        } => {
            let mut opts = BuildOptions::new(per_class, seed);
            opts.format = format(jpeg);
            print_summary(&dataset::build_dataset(&out, &registry(&cli.templates)?, &opts)?);
        }
        Command::Split { total } => {
            let mut ranges: Vec<(Split, u64, u64)> = Vec::new();
            for i in 1..=total {
                let s = assign_split(i, total)?;
                match ranges.last_mut() {
                    Some((last, _, end)) if *last == s => *end = i,
                    _ => ranges.push((s, i, i)),
                }
            }
            for split in Split::ALL {
                match ranges.iter().find(|r| r.0 == split) {
                    Some((_, a, b)) => println!("{:<10} {:>6}  indices {a}..={b}", split.as_str(), b - a + 1),
                    None => println!("{:<10} {:>6}", split.as_str(), 0),
                }
            }
        }
        Command::Eval {
            dataset,
            split,
            backend,
            backend_cmd,
            by_hash,
            out,
        } => {
            let p = pipeline(backend, backend_cmd.as_deref(), Some(&dataset), registry(&cli.templates)?)?;
            let opts = EvalOptions {
                by_hash,
                ..EvalOptions::default()
            };
            let outcome = evaluate(&dataset, split, &p, &opts)?;
            print_eval(split, &outcome);
            if let Some(path) = out {
                let doc = json!({
                    "split": split,
                    "metrics": outcome.metrics(),
                    "counts": outcome.counts,
                    "mean_validation": outcome.mean_validation(),
                    "min_validation": outcome.min_validation(),
                    "images": outcome.images,
                });
                write_json(&path, &doc)?;
            }
        }
        Command::Compare { without, with, out } => {
            let c = report(&load_metrics(&without)?, &load_metrics(&with)?);
            print!("{}", c.to_text());
            if let Some(path) = out {
                fs::write(&path, c.to_json()).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::Simulate {
            rounds,
            seed,
            per_class,
            work,
            out,
        } => {
            let (work_dir, temporary) = match work {
                Some(w) => (w, false),
                None => (simulate::scratch_dir(seed)?, true),
            };
            let mut opts = SimOptions::new(&work_dir);
            opts.rounds = rounds;
            opts.seed = seed;
            opts.per_class = per_class;
            let result = docloop_core::eval::simulate_arl_loop(&registry(&cli.templates)?, &opts);
            if temporary {
                let _ = fs::remove_dir_all(&work_dir);
            }
            let sim = result?;
            println!("grid of {} images", sim.grid_size);
            for r in &sim.rounds {
                println!(
                    "round {}: accuracy {:.4} (expected {:.4}), {} misclassified, {} approved, {} pairs covered",
                    r.round,
                    r.accuracy,
                    r.expected_accuracy,
                    r.misclassified,
                    r.approved,
                    r.coverage.len()
                );
            }
            if let (Some(first), Some(last)) = (sim.rounds.first(), sim.rounds.last()) {
                println!();
                print!("{}", report(&first.metrics, &last.metrics).to_text());
            }
            if let Some(path) = out {
                write_json(&path, &serde_json::to_value(&sim)?)?;
            }
        }
        Command::Assemble { base, rejected, out } => {
            let s = assemble_dataset(&base, &rejected, &out)?;
            println!(
                "{} base train images, {} rejected entries, {} new variants",
                s.base_count, s.rejected_count, s.variant_count
            );
        }
        Command::Serve {
            port,
            host,
            backend,
            backend_cmd,
            dataset,
        } => {
            let mut cfg = ServiceConfig::from_env();
            if dataset.is_some() {
                cfg.dataset_dir = dataset;
            }
            if cli.templates.is_some() {
                cfg.templates_dir = cli.templates.clone();
            }
            let state = match backend {
                Backend::Oracle => AppState::oracle(&cfg)?,
                Backend::Subprocess => {
                    let p = pipeline(backend, backend_cmd.as_deref(), None, registry(&cfg.templates_dir)?)?;
                    let store = docloop_core::feedback::FeedbackStore::open(&cfg.requests_dir, &cfg.rejected_root)?;
                    AppState::new(p, store)
                }
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(docloop_service::serve(SocketAddr::new(host, port), state))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
