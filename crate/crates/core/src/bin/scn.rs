use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scn_core::experiment::{
    evaluate_runs, explain_run, find_runs, load_run, metrics_csv, parse_seed_list, render_report, report_from_dirs,
    train_all, write_atomic, ConfigFile, ModelKind,
};
use scn_core::explain::DEFAULT_REPRESENTATIVES;
use scn_core::graphdata::{build_dataset, read_jsonl, write_jsonl, DatasetName, DatasetSpec};
use scn_core::{Error, Result};

#[derive(Parser)]
#[command(name = "scn", version, about = "Subgraph concept network experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma separated training seeds.
    #[arg(long, global = true)]
    seed_list: Option<String>,
    #[arg(long, global = true)]
    dataset: Option<String>,
    /// scn, cgn_mean or cgn_diffpool.
    #[arg(long, global = true)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSON lines with a statistics sidecar.
    Generate {
        /// Dataset seed.
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train one model per seed.
    Train {
        /// JSON-lines dataset or TU dataset directory instead of generating.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Print progress every N epochs (0 = quiet).
        #[arg(long, default_value_t = 10)]
        log_every: usize,
    },
    /// Compute all metrics for trained runs.
    Evaluate {
        /// Run directories or parents of them (default: the output directory).
        runs: Vec<PathBuf>,
        /// Evaluate against this dataset instead of the one recorded in the manifest.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Export concept visualisations and instance explanations.
    Explain {
        run: PathBuf,
        #[arg(long, default_value_t = 2)]
        hops: usize,
        #[arg(long, default_value_t = DEFAULT_REPRESENTATIVES)]
        representatives: usize,
        #[arg(long, default_value_t = 5)]
        instances: usize,
    },
    /// Aggregate evaluated runs into markdown tables.
    Report { dirs: Vec<PathBuf> },
}

fn file_config(g: &Global) -> Result<ConfigFile> {
    let base = match &g.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let flags = ConfigFile {
        dataset: g.dataset.clone(),
        model: g.model.as_deref().map(ModelKind::parse).transpose()?,
        seeds: g.seed_list.as_deref().map(parse_seed_list).transpose()?,
        out: g.out.clone(),
        ..Default::default()
    };
    Ok(base.merge(flags))
}

fn generate(g: &Global, data_seed: u64, count: Option<usize>) -> Result<()> {
    let cfg = file_config(g)?;
    let name = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| Error::Config("--dataset is required".into()))?;
    let name = DatasetName::parse(name).map_err(|e| Error::Config(e.to_string()))?;
    let mut spec = cfg
        .data
        .clone()
        .unwrap_or_else(|| DatasetSpec::default_for(name, data_seed));
    spec.seed = cfg.data_seed.unwrap_or(data_seed);
    if let Some(n) = count.or(cfg.data_count) {
        spec.count = n;
    }
    let graphs = build_dataset(&spec)?;
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("data"));
    let path = out.join(format!("{}.jsonl", name.as_str()));
    let stats = write_jsonl(&path, &graphs)?;
    println!(
        "wrote {} graphs to {} (mean size {:.2}, {} features, {} classes)",
        stats.count,
        path.display(),
        stats.mean_size,
        stats.feature_width,
        stats.classes
    );
    Ok(())
}

fn train(g: &Global, data: Option<PathBuf>, epochs: Option<usize>, log_every: usize) -> Result<()> {
    let mut file = file_config(g)?;
    if data.is_some() {
        file.data_path = data;
    }
    if epochs.is_some() {
        file.epochs = epochs;
    }
    let cfg = file.resolve()?;
    for o in train_all(&cfg, log_every)? {
        println!(
            "seed {}: best test accuracy {:.2}% at epoch {} -> {}",
            o.manifest.seed,
            100.0 * o.manifest.test_accuracy_best,
            o.manifest.best_epoch + 1,
            o.dir.display()
        );
    }
    Ok(())
}

fn output_root(g: &Global) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from("runs"))
}

fn evaluate(g: &Global, runs: Vec<PathBuf>, data: Option<PathBuf>) -> Result<()> {
    let root = output_root(g);
    let roots = if runs.is_empty() { vec![root.clone()] } else { runs };
    let dirs = find_runs(&roots)?;
    if dirs.is_empty() {
        return Err(Error::Config("no run directories found".into()));
    }
    let graphs = data.as_deref().map(read_jsonl).transpose()?;
    let reports = evaluate_runs(&dirs, graphs.as_deref())?;
    std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    write_atomic(&root.join("metrics.csv"), metrics_csv(&reports).as_bytes())?;
    let md = render_report(&reports);
    write_atomic(&root.join("metrics.md"), md.as_bytes())?;
    print!("{md}");
    Ok(())
}

fn explain(g: &Global, run: &Path, hops: usize, reps: usize, instances: usize) -> Result<()> {
    let loaded = load_run(run, None)?;
    let out = g.out.clone().unwrap_or_else(|| run.join("explain"));
    let bundle = explain_run(&loaded, &out, hops, reps, instances)?;
    for c in &bundle.clusters {
        match c.motif_separation {
            Some(s) => println!("cluster {}: motif separation {s:+.3}", c.cluster),
            None => println!("cluster {}: no motif masks", c.cluster),
        }
    }
    println!("wrote {} files to {}", bundle.files.len() + 1, out.display());
    Ok(())
}

fn report(g: &Global, dirs: Vec<PathBuf>) -> Result<()> {
    let dirs = if dirs.is_empty() { vec![output_root(g)] } else { dirs };
    let md = report_from_dirs(&dirs)?;
    if let Some(out) = &g.out {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write_atomic(&out.join("report.md"), md.as_bytes())?;
    }
    print!("{md}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match cli.command {
        Command::Generate { data_seed, count } => generate(g, data_seed, count),
        Command::Train {
            data,
            epochs,
            log_every,
        } => train(g, data, epochs, log_every),
        Command::Evaluate { runs, data } => evaluate(g, runs, data),
        Command::Explain {
            run,
            hops,
            representatives,
            instances,
        } => explain(g, &run, hops, representatives, instances),
        Command::Report { dirs } => report(g, dirs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
