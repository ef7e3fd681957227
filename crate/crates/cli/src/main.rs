use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use structbal::classifier::{Pipeline, SbParams};
use structbal::config::{parse_seeds, ExperimentConfig};
use structbal::data::{
    load_dataset, load_graph_features, make_step_split, read_split, write_embeddings_csv, write_features_csv,
    write_labels_csv, write_split_csv, Dataset, SplitSpec,
};
use structbal::diffusion::{run_rd, DiffusionParams, Mode};
use structbal::experiment::{enhance_graph, run_experiment, run_seed};
use structbal::graph::{normalize_sym, write_edge_list};
use structbal::metrics::EvalReport;
use structbal::params_io::{read_params, write_params};
use structbal::sbm::{class_conditional_features, generate_sbm, SbmConfig};
use structbal::theory::{propagation_matrix, verify_theory, TheoryConfig};

#[derive(Parser)]
#[command(name = "structbal", version, about = "Structural-balance toolkit for imbalanced node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a two-block SBM with Gaussian class-conditional features.
    GenSbm(GenSbmArgs),
    /// Mine hard samples and write the augmented graph plus a decision report.
    Enhance(EnhanceArgs),
    /// Run relation diffusion and export node embeddings.
    Diffuse(DiffuseArgs),
    /// Train on one seed; write parameters, split, graph and test metrics.
    Train(TrainArgs),
    /// Evaluate saved parameters.
    Evaluate(EvaluateArgs),
    /// Check the closed-form structural-imbalance results numerically.
    VerifyTheory(VerifyArgs),
    /// Full multi-seed pipeline with an aggregate report.
    Run(RunArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_dataset(&self.edges, &self.features, &self.labels).context("loading dataset")
    }
}

/// Hyperparameter overrides applied on top of defaults or a config file.
#[derive(Args, Default)]
struct HyperArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "p-drop")]
    p_drop: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated seeds, e.g. `0,1,2,3,4`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long = "no-se")]
    no_se: bool,
    #[arg(long = "no-rd")]
    no_rd: bool,
}

impl HyperArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.rho {
            cfg.split.rho = v;
        }
        if let Some(v) = self.k {
            cfg.diffusion.k = v;
        }
        if let Some(v) = self.alpha {
            cfg.diffusion.alpha = v;
        }
        if let Some(v) = self.p_drop {
            cfg.diffusion.p_drop = v;
        }
        if let Some(v) = self.xi {
            cfg.xi = v;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_seeds(s)?;
        }
        cfg.no_se |= self.no_se;
        cfg.no_rd |= self.no_rd;
        cfg.validate()?;
        Ok(cfg)
    }

    fn first_seed(cfg: &ExperimentConfig) -> u64 {
        cfg.seeds[0]
    }
}

#[derive(Args)]
struct GenSbmArgs {
    #[arg(long, default_value_t = 500)]
    n1: usize,
    #[arg(long, default_value_t = 50)]
    n2: usize,
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    #[arg(long, default_value_t = 0.005)]
    q: f64,
    /// Feature dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Distance between the two class centroids.
    #[arg(long, default_value_t = 1.5)]
    distance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for edges.txt, features.csv and labels.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EnhanceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output directory for edges_aug.txt and se_report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiffuseArgs {
    #[arg(long)]
    edges: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Trained parameters; a seeded random projection is used otherwise.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Embeddings CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long)]
    params: PathBuf,
    /// Split CSV; all nodes are evaluated when omitted.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Also write classifier embeddings to this CSV.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.1)]
    q: f64,
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long = "sigma-max", default_value_t = 1.0)]
    sigma_max: f64,
    #[arg(long = "l-max", default_value_t = 12)]
    l_max: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn gen_sbm(args: &GenSbmArgs) -> Result<()> {
    let cfg = SbmConfig::new(args.n1, args.n2, args.p, args.q)?;
    let (g, labels) = generate_sbm(&cfg, args.seed)?;
    let x = class_conditional_features(&labels, args.dim, args.distance, args.seed.wrapping_add(1))?;
    fs::create_dir_all(&args.out)?;
    write_edge_list(&g, create(&args.out.join("edges.txt"))?)?;
    write_features_csv(&x, create(&args.out.join("features.csv"))?)?;
    write_labels_csv(&labels, create(&args.out.join("labels.csv"))?)?;
    eprintln!("wrote {} nodes, {} edges to {}", g.n(), g.num_edges(), args.out.display());
    Ok(())
}

fn enhance(args: &EnhanceArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.hyper.resolve()?;
    let seed = HyperArgs::first_seed(&cfg);
    let split = make_step_split(&ds.labels, &SplitSpec { seed, ..cfg.split })?;
    let result = enhance_graph(&ds, &split, &cfg, seed)?;
    fs::create_dir_all(&args.out)?;
    write_edge_list(&result.graph, create(&args.out.join("edges_aug.txt"))?)?;
    write_split_csv(&split, create(&args.out.join("split.csv"))?)?;
    let mut rep = create(&args.out.join("se_report.csv"))?;
    writeln!(rep, "u,v_star,class,sim,tau,accepted")?;
    let mut rows: Vec<_> = result
        .report
        .added
        .iter()
        .map(|e| (e, true))
        .chain(result.report.rejected.iter().map(|e| (e, false)))
        .collect();
    rows.sort_by_key(|(e, _)| e.candidate);
    for (e, accepted) in rows {
        writeln!(
            rep,
            "{},{},{},{:.6},{:.6},{}",
            e.candidate, e.anchor, e.class, e.similarity, e.threshold, accepted
        )?;
    }
    eprintln!(
        "{} initial candidates, {} confirmed, {} edges added, {} rejected, {} without anchors",
        result.candidates.s_init.len(),
        result.candidates.s_cand.len(),
        result.report.added.len(),
        result.report.rejected.len(),
        result.report.skipped.len()
    );
    Ok(())
}

fn load_params(path: &Path) -> Result<SbParams> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_params(std::io::BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn diffuse(args: &DiffuseArgs) -> Result<()> {
    let (g, x) = load_graph_features(&args.edges, &args.features).context("loading graph")?;
    let cfg = args.hyper.resolve()?;
    let mut dcfg = if cfg.no_rd { cfg.diffusion.without_diffusion() } else { cfg.diffusion };
    let params = match &args.params {
        Some(p) => load_params(p)?.diffusion,
        None => DiffusionParams::init(x.cols(), dcfg.d_out, HyperArgs::first_seed(&cfg))?,
    };
    dcfg.d_out = params.w.cols();
    let h = run_rd(&g, &x, &dcfg, &params, 0, Mode::Eval)?;
    write_embeddings_csv(&h, create(&args.out)?)?;
    Ok(())
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.hyper.resolve()?;
    let seed = HyperArgs::first_seed(&cfg);
    let run = run_seed(&ds, &cfg, seed)?;
    fs::create_dir_all(&args.out)?;
    write_params(&run.params, create(&args.out.join("params.bin"))?)?;
    write_split_csv(&run.split, create(&args.out.join("split.csv"))?)?;
    write_edge_list(&run.graph, create(&args.out.join("edges_train.txt"))?)?;
    let mut cfg_out = create(&args.out.join("config.txt"))?;
    write!(cfg_out, "{cfg}")?;
    let mut rep = create(&args.out.join("report.txt"))?;
    writeln!(rep, "[seed {seed}]")?;
    write!(rep, "{}", run.report)?;
    print!("{}", run.report);
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.hyper.resolve()?;
    let params = load_params(&args.params)?;
    let mut dcfg = if cfg.no_rd { cfg.diffusion.without_diffusion() } else { cfg.diffusion };
    dcfg.d_out = params.diffusion.w.cols();
    if params.diffusion.w.rows() != ds.features.cols() {
        bail!(
            "parameters expect {} feature columns, dataset has {}",
            params.diffusion.w.rows(),
            ds.features.cols()
        );
    }
    let mask = match &args.split {
        Some(p) => read_split(p, ds.n(), ds.num_classes)?.test,
        None => vec![true; ds.n()],
    };
    let a = normalize_sym(&ds.graph);
    let pipeline = Pipeline { a: &a, x: &ds.features, cfg: &dcfg };
    let (probs, hidden) = pipeline.forward(&params, 0, Mode::Eval)?;
    let report = EvalReport::compute(&probs, &hidden, &ds.labels, &mask)?;
    if let Some(p) = &args.embeddings {
        write_embeddings_csv(&hidden, create(p)?)?;
    }
    write!(output(args.out.as_deref())?, "{report}")?;
    Ok(())
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let cfg = TheoryConfig {
        p: args.p,
        q: args.q,
        beta: args.beta,
        sigma_max: args.sigma_max,
        l_max: args.l_max,
        seed: args.seed,
    };
    let m = propagation_matrix(cfg.p, cfg.q, cfg.beta)?;
    let checks = verify_theory(&cfg)?;
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "# M = [[{:.6}, {:.6}], [{:.6}, {:.6}]]", m.0[0][0], m.0[0][1], m.0[1][0], m.0[1][1])?;
    writeln!(out, "quantity,closed_form,empirical,rel_error,tolerance,status")?;
    for c in &checks {
        writeln!(
            out,
            "{},{:.10},{:.10},{:.3e},{:.1e},{}",
            c.quantity,
            c.closed_form,
            c.empirical,
            c.rel_error,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        )?;
    }
    out.flush()?;
    Ok(checks.iter().all(|c| c.passed()))
}

fn run(args: &RunArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = args.hyper.resolve()?;
    let report = run_experiment(&ds, &cfg)?;
    write!(output(args.out.as_deref())?, "{report}")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSbm(a) => gen_sbm(a).map(|_| true),
        Command::Enhance(a) => enhance(a).map(|_| true),
        Command::Diffuse(a) => diffuse(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::VerifyTheory(a) => verify(a),
        Command::Run(a) => run(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more theory checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
