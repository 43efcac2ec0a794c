use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use s2t_core::checkpoint::Checkpoint;
use s2t_core::engine::{AblationMode, ObjectiveConfig};
use s2t_core::eval::{
    evaluate_embeddings, evaluate_link_prediction, random_embeddings, EvalConfig, PairFeature,
};
use s2t_core::experiment::{
    format_ablation_table, format_sweep_table, gradient_check, run_ablation, sweep, GradCheckSetup,
    SweepParam,
};
use s2t_core::gradcheck::GradCheckConfig;
use s2t_core::graph::{
    chronological_split, parse_edge_list, parse_features, ParseOptions, TemporalGraph,
};
use s2t_core::objective::{GlobalLossForm, NegForm, Reduction};
use s2t_core::structural::Activation;
use s2t_core::synthetic::{generate, SyntheticConfig};
use s2t_core::train::{train_from, write_loss_csv, GlobalReset, RunConfig, TrainState};

#[derive(Parser)]
#[command(
    name = "s2t",
    version,
    about = "Temporal graph representation learning with aligned Hawkes and GNN intensities"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on the chronological head of the stream, evaluate on the tail.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Resume from a checkpoint.
        #[arg(long)]
        load: Option<PathBuf>,
        /// Checkpoint path (default: OUT/checkpoint.bin).
        #[arg(long)]
        save: Option<PathBuf>,
        /// Skip link-prediction evaluation after training.
        #[arg(long)]
        no_eval: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint, or the random-embedding null model.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long, required_unless_present = "null")]
        load: Option<PathBuf>,
        /// Evaluate i.i.d. Gaussian embeddings instead of a model.
        #[arg(long)]
        null: bool,
        /// Embedding size for --null.
        #[arg(long, default_value_t = 128)]
        d: usize,
        #[arg(long, default_value_t = 0.8)]
        train_frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run all five module combinations with shared seeds and split.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Edge list; a small synthetic graph is used when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        seq_len: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 3)]
        batches: usize,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 1)]
        neg: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[command(flatten)]
        objective: ObjectiveArgs,
    },
    /// Sensitivity sweep over the sequence length S or the negative count Q.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// S or Q.
        #[arg(long)]
        param: String,
        /// Comma-separated values (default: 5,10,15,20,25 for S; 1..5 for Q).
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print size and degree profile of an edge list.
    Stats {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Whitespace-separated `src dst time` lines.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Optional node features, one `node f1 .. fF` line per node.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Keep raw timestamps instead of min-max normalizing them.
    #[arg(long)]
    no_time_norm: bool,
    /// Generate a synthetic long-tail graph with this many edges instead of --data.
    #[arg(long, conflicts_with = "data")]
    synthetic_edges: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    synthetic_nodes: usize,
}

#[derive(Args, Clone)]
struct ObjectiveArgs {
    /// hawkes, gnn, gnn_global, gnn_hawkes or full.
    #[arg(long, default_value = "full")]
    mode: String,
    /// Learn the loss weights through a softplus.
    #[arg(long)]
    learn_etas: bool,
    /// Use +log σ(·) in the global loss as literally written (unbounded below).
    #[arg(long)]
    lg_literal: bool,
    #[arg(long, default_value = "literal", value_parser = ["literal", "conventional"])]
    neg_form: String,
    #[arg(long, default_value = "sum", value_parser = ["sum", "mean"])]
    reduction: String,
    /// Read z_g as of batch start for every pair; apply updates after the batch.
    #[arg(long)]
    global_freeze_batch: bool,
    #[arg(long, default_value = "sigmoid", value_parser = ["sigmoid", "tanh"])]
    activation: String,
}

impl ObjectiveArgs {
    fn build(&self) -> Result<ObjectiveConfig> {
        Ok(ObjectiveConfig {
            mode: self.mode.parse::<AblationMode>()?,
            activation: if self.activation == "tanh" {
                Activation::Tanh
            } else {
                Activation::Sigmoid
            },
            neg_form: if self.neg_form == "conventional" {
                NegForm::Conventional
            } else {
                NegForm::Literal
            },
            reduction: if self.reduction == "mean" {
                Reduction::Mean
            } else {
                Reduction::Sum
            },
            global_form: if self.lg_literal {
                GlobalLossForm::Literal
            } else {
                GlobalLossForm::Intent
            },
            learn_etas: self.learn_etas,
            freeze_global: self.global_freeze_batch,
        })
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 128)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    /// Neighbor sequence length S.
    #[arg(long, default_value_t = 10)]
    seq_len: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    /// Negatives per positive pair Q.
    #[arg(long, default_value_t = 1)]
    neg: usize,
    /// Degree exponent of the negative sampler.
    #[arg(long, default_value_t = 0.75)]
    neg_power: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.8)]
    train_frac: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    early_stop_tol: f64,
    /// When the global representation restarts from zero: epoch or never.
    #[arg(long, default_value = "epoch", value_parser = ["epoch", "never"])]
    global_reset: String,
    #[command(flatten)]
    objective: ObjectiveArgs,
}

impl RunArgs {
    fn build(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            dim: self.d,
            batch_size: self.batch_size,
            negatives: self.neg,
            seq_len: self.seq_len,
            layers: self.layers,
            lr: self.lr,
            epochs: self.epochs,
            train_frac: self.train_frac,
            seed: self.seed,
            neg_power: self.neg_power,
            early_stop_tol: self.early_stop_tol,
            global_reset: if self.global_reset == "never" {
                GlobalReset::Never
            } else {
                GlobalReset::Epoch
            },
            objective: self.objective.build()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct EvalArgs {
    /// product, abs_diff or concat.
    #[arg(long, default_value = "product")]
    pair_feature: String,
    /// L2 penalty of the logistic-regression classifier.
    #[arg(long, default_value_t = 1.0)]
    ridge: f64,
}

impl EvalArgs {
    fn build(&self) -> Result<EvalConfig> {
        Ok(EvalConfig {
            pair_feature: self.pair_feature.parse::<PairFeature>()?,
            ridge: self.ridge,
            ..EvalConfig::default()
        })
    }
}

fn load_graph(a: &DataArgs, seed: u64) -> Result<TemporalGraph> {
    let mut g = match (&a.data, a.synthetic_edges) {
        (Some(path), _) => {
            let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            parse_edge_list(
                BufReader::new(f),
                ParseOptions {
                    normalize_time: !a.no_time_norm,
                },
            )
            .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(edges)) => generate(&SyntheticConfig {
            num_nodes: a.synthetic_nodes,
            num_edges: edges,
            seed,
            ..Default::default()
        })?,
        (None, None) => bail!("no input: pass --data PATH or --synthetic-edges N"),
    };
    if let Some(fp) = &a.features {
        let f = fs::File::open(fp).with_context(|| format!("opening {}", fp.display()))?;
        let feats = parse_features(BufReader::new(f), g.num_nodes)?;
        g = g.with_features(feats)?;
    }
    Ok(g)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn seeds(start: u64, n: u64) -> Vec<u64> {
    (start..start + n.max(1)).collect()
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train {
            data,
            run,
            eval,
            load,
            save,
            no_eval,
            out,
        } => {
            let mut cfg = run.build()?;
            let ecfg = eval.build()?;
            let g = load_graph(&data, cfg.seed)?;
            fs::create_dir_all(&out)?;
            let (train_g, test) = chronological_split(&g, cfg.train_frac)?;
            let resume = match &load {
                Some(p) => {
                    let ck = Checkpoint::load(p, g.features.clone())
                        .with_context(|| format!("loading {}", p.display()))?;
                    cfg.objective.learn_etas = ck.config.objective.learn_etas;
                    Some(ck.state)
                }
                None => None,
            };
            println!(
                "training {} mode on {} interactions ({} nodes), testing on {}",
                cfg.objective.mode.label(),
                train_g.len(),
                g.num_nodes,
                test.len()
            );
            let output = train_from(&cfg, &train_g, resume, &mut |e| {
                println!(
                    "epoch {:>3}  total {:.6}  task {:.6}  align {:.6}  global {:.6}  ({:.1}s)",
                    e.epoch + 1,
                    e.mean.total,
                    e.mean.task,
                    e.mean.align,
                    e.mean.global,
                    e.seconds
                );
            })?;
            write_loss_csv(
                std::io::BufWriter::new(fs::File::create(out.join("loss.csv"))?),
                &output.trace,
            )?;
            let ck_path = save.unwrap_or_else(|| out.join("checkpoint.bin"));
            Checkpoint {
                config: cfg,
                state: TrainState {
                    params: output.params.clone(),
                    optimizer: output.optimizer.clone(),
                    global: output.global.clone(),
                },
            }
            .save(&ck_path)?;
            println!(
                "{} epochs{}; checkpoint {}",
                output.epochs.len(),
                if output.stopped_early {
                    " (early stop)"
                } else {
                    ""
                },
                ck_path.display()
            );
            if !no_eval {
                let report = evaluate_link_prediction(
                    &output.params,
                    &output.global,
                    &train_g,
                    &test,
                    cfg.seq_len,
                    cfg.objective.mode,
                    cfg.objective.activation,
                    &ecfg,
                    cfg.seed,
                )?;
                write_json(&out.join("metrics.json"), &report)?;
                println!("ACC {:.4}  F1 {:.4}", report.accuracy, report.f1);
            }
            Ok(true)
        }
        Command::Eval {
            data,
            eval,
            load,
            null,
            d,
            train_frac,
            seed,
            out,
        } => {
            let ecfg = eval.build()?;
            let g = load_graph(&data, seed)?;
            fs::create_dir_all(&out)?;
            let report = if null {
                let (train_g, test) = chronological_split(&g, train_frac)?;
                let z = random_embeddings(g.num_nodes, d, seed);
                evaluate_embeddings(&z, &train_g.interactions, &test, &ecfg, seed)?
            } else {
                let path = load.expect("clap enforces --load without --null");
                let ck = Checkpoint::load(&path, g.features.clone())
                    .with_context(|| format!("loading {}", path.display()))?;
                let cfg = ck.config;
                let (train_g, test) = chronological_split(&g, cfg.train_frac)?;
                evaluate_link_prediction(
                    &ck.state.params,
                    &ck.state.global,
                    &train_g,
                    &test,
                    cfg.seq_len,
                    cfg.objective.mode,
                    cfg.objective.activation,
                    &ecfg,
                    seed,
                )?
            };
            write_json(&out.join("metrics.json"), &report)?;
            println!(
                "ACC {:.4}  F1 {:.4}  ({} positive, {} negative test pairs)",
                report.accuracy, report.f1, report.n_pos, report.n_neg
            );
            Ok(true)
        }
        Command::Ablate {
            data,
            run,
            eval,
            seeds: n,
            out,
        } => {
            let cfg = run.build()?;
            let g = load_graph(&data, cfg.seed)?;
            fs::create_dir_all(&out)?;
            let rows = run_ablation(&cfg, &eval.build()?, &g, &seeds(cfg.seed, n))?;
            print!("{}", format_ablation_table(&rows));
            write_json(&out.join("ablation.json"), &rows)?;
            Ok(true)
        }
        Command::Gradcheck {
            data,
            d,
            seq_len,
            layers,
            batches,
            batch_size,
            neg,
            seed,
            eps,
            tol,
            objective,
        } => {
            let g = match data {
                Some(p) => {
                    let f =
                        fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
                    parse_edge_list(BufReader::new(f), ParseOptions::default())?
                }
                None => generate(&SyntheticConfig {
                    num_nodes: 40,
                    num_edges: 200,
                    seed,
                    ..Default::default()
                })?,
            };
            let setup = GradCheckSetup {
                dim: d,
                seq_len,
                layers,
                batches,
                batch_size,
                negatives: neg,
                seed,
                objective: objective.build()?,
            };
            let results = gradient_check(
                &setup,
                &g,
                GradCheckConfig {
                    eps,
                    tolerance: tol,
                    seed,
                    ..GradCheckConfig::default()
                },
            )?;
            println!("{}", serde_json::to_string_pretty(&results)?);
            let passed = results.iter().all(|r| r.report.passed);
            let worst = results
                .iter()
                .map(|r| r.report.max_rel_error)
                .fold(0.0, f64::max);
            println!(
                "gradcheck {}: max relative error {:.3e} (tolerance {:.0e})",
                if passed { "passed" } else { "FAILED" },
                worst,
                tol
            );
            Ok(passed)
        }
        Command::Sweep {
            data,
            run,
            eval,
            param,
            values,
            seeds: n,
            out,
        } => {
            let cfg = run.build()?;
            let param: SweepParam = param.parse()?;
            let values = if values.is_empty() {
                param.default_values()
            } else {
                values
            };
            let g = load_graph(&data, cfg.seed)?;
            fs::create_dir_all(&out)?;
            let rows = sweep(
                &cfg,
                &eval.build()?,
                &g,
                param,
                &values,
                &seeds(cfg.seed, n),
            )?;
            print!("{}", format_sweep_table(param, &rows));
            write_json(&out.join("sweep.json"), &rows)?;
            Ok(true)
        }
        Command::Stats { data } => {
            let g = load_graph(&data, 0)?;
            let p = g.degree_profile();
            println!("interactions  {}", g.len());
            println!("node slots    {}", g.num_nodes);
            println!("active nodes  {}", p.active);
            println!("self loops    {}", g.self_loops);
            println!(
                "degree 1-20   {} ({:.1}%)",
                p.long_tail,
                100.0 * p.long_tail_fraction()
            );
            println!("degree 21-100 {}", p.medium);
            println!("degree >100   {}", p.high);
            println!(
                "time range    {} .. {}",
                g.raw_time_range.0, g.raw_time_range.1
            );
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
