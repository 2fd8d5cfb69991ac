//! The `nisp` command line.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nisp_core::analysis::{count_cost, pca_energy, verify_bound, ware};
use nisp_core::engine::{accuracy, batch_responses, top1_agreement};
use nisp_core::propagation::keep_count;
use nisp_core::ranking::{rank_layer, DEFAULT_ALPHA};
use nisp_core::surgery::{apply_plan, lbl_plan, magnitude_plan, nisp_plan, random_plan};
use nisp_core::trainer::{
    finetune_with_eval, init_dense, reinitialize, synth_dataset, train_with_eval, LearningCurve,
    SynthSpec, TrainConfig,
};
use nisp_core::{Activation, ImportancePlan, Layer, Network, PruneConfig, PruneIndicator, Sample};

use crate::dataset::{check_input, dataset_csv, load_dataset, Dataset};
use crate::io::{read_text, write_all_atomic, write_atomic};
use crate::model_format::{load_model, save_model};
use crate::plan_format::save_plan;
use crate::report::{
    compare_csv, compare_curves_csv, curve_csv, ranking_csv, surgery_csv, verify_csv, CompareRow,
    Trial, VerifySummary,
};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "nisp", version, about = "Neuron importance score propagation pruning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank the final response layer and write `neuron_index,score`.
    Rank(RankArgs),
    /// Propagate importance, prune and write the pruned model, plan and surgery report.
    Prune(PruneArgs),
    /// Prune with several strategies and seeds, fine-tune and tabulate metrics.
    Compare(CompareArgs),
    /// Check the pruning-error bound on random masks of one layer.
    Verify(VerifyArgs),
    /// Write a labeled Gaussian-blob dataset.
    Synth(SynthArgs),
    /// Train a fresh dense network.
    Train(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Strategy {
    Nisp,
    NispMag,
    Lbl,
    Random,
    Scratch,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Nisp => "nisp",
            Strategy::NispMag => "nisp-mag",
            Strategy::Lbl => "lbl",
            Strategy::Random => "random",
            Strategy::Scratch => "scratch",
        })
    }
}

#[derive(Debug, Args)]
pub struct Inputs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct Ratios {
    /// Keep fraction for every prunable layer.
    #[arg(long, value_name = "FRAC")]
    pub ratio_all: Option<f64>,
    /// Keep fraction for one layer, `layer_id=frac`; overrides --ratio-all.
    #[arg(long, value_name = "ID=FRAC", value_parser = parse_layer_ratio)]
    pub ratio: Vec<(usize, f64)>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Print how many principal components of each prunable layer reach this
    /// share of the response energy.
    #[arg(long, value_name = "ENERGY")]
    pub pca_threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long, value_enum, default_value_t = Strategy::Nisp)]
    pub strategy: Strategy,
    #[command(flatten)]
    pub ratios: Ratios,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for model.json, plan.json and surgery.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Held-out data for accuracies and agreement; defaults to --data.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Strategies to run; all five when omitted.
    #[arg(long, value_enum)]
    pub strategy: Vec<Strategy>,
    #[command(flatten)]
    pub ratios: Ratios,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Seeds to run; repeatable.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Vec<u64>,
    /// Run seeds 0..N.
    #[arg(long)]
    pub seeds: Option<u64>,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    /// Learning rate for training from scratch; fine-tuning uses a tenth.
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every learning curve here.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub layer: usize,
    /// Keep fraction of each random mask.
    #[arg(long, default_value_t = 0.5)]
    pub ratio: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    /// CSV of trials; the summary goes next to it with a `.json` extension.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0.4)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Layer widths including input and output, e.g. `8,64,32,4`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "relu", value_parser = parse_activation)]
    pub activation: Activation,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

fn parse_layer_ratio(s: &str) -> std::result::Result<(usize, f64), String> {
    let (id, frac) = s.split_once('=').ok_or("expected layer_id=fraction")?;
    let id = id.trim().parse().map_err(|_| format!("bad layer id {:?}", id))?;
    let frac = frac.trim().parse().map_err(|_| format!("bad fraction {:?}", frac))?;
    Ok((id, frac))
}

fn parse_activation(s: &str) -> std::result::Result<Activation, String> {
    Activation::from_name(s).ok_or_else(|| format!("unknown activation {:?}", s))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("--alpha must lie in [0, 1], got {}", alpha)));
    }
    Ok(())
}

fn check_fraction(flag: &str, f: f64) -> Result<()> {
    if !(f > 0.0 && f <= 1.0) {
        return Err(Error::Usage(format!("{} must lie in (0, 1], got {}", flag, f)));
    }
    Ok(())
}

impl Ratios {
    fn config(&self, net: &Network) -> Result<PruneConfig> {
        if self.ratio_all.is_none() && self.ratio.is_empty() {
            return Err(Error::Usage("give --ratio-all or at least one --ratio".into()));
        }
        let mut cfg = match self.ratio_all {
            Some(f) => {
                check_fraction("--ratio-all", f)?;
                PruneConfig::uniform(net, f)?
            }
            None => PruneConfig::keep_all(),
        };
        for &(id, f) in &self.ratio {
            check_fraction("--ratio", f)?;
            if !net.is_prunable(id) {
                return Err(Error::Usage(format!("layer {} is not prunable", id)));
            }
            cfg.set(id, f)?;
        }
        cfg.check(net)?;
        Ok(cfg)
    }
}

fn load_inputs(inputs: &Inputs) -> Result<(Network, Dataset)> {
    let net = load_model(&read_text(&inputs.model)?).map_err(|e| with_path(e, &inputs.model))?;
    let data = load_dataset(&inputs.data)?;
    check_input(&data, net.input_shape(), &inputs.data)?;
    Ok((net, data))
}

fn load_eval(path: &Path, net: &Network) -> Result<Dataset> {
    let data = load_dataset(path)?;
    check_input(&data, net.input_shape(), path)?;
    Ok(data)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(m) => Error::parse(path, m),
        other => other,
    }
}

fn make_plan(
    strategy: Strategy,
    net: &Network,
    data: &[Sample],
    cfg: &PruneConfig,
    alpha: f64,
    seed: u64,
) -> Result<ImportancePlan> {
    Ok(match strategy {
        Strategy::Nisp => nisp_plan(net, data, cfg, alpha)?,
        Strategy::NispMag => magnitude_plan(net, cfg)?,
        Strategy::Lbl => lbl_plan(net, data, cfg, alpha)?,
        // Scratch only keeps the pruned architecture, so which units survive
        // does not matter.
        Strategy::Random | Strategy::Scratch => random_plan(net, cfg, seed)?,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rank(a) => rank(&a),
        Command::Prune(a) => prune(&a),
        Command::Compare(a) => compare(&a),
        Command::Verify(a) => verify(&a),
        Command::Synth(a) => synth(&a),
        Command::Train(a) => train_cmd(&a),
    }
}

fn rank(a: &RankArgs) -> Result<()> {
    check_alpha(a.alpha)?;
    if let Some(t) = a.pca_threshold {
        check_fraction("--pca-threshold", t)?;
    }
    let (net, data) = load_inputs(&a.inputs)?;
    let s_n = rank_layer(&net, &data.samples, net.frl_index(), a.alpha)?;
    let csv = ranking_csv(&s_n)?;
    if let Some(t) = a.pca_threshold {
        for l in net.prunable_layers() {
            let resp = batch_responses(&net, &data.samples, l)?;
            let pca = pca_energy(&resp, t)?;
            let n = pca.eigenvalues.len();
            println!(
                "layer {}: {} of {} principal components hold {:.1}% of the energy{}; suggested keep fraction {:.3}",
                l,
                pca.components,
                n,
                100.0 * t,
                if pca.degenerate { " (degenerate responses)" } else { "" },
                pca.components as f64 / n as f64
            );
        }
    }
    write_atomic(&a.out, csv.as_bytes())
}

fn prune(a: &PruneArgs) -> Result<()> {
    check_alpha(a.alpha)?;
    let (net, data) = load_inputs(&a.inputs)?;
    let cfg = a.ratios.config(&net)?;
    let plan = make_plan(a.strategy, &net, &data.samples, &cfg, a.alpha, a.seed)?;
    let (mut pruned, report) = apply_plan(&net, &plan)?;
    if a.strategy == Strategy::Scratch {
        pruned = reinitialize(&pruned, a.seed)?;
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let model = save_model(&pruned);
    let plan = save_plan(&plan);
    let surgery = surgery_csv(&report)?;
    write_all_atomic(&[
        (&a.out.join("model.json"), model.as_bytes()),
        (&a.out.join("plan.json"), plan.as_bytes()),
        (&a.out.join("surgery.csv"), surgery.as_bytes()),
    ])
}

fn compare(a: &CompareArgs) -> Result<()> {
    check_alpha(a.alpha)?;
    let (net, data) = load_inputs(&a.inputs)?;
    if let Some(l) = net.layers().iter().position(|l| !matches!(l, Layer::Dense(_))) {
        return Err(nisp_core::Error::Unsupported(format!(
            "compare fine-tunes and needs a dense-only model; layer {} is {}",
            l,
            net.layer(l).kind().name()
        ))
        .into());
    }
    let eval = match &a.eval {
        Some(p) => load_eval(p, &net)?,
        None => data.clone(),
    };
    let cfg = a.ratios.config(&net)?;
    let mut strategies = if a.strategy.is_empty() {
        vec![
            Strategy::Nisp,
            Strategy::NispMag,
            Strategy::Lbl,
            Strategy::Random,
            Strategy::Scratch,
        ]
    } else {
        a.strategy.clone()
    };
    strategies.sort();
    strategies.dedup();
    let mut seeds = match a.seeds {
        Some(n) => (0..n).collect(),
        None if a.seed.is_empty() => vec![0],
        None => a.seed.clone(),
    };
    seeds.sort();
    seeds.dedup();
    let base = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: 0,
    };
    base.check().map_err(|e| Error::Usage(e.to_string()))?;

    let frl = net.frl_index();
    let s_n = rank_layer(&net, &data.samples, frl, a.alpha)?;
    let cost = count_cost(&net);
    let mut rows = Vec::new();
    let mut curves: Vec<(String, u64, LearningCurve)> = Vec::new();
    for &strategy in &strategies {
        for &seed in &seeds {
            let plan = make_plan(strategy, &net, &data.samples, &cfg, a.alpha, seed)?;
            let (pruned, _) = apply_plan(&net, &plan)?;
            let tcfg = TrainConfig { seed, ..base };
            let (start, (tuned, curve)) = if strategy == Strategy::Scratch {
                let fresh = reinitialize(&pruned, seed)?;
                let run = train_with_eval(&fresh, &data.samples, &eval.samples, &tcfg)?;
                (fresh, run)
            } else {
                let run = finetune_with_eval(&pruned, &data.samples, &eval.samples, &tcfg)?;
                (pruned, run)
            };
            let kept = plan
                .indicator(frl)
                .cloned()
                .unwrap_or_else(|| PruneIndicator::keep_all(frl, s_n.len()));
            let (flops, params) = count_cost(&start).reduction_vs(&cost);
            rows.push(CompareRow {
                strategy: strategy.to_string(),
                seed,
                pre_finetune_accuracy: accuracy(&start, &eval.samples)?,
                post_finetune_accuracy: accuracy(&tuned, &eval.samples)?,
                ware: ware(&net, &start, &eval.samples, &s_n, &kept)?,
                flops_reduction_pct: flops,
                params_reduction_pct: params,
                top1_agreement: top1_agreement(&net, &tuned, &eval.samples)?,
            });
            curves.push((strategy.to_string(), seed, curve));
        }
    }
    let table = compare_csv(&rows)?;
    match &a.curves {
        Some(path) => {
            let c = compare_curves_csv(&curves)?;
            write_all_atomic(&[(&a.out, table.as_bytes()), (path, c.as_bytes())])
        }
        None => write_atomic(&a.out, table.as_bytes()),
    }
}

fn verify(a: &VerifyArgs) -> Result<()> {
    check_alpha(a.alpha)?;
    check_fraction("--ratio", a.ratio)?;
    let (net, data) = load_inputs(&a.inputs)?;
    let frl = net.frl_index();
    if a.layer > frl {
        return Err(Error::Usage(format!(
            "--layer {} lies past the final response layer {}",
            a.layer, frl
        )));
    }
    let mut trials = Vec::with_capacity(a.trials);
    if a.trials > 0 {
        let s_n = rank_layer(&net, &data.samples, frl, a.alpha)?;
        let shape = net.output_shape(a.layer);
        let units = shape.units();
        let keep = keep_count(units, a.ratio);
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        for _ in 0..a.trials {
            let mut unit_mask = vec![false; units];
            for i in sample(&mut rng, units, keep) {
                unit_mask[i] = true;
            }
            let mask = shape.expand_units(&unit_mask);
            let report = verify_bound(&net, a.layer, &data.samples, &s_n, &mask)?;
            trials.push(Trial { kept: keep, report });
        }
    }
    let csv = verify_csv(&trials)?;
    let summary = VerifySummary::new(a.layer, &trials);
    let violations = summary.violations;
    let json = summary.to_json();
    write_all_atomic(&[
        (&a.out, csv.as_bytes()),
        (&a.out.with_extension("json"), json.as_bytes()),
    ])?;
    println!("{} trials, {} violations", a.trials, violations);
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let samples = synth_dataset(&SynthSpec {
        n_classes: a.classes,
        dim: a.dim,
        samples_per_class: a.per_class,
        cluster_spread: a.spread,
        seed: a.seed,
    })
    .map_err(|e| match e {
        nisp_core::Error::Invalid(m) => Error::Usage(m),
        other => other.into(),
    })?;
    let csv = dataset_csv(&samples)?;
    write_atomic(&a.out, csv.as_bytes())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let net = init_dense(&a.sizes, a.activation, a.seed).map_err(|e| Error::Usage(e.to_string()))?;
    let data = load_dataset(&a.data)?;
    check_input(&data, net.input_shape(), &a.data)?;
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    cfg.check().map_err(|e| Error::Usage(e.to_string()))?;
    let (trained, curve) = train_with_eval(&net, &data.samples, &data.samples, &cfg)?;
    let model = save_model(&trained);
    match &a.curve {
        Some(path) => {
            let c = curve_csv(&curve)?;
            write_all_atomic(&[(&a.out, model.as_bytes()), (path, c.as_bytes())])
        }
        None => write_atomic(&a.out, model.as_bytes()),
    }
}
