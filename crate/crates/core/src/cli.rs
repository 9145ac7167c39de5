//! Command-line driver.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::eval::BiasSpec;
use crate::mask::{Face, InterventionType, RegionSelection, Split};
use crate::region::{Connectivity, WandParams};
use crate::store::{eval_dirs, IngestOptions, Store, StoreConfig};

#[derive(Debug, Parser)]
#[command(name = "segcritic", version, about = "Segmentation correction engine")]
pub struct Cli {
    /// Store root directory.
    #[arg(long, global = true, default_value = ".")]
    pub store: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON store configuration used instead of the store's own.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create an empty store.
    Init,
    /// Write a synthetic biased dataset and pretrain the baseline on it.
    SynthGen(SynthArgs),
    /// Copy `{site}/{face}.png` images into the store and split the sites.
    Ingest {
        #[arg(long)]
        src: PathBuf,
        /// Indexed-PNG labels laid out like the images.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Train, val and test fractions, e.g. 0.7,0.1,0.2.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        ratios: Option<Vec<f64>>,
    },
    /// Predict every face with the current checkpoint.
    Predict {
        /// Read `{site}/{face}.segl` logits instead of running the model.
        #[arg(long)]
        external_logits: Option<PathBuf>,
    },
    /// Score predictions and flag likely failure regions.
    Detect {
        /// Read `{site}/{face}.segf` score maps instead of prediction entropy.
        #[arg(long)]
        external_scores: Option<PathBuf>,
    },
    /// Apply corrections from a JSONL script, one correction per line.
    Correct {
        #[arg(long)]
        script: PathBuf,
    },
    /// Propagate human records (all live ones by default).
    Propagate {
        #[arg(long)]
        record: Option<String>,
    },
    /// Accept or reject a review item.
    Review {
        item: String,
        #[arg(long, conflicts_with = "reject")]
        accept: bool,
        #[arg(long)]
        reject: bool,
    },
    /// Fine-tune the current checkpoint on labels and corrections.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate checkpoints on a split, or compare two mask directories.
    Eval {
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, requires = "gt")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        gt: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Write working masks and live records to a directory.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_pool: Option<usize>,
    #[arg(long)]
    pub n_ood: Option<usize>,
    #[arg(long)]
    pub clone_rate: Option<f64>,
    #[arg(long)]
    pub clones_per_source: Option<usize>,
    #[arg(long)]
    pub size: Option<u32>,
}

/// One line of a `correct` script. Either `seed` (a wand click) or
/// `selection` (run-length encoded) picks the region.
#[derive(Debug, Deserialize)]
pub struct ScriptLine {
    pub site_id: String,
    #[serde(default = "flat")]
    pub face: Face,
    pub class: u8,
    #[serde(default = "default_intervention")]
    pub intervention_type: InterventionType,
    pub seed: Option<(u32, u32)>,
    pub tolerance: Option<f64>,
    pub connectivity: Option<Connectivity>,
    pub selection: Option<RegionSelection>,
    #[serde(default = "one")]
    pub interactions: u32,
    #[serde(default)]
    pub elapsed_s: f64,
}

fn flat() -> Face {
    Face::Flat
}

fn default_intervention() -> InterventionType {
    InterventionType::FeatureSuppression
}

fn one() -> u32 {
    1
}

fn load_config(cli: &Cli, base: Option<StoreConfig>) -> Result<StoreConfig> {
    let mut cfg = match &cli.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => base.unwrap_or_default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn open(cli: &Cli) -> Result<Store> {
    let mut store = Store::open(&cli.store).with_context(|| format!("opening store {}", cli.store.display()))?;
    let cfg = load_config(cli, Some(store.config.clone()))?;
    store.set_config(cfg);
    Ok(store)
}

fn parse_split(s: &str) -> Result<Split> {
    serde_json::from_value(serde_json::Value::String(s.into())).with_context(|| format!("unknown split {s:?}"))
}

fn run_script(store: &mut Store, path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let l: ScriptLine = serde_json::from_str(line).with_context(|| format!("script line {}", n + 1))?;
        let sel = match (&l.selection, l.seed) {
            (Some(s), _) => s.clone(),
            (None, Some(seed)) => {
                let params = WandParams {
                    tolerance: l.tolerance.unwrap_or(store.config.wand.tolerance),
                    connectivity: l.connectivity.unwrap_or(store.config.wand.connectivity),
                };
                store.wand(&l.site_id, l.face, seed, params)?
            }
            (None, None) => bail!("script line {}: needs a seed or a selection", n + 1),
        };
        let r = store
            .submit_correction(&l.site_id, l.face, &sel, l.class, l.intervention_type, l.interactions, l.elapsed_s)
            .with_context(|| format!("script line {}", n + 1))?;
        ids.push(r.record_id);
    }
    Ok(ids)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Init => {
            let cfg = load_config(&cli, None)?;
            Store::init(&cli.store, cfg)?;
            println!("initialized {}", cli.store.display());
        }
        Command::SynthGen(a) => {
            let mut store = open(&cli)?;
            let d = BiasSpec::default();
            let size = a.size.unwrap_or(d.width);
            let spec = BiasSpec {
                seed: store.config.seed,
                n_train: a.n_train.unwrap_or(d.n_train),
                n_pool: a.n_pool.unwrap_or(d.n_pool),
                n_ood: a.n_ood.unwrap_or(d.n_ood),
                clone_rate: a.clone_rate.unwrap_or(d.clone_rate),
                clones_per_source: a.clones_per_source.unwrap_or(d.clones_per_source),
                width: size,
                height: size,
                ..d
            };
            let reg = store.synth_gen(&spec)?;
            println!(
                "wrote {} sites; {} planted clones over {} sources (rate {:.3})",
                store.manifest().sites.len(),
                reg.registry.clones.len(),
                reg.registry.sources.len(),
                reg.registry.planted_rate()
            );
        }
        Command::Ingest { src, labels, ratios } => {
            let mut store = open(&cli)?;
            let ratios = ratios.as_ref().map(|r| (r[0], r[1], r[2]));
            store.ingest(src, &IngestOptions { labels: labels.clone(), ratios })?;
            println!("{} sites in store", store.manifest().sites.len());
        }
        Command::Predict { external_logits } => {
            let n = open(&cli)?.predict(external_logits.as_deref())?;
            println!("predicted {n} faces");
        }
        Command::Detect { external_scores } => {
            let reports = open(&cli)?.detect(external_scores.as_deref())?;
            let flagged: usize = reports.iter().map(|r| r.regions.len()).sum();
            println!("flagged {flagged} regions on {} faces", reports.len());
        }
        Command::Correct { script } => {
            let mut store = open(&cli)?;
            store.open_session()?;
            for id in run_script(&mut store, script)? {
                println!("{id}");
            }
        }
        Command::Propagate { record } => {
            let mut store = open(&cli)?;
            let targets: Vec<String> = match record {
                Some(r) => vec![r.clone()],
                None => store
                    .state()
                    .live_records()
                    .filter(|r| r.provenance.is_human())
                    .map(|r| r.record_id.clone())
                    .collect(),
            };
            for id in targets {
                let s = store.propagate(&id)?;
                println!(
                    "{id}: {} auto-applied, {} queued for review, {} already handled",
                    s.auto_applied.len(),
                    s.review.len(),
                    s.suppressed
                );
            }
        }
        Command::Review { item, accept, reject } => {
            if accept == reject {
                bail!("pass exactly one of --accept or --reject");
            }
            open(&cli)?.review(item, *accept)?;
            println!("{item}: {}", if *accept { "accepted" } else { "rejected" });
        }
        Command::Train { epochs } => {
            let r = open(&cli)?.train(*epochs)?;
            let total = |l: &Option<crate::learn::LossBreakdown>| l.as_ref().map_or(f64::NAN, |l| l.total);
            println!(
                "trained on {} labeled, {} human, {} propagated; loss {:.4} -> {:.4}",
                r.seg_items,
                r.cf_items,
                r.prop_items,
                total(&r.initial),
                total(&r.last)
            );
        }
        Command::Eval { split, pred, gt } => match (pred, gt) {
            (Some(p), Some(g)) => println!("mIoU {:.4}", eval_dirs(p, g)?.mean),
            _ => {
                let store = open(&cli)?;
                store.eval(parse_split(split)?)?;
                print!("{}", fs::read_to_string(store.path("reports/metrics.txt"))?);
            }
        },
        Command::Serve { addr } => {
            let store = open(&cli)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(store, *addr))?;
        }
        Command::Export { out } => {
            let n = open(&cli)?.export(out)?;
            println!("exported {n} masks to {}", out.display());
        }
    }
    Ok(())
}
