use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use histoctx::imgcore::save_rgb;
use histoctx::pipeline::cell::train_cell_model;
use histoctx::pipeline::predict::{predict, Mode};
use histoctx::pipeline::region::{
    classify_superpixels, load_region_image, region_ablation, segment_region_image, stain_target, train_region_model,
};
use histoctx::pipeline::report::{
    boundary_overlay, build_report, cancer_roc, cell_confusion, read_cell_csv, write_json, write_overlays, write_run,
    Evaluation, REGION_COLORS,
};
use histoctx::pipeline::manifest::load_region_annotations;
use histoctx::pipeline::{generate_synthetic, Config, CorpusManifest, ModelBundle, Split};
use histoctx::stain::reinhard_normalize;
use histoctx::superpix::{assign_training_labels, RegionClass};

#[derive(Parser)]
#[command(name = "histoctx", version, about = "Region context for single-cell classification in H&E images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the root seed (and the synthetic seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Morphology,
    Context,
    Voting,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Morphology => Mode::Morphology,
            ModeArg::Context => Mode::Context,
            ModeArg::Voting => Mode::Voting,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Write stain-normalized region-level images.
    Normalize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write superpixels of every image, classified when a region model is given.
    SegmentRegions {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Region model.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the region classifier.
    TrainRegion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Skip cross-validation.
        #[arg(long)]
        no_cv: bool,
    },
    /// Train the cell classifier.
    TrainCell {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "morphology")]
        mode: ModeArg,
        /// Region model, required with --mode context.
        #[arg(long)]
        region_model: Option<PathBuf>,
    },
    /// Classify cells and write labels, report and ROC points.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        /// Cell model.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        region_model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "voting")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also write PNG overlays.
        #[arg(long)]
        overlays: bool,
    },
    /// Recompute metrics from per-cell CSV files.
    Evaluate {
        /// CSV files or directories holding them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Region accuracy per feature-family combination.
    Ablation {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn setup(common: &Common) -> Result<Config> {
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.synthetic.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    Ok(cfg)
}

/// Wall-clock seconds per stage, written next to the outputs.
#[derive(Default, Serialize)]
struct Timings(BTreeMap<String, f64>);

impl Timings {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.0.insert(stage.to_string(), t.elapsed().as_secs_f64());
        out
    }

    fn save(&self, out: &Path) -> Result<()> {
        write_json(&out.join("timings.json"), self)?;
        Ok(())
    }
}

fn load_model(path: &Path) -> Result<ModelBundle> {
    ModelBundle::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Synth { common } => {
            let cfg = setup(&common)?;
            let summary = generate_synthetic(&cfg.synthetic, &common.out)?;
            write_json(&common.out.join("synth_checks.json"), &summary.checks)?;
            let nuclei: usize = summary.checks.iter().map(|c| c.placed).sum();
            let off = summary.checks.iter().filter(|c| !c.within(0.1)).count();
            println!(
                "wrote {} images, {} tiles, {nuclei} nuclei to {} ({off} tiles outside density tolerance)",
                summary.manifest.images.len(),
                summary.checks.len(),
                summary.manifest_path.display()
            );
        }
        Command::Normalize { common, manifest } => {
            let cfg = setup(&common)?;
            let m = CorpusManifest::load(&manifest)?;
            let target = stain_target(&m, &cfg.region)?;
            write_json(&common.out.join("stain_target.json"), &target)?;
            for e in &m.images {
                let img = load_region_image(&m, e, &cfg.region)?;
                save_rgb(&common.out.join(format!("{}.png", e.id)), &reinhard_normalize(&img, &target))?;
            }
            println!("normalized {} images into {}", m.images.len(), common.out.display());
        }
        Command::SegmentRegions { common, manifest, model } => {
            let cfg = setup(&common)?;
            let m = CorpusManifest::load(&manifest)?;
            let model = model.as_deref().map(load_model).transpose()?;
            let target = match model.as_ref().and_then(|b| b.stain_target_stats) {
                Some(t) => t,
                None => stain_target(&m, &cfg.region)?,
            };
            #[derive(Serialize)]
            struct SuperpixelRow {
                id: usize,
                centroid: (usize, usize),
                pixel_count: usize,
                annotation: Option<RegionClass>,
                predicted: Option<RegionClass>,
            }
            for e in &m.images {
                let img = load_region_image(&m, e, &cfg.region)?;
                let mut seg = segment_region_image(&e.id, &img, &target, &cfg.region)?;
                if let Some(p) = &e.regions {
                    let regions = load_region_annotations(
                        &m.resolve(p),
                        cfg.region.pixel_size_um,
                    )?;
                    assign_training_labels(&mut seg.superpixels, &regions)?;
                }
                let predicted = match &model {
                    Some(b) => Some(classify_superpixels(b, &seg)?),
                    None => None,
                };
                let rows: Vec<SuperpixelRow> = seg
                    .superpixels
                    .iter()
                    .map(|s| SuperpixelRow {
                        id: s.id,
                        centroid: s.centroid,
                        pixel_count: s.pixel_count,
                        annotation: s.label,
                        predicted: predicted.as_ref().map(|p| p[s.id]),
                    })
                    .collect();
                write_json(&common.out.join(format!("{}_superpixels.json", e.id)), &rows)?;
                let overlay = match &predicted {
                    Some(p) => boundary_overlay(&seg, |i| REGION_COLORS[p[i].index()]),
                    None => boundary_overlay(&seg, |_| [255, 255, 255]),
                };
                save_rgb(&common.out.join(format!("{}_superpixels.png", e.id)), &overlay)?;
                println!("{}: {} superpixels", e.id, seg.superpixels.len());
            }
        }
        Command::TrainRegion { common, manifest, no_cv } => {
            let cfg = setup(&common)?;
            let m = CorpusManifest::load(&manifest)?;
            let mut timings = Timings::default();
            let t = timings.time("train_region", || train_region_model(&m, &cfg, !no_cv))?;
            t.bundle.save(&common.out.join("region_model.json"))?;
            #[derive(Serialize)]
            struct TrainReport<'a> {
                config: &'a Config,
                samples: usize,
                counts: &'a [u64],
                cv: Option<&'a histoctx::svmkit::CvResult>,
            }
            let cv = t.cv.as_ref();
            write_json(
                &common.out.join("train_region_report.json"),
                &TrainReport {
                    config: &cfg,
                    samples: t.samples,
                    counts: &t.bundle.training_metadata.counts,
                    cv,
                },
            )?;
            timings.save(&common.out)?;
            match cv {
                Some(c) => println!(
                    "region model trained on {} superpixels, {}-fold CV accuracy {:.4}",
                    t.samples,
                    c.fold_accuracies.len(),
                    c.mean_accuracy
                ),
                None => println!("region model trained on {} superpixels", t.samples),
            }
        }
        Command::TrainCell {
            common,
            manifest,
            mode,
            region_model,
        } => {
            let cfg = setup(&common)?;
            let mode = Mode::from(mode);
            let use_context = match mode {
                Mode::Morphology => false,
                Mode::Context => true,
                Mode::Voting => bail!("voting is applied at prediction time; train a morphology or context model"),
            };
            let m = CorpusManifest::load(&manifest)?;
            let region = region_model.as_deref().map(load_model).transpose()?;
            let mut timings = Timings::default();
            let t = timings.time("train_cell", || train_cell_model(&m, &cfg, region.as_ref(), use_context))?;
            let path = common.out.join(format!("cell_model_{mode}.json"));
            t.bundle.save(&path)?;
            timings.save(&common.out)?;
            println!(
                "{mode} cell model ({} features) trained on {} cells, written to {}",
                t.bundle.svm.dimension(),
                t.samples,
                path.display()
            );
        }
        Command::Predict {
            common,
            manifest,
            model,
            region_model,
            mode,
            split,
            overlays,
        } => {
            let cfg = setup(&common)?;
            let mode = Mode::from(mode);
            let m = CorpusManifest::load(&manifest)?;
            let cell = load_model(&model)?;
            let region = region_model.as_deref().map(load_model).transpose()?;
            let mut timings = Timings::default();
            let preds = timings.time("predict", || predict(&m, split.split(), region.as_ref(), &cell, mode, &cfg))?;
            let report = build_report(mode, &cfg, &preds);
            write_run(&common.out, &report, &preds)?;
            if overlays {
                timings.time("overlays", || write_overlays(&common.out.join("overlays"), &m, &preds))?;
            }
            timings.save(&common.out)?;
            match &report.cell {
                Some(e) => println!(
                    "{mode}: {} cells, {} matched, accuracy {:.4}, macro precision {:.4}, macro recall {:.4}",
                    report.cells, report.matched, e.metrics.accuracy, e.metrics.macro_precision, e.metrics.macro_recall
                ),
                None => println!("{mode}: {} cells, no annotations to score", report.cells),
            }
        }
        Command::Evaluate { inputs, out } => {
            let mut files = Vec::new();
            for p in &inputs {
                if p.is_dir() {
                    let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                        .collect();
                    found.sort();
                    files.extend(found);
                } else {
                    files.push(p.clone());
                }
            }
            let mut cells = Vec::new();
            for f in &files {
                cells.extend(read_cell_csv(f)?);
            }
            #[derive(Serialize)]
            struct Offline {
                files: usize,
                cells: usize,
                evaluation: Option<Evaluation>,
                roc_cancer: Option<histoctx::svmkit::RocCurve>,
            }
            let result = Offline {
                files: files.len(),
                cells: cells.len(),
                evaluation: Evaluation::of(cell_confusion(&cells)),
                roc_cancer: cancer_roc(&cells),
            };
            match &out {
                Some(p) => write_json(p, &result)?,
                None => println!("{}", serde_json::to_string_pretty(&result)?),
            }
            if let (Some(e), Some(_)) = (&result.evaluation, &out) {
                println!("accuracy {:.4} over {} matched cells", e.metrics.accuracy, e.confusion.total());
            }
        }
        Command::Ablation { common, manifest } => {
            let cfg = setup(&common)?;
            let m = CorpusManifest::load(&manifest)?;
            let mut timings = Timings::default();
            let rows = timings.time("ablation", || region_ablation(&m, &cfg))?;
            write_json(&common.out.join("ablation.json"), &rows)?;
            timings.save(&common.out)?;
            println!("{:<32} {:>8} {:>8}", "features", "cv", "test");
            for r in &rows {
                let test = r.test_accuracy.map(|a| format!("{:.4}", a)).unwrap_or_else(|| "-".into());
                println!("{:<32} {:>8.4} {:>8}", r.families.to_string(), r.cv_accuracy, test);
            }
        }
    }
    Ok(())
}
