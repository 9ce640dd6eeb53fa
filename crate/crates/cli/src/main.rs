//! `chipforge` command-line front end.
//!
//! Exit codes: 0 on success, 1 for input or validation errors, 2 for I/O
//! errors.

mod settings;

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use chipforge::dataset::{flip_augment, flip_proposals, load_annotations, load_proposals, write_proposals};
use chipforge::pipeline::{bench_throughput, label_records, mine_corpus};
use chipforge::stats::pixel_report;
use chipforge::synth::synth_scenes;
use chipforge::{
    read_manifest, with_workers, ChipRecord, Dataset, Manifest, ManifestHeader, ProposalMap, SynthParams,
};

use settings::{Flags, Settings};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Io(String),
    Lib(chipforge::Error),
    /// The reader of stdout went away; not reported.
    BrokenPipe,
}

impl CliError {
    fn io(path: &Path, e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return CliError::BrokenPipe;
        }
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 2,
            CliError::Lib(e) if e.is_io() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Io(m) => f.write_str(m),
            CliError::BrokenPipe => f.write_str("broken pipe"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<chipforge::Error> for CliError {
    fn from(e: chipforge::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "chipforge", version, about = "Multi-scale chip mining for detector training")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Pyramid configuration file
    #[arg(long, global = true)]
    scales: Option<PathBuf>,
    /// Seed for negative sampling
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Epoch for negative sampling
    #[arg(long, global = true)]
    epoch: Option<u64>,
    /// Worker threads; never changes the output
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Clone, Default)]
struct Inputs {
    /// COCO-style annotation file
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Add horizontally mirrored twins of every image
    #[arg(long)]
    flip: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Mine positive chips and write a manifest
    Positive {
        #[command(flatten)]
        inputs: Inputs,
        /// Output manifest (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine and sample negative chips for one epoch
    Negative {
        #[command(flatten)]
        inputs: Inputs,
        /// JSON Lines proposal file
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Output manifest (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Negative chips sampled per image per epoch
        #[arg(long)]
        neg_max: Option<usize>,
        /// Residual proposals a negative chip must hold (M)
        #[arg(long)]
        min_proposals: Option<usize>,
    },
    /// Attach proposal labels to the records of a manifest
    Labels {
        /// Manifest from `positive` or `negative`
        #[arg(long)]
        manifest: PathBuf,
        /// JSON Lines proposal file
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Checks that every record and proposal refers to a known image
        #[command(flatten)]
        inputs: Inputs,
        /// Labelled manifest (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pixel and chip accounting against a single-scale baseline
    Stats {
        /// Manifests to account; records are combined
        #[arg(long, required = true, num_args = 1..)]
        manifest: Vec<PathBuf>,
        /// COCO-style annotation file (needed for image sizes)
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// JSON report (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Chips-per-image histogram as CSV
        #[arg(long)]
        histogram_csv: Option<PathBuf>,
        /// Baseline resize: short side, long-side cap
        #[arg(long, num_args = 2, value_names = ["SHORT", "LONG"], default_values_t = [800, 1333])]
        baseline: Vec<u32>,
    },
    /// Write a synthetic annotation file and proposal file
    Synth {
        /// Images to generate
        #[arg(long, default_value_t = 1000)]
        images: usize,
        /// Noise proposals per ground-truth box
        #[arg(long, default_value_t = 1.0)]
        noise_rate: f64,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure mining throughput and compare against a single worker
    Bench {
        #[command(flatten)]
        inputs: Inputs,
        /// JSON Lines proposal file (negatives are mined when given)
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Synthetic images to use when no annotations are given
        #[arg(long, default_value_t = 10_000)]
        images: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHIPFORGE_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) | Err(CliError::BrokenPipe) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let common = cli.common;
    let flags = Flags {
        config: common.config,
        scales: common.scales,
        seed: common.seed,
        epoch: common.epoch,
        workers: common.workers,
        ..Flags::default()
    };
    match cli.command {
        Command::Positive { inputs, out } => cmd_positive(with_inputs(flags, inputs, None, out).resolve()?),
        Command::Negative {
            inputs,
            proposals,
            out,
            neg_max,
            min_proposals,
        } => cmd_negative(
            Flags {
                neg_max,
                min_proposals,
                ..with_inputs(flags, inputs, proposals, out)
            }
            .resolve()?,
        ),
        Command::Labels {
            manifest,
            proposals,
            inputs,
            out,
        } => cmd_labels(with_inputs(flags, inputs, proposals, out).resolve()?, &manifest),
        Command::Stats {
            manifest,
            annotations,
            out,
            histogram_csv,
            baseline,
        } => {
            let s = Flags {
                annotations,
                out,
                ..flags
            }
            .resolve()?;
            cmd_stats(&s, &manifest, histogram_csv.as_deref(), (baseline[0], baseline[1]))
        }
        Command::Synth { images, noise_rate, out } => {
            let s = flags.resolve()?;
            cmd_synth(images, noise_rate, s.seed, &out)
        }
        Command::Bench {
            inputs,
            proposals,
            images,
        } => cmd_bench(with_inputs(flags, inputs, proposals, None).resolve()?, images),
    }
}

fn with_inputs(flags: Flags, inputs: Inputs, proposals: Option<PathBuf>, out: Option<PathBuf>) -> Flags {
    Flags {
        annotations: inputs.annotations,
        flip: inputs.flip,
        proposals,
        out,
        ..flags
    }
}

fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::Input(format!("no {what} given (flag or config file)")))
}

/// Annotations and, when `with_proposals`, proposals. Under `--flip` both
/// gain mirrored twins; proposals are mirrored against the original images.
fn load_inputs(s: &Settings, with_proposals: bool) -> CliResult<(Dataset, Option<ProposalMap>)> {
    let path = require(&s.annotations, "--annotations")?;
    let ds = load_annotations(path)?;
    if ds.dropped_annotations > 0 {
        log::warn!("dropped {} annotations with non-positive extent", ds.dropped_annotations);
    }
    info!("{} images, {} annotations", ds.images.len(), ds.annotations.len());
    let props = if with_proposals {
        Some(load_proposals(require(&s.proposals, "--proposals")?)?)
    } else {
        None
    };
    if !s.flip {
        return Ok((ds, props));
    }
    let flipped_props = props.map(|p| flip_proposals(&ds, &p));
    Ok((flip_augment(&ds), flipped_props))
}

/// Write through `f` to `path`, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| CliError::io(p, e))?;
            let mut w = BufWriter::new(file);
            f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn summary(s: &Settings, line: &str) {
    // keep stdout clean when the manifest itself goes there
    if s.out.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn cmd_positive(s: Settings) -> CliResult {
    let (ds, _) = load_inputs(&s, false)?;
    let chips = with_workers(s.workers, || mine_corpus(&ds, None, &s.mining, s.seed, s.epoch))?;
    let coverage = chips.coverage.clone();
    let mut header = ManifestHeader::new(&s.mining, s.seed, s.epoch);
    header.coverage = Some(coverage.clone());
    let m = Manifest::new(header, chips.positives);
    emit(s.out.as_deref(), |mut w| m.write_to(&mut w))?;
    summary(
        &s,
        &format!(
            "positive chips: {} over {} images; coverage {}/{} ({})",
            m.records().len(),
            ds.images.len(),
            coverage.covered,
            coverage.valid,
            if coverage.is_complete() { "complete" } else { "INCOMPLETE" }
        ),
    );
    for (scale, gt) in coverage.uncoverable.iter().take(20) {
        log::warn!("scale {scale}: ground truth {gt} fits in no chip");
    }
    Ok(())
}

fn cmd_negative(s: Settings) -> CliResult {
    let (ds, props) = load_inputs(&s, true)?;
    let props = props.expect("requested");
    let chips = with_workers(s.workers, || mine_corpus(&ds, Some(&props), &s.mining, s.seed, s.epoch))?;
    let m = Manifest::new(ManifestHeader::new(&s.mining, s.seed, s.epoch), chips.negatives);
    emit(s.out.as_deref(), |mut w| m.write_to(&mut w))?;
    let pool: usize = chips.pool_sizes.iter().sum();
    summary(
        &s,
        &format!(
            "negative chips: {} sampled from a pool of {pool} over {} images (seed {}, epoch {})",
            m.records().len(),
            ds.images.len(),
            s.seed,
            s.epoch
        ),
    );
    Ok(())
}

fn cmd_labels(s: Settings, manifest: &Path) -> CliResult {
    let m = read_manifest(manifest)?;
    let props = match &s.annotations {
        Some(_) => {
            let (ds, props) = load_inputs(&s, true)?;
            let props = props.expect("requested");
            check_ids(&ds, m.records(), &props)?;
            props
        }
        None if s.flip => return Err(CliError::Input("--flip needs --annotations to mirror proposals".into())),
        None => load_proposals(require(&s.proposals, "--proposals")?)?,
    };
    let pyramid = m.header.pyramid()?;
    let header = m.header.clone();
    let iou_pos = header.label_iou_pos;
    let mut records = m.into_records();
    with_workers(s.workers, || label_records(&mut records, &props, &pyramid, iou_pos))?;
    let out = Manifest::new(header, records);
    emit(s.out.as_deref(), |mut w| out.write_to(&mut w))?;
    let labelled: usize = out.records().iter().map(|r| r.labels.as_ref().map_or(0, Vec::len)).sum();
    summary(&s, &format!("labelled {labelled} proposal crops in {} chips", out.records().len()));
    Ok(())
}

fn check_ids(ds: &Dataset, records: &[ChipRecord], props: &ProposalMap) -> CliResult {
    if let Some(r) = records.iter().find(|r| ds.image(r.image_id).is_none()) {
        return Err(chipforge::Error::UnknownImage(r.image_id).into());
    }
    if let Some(id) = props.keys().find(|id| ds.image(**id).is_none()) {
        return Err(CliError::Input(format!("proposals reference unknown image {id}")));
    }
    Ok(())
}

fn cmd_stats(s: &Settings, manifests: &[PathBuf], csv: Option<&Path>, baseline: (u32, u32)) -> CliResult {
    let mut records = Vec::new();
    let mut flipped = false;
    for path in manifests {
        let m = read_manifest(path)?;
        flipped |= m.records().iter().any(|r| r.flipped);
        records.extend(m.into_records());
    }
    let mut ds = load_annotations(require(&s.annotations, "--annotations")?)?;
    if flipped || s.flip {
        info!("manifest holds mirrored images; adding flipped twins to the dataset");
        ds = flip_augment(&ds);
    }
    let report = pixel_report(&records, &ds, baseline)?;
    print!("{}", report.to_table());
    match &s.out {
        Some(p) => emit(Some(p), |w| writeln!(w, "{}", report.to_json()))?,
        None => println!("{}", report.to_json()),
    }
    if let Some(p) = csv {
        emit(Some(p), |w| w.write_all(report.histogram_csv().as_bytes()))?;
    }
    Ok(())
}

fn cmd_synth(images: usize, noise_rate: f64, seed: u64, out: &Path) -> CliResult {
    if !(noise_rate.is_finite() && noise_rate >= 0.0) {
        return Err(CliError::Input(format!("--noise-rate {noise_rate} must be >= 0")));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let params = SynthParams {
        noise_rate,
        ..SynthParams::default().with_images(images)
    };
    let (ds, props) = synth_scenes(&params, seed);
    let ann = out.join("annotations.json");
    emit(Some(&ann), |w| w.write_all(ds.to_coco_json().as_bytes()))?;
    let prop_path = out.join("proposals.jsonl");
    emit(Some(&prop_path), |mut w| write_proposals(&props, &mut w))?;
    println!(
        "wrote {} images, {} annotations to {} and {} proposals to {}",
        ds.images.len(),
        ds.annotations.len(),
        ann.display(),
        props.values().map(Vec::len).sum::<usize>(),
        prop_path.display()
    );
    Ok(())
}

fn cmd_bench(s: Settings, images: usize) -> CliResult {
    let (ds, props) = match &s.annotations {
        Some(_) => load_inputs(&s, s.proposals.is_some())?,
        None => {
            let (ds, props) = synth_scenes(&SynthParams::default().with_images(images), s.seed);
            (ds, Some(props))
        }
    };
    let single = bench_throughput(&ds, props.as_ref(), &s.mining, 1)?;
    let multi = bench_throughput(&ds, props.as_ref(), &s.mining, s.workers)?;
    let report = serde_json::json!({
        "images": ds.images.len(),
        "chips": multi.chips,
        "workers": multi.workers,
        "images_per_second": multi.images_per_second,
        "wall_time_s": multi.wall_time.as_secs_f64(),
        "single_worker_images_per_second": single.images_per_second,
        "single_worker_wall_time_s": single.wall_time.as_secs_f64(),
        "identical_to_single_worker": single.digest == multi.digest,
        "digest": multi.digest,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("json"));
    if single.digest != multi.digest {
        return Err(CliError::Input("output differs between worker counts".into()));
    }
    Ok(())
}
