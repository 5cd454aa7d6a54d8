use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use myoseg::config::{ReferencePolicy, RunConfig};
use myoseg::imgio::DatasetManifest;
use myoseg::pipeline;
use myoseg::{Error, Result};

/// Block-texture muscle segmentation with atlas-based muscle labeling.
#[derive(Parser, Debug)]
#[command(name = "myoseg", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run config; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[arg(long, global = true)]
    erosion_radius: Option<usize>,
    #[arg(long, global = true)]
    block_size: Option<usize>,
    #[arg(long, global = true)]
    orientations: Option<usize>,
    #[arg(long, global = true)]
    log_size: Option<usize>,
    #[arg(long, global = true)]
    log_sigma: Option<f64>,
    #[arg(long, global = true)]
    dwt_levels: Option<usize>,
    #[arg(long, global = true)]
    bone_min_area: Option<usize>,
    #[arg(long, global = true)]
    bone_max_area: Option<usize>,
    /// `random` or a slice position in manifest order.
    #[arg(long, global = true, value_parser = parse_reference)]
    atlas_reference: Option<ReferencePolicy>,
    /// Keep only these volume ids (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    only: Vec<String>,
    /// Drop these volume ids (comma separated).
    #[arg(long, global = true, value_delimiter = ',')]
    exclude: Vec<String>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Phantom {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        volumes: usize,
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Write block descriptors as CSV.
    Features {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the block classifier.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict binary muscle masks.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the muscle atlas.
    Atlas {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Label binary masks with an atlas.
    Label {
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        atlas: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-volume-out cross-validation.
    Crossval {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_reference(s: &str) -> std::result::Result<ReferencePolicy, String> {
    if s == "random" {
        return Ok(ReferencePolicy::Random);
    }
    s.parse()
        .map(ReferencePolicy::Index)
        .map_err(|_| format!("expected `random` or an index, got {s:?}"))
}

fn resolve_config(g: &Global) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $($field:ident).+;)*) => {
            $(if let Some(v) = g.$flag { c.$($field).+ = v; })*
        };
    }
    apply! {
        seed => seed;
        rounds => rounds;
        erosion_radius => erosion_radius;
        block_size => features.block_size;
        orientations => features.orientations;
        log_size => features.log_size;
        log_sigma => features.log_sigma;
        dwt_levels => features.dwt_levels;
        bone_min_area => bone.min_area;
        bone_max_area => bone.max_area;
        atlas_reference => atlas_reference;
    }
    c.validate()?;
    Ok(c)
}

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Config(format!("missing --{what} (not set in config either)")))
}

fn manifest(g: &Global, path: &Path) -> Result<DatasetManifest> {
    let m = DatasetManifest::load(path)?;
    let m = m.filtered(|v| (g.only.is_empty() || g.only.iter().any(|o| o == v)) && !g.exclude.iter().any(|e| e == v));
    if m.volumes.is_empty() {
        return Err(Error::Config("volume filter leaves no volumes".into()));
    }
    Ok(m)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let c = resolve_config(g)?;
    let paths = &c.paths;
    match cli.command {
        Command::Phantom {
            spec,
            out,
            volumes,
            slices,
        } => {
            let m = pipeline::cmd_phantom(spec.as_deref(), &out, volumes, slices, g.seed)?;
            println!("{}", m.display());
        }
        Command::Features { manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            pipeline::cmd_features(&m, &c, &out)?;
        }
        Command::Train { manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            let outcome = pipeline::cmd_train(&m, &c, &pick(out, &paths.out, "out")?)?;
            if let Some(last) = outcome.history.last() {
                println!("rounds {} train_err {:.4}", outcome.classifier.rounds.len(), last.train_err);
            }
        }
        Command::Predict { model, manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            let model = pick(model, &paths.model, "model")?;
            pipeline::cmd_predict(&model, &m, &c, &pick(out, &paths.out, "out")?)?;
        }
        Command::Atlas { manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            pipeline::cmd_atlas(&m, &c, &pick(out, &paths.out, "out")?)?;
        }
        Command::Label {
            masks,
            atlas,
            manifest: m,
            out,
        } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            let atlas = pick(atlas, &paths.atlas, "atlas")?;
            let failures = pipeline::cmd_label(&masks, &atlas, &m, &c, &pick(out, &paths.out, "out")?)?;
            if !failures.is_empty() {
                eprintln!("{} slice(s) could not be labeled", failures.len());
            }
        }
        Command::Eval { pred, manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            let report = pipeline::cmd_eval(&pred, &m, &c, &pick(out, &paths.out, "out")?)?;
            let (r, p, d) = report.overall();
            println!("recall {r:.4} precision {p:.4} dice {d:.4}");
        }
        Command::Crossval { manifest: m, out } => {
            let m = manifest(g, &pick(m, &paths.manifest, "manifest")?)?;
            let cv = pipeline::cmd_crossval(&m, &c, &pick(out, &paths.out, "out")?)?;
            let (r, p, d) = cv.report.overall();
            println!("recall {r:.4} precision {p:.4} dice {d:.4}");
            if let Some(md) = cv.report.overall_muscle_dice() {
                println!("muscle dice {md:.4}");
            }
            if !cv.failures.is_empty() {
                eprintln!("{} slice failure(s), see failures.csv", cv.failures.len());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
