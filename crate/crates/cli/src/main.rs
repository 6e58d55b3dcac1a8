use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mvpart::dataset::{save_manifest, EvalReport};
use mvpart::pipeline::{evaluate, run_manifest, Backend, PipelineConfig, EVAL_REPORT_FILE};
use mvpart::synth::{write_synthetic, Shape};

const EXIT_OBJECT_FAILED: u8 = 1;
const EXIT_BAD_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "mvpart", version, about = "Multi-view 3D part segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// Parsed once per process, so the variant size does not matter.
#[allow(clippy::large_enum_variant)]
#[derive(Subcommand)]
enum Command {
    /// Segment every object of a manifest and write labelled PLYs,
    /// explanations and a run log.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigArgs,
    },
    /// Score predicted PLYs against the manifest's ground truth.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Where to write the report; defaults to <pred-dir>/eval_report.json.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Score background (-1) as a part of every object category.
        #[arg(long)]
        include_background: bool,
    },
    /// Write synthetic labelled shapes and a manifest describing them.
    Synth {
        /// two_part_cylinder, lidded_pot, four_leg_chair, or all.
        #[arg(long, default_value = "all")]
        shape: String,
        #[arg(long, default_value_t = 5000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Manifest file name inside the output directory.
        #[arg(long, default_value = "manifest.json")]
        manifest_name: String,
    },
}

/// Flags override values from `--config`, which override the defaults.
#[derive(Args)]
struct ConfigArgs {
    /// JSON file with any subset of the configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    image_size: Option<u32>,
    #[arg(long)]
    fov: Option<f64>,
    #[arg(long)]
    distance_factor: Option<f64>,
    #[arg(long)]
    splat_radius: Option<u32>,
    #[arg(long)]
    depth_tolerance: Option<f64>,
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    superpoint_angle: Option<f64>,
    #[arg(long)]
    superpoint_color_dist: Option<f64>,
    #[arg(long)]
    superpoint_min_size: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    /// oracle, replay:<dir> or remote:<url>.
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-request timeout of the remote backend, in seconds.
    #[arg(long)]
    remote_timeout: Option<f64>,
    #[arg(long)]
    remote_retries: Option<u32>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        macro_rules! apply {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$flag { config.$field = v.clone(); })*
            };
        }
        apply!(
            views => views,
            image_size => image_size,
            fov => fov_deg,
            distance_factor => distance_factor,
            splat_radius => splat_radius_px,
            depth_tolerance => depth_tolerance,
            knn => knn,
            superpoint_angle => superpoint_angle_deg,
            superpoint_color_dist => superpoint_color_dist,
            superpoint_min_size => superpoint_min_size,
            tau => tau,
            backend => backend,
            jobs => jobs,
            seed => seed,
            remote_timeout => remote_timeout_s,
            remote_retries => remote_retries,
        );
        Ok(config)
    }
}

fn cmd_run(manifest: &Path, out: &Path, overrides: &ConfigArgs) -> ExitCode {
    let config = match overrides.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    };
    match run_manifest(manifest, &config, out) {
        Ok(log) => {
            let failed: Vec<&str> = log.failures().map(|o| o.object_id.as_str()).collect();
            println!(
                "processed {} object(s), {} failed, in {:.1} s",
                log.objects.len(),
                failed.len(),
                log.total_ms / 1e3
            );
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                println!("failed objects: {}", failed.join(", "));
                ExitCode::from(EXIT_OBJECT_FAILED)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

fn print_report(report: &EvalReport) {
    for row in &report.table {
        println!("{:<20} {:.4}", row.name, row.miou);
        for part in &row.parts {
            println!("  part {:<14} {:.4}  ({}/{})", part.part, part.miou, part.intersection, part.union);
        }
    }
    println!("{:<20} {:.4}", "overall", report.overall);
}

fn cmd_eval(pred_dir: &Path, manifest: &Path, output: Option<&Path>, include_background: bool) -> ExitCode {
    let report = match evaluate(manifest, pred_dir, include_background) {
        Ok(r) => r,
        // Missing predictions and unreadable inputs both land here.
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_BAD_INPUT);
        }
    };
    print_report(&report);
    let path = output.map_or_else(|| pred_dir.join(EVAL_REPORT_FILE), Path::to_path_buf);
    let written = serde_json::to_string_pretty(&report)
        .map_err(anyhow::Error::from)
        .and_then(|text| fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display())));
    match written {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_BAD_INPUT)
        }
    }
}

fn cmd_synth(shape: &str, points: usize, seed: u64, out: &Path, manifest_name: &str) -> Result<()> {
    let shapes = if shape == "all" {
        Shape::ALL.to_vec()
    } else {
        vec![shape.parse::<Shape>()?]
    };
    if manifest_name.is_empty() {
        bail!("manifest name is empty");
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut entries = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let entry = write_synthetic(shape, points, seed, out)?;
        println!("wrote {} ({} instructions)", entry.ply_path.display(), entry.instructions.len());
        entries.push(entry);
    }
    let manifest = out.join(manifest_name);
    save_manifest(&entries, &manifest)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { manifest, out, overrides } => cmd_run(manifest, out, overrides),
        Command::Eval {
            pred_dir,
            manifest,
            output,
            include_background,
        } => cmd_eval(pred_dir, manifest, output.as_deref(), *include_background),
        Command::Synth {
            shape,
            points,
            seed,
            out,
            manifest_name,
        } => match cmd_synth(shape, *points, *seed, out, manifest_name) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(EXIT_OBJECT_FAILED)
            }
        },
    }
}
