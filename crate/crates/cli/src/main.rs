//! `nuclei`: synthetic fixtures, encodings, post-processing, evaluation and
//! self-checks over PGM label maps and SEF1 float fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nuclei_core::encodings::{
    dir_encoding, hv_encoding, position_encoding, structure_encoding, BackgroundNorm, Encoder, EncodingConfig,
};
use nuclei_core::fixtures::{generate, FixtureSpec, ShapeFamily};
use nuclei_core::grid_core::{semantic_from_labels, Connectivity};
use nuclei_core::invariance::{
    equivariance_error, relation_check, InvarianceReport, LabConfig, RelationReport,
};
use nuclei_core::io;
use nuclei_core::metrics::evaluate;
use nuclei_core::postproc::{run_pipeline, PostprocConfig};
use nuclei_core::selfcheck::{render_table, run_all, CheckOptions};
use nuclei_core::transform::RigidTransform;
use nuclei_core::Field;
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "nuclei",
    version,
    about = "Structure-encoding toolkit for nuclei instance segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic label map.
    Synth {
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value = "disk", value_parser = parse_shape)]
        shape: ShapeFamily,
        #[arg(long, default_value_t = 3)]
        radius_min: usize,
        #[arg(long, default_value_t = 8)]
        radius_max: usize,
        /// Minimum background gap between instances, in pixels.
        #[arg(long, default_value_t = 2)]
        gap: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Encode a label map: se, hv and pos as SEF1, dir as PGM.
    Encode {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short, value_parser = parse_encoder)]
        method: Encoder,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        dir_classes: u16,
        /// Background normalizer cap in pixels (default: global maximum distance).
        #[arg(long)]
        background_cap: Option<f64>,
        /// Also write the three-class semantic mask derived from the labels.
        #[arg(long)]
        semantic_out: Option<PathBuf>,
    },
    /// Threshold a structure field and fuse it with a semantic mask into instances.
    #[command(allow_negative_numbers = true)]
    Postprocess {
        #[arg(long)]
        semantic: PathBuf,
        #[arg(long)]
        structure: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tp: f64,
        #[arg(long, default_value_t = -0.05)]
        tn: f64,
        /// Seed connectivity, 4 or 8.
        #[arg(long, default_value_t = 4)]
        connectivity: u32,
        #[arg(long, default_value_t = 0)]
        min_area: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Compare a predicted label map with ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Write the JSON report here instead of standard output.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Equivariance errors, pipeline Dice bias and gradient relation for one label map.
    Invariance {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the built-in verification suites.
    Selfcheck {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn parse_shape(s: &str) -> Result<ShapeFamily, String> {
    s.parse().map_err(|e: nuclei_core::Error| e.to_string())
}

fn parse_encoder(s: &str) -> Result<Encoder, String> {
    s.parse().map_err(|e: nuclei_core::Error| e.to_string())
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

#[derive(Serialize)]
struct InvarianceOutput {
    rows: Vec<InvarianceReport>,
    /// `None` when no instance has a 3x3 interior block.
    relation: Option<RelationReport>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            height,
            width,
            count,
            shape,
            radius_min,
            radius_max,
            gap,
            seed,
            out,
        } => {
            let labels = generate(&FixtureSpec {
                height,
                width,
                count,
                shape,
                radius_min,
                radius_max,
                min_gap: gap,
                seed,
            })?;
            io::save_label_map(&out, &labels)?;
        }
        Command::Encode {
            input,
            method,
            out,
            dir_classes,
            background_cap,
            semantic_out,
        } => {
            let labels =
                io::load_label_map(&input).with_context(|| format!("reading {}", input.display()))?;
            let cfg = EncodingConfig {
                dir_classes,
                background_norm: background_cap.map_or(BackgroundNorm::GlobalMax, BackgroundNorm::Cap),
            };
            cfg.validate()?;
            match method {
                Encoder::Se => io::save_sef1(&out, &structure_encoding::<f64>(&labels, &cfg)?)?,
                Encoder::Hv => io::save_sef1(&out, &hv_encoding::<f64>(&labels))?,
                Encoder::Pos => io::save_sef1(&out, &position_encoding::<f64>(&labels))?,
                Encoder::Dir => {
                    let dir = dir_encoding(&labels, &cfg)?;
                    let mut w = BufWriter::new(File::create(&out)?);
                    io::write_dir_map(&mut w, &dir)?;
                    w.flush()?;
                }
            }
            if let Some(path) = semantic_out {
                io::save_semantic(path, &semantic_from_labels(&labels))?;
            }
        }
        Command::Postprocess {
            semantic,
            structure,
            tp,
            tn,
            connectivity,
            min_area,
            out,
        } => {
            let cfg = PostprocConfig {
                t_p: tp,
                t_n: tn,
                connectivity: Connectivity::from_count(connectivity)?,
                min_instance_area: min_area,
            };
            cfg.validate()?;
            let sem =
                io::load_semantic(&semantic).with_context(|| format!("reading {}", semantic.display()))?;
            let field: Field<f32> =
                io::load_sef1(&structure).with_context(|| format!("reading {}", structure.display()))?;
            io::save_label_map(&out, &run_pipeline(&sem, &field, &cfg)?)?;
        }
        Command::Evaluate { pred, gt, json } => {
            let p = io::load_label_map(&pred).with_context(|| format!("reading {}", pred.display()))?;
            let g = io::load_label_map(&gt).with_context(|| format!("reading {}", gt.display()))?;
            let report = evaluate(&p, &g)?;
            write_json(json.as_deref(), &report)?;
        }
        Command::Invariance { input, json } => {
            let labels =
                io::load_label_map(&input).with_context(|| format!("reading {}", input.display()))?;
            let cfg = LabConfig::default();
            let mut rows = Vec::new();
            for encoder in Encoder::ALL {
                for t in RigidTransform::STANDARD {
                    rows.push(equivariance_error(encoder, &labels, t, &cfg)?);
                }
            }
            let relation = match relation_check(&labels, &cfg.encoding) {
                Ok(r) => Some(r),
                Err(nuclei_core::Error::TooSmallInstance) => None,
                Err(e) => return Err(e.into()),
            };
            write_json(json.as_deref(), &InvarianceOutput { rows, relation })?;
        }
        Command::Selfcheck { inject_fault } => {
            let results = run_all(CheckOptions { inject_fault });
            print!("{}", render_table(&results));
            let passed = results.iter().all(|r| r.passed);
            println!(
                "{}",
                if passed {
                    "all suites PASS"
                } else {
                    "selfcheck FAILED"
                }
            );
            if !passed {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
