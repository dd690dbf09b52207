use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use craniofit::gradcheck::{GradTarget, GradcheckOptions};
use craniofit::pipeline::{cmd_fit, cmd_gradcheck, cmd_rank, cmd_resynth, cmd_synth, PipelineConfig};
use craniofit::superimpose::format_ranking;
use craniofit::Result;

#[derive(Parser)]
#[command(name = "craniofit", version, about = "Skull-guided 3D face reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's `out`, else ./craniofit-out)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Renderer,
    Fitting,
    Inpainting,
}

impl From<Target> for GradTarget {
    fn from(t: Target) -> Self {
        match t {
            Target::Renderer => GradTarget::Renderer,
            Target::Fitting => GradTarget::Fitting,
            Target::Inpainting => GradTarget::Inpainting,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit landmark files; writes the mesh and fit_report.json
    Fit {
        #[command(flatten)]
        common: Common,
        /// Landmark files (replace the config's `landmarks`)
        files: Vec<PathBuf>,
        /// Fit all files with one shared geometry
        #[arg(long)]
        same_person: bool,
    },
    /// Rank a candidate directory against a skull
    Rank {
        #[command(flatten)]
        common: Common,
    },
    /// Re-synthesize the poorly matched regions of a candidate
    Resynth {
        #[command(flatten)]
        common: Common,
        /// Candidate id (default: rank 1)
        #[arg(long)]
        candidate: Option<String>,
    },
    /// Check analytic gradients against central differences
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
        /// Test hook: corrupt one analytic gradient
        #[arg(long, hide = true)]
        corrupt: Option<Target>,
    },
    /// Write a synthetic dataset
    Synth {
        #[command(flatten)]
        common: Common,
        /// Also write a depth table with this many entries pushed out of range
        #[arg(long)]
        perturb: Option<usize>,
        /// Put the known face into the candidate directory
        #[arg(long)]
        inject_truth: bool,
        #[arg(long)]
        candidates: Option<usize>,
    },
}

fn load(common: &Common) -> Result<(PipelineConfig, PathBuf)> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("craniofit-out"));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Fit {
            common,
            files,
            same_person,
        } => {
            let (mut cfg, out) = load(&common)?;
            if !files.is_empty() {
                cfg.landmarks = files;
            }
            cfg.same_person |= same_person;
            let r = cmd_fit(&cfg, &out)?;
            println!("mode {}  iterations {}  converged {}", r.mode, r.iterations, r.converged);
            for img in &r.images {
                println!("  {}  rms {:.4} px  E_m {:.6}", img.file.display(), img.rms_px, img.breakdown.e_m);
            }
            for m in &r.meshes {
                println!("wrote {}", m.display());
            }
        }
        Command::Rank { common } => {
            let (cfg, out) = load(&common)?;
            let ranked = cmd_rank(&cfg, &out)?;
            print!("{}", format_ranking(&ranked));
        }
        Command::Resynth { common, candidate } => {
            let (mut cfg, out) = load(&common)?;
            if candidate.is_some() {
                cfg.candidate = candidate;
            }
            let r = cmd_resynth(&cfg, &out)?;
            print!("{}", r.summary());
            println!("report {}", out.join("report.json").display());
        }
        Command::Gradcheck { common, count, corrupt } => {
            let (cfg, out) = load(&common)?;
            let mut opts = GradcheckOptions::new(cfg.seed, count.unwrap_or(cfg.gradcheck_count));
            opts.corrupt = corrupt.map(Into::into);
            let r = cmd_gradcheck(&out, &opts)?;
            print!("{}", r.table());
            println!("{:.2} s", r.seconds);
            return Ok(r.passed());
        }
        Command::Synth {
            common,
            perturb,
            inject_truth,
            candidates,
        } => {
            let (mut cfg, out) = load(&common)?;
            if let Some(p) = perturb {
                cfg.synth.perturb = p;
            }
            if let Some(c) = candidates {
                cfg.synth.candidates = c;
            }
            cfg.synth.inject_truth |= inject_truth;
            let m = cmd_synth(&cfg, &out)?;
            println!("wrote {} files to {} (seed {})", m.files.len(), out.display(), m.seed);
            if let Some(p) = &m.perturbed {
                println!("perturbed ids {:?}: {} unmatched", p.ids, p.unmatched);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
