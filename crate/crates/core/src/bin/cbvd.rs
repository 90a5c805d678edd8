use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cbvd::cli::{cmd_ablate, cmd_corrupt, cmd_denoise, cmd_eval, cmd_train};
use cbvd::config::RunConfig;

#[derive(Parser)]
#[command(name = "cbvd", version, about = "Coordinate-based blind video denoising")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a frozen noisy copy of a clean frame directory
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = ["gaussian", "poisson", "impulse"])]
        noise: String,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Fit the networks to a noisy sequence
    Train {
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long, value_parser = ["1", "2", "both"], default_value = "both")]
        stage: String,
        /// Stage-1 checkpoint (required with --stage 2)
        #[arg(long, required_if_eq("stage", "2"))]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Denoise a sequence with a trained checkpoint
    Denoise {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long, value_parser = ["denoiser", "refined"], default_value = "refined")]
        stage: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// PSNR/SSIM of denoised frames against clean frames
    Eval {
        #[arg(long)]
        denoised: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        /// Noisy directory whose manifest labels the report
        #[arg(long)]
        noisy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Positional-encoding or stage ablation
    Ablate {
        #[arg(long, value_parser = ["pe", "stages"])]
        mode: String,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long)]
        clean: PathBuf,
        /// Comma-separated levels for pe mode
        #[arg(long)]
        levels: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

type Pairs = Vec<(String, String)>;

fn push(pairs: &mut Pairs, key: &str, value: impl ToString) {
    pairs.push((key.to_owned(), value.to_string()));
}

fn path(p: &std::path::Path) -> String {
    p.display().to_string()
}

fn resolve(common: &Common, flags: Pairs) -> cbvd::Result<RunConfig> {
    let mut pairs = Vec::new();
    for s in &common.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| cbvd::Error::Config(format!("--set expects KEY=VALUE, got '{s}'")))?;
        pairs.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    pairs.extend(flags);
    RunConfig::resolve(common.config.as_deref(), &pairs)
}

fn run(cli: Cli) -> cbvd::Result<()> {
    let mut stdout = std::io::stdout().lock();
    let mut flags = Pairs::new();
    match cli.command {
        Command::Corrupt {
            input,
            noise,
            sigma,
            lambda,
            alpha,
            seed,
            out,
            common,
        } => {
            push(&mut flags, "input_dir", path(&input));
            push(&mut flags, "noise", noise);
            for (k, v) in [("sigma", sigma), ("lambda", lambda), ("alpha", alpha)] {
                if let Some(v) = v {
                    push(&mut flags, k, v);
                }
            }
            if let Some(s) = seed {
                push(&mut flags, "noise_seed", s);
            }
            push(&mut flags, "out", path(&out));
            let m = cmd_corrupt(&resolve(&common, flags)?)?;
            println!("wrote {} {} frames to {}", m.frames, m.kind, out.display());
        }
        Command::Train {
            noisy,
            stage,
            ckpt,
            out,
            common,
        } => {
            push(&mut flags, "noisy_dir", path(&noisy));
            push(&mut flags, "train_stage", stage);
            if let Some(c) = ckpt {
                push(&mut flags, "checkpoint", path(&c));
            }
            push(&mut flags, "out", path(&out));
            let ckpt = cmd_train(&resolve(&common, flags)?, &mut stdout)?;
            println!("wrote {} checkpoint {}", ckpt.stage, out.display());
        }
        Command::Denoise {
            ckpt,
            noisy,
            stage,
            out,
            common,
        } => {
            push(&mut flags, "checkpoint", path(&ckpt));
            push(&mut flags, "noisy_dir", path(&noisy));
            push(&mut flags, "output_stage", stage);
            push(&mut flags, "out", path(&out));
            let seq = cmd_denoise(&resolve(&common, flags)?)?;
            println!("wrote {} frames to {}", seq.len(), out.display());
        }
        Command::Eval {
            denoised,
            clean,
            noisy,
            out,
            common,
        } => {
            push(&mut flags, "denoised_dir", path(&denoised));
            push(&mut flags, "clean_dir", path(&clean));
            if let Some(n) = noisy {
                push(&mut flags, "noisy_dir", path(&n));
            }
            push(&mut flags, "out", path(&out));
            let r = cmd_eval(&resolve(&common, flags)?)?;
            println!("mean PSNR {:.2} dB, mean SSIM {:.4}", r.mean_psnr(), r.mean_ssim());
        }
        Command::Ablate {
            mode,
            noisy,
            clean,
            levels,
            out,
            common,
        } => {
            push(&mut flags, "ablate_mode", mode);
            push(&mut flags, "noisy_dir", path(&noisy));
            push(&mut flags, "clean_dir", path(&clean));
            if let Some(l) = levels {
                push(&mut flags, "pe_levels", l);
            }
            push(&mut flags, "out", path(&out));
            let (table, _) = cmd_ablate(&resolve(&common, flags)?, &mut stdout)?;
            print!("{}", table.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
