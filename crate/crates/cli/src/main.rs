use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use dlacs::bench::bench_encode_vs_dct;
use dlacs::container::Container;
use dlacs::entropy::{ec_encode, EcStream};
use dlacs::frame::{load_pgm, load_ppm, save_pgm, save_ppm};
use dlacs::metrics::{evaluate_frames, evaluate_rgb};
use dlacs::pipeline::{self, CompressOptions, Decoded, TrainParams};
use dlacs::synth;
use dlacs::trainer::TrainConfig;
use dlacs::{BayerFrame, MaskSet, RgbImage};

/// Blind block compressive-sampling codec for raw Bayer frames.
#[derive(Parser)]
#[command(name = "dlacs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn masks and a decode kernel from a directory of PGM frames.
    Train(TrainArgs),
    /// Compress a PGM (Bayer) or PPM (RGB) image into a container.
    Compress {
        input: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Entropy-code the payload.
        #[arg(long)]
        ec: bool,
        /// Leave the decode kernel out of the container.
        #[arg(long)]
        no_decode_kernel: bool,
    },
    /// Decode a container to PGM, or to PPM for RGB containers and --demosaic.
    Decompress {
        input: PathBuf,
        /// Mask file supplying the decode kernel when the container has none.
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        demosaic: bool,
    },
    /// Compare two images; prints MSE, PSNR and SSIM as JSON.
    Metrics {
        a: PathBuf,
        b: PathBuf,
        /// Inputs are PPM images.
        #[arg(long)]
        rgb: bool,
    },
    /// Time the mask encoder against an 8x8 DCT; prints JSON.
    Bench(BenchArgs),
    /// Entropy-code or decode a raw byte file.
    Ec {
        #[arg(value_enum)]
        direction: EcDirection,
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write a seeded synthetic test image.
    Synth {
        #[arg(long, default_value_t = 256)]
        width: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write an RGB PPM instead of an RGGB PGM.
        #[arg(long)]
        rgb: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Directory of PGM training frames.
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value_t = 8)]
    kx: usize,
    #[arg(long, default_value_t = 8)]
    ky: usize,
    #[arg(long, default_value_t = 4)]
    n_c: usize,
    #[arg(long, default_value_t = 4)]
    bits: u8,
    #[arg(long, default_value_t = 128)]
    crop: usize,
    /// Crops per input frame.
    #[arg(long, default_value_t = 16)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Write the per-epoch MSE trace here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(clap::Args)]
struct BenchArgs {
    /// PGM frame to time on; a seeded noise frame is used otherwise.
    #[arg(long)]
    frame: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    width: usize,
    #[arg(long, default_value_t = 3840)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    #[arg(long, default_value_t = 8)]
    block: usize,
    /// Print a table instead of JSON.
    #[arg(long)]
    table: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EcDirection {
    Encode,
    Decode,
}

enum Image {
    Gray(BayerFrame),
    Rgb(RgbImage),
}

fn load_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match bytes.get(..2) {
        Some(b"P6") => Image::Rgb(RgbImage::from_ppm_bytes(&bytes)?),
        _ => Image::Gray(BayerFrame::from_pgm_bytes(&bytes)?),
    })
}

fn read_masks(path: &Path) -> Result<MaskSet> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(MaskSet::deserialize(&bytes)?)
}

fn train(args: TrainArgs) -> Result<()> {
    let frames = pipeline::load_pgm_dir(&args.input)?;
    let params = TrainParams {
        kx: args.kx,
        ky: args.ky,
        n_c: args.n_c,
        bits: args.bits,
        crop: args.crop,
        count: args.count,
        config: TrainConfig {
            learning_rate: args.lr,
            epochs: args.epochs,
            batch_size: args.batch,
            seed: args.seed,
        },
    };
    let (masks, report) = pipeline::train_mask_set(&frames, &params)?;
    fs::write(&args.output, masks.serialize())
        .with_context(|| format!("writing {}", args.output.display()))?;
    if let Some(log) = &args.log {
        fs::write(log, report.to_log()).with_context(|| format!("writing {}", log.display()))?;
    }
    let summary = json!({
        "frames": frames.len(),
        "initial_mse": report.initial_mse,
        "final_mse": report.final_mse,
        "pca_mse": report.pca_mse,
        "zero_decoder_mse": report.zero_decoder_mse,
        "sc_w": masks.sc_w,
        "q_scale": masks.q_scale,
        "degenerate": masks.degenerate,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args)?,
        Command::Compress {
            input,
            masks,
            output,
            ec,
            no_decode_kernel,
        } => {
            let masks = read_masks(&masks)?;
            let opts = CompressOptions {
                entropy_code: ec,
                include_decode: !no_decode_kernel,
            };
            let container = match load_image(&input)? {
                Image::Gray(frame) => pipeline::compress_frame(&frame, &masks, opts)?,
                Image::Rgb(image) => pipeline::compress_image(&image, &masks, opts)?,
            };
            fs::write(&output, container.to_bytes())
                .with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Decompress {
            input,
            masks,
            output,
            demosaic,
        } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let container = Container::from_bytes(&bytes)?;
            let masks = masks.as_deref().map(read_masks).transpose()?;
            let decoded = pipeline::decompress(&container, masks.as_ref())?;
            match decoded {
                Decoded::Frame(frame) if !demosaic => save_pgm(&frame, &output)?,
                other => save_ppm(&pipeline::to_rgb(other)?, &output)?,
            }
        }
        Command::Metrics { a, b, rgb } => {
            let report = if rgb {
                evaluate_rgb(&load_ppm(&a)?, &load_ppm(&b)?)?
            } else {
                evaluate_frames(&load_pgm(&a)?, &load_pgm(&b)?)?
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Bench(args) => {
            let frame = match &args.frame {
                Some(path) => load_pgm(path)?,
                None => synth::noise_frame(args.width, args.height, args.seed),
            };
            let report = bench_encode_vs_dct(&frame, args.iterations, args.block)?;
            if args.table {
                print!("{}", report.to_table());
            } else {
                println!("{}", serde_json::to_string_pretty(&report)?);
            }
        }
        Command::Ec {
            direction,
            input,
            output,
        } => {
            let bytes = fs::read(&input).with_context(|| format!("reading {}", input.display()))?;
            let out = match direction {
                EcDirection::Encode => ec_encode(&bytes).to_bytes(),
                EcDirection::Decode => {
                    let (payload, used) = EcStream::decode_framed(&bytes)?;
                    if used != bytes.len() {
                        bail!(dlacs::Error::malformed(
                            "ec stream",
                            "trailing bytes after coded data"
                        ));
                    }
                    payload
                }
            };
            fs::write(&output, out).with_context(|| format!("writing {}", output.display()))?;
        }
        Command::Synth {
            width,
            height,
            seed,
            rgb,
            output,
        } => {
            if rgb {
                save_ppm(&synth::smooth_rgb(width, height, seed), &output)?;
            } else {
                save_pgm(&synth::smooth_bayer(width, height, seed), &output)?;
            }
        }
    }
    Ok(())
}

/// 2 for contract violations reported by the codec, 1 for anything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<dlacs::Error>() {
        Some(dlacs::Error::Io(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
