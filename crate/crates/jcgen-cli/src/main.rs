use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use jcgen_cli::{
    cmd_build, cmd_fs_dump, cmd_fs_get, cmd_fs_verify, fs_geometry, load_image, CliError,
};

#[derive(Parser)]
#[command(name = "jcgen", version, about = "Build and inspect initial flash memory images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_base_address(s: &str) -> Result<u32, String> {
    let trimmed = s.trim_start_matches("0x").trim_start_matches("0X");
    u32::from_str_radix(trimmed, 16).map_err(|e| format!("bad hex address {s:?}: {e}"))
}

#[derive(Subcommand)]
enum Command {
    /// Build CAP artifacts, the dispatcher header and the flash image.
    Build {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "jca-dir")]
        jca_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Flash bank base address (hex), overriding the config.
        #[arg(long = "base-address", value_parser = parse_base_address)]
        base_address: Option<u32>,
    },
    /// Inspect a device image.
    Fs {
        #[command(subcommand)]
        sub: FsCommand,
    },
}

#[derive(clap::Args)]
struct FsArgs {
    #[arg(long)]
    image: PathBuf,
    /// Geometry/base-address source; defaults to the reference target.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "base-address", value_parser = parse_base_address)]
    base_address: Option<u32>,
}

#[derive(Subcommand)]
enum FsCommand {
    /// List every block with state, tag, length and checksum status.
    Dump {
        #[command(flatten)]
        args: FsArgs,
    },
    /// Print the committed data for a tag (hex string).
    Get {
        tag: String,
        #[command(flatten)]
        args: FsArgs,
    },
    /// Re-check all hashsums and report garbage ratios.
    Verify {
        #[command(flatten)]
        args: FsArgs,
    },
}

fn run() -> Result<String, CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Build {
            config,
            jca_dir,
            out,
            base_address,
        } => {
            let report = cmd_build(&config, &jca_dir, &out, base_address)?;
            for warning in &report.warnings {
                log::warn!("{warning}");
                eprintln!("warning: {warning}");
            }
            Ok(format!(
                "built {} packages, {} native methods, {} blocks, {} payload bytes -> {}\n",
                report.packages.len(),
                report.native_method_count,
                report.block_count,
                report.image_payload_bytes,
                out.display()
            ))
        }
        Command::Fs { sub } => {
            let args = match &sub {
                FsCommand::Dump { args } | FsCommand::Verify { args } => args,
                FsCommand::Get { args, .. } => args,
            };
            let (geometry, base) = fs_geometry(args.config.as_deref())?;
            let device = load_image(&args.image, &geometry, args.base_address.unwrap_or(base))?;
            match &sub {
                FsCommand::Dump { .. } => cmd_fs_dump(&device),
                FsCommand::Get { tag, .. } => cmd_fs_get(device, tag),
                FsCommand::Verify { .. } => cmd_fs_verify(&device),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run() {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
