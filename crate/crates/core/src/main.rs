use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tiara_core::cli_io::commands::{
    cmd_analyze, cmd_blend, cmd_reweight, cmd_synth, cmd_verify_theorem, BlendPaths, BlendQuery,
};
use tiara_core::cli_io::Config;
use tiara_core::promptblend::TokenId;
use tiara_core::Error;

/// Exit status when the reduction bound is not met.
const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "tiara",
    version,
    about = "Temporal attention reweighting toolkit"
)]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a configuration key, e.g. `--set alpha=5`
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct WindowFlags {
    #[arg(long = "window")]
    window_kind: Option<String>,
    #[arg(long)]
    window_length: Option<String>,
}

#[derive(Args, Default)]
struct BandFlags {
    #[arg(long)]
    phi1: Option<String>,
    #[arg(long)]
    phi2: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Motion intensity of every attention row of a logits field
    Analyze {
        /// (H, W, N, N) logits
        #[arg(long)]
        input: PathBuf,
        /// (H, W, N) output
        #[arg(long)]
        output: PathBuf,
        /// Optional CSV of row spectra: h,w,i,k,magnitude
        #[arg(long)]
        spectrogram: Option<PathBuf>,
        #[command(flatten)]
        window: WindowFlags,
        #[command(flatten)]
        band: BandFlags,
    },
    /// Reweight temporal attention over a field of locations
    Reweight {
        /// (H, W, N, N) logits
        #[arg(long)]
        logits: PathBuf,
        /// (H, W, N, d_v) values
        #[arg(long)]
        values: PathBuf,
        /// (H, W, N, d_v) output values
        #[arg(long)]
        output: PathBuf,
        /// (H, W, N, N) reweighted attention maps
        #[arg(long)]
        attention_output: PathBuf,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long)]
        corner_size: Option<String>,
        #[arg(long)]
        corner_penalty: Option<String>,
        #[command(flatten)]
        window: WindowFlags,
        #[command(flatten)]
        band: BandFlags,
    },
    /// Check the inconsistency reduction bound on synthetic or given instances
    VerifyTheorem {
        /// Report file
        #[arg(long)]
        output: PathBuf,
        /// Logits of a single instance instead of the synthetic sweep
        #[arg(long, requires = "values")]
        logits: Option<PathBuf>,
        #[arg(long, requires = "logits")]
        values: Option<PathBuf>,
        /// Comma-separated frame counts
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long)]
        decay: Option<String>,
        #[arg(long)]
        eta: Option<String>,
        #[arg(long)]
        k_threshold: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        hf_amplitude: Option<String>,
        #[arg(long)]
        hf_bin: Option<String>,
        #[command(flatten)]
        window: WindowFlags,
    },
    /// Conditioning matrices for a multi-prompt schedule
    Blend {
        /// One `$`-organized prompt per line
        #[arg(long)]
        prompts: PathBuf,
        /// One `start end` frame span per line
        #[arg(long)]
        spans: PathBuf,
        /// token<TAB>id lines
        #[arg(long)]
        tokens: PathBuf,
        /// (vocab, d) embedding table
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Frame to condition; omit with --dump-all
        #[arg(
            long,
            required_unless_present = "dump_all",
            conflicts_with = "dump_all"
        )]
        frame: Option<usize>,
        /// Emit every frame as a (frames, length, d) tensor
        #[arg(long)]
        dump_all: bool,
        /// Denoising timestep
        #[arg(long)]
        timestep: f64,
        /// Network layer index
        #[arg(long)]
        layer: usize,
        /// Fill components that are empty in some prompts with this token
        #[arg(long)]
        pad_token: Option<TokenId>,
        #[arg(long)]
        t1: Option<String>,
        #[arg(long)]
        t2: Option<String>,
        #[arg(long)]
        layer_threshold: Option<String>,
    },
    /// Write homogeneous synthetic logits and values
    Synth {
        /// (1, 1, N, N) output
        #[arg(long)]
        logits_output: PathBuf,
        /// (1, 1, N, 1) output
        #[arg(long)]
        values_output: PathBuf,
        #[arg(long)]
        frames: Option<String>,
        #[arg(long)]
        decay: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        value_bound: Option<String>,
        #[arg(long)]
        hf_amplitude: Option<String>,
        #[arg(long)]
        hf_bin: Option<String>,
    },
}

type Overrides = Vec<(&'static str, String)>;

fn push(out: &mut Overrides, key: &'static str, value: &Option<String>) {
    if let Some(v) = value {
        out.push((key, v.clone()));
    }
}

impl WindowFlags {
    fn collect(&self, out: &mut Overrides) {
        push(out, "window.kind", &self.window_kind);
        push(out, "window.length", &self.window_length);
    }
}

impl BandFlags {
    fn collect(&self, out: &mut Overrides) {
        push(out, "phi1", &self.phi1);
        push(out, "phi2", &self.phi2);
    }
}

fn command_overrides(command: &Command) -> Overrides {
    let mut out = Vec::new();
    match command {
        Command::Analyze { window, band, .. } => {
            window.collect(&mut out);
            band.collect(&mut out);
        }
        Command::Reweight {
            alpha,
            corner_size,
            corner_penalty,
            window,
            band,
            ..
        } => {
            push(&mut out, "alpha", alpha);
            push(&mut out, "corner_size", corner_size);
            push(&mut out, "corner_penalty", corner_penalty);
            window.collect(&mut out);
            band.collect(&mut out);
        }
        Command::VerifyTheorem {
            sizes,
            decay,
            eta,
            k_threshold,
            seed,
            hf_amplitude,
            hf_bin,
            window,
            ..
        } => {
            push(&mut out, "sizes", sizes);
            push(&mut out, "decay", decay);
            push(&mut out, "eta", eta);
            push(&mut out, "k_threshold", k_threshold);
            push(&mut out, "seed", seed);
            push(&mut out, "hf_amplitude", hf_amplitude);
            push(&mut out, "hf_bin", hf_bin);
            window.collect(&mut out);
        }
        Command::Blend {
            t1,
            t2,
            layer_threshold,
            ..
        } => {
            push(&mut out, "t1", t1);
            push(&mut out, "t2", t2);
            push(&mut out, "layer_threshold", layer_threshold);
        }
        Command::Synth {
            frames,
            decay,
            seed,
            value_bound,
            hf_amplitude,
            hf_bin,
            ..
        } => {
            push(&mut out, "frames", frames);
            push(&mut out, "decay", decay);
            push(&mut out, "seed", seed);
            push(&mut out, "value_bound", value_bound);
            push(&mut out, "hf_amplitude", hf_amplitude);
            push(&mut out, "hf_bin", hf_bin);
        }
    }
    out
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let base = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let mut pairs: Vec<(String, String)> = Vec::new();
    for raw in &cli.overrides {
        let (k, v) = raw
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {raw:?}")))?;
        pairs.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    let flags = command_overrides(&cli.command);
    base.with_overrides(
        pairs
            .iter()
            .map(|(k, v)| (k.as_str(), v.clone()))
            .chain(flags),
    )
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("TIARA_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "TIARA_THREADS must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))
}

fn run(cli: &Cli) -> Result<u8, Error> {
    configure_threads()?;
    let config = load_config(cli)?;
    match &cli.command {
        Command::Analyze {
            input,
            output,
            spectrogram,
            ..
        } => cmd_analyze(&config, input, output, spectrogram.as_deref())?,
        Command::Reweight {
            logits,
            values,
            output,
            attention_output,
            ..
        } => cmd_reweight(&config, logits, values, output, attention_output)?,
        Command::VerifyTheorem {
            output,
            logits,
            values,
            ..
        } => {
            let inputs: Option<(&Path, &Path)> = logits.as_deref().zip(values.as_deref());
            let summary = cmd_verify_theorem(&config, inputs, output)?;
            println!("{}", summary.line());
            if !summary.pass {
                return Ok(EXIT_VERIFY_FAILED);
            }
        }
        Command::Blend {
            prompts,
            spans,
            tokens,
            embeddings,
            output,
            frame,
            dump_all,
            timestep,
            layer,
            pad_token,
            ..
        } => {
            let query = match (frame, dump_all) {
                (Some(n), false) => BlendQuery::Frame {
                    n: *n,
                    t: *timestep,
                    d: *layer,
                },
                _ => BlendQuery::All {
                    t: *timestep,
                    d: *layer,
                },
            };
            let paths = BlendPaths {
                prompts,
                spans,
                tokens,
                embeddings,
            };
            cmd_blend(&config, paths, query, *pad_token, output)?;
        }
        Command::Synth {
            logits_output,
            values_output,
            ..
        } => cmd_synth(&config, logits_output, values_output)?,
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("tiara: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
