use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use semrate_core::pipeline::{
    load_corpus, synth_corpus, write_corpus, write_csv, write_jsonl, Failure, Metrics,
};
use semrate_core::{
    generate_trace, read_attn_file, read_trace_file, receive, run_experiment, select_resolutions,
    transmit, write_trace_file, AllocError, AttnError, ChannelError, ChannelKind, ChannelModel,
    FrameError, ImageTensor, PipelineConfig, PipelineError, RateTable,
};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "semrate",
    version,
    about = "Attention-guided multi-resolution image transmission"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalOpts {
    /// Bytes per patch for each level, comma separated, starting with 0.
    #[arg(long, global = true, value_parser = parse_table, default_value = "0,12,24,48,196")]
    table: RateTable,
    /// Patch side in pixels.
    #[arg(long, global = true, default_value_t = 8, value_parser = clap::value_parser!(u8).range(1..))]
    patch_size: u8,
    /// Subtract frame header, map and CRC bytes from the budget.
    #[arg(long, global = true)]
    deduct_overhead: bool,
    /// Seed for every random draw.
    #[arg(long, global = true, env = "SEMRATE_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Print the resolution map for an attention grid and budget as JSON.
    Allocate {
        #[arg(long)]
        attn: PathBuf,
        /// Block budget in bytes.
        #[arg(long)]
        rate: u64,
    },
    /// Encode a PPM image into a frame.
    Encode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        attn: PathBuf,
        #[arg(long)]
        rate: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a frame into a PPM image and print a JSON report.
    Decode {
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Original image, for distortion metrics.
        #[arg(long, requires = "attn")]
        original: Option<PathBuf>,
        /// Attention grid weighting the distortion metrics.
        #[arg(long, requires = "original")]
        attn: Option<PathBuf>,
    },
    /// Generate a channel rate trace.
    Trace {
        /// Number of blocks.
        #[arg(long, default_value_t = 1000)]
        blocks: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(subcommand)]
        model: ModelCmd,
    },
    /// Transmit every image of a corpus over a rate trace and report per image.
    Run {
        /// Directory of `<name>.ppm` and `<name>.attn` pairs.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Report file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
    },
    /// Write a synthetic corpus of PPM images with ATTN grids.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u16).range(1..))]
        rows: u16,
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u16).range(1..))]
        cols: u16,
    },
}

#[derive(Subcommand)]
enum ModelCmd {
    Constant {
        #[arg(long)]
        rate: u32,
    },
    IidUniform {
        #[arg(long)]
        lo: u32,
        #[arg(long)]
        hi: u32,
    },
    GilbertElliott {
        #[arg(long)]
        p_gb: f64,
        #[arg(long)]
        p_bg: f64,
        #[arg(long)]
        r_good: u32,
        #[arg(long)]
        r_bad: u32,
    },
    Rayleigh {
        /// Channel symbols per block.
        #[arg(long)]
        bandwidth: f64,
        /// Mean linear SNR.
        #[arg(long)]
        snr: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

fn parse_table(s: &str) -> Result<RateTable, String> {
    let bytes = s
        .split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    RateTable::new(bytes).map_err(|e| e.to_string())
}

enum CliError {
    Usage(String),
    Data {
        category: &'static str,
        message: String,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data { .. } => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let (category, message) = match self {
            CliError::Usage(m) => ("usage", m.as_str()),
            CliError::Data { category, message } => (*category, message.as_str()),
        };
        serde_json::json!({ "error": { "category": category, "message": message } })
    }
}

fn data(category: &'static str, e: impl std::fmt::Display) -> CliError {
    CliError::Data {
        category,
        message: e.to_string(),
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let category = match &e {
            PipelineError::InvalidImage(_) => "image",
            PipelineError::DimensionMismatch(_) => "dimension",
            PipelineError::Attn(_) => "attn",
            PipelineError::Alloc(_) => "alloc",
            PipelineError::Codec(_) => "codec",
            PipelineError::Frame(_) => "frame",
            PipelineError::Channel(_) => "channel",
            PipelineError::Io { .. } => "io",
            PipelineError::Report(_) => "report",
        };
        data(category, e)
    }
}

impl From<AttnError> for CliError {
    fn from(e: AttnError) -> Self {
        data("attn", e)
    }
}

impl From<AllocError> for CliError {
    fn from(e: AllocError) -> Self {
        data("alloc", e)
    }
}

impl From<FrameError> for CliError {
    fn from(e: FrameError) -> Self {
        data("frame", e)
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        data("channel", e)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| data("io", format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the same directory and renames it
/// into place, so a failed run leaves no partial output.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: &dyn std::fmt::Display| data("io", format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io(&e))?;
    tmp.write_all(bytes).map_err(|e| io(&e))?;
    tmp.persist(path).map_err(|e| io(&e.error))?;
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| data("io", e))?;
    writeln!(out).map_err(|e| data("io", e))
}

#[derive(Serialize)]
struct MapReport<'a> {
    rows: usize,
    cols: usize,
    levels: &'a [u8],
    total_bytes: u64,
    histogram: Vec<usize>,
}

#[derive(Serialize)]
struct DecodeReport<'a> {
    #[serde(flatten)]
    map: MapReport<'a>,
    payload_bytes: usize,
    frame_bytes: usize,
    metrics: Option<&'a Metrics>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    rows: usize,
    failures: &'a [Failure],
}

fn config(global: &GlobalOpts) -> Result<PipelineConfig, CliError> {
    let config = PipelineConfig {
        table: global.table.clone(),
        patch_size: global.patch_size as usize,
        deduct_overhead: global.deduct_overhead,
    };
    config.codec().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

fn channel_kind(model: &ModelCmd) -> ChannelKind {
    match *model {
        ModelCmd::Constant { rate } => ChannelKind::Constant { rate },
        ModelCmd::IidUniform { lo, hi } => ChannelKind::IidUniform { lo, hi },
        ModelCmd::GilbertElliott {
            p_gb,
            p_bg,
            r_good,
            r_bad,
        } => ChannelKind::GilbertElliott {
            p_gb,
            p_bg,
            r_good,
            r_bad,
        },
        ModelCmd::Rayleigh { bandwidth, snr } => ChannelKind::RayleighCapacity {
            bandwidth_symbols: bandwidth,
            mean_snr: snr,
        },
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let config = config(&cli.global)?;
    match cli.command {
        Command::Allocate { attn, rate } => {
            let grid = read_attn_file(&read(&attn)?)?;
            let budget = config.payload_budget(rate, grid.len());
            let map = select_resolutions(&grid, budget, &config.table)?;
            print_json(&MapReport {
                rows: map.rows(),
                cols: map.cols(),
                levels: map.levels(),
                total_bytes: map.total_bytes(&config.table),
                histogram: map.histogram(&config.table),
            })
        }
        Command::Encode {
            image,
            attn,
            rate,
            out,
        } => {
            let image = ImageTensor::from_ppm(&read(&image)?)?;
            let grid = read_attn_file(&read(&attn)?)?;
            let frame = transmit(&image, &grid, rate, &config)?;
            write_atomic(&out, &frame)
        }
        Command::Decode {
            frame,
            out,
            original,
            attn,
        } => {
            let side = match (original, attn) {
                (Some(o), Some(a)) => Some((
                    ImageTensor::from_ppm(&read(&o)?)?,
                    read_attn_file(&read(&a)?)?,
                )),
                _ => None,
            };
            let rx = receive(&read(&frame)?, side.as_ref().map(|(i, g)| (i, g)))?;
            write_atomic(&out, &rx.image.to_ppm())?;
            print_json(&DecodeReport {
                map: MapReport {
                    rows: rx.map.rows(),
                    cols: rx.map.cols(),
                    levels: rx.map.levels(),
                    total_bytes: rx.map.total_bytes(&rx.table),
                    histogram: rx.map.histogram(&rx.table),
                },
                payload_bytes: rx.payload_bytes,
                frame_bytes: rx.frame_bytes,
                metrics: rx.metrics.as_ref(),
            })
        }
        Command::Trace { blocks, out, model } => {
            let model = ChannelModel::new(channel_kind(&model), cli.global.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let trace = generate_trace(&model, blocks)?;
            write_atomic(&out, &write_trace_file(&trace)?)
        }
        Command::Run {
            corpus,
            trace,
            out,
            format,
            jobs,
        } => {
            let trace = read_trace_file(&read(&trace)?)?;
            let corpus = load_corpus(&corpus)?;
            let mut report = run_experiment(&corpus.items, &trace, &config, jobs as usize)?;
            let mut buf = Vec::new();
            match format {
                Format::Csv => write_csv(&mut buf, &report.rows)?,
                Format::Jsonl => write_jsonl(&mut buf, &report.rows)?,
            }
            match out {
                Some(path) => write_atomic(&path, &buf)?,
                None => io::stdout().write_all(&buf).map_err(|e| data("io", e))?,
            }
            report.failures.extend(corpus.failures);
            let summary = serde_json::to_string(&RunSummary {
                rows: report.rows.len(),
                failures: &report.failures,
            })
            .map_err(|e| data("io", e))?;
            eprintln!("{summary}");
            Ok(())
        }
        Command::Synth {
            out,
            count,
            rows,
            cols,
        } => {
            let items = synth_corpus(
                count,
                rows as usize,
                cols as usize,
                config.patch_size,
                cli.global.seed,
            )?;
            let io = |e: &dyn std::fmt::Display| data("io", format!("{}: {e}", out.display()));
            let parent = match out.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let tmp = tempfile::tempdir_in(parent).map_err(|e| io(&e))?;
            write_corpus(tmp.path(), &items)?;
            fs::rename(tmp.path(), &out).map_err(|e| io(&e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
