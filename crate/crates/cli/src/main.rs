use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use swsindy::archive::{fit_run, SurrogateArchive};
use swsindy::codec::{
    create_stream, open_stream, read_archive_file, read_problem_file, write_archive_file,
    write_problem_file, write_stream, OfflineReport, OnlineReport, ARCHIVE_MAGIC, PROBLEM_MAGIC,
};
use swsindy::config::CompressConfig;
use swsindy::datagen::{
    drifting_field, lorenz, synthetic_field, DriftSpec, FieldSpec, LORENZ_DEFAULT_DT,
    LORENZ_DEFAULT_INITIAL, LORENZ_DEFAULT_STEPS,
};
use swsindy::pipeline::process_stream;
use swsindy::reconstruct::{pod_projection, snapshot_metrics, Decompressor, ResetPolicy};
use swsindy::Error;

#[derive(Parser)]
#[command(
    name = "swsindy",
    version,
    about = "Streaming weak-form sparse regression compressor"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a snapshot stream into an archive (or a problem file).
    Compress {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Write the weak-form problems instead of solving them.
        #[arg(long)]
        split_offline: bool,
    },
    /// Solve a saved problem file into an archive.
    Solve {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Reconstruct a snapshot stream from an archive.
    Decompress {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Policy::EveryRestart)]
        policy: Policy,
    },
    /// Print storage accounting; with `--truth`, write per-snapshot errors as CSV.
    Report {
        input: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Policy::EveryRestart)]
        policy: Policy,
    },
    /// Generate synthetic snapshot streams.
    #[command(subcommand)]
    Gen(Generator),
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    EveryRestart,
    BirthsOnly,
}

impl From<Policy> for ResetPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::EveryRestart => ResetPolicy::EveryRestart,
            Policy::BirthsOnly => ResetPolicy::BirthsOnly,
        }
    }
}

#[derive(Args)]
struct GenOutput {
    #[arg(short, long)]
    output: PathBuf,
    /// Also write a starter compression config matched to the stream.
    #[arg(long)]
    config_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Generator {
    /// Lorenz system trajectory (state dimension 3).
    Lorenz {
        #[arg(long, default_value_t = LORENZ_DEFAULT_STEPS)]
        steps: usize,
        #[arg(long, default_value_t = LORENZ_DEFAULT_DT)]
        dt: f64,
        #[arg(long, num_args = 3, value_delimiter = ',', default_values_t = LORENZ_DEFAULT_INITIAL)]
        initial: Vec<f64>,
        #[command(flatten)]
        out: GenOutput,
    },
    /// Separable oscillating field with components switching on late.
    Field {
        #[arg(long, default_value_t = 40)]
        height: usize,
        #[arg(long, default_value_t = 80)]
        width: usize,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Components present from the start.
        #[arg(long, default_value_t = 7)]
        base: usize,
        /// Snapshot indices at which extra components switch on.
        #[arg(long, value_delimiter = ',')]
        onsets: Vec<usize>,
        #[command(flatten)]
        out: GenOutput,
    },
    /// Gaussian blob drifting across a periodic grid.
    Drift {
        #[arg(long, default_value_t = DriftSpec::default().height)]
        height: usize,
        #[arg(long, default_value_t = DriftSpec::default().width)]
        width: usize,
        #[arg(long, default_value_t = DriftSpec::default().steps)]
        steps: usize,
        #[arg(long, default_value_t = DriftSpec::default().dt)]
        dt: f64,
        #[arg(long, default_value_t = DriftSpec::default().laps)]
        laps: f64,
        #[command(flatten)]
        out: GenOutput,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Format(_) | Error::Corrupt { .. }) => 2,
        Some(Error::Numerical(_) | Error::Reconstruct { .. }) => 3,
        Some(Error::Config(_)) => 4,
        _ => 1,
    }
}

fn file_magic(path: &Path) -> Result<[u8; 4]> {
    let mut magic = [0u8; 4];
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{} is too short to identify", path.display())))?;
    Ok(magic)
}

fn compress(input: &Path, output: &Path, config: &Path, split: bool) -> Result<()> {
    let cfg = CompressConfig::from_file(config)
        .with_context(|| format!("reading {}", config.display()))?;
    let stream = open_stream(input)?;
    let header = stream.header();
    if (header.dt - cfg.dt).abs() > 1e-12 * cfg.dt {
        return Err(Error::Config(format!(
            "config dt {} differs from stream dt {}",
            cfg.dt, header.dt
        ))
        .into());
    }
    let start = Instant::now();
    let run = process_stream(stream, &cfg)?;
    info!(
        "online phase: {} snapshots in {:.2?}",
        run.snapshot_count,
        start.elapsed()
    );
    for w in &run.warnings {
        log::warn!("{w}");
    }
    if split {
        write_problem_file(output, &run, &cfg)?;
        println!("{}", OnlineReport::of(&run));
        return Ok(());
    }
    let archive = fit_run(&run, &cfg)?;
    write_archive_file(output, &archive)?;
    println!("{}", OfflineReport::of(&archive)?);
    Ok(())
}

fn solve(input: &Path, output: &Path) -> Result<()> {
    let (run, cfg) = read_problem_file(input)?;
    let archive = fit_run(&run, &cfg)?;
    write_archive_file(output, &archive)?;
    println!("{}", OfflineReport::of(&archive)?);
    Ok(())
}

fn decompress(input: &Path, output: &Path, policy: Policy) -> Result<()> {
    let archive = read_archive_file(input)?;
    let frames = Decompressor::field(&archive)?.with_policy(policy.into());
    let n = write_stream(output, archive.state_dim, archive.dt, frames)?;
    info!("wrote {n} snapshots to {}", output.display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

fn metrics_csv(
    archive: &SurrogateArchive,
    truth: &Path,
    policy: Policy,
    out: &mut dyn Write,
) -> Result<()> {
    let truth = open_stream(truth)?;
    if truth.header().state_dim != archive.state_dim {
        return Err(
            Error::Format("truth stream and archive differ in state dimension".into()).into(),
        );
    }
    writeln!(
        out,
        "index,time,overall,against_projection,fitting,truncation"
    )?;
    let mut approx = Decompressor::field(archive)?.with_policy(policy.into());
    let mut count = 0;
    for (i, u) in truth.enumerate() {
        let u = u?;
        let a = approx
            .next()
            .ok_or_else(|| Error::Format("truth stream is longer than the archive".into()))??;
        let m = snapshot_metrics(&u, &a, &pod_projection(archive, i, &u)?)?;
        writeln!(
            out,
            "{i},{},{},{},{},{}",
            i as f64 * archive.dt,
            fmt_opt(m.overall),
            fmt_opt(m.against_projection),
            fmt_opt(m.fitting),
            fmt_opt(m.truncation)
        )?;
        count += 1;
    }
    if count != archive.snapshot_count {
        return Err(Error::Format(format!(
            "truth stream has {count} snapshots, archive {}",
            archive.snapshot_count
        ))
        .into());
    }
    out.flush()?;
    Ok(())
}

fn report(input: &Path, truth: Option<&Path>, csv: Option<&Path>, policy: Policy) -> Result<()> {
    let magic = file_magic(input)?;
    if &magic == PROBLEM_MAGIC {
        if truth.is_some() {
            bail!("error series need an archive; run `solve` first");
        }
        let (run, _) = read_problem_file(input)?;
        println!("{}", OnlineReport::of(&run));
        return Ok(());
    }
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::Format(format!(
            "{} is neither an archive nor a problem file",
            input.display()
        ))
        .into());
    }
    let archive = read_archive_file(input)?;
    let table = OfflineReport::of(&archive)?;
    let Some(truth) = truth else {
        println!("{table}");
        return Ok(());
    };
    match csv {
        Some(path) => {
            println!("{table}");
            let mut w = BufWriter::new(File::create(path)?);
            metrics_csv(&archive, truth, policy, &mut w)
        }
        None => {
            eprintln!("{table}");
            metrics_csv(&archive, truth, policy, &mut io::stdout().lock())
        }
    }
}

fn emit_config(out: &GenOutput, cfg: CompressConfig) -> Result<()> {
    if let Some(path) = &out.config_out {
        std::fs::write(path, cfg.to_toml_string()?)?;
    }
    Ok(())
}

fn generate(g: Generator) -> Result<()> {
    match g {
        Generator::Lorenz {
            steps,
            dt,
            initial,
            out,
        } => {
            let init = [initial[0], initial[1], initial[2]];
            let n = write_stream(&out.output, 3, dt, lorenz(steps, dt, init)?)?;
            emit_config(&out, CompressConfig::lorenz_default(dt, n))?;
        }
        Generator::Field {
            height,
            width,
            steps,
            dt,
            base,
            onsets,
            out,
        } => {
            let spec = FieldSpec::late_onset(height, width, steps, dt, base, &onsets);
            write_stream(&out.output, height * width, dt, synthetic_field(&spec)?)?;
            let mut cfg = CompressConfig::lorenz_default(dt, steps);
            cfg.test_basis.half_count = 30;
            cfg.projection = swsindy::bases::DegreePolicy::Total(2);
            cfg.restart_stride = 200;
            cfg.pod = Some(swsindy::pod::PodSettings {
                init_window: 100.min(steps),
                spectral_threshold: 1e-6,
                residual_threshold: 0.1,
                normalize_spectrum: false,
                reinit: None,
            });
            cfg.fit = swsindy::regression::FitConfig::new(0.05, 1e-6)?;
            emit_config(&out, cfg)?;
        }
        Generator::Drift {
            height,
            width,
            steps,
            dt,
            laps,
            out,
        } => {
            let spec = DriftSpec {
                height,
                width,
                steps,
                dt,
                laps,
                ..DriftSpec::default()
            };
            let mut w = create_stream(&out.output, height * width, dt)?;
            for u in drifting_field(&spec)? {
                w.write_frame(&u?)?;
            }
            w.finish()?;
            emit_config(&out, CompressConfig::lorenz_default(dt, steps))?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress {
            input,
            output,
            config,
            split_offline,
        } => compress(&input, &output, &config, split_offline),
        Command::Solve { input, output } => solve(&input, &output),
        Command::Decompress {
            input,
            output,
            policy,
        } => decompress(&input, &output, policy),
        Command::Report {
            input,
            truth,
            csv,
            policy,
        } => report(&input, truth.as_deref(), csv.as_deref(), policy),
        Command::Gen(g) => generate(g),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
