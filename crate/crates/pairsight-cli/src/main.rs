//! Command-line front end: simulate acquisitions, count coincidences,
//! certify entanglement, and run full coincidence-window sweeps.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pairsight::acquisition::{simulate_event_run, simulate_frame_run, EventRun, FrameRun};
use pairsight::certify::{
    entropy_trend_slope, run_sweep, sweep_row_from_frame_runs, sweep_rows_from_event_runs,
    CameraKind, SweepRow,
};
use pairsight::coincidence::{
    find_coincidences_frames, find_coincidences_stream, find_same_arm_pairs,
};
use pairsight::detector::DetectionStats;
use pairsight::hist::{AxisKind, ProjectionHist};
use pairsight::io::config::Config;
use pairsight::io::events::{
    read_events_with, write_events_binary, write_events_text, EventHeader, ReadOptions,
};
use pairsight::io::frames::{read_frames, write_frames, FrameHeader};
use pairsight::io::results::{emit_results, sweep_csv};
use pairsight::model::{Arm, Basis, CoordinateMapper};

#[derive(Parser)]
#[command(
    name = "pairsight",
    about = "Certify high-dimensional spatial entanglement from single-photon camera coincidence data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisArg {
    Position,
    Momentum,
}

impl From<BasisArg> for Basis {
    fn from(value: BasisArg) -> Basis {
        match value {
            BasisArg::Position => Basis::Position,
            BasisArg::Momentum => Basis::Momentum,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Configuration file (TOML). Defaults are a Tpx3Cam-like event camera.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random seed; fixed seeds give byte-identical outputs.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (simulate) or directory (other verbs).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one acquisition and write an event or frame file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Measurement basis of the acquisition.
        #[arg(long, value_enum, default_value_t = BasisArg::Position)]
        basis: BasisArg,
        /// Write the binary event container instead of text.
        #[arg(long)]
        binary: bool,
        /// Frame exposure in ns (frame cameras); defaults to the first
        /// sweep window in the config.
        #[arg(long)]
        exposure_ns: Option<f64>,
    },
    /// Count coincidences in a recorded file and write projections.
    Coincide {
        #[command(flatten)]
        common: Common,
        /// Event or frame file to analyze.
        #[arg(long)]
        input: PathBuf,
        /// Coincidence window in ns (event files only).
        #[arg(long)]
        delta_t_ns: Option<f64>,
        /// Basis the file was recorded in.
        #[arg(long, value_enum, default_value_t = BasisArg::Position)]
        basis: BasisArg,
        /// Re-sort out-of-order timestamps instead of failing the join.
        #[arg(long)]
        resort: bool,
    },
    /// Produce the verdict table from recorded files or a fresh simulation.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Position-basis event file; omit to simulate.
        #[arg(long, requires = "events_momentum", conflicts_with = "frames_position")]
        events_position: Option<PathBuf>,
        /// Momentum-basis event file; omit to simulate.
        #[arg(long, requires = "events_position")]
        events_momentum: Option<PathBuf>,
        /// Position-basis frame file; yields one row at its exposure.
        #[arg(long, requires = "frames_momentum")]
        frames_position: Option<PathBuf>,
        /// Momentum-basis frame file.
        #[arg(long, requires = "frames_position")]
        frames_momentum: Option<PathBuf>,
    },
    /// Full pipeline: simulate both bases, sweep windows, emit CSV + plots.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(path: &Option<PathBuf>) -> anyhow::Result<Config> {
    match path {
        Some(path) => {
            Config::from_path(path).with_context(|| format!("loading config {}", path.display()))
        }
        None => Ok(Config::default()),
    }
}

fn print_stats(stats: &DetectionStats) {
    println!(
        "detected {} events (thinned {}, clipped {}, dead-time dropped {})",
        stats.detected, stats.thinned, stats.clipped, stats.dead_time_dropped
    );
}

fn simulate(
    common: &Common,
    basis: Basis,
    binary: bool,
    exposure_ns: Option<f64>,
) -> anyhow::Result<()> {
    let config = load_config(&common.config)?;
    let geom = config.geometry()?;
    let cal = config.calibration(&geom)?;
    let state = config.state()?;
    let duration_s = config.sweep.duration_s;
    match config.camera_kind()? {
        CameraKind::Event => {
            let run = simulate_event_run(
                &state,
                basis,
                &geom,
                &cal,
                duration_s,
                common.seed,
                config.sweep.shard_s,
            )?;
            let header = EventHeader::from_geometry(&geom);
            if binary {
                write_events_binary(&common.out, &header, &run.events)?;
            } else {
                write_events_text(&common.out, &header, &run.events)?;
            }
            print_stats(&run.stats);
            println!(
                "wrote {} events ({} truth pairs, {} noise events) to {}",
                run.events.len(),
                run.truth_pairs,
                run.truth_noise,
                common.out.display()
            );
        }
        CameraKind::Frame => {
            let exposure_ns = exposure_ns
                .or_else(|| config.sweep.delta_t_ns.first().copied())
                .context("frame simulation needs --exposure-ns or a sweep window list")?;
            let run = simulate_frame_run(
                &state,
                basis,
                &geom,
                &cal,
                exposure_ns,
                duration_s,
                common.seed,
                config.sweep.shard_s,
            )?;
            let header = FrameHeader::new(&geom, exposure_ns);
            write_frames(&common.out, &header, &run.frames)?;
            let hits: usize = run
                .frames
                .iter()
                .map(|f| f.hits_signal.len() + f.hits_idler.len())
                .sum();
            println!(
                "wrote {} frames with {} hits to {}",
                run.frames.len(),
                hits,
                common.out.display()
            );
        }
    }
    Ok(())
}

fn write_projection_csv(path: &Path, hist: &ProjectionHist) -> anyhow::Result<()> {
    use std::fmt::Write as _;
    let g = &hist.grid;
    let mut out = String::new();
    let axis = match hist.axis_kind {
        AxisKind::MinusCoordinate => "minus",
        AxisKind::SumCoordinate => "sum",
    };
    writeln!(
        out,
        "# axis={axis} bin_width_u={} bin_width_v={} origin_u={} origin_v={} n_u={} n_v={} total={} overflow={}",
        g.bin_width_u,
        g.bin_width_v,
        g.origin_u,
        g.origin_v,
        g.n_u,
        g.n_v,
        hist.total(),
        hist.overflow()
    )?;
    for iv in 0..g.n_v {
        let row: Vec<String> = (0..g.n_u)
            .map(|iu| hist.count(iu, iv).to_string())
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn coincide(
    common: &Common,
    input: &Path,
    delta_t_ns: Option<f64>,
    basis: Basis,
    resort: bool,
) -> anyhow::Result<()> {
    let config = load_config(&common.config)?;
    let geom = config.geometry()?;
    let cal = config.calibration(&geom)?;
    let mapper = CoordinateMapper::new(&geom, &cal, basis);
    std::fs::create_dir_all(&common.out)?;

    let mut minus = ProjectionHist::for_camera(
        AxisKind::MinusCoordinate,
        &geom,
        &cal,
        basis,
        config.estimators.projection_bin_px,
    )?;
    let mut sum = ProjectionHist::for_camera(
        AxisKind::SumCoordinate,
        &geom,
        &cal,
        basis,
        config.estimators.projection_bin_px,
    )?;

    let is_frames = {
        use std::io::Read as _;
        let mut prefix = [0u8; 16];
        std::fs::File::open(input)
            .and_then(|mut f| f.read_exact(&mut prefix).map(|()| prefix))
            .map(|p| &p == b"pairsight-frames")
            .unwrap_or(false)
    };
    let check_sensor = |width: u16, height: u16| -> anyhow::Result<()> {
        if width != geom.width || height != geom.height {
            bail!(
                "{}: file sensor {width}x{height} does not match the configured {}x{} camera",
                input.display(),
                geom.width,
                geom.height
            );
        }
        Ok(())
    };
    let pair_count;
    if is_frames {
        let file = read_frames(input)?;
        check_sensor(file.header.width, file.header.height)?;
        for w in &file.warnings {
            eprintln!("warning: {w}");
        }
        let mut n = 0u64;
        for pair in find_coincidences_frames(&file.frames, &mapper) {
            minus.record_pair(&pair);
            sum.record_pair(&pair);
            n += 1;
        }
        pair_count = n;
    } else {
        let delta_t_ns = delta_t_ns.context("event files need --delta-t-ns")?;
        let file = read_events_with(input, &ReadOptions { resort })?;
        check_sensor(file.header.width, file.header.height)?;
        for w in &file.warnings {
            eprintln!("warning: {w}");
        }
        let mut n = 0u64;
        for pair in find_coincidences_stream(
            &file.events,
            delta_t_ns,
            file.header.time_quantum_ns,
            &mapper,
        )? {
            minus.record_pair(&pair);
            sum.record_pair(&pair);
            n += 1;
        }
        pair_count = n;
        if config.sweep.include_same_arm_pairs {
            for arm in [Arm::Signal, Arm::Idler] {
                let same = find_same_arm_pairs(
                    &file.events,
                    arm,
                    delta_t_ns,
                    file.header.time_quantum_ns,
                    &mapper,
                )?;
                println!("same-arm pairs ({arm:?}): {}", same.len());
            }
        }
    }

    println!("coincidence pairs: {pair_count}");
    write_projection_csv(&common.out.join("projection_minus.csv"), &minus)?;
    write_projection_csv(&common.out.join("projection_sum.csv"), &sum)?;
    println!("wrote projections to {}", common.out.display());
    Ok(())
}

fn event_run_from_file(
    path: &Path,
    basis: Basis,
    geom: &pairsight::CameraGeometry,
) -> anyhow::Result<EventRun> {
    let file = read_events_with(path, &ReadOptions::default())?;
    for w in &file.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    if (file.header.time_quantum_ns - geom.time_quantum_ns).abs()
        > 1e-9 * geom.time_quantum_ns.abs()
    {
        bail!(
            "{}: time quantum {} ns does not match the configured camera ({} ns)",
            path.display(),
            file.header.time_quantum_ns,
            geom.time_quantum_ns
        );
    }
    if file.header.width != geom.width || file.header.height != geom.height {
        bail!(
            "{}: file sensor {}x{} does not match the configured {}x{} camera",
            path.display(),
            file.header.width,
            file.header.height,
            geom.width,
            geom.height
        );
    }
    let duration_s = file
        .events
        .last()
        .map(|e| e.t as f64 * file.header.time_quantum_ns * 1e-9)
        .unwrap_or(0.0);
    Ok(EventRun {
        basis,
        duration_s,
        events: file.events,
        stats: DetectionStats::default(),
        truth_pairs: 0,
        truth_noise: 0,
    })
}

fn print_rows(rows: &[SweepRow]) {
    for row in rows {
        match &row.data {
            Some(d) => println!(
                "dt = {} ns: EPR raw {:.4} +- {:.4} ({}), subtracted {:.4} ({}), variance {:.4} ({}), entropy sum {:.4} nats ({})",
                row.delta_t_ns,
                d.epr_raw.product,
                d.epr_raw.uncertainty,
                verdict(d.epr_raw.certified),
                d.epr_subtracted.product,
                verdict(d.epr_subtracted.certified),
                d.epr_variance.product,
                verdict(d.epr_variance.certified),
                d.entropy.sum,
                verdict(d.entropy.certified),
            ),
            None => println!(
                "dt = {} ns: failed ({})",
                row.delta_t_ns,
                row.error.as_deref().unwrap_or("unknown")
            ),
        }
    }
}

fn verdict(certified: bool) -> &'static str {
    if certified {
        "certified"
    } else {
        "not certified"
    }
}

fn frame_run_from_file(path: &Path, basis: Basis) -> anyhow::Result<FrameRun> {
    let file = read_frames(path)?;
    for w in &file.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(FrameRun {
        basis,
        exposure_ns: file.header.exposure_ns,
        frames: file.frames,
        truth_pairs: 0,
        truth_noise: 0,
    })
}

fn certify(
    common: &Common,
    events_position: &Option<PathBuf>,
    events_momentum: &Option<PathBuf>,
    frames_position: &Option<PathBuf>,
    frames_momentum: &Option<PathBuf>,
) -> anyhow::Result<()> {
    let config = load_config(&common.config)?;
    let rows = match (
        events_position,
        events_momentum,
        frames_position,
        frames_momentum,
    ) {
        (Some(pos), Some(mom), _, _) => {
            let geom = config.geometry()?;
            let cal = config.calibration(&geom)?;
            let options = config.sweep_options()?;
            if config.camera_kind()? != CameraKind::Event {
                bail!("file-based certification expects event files and an event camera config");
            }
            let position_run = event_run_from_file(pos, Basis::Position, &geom)?;
            let momentum_run = event_run_from_file(mom, Basis::Momentum, &geom)?;
            sweep_rows_from_event_runs(
                &position_run,
                &momentum_run,
                &config.sweep.delta_t_ns,
                &geom,
                &cal,
                &options,
            )
        }
        (_, _, Some(pos), Some(mom)) => {
            let geom = config.geometry()?;
            let cal = config.calibration(&geom)?;
            let options = config.sweep_options()?;
            let position_run = frame_run_from_file(pos, Basis::Position)?;
            let momentum_run = frame_run_from_file(mom, Basis::Momentum)?;
            vec![sweep_row_from_frame_runs(
                &position_run,
                &momentum_run,
                &geom,
                &cal,
                &options,
            )]
        }
        _ => run_sweep(&config.sweep_config(common.seed)?)?,
    };
    std::fs::create_dir_all(&common.out)?;
    let csv_path = common.out.join("results.csv");
    std::fs::write(&csv_path, sweep_csv(&rows))?;
    print_rows(&rows);
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn sweep(common: &Common) -> anyhow::Result<()> {
    let config = load_config(&common.config)?;
    let rows = run_sweep(&config.sweep_config(common.seed)?)?;
    let written = emit_results(&rows, &common.out)?;
    print_rows(&rows);
    if let Some(slope) = entropy_trend_slope(&rows) {
        println!(
            "entropy sum slope: {slope:.4} nats per e-fold of window (informational; no claim below the simulated windows)"
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            common,
            basis,
            binary,
            exposure_ns,
        } => simulate(common, (*basis).into(), *binary, *exposure_ns),
        Command::Coincide {
            common,
            input,
            delta_t_ns,
            basis,
            resort,
        } => coincide(common, input, *delta_t_ns, (*basis).into(), *resort),
        Command::Certify {
            common,
            events_position,
            events_momentum,
            frames_position,
            frames_momentum,
        } => certify(
            common,
            events_position,
            events_momentum,
            frames_position,
            frames_momentum,
        ),
        Command::Sweep { common } => sweep(common),
    }
}
