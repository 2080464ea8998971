//! The `wstate` command line: simulate W states, render their image pairs,
//! retrieve phases, compare images and search for entanglement witnesses.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 no witness exists for
//! the requested region.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use wstate_core::io::write_atomic;
use wstate_core::metrics::{self, ComparisonReport, SsimParams};
use wstate_core::optics::{
    self, pgm, ImageGrid, SpotLayout, DEFAULT_GRID, DEFAULT_SPACING, DEFAULT_WAIST,
};
use wstate_core::retrieval::{self, GsConfig, RetrievalReport};
use wstate_core::state::{propagate, CircuitSpec, ModeState, NoiseModel, SplitterSpec};
use wstate_core::witness::{self, WitnessOutcome};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NO_WITNESS: u8 = 3;

#[derive(Parser)]
#[command(name = "wstate", version, about = "Path-encoded W-state toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate a photon through a Y-splitter cascade and write the state.
    Simulate(SimulateArgs),
    /// Render the real-space and Fourier-space images of a state.
    Render(RenderArgs),
    /// Recover mode amplitudes and phases from an image pair.
    Retrieve(RetrieveArgs),
    /// Compare two images (SSIM, correlation, fringe visibility).
    Compare(CompareArgs),
    /// Search for a witness certifying entanglement over a (p, q) region.
    Witness(WitnessArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Cascade depth; the state has 2^depth modes.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=6))]
    depth: u8,
    /// Override one splitter: LEVEL:POS=RATIO[,PHASE_UPPER,PHASE_LOWER]
    /// (ratio is the upper-branch power fraction, phases in radians).
    #[arg(long = "splitter", value_name = "SPEC")]
    splitters: Vec<String>,
    /// Output file; JSON goes to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct LayoutArgs {
    /// Grid side in pixels.
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    /// Spot spacing in pixels.
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    /// Spot waist (1/e amplitude radius) in pixels.
    #[arg(long, default_value_t = DEFAULT_WAIST)]
    waist: f64,
}

impl LayoutArgs {
    fn layout(&self, n_modes: usize) -> anyhow::Result<SpotLayout> {
        Ok(SpotLayout::linear(
            n_modes,
            self.grid,
            self.grid,
            self.spacing,
            self.waist,
        )?)
    }
}

#[derive(Args)]
struct RenderArgs {
    /// State JSON file.
    #[arg(long)]
    state: PathBuf,
    /// Coherent fraction p.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Two-excitation fraction q (carried in the noise model; it does not
    /// change single-photon images).
    #[arg(long, default_value_t = 0.0)]
    q: f64,
    #[command(flatten)]
    layout: LayoutArgs,
    /// Additive background level of the detection noise.
    #[arg(long, default_value_t = 0.0)]
    background: f64,
    /// Scale of the signal-dependent fluctuation of the detection noise.
    #[arg(long, default_value_t = 0.0)]
    fluctuation: f64,
    /// Seed for the detection noise (ChaCha8).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <PREFIX>_real.pgm and <PREFIX>_fourier.pgm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RetrieveArgs {
    /// Real-space image (PGM).
    real: PathBuf,
    /// Fourier-space image (PGM).
    fourier: PathBuf,
    /// Number of spots in the image.
    #[arg(long, default_value_t = 8)]
    modes: usize,
    #[command(flatten)]
    layout: LayoutArgs,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Seed of the first restart's random initial phases (ChaCha8).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Also remove a linear phase ramp across the modes.
    #[arg(long)]
    remove_ramp: bool,
    /// Known state used to resolve the twin-image ambiguity.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    a: PathBuf,
    b: PathBuf,
    /// Spot waist used for the visibility envelope.
    #[arg(long, default_value_t = DEFAULT_WAIST)]
    waist: f64,
    /// Spot spacing, which sets the default visibility region.
    #[arg(long, default_value_t = DEFAULT_SPACING)]
    spacing: f64,
    /// Half width of the visibility region in pixels.
    #[arg(long)]
    halfwidth: Option<usize>,
    /// Coherent template; with --inc, estimates p for image B.
    #[arg(long, requires = "inc")]
    coh: Option<PathBuf>,
    /// Incoherent template.
    #[arg(long, requires = "coh")]
    inc: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WitnessArgs {
    /// Smallest coherent fraction to certify.
    #[arg(long)]
    p_min: f64,
    /// Largest two-excitation fraction to certify.
    #[arg(long, default_value_t = 0.0)]
    q_max: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_splitter(text: &str) -> anyhow::Result<(usize, usize, SplitterSpec)> {
    let bad = || anyhow!("bad splitter spec {text:?}; expected LEVEL:POS=RATIO[,UP,LOW]");
    let (node, params) = text.split_once('=').ok_or_else(bad)?;
    let (level, pos) = node.split_once(':').ok_or_else(bad)?;
    let level: usize = level.trim().parse().map_err(|_| bad())?;
    let pos: usize = pos.trim().parse().map_err(|_| bad())?;
    let nums: Vec<f64> = params
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let spec = match nums.as_slice() {
        [ratio] => SplitterSpec::new(*ratio, 0.0, 0.0)?,
        [ratio, up, low] => SplitterSpec::new(*ratio, *up, *low)?,
        _ => return Err(bad()),
    };
    Ok((level, pos, spec))
}

fn emit(out: Option<&Path>, stdout: &mut dyn Write, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => write_atomic(path, text.as_bytes())
            .with_context(|| format!("writing {}", path.display())),
        None => match writeln!(stdout, "{text}") {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

fn emit_json<T: Serialize>(
    out: Option<&Path>,
    stdout: &mut dyn Write,
    value: &T,
) -> anyhow::Result<()> {
    emit(out, stdout, &serde_json::to_string_pretty(value)?)
}

fn read_image(path: &Path) -> anyhow::Result<ImageGrid> {
    pgm::read(path).with_context(|| format!("reading {}", path.display()))
}

fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let mut circuit = CircuitSpec::ideal(usize::from(args.depth))?;
    let mut seen = BTreeSet::new();
    for text in &args.splitters {
        let (level, pos, spec) = parse_splitter(text)?;
        if !seen.insert((level, pos)) {
            bail!("splitter {level}:{pos} given twice");
        }
        circuit.set_splitter(level, pos, spec)?;
    }
    let state = propagate(&circuit)?;
    emit(args.out.as_deref(), stdout, &state.to_json()?)
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

fn render(args: &RenderArgs) -> anyhow::Result<()> {
    let state = ModeState::read(&args.state)
        .with_context(|| format!("reading {}", args.state.display()))?;
    let noise = NoiseModel::new(args.p, args.q)?;
    let layout = args.layout.layout(state.n_modes())?;
    let g = args.layout.grid;
    let (mut real, mut fourier) = optics::render_pair(&state, &noise, &layout, g, g)?;
    if args.background > 0.0 || args.fluctuation > 0.0 {
        real = optics::add_detection_noise(&real, args.background, args.fluctuation, args.seed)?;
        fourier = optics::add_detection_noise(
            &fourier,
            args.background,
            args.fluctuation,
            args.seed.wrapping_add(1),
        )?;
    }
    let real_path = prefixed(&args.out, "_real.pgm");
    let fourier_path = prefixed(&args.out, "_fourier.pgm");
    pgm::write(&real_path, &real)?;
    pgm::write(&fourier_path, &fourier)?;
    log::info!(
        "wrote {} and {}",
        real_path.display(),
        fourier_path.display()
    );
    Ok(())
}

fn retrieve(args: &RetrieveArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let real = read_image(&args.real)?;
    let fourier = read_image(&args.fourier)?;
    if (real.width(), real.height()) != (fourier.width(), fourier.height()) {
        bail!(
            "image sizes differ: {}x{} vs {}x{}",
            real.width(),
            real.height(),
            fourier.width(),
            fourier.height()
        );
    }
    let layout = SpotLayout::linear(
        args.modes,
        real.width(),
        real.height(),
        args.layout.spacing,
        args.layout.waist,
    )?;
    let cfg = GsConfig {
        max_iters: args.iters,
        tol: args.tol,
        seed: args.seed,
        restarts: args.restarts,
    };
    let (result, estimate) = retrieval::retrieve(&real, &fourier, &layout, &cfg, args.remove_ramp)?;
    let (estimate, twin_used) = match &args.reference {
        Some(path) => {
            let reference =
                ModeState::read(path).with_context(|| format!("reading {}", path.display()))?;
            retrieval::resolve_twin(&estimate, &reference)?
        }
        None => (estimate, false),
    };
    let report = RetrievalReport {
        amplitudes: estimate.amplitudes().to_vec(),
        phases_rad: estimate.phases().to_vec(),
        iterations: result.iterations,
        final_error: result.final_error(),
        converged: result.converged,
        seed: args.seed,
        twin_used,
    };
    emit_json(args.out.as_deref(), stdout, &report)
}

fn compare(args: &CompareArgs, stdout: &mut dyn Write) -> anyhow::Result<()> {
    let a = read_image(&args.a)?;
    let b = read_image(&args.b)?;
    let ssim = metrics::ssim(&a, &b, &SsimParams::default())?;
    let ncc = metrics::ncc_overlap(&a, &b)?;
    let envelope = optics::single_mode_envelope(a.width(), a.height(), args.waist)?;
    let halfwidth = args
        .halfwidth
        .unwrap_or_else(|| metrics::default_halfwidth(a.width(), args.spacing));
    let visibility_a = metrics::fringe_visibility(&a, &envelope, halfwidth)?;
    let visibility_b = metrics::fringe_visibility(&b, &envelope, halfwidth)?;
    let p_hat = match (&args.coh, &args.inc) {
        (Some(coh), Some(inc)) => Some(metrics::estimate_p(
            &b,
            &read_image(coh)?,
            &read_image(inc)?,
        )?),
        _ => None,
    };
    emit_json(
        args.out.as_deref(),
        stdout,
        &ComparisonReport {
            ssim,
            ncc,
            visibility_a,
            visibility_b,
            p_hat,
        },
    )
}

fn witness_cmd(
    args: &WitnessArgs,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> anyhow::Result<u8> {
    match witness::find_witness(args.p_min, args.q_max)? {
        WitnessOutcome::Certified(cert) => {
            emit_json(args.out.as_deref(), stdout, &cert)?;
            Ok(0)
        }
        WitnessOutcome::NoWitness(evidence) => {
            writeln!(
                stderr,
                "no witness for p >= {} and q <= {}: best margin {:.6} at p = {}, q = {}",
                args.p_min,
                args.q_max,
                evidence.best.margin,
                evidence.best.worst_corner.p,
                evidence.best.worst_corner.q
            )?;
            emit_json(args.out.as_deref(), stdout, &evidence)?;
            Ok(EXIT_NO_WITNESS)
        }
    }
}

fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, stdout)?,
        Command::Render(a) => render(a)?,
        Command::Retrieve(a) => retrieve(a, stdout)?,
        Command::Compare(a) => compare(a, stdout)?,
        Command::Witness(a) => return witness_cmd(a, stdout, stderr),
    }
    Ok(0)
}

/// Parses `args` (including the program name) and runs the command,
/// writing JSON output to `stdout` and diagnostics to `stderr`. Returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help and version requests are not errors
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_USAGE;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            EXIT_USAGE
        }
    }
}
