//! `sixdof`: render binaural audio for a listener path, harmonize camera
//! colors, align capture streams, compute capture density, or run the
//! stream service.
//!
//! Exit codes: 0 success, 1 usage error, 2 unreadable or missing input
//! file, 3 input that breaks its documented schema, 4 processing failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sixdof_core::audio::{write_wav_f32, AudioError};
use sixdof_core::capture::{
    align_manifest, alignment_csv, capture_density, AlignmentRow, CaptureError, Manifest, RigSweep,
};
use sixdof_core::colormap::{
    apply_color_map, harmonize_multiview, write_maps, ColorError, FitOptions, Image, DEFAULT_LAMBDA1,
};
use sixdof_core::scene::{load_listener_csv, load_scene_config, LoadedScene, SceneError};
use sixdof_core::render_binaural;

#[derive(Parser)]
#[command(name = "sixdof", version, about = "Listener-dependent binaural rendering and capture tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Output {
    Csv,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Render the scene for a listener trajectory into a stereo WAV.
    Render {
        /// Scene document.
        #[arg(long)]
        scene: PathBuf,
        /// Listener trajectory CSV (`t,x,y[,heading_deg]`).
        #[arg(long)]
        listener: PathBuf,
        /// Output WAV (32-bit float).
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-camera color maps against a reference view.
    Harmonize {
        /// Camera image as `id=path`; repeat per camera.
        #[arg(long = "image", value_name = "ID=PATH", required = true)]
        images: Vec<String>,
        /// Camera whose colors the others are mapped to.
        #[arg(long)]
        reference: String,
        /// Where to write the fitted maps.
        #[arg(long)]
        maps: PathBuf,
        /// Also write every corrected image as `<id>.png` here.
        #[arg(long)]
        corrected_dir: Option<PathBuf>,
        /// Weight of the structural term of the loss.
        #[arg(long, default_value_t = DEFAULT_LAMBDA1)]
        lambda: f64,
        #[arg(long, default_value_t = FitOptions::default().max_iterations)]
        max_iterations: usize,
        #[arg(long, value_enum, default_value_t = Output::Text)]
        output: Output,
    },
    /// Compute start offsets of capture streams from their timecodes.
    Align {
        /// Stream manifest.
        #[arg(long)]
        manifest: PathBuf,
        /// Refine against the earliest stream by cross correlation,
        /// searching this many milliseconds around the timecode offset.
        #[arg(long, value_name = "MS")]
        refine_ms: Option<f64>,
        #[arg(long, value_enum, default_value_t = Output::Csv)]
        output: Output,
    },
    /// Swept capture volume per second of a rig.
    Density {
        /// Rig radius in meters.
        #[arg(long = "r", visible_alias = "radius")]
        r: f64,
        /// Rig height in meters.
        #[arg(long = "h", visible_alias = "height")]
        h: f64,
        /// Rig path CSV (`t,x,y`); its time span is the duration.
        #[arg(long, conflicts_with = "duration", required_unless_present = "duration")]
        path: Option<PathBuf>,
        /// Duration in seconds of a stationary capture.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Run the streaming service; the bind address comes from SIXDOF_BIND.
    Serve {
        /// Directory of scene documents.
        #[arg(long, default_value = "scenes")]
        scenes: PathBuf,
        /// Send chunks as fast as they render instead of at playback speed.
        #[arg(long)]
        no_pacing: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }
    fn schema(message: impl ToString) -> Self {
        Self { code: 3, message: message.to_string() }
    }
    fn processing(message: impl ToString) -> Self {
        Self { code: 4, message: message.to_string() }
    }
}

impl From<SceneError> for Failure {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } | SceneError::UnresolvedPath(_) => Failure::input(e),
            SceneError::Audio(AudioError::Wav { .. }) => Failure::input(e),
            _ => Failure::schema(e),
        }
    }
}

impl From<CaptureError> for Failure {
    fn from(e: CaptureError) -> Self {
        match e {
            CaptureError::Io { .. } | CaptureError::Audio(AudioError::Wav { .. }) => Failure::input(e),
            CaptureError::InsufficientOverlap { .. } | CaptureError::SampleRateMismatch(..) => {
                Failure::processing(e)
            }
            _ => Failure::schema(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn render(scene: &Path, listener: &Path, out: &Path) -> CmdResult {
    let (config, _) = load_scene_config(scene)?;
    let listener = load_listener_csv(listener, config.listener_default.heading)?;
    let params = config.render_params();
    let scene = LoadedScene::load(config)?;
    let clip = render_binaural(&scene.recording, &scene.config.source, &listener, &scene.hrirs, &params)
        .map_err(Failure::processing)?;
    write_wav_f32(out, &clip).map_err(Failure::processing)?;
    let peak = clip.peak();
    let peak_db = if peak > 0.0 { 20.0 * peak.log10() } else { f64::NEG_INFINITY };
    println!(
        "{}: {} frames, {:.3} s, peak {:.2} dBFS",
        out.display(),
        clip.len(),
        clip.duration_secs(),
        peak_db
    );
    if peak > 1.0 {
        tracing::warn!("output peaks above full scale");
    }
    Ok(())
}

fn color_failure(e: ColorError) -> Failure {
    match e {
        ColorError::Io(_) => Failure::input(e),
        ColorError::DimensionMismatch { .. }
        | ColorError::ImageTooSmall { .. }
        | ColorError::MissingReference(_)
        | ColorError::InvalidArgument(_)
        | ColorError::InvalidImage(_)
        | ColorError::Format(_) => Failure::schema(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn harmonize(
    specs: &[String],
    reference: &str,
    maps: &Path,
    corrected_dir: Option<&Path>,
    lambda: f64,
    max_iterations: usize,
    output: Output,
) -> CmdResult {
    let mut images = Vec::with_capacity(specs.len());
    for spec in specs {
        let (id, path) = spec
            .split_once('=')
            .ok_or_else(|| Failure::schema(format!("--image expects ID=PATH, got `{spec}`")))?;
        let img = Image::load(Path::new(path)).map_err(color_failure)?;
        images.push((id.to_string(), img));
    }
    let opts = FitOptions {
        max_iterations,
        ..FitOptions::default()
    };
    let fits = harmonize_multiview(&images, reference, lambda, &opts).map_err(color_failure)?;
    let named: Vec<_> = fits.iter().map(|(id, f)| (id.clone(), f.map)).collect();
    write_maps(maps, &named).map_err(Failure::processing)?;
    if let Some(dir) = corrected_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::processing(format!("{}: {e}", dir.display())))?;
        for ((id, img), (_, fit)) in images.iter().zip(&fits) {
            apply_color_map(&fit.map, img)
                .save_png(&dir.join(format!("{id}.png")))
                .map_err(Failure::processing)?;
        }
    }

    let mut table = String::new();
    match output {
        Output::Csv => {
            table.push_str("camera,iterations,initial_loss,final_loss,degenerate\n");
            for (id, f) in &fits {
                let _ = writeln!(
                    table,
                    "{id},{},{:.6},{:.6},{}",
                    f.iterations,
                    f.loss_history[0],
                    f.final_loss(),
                    f.degenerate
                );
            }
        }
        Output::Text => {
            let _ = writeln!(table, "{:<12} {:>10} {:>12} {:>12}", "camera", "iterations", "initial", "final");
            for (id, f) in &fits {
                let _ = writeln!(
                    table,
                    "{id:<12} {:>10} {:>12.6} {:>12.6}{}",
                    f.iterations,
                    f.loss_history[0],
                    f.final_loss(),
                    if f.degenerate { "  (degenerate)" } else { "" }
                );
            }
        }
    }
    print!("{table}");
    Ok(())
}

fn align(manifest: &Path, refine_ms: Option<f64>, output: Output) -> CmdResult {
    let m = Manifest::load(manifest)?;
    let search = match refine_ms {
        Some(ms) if ms.is_finite() && ms >= 0.0 => Some((ms / 1000.0 * f64::from(m.session_rate)).round() as u64),
        Some(ms) => return Err(Failure::schema(format!("--refine-ms must be non-negative, got {ms}"))),
        None => None,
    };
    let rows = align_manifest(&m, search)?;
    match output {
        Output::Csv => print!("{}", alignment_csv(&rows)),
        Output::Text => print!("{}", alignment_text(&rows)),
    }
    Ok(())
}

fn alignment_text(rows: &[AlignmentRow]) -> String {
    let width = rows.iter().map(|r| r.stream_id.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:<width$} {:>14} {:>12}\n", "stream", "offset_samples", "offset_ms");
    for r in rows {
        let _ = writeln!(out, "{:<width$} {:>14} {:>12.3}", r.stream_id, r.offset_samples, r.offset_ms);
    }
    out
}

fn density(r: f64, h: f64, path: Option<&Path>, duration: Option<f64>) -> CmdResult {
    let sweep = match (path, duration) {
        (Some(p), _) => {
            let samples = RigSweep::load_path_csv(p).map_err(Failure::input)?;
            RigSweep::new(r, h, samples)
        }
        (None, Some(d)) => RigSweep::stationary(r, h, d),
        (None, None) => unreachable!("clap requires one of --path or --duration"),
    }
    .map_err(Failure::input)?;
    let d = capture_density(&sweep).map_err(Failure::input)?;
    println!("{d:.4}");
    Ok(())
}

fn serve(scenes: PathBuf, no_pacing: bool) -> CmdResult {
    let addr = sixdof_server::bind_addr_from_env().map_err(Failure::schema)?;
    if !scenes.is_dir() {
        return Err(Failure::input(format!("scene directory {} not found", scenes.display())));
    }
    let mut config = sixdof_server::ServerConfig::new(scenes);
    config.realtime = !no_pacing;
    let rt = tokio::runtime::Runtime::new().map_err(Failure::processing)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::processing(format!("cannot bind {addr}: {e}")))?;
        sixdof_server::serve(listener, config).await.map_err(Failure::processing)
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();

    // usage errors exit 1 so that 2 keeps meaning an unreadable input file
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Render { scene, listener, out } => render(&scene, &listener, &out),
        Command::Harmonize {
            images,
            reference,
            maps,
            corrected_dir,
            lambda,
            max_iterations,
            output,
        } => harmonize(
            &images,
            &reference,
            &maps,
            corrected_dir.as_deref(),
            lambda,
            max_iterations,
            output,
        ),
        Command::Align { manifest, refine_ms, output } => align(&manifest, refine_ms, output),
        Command::Density { r, h, path, duration } => density(r, h, path.as_deref(), duration),
        Command::Serve { scenes, no_pacing } => serve(scenes, no_pacing),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
