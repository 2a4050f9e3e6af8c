use std::ffi::OsString;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use tracing::info;

use vector_core::bundle_adjust::{BAConfig, BaError};
use vector_core::dataset::{generate_synthetic, DatasetError, SyntheticConfig};
use vector_core::session::{load_session, save_session, Session, SessionError};

use crate::views::{report, RunSummary};

#[derive(Debug, Parser)]
#[command(name = "vector", version, about = "Bundle-adjustment error analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth {
        /// JSON synthetic configuration; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run bundle adjustment on a dataset or on a session's current edits.
    Ba(BaArgs),
    /// Write the analysis report of a session as JSON.
    Report {
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply deletions to a session.
    Edit {
        #[arg(long)]
        session: PathBuf,
        /// File with one track id per line; blank lines and `#` comments are skipped.
        #[arg(long)]
        delete_tracks: Option<PathBuf>,
        /// File with one camera id per line.
        #[arg(long)]
        delete_cameras: Option<PathBuf>,
    },
    /// Serve the HTTP API for a session.
    Serve {
        #[arg(long)]
        session: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["cameras", "session"]))]
struct BaArgs {
    #[arg(long, requires = "tracks", requires = "out")]
    cameras: Option<PathBuf>,
    #[arg(long, requires = "cameras")]
    tracks: Option<PathBuf>,
    /// Re-run on the session's edited dataset and append the run to it.
    #[arg(long, conflicts_with = "cameras")]
    session: Option<PathBuf>,
    /// JSON adjustment configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<BaError> for CliError {
    fn from(e: BaError) -> Self {
        match e {
            BaError::NumericalFailure(_)
            | BaError::SingularSystem
            | BaError::DegenerateConfiguration(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SessionError> for CliError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Ba(b) => b.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, bytes).map_err(io_err(path))
}

fn read_ids(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    fs::canonicalize(p).map_err(io_err(p))
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth { config, seed, out } => synth(config.as_deref(), seed, &out),
        Command::Ba(args) => ba(args),
        Command::Report { session, out } => {
            let s = load_session(&session)?;
            write_json(&out, &report(&s)?)
        }
        Command::Edit {
            session,
            delete_tracks,
            delete_cameras,
        } => edit(
            &session,
            delete_tracks.as_deref(),
            delete_cameras.as_deref(),
        ),
        Command::Serve {
            session,
            port,
            host,
        } => {
            let s = load_session(&session)?;
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Data(e.to_string()))?;
            rt.block_on(crate::server::serve(s, session, addr))
                .map_err(|e| CliError::Data(format!("server: {e}")))
        }
    }
}

fn synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<(), CliError> {
    let mut cfg: SyntheticConfig = match config {
        Some(p) => read_json(p)?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let d = generate_synthetic(&cfg)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    d.save(&out.join("cameras.xml"), &out.join("tracks.xml"))?;
    if let Some(gt) = &d.ground_truth {
        write_json(&out.join("ground_truth.json"), gt)?;
        let ids: String = gt
            .outlier_tracks
            .iter()
            .map(|id| format!("{id}\n"))
            .collect();
        fs::write(out.join("outliers.txt"), ids).map_err(io_err(out))?;
    }
    info!(
        cameras = d.cameras.len(),
        tracks = d.tracks.len(),
        "wrote synthetic dataset to {}",
        out.display()
    );
    Ok(())
}

fn ba(args: BaArgs) -> Result<(), CliError> {
    let config: BAConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => BAConfig::default(),
    };
    let (mut session, session_path) = match (&args.session, &args.cameras, &args.tracks, &args.out)
    {
        (Some(s), ..) => (load_session(s)?, s.clone()),
        (None, Some(c), Some(t), Some(out)) => {
            let s = Session::open(absolute(c)?, absolute(t)?)?;
            fs::create_dir_all(out).map_err(io_err(out))?;
            (s, out.join("session.json"))
        }
        _ => {
            return Err(CliError::Usage(
                "ba needs --cameras, --tracks and --out, or --session".into(),
            ))
        }
    };
    let id = session.rerun_with_progress(&config, |p| {
        info!(
            iteration = p.iteration,
            cost = p.cost,
            lambda = p.lambda,
            "bundle adjustment"
        );
        true
    })?;
    save_session(&session, &session_path)?;
    let run = session.run(&id)?;
    let summary = RunSummary::from(run);
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let adjusted = run.result.apply_to(&session.run_dataset(run)?);
        adjusted.save(
            &out.join("adjusted_cameras.xml"),
            &out.join("adjusted_tracks.xml"),
        )?;
        write_json(&out.join("ba_result.json"), &summary)?;
    }
    println!(
        "{}: cost {:.6e} -> {:.6e}, rms {:.4} -> {:.4} px, {} iterations ({:?})",
        summary.id,
        summary.initial_cost,
        summary.final_cost,
        summary.initial_rms,
        summary.final_rms,
        summary.iterations,
        summary.termination_reason
    );
    Ok(())
}

fn edit(path: &Path, tracks: Option<&Path>, cameras: Option<&Path>) -> Result<(), CliError> {
    if tracks.is_none() && cameras.is_none() {
        return Err(CliError::Usage(
            "edit needs --delete-tracks or --delete-cameras".into(),
        ));
    }
    let mut session = load_session(path)?;
    let mut n = 0;
    if let Some(f) = cameras {
        for id in read_ids(f)? {
            let out = session.delete_camera(&id)?;
            if !out.cascaded_tracks.is_empty() {
                info!(
                    "deleting camera {id} also removed {} track(s)",
                    out.cascaded_tracks.len()
                );
            }
            n += 1;
        }
    }
    if let Some(f) = tracks {
        for id in read_ids(f)? {
            session.delete_track(&id)?;
            n += 1;
        }
    }
    save_session(&session, path)?;
    println!(
        "applied {n} edit(s); {} tracks and {} cameras remain",
        session.effective().tracks.len(),
        session.effective().cameras.len()
    );
    Ok(())
}
