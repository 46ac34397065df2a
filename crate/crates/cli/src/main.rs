//! `emomap`: run the platform server and administer experiments.
//!
//! Without `--server` commands work on the store directory directly; that is
//! only allowed for writes while no server holds the store. With `--server`
//! they go through the HTTP API using researcher credentials.
//!
//! Exit codes: 0 success, 1 usage error, 2 domain error, 3 I/O error.

mod backend;
mod direct;
mod remote;
mod serve;

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use emomap_core::model::{ExperimentMode, Handedness, PictureOrdering};
use emomap_core::platform::{ExperimentDraft, NewParticipant, DEFAULT_MAX_IMAGE_BYTES};
use emomap_core::storage::StorageError;
use emomap_core::{ErrorClass, PlatformConfig, TagMapDoc, PLUTCHIK_ID};

use backend::Backend;
use direct::{Direct, StoreLocked};
use remote::{Remote, RemoteError};

#[derive(Parser, Debug)]
#[command(name = "emomap", version, about = "Emotion-wheel crowdsensing platform")]
struct Cli {
    /// Store directory.
    #[arg(long, env = "EMOMAP_STORE", default_value = "emomap-data", global = true)]
    store: PathBuf,

    /// Public base URL used in invitation links.
    #[arg(long, env = "EMOMAP_BASE_URL", default_value = "http://localhost:8080", global = true)]
    base_url: String,

    /// Largest accepted image upload, in bytes.
    #[arg(long, env = "EMOMAP_MAX_IMAGE_BYTES", default_value_t = DEFAULT_MAX_IMAGE_BYTES, global = true)]
    max_image_bytes: usize,

    #[command(flatten)]
    remote: RemoteArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct RemoteArgs {
    /// Talk to a running server instead of the store.
    #[arg(long, env = "EMOMAP_SERVER", global = true)]
    server: Option<String>,

    /// Researcher username for --server.
    #[arg(long, env = "EMOMAP_USER", global = true)]
    user: Option<String>,

    /// Researcher password for --server.
    #[arg(long, env = "EMOMAP_PASSWORD", global = true, hide_env_values = true)]
    password: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP API until interrupted.
    Serve {
        #[arg(long, env = "EMOMAP_BIND", default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Create a researcher account (store access only).
    ResearcherAdd {
        #[arg(long)]
        username: String,
        #[arg(long)]
        password: String,
    },
    /// Register a participant, optionally with login credentials.
    ParticipantAdd {
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, requires = "participant_password")]
        username: Option<String>,
        #[arg(long = "participant-password", id = "participant_password", requires = "username")]
        participant_password: Option<String>,
        #[arg(long)]
        left_handed: bool,
    },
    /// Register a custom tag map from a JSON document.
    ImportTagMap { file: PathBuf },
    /// Create an experiment in the DRAFT state and print its id.
    Create {
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// RFC 3339 start of the schedule window.
        #[arg(long)]
        start: DateTime<Utc>,
        /// RFC 3339 end of the schedule window.
        #[arg(long)]
        finish: DateTime<Utc>,
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value = PLUTCHIK_ID)]
        tag_map: String,
        #[arg(long, value_enum, default_value_t = OrderingArg::Fixed)]
        ordering: OrderingArg,
        #[arg(long, default_value = "en")]
        locale: String,
    },
    /// List experiments.
    List,
    /// Open an experiment for tagging.
    Activate {
        #[arg(long)]
        experiment: String,
    },
    /// Close an experiment.
    Finish {
        #[arg(long)]
        experiment: String,
    },
    /// Upload JPEG or PNG files to a curated experiment, in order.
    AddPictures {
        #[arg(long)]
        experiment: String,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Mint an invitation and print its URL (also the QR payload).
    Invite {
        #[arg(long)]
        experiment: String,
        #[arg(long)]
        participant: String,
        /// RFC 3339 expiry time.
        #[arg(long)]
        expires: Option<DateTime<Utc>>,
    },
    /// Write the CSV export of an experiment.
    Export {
        #[arg(long)]
        experiment: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the emotion-map grid document of an experiment.
    Map {
        #[arg(long)]
        experiment: String,
        /// Cell size in degrees.
        #[arg(long)]
        cell_size: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Curated,
    Field,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrderingArg {
    Fixed,
    Random,
}

fn config(cli: &Cli) -> PlatformConfig {
    PlatformConfig {
        base_url: cli.base_url.clone(),
        max_image_bytes: cli.max_image_bytes,
    }
}

fn backend(cli: &Cli) -> anyhow::Result<Box<dyn Backend>> {
    match &cli.remote.server {
        Some(url) => {
            let (Some(user), Some(password)) = (&cli.remote.user, &cli.remote.password) else {
                bail!(Usage("--server needs --user and --password".into()));
            };
            Ok(Box::new(Remote::login(url, user, password)?))
        }
        None => Ok(Box::new(Direct::new(cli.store.clone(), config(cli)))),
    }
}

/// Bad invocation discovered after parsing.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct Usage(String);

fn write_output(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(stdout.flush()?)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Serve { bind } => serve::run(&cli.store, *bind, config(&cli)),
        Command::ResearcherAdd { username, password } => {
            if cli.remote.server.is_some() {
                bail!(Usage("researcher-add works on the store only".into()));
            }
            direct::add_researcher(&cli.store, username, password)?;
            println!("{username}");
            Ok(())
        }
        Command::ParticipantAdd {
            id,
            name,
            username,
            participant_password,
            left_handed,
        } => {
            let id = backend(&cli)?.add_participant(NewParticipant {
                id: id.clone(),
                display_name: name.clone(),
                username: username.clone(),
                password: participant_password.clone(),
                handedness: if *left_handed {
                    Handedness::Left
                } else {
                    Handedness::Right
                },
            })?;
            println!("{id}");
            Ok(())
        }
        Command::ImportTagMap { file } => {
            let text = fs::read_to_string(file)
                .with_context(|| format!("cannot read {}", file.display()))?;
            let doc: TagMapDoc = serde_json::from_str(&text)
                .map_err(|e| Usage(format!("{}: {e}", file.display())))?;
            println!("{}", backend(&cli)?.import_tag_map(doc)?);
            Ok(())
        }
        Command::Create {
            mode,
            start,
            finish,
            id,
            tag_map,
            ordering,
            locale,
        } => {
            let exp = backend(&cli)?.create(ExperimentDraft {
                id: id.clone(),
                mode: match mode {
                    ModeArg::Curated => ExperimentMode::Curated,
                    ModeArg::Field => ExperimentMode::Field,
                },
                start_time: *start,
                finish_time: *finish,
                tag_map_id: tag_map.clone(),
                picture_ids: Vec::new(),
                ordering: match ordering {
                    OrderingArg::Fixed => PictureOrdering::Fixed,
                    OrderingArg::Random => PictureOrdering::RandomPerParticipant,
                },
                participant_ids: Default::default(),
                locale_default: locale.clone(),
            })?;
            println!("{}", exp.id);
            Ok(())
        }
        Command::List => {
            let mut out = String::new();
            for e in backend(&cli)?.list()? {
                out.push_str(&format!(
                    "{}\t{:?}\t{:?}\t{}\t{}\t{} pictures\t{} participants\n",
                    e.id,
                    e.mode,
                    e.state,
                    e.start_time.to_rfc3339(),
                    e.finish_time.to_rfc3339(),
                    e.picture_ids.len(),
                    e.participant_ids.len(),
                ));
            }
            write_output(None, &out)
        }
        Command::Activate { experiment } => {
            let e = backend(&cli)?.activate(experiment)?;
            println!("{} {:?}", e.id, e.state);
            Ok(())
        }
        Command::Finish { experiment } => {
            let e = backend(&cli)?.finish(experiment)?;
            println!("{} {:?}", e.id, e.state);
            Ok(())
        }
        Command::AddPictures { experiment, files } => {
            let mut images = Vec::new();
            for f in files {
                let bytes = fs::read(f).with_context(|| format!("cannot read {}", f.display()))?;
                let name = f
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                images.push((name, bytes));
            }
            for p in backend(&cli)?.add_pictures(experiment, images)? {
                println!("{}", p.id);
            }
            Ok(())
        }
        Command::Invite {
            experiment,
            participant,
            expires,
        } => {
            let inv = backend(&cli)?.invite(experiment, participant, *expires)?;
            println!("{}", inv.url_payload);
            Ok(())
        }
        Command::Export { experiment, out } => {
            let csv = backend(&cli)?.export(experiment)?;
            write_output(out.as_deref(), &csv)
        }
        Command::Map {
            experiment,
            cell_size,
            out,
        } => {
            let doc = backend(&cli)?.map(experiment, *cell_size)?;
            write_output(out.as_deref(), &doc)
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<emomap_core::Error>() {
            return match e {
                emomap_core::Error::Storage(StorageError::InvalidId(_)) => 2,
                e if e.class() == ErrorClass::Storage => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<RemoteError>() {
            return if e.status >= 500 { 3 } else { 2 };
        }
        if cause.is::<StoreLocked>() {
            return 2;
        }
        if cause.is::<StorageError>() || cause.is::<io::Error>() || cause.is::<reqwest::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emomap: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
