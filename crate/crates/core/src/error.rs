use thiserror::Error;

use crate::model::{ExperimentMode, LifecycleState};
use crate::stats::StatsError;
use crate::storage::StorageError;
use crate::wheel::{GeometryError, Violation};

/// Coarse category of an [`Error`], used to pick HTTP statuses and exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Invalid,
    Unauthorized,
    Forbidden,
    NotFound,
    Conflict,
    TooLarge,
    Storage,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("start time must be before finish time")]
    InvalidSchedule,
    #[error("unknown tag map '{0}'")]
    UnknownTagMap(String),
    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),
    #[error("unknown participant '{0}'")]
    UnknownParticipant(String),
    #[error("unknown picture '{0}'")]
    UnknownPicture(String),
    #[error("experiment mode cannot be changed after creation")]
    ModeImmutable,
    #[error("experiment is finished and can no longer be changed")]
    ExperimentFinished,
    #[error("cannot move experiment from {from:?} to {to:?}")]
    InvalidTransition {
        from: LifecycleState,
        to: LifecycleState,
    },
    #[error("a curated experiment needs at least one picture before activation")]
    NoPictures,
    #[error("operation not available in {0:?} mode")]
    WrongMode(ExperimentMode),
    #[error("bad credentials")]
    BadCredentials,
    #[error("invitation token has expired")]
    TokenExpired,
    #[error("experiment is not active")]
    ExperimentNotActive,
    #[error("participant '{0}' is not part of this experiment")]
    NotAParticipant(String),
    #[error("session is no longer valid")]
    SessionClosed,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("field pictures and their tags must carry a location")]
    MissingLocation,
    #[error("latitude must be in [-90, 90] and longitude in [-180, 180]")]
    InvalidLocation,
    #[error("image exceeds the {limit} byte limit")]
    ImageTooLarge { limit: usize },
    #[error("image is not a decodable JPEG or PNG")]
    UndecodableImage,
    #[error("invalid tag map")]
    InvalidTagMap(Vec<Violation>),
    #[error("cell size must be in (0, 10] degrees")]
    InvalidCellSize,
    #[error("'{0}' is not a valid identifier")]
    InvalidId(String),
    #[error("'{0}' already exists")]
    AlreadyExists(String),
    #[error("{0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSchedule => "invalid_schedule",
            Error::UnknownTagMap(_) => "unknown_tag_map",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::UnknownParticipant(_) => "unknown_participant",
            Error::UnknownPicture(_) => "unknown_picture",
            Error::ModeImmutable => "mode_immutable",
            Error::ExperimentFinished => "experiment_finished",
            Error::InvalidTransition { .. } => "invalid_transition",
            Error::NoPictures => "no_pictures",
            Error::WrongMode(_) => "wrong_mode",
            Error::BadCredentials => "bad_credentials",
            Error::TokenExpired => "token_expired",
            Error::ExperimentNotActive => "experiment_not_active",
            Error::NotAParticipant(_) => "not_a_participant",
            Error::SessionClosed => "session_closed",
            Error::Geometry(g) => g.code(),
            Error::MissingLocation => "missing_location",
            Error::InvalidLocation => "invalid_location",
            Error::ImageTooLarge { .. } => "image_too_large",
            Error::UndecodableImage => "undecodable_image",
            Error::InvalidTagMap(_) => "invalid_tag_map",
            Error::InvalidCellSize => "invalid_cell_size",
            Error::InvalidId(_) => "invalid_id",
            Error::AlreadyExists(_) => "already_exists",
            Error::InvalidRequest(_) => "invalid_request",
            Error::Stats(StatsError::EmptyInput) => "empty_input",
            Error::Storage(StorageError::StorageFull) => "storage_full",
            Error::Storage(StorageError::InvalidId(_)) => "invalid_id",
            Error::Storage(StorageError::BlobNotFound(_)) => "blob_not_found",
            Error::Storage(_) => "storage_error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Error::InvalidSchedule
            | Error::UnknownTagMap(_)
            | Error::Geometry(_)
            | Error::MissingLocation
            | Error::InvalidLocation
            | Error::UndecodableImage
            | Error::InvalidTagMap(_)
            | Error::InvalidCellSize
            | Error::InvalidId(_)
            | Error::InvalidRequest(_)
            | Error::Stats(_)
            | Error::Storage(StorageError::InvalidId(_)) => Invalid,
            Error::UnknownExperiment(_)
            | Error::UnknownParticipant(_)
            | Error::UnknownPicture(_)
            | Error::Storage(StorageError::BlobNotFound(_)) => NotFound,
            Error::ModeImmutable
            | Error::ExperimentFinished
            | Error::InvalidTransition { .. }
            | Error::NoPictures
            | Error::WrongMode(_)
            | Error::AlreadyExists(_) => Conflict,
            Error::BadCredentials | Error::SessionClosed => Unauthorized,
            Error::TokenExpired | Error::ExperimentNotActive | Error::NotAParticipant(_) => {
                Forbidden
            }
            Error::ImageTooLarge { .. } => TooLarge,
            Error::Storage(_) => Storage,
        }
    }
}
