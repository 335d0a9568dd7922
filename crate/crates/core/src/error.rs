use thiserror::Error;

/// Errors raised by pencil analysis, model validation, simulation and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular transformation: {0}")]
    SingularTransform(String),

    /// A rank decision was ambiguous at the requested tolerance.
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("model rejected: {0}")]
    ModelRejected(String),

    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),

    /// A weighting covariance (FF^T, P0 or R) is singular.
    #[error("singular weight: {0}")]
    SingularWeight(String),

    #[error("unestimable: {0}")]
    Unestimable(String),

    #[error("infeasible constraints: {0}")]
    Infeasible(String),

    #[error("loss of information at step {step}: {message}")]
    LossOfInformation { step: usize, message: String },
}

impl Error {
    /// Short machine-readable tag used by the CLI and the C interface.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SingularTransform(_) => "singular_transform",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::ModelRejected(_) => "model_rejected",
            Error::NotPsd(_) => "not_psd",
            Error::SingularWeight(_) => "singular_weight",
            Error::Unestimable(_) => "unestimable",
            Error::Infeasible(_) => "infeasible",
            Error::LossOfInformation { .. } => "loss_of_information",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
