use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("pixel ({u}, {v}) is outside the {width}x{height} image")]
    OutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("covariance is singular or not positive definite (condition {condition:e})")]
    SingularCovariance { condition: f64 },
    #[error("expected {expected} SH coefficients for degree {degree}, got {got}")]
    DegreeMismatch {
        degree: usize,
        expected: usize,
        got: usize,
    },
    #[error("backward pass has no matching forward state")]
    ForwardStateMissing,
    #[error("unknown view id {0}")]
    UnknownView(u32),
    #[error("bounding box has a non-positive extent")]
    DegenerateBox,
    #[error("no surface point is visible in two or more views")]
    InsufficientVisibility,
    #[error("image is empty")]
    EmptyImage,
    #[error("pruning step must be >= 1, got {0}")]
    InvalidStep(usize),
    #[error("feature stack does not match views: {0}")]
    FeatureViewMismatch(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("gaussian field is empty")]
    EmptyField,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable identifier, used by the command line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::BehindCamera { .. } => "behind_camera",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::ZeroQuaternion => "zero_quaternion",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::DegreeMismatch { .. } => "degree_mismatch",
            Error::ForwardStateMissing => "forward_state_missing",
            Error::UnknownView(_) => "unknown_view",
            Error::DegenerateBox => "degenerate_box",
            Error::InsufficientVisibility => "insufficient_visibility",
            Error::EmptyImage => "empty_image",
            Error::InvalidStep(_) => "invalid_step",
            Error::FeatureViewMismatch(_) => "feature_view_mismatch",
            Error::SizeMismatch { .. } => "size_mismatch",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::EmptyField => "empty_field",
            Error::InvalidCamera(_) => "invalid_camera",
            Error::InvalidConfig(_) => "invalid_config",
        }
    }
}
