use thiserror::Error;

/// Errors surfaced by kernels, samplers, and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("zero matrix has no compact SVD")]
    ZeroMatrixSvd,

    #[error("matrix asymmetric beyond tolerance (max deviation {0:.3e})")]
    Asymmetric(f64),

    #[error("matrix not positive semidefinite (eigenvalue {0:.3e} below tolerance)")]
    NotPsd(f64),

    #[error("k exceeds rank support")]
    KAboveRankSupport,

    #[error("k above rank")]
    KAboveRank,

    #[error("kernel rank below k")]
    KernelRankBelowK,

    #[error(
        "Bernoulli rejection loop exceeded {0} trials; k is far from the typical \
         Bernoulli sum for this kernel, use the brute-force pmf instead"
    )]
    RejectionCap(u64),

    #[error("sampled block is zero")]
    SampledBlockZero,

    #[error("use coordinate-descent solver directly")]
    UseCoordinateDescent,

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
