use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid particle count: {0}")]
    InvalidParticleCount(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error(
        "non-finite state for particle {particle} at step {step} \
         (state {state}, drift {drift}, diffusion {diffusion}, increment {increment})"
    )]
    NonFiniteParticle {
        particle: usize,
        step: usize,
        state: f64,
        drift: f64,
        diffusion: f64,
        increment: f64,
    },

    #[error("non-finite decoupled path at step {step} (state {state}, log-likelihood {log_likelihood})")]
    NonFinitePath {
        step: usize,
        state: f64,
        log_likelihood: f64,
    },

    #[error("singular tridiagonal system at time level {level}")]
    SingularSystem { level: usize },

    #[error("non-finite value function at time level {level}")]
    NonFiniteValue { level: usize },

    #[error("observable changes sign; the zero-variance control is undefined")]
    SignChangingObservable,

    #[error("sample failure at outer {outer}{}: {source}", inner.map(|i| format!(", inner {i}")).unwrap_or_default())]
    Sample {
        outer: usize,
        inner: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("adaptive driver exceeded the level cap {cap}")]
    LevelCapExceeded {
        cap: usize,
        trace: Vec<crate::dlmc::LevelRecord>,
    },

    #[error("quantity of interest estimated as zero; relative tolerance undefined")]
    ZeroEstimate,
}

impl Error {
    /// Attach the inner path index.
    pub(crate) fn at_inner(self, inner: usize) -> Self {
        Error::Sample {
            outer: 0,
            inner: Some(inner),
            source: Box::new(self),
        }
    }

    /// Attach the outer realization index, keeping an inner index if present.
    pub(crate) fn at_outer(self, outer: usize) -> Self {
        match self {
            Error::Sample { inner, source, .. } => Error::Sample { outer, inner, source },
            e => Error::Sample {
                outer,
                inner: None,
                source: Box::new(e),
            },
        }
    }

    /// True for failures caused by bad inputs rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParticleCount(_)
                | Error::InvalidArgument(_)
                | Error::TimeOutOfRange { .. }
                | Error::SignChangingObservable
        )
    }
}
