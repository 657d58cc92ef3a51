//! Large compact sets avoiding countable families of linear patterns.
//!
//! A nested cube construction in `[1,2]^d`, done in exact rational
//! arithmetic, together with certificates for the avoided patterns and for a
//! lower bound on the Hausdorff measure of the limit set.
//!
//! ```
//! use lacuna::{dimfn::DimensionFunction, engine::init, pattern::LinearPattern};
//!
//! let ap = LinearPattern::scalar(&[(1, 1), (-2, 1), (1, 1)]).unwrap();
//! let h = DimensionFunction::parse("pow:1/2", 1).unwrap();
//! let state = init(1, vec![ap], h, 64).unwrap().build(7).unwrap();
//! assert_eq!(state.leaves().len(), 64);
//! assert_eq!(state.avoidance_levels(), vec![6]);
//! ```

pub mod apps;
pub mod certify;
pub mod dimfn;
pub mod engine;
pub mod io;
pub mod numeric;
pub mod pattern;
pub mod schedule;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Pattern(#[from] pattern::PatternError),
    #[error(transparent)]
    DimFn(#[from] dimfn::DimFnError),
    #[error(transparent)]
    Schedule(#[from] schedule::ScheduleError),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
    #[error(transparent)]
    Certify(#[from] certify::CertifyError),
    #[error(transparent)]
    App(#[from] apps::AppError),
    #[error(transparent)]
    Io(#[from] io::IoError),
}

impl Error {
    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Pattern(e) => e.kind(),
            Error::DimFn(e) => e.kind(),
            Error::Schedule(e) => e.kind(),
            Error::Engine(e) => e.kind(),
            Error::Certify(e) => e.kind(),
            Error::App(e) => e.kind(),
            Error::Io(e) => e.kind(),
        }
    }
}
