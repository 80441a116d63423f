use crate::counts::CountsError;
use crate::detect::EvalError;
use crate::estimate::EstimateError;
use crate::factors::FactorError;
use crate::geo::GeoError;
use crate::io::IoError;
use crate::synth::SynthError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("writing output: {0}")]
    Output(#[from] std::io::Error),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Counts(#[from] CountsError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// 1 for usage, 3 for numeric failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => EXIT_USAGE,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Factor(FactorError::SingularFit | FactorError::Infeasible(_))
            | Error::Estimate(EstimateError::Domain(_) | EstimateError::Factor(_))
            | Error::Eval(EvalError::UndefinedDenominator)
            | Error::Counts(CountsError::ZeroMean(_)) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}

pub trait StageExt<T> {
    /// Tags an error with the pipeline stage it came from.
    fn stage(self, stage: &'static str) -> Result<T, Error>;
}

impl<T, E: Into<Error>> StageExt<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, Error> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(Error::Usage("x".into()).exit_code(), 1);
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::from(FactorError::SingularFit).exit_code(), 3);
        let staged: Result<(), Error> = Err(FactorError::SingularFit).stage("fit");
        let e = staged.unwrap_err();
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().starts_with("fit: "));
        assert_eq!(Error::from(EstimateError::NoResiduals).exit_code(), 2);
    }
}
