use std::fmt;

/// Bad input: arguments, case files, meshes, output locations.
pub const EXIT_INPUT: u8 = 2;
/// A solver did not converge or the check suite failed.
pub const EXIT_SOLVER: u8 = 1;

/// Error tagged with the stage that produced it and the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub stage: &'static str,
    pub source: anyhow::Error,
}

impl Failure {
    pub fn input(stage: &'static str, source: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_INPUT,
            stage,
            source: source.into(),
        }
    }

    pub fn solver(stage: &'static str, source: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_SOLVER,
            stage,
            source: source.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.stage, self.source)
    }
}

pub trait Stage<T> {
    fn input(self, stage: &'static str) -> Result<T, Failure>;
    fn solver(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn input(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::input(stage, e))
    }

    fn solver(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure::solver(stage, e))
    }
}
