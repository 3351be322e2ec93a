use std::fmt;

/// Exit code for bad invocations: unknown flags, missing files, invalid values.
pub const EXIT_USER: i32 = 1;
/// Exit code for inputs that were found but could not be processed.
pub const EXIT_DATA: i32 = 2;

/// A command failure tagged with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    User(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn user(msg: impl fmt::Display) -> Self {
        Failure::User(anyhow::anyhow!("{msg}"))
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure::Data(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::User(_) => EXIT_USER,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::User(e) | Failure::Data(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Tags any error as a user or data failure, with context.
pub trait Classify<T> {
    fn user_err(self, ctx: impl fmt::Display) -> CmdResult<T>;
    fn data_err(self, ctx: impl fmt::Display) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn user_err(self, ctx: impl fmt::Display) -> CmdResult<T> {
        self.map_err(|e| Failure::User(e.into().context(ctx.to_string())))
    }

    fn data_err(self, ctx: impl fmt::Display) -> CmdResult<T> {
        self.map_err(|e| Failure::Data(e.into().context(ctx.to_string())))
    }
}
