use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two operands disagree on (height, width).
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// A grid with zero pixels, or a zero dimension.
    Empty,
    /// Values are negative or do not sum to one.
    NotADistribution { sum: f64, min: f64 },
    NonFinite,
    /// A fixation lies outside its image.
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    EmptyFixations,
    /// Zero variance where a spread is required (CC, NSS).
    ConstantMap,
    InvalidParameter(&'static str),
    /// Grid too large for the brute-force transport oracle.
    TooLarge { cells: usize, limit: usize },
    /// Training produced a non-finite loss.
    Diverged { iteration: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::Empty => f.write_str("empty grid"),
            Error::NotADistribution { sum, min } => {
                write!(f, "not a distribution (sum {sum}, min {min})")
            }
            Error::NonFinite => f.write_str("non-finite value"),
            Error::OutOfBounds {
                row,
                col,
                height,
                width,
            } => write!(
                f,
                "fixation ({row}, {col}) outside {height}x{width} image"
            ),
            Error::EmptyFixations => f.write_str("empty fixation set"),
            Error::ConstantMap => f.write_str("map has zero variance"),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::TooLarge { cells, limit } => {
                write!(f, "grid of {cells} cells exceeds limit of {limit}")
            }
            Error::Diverged { iteration } => {
                write!(f, "loss became non-finite at iteration {iteration}")
            }
        }
    }
}

impl core::error::Error for Error {}
