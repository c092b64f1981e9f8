use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not line up.
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// An input that must hold at least one element was empty.
    Empty(&'static str),
    /// A value was NaN or infinite where a finite real is required.
    NonFinite(&'static str),
    InvalidConfig(&'static str),
    InvalidParams(&'static str),
    LabelOutOfRange { label: u32, vocab: usize },
    NotAPrefix,
    /// The expansion loop of a beam search exceeded its safety cap.
    IterationCap { frame: usize, pops: usize },
    /// Exhaustive enumeration would exceed the allowed work.
    BudgetExceeded { sequences: u128, evaluations: u128, budget: u128 },
    NonPositiveDuration,
    InvalidPercentile,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
            Error::InvalidConfig(why) => write!(f, "invalid model config: {why}"),
            Error::InvalidParams(why) => write!(f, "invalid decoder parameters: {why}"),
            Error::LabelOutOfRange { label, vocab } => {
                write!(f, "label {label} outside vocabulary of size {vocab}")
            }
            Error::NotAPrefix => write!(f, "sequence is not a strict prefix"),
            Error::IterationCap { frame, pops } => {
                write!(f, "expansion loop hit safety cap of {pops} pops at frame {frame}")
            }
            Error::BudgetExceeded {
                sequences,
                evaluations,
                budget,
            } => write!(
                f,
                "enumeration budget exceeded: {sequences} sequences need {evaluations} lattice evaluations, budget is {budget}"
            ),
            Error::NonPositiveDuration => write!(f, "duration must be positive"),
            Error::InvalidPercentile => write!(f, "percentile must lie in [0, 100]"),
        }
    }
}

impl core::error::Error for Error {}
