use crate::search::SearchStep;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate {value} lies outside the unit cube")]
    OutsideDomain { value: f64 },

    #[error("point does not coincide with any atom of the distribution")]
    NotAnAtom,

    #[error("operation requires a finite-support (atoms) problem")]
    NotAtomic,

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty dataset")]
    EmptyData,

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("cell index overflows a 64-bit flat index")]
    IndexOverflow,

    #[error(
        "abstention budget infeasible: budget {budget}, best constraint value {best_constraint} at multiplier {multiplier_max}"
    )]
    ConstraintInfeasible {
        budget: f64,
        best_constraint: f64,
        multiplier_max: f64,
    },

    #[error("no iterate met the abstention budget {delta} in {iterations} rounds; trace: {trace:?}")]
    SearchExhausted {
        delta: f64,
        iterations: usize,
        trace: Vec<SearchStep>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
