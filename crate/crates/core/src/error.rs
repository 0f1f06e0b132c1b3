use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema line {line}: {msg}")]
    SchemaSyntax { line: usize, msg: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("unknown level {label:?} for variable {var}")]
    UnknownLevel { var: String, label: String },

    #[error("unknown variable {0}")]
    UnknownVariable(String),

    #[error("duplicate household id {0}")]
    DuplicateHousehold(String),

    #[error("household {id}: size {size} not in the allowed size set")]
    SizeOutOfRange { id: String, size: usize },

    #[error("household {0}: household size value is missing")]
    MissingSize(String),

    #[error("data row {row}: {msg}")]
    DataRow { row: usize, msg: String },

    #[error("household {id}: {msg}")]
    Household { id: String, msg: String },

    #[error("head-move transform: {0}")]
    Transform(String),

    #[error("rule line {line}: {msg}")]
    RuleSyntax { line: usize, msg: String },

    #[error("rule refers to {0}")]
    RuleReference(String),

    #[error("feasibility is undefined for a household with missing cells")]
    IncompleteHousehold,

    #[error("combination space of {size} exceeds the enumeration limit {limit}")]
    SpaceTooLarge { size: u128, limit: u128 },

    #[error("combination count overflows 128 bits")]
    CountOverflow,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid sampler configuration: {0}")]
    Config(String),

    #[error("rejection sampler exceeded {cap} draws {context}")]
    AttemptCap { cap: u64, context: String },

    #[error("variable {0} has no observed values to initialise from")]
    NoObservedValues(String),

    #[error("need at least {needed} retained snapshots, found {found}")]
    NotEnoughSnapshots { needed: usize, found: usize },

    #[error("estimand: {0}")]
    Estimand(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("combining rules need at least two datasets")]
    TooFewDatasets,

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
