use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no triplets")]
    EmptyGraph,
    #[error("invalid triplet #{index}: {reason}")]
    InvalidTriplet { index: usize, reason: String },
    #[error("duplicate triplet ({head}; {relation}; {tail})")]
    DuplicateTriplet {
        head: String,
        relation: String,
        tail: String,
    },
    #[error("triplet index {index} out of range for graph of {len} triplets")]
    TripletOutOfRange { index: usize, len: usize },
    #[error("triplet {0} is already masked")]
    AlreadyMasked(usize),
    #[error("graph has no target triplet")]
    NoTarget,
    #[error("mask sentinels exhausted: need {needed}, have {available}")]
    SentinelsExhausted { needed: usize, available: usize },
    #[error("unknown relation `{name}`; known relations: {known}")]
    UnknownRelation { name: String, known: String },
    #[error("unit {unit} (`{text}`) tokenizes to zero tokens")]
    EmptyUnit { unit: usize, text: String },

    #[error("relative position None has no bucket")]
    NoBucket,
    #[error("permutation is not a bijection on 0..{0}")]
    NotAPermutation(usize),

    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("bias table is already extended with sentinel buckets")]
    AlreadyExtended,
    #[error("bias table has {found} rows, expected {expected}")]
    BiasRows { expected: usize, found: usize },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("empty input sequence")]
    EmptyInput,
    #[error("plan covers {plan} tokens but {tokens} tokens were given")]
    PlanLength { plan: usize, tokens: usize },
    #[error("invalid config: {0}")]
    Config(String),

    #[error("expected exactly one readout token, found {0}")]
    Readout(usize),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("inconsistent labels: {0}")]
    InconsistentLabels(String),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },

    #[error("class `{class}` has {available} eligible seed triplets, needs {needed} (short by {})", needed - available)]
    InsufficientSeeds {
        class: String,
        available: usize,
        needed: usize,
    },
    #[error("seed triplet skipped: {0}")]
    SeedSkipped(String),
    #[error("empty collection")]
    EmptyCollection,
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("tensor container: {0}")]
    Container(String),
}
