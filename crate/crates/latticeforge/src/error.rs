use thiserror::Error;

/// Errors shared across the geometry, validity, refinement and
/// homogenization layers.
#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("empty cell")]
    EmptyCell,

    #[error("edge ({i}, {j}) out of range for {n} vertices")]
    EdgeOutOfRange { i: usize, j: usize, n: usize },

    #[error("self-loop edge ({0}, {0})")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("non-finite coordinate in vertex {0}")]
    NonFiniteCoordinate(usize),

    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("rotation is not one of the 24 cube rotations")]
    NotACubeRotation,

    #[error("unknown catalog entry `{0}`")]
    UnknownCatalogEntry(String),

    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),

    #[error("thresholds must be strictly increasing")]
    ThresholdsNotIncreasing,

    #[error("empty population")]
    EmptyPopulation,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("strut radius must be positive, got {0}")]
    NonPositiveRadius(f64),

    #[error("zero-length strut between vertices {0} and {1}")]
    ZeroLengthStrut(usize, usize),

    #[error("unmatched boundary vertex {index} at ({x}, {y}, {z}) on axis {axis}")]
    UnmatchedBoundaryVertex {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
        axis: usize,
    },

    #[error("kinematic mechanism detected: {zero_modes} zero-energy modes")]
    Mechanism { zero_modes: usize },

    #[error("singular stiffness matrix")]
    SingularStiffness,

    #[error("disconnected cell: {components} components")]
    Disconnected { components: usize },

    #[error("parse error at line {line}: {reason}")]
    TextParse { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("document error: {0}")]
    Document(String),

    #[error("timestep {t} out of range (0..={max})")]
    TimestepOutOfRange { t: usize, max: usize },

    #[error("vertex count {n} out of range (1..={max})")]
    VertexCountOutOfRange { n: usize, max: usize },

    #[error("non-finite value in property vector")]
    NonFiniteProperty,

    #[error("corrupt model file: {0}")]
    CorruptModelFile(String),

    #[error("model format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("tensor shape mismatch for `{name}`: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    ShapeMismatch {
        name: String,
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
}

pub type Result<T> = std::result::Result<T, LatticeError>;
