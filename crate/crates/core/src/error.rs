use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),

    #[error("voxel index ({ix}, {iy}, {iz}) out of dims ({nx}, {ny}, {nz})")]
    IndexOutOfRange {
        ix: usize,
        iy: usize,
        iz: usize,
        nx: usize,
        ny: usize,
        nz: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("missing ego pose for frame {0}")]
    MissingPose(usize),

    #[error("grid spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {reason}")]
    Format { path: String, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("evaluation error: {0}")]
    Eval(String),
}

pub type Result<T> = std::result::Result<T, Error>;
