use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid market model: {0}")]
    InvalidModel(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("simulation produced a non-finite price for asset {asset} at node {node}")]
    NonFinitePrice { node: usize, asset: usize },

    #[error("domain error in `{function}`: {message}")]
    Domain { function: String, message: String },

    #[error("`{function}` returned a non-positive value {value} at x={x:?}, t={t}")]
    Positivity {
        function: String,
        value: f64,
        x: Vec<f64>,
        t: f64,
    },

    #[error("`{function}` is not smooth; derivative-based operations are unavailable")]
    NonSmooth { function: String },

    #[error("non-finite difference quotient for `{function}` ({what})")]
    Differentiation { function: String, what: String },

    #[error("weight {index} = {value} exceeds the bound {bound} at t={t}")]
    WeightBound {
        index: usize,
        value: f64,
        bound: f64,
        t: f64,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("pricing pipeline rejected the step-1 solution: {0}")]
    PipelineRejected(String),

    #[error("csv: {0}")]
    Csv(String),
}
