//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("model parameters out of range: {0}")]
    BadParams(String),
    #[error("point lies inside the shorted disc (|x| = {radius} < eps = {eps})")]
    InsideDisc { radius: f64, eps: f64 },
    #[error("leg coordinate must be positive, got {0}")]
    NegativeLeg(f64),
    #[error("coordinate is not finite")]
    NonFinite,
    #[error("domain parameters out of range: {0}")]
    BadDomain(String),
    #[error("point is outside the domain")]
    OutsideDomain,
}

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid span must be positive, got leg={0}, plane={1}")]
    BadSpan(f64, f64),
    #[error("resolution too coarse: {side} side has {cells} cells (minimum 16)")]
    TooCoarse { side: &'static str, cells: usize },
    #[error("resolution policy out of range: {0}")]
    BadPolicy(String),
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("source point {0} outside grid span")]
    SourceOutsideGrid(f64),
    #[error("drift magnitude {max:.3} at node {node} exceeds the configured cap {cap}")]
    DriftTooLarge { max: f64, node: usize, cap: f64 },
    #[error("drift under-resolved on the grid: cell Peclet number {0:.3} >= 2")]
    DriftUnderResolved(f64),
    #[error("output times must be increasing and positive")]
    BadOutputTimes,
    #[error("requested time {0} is not an output time of the table")]
    NotAnOutputTime(f64),
    #[error("tables are not compatible: {0}")]
    IncompatibleTables(String),
    #[error("query point is not radially representable for this table")]
    NonRadialQuery,
    #[error("domain grid mismatch: {0}")]
    DomainMismatch(String),
    #[error("absorption too slow: residual mass {residual:.3e} above {target:.3e} at t = {t_max}")]
    SlowAbsorption { residual: f64, target: f64, t_max: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation config invalid: {0}")]
    BadConfig(String),
    #[error("time step {dt} too large for interface radius eps = {eps}")]
    StepTooLarge { dt: f64, eps: f64 },
    #[error("empty ensemble")]
    EmptyEnsemble,
    #[error("binning invalid: {0}")]
    BadBinning(String),
    #[error("starting point outside the domain")]
    StartOutsideDomain,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("empty evaluation table")]
    EmptyTable,
    #[error("negative kernel value {value:.3e} in cell {cell}; estimator bug upstream")]
    NegativeValue { value: f64, cell: usize },
    #[error("no evaluation cells left after support/window filtering")]
    EmptySupport,
    #[error("alpha grid invalid: {0}")]
    BadAlphaGrid(String),
}

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("perturbation series is not contracting: level ratios {r_prev:.3} then {r_curr:.3}; reduce the horizon")]
    NotContracting { r_prev: f64, r_curr: f64 },
    #[error("time-endpoint quadrature tail exceeds {limit:.0}% of the integral; refine the time grid")]
    EndpointTail { limit: f64 },
    #[error("resolvent iteration not converging at alpha = {alpha}: term ratio {ratio:.3}")]
    ResolventDiverging { alpha: f64, ratio: f64 },
    #[error("space-time grid invalid: {0}")]
    BadGrid(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("missing required key `{key}` in section [{section}]")]
    MissingKey { section: String, key: String },
    #[error("{path}:{line}: unknown key `{key}` in section [{section}]")]
    UnknownKey {
        path: String,
        line: usize,
        section: String,
        key: String,
    },
    #[error("key `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Top-level error for the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
