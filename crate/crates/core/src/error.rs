use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopError {
    #[error("matrix violates the SU(2) constraints (residual {residual:.3e})")]
    NotInGroup { residual: f64 },
    #[error("velocity is not tangent to SU(2) (residual {residual:.3e})")]
    NotTangent { residual: f64 },
    #[error("matrix is too far from SU(2) to project (distance {distance:.3e})")]
    TooFarFromGroup { distance: f64 },
    #[error("momentum form is singular (condition number {condition:.3e})")]
    SingularMomentumForm { condition: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible first integrals: {0}")]
    Infeasible(String),
    #[error("root finding failed: {0}")]
    RootFinding(String),
    #[error("branch {index} is not available: {reason}")]
    BranchUnavailable { index: usize, reason: String },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("turning point at u = {u}")]
    TurningPoint { u: f64 },
    #[error("pole encountered: {0}")]
    Pole(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("not applicable: {0}")]
    Inapplicable(String),
}

pub type Result<T> = std::result::Result<T, TopError>;
