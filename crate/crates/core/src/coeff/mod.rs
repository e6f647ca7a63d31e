//! Coefficient fields `(b, σ)`: expressions, catalog entries, and the
//! regularity audit.

mod audit;
pub mod expr;
mod field;

pub use audit::{
    audit_regularity, AuditBox, AuditCondition, AuditPoint, AuditStatus, AuditWitness, RegularityReport,
};
pub use expr::{parse_expression, BinOp, EvalError, Expr, Func, ParseError};
pub use field::{alpha_zero, default_alpha, CatalogSpec, CoeffSpec, CoefficientField, ExpressionSpec, Regularity};
