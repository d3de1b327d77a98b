//! Evaluators for the summability conditions.

pub mod akl;
pub mod condition_c;
pub mod dim2;
pub mod report;
pub mod theorem3;
pub mod zprod;

pub use akl::{akl_member, Membership, MembershipOracle, OracleConfig};
pub use condition_c::{condition_c_term, condition_c_terms, replicate_event, ConditionCConfig, Coupling};
pub use dim2::{dim2_terms, dim2_verdict, Dim2Config};
pub use report::{summability_verdict, ConditionReport, Term, Verdict, VerdictConfig};
pub use theorem3::{theorem3_decompose, verify_sections, AkdComplement, BoxRegion, Decomposition, IntroRegion, Region, Theorem3Config, Theorem3Level, TrivialRegion};
pub use zprod::{product_tail_monte_carlo, product_tail_quadrature, zprod_all, zprod_terms, ZprodEstimator, ZprodEvent};
