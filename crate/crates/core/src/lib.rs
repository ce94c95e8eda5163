//! Resonance and quasi-resonance orders of bounded quasi-circular domains,
//! with Monte-Carlo Bergman-space machinery and a verification harness for
//! candidate automorphisms fixing the origin.

pub mod bergman;
pub mod domains;
pub mod examples;
pub mod poly;
pub mod roots;
pub mod verify;
pub mod weights;

pub use bergman::{
    gram_block, inner_product, quasi_resonance_report, representers, BergmanError, GramBlock, InnerProductEstimate,
    QuasiOptions, QuasiResonanceReport, Representer, ZeroPolicy,
};
pub use domains::{rotation_apply, DomainError, DomainKind, DomainSpec, SampleBatch, SampleSet, SamplingConfig};
pub use examples::{rotation_map, triangular_inverse, unitary_ball_map, zapalowski_map, ExampleError};
pub use poly::{compose, jacobian_det, Degree, PolyError, PolyMap, SparsePoly};
pub use verify::{
    check_adjoint_identity, check_jacobian_constant, check_membership_preservation, check_origin_fixed,
    check_theorem_orthogonality, degree_bound_report, linearity_check, run_suite, Check, Status, VerificationReport,
    VerifyError,
};
pub use weights::{enumerate_level, normalize_weight, resonance_report, MultiIndex, ResonanceReport, Weight, WeightError};
