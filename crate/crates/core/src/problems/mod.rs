//! Built-in benchmark problems and importance proposals.

pub mod laplace;
pub mod pk;
pub mod proposal;
pub mod testcase;

pub use laplace::{laplace_fit, LaplaceFit, LaplaceStep, LaplaceTarget, MeanDerivs};
pub use pk::{pk_mean_response, MeanResponse, Pk, PkParams};
pub use proposal::{fit_proposal, GaussianProposal, Proposal, ProposalKind};
pub use testcase::{TestCase, TestCaseParams};

/// Constructors matching the default experimental settings.
pub fn testcase_model() -> TestCase {
    TestCase::default()
}

pub fn pk_model() -> Pk {
    Pk::default()
}
