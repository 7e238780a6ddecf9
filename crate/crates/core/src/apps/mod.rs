//! Benchmark families: generalized SDP with a planted optimum and
//! two-dimensional QCQPs with their relaxation baselines.

pub mod gensdp;
pub mod instance;
pub mod qcqp;
pub mod sdr;
