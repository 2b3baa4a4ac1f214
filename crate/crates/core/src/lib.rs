//! Numerical toolkit for an impulsive second-order stochastic evolution
//! inclusion with infinite delay: Rosenblatt noise synthesis, two-parameter
//! evolution operators, Clarke subdifferentials, phase-space norms, a
//! Picard solver for the mild-solution map, and hypothesis certification.

pub mod certify;
pub mod clarke;
pub mod error;
pub mod evolution;
pub mod phase;
pub mod problem;
pub mod quad;
pub mod rosenblatt;
pub mod solver;

pub use certify::{
    build_hypothesis_report, check_bihari_condition, compute_m0, fit_coefficient_constants,
    lemma23_certificate, BihariReport, HypothesisReport, M0Inputs, M0Variants, MomentReport,
    MqForm,
};
pub use clarke::{
    growth_check, minimal_norm_selection, subdifferential, LocallyLipschitzFn, Quadratic,
    Selection, SubdifferentialSet,
};
pub use error::{Error, Result};
pub use evolution::{
    assemble_generator, estimate_m, verify_kozak_axioms, GalerkinSpace, GeneratorFamily,
    KozakReport, PropagatorPair,
};
pub use phase::{
    fit_phase_constants, lemma21_check, phase_norm, AnalyticTail, History, HistorySegment,
    ImpulseSchedule, IntervalKind, PhaseConstants, WeightFunction,
};
pub use problem::{
    DelayKernel, DelayMap, ImpulsePair, ProblemConfig, ProblemSpec, TimeCoefficient,
};
pub use rosenblatt::{
    hurst_constants, kernel_kh, simulate_q_rosenblatt, simulate_rosenblatt, BrownianGrid,
    HurstParameter, RosenblattPath, TraceClassCovariance,
};
pub use solver::{
    deterministic_convolution, picard_solve, stochastic_convolution, theta_apply,
    ConvergenceTrace, EvolutionFamily, IdentityFamily, MildSolutionPath, Verdict,
};
