//! Model checking for epistemic gossip protocols.

pub mod classify;
pub mod error;
pub mod gossip;
pub mod indist;
pub mod logic;
pub mod oracle;
pub mod protocol;
pub mod universe;

pub use error::{Error, Result};
pub use gossip::{
    affected, apply_call, apply_sequence, initial_situation, involved, AgentId, Call, CallSequence, CallType,
    Direction, GossipSituation, Observance, Privacy, Secret, SecretSet, MAX_AGENTS,
};
pub use indist::{
    approx, build_equivalence_index, class_of, indistinguishable, ClassRecord, EquivalenceIndex, IndexConfig,
    Partition,
};
pub use universe::Universe;
pub use logic::{
    eval, expert_formula, format_formula, fragment_of, parse_formula, to_lhat, Formula, FragmentFlags, GossipModel,
};
pub use protocol::{
    analyze, computation_tree, greatest_fixpoint, hear_my_secret, instantiate, parse_protocol_file,
    relativised_tree, rho, schedule_2n_minus_4, ComputationTree, InstructionSchema, Protocol, ProtocolReport,
    Semantics,
};
pub use classify::{
    check_fixtures, check_preservation, compare_types, verify_preorder, witness_fixtures, ComparisonResult,
    ExpectedPreorder, Fragment, PreorderReport, PreservationQuery, Verdict,
};
