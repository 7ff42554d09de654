//! Closed-loop decision protocols: free lane selection with verifier
//! feedback (Case 1) and the state-machine-guided lane change with
//! reflection checks (Case 2).

mod driver;
mod fsm;
mod reflect;

pub use driver::{
    ActionSource, BehaviorConfig, BehaviorError, CycleTrigger, DecisionCycleLog, Driver,
    ProposalLog, StepDecision, VerdictSummary,
};
pub use fsm::{BehaviorState, StateMachineGraph};
pub use reflect::{reflect, CheckResult, ReflectConfig, TransitionVerdict};
