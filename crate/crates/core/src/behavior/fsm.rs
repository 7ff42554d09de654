use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorState {
    Stay,
    Attempt,
    Finish,
    Abort,
}

impl BehaviorState {
    pub const ALL: [BehaviorState; 4] = [
        BehaviorState::Stay,
        BehaviorState::Attempt,
        BehaviorState::Finish,
        BehaviorState::Abort,
    ];

    pub fn word(self) -> &'static str {
        match self {
            BehaviorState::Stay => "Stay",
            BehaviorState::Attempt => "Attempt",
            BehaviorState::Finish => "Finish",
            BehaviorState::Abort => "Abort",
        }
    }
}

impl fmt::Display for BehaviorState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

impl FromStr for BehaviorState {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        BehaviorState::ALL
            .into_iter()
            .find(|b| b.word().eq_ignore_ascii_case(s.trim()))
            .ok_or(())
    }
}

/// Allowed behavior transitions for the lane-change task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMachineGraph {
    edges: BTreeSet<(BehaviorState, BehaviorState)>,
}

impl StateMachineGraph {
    pub fn lane_change() -> Self {
        use BehaviorState::*;
        let edges = [
            (Stay, Stay),
            (Stay, Attempt),
            (Attempt, Attempt),
            (Attempt, Finish),
            (Attempt, Abort),
            (Abort, Stay),
            (Finish, Finish),
        ];
        Self {
            edges: edges.into_iter().collect(),
        }
    }

    pub fn allows(&self, from: BehaviorState, to: BehaviorState) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Edges in a stable order.
    pub fn edges(&self) -> impl Iterator<Item = (BehaviorState, BehaviorState)> + '_ {
        self.edges.iter().copied()
    }

    pub fn successors(&self, from: BehaviorState) -> Vec<BehaviorState> {
        self.edges
            .iter()
            .filter(|(a, _)| *a == from)
            .map(|(_, b)| *b)
            .collect()
    }
}

impl Default for StateMachineGraph {
    fn default() -> Self {
        Self::lane_change()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use BehaviorState::*;

    #[test]
    fn exactly_seven_edges() {
        let g = StateMachineGraph::lane_change();
        assert_eq!(g.edges().count(), 7);
        assert!(g.allows(Stay, Stay));
        assert!(!g.allows(Stay, Finish));
        assert!(!g.allows(Finish, Stay));
        assert!(!g.allows(Abort, Abort));
        assert_eq!(g.successors(Attempt), vec![Attempt, Finish, Abort]);
    }

    #[test]
    fn parses_words() {
        assert_eq!("finish".parse::<BehaviorState>(), Ok(Finish));
        assert_eq!(" ABORT ".parse::<BehaviorState>(), Ok(Abort));
        assert!("Go".parse::<BehaviorState>().is_err());
    }
}
