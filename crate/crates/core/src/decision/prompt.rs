use serde::{Deserialize, Serialize};

use super::DecisionCase;
use crate::behavior::StateMachineGraph;
use crate::prediction::{classify_intention, TtcRelation, TtcSample};

/// Bumped whenever a template below changes.
pub const PROMPT_VERSION: u32 = 1;

const CASE1: &str = include_str!("../../prompts/case1_system_v1.txt");
const CASE2: &str = include_str!("../../prompts/case2_system_v1.txt");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub ttc_threshold: f64,
    pub aggressive_ttc: f64,
    pub dwell_required: u32,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            ttc_threshold: 3.0,
            aggressive_ttc: 6.0,
            dwell_required: 2,
        }
    }
}

/// TTC histories shown as labeled examples; labels come from the classifier.
const DEMOS: [[f64; 3]; 3] = [
    [9.0, 7.2, 5.1],
    [6.5, 7.8, 9.4],
    [f64::INFINITY, f64::INFINITY, f64::INFINITY],
];

fn demos(threshold: f64) -> String {
    DEMOS
        .iter()
        .map(|hist| {
            let samples: Vec<TtcSample> = hist
                .iter()
                .enumerate()
                .map(|(i, &ttc)| TtcSample {
                    step_index: i as u64,
                    agent_id: 0,
                    ttc,
                    relation: TtcRelation::FollowerTargetLane,
                })
                .collect();
            let label = classify_intention(&samples, threshold).expect("three samples");
            let shown: Vec<String> = hist
                .iter()
                .map(|t| {
                    if t.is_finite() {
                        format!("{t:.1}")
                    } else {
                        "inf".into()
                    }
                })
                .collect();
            format!("- TTC history [{}] s -> {}", shown.join(", "), label.word())
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// System prompt for the given protocol. A pure function of its inputs.
pub fn build_system_prompt(
    case: DecisionCase,
    graph: &StateMachineGraph,
    cfg: &PromptConfig,
) -> String {
    match case {
        DecisionCase::Case1 => CASE1.to_string(),
        DecisionCase::Case2 => {
            let edges: Vec<String> = graph
                .edges()
                .map(|(a, b)| format!("- {a} -> {b}"))
                .collect();
            CASE2
                .replace("{EDGES}", &edges.join("\n"))
                .replace("{THETA_TTC}", &format!("{:.1}", cfg.ttc_threshold))
                .replace("{THETA_AGGR}", &format!("{:.1}", cfg.aggressive_ttc))
                .replace("{DWELL}", &cfg.dwell_required.to_string())
                .replace("{DEMOS}", &demos(cfg.aggressive_ttc))
        }
    }
}

/// Message sent back when a reply had no usable decision line.
pub fn format_reminder(case: DecisionCase, problem: &str) -> String {
    let options = match case {
        DecisionCase::Case1 => "Left Lane, Middle Lane or Right Lane",
        DecisionCase::Case2 => "Stay, Attempt, Finish or Abort",
    };
    format!("Your reply could not be used ({problem}). End your reply with exactly one line `DECISION: <option>` where <option> is {options}.")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case1_lists_all_lanes() {
        let p = build_system_prompt(
            DecisionCase::Case1,
            &StateMachineGraph::default(),
            &PromptConfig::default(),
        );
        for token in ["Middle Lane", "Left Lane", "Right Lane", "DECISION:"] {
            assert!(p.contains(token));
        }
    }

    #[test]
    fn case2_lists_exactly_the_edges() {
        let p = build_system_prompt(
            DecisionCase::Case2,
            &StateMachineGraph::default(),
            &PromptConfig::default(),
        );
        let edge_lines: Vec<&str> = p
            .lines()
            .filter(|l| l.starts_with("- ") && l.contains(" -> ") && !l.contains("TTC"))
            .collect();
        assert_eq!(edge_lines.len(), 7);
        assert!(p.contains("- Attempt -> Finish"));
        assert!(!p.contains('{'));
        let demo_lines = p.lines().filter(|l| l.starts_with("- TTC history")).count();
        assert_eq!(demo_lines, 3);
        assert!(p.contains("[9.0, 7.2, 5.1] s -> aggressive"));
        assert!(p.contains("[inf, inf, inf] s -> cooperative"));
    }

    #[test]
    fn prompts_are_stable() {
        let g = StateMachineGraph::default();
        let c = PromptConfig::default();
        assert_eq!(
            build_system_prompt(DecisionCase::Case2, &g, &c),
            build_system_prompt(DecisionCase::Case2, &g, &c)
        );
    }
}
