//! Prints the lane-change system prompt and parses a few model replies,
//! including malformed ones.

use safedrive::behavior::StateMachineGraph;
use safedrive::decision::{build_system_prompt, parse_decision, DecisionCase, PromptConfig};

fn main() {
    let prompt = build_system_prompt(
        DecisionCase::Case2,
        &StateMachineGraph::lane_change(),
        &PromptConfig::default(),
    );
    println!("{prompt}\n");
    let replies = [
        "The follower is yielding.\nDECISION: Finish",
        "decision: attempt",
        "DECISION: Stay\nDECISION: Abort",
        "I would rather not say.",
    ];
    for reply in replies {
        match parse_decision(reply, DecisionCase::Case2) {
            Ok(d) => println!("{reply:?} -> {}", d.choice),
            Err(e) => println!("{reply:?} -> rejected: {e}"),
        }
    }
}
