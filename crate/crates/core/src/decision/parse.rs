use thiserror::Error;

use super::{Choice, Decision, DecisionCase};
use crate::behavior::BehaviorState;
use crate::world::LaneId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no line of the form `DECISION: <option>`")]
    NoDecisionLine,
    #[error("{0} decision lines; exactly one is allowed")]
    MultipleDecisionLines(usize),
    #[error("unknown option `{0}`")]
    UnknownToken(String),
}

const KEYWORD: &str = "decision:";

/// Extracts the single `DECISION: <token>` line from a reply.
///
/// Matching is case-insensitive and tolerates surrounding whitespace and
/// markdown emphasis around the keyword. Text before the line becomes the
/// rationale.
pub fn parse_decision(raw: &str, case: DecisionCase) -> Result<Decision, ParseError> {
    let mut hits = Vec::new();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let body = line
            .trim()
            .trim_start_matches(['*', '_', '#', '>', '-', ' ']);
        if body.len() >= KEYWORD.len()
            && body.is_char_boundary(KEYWORD.len())
            && body[..KEYWORD.len()].eq_ignore_ascii_case(KEYWORD)
        {
            hits.push((offset, body[KEYWORD.len()..].to_string()));
        }
        offset += line.len();
    }
    let (start, rest) = match hits.len() {
        0 => return Err(ParseError::NoDecisionLine),
        1 => hits.pop().expect("one hit"),
        n => return Err(ParseError::MultipleDecisionLines(n)),
    };
    let token = rest
        .trim()
        .trim_matches(|c: char| c == '*' || c == '_' || c == '`' || c == '.' || c.is_whitespace());
    let choice = match case {
        DecisionCase::Case1 => LaneId::ALL
            .into_iter()
            .find(|l| l.label().eq_ignore_ascii_case(token))
            .map(Choice::Lane),
        DecisionCase::Case2 => token.parse::<BehaviorState>().ok().map(Choice::State),
    }
    .ok_or_else(|| ParseError::UnknownToken(token.to_string()))?;
    Ok(Decision {
        choice,
        rationale: raw[..start].trim().to_string(),
    })
}
