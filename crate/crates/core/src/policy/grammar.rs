//! The per-turn output grammar.
//!
//! ```text
//! <think>free text</think>
//! <tool_call>{"name": "...", "arguments": {...}}</tool_call>
//! ```
//! or
//! ```text
//! <think>free text</think>
//! <answer>[id, id, ..., id]</answer>
//! ```
//! Only whitespace may surround the two blocks.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ids::{is_identifier, ItemId};
use crate::toolbox::ToolCall;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const TOOL_OPEN: &str = "<tool_call>";
pub const TOOL_CLOSE: &str = "</tool_call>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

const TAGS: [&str; 6] = [THINK_OPEN, THINK_CLOSE, TOOL_OPEN, TOOL_CLOSE, ANSWER_OPEN, ANSWER_CLOSE];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FinalRanking(pub Vec<ItemId>);

impl FinalRanking {
    /// 1-based rank of `item`, if present.
    pub fn rank_of(&self, item: &ItemId) -> Option<usize> {
        self.0.iter().position(|i| i == item).map(|p| p + 1)
    }

    /// True when the ranking lists every candidate exactly once.
    pub fn is_permutation_of(&self, candidates: &[ItemId]) -> bool {
        let mut a: Vec<&ItemId> = self.0.iter().collect();
        let mut b: Vec<&ItemId> = candidates.iter().collect();
        a.sort();
        b.sort();
        a == b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    ToolCall(ToolCall),
    Rank { ranking: FinalRanking },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedStep {
    pub reasoning: String,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    MissingThink,
    MultipleThink,
    NoAction,
    MultipleActions,
    Unclosed(&'static str),
    StrayText(String),
    MalformedToolCall(String),
    BadAnswer(String),
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::MissingThink => write!(f, "missing {THINK_OPEN}...{THINK_CLOSE} block at the start"),
            ParseError::MultipleThink => write!(f, "more than one {THINK_OPEN} block"),
            ParseError::NoAction => write!(f, "no {TOOL_OPEN} or {ANSWER_OPEN} block after the reasoning"),
            ParseError::MultipleActions => write!(f, "more than one action block; emit exactly one per turn"),
            ParseError::Unclosed(tag) => write!(f, "unclosed {tag} block"),
            ParseError::StrayText(t) => write!(f, "unexpected text outside the blocks: {t:?}"),
            ParseError::MalformedToolCall(why) => write!(f, "malformed tool call: {why}"),
            ParseError::BadAnswer(why) => write!(f, "malformed answer: {why}"),
        }
    }
}

impl std::error::Error for ParseError {}

fn count(text: &str, tag: &str) -> usize {
    text.matches(tag).count()
}

/// Splits `<open>body</close>` off the start of `text` (after whitespace).
fn take_block<'a>(text: &'a str, open: &'static str, close: &'static str) -> Result<Option<(&'a str, &'a str)>, ParseError> {
    let t = text.trim_start();
    let Some(rest) = t.strip_prefix(open) else {
        return Ok(None);
    };
    let end = rest.find(close).ok_or(ParseError::Unclosed(open))?;
    Ok(Some((&rest[..end], &rest[end + close.len()..])))
}

pub fn parse_step(text: &str) -> Result<ParsedStep, ParseError> {
    match count(text, THINK_OPEN) {
        0 => return Err(ParseError::MissingThink),
        1 => {}
        _ => return Err(ParseError::MultipleThink),
    }
    let n_actions = count(text, TOOL_OPEN) + count(text, ANSWER_OPEN);
    if n_actions > 1 {
        return Err(ParseError::MultipleActions);
    }
    let (reasoning, rest) = take_block(text, THINK_OPEN, THINK_CLOSE)?.ok_or(ParseError::MissingThink)?;
    if n_actions == 0 {
        return Err(ParseError::NoAction);
    }
    let (action, tail) = if let Some((body, tail)) = take_block(rest, TOOL_OPEN, TOOL_CLOSE)? {
        (Action::ToolCall(parse_tool_call(body)?), tail)
    } else if let Some((body, tail)) = take_block(rest, ANSWER_OPEN, ANSWER_CLOSE)? {
        (
            Action::Rank {
                ranking: parse_answer(body)?,
            },
            tail,
        )
    } else {
        let stray: String = rest.trim().chars().take(40).collect();
        return Err(ParseError::StrayText(stray));
    };
    if !tail.trim().is_empty() {
        return Err(ParseError::StrayText(tail.trim().chars().take(40).collect()));
    }
    Ok(ParsedStep {
        reasoning: reasoning.to_owned(),
        action,
    })
}

fn parse_tool_call(body: &str) -> Result<ToolCall, ParseError> {
    let v: Value = serde_json::from_str(body.trim()).map_err(|e| ParseError::MalformedToolCall(e.to_string()))?;
    let Value::Object(mut obj) = v else {
        return Err(ParseError::MalformedToolCall("body must be a JSON object".into()));
    };
    let name = match obj.remove("name") {
        Some(Value::String(s)) if !s.trim().is_empty() => s,
        _ => return Err(ParseError::MalformedToolCall("\"name\" must be a non-empty string".into())),
    };
    let arguments = match obj.remove("arguments") {
        None => Map::new(),
        Some(Value::Object(m)) => m,
        Some(_) => return Err(ParseError::MalformedToolCall("\"arguments\" must be an object".into())),
    };
    if let Some(extra) = obj.keys().next() {
        return Err(ParseError::MalformedToolCall(format!("unexpected key {extra:?}")));
    }
    Ok(ToolCall { name, arguments })
}

fn parse_answer(body: &str) -> Result<FinalRanking, ParseError> {
    let inner = body
        .trim()
        .strip_prefix('[')
        .and_then(|b| b.strip_suffix(']'))
        .ok_or_else(|| ParseError::BadAnswer("expected a bracketed list [id, ..., id]".into()))?;
    if inner.trim().is_empty() {
        return Err(ParseError::BadAnswer("empty list".into()));
    }
    inner
        .split(',')
        .map(|raw| {
            let tok = raw.trim();
            let tok = tok
                .strip_prefix('"')
                .and_then(|t| t.strip_suffix('"'))
                .unwrap_or(tok);
            let tok = tok.strip_prefix("item:").unwrap_or(tok);
            if is_identifier(tok) {
                Ok(ItemId::new(tok))
            } else {
                Err(ParseError::BadAnswer(format!("{raw:?} is not an item identifier")))
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map(FinalRanking)
}

/// Canonical text for a step. Reasoning containing grammar tags cannot be
/// rendered faithfully and is rejected.
pub fn render_step(step: &ParsedStep) -> Result<String, ParseError> {
    if let Some(tag) = TAGS.iter().find(|t| step.reasoning.contains(*t)) {
        return Err(ParseError::StrayText(format!("reasoning contains {tag}")));
    }
    let action = match &step.action {
        Action::ToolCall(call) => {
            let body = serde_json::json!({"name": call.name, "arguments": call.arguments});
            format!("{TOOL_OPEN}{body}{TOOL_CLOSE}")
        }
        Action::Rank { ranking } => {
            let ids: Vec<&str> = ranking.0.iter().map(ItemId::as_str).collect();
            format!("{ANSWER_OPEN}[{}]{ANSWER_CLOSE}", ids.join(", "))
        }
    };
    Ok(format!("{THINK_OPEN}{}{THINK_CLOSE}\n{action}", step.reasoning))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_call_instance() {
        let s = parse_step(
            "<think>need history</think><tool_call>{\"name\":\"user_history_search\",\"arguments\":{\"m\":1}}</tool_call>",
        )
        .unwrap();
        assert_eq!(s.reasoning, "need history");
        match s.action {
            Action::ToolCall(c) => {
                assert_eq!(c.name, "user_history_search");
                assert_eq!(c.arguments["m"], 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn answer_instance() {
        let s = parse_step("<think>done</think><answer>[3,1,2,\"item:B0\", x-7]</answer>").unwrap();
        let Action::Rank { ranking } = s.action else { panic!() };
        let ids: Vec<&str> = ranking.0.iter().map(ItemId::as_str).collect();
        assert_eq!(ids, ["3", "1", "2", "B0", "x-7"]);
        assert_eq!(ranking.rank_of(&"2".into()), Some(3));
    }

    #[test]
    fn rejects_malformed_turns() {
        let call = "<tool_call>{\"name\":\"a\"}</tool_call>";
        assert_eq!(parse_step(call), Err(ParseError::MissingThink));
        assert_eq!(parse_step(&format!("<think>x</think>{call}{call}")), Err(ParseError::MultipleActions));
        assert_eq!(
            parse_step("<think>x</think><answer>[1]</answer><tool_call>{}</tool_call>"),
            Err(ParseError::MultipleActions)
        );
        assert_eq!(parse_step("<think>x</think>"), Err(ParseError::NoAction));
        assert_eq!(parse_step("<think>a</think><think>b</think><answer>[1]</answer>"), Err(ParseError::MultipleThink));
        assert!(matches!(parse_step("<think>x</think><tool_call>{name: 1}</tool_call>"), Err(ParseError::MalformedToolCall(_))));
        assert!(matches!(
            parse_step("<think>x</think><tool_call>{\"name\":\"a\",\"arguments\":[1]}</tool_call>"),
            Err(ParseError::MalformedToolCall(_))
        ));
        assert!(matches!(parse_step("<think>x</think><answer>[1, two words]</answer>"), Err(ParseError::BadAnswer(_))));
        assert!(matches!(parse_step("<think>x</think><answer>1, 2</answer>"), Err(ParseError::BadAnswer(_))));
        assert!(matches!(parse_step("<think>x</think><answer>[1]</answer> thanks!"), Err(ParseError::StrayText(_))));
        assert!(matches!(parse_step("hello <think>x</think><answer>[1]</answer>"), Err(ParseError::MissingThink)));
        assert_eq!(parse_step("<think>x<answer>[1]</answer>"), Err(ParseError::Unclosed(THINK_OPEN)));
        assert!(parse_step("gibberish").is_err());
    }

    #[test]
    fn whitespace_around_blocks_is_fine() {
        assert!(parse_step("  <think>x</think>\n\n<answer>[ 1 , 2 ]</answer>\n").is_ok());
    }

    #[test]
    fn render_round_trips() {
        let step = ParsedStep {
            reasoning: "compare genres".into(),
            action: Action::ToolCall(ToolCall::new("item_info_search", serde_json::json!({"item_id": "B1", "top_k": 3}))),
        };
        assert_eq!(parse_step(&render_step(&step).unwrap()).unwrap(), step);
        let bad = ParsedStep {
            reasoning: "<answer>".into(),
            ..step
        };
        assert!(render_step(&bad).is_err());
    }

    #[test]
    fn permutation_check() {
        let c: Vec<ItemId> = ["a", "b", "c"].map(ItemId::from).to_vec();
        assert!(FinalRanking(vec!["c".into(), "a".into(), "b".into()]).is_permutation_of(&c));
        assert!(!FinalRanking(vec!["c".into(), "a".into()]).is_permutation_of(&c));
        assert!(!FinalRanking(vec!["c".into(), "a".into(), "a".into()]).is_permutation_of(&c));
        assert!(!FinalRanking(vec!["c".into(), "a".into(), "z".into()]).is_permutation_of(&c));
    }
}
