use crate::agent::Step;
use crate::corpus::ItemCatalog;
use crate::ids::{ItemId, UserId};
use crate::toolbox::{Observation, ToolRegistry};

use super::{Message, Role};

pub const TRUNCATED: &str = "[truncated]";

const INSTRUCTIONS: &str = "You are a recommendation agent. Rank the candidate items for the target user \
from most to least likely to be the next item the user will like.

Work in turns. In each turn, first assess whether the information gathered so far is sufficient to rank \
the candidates confidently. If it is not, identify what is missing and call exactly one tool to obtain it; \
the tool result will be returned in the next message. Once the information is sufficient, give the final ranking.

Every reply must follow this format exactly:

<think>your analysis of what is known, what is missing, and what to do next</think>
followed by exactly one of
<tool_call>{\"name\": \"<tool name>\", \"arguments\": {<arguments>}}</tool_call>
<answer>[id, id, id, id, id, id, id, id, id, id]</answer>

Rules:
- Nothing may appear outside the two blocks.
- The answer must list every candidate identifier exactly once, best first, without the item: prefix.
- Arguments follow the schemas below; user_id defaults to the target user.
- Item references in tool results are written item:<id>.";

pub fn system_prompt(registry: &ToolRegistry, max_turns: usize) -> String {
    let tools = serde_json::to_string_pretty(&registry.schema_document()["tools"]).expect("schema serializes");
    format!("{INSTRUCTIONS}\n- You have at most {max_turns} turns in total.\n\nAvailable tools:\n{tools}")
}

pub fn user_prompt(user: &UserId, candidates: &[ItemId], catalog: &ItemCatalog) -> String {
    let mut out = format!(
        "Target user: {}\nCandidate items ({}):\n",
        user.tagged(),
        candidates.len()
    );
    for c in candidates {
        let (title, cat) = catalog
            .get(c)
            .map(|m| (m.title.as_str(), m.primary_category()))
            .unwrap_or(("(unknown title)", "unknown"));
        out.push_str(&format!("- {} | {title} | {cat}\n", c.tagged()));
    }
    out.push_str("Rank all candidates.");
    out
}

pub fn tool_message(obs: &Observation) -> String {
    format!("<observation>\n{}\n</observation>", obs.payload)
}

/// Rough token count: four characters per token.
pub fn estimate_tokens(messages: &[Message]) -> usize {
    messages.iter().map(|m| m.content.chars().count().div_ceil(4)).sum()
}

/// Messages for the next turn: system, user, then each prior step as an
/// assistant message plus its tool message. When over `max_prompt_tokens`,
/// the oldest tool messages are replaced by [`TRUNCATED`]; the system and
/// user messages are never cut.
pub fn render_prompt(
    system: &str,
    user: &str,
    steps: &[Step],
    max_prompt_tokens: Option<usize>,
) -> Vec<Message> {
    let mut messages = vec![Message::new(Role::System, system), Message::new(Role::User, user)];
    for s in steps {
        messages.push(Message::new(Role::Assistant, s.raw.clone()));
        if let Some(obs) = &s.observation {
            messages.push(Message::new(Role::Tool, tool_message(obs)));
        }
    }
    if let Some(budget) = max_prompt_tokens {
        let mut total = estimate_tokens(&messages);
        for m in messages.iter_mut().filter(|m| m.role == Role::Tool) {
            if total <= budget {
                break;
            }
            let before = m.content.chars().count().div_ceil(4);
            m.content = TRUNCATED.to_owned();
            total = total - before + TRUNCATED.len().div_ceil(4);
        }
    }
    messages
}
