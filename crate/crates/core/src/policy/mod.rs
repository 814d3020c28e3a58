//! The decision-maker behind a chat-completion interface.

pub mod grammar;
pub mod prompt;
pub mod remote;
pub mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::agent::{Outcome, Trajectory};
use crate::ids::{ItemId, UserId};

pub use grammar::{parse_step, render_step, Action, FinalRanking, ParseError, ParsedStep};
pub use prompt::{estimate_tokens, render_prompt, system_prompt, tool_message, user_prompt, TRUNCATED};
pub use remote::{ChatPolicy, ChatPolicyConfig};
pub use scripted::{FnPolicy, MixturePolicy, OraclePolicy, RandomPolicy, RecordingPolicy, ReplayPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

/// True when the sequence is system, user, then assistant turns each
/// optionally followed by one tool message.
pub fn roles_are_legal(messages: &[Message]) -> bool {
    let mut roles = messages.iter().map(|m| m.role);
    if roles.next() != Some(Role::System) || roles.next() != Some(Role::User) {
        return false;
    }
    let mut prev = Role::User;
    for r in roles {
        let ok = match r {
            Role::Assistant => prev != Role::Assistant,
            Role::Tool => prev == Role::Assistant,
            Role::System | Role::User => false,
        };
        if !ok {
            return false;
        }
        prev = r;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.0,
            top_p: 0.95,
            max_tokens: 1024,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> crate::Result<()> {
        let bad_top_p = self.top_p.is_nan() || self.top_p <= 0.0 || self.top_p > 1.0;
        if self.temperature.is_nan() || self.temperature < 0.0 || bad_top_p || self.max_tokens == 0 {
            return Err(crate::Error::Config(format!(
                "invalid sampling params: temperature {} (>= 0), top_p {} (in (0, 1]), max_tokens {} (>= 1)",
                self.temperature, self.top_p, self.max_tokens
            )));
        }
        Ok(())
    }
}

/// Episode facts scripted policies key on. Remote policies ignore it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMeta {
    pub case_id: String,
    pub user: UserId,
    pub candidates: Vec<ItemId>,
    pub repeat: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub messages: &'a [Message],
    pub params: SamplingParams,
    pub seed: u64,
    pub meta: &'a EpisodeMeta,
}

impl CompletionRequest<'_> {
    /// Index of the turn being requested, counting from 0.
    pub fn turn(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyError {
    Unavailable(String),
    ContextLength(String),
    Other(String),
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::Unavailable(why) => write!(f, "policy unavailable: {why}"),
            PolicyError::ContextLength(why) => write!(f, "context length exceeded: {why}"),
            PolicyError::Other(why) => write!(f, "policy error: {why}"),
        }
    }
}

impl std::error::Error for PolicyError {}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn name(&self) -> String {
        (**self).name()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        (**self).complete(req)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> String {
        (**self).name()
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<String, PolicyError> {
        (**self).complete(req)
    }
}

/// Format indicator: every turn parsed, the episode ended on a ranking that
/// is a permutation of the candidates, and it stayed within `max_turns`.
pub fn validate_format(traj: &Trajectory, max_turns: usize) -> bool {
    if traj.outcome != Outcome::Ranked || traj.rejected_turn.is_some() || traj.steps.len() > max_turns {
        return false;
    }
    let Some((last, body)) = traj.steps.split_last() else {
        return false;
    };
    let ranking_ok = matches!(&last.action, Action::Rank { ranking } if ranking.is_permutation_of(&traj.candidates));
    ranking_ok && body.iter().all(|s| matches!(s.action, Action::ToolCall(_)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_defaults() {
        let p = SamplingParams::default();
        assert_eq!((p.temperature, p.top_p), (1.0, 0.95));
        p.validate().unwrap();
        assert!(SamplingParams { top_p: 0.0, ..p }.validate().is_err());
        assert!(SamplingParams { temperature: -0.1, ..p }.validate().is_err());
        assert!(SamplingParams { temperature: f64::NAN, ..p }.validate().is_err());
    }

    #[test]
    fn role_order() {
        let m = |r| Message::new(r, "");
        use Role::*;
        assert!(roles_are_legal(&[m(System), m(User)]));
        assert!(roles_are_legal(&[m(System), m(User), m(Assistant), m(Tool), m(Assistant)]));
        assert!(!roles_are_legal(&[m(System), m(User), m(Tool)]));
        assert!(!roles_are_legal(&[m(System), m(User), m(Assistant), m(Tool), m(Tool)]));
        assert!(!roles_are_legal(&[m(User), m(System)]));
    }
}
