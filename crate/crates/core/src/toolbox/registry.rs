use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    UserProfileSearch,
    UserHistorySearch,
    ItemInfoSearch,
    SimilarUsersSearch,
    KnowledgeGraphSearch,
}

impl ToolName {
    pub const ALL: [ToolName; 5] = [
        ToolName::UserProfileSearch,
        ToolName::UserHistorySearch,
        ToolName::ItemInfoSearch,
        ToolName::SimilarUsersSearch,
        ToolName::KnowledgeGraphSearch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::UserProfileSearch => "user_profile_search",
            ToolName::UserHistorySearch => "user_history_search",
            ToolName::ItemInfoSearch => "item_info_search",
            ToolName::SimilarUsersSearch => "similar_users_search",
            ToolName::KnowledgeGraphSearch => "knowledge_graph_search",
        }
    }

    /// Short label for usage tables.
    pub fn short_label(self) -> &'static str {
        match self {
            ToolName::UserProfileSearch => "Profile Tool",
            ToolName::UserHistorySearch => "History Tool",
            ToolName::SimilarUsersSearch => "SimU Tool",
            ToolName::ItemInfoSearch => "Item Tool",
            ToolName::KnowledgeGraphSearch => "KG Tool",
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        ToolName::ALL.into_iter().find(|t| t.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    /// User or item identifier: a string or a non-negative integer.
    Identifier,
    Integer { min: u64, max: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub required: bool,
    pub description: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolSpec {
    pub name: ToolName,
    pub description: &'static str,
    pub params: Vec<ParamSpec>,
}

const USER_ARG: ParamSpec = ParamSpec {
    name: "user_id",
    kind: ParamKind::Identifier,
    required: false,
    description: "Target user. Defaults to the user of the current task; required outside a task.",
};

impl ToolSpec {
    pub fn for_tool(name: ToolName) -> ToolSpec {
        let (description, params) = match name {
            ToolName::UserProfileSearch => (
                "Returns the user's profile: demographics when available and a summary of long-term preferences.",
                vec![USER_ARG],
            ),
            ToolName::UserHistorySearch => (
                "Returns one page of the user's interaction history, most recent page first, with title, \
                 category and rating per item. Page m=1 holds the k most recent items; m=2 the k before those, \
                 and so on. The `exhausted` flag tells whether the start of the history has been reached.",
                vec![
                    USER_ARG,
                    ParamSpec {
                        name: "m",
                        kind: ParamKind::Integer { min: 1, max: 10_000 },
                        required: false,
                        description: "Page index, starting at 1 (default 1).",
                    },
                    ParamSpec {
                        name: "k",
                        kind: ParamKind::Integer { min: 1, max: 50 },
                        required: false,
                        description: "Page size (default from configuration).",
                    },
                ],
            ),
            ToolName::ItemInfoSearch => (
                "Returns the attributes of an item (title, category, brand, price, description or genre, year) \
                 and its most related items with the relations connecting them.",
                vec![
                    ParamSpec {
                        name: "item_id",
                        kind: ParamKind::Identifier,
                        required: true,
                        description: "Item to describe; a candidate or a history item.",
                    },
                    ParamSpec {
                        name: "top_k",
                        kind: ParamKind::Integer { min: 1, max: 50 },
                        required: false,
                        description: "Number of related items (default from configuration).",
                    },
                ],
            ),
            ToolName::SimilarUsersSearch => (
                "Returns the users most similar to the target user, blending shared interactions with profile \
                 similarity, together with their profiles.",
                vec![
                    USER_ARG,
                    ParamSpec {
                        name: "k",
                        kind: ParamKind::Integer { min: 1, max: 50 },
                        required: false,
                        description: "Number of similar users (default from configuration).",
                    },
                ],
            ),
            ToolName::KnowledgeGraphSearch => (
                "Returns collaborative evidence from multi-hop paths in the user-item graph (shared purchases, \
                 shared demographics, items bought together) with explanations and the profiles of the users reached.",
                vec![
                    USER_ARG,
                    ParamSpec {
                        name: "k1",
                        kind: ParamKind::Integer { min: 0, max: 20 },
                        required: false,
                        description: "Two-hop paths to sample (default from configuration); must be below k2.",
                    },
                    ParamSpec {
                        name: "k2",
                        kind: ParamKind::Integer { min: 1, max: 20 },
                        required: false,
                        description: "Three-hop paths to sample (default from configuration).",
                    },
                    ParamSpec {
                        name: "seed",
                        kind: ParamKind::Integer { min: 0, max: u64::MAX },
                        required: false,
                        description: "Sampling seed (defaults to the task seed, or 0).",
                    },
                ],
            ),
        };
        ToolSpec {
            name,
            description,
            params,
        }
    }

    /// JSON-schema style description of the arguments object.
    pub fn parameters_schema(&self) -> Value {
        let mut props = Map::new();
        for p in &self.params {
            let schema = match p.kind {
                ParamKind::Identifier => json!({
                    "type": ["string", "integer"],
                    "description": p.description,
                }),
                ParamKind::Integer { min, max } => json!({
                    "type": "integer",
                    "minimum": min,
                    "maximum": max,
                    "description": p.description,
                }),
            };
            props.insert(p.name.to_owned(), schema);
        }
        let required: Vec<&str> = self.params.iter().filter(|p| p.required).map(|p| p.name).collect();
        json!({
            "type": "object",
            "properties": props,
            "required": required,
            "additionalProperties": false,
        })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "name": self.name.as_str(),
            "description": self.description,
            "parameters": self.parameters_schema(),
        })
    }

    /// Checks an arguments value against this spec. Returns a message the
    /// policy can act on when invalid.
    pub fn validate(&self, obj: &Map<String, Value>) -> Result<(), String> {
        for key in obj.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                let allowed: Vec<&str> = self.params.iter().map(|p| p.name).collect();
                return Err(format!(
                    "unexpected argument '{key}' for {}; allowed arguments: {}",
                    self.name,
                    allowed.join(", ")
                ));
            }
        }
        for p in &self.params {
            match obj.get(p.name) {
                None if p.required => {
                    return Err(format!("missing required argument '{}' for {}", p.name, self.name))
                }
                None => {}
                Some(v) => check_kind(p, v).map_err(|why| format!("{} {why} (argument of {})", p.name, self.name))?,
            }
        }
        Ok(())
    }
}

fn check_kind(p: &ParamSpec, v: &Value) -> Result<(), String> {
    match p.kind {
        ParamKind::Identifier => match v {
            Value::String(s) if crate::ids::is_identifier(s.trim()) => Ok(()),
            Value::Number(n) if n.as_u64().is_some() => Ok(()),
            _ => Err("must be an identifier (string or non-negative integer)".into()),
        },
        ParamKind::Integer { min, max } => match v.as_u64() {
            Some(n) if n < min => Err(format!("must be ≥ {min}")),
            Some(n) if n > max => Err(format!("must be ≤ {max}")),
            Some(_) => Ok(()),
            None => Err(format!("must be an integer between {min} and {max}")),
        },
    }
}

/// The tools a toolbox exposes, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        ToolRegistry::with_tools(&ToolName::ALL)
    }
}

impl ToolRegistry {
    pub fn with_tools(tools: &[ToolName]) -> Self {
        let mut names = tools.to_vec();
        names.sort();
        names.dedup();
        ToolRegistry {
            specs: names.into_iter().map(ToolSpec::for_tool).collect(),
        }
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.specs.iter().find(|s| s.name.as_str() == name)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    /// Machine-readable schema document shared by prompts and the gateway.
    pub fn schema_document(&self) -> Value {
        json!({
            "version": 1,
            "tools": self.specs.iter().map(ToolSpec::to_json).collect::<Vec<_>>(),
        })
    }
}
