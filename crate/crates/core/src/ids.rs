use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! string_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Self {
                $name(raw.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            /// The labeled form used inside tool payloads and prompts, e.g. `item:1193`.
            pub fn tagged(&self) -> String {
                format!(concat!($prefix, ":{}"), self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, ":{}"), self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                $name(s)
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(UserId, "user");
string_id!(ItemId, "item");

/// Characters allowed in a bare identifier (answer lists, tool arguments).
pub fn is_identifier(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// True when `text` contains the tagged reference to `item` as a whole token.
///
/// Tool payloads tag every item reference (`item:<id>`), so a scan for the
/// tagged form cannot be fooled by ratings or positions that happen to share
/// digits with a numeric identifier.
pub fn mentions_item(text: &str, item: &ItemId) -> bool {
    let is_id_char = |c: char| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.');
    text.match_indices("item:").any(|(pos, tag)| {
        let rest = &text[pos + tag.len()..];
        let end = rest.find(|c: char| !is_id_char(c)).unwrap_or(rest.len());
        // A sentence-final period is punctuation, not part of the identifier.
        rest[..end].trim_end_matches('.') == item.as_str() || &rest[..end] == item.as_str()
    })
}
