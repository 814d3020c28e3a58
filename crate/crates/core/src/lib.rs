//! Tool-augmented agentic recommendation harness.
//!
//! A policy (a remote chat model or a scripted stand-in) ranks a ten-item
//! candidate set for a user by iterating think/act turns against five
//! recommendation tools. Around that loop the crate provides dataset
//! ingestion and leave-one-out splits, the item-relation and user-item
//! knowledge graphs, hybrid user similarity, trajectory filtering and SFT
//! export, composite rewards with GRPO group math, NDCG evaluation, and an
//! HTTP gateway that serves the tools to external processes.
//!
//! The runnable programs under `examples/` walk through each capability.

pub mod agent;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gateway;
pub mod graphs;
pub mod ids;
pub mod jsonl;
pub mod learning;
pub mod pipeline;
pub mod policy;
pub mod retrieval;
pub mod retry;
pub mod seed;
pub mod synthetic;
pub mod toolbox;

pub use error::{Error, Result};
pub use ids::{ItemId, UserId};
