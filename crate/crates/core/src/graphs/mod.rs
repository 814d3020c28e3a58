//! Item–item relation graph and user–item knowledge graph.

mod knowledge;
mod relation;
pub mod snapshot;

pub use knowledge::{
    build_knowledge_graph, enumerate_paths, sample_kg_evidence, EdgeKind, KgEvidence, KgNode, KgPath,
    KnowledgeGraph, MAX_PATHS_PER_HOP_CLASS,
};
pub use relation::{
    build_item_relation_graph, relation_weight, GraphBuildReport, ItemRelationGraph, RelatedItem,
    RelationSet, RelationType, CO_VIEW_WINDOW,
};
