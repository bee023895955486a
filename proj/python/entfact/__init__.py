"""Python bindings for the entfact C++ core."""

from ._entfact import (
    Document,
    EntityMention,
    EntityType,
    Error,
    FactualGraph,
    Gazetteer,
    KnowledgeBase,
    Label,
    Triple,
    annotate_entities,
    apply_replacement,
    bootstrap_significance,
    build_cooccurrence_graph,
    build_dataset,
    build_factual_graph,
    detection_accuracy,
    entity_metrics,
    gcn_forward,
    load_documents,
    make_synthetic_corpus,
    parse_triples,
    read_documents,
    run_cli,
)

__all__ = [name for name in dir() if not name.startswith("_")]
