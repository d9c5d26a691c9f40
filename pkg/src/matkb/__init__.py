"""Literature-derived 2D-materials knowledge base toolkit.

Extraction-quality scoring, text ingestion, schema-constrained LLM
extraction, a relational store, and a guarded natural-language query
pipeline with query-focused learning.
"""

__version__ = "0.1.0"
