"""docrag: layout-aware document parsing and retrieval.

Pages are segmented into components, tables are extracted into row/column/
value cell triples by a vision model, regions are reformulated into
natural-language rationales, and a cosine vector store answers queries over
them. Includes the QA evaluation harness (accuracy, L3Score, MRR@10).
"""

__version__ = "0.1.0"
