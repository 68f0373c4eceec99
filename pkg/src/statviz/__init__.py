"""Charts from natural-language questions over official statistics tables.

The pipeline: materialize catalog tables locally (`catalog`), rank them
against a prompt with dense embeddings (`retrieval`), assemble zero-shot or
agentic prompts (`prompting`), talk to a chat model (`gateway`), drive the
single-pass or iterative run (`agent`) with code execution delegated to an
out-of-process harness (`sandbox`), and score the results on a fixed binary
rubric (`evaluation`).
"""

__version__ = "0.1.0"
