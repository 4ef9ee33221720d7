"""Conversational QA with dynamic history selection.

The pipeline prunes entity-disjoint history turns, re-ranks the
survivors with softmax attention, highlights question-relevant history
terms with a binary classifier, and answers with a lexical span reader.
Experiment harnesses reproduce ablation, noise-injection, and
pruning-degradation designs on a planted synthetic corpus.
"""

__version__ = "0.1.0"
