"""Zero-cost context pruning for retrieval-augmented generation.

A scorer assigns each token of a retrieved passage a relevance value in
(0, 1) together with a passage-level rerank score. The pruner turns those
values into sentence keep/drop decisions so pruning costs nothing beyond the
reranking pass that already runs.
"""

from .errors import InputError, PruneRankError, RemoteError
from .pruner import PrunedPassage, PruningOptions, dslr_prune, prune
from .scorer import LexicalScorer, RemoteScorer, ScoredPassage, ScorerConfig, make_scorer, score
from .segmenter import SegmentedPassage, align_tokens, segment

__version__ = "0.1.0"

__all__ = [
    "InputError",
    "LexicalScorer",
    "PrunedPassage",
    "PruneRankError",
    "PruningOptions",
    "RemoteError",
    "RemoteScorer",
    "ScoredPassage",
    "ScorerConfig",
    "SegmentedPassage",
    "align_tokens",
    "dslr_prune",
    "make_scorer",
    "prune",
    "score",
    "segment",
]
