"""Sentence pruning from per-token relevance values, plus the DSLR baseline.

Token values are binarized with ``value >= threshold``; a sentence survives
iff strictly more than half of its content tokens are relevant. DSLR
instead scores each sentence on its own and keeps it iff the score strictly
exceeds the threshold.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .errors import EmptyBatch, InputError
from .scorer import ScoredPassage, Scorer, ScorerConfig, as_scorer
from .segmenter import SegmentedPassage, align_tokens

BASES = ("characters", "tokens")


@dataclass(frozen=True)
class PruningOptions:
    threshold: float = 0.5
    always_keep_first: bool = False
    basis: str = "characters"

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise InputError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.basis not in BASES:
            raise InputError(f"basis must be one of {BASES}")


@dataclass(frozen=True)
class PrunedPassage:
    kept: tuple[int, ...]
    pruned_text: str
    compression: float
    passage_score: float

    def to_dict(self) -> dict:
        return {
            "score": self.passage_score,
            "kept": list(self.kept),
            "pruned_text": self.pruned_text,
            "compression": self.compression,
        }


def binarize(values: Sequence[float], threshold: float) -> list[int]:
    return [1 if v >= threshold else 0 for v in values]


def decide_sentences(mask: Sequence[int], alignment: Sequence[int], n_sentences: int) -> list[bool]:
    if len(mask) != len(alignment):
        raise InputError("mask and alignment must have equal length")
    relevant = [0] * n_sentences
    total = [0] * n_sentences
    for m, s in zip(mask, alignment):
        total[s] += 1
        relevant[s] += m
    # 2 * r > t keeps the comparison in integers; zero-token sentences fail it.
    return [2 * r > t for r, t in zip(relevant, total)]


def reconstruct(passage: SegmentedPassage, kept: Sequence[int]) -> str:
    """Join kept sentences in order.

    Two kept sentences are separated by one space when the original text
    had whitespace right before the later one, and concatenated otherwise.
    """
    text, spans = passage.text, passage.sentences
    parts: list[str] = []
    for k in kept:
        span = spans[k]
        if parts:
            gap = text[spans[k - 1].end:span.start]
            if any(c.isspace() for c in gap):
                parts.append(" ")
        parts.append(text[span.start:span.end])
    return "".join(parts)


def _compression(passage: SegmentedPassage, kept: Sequence[int], basis: str, alignment=None) -> float:
    if basis == "tokens":
        if alignment is None:
            raise InputError("token-basis compression needs a token alignment")
        total = len(alignment)
        keep = set(kept)
        kept_size = sum(1 for s in alignment if s in keep)
    else:
        sizes = [s.end - s.start for s in passage.sentences]
        total = sum(sizes)
        kept_size = sum(sizes[k] for k in kept)
    if total == 0:
        return 0.0
    return 1.0 - kept_size / total


def prune_scored(scored: ScoredPassage, passage: SegmentedPassage, opts: PruningOptions) -> PrunedPassage:
    """Apply the threshold-and-majority rule to an already scored passage.

    Split out of :func:`prune` so a threshold sweep can score once and
    re-threshold many times.
    """
    alignment = align_tokens(scored.tokens, passage.sentences, passage.text)
    mask = binarize(scored.token_values, opts.threshold)
    flags = decide_sentences(mask, alignment, len(passage.sentences))
    if opts.always_keep_first and flags:
        flags[0] = True
    kept = tuple(i for i, f in enumerate(flags) if f)
    return PrunedPassage(
        kept,
        reconstruct(passage, kept),
        _compression(passage, kept, opts.basis, alignment),
        scored.passage_score,
    )


def prune(
    query: str,
    passage: SegmentedPassage,
    scorer: Union[Scorer, ScorerConfig],
    opts: Optional[PruningOptions] = None,
) -> PrunedPassage:
    """Score the passage once and prune it. Scorer errors propagate."""
    opts = opts or PruningOptions()
    scored = as_scorer(scorer).score(query, passage)
    return prune_scored(scored, passage, opts)


def score_sentences(query: str, passage: SegmentedPassage, scorer: Scorer) -> list[ScoredPassage]:
    """One independent scorer call per sentence, as DSLR requires."""
    return [scorer.score(query, s) for s in passage.sentence_texts]


def dslr_decide(
    sentence_scores: Sequence[float],
    passage: SegmentedPassage,
    threshold: float,
    basis: str = "characters",
) -> PrunedPassage:
    """Keep sentences scoring strictly above ``threshold``.

    The reported passage score is the best sentence score (0.0 when the
    passage has no sentences), since DSLR never scores the passage as a
    whole.
    """
    if basis != "characters":
        raise InputError("DSLR compression is only defined on the character basis")
    kept = tuple(i for i, s in enumerate(sentence_scores) if s > threshold)
    return PrunedPassage(
        kept,
        reconstruct(passage, kept),
        _compression(passage, kept, basis),
        max(sentence_scores, default=0.0),
    )


def dslr_prune(
    query: str,
    passage: SegmentedPassage,
    scorer: Union[Scorer, ScorerConfig],
    threshold: float,
) -> PrunedPassage:
    if not 0.0 <= threshold <= 1.0:
        raise InputError(f"threshold must lie in [0, 1], got {threshold}")
    scored = score_sentences(query, passage, as_scorer(scorer))
    return dslr_decide([s.passage_score for s in scored], passage, threshold)


def batch_compression(pruned: Sequence[PrunedPassage]) -> float:
    if not pruned:
        raise EmptyBatch("no pruned passages to average")
    return sum(p.compression for p in pruned) / len(pruned)


def prune_many(
    query: str,
    passages: Sequence[SegmentedPassage],
    scorer: Union[Scorer, ScorerConfig],
    opts: Optional[PruningOptions] = None,
    workers: int = 1,
) -> list[PrunedPassage]:
    """Prune several passages for one query; results follow input order."""
    scorer = as_scorer(scorer)
    if workers <= 1 or len(passages) <= 1:
        return [prune(query, p, scorer, opts) for p in passages]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: prune(query, p, scorer, opts), passages))
