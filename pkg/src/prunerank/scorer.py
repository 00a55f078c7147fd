"""Scoring backends: query + passage in, passage score + per-token values out.

Every backend returns a :class:`ScoredPassage` whose token values lie
strictly inside (0, 1). The pruner only consumes that contract, so the
lexical reference backend, the toy linear model and a remote checkpoint
server are interchangeable.
"""

from __future__ import annotations

import logging
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence, Union

from .errors import EmptyPassage, InputError, MalformedResponse
from .http import post_json
from .segmenter import SegmentedPassage, TokenSpan

logger = logging.getLogger(__name__)

BACKENDS = ("lexical", "remote", "toy-model")

LEXICAL_FLOOR = 0.02
LEXICAL_SPAN = 0.96


@dataclass(frozen=True)
class ScorerConfig:
    backend: str = "lexical"
    endpoint: Optional[str] = None
    model_path: Optional[str] = None
    batch_size: int = 16
    timeout: float = 30.0
    max_in_flight: int = 4

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise InputError(f"unknown scorer backend {self.backend!r}; expected one of {BACKENDS}")
        if (self.backend == "remote") != bool(self.endpoint):
            raise InputError("endpoint is required for, and only for, the remote backend")
        if (self.backend == "toy-model") != bool(self.model_path):
            raise InputError("model_path is required for, and only for, the toy-model backend")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise InputError("batch_size and max_in_flight must be positive")


@dataclass(frozen=True)
class ScoredPassage:
    passage_score: float
    tokens: tuple[TokenSpan, ...]
    token_values: tuple[float, ...]

    def __post_init__(self):
        n_content = sum(1 for t in self.tokens if not t.is_special)
        if n_content != len(self.token_values):
            raise ValueError(f"{len(self.token_values)} values for {n_content} content tokens")
        for v in self.token_values:
            if not 0.0 < v < 1.0:
                raise ValueError(f"token value {v!r} outside the open interval (0, 1)")

    @property
    def content_tokens(self) -> list[TokenSpan]:
        return [t for t in self.tokens if not t.is_special]


class Scorer(Protocol):
    def score(self, query: str, passage: Union[SegmentedPassage, str]) -> ScoredPassage: ...


def _text_of(passage: Union[SegmentedPassage, str]) -> str:
    return passage.text if isinstance(passage, SegmentedPassage) else passage


def _check_query(query: str) -> None:
    if not query or not query.strip():
        raise InputError("query must be non-empty")


def is_split_char(ch: str) -> bool:
    """Punctuation characters become tokens of their own."""
    return unicodedata.category(ch).startswith("P")


def tokenize_for_scoring(text: str) -> list[TokenSpan]:
    """Word-level tokenizer standing in for a subword vocabulary.

    Maximal runs of non-whitespace, non-punctuation characters form one
    token; every punctuation character (Unicode category P*) is a token on
    its own. All tokens are content tokens.
    """
    tokens: list[TokenSpan] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isspace() or is_split_char(ch):
            if start is not None:
                tokens.append(TokenSpan(start, i))
                start = None
            if not ch.isspace():
                tokens.append(TokenSpan(i, i + 1))
        elif start is None:
            start = i
    if start is not None:
        tokens.append(TokenSpan(start, len(text)))
    return tokens


def char_grams(s: str) -> set[str]:
    """Distinct character 3-grams of ``s`` casefolded.

    Strings shorter than three characters yield themselves as a single
    pseudo-gram (nothing for the empty string).
    """
    s = s.casefold()
    if len(s) < 3:
        return {s} if s else set()
    return {s[i:i + 3] for i in range(len(s) - 2)}


def lexical_token_value(token_text: str, query: str, query_grams: Optional[set[str]] = None) -> float:
    """0.02 + 0.96 * (share of the token's 3-grams also found in the query)."""
    token_grams = char_grams(token_text.strip())
    if not token_grams:
        raise InputError("token text is empty")
    if query_grams is None:
        query_grams = char_grams(query)
    overlap = len(token_grams & query_grams) / len(token_grams)
    return LEXICAL_FLOOR + LEXICAL_SPAN * overlap


def lexical_passage_score(token_values: Sequence[float]) -> float:
    if not token_values:
        raise EmptyPassage("cannot score a passage without tokens")
    return sum(token_values) / len(token_values)


class LexicalScorer:
    """Deterministic character 3-gram overlap scorer.

    A passage without tokens gets score 0.0 and no values.
    """

    name = "lexical"

    def score(self, query: str, passage: Union[SegmentedPassage, str]) -> ScoredPassage:
        _check_query(query)
        text = _text_of(passage)
        tokens = tokenize_for_scoring(text)
        qg = char_grams(query)
        values = tuple(lexical_token_value(text[t.start:t.end], query, qg) for t in tokens)
        score = lexical_passage_score(values) if values else 0.0
        return ScoredPassage(score, tuple(tokens), values)


def decode_score_result(item, text: str) -> ScoredPassage:
    """Validate one entry of a ``/v1/score`` reply against its passage."""
    try:
        score = float(item["score"])
        tokens = tuple(
            TokenSpan(int(t["start"]), int(t["end"]), bool(t.get("special", False))) for t in item["tokens"]
        )
        values = tuple(float(v) for v in item["values"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"bad result entry: {exc}") from exc
    prev = -1
    for t in tokens:
        if t.start > t.end or t.start < prev:
            raise MalformedResponse("token spans must be ordered with start <= end")
        if not t.is_special and (t.start < 0 or t.end > len(text)):
            raise MalformedResponse("content token outside passage text")
        prev = t.start
    try:
        return ScoredPassage(score, tokens, values)
    except ValueError as exc:
        raise MalformedResponse(str(exc)) from exc


def encode_score_result(sp: ScoredPassage) -> dict:
    return {
        "score": sp.passage_score,
        "tokens": [{"start": t.start, "end": t.end, "special": t.is_special} for t in sp.tokens],
        "values": list(sp.token_values),
    }


class RemoteScorer:
    """Client for a model server implementing ``POST /v1/score``."""

    name = "remote"

    def __init__(self, endpoint: str, timeout: float = 30.0, batch_size: int = 16, max_in_flight: int = 4):
        endpoint = endpoint.rstrip("/")
        self.url = endpoint if endpoint.endswith("/v1/score") else endpoint + "/v1/score"
        self.timeout = timeout
        self.batch_size = batch_size
        self.max_in_flight = max_in_flight

    def _request(self, query: str, texts: list[str]) -> list[ScoredPassage]:
        reply = post_json(self.url, {"query": query, "passages": texts, "return_tokens": True}, self.timeout)
        results = reply.get("results") if isinstance(reply, dict) else None
        if not isinstance(results, list) or len(results) != len(texts):
            raise MalformedResponse("reply must carry one result per passage")
        return [decode_score_result(r, t) for r, t in zip(results, texts)]

    def score(self, query: str, passage: Union[SegmentedPassage, str]) -> ScoredPassage:
        _check_query(query)
        return self._request(query, [_text_of(passage)])[0]

    def score_many(self, query: str, passages: Iterable[Union[SegmentedPassage, str]]) -> list[ScoredPassage]:
        """Score in batches of ``batch_size`` with up to ``max_in_flight`` requests open."""
        _check_query(query)
        texts = [_text_of(p) for p in passages]
        chunks = [texts[i:i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            parts = list(pool.map(lambda c: self._request(query, c), chunks))
        return [sp for part in parts for sp in part]


def make_scorer(config: ScorerConfig) -> Scorer:
    if config.backend == "lexical":
        return LexicalScorer()
    if config.backend == "remote":
        return RemoteScorer(config.endpoint, config.timeout, config.batch_size, config.max_in_flight)
    from .trainer import ToyModelScorer, load_model

    return ToyModelScorer(load_model(config.model_path))


def as_scorer(scorer: Union[Scorer, ScorerConfig]) -> Scorer:
    return make_scorer(scorer) if isinstance(scorer, ScorerConfig) else scorer


def score(query: str, passage: Union[SegmentedPassage, str], config: Union[ScorerConfig, Scorer]) -> ScoredPassage:
    return as_scorer(config).score(query, passage)
