"""Synthetic pruning labels from ``[i]``-citing LLM answers.

An annotation LLM sees the query and the passage as numbered sentences and
answers while citing the sentences it used. Cited sentences become label 1,
all others 0. The same module ports labeled examples to other languages by
sentence-by-sentence translation, which keeps the label vector unchanged.
"""

from __future__ import annotations

import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, NamedTuple, Optional, Protocol, Sequence, Union

from .errors import (
    ClientUnavailable,
    IndexMismatch,
    InputError,
    MalformedResponse,
    ParseError,
    PromptTooLong,
    PruneRankError,
    TranslationShapeError,
)
from .http import post_json
from .scorer import Scorer, ScorerConfig, as_scorer
from .segmenter import SegmentedPassage, from_sentences, segment

logger = logging.getLogger(__name__)

SOURCES = ("annotated", "translated", "english-original")
PROMPT_VERSION = "annotate-v1"

LANGUAGE_NAMES = {
    "ar": "Arabic", "bn": "Bengali", "de": "German", "en": "English", "es": "Spanish",
    "fa": "Persian", "fi": "Finnish", "fr": "French", "he": "Hebrew", "hi": "Hindi",
    "id": "Indonesian", "it": "Italian", "ja": "Japanese", "ko": "Korean", "nl": "Dutch",
    "pl": "Polish", "pt": "Portuguese", "ru": "Russian", "sw": "Swahili", "te": "Telugu",
    "th": "Thai", "tr": "Turkish", "vi": "Vietnamese", "zh": "Chinese",
}

_MARKER = re.compile(r"\[([^\[\]\n]*)\]")
_INTEGER = re.compile(r"0|[1-9][0-9]*")


@dataclass(frozen=True)
class TrainingExample:
    query: str
    language: str
    sentences: tuple[str, ...]
    sentence_labels: tuple[int, ...]
    teacher_score: float
    source: str = "annotated"

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        object.__setattr__(self, "sentence_labels", tuple(self.sentence_labels))
        if len(self.sentences) != len(self.sentence_labels):
            raise InputError("one label per sentence is required")
        if any(label not in (0, 1) for label in self.sentence_labels):
            raise InputError("labels must be 0 or 1")
        if self.source not in SOURCES:
            raise InputError(f"unknown source {self.source!r}")

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "language": self.language,
            "sentences": list(self.sentences),
            "labels": list(self.sentence_labels),
            "teacher_score": self.teacher_score,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingExample":
        return cls(
            query=d["query"],
            language=d["language"],
            sentences=tuple(d["sentences"]),
            sentence_labels=tuple(d["labels"]),
            teacher_score=d["teacher_score"],
            source=d["source"],
        )


@dataclass
class AnnotationReport:
    n_examples: int = 0
    n_zero_label: int = 0
    n_malformed_citations: int = 0
    n_out_of_range: int = 0
    n_failed: int = 0

    def merge(self, other: "AnnotationReport") -> "AnnotationReport":
        return AnnotationReport(
            self.n_examples + other.n_examples,
            self.n_zero_label + other.n_zero_label,
            self.n_malformed_citations + other.n_malformed_citations,
            self.n_out_of_range + other.n_out_of_range,
            self.n_failed + other.n_failed,
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class CitationWarning(NamedTuple):
    kind: str  # "out_of_range" | "malformed" | "no_citations"
    marker: str
    position: int


def parse_citations(answer: str, n_sentences: int) -> tuple[list[int], list[CitationWarning]]:
    """Labels from ``[i]`` markers, 1-indexed.

    Integer markers outside ``1..n_sentences`` and bracketed non-integers
    are reported and otherwise ignored. An answer without any in-range
    citation yields all zeros plus a ``no_citations`` warning.
    """
    if n_sentences < 0:
        raise InputError("n_sentences must be non-negative")
    labels = [0] * n_sentences
    warnings: list[CitationWarning] = []
    for m in _MARKER.finditer(answer):
        body = m.group(1)
        if not _INTEGER.fullmatch(body):
            warnings.append(CitationWarning("malformed", m.group(0), m.start()))
            continue
        i = int(body)
        if 1 <= i <= n_sentences:
            labels[i - 1] = 1
        else:
            warnings.append(CitationWarning("out_of_range", m.group(0), m.start()))
    if not any(labels):
        warnings.append(CitationWarning("no_citations", "", -1))
    return labels, warnings


def make_token_targets(sentence_labels: Sequence[int], alignment: Sequence[int]) -> list[int]:
    n = len(sentence_labels)
    out = []
    for s in alignment:
        if not 0 <= s < n:
            raise IndexMismatch(f"alignment references sentence {s} but only {n} labels exist")
        out.append(sentence_labels[s])
    return out


# -- external clients ---------------------------------------------------------


class LLMClient(Protocol):
    def generate(self, prompt: str, max_tokens: int = 256) -> str: ...


class TranslatorClient(Protocol):
    def translate(self, sentences: Sequence[str], target_language: str) -> list[str]: ...


def _url(endpoint: str, path: str) -> str:
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith(path) else endpoint + path


class HTTPLLMClient:
    """``POST /v1/generate {"prompt", "max_tokens"} -> {"text"}``."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.url = _url(endpoint, "/v1/generate")
        self.timeout = timeout

    def generate(self, prompt: str, max_tokens: int = 256) -> str:
        reply = post_json(self.url, {"prompt": prompt, "max_tokens": max_tokens}, self.timeout, ClientUnavailable)
        if not isinstance(reply, dict) or not isinstance(reply.get("text"), str):
            raise MalformedResponse("generate reply must be {\"text\": str}")
        return reply["text"]


class HTTPTranslatorClient:
    """``POST /v1/translate {"sentences", "target_language"} -> {"sentences"}``."""

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.url = _url(endpoint, "/v1/translate")
        self.timeout = timeout

    def translate(self, sentences: Sequence[str], target_language: str) -> list[str]:
        payload = {"sentences": list(sentences), "target_language": target_language}
        reply = post_json(self.url, payload, self.timeout, ClientUnavailable)
        out = reply.get("sentences") if isinstance(reply, dict) else None
        if not isinstance(out, list) or not all(isinstance(s, str) for s in out):
            raise MalformedResponse("translate reply must be {\"sentences\": [str]}")
        return out


# -- annotation ---------------------------------------------------------------


def load_prompt_template(path: Union[str, Path, None] = None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return resources.files("prunerank").joinpath("prompts/annotate.txt").read_text(encoding="utf-8")


def render_prompt(template: str, query: str, sentences: Sequence[str], language: str) -> str:
    numbered = "\n".join(f"[{i}] {s}" for i, s in enumerate(sentences, 1))
    return (
        template.replace("{query}", query)
        .replace("{numbered_sentences}", numbered)
        .replace("{answer_language}", LANGUAGE_NAMES.get(language, language))
    )


@dataclass
class Annotator:
    """Bundles the LLM, the teacher scorer and prompt settings."""

    llm: LLMClient
    teacher: Union[Scorer, ScorerConfig]
    template: str = field(default_factory=load_prompt_template)
    context_budget: int = 8000
    max_tokens: int = 256
    default_language: str = "en"

    def annotate_with_warnings(
        self, query: str, passage: SegmentedPassage, language: Optional[str] = None
    ) -> tuple[TrainingExample, list[CitationWarning]]:
        language = language or passage.language_hint or self.default_language
        sentences = passage.sentence_texts
        prompt = render_prompt(self.template, query, sentences, language)
        if len(prompt) > self.context_budget:
            raise PromptTooLong(f"prompt has {len(prompt)} characters, budget is {self.context_budget}")
        answer = self.llm.generate(prompt, self.max_tokens)
        labels, warnings = parse_citations(answer, len(sentences))
        teacher_score = as_scorer(self.teacher).score(query, passage).passage_score
        ex = TrainingExample(query, language, tuple(sentences), tuple(labels), teacher_score, "annotated")
        return ex, warnings


def annotate(
    query: str,
    passage: SegmentedPassage,
    llm: LLMClient,
    teacher: Union[Scorer, ScorerConfig],
    **options,
) -> TrainingExample:
    return Annotator(llm, teacher, **options).annotate_with_warnings(query, passage)[0]


def translate_example(
    ex: TrainingExample,
    translator: TranslatorClient,
    target_language: str,
    rescore_with: Union[Scorer, ScorerConfig, None] = None,
) -> TrainingExample:
    """Translate the query and each sentence; labels carry over unchanged.

    The teacher score is reused unless ``rescore_with`` is given, in which
    case the translated pair is scored again.
    """
    query_out = translator.translate([ex.query], target_language)
    if len(query_out) != 1:
        raise TranslationShapeError(f"query translation returned {len(query_out)} items")
    sentences_out = translator.translate(list(ex.sentences), target_language)
    if len(sentences_out) != len(ex.sentences):
        raise TranslationShapeError(
            f"sent {len(ex.sentences)} sentences, translator returned {len(sentences_out)}"
        )
    teacher = ex.teacher_score
    if rescore_with is not None:
        passage = from_sentences(sentences_out, target_language)
        teacher = as_scorer(rescore_with).score(query_out[0], passage).passage_score
    return TrainingExample(query_out[0], target_language, tuple(sentences_out), ex.sentence_labels, teacher, "translated")


# -- JSONL ---------------------------------------------------------------------


def dumps_example(ex: TrainingExample) -> str:
    return json.dumps(ex.to_dict(), ensure_ascii=False) + "\n"


def write_training_jsonl(examples: Iterable[TrainingExample], path: Union[str, Path]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for ex in examples:
            f.write(dumps_example(ex))
            n += 1
    return n


def read_training_jsonl(path: Union[str, Path]) -> list[TrainingExample]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(TrainingExample.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, InputError) as exc:
                raise ParseError(str(exc), lineno) from exc
    return out


def reservoir_sample(items: Iterable, k: int, seed: int) -> list:
    """Seeded reservoir sample of ``k`` items, returned in input order."""
    rng = random.Random(seed)
    reservoir: list[tuple[int, object]] = []
    for i, item in enumerate(items):
        if i < k:
            reservoir.append((i, item))
        else:
            j = rng.randint(0, i)
            if j < k:
                reservoir[j] = (i, item)
    return [item for _, item in sorted(reservoir, key=lambda p: p[0])]


def _as_pair(item) -> tuple[str, SegmentedPassage, Optional[str]]:
    query, passage, *rest = item
    language = rest[0] if rest else None
    if isinstance(passage, str):
        passage = segment(passage, language)
    return query, passage, language


def build_dataset(
    pairs: Iterable,
    llm: LLMClient,
    teacher: Union[Scorer, ScorerConfig],
    sample_limit: int,
    out_path: Union[str, Path],
    seed: int = 0,
    workers: int = 1,
    **options,
) -> AnnotationReport:
    """Annotate a seeded sample of ``(query, passage[, language])`` pairs.

    Examples are written in input order whatever the completion order.
    Failing pairs are logged, skipped and counted in ``n_failed``.
    """
    if sample_limit <= 0:
        raise InputError("sample_limit must be positive")
    annotator = Annotator(llm, teacher, **options)
    chosen = reservoir_sample(pairs, sample_limit, seed)

    def run(item):
        try:
            query, passage, language = _as_pair(item)
            return annotator.annotate_with_warnings(query, passage, language)
        except PruneRankError as exc:
            logger.warning("annotation failed, skipping: %s", exc)
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, chosen))
    else:
        results = [run(item) for item in chosen]

    report = AnnotationReport()
    with open(out_path, "w", encoding="utf-8", newline="\n") as f:
        for res in results:
            if res is None:
                report = report.merge(AnnotationReport(n_failed=1))
                continue
            ex, warnings = res
            f.write(dumps_example(ex))
            report = report.merge(
                AnnotationReport(
                    n_examples=1,
                    n_zero_label=int(not any(ex.sentence_labels)),
                    n_malformed_citations=sum(w.kind == "malformed" for w in warnings),
                    n_out_of_range=sum(w.kind == "out_of_range" for w in warnings),
                )
            )
    return report
