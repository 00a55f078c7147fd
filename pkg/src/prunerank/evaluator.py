"""QA and ranking metrics, and the compression-vs-quality threshold sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, Union

from .errors import EmptyRelevantSet, InputError, ParseError, PruneRankError, UnknownLabel
from .labeler import LLMClient
from .pruner import PruningOptions, batch_compression, dslr_decide, prune_scored, score_sentences
from .scorer import Scorer, ScorerConfig, as_scorer
from .segmenter import segment

logger = logging.getLogger(__name__)

METRICS = ("char3gram", "accuracy")
PRUNERS = ("provence", "dslr")
REPORT_COLUMNS = ("threshold", "language", "n", "compression", "metric")
ALL = "ALL"
DEFAULT_TOP_K = 5

_WS = re.compile(r"\s+")


# -- metrics --------------------------------------------------------------------


def normalize(s: str) -> str:
    """Casefold, collapse whitespace runs to one space, trim.

    No punctuation stripping and no Unicode normalization form is applied.
    """
    return _WS.sub(" ", s.casefold()).strip()


def char3gram_recall(label: str, answer: str) -> float:
    """Share of the label's distinct character 3-grams present in the answer.

    Labels shorter than three characters (after normalization) score 1.0
    iff they occur in the answer as a substring.
    """
    label, answer = normalize(label), normalize(answer)
    if len(label) < 3:
        return 1.0 if label in answer else 0.0
    grams = {label[i:i + 3] for i in range(len(label) - 2)}
    return sum(1 for g in grams if g in answer) / len(grams)


def best_char3gram_recall(labels: Sequence[str], answer: str) -> float:
    return max((char3gram_recall(lbl, answer) for lbl in labels), default=0.0)


def choice_accuracy(predicted: str, gold: str, options: Optional[Iterable[str]] = None) -> int:
    p, g = predicted.strip().casefold(), gold.strip().casefold()
    if options is not None and p not in {o.strip().casefold() for o in options}:
        raise UnknownLabel(f"{predicted!r} is not one of the options")
    return int(p == g)


def recall_at_k(ranking: Sequence[str], relevant: Iterable[str], k: int) -> float:
    if k < 1:
        raise InputError("k must be at least 1")
    relevant = set(relevant)
    if not relevant:
        raise EmptyRelevantSet("recall is undefined without relevant items")
    return len(set(ranking[:k]) & relevant) / len(relevant)


def ndcg_at_k(ranking: Sequence[str], relevant: Iterable[str], k: int) -> float:
    """Binary-gain nDCG; the ideal ranking puts every relevant item first."""
    if k < 1:
        raise InputError("k must be at least 1")
    relevant = set(relevant)
    if not relevant:
        return 0.0
    seen = set()
    dcg = 0.0
    for i, doc in enumerate(ranking[:k], 1):
        if doc in relevant and doc not in seen:
            dcg += 1.0 / math.log2(i + 1)
        seen.add(doc)
    idcg = sum(1.0 / math.log2(i + 1) for i in range(1, min(k, len(relevant)) + 1))
    return dcg / idcg


# -- records ------------------------------------------------------------------


@dataclass(frozen=True)
class EvalRecord:
    query: str
    language: str
    passages: tuple[str, ...]
    gold_answers: Optional[tuple[str, ...]] = None
    gold_choice: Optional[str] = None
    relevant_ids: Optional[tuple[str, ...]] = None
    ranking: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.gold_answers is None and self.gold_choice is None and self.relevant_ids is None:
            raise InputError("record needs gold_answers, gold_choice or relevant_ids")

    def to_dict(self) -> dict:
        d = {"query": self.query, "language": self.language, "passages": list(self.passages)}
        if self.gold_answers is not None:
            d["gold_answers"] = list(self.gold_answers)
        if self.gold_choice is not None:
            d["gold_choice"] = self.gold_choice
        if self.relevant_ids is not None:
            d["relevant_ids"] = list(self.relevant_ids)
        if self.ranking is not None:
            d["ranking"] = list(self.ranking)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalRecord":
        if not isinstance(d, dict):
            raise InputError("record must be a JSON object")
        if not isinstance(d.get("query"), str) or not isinstance(d.get("language"), str):
            raise InputError("query and language must be strings")
        passages = d.get("passages")
        if not isinstance(passages, list) or not all(isinstance(p, str) for p in passages):
            raise InputError("passages must be a list of strings")

        def opt_list(key):
            v = d.get(key)
            if v is None:
                return None
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise InputError(f"{key} must be a list of strings")
            return tuple(v)

        choice = d.get("gold_choice")
        if choice is not None and not isinstance(choice, str):
            raise InputError("gold_choice must be a string")
        return cls(
            d["query"], d["language"], tuple(passages),
            opt_list("gold_answers"), choice, opt_list("relevant_ids"), opt_list("ranking"),
        )


def load_eval_dataset(path: Union[str, Path]) -> list[EvalRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(EvalRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, InputError) as exc:
                raise ParseError(str(exc), lineno) from exc
    return out


def write_eval_dataset(records: Iterable[EvalRecord], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


# -- generators -----------------------------------------------------------------


class Generator(Protocol):
    def answer(self, query: str, contexts: Sequence[str]) -> str: ...


class ExtractiveGenerator:
    """Offline stand-in for the generator LLM.

    Returns, space-joined, the context sentences sharing the largest number
    of distinct query 3-grams; an empty string when no sentence shares any.
    """

    def answer(self, query: str, contexts: Sequence[str]) -> str:
        q = normalize(query)
        grams = {q[i:i + 3] for i in range(len(q) - 2)}
        best, chosen = 0, []
        for ctx in contexts:
            for sent in segment(ctx).sentence_texts:
                s = normalize(sent)
                hits = sum(1 for g in grams if g in s)
                if hits > best:
                    best, chosen = hits, [sent]
                elif hits == best and hits > 0:
                    chosen.append(sent)
        return " ".join(chosen)


GENERATION_PROMPT = (
    "Answer the question using the context below. Answer briefly.\n\n"
    "Context:\n{context}\n\nQuestion: {query}\n\nAnswer:"
)


class LLMGenerator:
    """Generation through the ``/v1/generate`` client protocol."""

    def __init__(self, client: LLMClient, max_tokens: int = 64):
        self.client = client
        self.max_tokens = max_tokens

    def answer(self, query: str, contexts: Sequence[str]) -> str:
        context = "\n\n".join(contexts)
        prompt = GENERATION_PROMPT.replace("{context}", context).replace("{query}", query)
        return self.client.generate(prompt, self.max_tokens)


# -- sweep ----------------------------------------------------------------------


@dataclass(frozen=True)
class ParetoPoint:
    threshold: float
    language: str
    n_examples: int
    mean_compression: float
    mean_metric: float

    def __post_init__(self):
        if self.n_examples <= 0:
            raise InputError("a Pareto point needs at least one example")

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "language": self.language,
            "n": self.n_examples,
            "compression": self.mean_compression,
            "metric": self.mean_metric,
        }


def _record_metric(rec: EvalRecord, answer: str, metric: str) -> float:
    if metric == "char3gram":
        if not rec.gold_answers:
            raise InputError("char3gram metric needs gold_answers")
        return best_char3gram_recall(rec.gold_answers, answer)
    if rec.gold_choice is None:
        raise InputError("accuracy metric needs gold_choice")
    return float(choice_accuracy(answer, rec.gold_choice))


def _mean(xs: Sequence[float]) -> float:
    return sum(xs) / len(xs)


def sweep(
    dataset: Sequence[EvalRecord],
    thresholds: Sequence[float],
    scorer: Union[Scorer, ScorerConfig],
    pruner_kind: str = "provence",
    generator: Optional[Generator] = None,
    metric: str = "char3gram",
    top_k: int = DEFAULT_TOP_K,
    basis: str = "characters",
    workers: int = 1,
) -> list[ParetoPoint]:
    """Prune every record at every threshold and measure the answers.

    Passages are scored once per record and re-thresholded, so the cost of
    the sweep is one scoring pass (per sentence for DSLR) plus generation.
    Points are emitted per threshold: one per language in sorted order, then
    an ``ALL`` row macro-averaged over languages. Records whose scoring or
    generation fails are logged and left out.
    """
    if not thresholds:
        raise InputError("at least one threshold is required")
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise InputError(f"threshold {t} outside [0, 1]")
    if pruner_kind not in PRUNERS:
        raise InputError(f"pruner must be one of {PRUNERS}")
    if metric not in METRICS:
        raise InputError(f"metric must be one of {METRICS}")
    scorer = as_scorer(scorer)
    generator = generator or ExtractiveGenerator()

    def score_record(rec: EvalRecord):
        passages = [segment(p, rec.language) for p in rec.passages[:top_k]]
        try:
            if pruner_kind == "provence":
                scores = [scorer.score(rec.query, p) for p in passages]
            else:
                scores = [[s.passage_score for s in score_sentences(rec.query, p, scorer)] for p in passages]
        except PruneRankError as exc:
            logger.warning("scoring failed for query %r: %s", rec.query, exc)
            return None
        return passages, scores

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score_record, dataset))
    else:
        scored = [score_record(r) for r in dataset]
    failures = sum(s is None for s in scored)

    points: list[ParetoPoint] = []
    for tau in thresholds:
        opts = PruningOptions(threshold=tau, basis=basis)
        compressions = defaultdict(list)
        metrics = defaultdict(list)
        for rec, entry in zip(dataset, scored):
            if entry is None:
                continue
            passages, scores = entry
            if pruner_kind == "provence":
                pruned = [prune_scored(s, p, opts) for s, p in zip(scores, passages)]
            else:
                pruned = [dslr_decide(s, p, tau, basis) for s, p in zip(scores, passages)]
            contexts = [p.pruned_text for p in pruned if p.pruned_text]
            try:
                answer = generator.answer(rec.query, contexts)
            except PruneRankError as exc:
                logger.warning("generation failed for query %r: %s", rec.query, exc)
                failures += 1
                continue
            metrics[rec.language].append(_record_metric(rec, answer, metric))
            compressions[rec.language].extend(pruned)
        rows = []
        for lang in sorted(metrics):
            comp = batch_compression(compressions[lang]) if compressions[lang] else 0.0
            rows.append(ParetoPoint(tau, lang, len(metrics[lang]), comp, _mean(metrics[lang])))
        if rows:
            points.extend(rows)
            points.append(
                ParetoPoint(
                    tau,
                    ALL,
                    sum(r.n_examples for r in rows),
                    _mean([r.mean_compression for r in rows]),
                    _mean([r.mean_metric for r in rows]),
                )
            )
    if failures:
        logger.warning("sweep skipped %d record evaluations after errors", failures)
    return points


# -- reports ------------------------------------------------------------------


def report_csv(points: Sequence[ParetoPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for p in points:
        w.writerow([repr(float(p.threshold)), p.language, p.n_examples, repr(float(p.mean_compression)), repr(float(p.mean_metric))])
    return buf.getvalue()


def report_jsonl(points: Sequence[ParetoPoint]) -> str:
    return "".join(json.dumps(p.to_dict(), ensure_ascii=False) + "\n" for p in points)


def write_report(points: Sequence[ParetoPoint], path: Union[str, Path]) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.jsonl`` next to ``path``."""
    path = Path(path)
    csv_path, jsonl_path = path.with_suffix(".csv"), path.with_suffix(".jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(report_csv(points), encoding="utf-8", newline="")
    jsonl_path.write_text(report_jsonl(points), encoding="utf-8", newline="")
    return csv_path, jsonl_path


def read_report_csv(path: Union[str, Path]) -> list[ParetoPoint]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != REPORT_COLUMNS:
            raise ParseError(f"unexpected header {header}", 1)
        out = []
        for lineno, row in enumerate(reader, 2):
            try:
                t, lang, n, comp, met = row
                out.append(ParetoPoint(float(t), lang, int(n), float(comp), float(met)))
            except (ValueError, InputError) as exc:
                raise ParseError(str(exc), lineno) from exc
        return out


def read_report_jsonl(path: Union[str, Path]) -> list[ParetoPoint]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                out.append(ParetoPoint(d["threshold"], d["language"], d["n"], d["compression"], d["metric"]))
            except (json.JSONDecodeError, KeyError, TypeError, InputError) as exc:
                raise ParseError(str(exc), lineno) from exc
    return out


# -- ranking evaluation -----------------------------------------------------------


def rank_passages(query: str, passages: Sequence[str], scorer: Scorer) -> list[str]:
    """Passage ids (their index as a string) by descending score, ties by index."""
    scores = [scorer.score(query, p).passage_score for p in passages]
    order = sorted(range(len(passages)), key=lambda i: (-scores[i], i))
    return [str(i) for i in order]


def evaluate_rankings(
    records: Sequence[EvalRecord],
    k: int,
    metric: str = "ndcg",
    scorer: Union[Scorer, ScorerConfig, None] = None,
) -> dict[str, float]:
    """Mean Recall@k or nDCG@k per language plus the macro ``ALL`` average.

    Records without a ``ranking`` are reranked with ``scorer`` when given.
    Records without relevant ids are skipped.
    """
    if metric not in ("recall", "ndcg"):
        raise InputError("metric must be 'recall' or 'ndcg'")
    fn = recall_at_k if metric == "recall" else ndcg_at_k
    scorer = as_scorer(scorer) if scorer is not None else None
    per_lang = defaultdict(list)
    for rec in records:
        if not rec.relevant_ids:
            continue
        ranking = rec.ranking
        if ranking is None:
            if scorer is None:
                raise InputError("record has no ranking and no scorer was given")
            ranking = rank_passages(rec.query, rec.passages, scorer)
        per_lang[rec.language].append(fn(list(ranking), rec.relevant_ids, k))
    out = {lang: _mean(v) for lang, v in sorted(per_lang.items())}
    if out:
        out[ALL] = _mean(list(out.values()))
    return out
