"""Toy joint pruning/reranking model trained on hashed character 3-grams.

The model has two linear heads over the same hashed features:

* token head: ``p_t = sigmoid(w . phi_t + b)`` for every token ``t``;
* rank head: ``score = u . mean_t(phi_t) + c``.

The per-example objective is the mean token binary cross-entropy plus
``lam * (score - teacher_score) ** 2``. Gradients are analytic;
:func:`finite_diff_check` verifies them with central differences evaluated
in 50-digit arithmetic so that cancellation in ``L(x+h) - L(x-h)`` does not
drown small partials.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import mpmath
import numpy as np

from .errors import EmptyDataset, EmptyExample, InputError, ModelLoadError
from .labeler import TrainingExample, make_token_targets
from .scorer import ScoredPassage, char_grams, tokenize_for_scoring
from .segmenter import SegmentedPassage

DIM = 2 ** 16
HASH_VERSION = "fnv1a64-3gram-v1"
MODEL_FORMAT = "prunerank-toy-model"

LOSS_CLIP = 1e-7
SERVE_CLIP = 1e-4

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def feature_indices(query: str, token_text: str, dim: int = DIM) -> np.ndarray:
    """Sorted distinct buckets hit by the 3-grams of ``query + " " + token``."""
    grams = char_grams(query + " " + token_text)
    return np.array(sorted({fnv1a64(g.encode("utf-8")) % dim for g in grams}), dtype=np.int64)


@dataclass
class ToyModel:
    w: np.ndarray
    b: float
    u: np.ndarray
    c: float
    lam: float = 1.0

    @classmethod
    def zeros(cls, dim: int = DIM, lam: float = 1.0) -> "ToyModel":
        return cls(np.zeros(dim), 0.0, np.zeros(dim), 0.0, lam)

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "ToyModel":
        return ToyModel(self.w.copy(), self.b, self.u.copy(), self.c, self.lam)


@dataclass
class Gradient:
    w: np.ndarray
    b: float
    u: np.ndarray
    c: float


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 64
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise InputError("epochs and batch_size must be at least 1")
        if self.learning_rate < 0 or self.lam < 0:
            raise InputError("learning_rate and lam must be non-negative")


@dataclass
class PreparedExample:
    """Token features of one example flattened for vectorized passes.

    Token ``t`` owns ``idx[ptr[t]:ptr[t+1]]``; every one of its buckets has
    the same value ``scale[t]`` (multi-hot, L2-normalized).
    """

    idx: np.ndarray
    ptr: np.ndarray
    scale: np.ndarray
    targets: np.ndarray
    teacher: float
    mean_idx: np.ndarray = field(init=False)
    mean_val: np.ndarray = field(init=False)

    def __post_init__(self):
        n_tok = len(self.scale)
        if n_tok == 0:
            raise EmptyExample("example has no tokens")
        per_entry = np.repeat(self.scale, np.diff(self.ptr)) / n_tok
        self.mean_idx, inverse = np.unique(self.idx, return_inverse=True)
        self.mean_val = np.zeros(len(self.mean_idx))
        np.add.at(self.mean_val, inverse, per_entry)

    @property
    def n_tokens(self) -> int:
        return len(self.scale)

    def token_buckets(self, t: int) -> np.ndarray:
        return self.idx[self.ptr[t]:self.ptr[t + 1]]


def _prepare_tokens(query: str, token_texts: Sequence[str], targets, teacher: float, dim: int) -> PreparedExample:
    feats = [feature_indices(query, tok, dim) for tok in token_texts]
    ptr = np.zeros(len(feats) + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(f) for f in feats])
    idx = np.concatenate(feats) if feats else np.zeros(0, dtype=np.int64)
    scale = np.array([1.0 / math.sqrt(len(f)) for f in feats])
    return PreparedExample(idx, ptr, scale, np.asarray(targets, dtype=float), float(teacher))


def prepare(ex: Union[TrainingExample, PreparedExample], dim: int = DIM) -> PreparedExample:
    if isinstance(ex, PreparedExample):
        return ex
    texts, alignment = [], []
    for i, sentence in enumerate(ex.sentences):
        for tok in tokenize_for_scoring(sentence):
            texts.append(sentence[tok.start:tok.end])
            alignment.append(i)
    targets = make_token_targets(ex.sentence_labels, alignment)
    return _prepare_tokens(ex.query, texts, targets, ex.teacher_score, dim)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logits(model: ToyModel, prep: PreparedExample) -> np.ndarray:
    sums = np.add.reduceat(model.w[prep.idx], prep.ptr[:-1])
    return sums * prep.scale + model.b


def _rank_score(model: ToyModel, prep: PreparedExample) -> float:
    return float(model.u[prep.mean_idx] @ prep.mean_val + model.c)


def forward(model: ToyModel, ex) -> tuple[np.ndarray, float]:
    prep = prepare(ex, model.dim)
    return _sigmoid(_logits(model, prep)), _rank_score(model, prep)


def _loss_terms(model: ToyModel, prep: PreparedExample) -> tuple[float, float]:
    p, s = forward(model, prep)
    p = np.clip(p, LOSS_CLIP, 1.0 - LOSS_CLIP)
    y = prep.targets
    bce = float(np.mean(-y * np.log(p) - (1.0 - y) * np.log(1.0 - p)))
    return bce, (s - prep.teacher) ** 2


def loss(model: ToyModel, ex) -> float:
    bce, sq = _loss_terms(model, prepare(ex, model.dim))
    return bce + model.lam * sq


def _grad_sparse(model: ToyModel, prep: PreparedExample):
    """Gradient as (w-buckets, w-values, db, u-buckets, u-values, dc)."""
    p, s = forward(model, prep)
    resid = (p - prep.targets) / prep.n_tokens
    per_entry = np.repeat(resid * prep.scale, np.diff(prep.ptr))
    rank_factor = 2.0 * model.lam * (s - prep.teacher)
    return prep.idx, per_entry, float(resid.sum()), prep.mean_idx, rank_factor * prep.mean_val, rank_factor


def grad(model: ToyModel, ex) -> Gradient:
    prep = prepare(ex, model.dim)
    wi, wv, db, ui, uv, dc = _grad_sparse(model, prep)
    dw = np.zeros(model.dim)
    np.add.at(dw, wi, wv)
    du = np.zeros(model.dim)
    du[ui] += uv
    return Gradient(dw, db, du, dc)


def _apply(model: ToyModel, prepared: Sequence[PreparedExample], lr: float) -> None:
    scale = lr / len(prepared)
    dw = np.zeros(model.dim)
    du = np.zeros(model.dim)
    db = dc = 0.0
    for prep in prepared:
        wi, wv, gb, ui, uv, gc = _grad_sparse(model, prep)
        np.add.at(dw, wi, wv)
        du[ui] += uv
        db += gb
        dc += gc
    model.w -= scale * dw
    model.u -= scale * du
    model.b -= scale * db
    model.c -= scale * dc


def mean_loss(model: ToyModel, prepared: Sequence[PreparedExample]) -> float:
    return float(np.mean([loss(model, p) for p in prepared]))


def train(dataset: Sequence[TrainingExample], cfg: Optional[TrainConfig] = None) -> tuple[ToyModel, list[float]]:
    """Mini-batch gradient descent from a zero model.

    Examples are reshuffled every epoch with a generator seeded by
    ``cfg.seed``. The history holds the mean loss over the whole dataset
    measured after each epoch.
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise EmptyDataset("cannot train on an empty dataset")
    prepared = [prepare(ex) for ex in dataset]
    model = ToyModel.zeros(DIM, cfg.lam)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(prepared))
        for start in range(0, len(order), cfg.batch_size):
            batch = [prepared[i] for i in order[start:start + cfg.batch_size]]
            _apply(model, batch, cfg.learning_rate)
        history.append(mean_loss(model, prepared))
    return model, history


def token_accuracy(model: ToyModel, dataset, cutoff: float = 0.5) -> float:
    correct = total = 0
    for ex in dataset:
        prep = prepare(ex, model.dim)
        p, _ = forward(model, prep)
        correct += int(np.sum((p >= cutoff) == (prep.targets == 1)))
        total += prep.n_tokens
    return correct / total


def rank_mse(model: ToyModel, dataset) -> float:
    errs = []
    for ex in dataset:
        prep = prepare(ex, model.dim)
        errs.append((_rank_score(model, prep) - prep.teacher) ** 2)
    return float(np.mean(errs))


# -- finite-difference oracle -------------------------------------------------


def _mp_loss_fn(model: ToyModel, prep: PreparedExample):
    """Return ``f(coord, delta)``: the loss with one parameter shifted, in mp."""
    w_sums = [mpmath.fsum(mpmath.mpf(float(x)) for x in model.w[prep.token_buckets(t)]) for t in range(prep.n_tokens)]
    scales = [mpmath.mpf(float(s)) for s in prep.scale]
    mean_val = {int(i): mpmath.mpf(float(v)) for i, v in zip(prep.mean_idx, prep.mean_val)}
    base_score = mpmath.fsum(mpmath.mpf(float(model.u[i])) * v for i, v in mean_val.items()) + mpmath.mpf(model.c)
    teacher = mpmath.mpf(prep.teacher)
    lam = mpmath.mpf(model.lam)
    lo, hi = mpmath.mpf(LOSS_CLIP), 1 - mpmath.mpf(LOSS_CLIP)
    b = mpmath.mpf(model.b)
    token_sets = [set(int(j) for j in prep.token_buckets(t)) for t in range(prep.n_tokens)]

    def f(coord, delta):
        kind, j = coord
        bce = []
        for t in range(prep.n_tokens):
            wsum = w_sums[t] + (delta if kind == "w" and j in token_sets[t] else 0)
            z = wsum * scales[t] + b + (delta if kind == "b" else 0)
            p = min(max(1 / (1 + mpmath.exp(-z)), lo), hi)
            y = prep.targets[t]
            bce.append(-mpmath.log(p) if y == 1 else -mpmath.log(1 - p))
        score = base_score
        if kind == "u":
            score += delta * mean_val.get(j, 0)
        elif kind == "c":
            score += delta
        return mpmath.fsum(bce) / prep.n_tokens + lam * (score - teacher) ** 2

    return f


def active_coordinates(prep: PreparedExample) -> list[tuple[str, int]]:
    """Parameters the example's loss depends on (all others have zero partials)."""
    coords = [("b", 0), ("c", 0)]
    coords += [("w", int(j)) for j in np.unique(prep.idx)]
    coords += [("u", int(j)) for j in prep.mean_idx]
    return coords


def finite_diff_check(model: ToyModel, ex, h: float = 1e-5, n_coords: int = 10, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference partials.

    Coordinates are drawn without replacement from the parameters the
    example touches. The denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    if h <= 0:
        raise InputError("step h must be positive")
    prep = prepare(ex, model.dim)
    if n_coords <= 0:
        return 0.0
    g = grad(model, prep)
    coords = active_coordinates(prep)
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(coords), size=min(n_coords, len(coords)), replace=False)
    worst = 0.0
    with mpmath.workdps(50):
        f = _mp_loss_fn(model, prep)
        hm = mpmath.mpf(h)
        for k in picks:
            kind, j = coords[k]
            analytic = {"w": lambda: g.w[j], "u": lambda: g.u[j], "b": lambda: g.b, "c": lambda: g.c}[kind]()
            numeric = float((f((kind, j), hm) - f((kind, j), -hm)) / (2 * hm))
            denom = max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# -- persistence and serving --------------------------------------------------


def _sparse(v: np.ndarray) -> dict:
    nz = np.flatnonzero(v)
    return {"indices": nz.tolist(), "values": [float(x) for x in v[nz]]}


def model_to_json(model: ToyModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "dim": model.dim,
        "hash_version": HASH_VERSION,
        "lambda": model.lam,
        "b": float(model.b),
        "c": float(model.c),
        "w": _sparse(model.w),
        "u": _sparse(model.u),
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def save_model(model: ToyModel, path: Union[str, Path]) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def _dense(entry, dim: int, name: str) -> np.ndarray:
    if isinstance(entry, list):
        if len(entry) != dim:
            raise ModelLoadError(f"{name} has {len(entry)} entries, expected {dim}")
        return np.asarray(entry, dtype=float)
    if not isinstance(entry, dict):
        raise ModelLoadError(f"{name} must be a list or a sparse object")
    idx = np.asarray(entry.get("indices", []), dtype=np.int64)
    vals = np.asarray(entry.get("values", []), dtype=float)
    if idx.shape != vals.shape or (idx.size and (idx.min() < 0 or idx.max() >= dim)):
        raise ModelLoadError(f"{name} sparse encoding is inconsistent with dim {dim}")
    out = np.zeros(dim)
    out[idx] = vals
    return out


def load_model(path: Union[str, Path]) -> ToyModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelLoadError("model file must hold a JSON object")
    if doc.get("hash_version") != HASH_VERSION:
        raise ModelLoadError(f"unsupported hash_version {doc.get('hash_version')!r}")
    if doc.get("dim") != DIM:
        raise ModelLoadError(f"model dimension {doc.get('dim')!r} does not match feature space {DIM}")
    try:
        model = ToyModel(
            _dense(doc["w"], DIM, "w"),
            float(doc["b"]),
            _dense(doc["u"], DIM, "u"),
            float(doc["c"]),
            float(doc.get("lambda", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelLoadError):
            raise
        raise ModelLoadError(f"model file is missing or has bad fields: {exc}") from exc
    if not (np.all(np.isfinite(model.w)) and np.all(np.isfinite(model.u))):
        raise ModelLoadError("model weights must be finite")
    return model


class ToyModelScorer:
    """Serve a trained :class:`ToyModel` through the scorer contract."""

    name = "toy-model"

    def __init__(self, model: ToyModel):
        self.model = model

    def score(self, query: str, passage) -> ScoredPassage:
        if not query or not query.strip():
            raise InputError("query must be non-empty")
        text = passage.text if isinstance(passage, SegmentedPassage) else passage
        tokens = tokenize_for_scoring(text)
        if not tokens:
            return ScoredPassage(0.0, (), ())
        prep = _prepare_tokens(query, [text[t.start:t.end] for t in tokens], np.zeros(len(tokens)), 0.0, self.model.dim)
        p, s = forward(self.model, prep)
        p = np.clip(p, SERVE_CLIP, 1.0 - SERVE_CLIP)
        return ScoredPassage(s, tuple(tokens), tuple(float(x) for x in p))
