import math

import numpy as np
import pytest

from prunerank.errors import EmptyDataset, EmptyExample, ModelLoadError
from prunerank.labeler import TrainingExample
from prunerank.synthetic import separable_training_set
from prunerank.trainer import (
    DIM,
    ToyModel,
    ToyModelScorer,
    TrainConfig,
    feature_indices,
    finite_diff_check,
    fnv1a64,
    forward,
    grad,
    load_model,
    loss,
    model_to_json,
    save_model,
    train,
)

EX = TrainingExample("capital of france", "en", ("Paris is the capital.", "Bananas are yellow."), (1, 0), 0.8)


def random_model(seed, scale=0.5):
    rng = np.random.default_rng(seed)
    m = ToyModel.zeros()
    m.w = rng.normal(0, scale, DIM)
    m.u = rng.normal(0, scale, DIM)
    m.b, m.c = float(rng.normal()), float(rng.normal())
    return m


def test_fnv1a64_reference_values():
    # published FNV-1a 64-bit test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_features_normalized_and_deterministic():
    idx = feature_indices("capital", "paris")
    assert list(idx) == sorted(set(idx.tolist()))
    assert np.array_equal(idx, feature_indices("capital", "paris"))
    assert np.all((0 <= idx) & (idx < DIM))


def test_forward_zero_model():
    p, s = forward(ToyModel.zeros(), EX)
    assert np.all(p == 0.5) and s == 0.0
    p2, s2 = forward(ToyModel.zeros(), EX)
    assert np.array_equal(p, p2) and s == s2


def test_forward_monotone_in_bias():
    m = ToyModel.zeros()
    p0, _ = forward(m, EX)
    m.b = 5.0
    p5, _ = forward(m, EX)
    assert np.all(p5 > p0)


def test_empty_example():
    with pytest.raises(EmptyExample):
        forward(ToyModel.zeros(), TrainingExample("q", "en", (), (), 0.0))


def test_loss_examples():
    zero_teacher = TrainingExample("q", "en", ("a b c",), (1,), 0.0)
    assert loss(ToyModel.zeros(), zero_teacher) == pytest.approx(math.log(2), abs=1e-15)
    m = random_model(1)
    m0 = m.copy()
    m0.lam = 0.0
    _, s = forward(m, EX)
    assert loss(m, EX) == pytest.approx(loss(m0, EX) + m.lam * (s - EX.teacher_score) ** 2, abs=1e-12)


def test_loss_vanishes_when_saturated():
    ex = TrainingExample("q", "en", ("a b",), (1,), 0.0)
    m = ToyModel.zeros()
    m.b = 40.0
    assert 0.0 <= loss(m, ex) < 1e-6


def test_grad_examples():
    ex = TrainingExample("q", "en", ("a b c",), (1,), 0.0)
    g = grad(ToyModel.zeros(), ex)
    assert g.b == pytest.approx(-0.5)
    m = random_model(2)
    _, s = forward(m, EX)
    m.c += EX.teacher_score - s
    g = grad(m, EX)
    assert abs(g.c) < 1e-12 and np.max(np.abs(g.u)) < 1e-12


def test_finite_diff_examples():
    assert finite_diff_check(ToyModel.zeros(), EX, n_coords=20) < 1e-6
    m = random_model(3)
    assert finite_diff_check(m, EX, h=1e-5) < 1e-4
    assert finite_diff_check(m, EX, h=1e-5) <= finite_diff_check(m, EX, h=1e-2)
    assert finite_diff_check(m, EX, n_coords=0) == 0.0


def test_finite_diff_catches_wrong_gradient(monkeypatch):
    import prunerank.trainer as tr

    real = tr.grad

    def broken(model, ex):
        g = real(model, ex)
        g.b *= 1.01
        return g

    monkeypatch.setattr(tr, "grad", broken)
    coords_all = 10**6
    assert tr.finite_diff_check(random_model(4), EX, n_coords=coords_all) > 1e-3


def test_train_zero_lr_is_flat():
    data = separable_training_set(20, seed=1)
    model, hist = train(data, TrainConfig(epochs=3, learning_rate=0.0))
    assert np.all(model.w == 0) and model.b == 0.0
    assert hist[0] == hist[1] == hist[2]


def test_train_deterministic():
    data = separable_training_set(40, seed=2)
    cfg = TrainConfig(epochs=2, batch_size=8, seed=11)
    (m1, h1), (m2, h2) = train(data, cfg), train(data, cfg)
    assert h1 == h2 and model_to_json(m1) == model_to_json(m2)
    m3, _ = train(data, TrainConfig(epochs=2, batch_size=8, seed=12))
    assert model_to_json(m3) != model_to_json(m1)


def test_train_errors():
    with pytest.raises(EmptyDataset):
        train([])
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_model_file_round_trip(tmp_path):
    m = random_model(5)
    m.w[np.abs(m.w) < 1.0] = 0.0
    p = tmp_path / "m.json"
    save_model(m, p)
    back = load_model(p)
    assert np.array_equal(back.w, m.w) and np.array_equal(back.u, m.u)
    assert (back.b, back.c, back.lam) == (m.b, m.c, m.lam)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(dim=1024),
        lambda d: d.update(hash_version="md5"),
        lambda d: d.pop("b"),
        lambda d: d.update(w={"indices": [DIM], "values": [1.0]}),
        lambda d: d.update(w=[0.0, 1.0]),
    ],
)
def test_model_load_validation(tmp_path, mutate):
    import json

    doc = json.loads(model_to_json(ToyModel.zeros()))
    mutate(doc)
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(ModelLoadError):
        load_model(p)


def test_model_load_unreadable(tmp_path):
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "missing.json")
    (tmp_path / "junk").write_text("{")
    with pytest.raises(ModelLoadError):
        load_model(tmp_path / "junk")


def test_trained_model_as_scorer():
    data = separable_training_set(100, seed=0)
    model, _ = train(data, TrainConfig(epochs=5))
    scorer = ToyModelScorer(model)
    ex = data[0]
    relevant = ex.sentences[ex.sentence_labels.index(1)]
    irrelevant = ex.sentences[ex.sentence_labels.index(0)]
    hi = scorer.score(ex.query, relevant)
    lo = scorer.score(ex.query, irrelevant)
    assert min(hi.token_values) > 0.5 > max(lo.token_values)
