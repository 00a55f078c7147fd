import random

import pytest
from hypothesis import given, settings, strategies as st

from prunerank.errors import EmptyBatch, InputError
from prunerank.pruner import (
    PrunedPassage,
    PruningOptions,
    batch_compression,
    binarize,
    decide_sentences,
    dslr_decide,
    dslr_prune,
    prune,
    prune_many,
    prune_scored,
    reconstruct,
)
from prunerank.scorer import LexicalScorer, ScoredPassage, tokenize_for_scoring
from prunerank.segmenter import from_sentences, segment

LEX = LexicalScorer()


class FixedScorer:
    """Every token gets the same value; passage score is that value."""

    def __init__(self, value):
        self.value = value

    def score(self, query, passage):
        text = passage if isinstance(passage, str) else passage.text
        toks = tuple(tokenize_for_scoring(text))
        return ScoredPassage(self.value if toks else 0.0, toks, tuple(self.value for _ in toks))


def test_binarize():
    vals = [0.02, 0.5, 0.98]
    assert binarize(vals, 0.0) == [1, 1, 1]
    assert binarize(vals, 1.0) == [0, 0, 0]
    assert binarize([0.3, 0.7], 0.5) == [0, 1]
    assert binarize([0.5], 0.5) == [1]  # tie keeps the token


def test_decide_sentences():
    assert decide_sentences([1, 1, 0], [0, 0, 0], 1) == [True]
    assert decide_sentences([1, 0], [0, 0], 1) == [False]
    assert decide_sentences([1], [0], 2) == [True, False]
    with pytest.raises(InputError):
        decide_sentences([1], [], 1)


def test_options_validation():
    with pytest.raises(InputError):
        PruningOptions(threshold=1.5)
    with pytest.raises(InputError):
        PruningOptions(basis="words")


PASSAGE = "Paris is the capital of France. Bananas are yellow."


def test_prune_threshold_edges():
    p = segment(PASSAGE)
    lo = prune("capital france", p, LEX, PruningOptions(0.0))
    assert lo.kept == (0, 1) and lo.compression == 0.0 and lo.pruned_text == PASSAGE
    hi = prune("capital france", p, LEX, PruningOptions(1.0))
    assert hi.kept == () and hi.compression == 1.0 and hi.pruned_text == ""
    first = prune("capital france", p, LEX, PruningOptions(1.0, always_keep_first=True))
    assert first.kept == (0,) and first.pruned_text == "Paris is the capital of France."


def test_prune_lexical_hand_computed():
    # Sentence 0 tokens: Paris is the capital of France . -> only "capital"
    # and "France" reach 0.98, 2 of 7 relevant, so it is pruned. Sentence 1
    # has no overlap at all.
    p = segment(PASSAGE)
    out = prune("capital france", p, LEX, PruningOptions(0.5))
    assert out.kept == ()
    # A sentence made mostly of query words survives.
    out = prune("capital france", segment("Capital France. Bananas are yellow."), LEX, PruningOptions(0.5))
    assert out.kept == (0,)
    assert out.pruned_text == "Capital France."
    assert out.compression == pytest.approx(1 - 15 / (15 + 19))


def test_compression_token_basis():
    p = segment("Capital France. Bananas are yellow.")
    out = prune("capital france", p, LEX, PruningOptions(0.5, basis="tokens"))
    assert out.compression == pytest.approx(1 - 3 / 7)


def test_reconstruct_joining():
    p = segment("One.  Two.\nThree.")
    assert reconstruct(p, [0, 2]) == "One. Three."
    cjk = segment("你好。世界！再见。")
    assert reconstruct(cjk, [0, 1]) == "你好。世界！"
    assert reconstruct(cjk, [0, 2]) == "你好。再见。"
    assert reconstruct(p, []) == ""


def test_empty_passage():
    out = prune("q", segment("   "), LEX, PruningOptions(0.0))
    assert out == PrunedPassage((), "", 0.0, 0.0)


def test_dslr_examples():
    p = segment("Only sentence here.")
    assert dslr_prune("q", p, FixedScorer(0.7), 0.5).kept == (0,)
    p2 = segment("One. Two. Three.")
    assert dslr_prune("q", p2, FixedScorer(0.5), 0.5).kept == ()
    p3 = segment("Capital France. Bananas are yellow.")
    out = dslr_prune("capital france", p3, LEX, 0.5)
    assert out.kept == (0,)
    assert out.passage_score == pytest.approx((0.98 * 2 + 0.02) / 3)


def test_dslr_decide_rules():
    p = segment("A b. C d.")
    assert dslr_decide([0.6, 0.4], p, 0.5).kept == (0,)
    assert dslr_decide([], segment(""), 0.5).passage_score == 0.0
    with pytest.raises(InputError):
        dslr_decide([0.6, 0.4], p, 0.5, basis="tokens")


def test_batch_compression():
    mk = lambda c: PrunedPassage((), "", c, 0.0)
    assert batch_compression([mk(0.0), mk(1.0)]) == 0.5
    assert batch_compression([mk(0.0), mk(0.0)]) == 0.0
    assert batch_compression([mk(0.25), mk(0.5), mk(0.75)]) == pytest.approx(0.5)
    with pytest.raises(EmptyBatch):
        batch_compression([])


def test_prune_many_order():
    passages = [segment(f"Capital number {i}. Other text here.") for i in range(9)]
    serial = prune_many("capital", passages, LEX, PruningOptions(0.3))
    parallel = prune_many("capital", passages, LEX, PruningOptions(0.3), workers=4)
    assert serial == parallel


def test_dslr_engine_agreement_on_degenerate_input():
    p = segment("Some single sentence with words.")
    eps = 1e-9
    for v in [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95]:
        scorer = FixedScorer(v)
        for tau in [i / 20 for i in range(1, 21)]:
            a = prune("q", p, scorer, PruningOptions(tau)).kept
            b = dslr_prune("q", p, scorer, tau - eps).kept
            assert a == b, (v, tau)


words = st.sampled_from(["capital", "France", "Paris", "banana", "yellow", "river", "of", "the", "capitol"])


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.lists(words, min_size=1, max_size=6), min_size=1, max_size=5),
    st.lists(words, min_size=1, max_size=3),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_properties(sentences, query_words, t1, t2):
    t1, t2 = sorted((t1, t2))
    p = from_sentences([" ".join(s) + "." for s in sentences])
    q = " ".join(query_words)
    a = prune(q, p, LEX, PruningOptions(t1))
    b = prune(q, p, LEX, PruningOptions(t2))
    assert set(b.kept) <= set(a.kept)
    assert b.compression >= a.compression
    texts = p.sentence_texts
    assert b.pruned_text == " ".join(texts[i] for i in b.kept)
    assert 0.0 <= b.compression <= 1.0
