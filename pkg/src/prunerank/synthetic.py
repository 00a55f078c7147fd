"""Seeded synthetic datasets bundled for desk-scale experiments.

* :func:`separable_training_set` - pruning examples in which every token of
  a relevant sentence contains a 3-gram planted in the query and no token
  of an irrelevant sentence does.
* :func:`bilingual_qa_set` - English/Spanish QA records with five passages
  each, one of which holds the answer sentence among distractors.
"""

from __future__ import annotations

import random

from .evaluator import EvalRecord
from .labeler import TrainingExample

PLANTED_GRAMS = ("qzx", "xjv", "zqk", "kvq", "jxz", "vkj", "qjz", "xvk")
# No q, x, z, j, k or v: filler words can never contain a planted gram.
_FILLER_LETTERS = "abcdefghilmnoprstuwy"
WORDS_PER_SENTENCE = 5
N_FILLER_WORDS = 20


def _filler_word(rng: random.Random, lo: int = 3, hi: int = 7) -> str:
    return "".join(rng.choice(_FILLER_LETTERS) for _ in range(rng.randint(lo, hi)))


def _planted_word(rng: random.Random, gram: str) -> str:
    pre = "".join(rng.choice(_FILLER_LETTERS) for _ in range(rng.randint(0, 2)))
    post = "".join(rng.choice(_FILLER_LETTERS) for _ in range(rng.randint(0, 2)))
    return pre + gram + post


def separable_training_set(n: int = 200, seed: int = 0) -> list[TrainingExample]:
    """Linearly separable pruning data.

    The query is a planted 3-gram. Each example has ``k`` relevant and ``k``
    irrelevant sentences (``k`` in 1..3) of five words, so token labels are
    exactly balanced. Relevant words embed the query gram; irrelevant words
    come from a fixed vocabulary of filler words. The teacher score is
    ``2 + 0.25 * k``.
    """
    rng = random.Random(seed)
    fillers = [_filler_word(rng, 4, 8) for _ in range(N_FILLER_WORDS)]
    out = []
    for _ in range(n):
        gram = rng.choice(PLANTED_GRAMS)
        query = gram
        n_relevant = rng.randint(1, 3)
        labels = [1] * n_relevant + [0] * n_relevant
        rng.shuffle(labels)
        sentences = []
        for lab in labels:
            if lab:
                words = [_planted_word(rng, gram) for _ in range(WORDS_PER_SENTENCE)]
            else:
                words = [rng.choice(fillers) for _ in range(WORDS_PER_SENTENCE)]
            sentences.append(" ".join(words))
        teacher = 2.0 + 0.25 * n_relevant
        out.append(TrainingExample(query, "en", tuple(sentences), tuple(labels), teacher, "english-original"))
    return out


_SYLLABLES = ("ka", "lo", "mi", "ran", "te", "vor", "sel", "du", "bra", "nik", "pe", "tal", "gor", "ul", "fen")

# (query, answer sentence, entity-only distractor); {E} entity, {A} answer.
_TEMPLATES = {
    "en": [
        ("In which year did the {E} bridge open?", "The {E} bridge opened in the year {A}.", "The {E} bridge is painted dark red."),
        ("Who founded the city of {E}?", "{A} founded the city of {E}.", "Tourists often visit {E} during spring."),
        ("What is the capital city of the {E} region?", "The capital city of the {E} region is {A}.", "Rain falls often across {E}."),
    ],
    "es": [
        ("¿En qué año fue inaugurado el puente {E}?", "Puente {E} fue inaugurado el año {A}.", "Muchos turistas cruzan el puente {E}."),
        ("¿Quién fundó la antigua ciudad {E}?", "{A} fundó la antigua ciudad {E}.", "Hoy {E} tiene muchos mercados."),
        ("¿Qué montaña domina el valle {E}?", "Montaña {A} domina valle {E}.", "Los ríos de {E} llevan poca agua."),
    ],
}

_DISTRACTORS = {
    "en": [
        "Bananas are rich in potassium.",
        "Many birds migrate south in winter.",
        "Chess engines search millions of positions per second.",
        "Copper conducts electricity well.",
        "Honey never spoils when stored properly.",
        "Volcanic soil is very fertile.",
        "Some turtles live for over a century.",
        "Jazz emerged in New Orleans.",
        "Glaciers carve deep valleys over millennia.",
        "A marathon covers about forty-two kilometres.",
        "Octopuses have three hearts.",
        "Paper was invented long ago.",
    ],
    "es": [
        "Los plátanos contienen mucho potasio.",
        "Muchas aves migran hacia el sur.",
        "El cobre conduce bien la electricidad.",
        "La miel nunca se estropea.",
        "Algunas tortugas viven más de cien años.",
        "El ajedrez exige mucha concentración.",
        "Los glaciares esculpen valles profundos.",
        "Un maratón cubre unos cuarenta kilómetros.",
        "Los pulpos tienen tres corazones.",
        "El suelo volcánico es muy fértil.",
        "La lluvia favorece los cultivos.",
        "Los gatos duermen gran parte del día.",
    ],
}

_PEOPLE = ("Ferreira", "Ruel", "Okafor", "Horvat", "Sandoval", "Arden")


def _name(rng: random.Random) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3))).capitalize()


def _answer_for(template_idx: int, rng: random.Random) -> str:
    if template_idx == 0:
        return str(rng.randint(1820, 1999))
    if template_idx == 1:
        return rng.choice(_PEOPLE)
    return _name(rng)


def bilingual_qa_set(n: int = 100, seed: int = 0) -> list[EvalRecord]:
    """``n`` records alternating English and Spanish, five passages each."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        lang = ("en", "es")[i % 2]
        t_idx = rng.randrange(len(_TEMPLATES[lang]))
        q_tpl, a_tpl, d_tpl = _TEMPLATES[lang][t_idx]
        entity = _name(rng)
        answer = _answer_for(t_idx, rng)
        pool = _DISTRACTORS[lang]
        passages = []
        gold_sents = rng.sample(pool, rng.randint(2, 4))
        gold_sents.insert(rng.randint(0, len(gold_sents)), a_tpl.format(E=entity, A=answer))
        passages.append(" ".join(gold_sents))
        for _ in range(4):
            sents = rng.sample(pool, rng.randint(3, 5))
            if rng.random() < 0.5:
                sents.insert(rng.randint(0, len(sents)), d_tpl.format(E=entity))
            passages.append(" ".join(sents))
        rng.shuffle(passages)
        out.append(EvalRecord(q_tpl.format(E=entity), lang, tuple(passages), gold_answers=(answer,)))
    return out
