"""Rule-based multilingual sentence segmentation with character offsets.

Offsets are indices into the Python ``str`` (Unicode scalar values), so the
same spans come out regardless of how the text was encoded on disk.

Rules, in order of application:

* a sentence ends after a run of terminator characters (plus any closing
  quotes/brackets directly after it) that is followed by whitespace or the
  end of the text;
* the whitespace requirement is dropped when the terminator is an
  ideographic/fullwidth form (``。！？``) or the character before it belongs
  to a no-space script (Han, Hiragana, Katakana by default);
* a single ``.`` closing a listed abbreviation never ends a sentence;
* a terminator strictly inside a balanced quote or bracket pair never ends
  a sentence.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

from .errors import InconsistentSpans

logger = logging.getLogger(__name__)

RULES_VERSION = "1"

# Used when rules/segmenter.rules cannot be found next to the package.
_EMBEDDED_RULES = """\
TERMINATOR .
TERMINATOR !
TERMINATOR ?
TERMINATOR …
TERMINATOR 。
TERMINATOR ！
TERMINATOR ？
TERMINATOR ؟
TERMINATOR ।
TERMINATOR ॥
ABBREV Mr.
ABBREV Mrs.
ABBREV Ms.
ABBREV Dr.
ABBREV Prof.
ABBREV Sr.
ABBREV Jr.
ABBREV St.
ABBREV vs.
ABBREV e.g.
ABBREV i.e.
ABBREV cf.
ABBREV al.
ABBREV approx.
ABBREV Fig.
ABBREV No.
ABBREV Inc.
ABBREV Ltd.
ABBREV Jan.
ABBREV Feb.
ABBREV Aug.
ABBREV Sept.
ABBREV Oct.
ABBREV Nov.
ABBREV Dec.
ABBREV U.S.
ABBREV U.K.
ABBREV Sra.
ABBREV Dra.
ABBREV Mme.
ABBREV Mlle.
ABBREV Sig.
ABBREV z.B.
ABBREV bzw.
ABBREV usw.
ABBREV ca.
ABBREV p.ej.
ABBREV т.е.
ABBREV т.д.
ABBREV г.
NOSPACE_SCRIPT Han
NOSPACE_SCRIPT Hiragana
NOSPACE_SCRIPT Katakana
"""

SCRIPT_RANGES: dict[str, tuple[tuple[int, int], ...]] = {
    "Han": (
        (0x2E80, 0x2FDF),
        (0x3005, 0x3007),
        (0x3021, 0x3029),
        (0x3038, 0x303B),
        (0x3400, 0x4DBF),
        (0x4E00, 0x9FFF),
        (0xF900, 0xFAFF),
        (0x20000, 0x2FA1F),
    ),
    "Hiragana": ((0x3041, 0x309F),),
    "Katakana": ((0x30A0, 0x30FF), (0x31F0, 0x31FF), (0xFF66, 0xFF9F)),
    "Hangul": ((0x1100, 0x11FF), (0x3130, 0x318F), (0xAC00, 0xD7AF)),
    "Thai": ((0x0E00, 0x0E7F),),
    "Lao": ((0x0E80, 0x0EFF),),
    "Tibetan": ((0x0F00, 0x0FFF),),
    "Myanmar": ((0x1000, 0x109F),),
    "Khmer": ((0x1780, 0x17FF),),
}

# Terminators in these blocks (CJK punctuation, fullwidth forms) need no
# following whitespace.
_IDEOGRAPHIC_PUNCT = ((0x3000, 0x303F), (0xFF00, 0xFFEF))

_PAIRS = {
    "(": ")",
    "[": "]",
    "{": "}",
    "“": "”",
    "«": "»",
    "「": "」",
    "『": "』",
    "（": "）",
    "【": "】",
    "《": "》",
}
_CLOSERS = frozenset(_PAIRS.values()) | {'"', "'", "’"}
_OPENERS_STRIP = "".join(_PAIRS) + "\"'‘„"


class SentenceSpan(NamedTuple):
    start: int
    end: int


class TokenSpan(NamedTuple):
    start: int
    end: int
    is_special: bool = False


@dataclass(frozen=True)
class SegmentedPassage:
    text: str
    sentences: tuple[SentenceSpan, ...]
    language_hint: Optional[str] = None

    @property
    def sentence_texts(self) -> list[str]:
        return [self.text[s.start:s.end] for s in self.sentences]

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class RuleSet:
    terminators: frozenset[str]
    abbreviations: frozenset[str]
    nospace_scripts: tuple[str, ...]
    _ranges: tuple[tuple[int, int], ...] = field(default=(), compare=False, repr=False)

    def in_nospace_script(self, ch: str) -> bool:
        cp = ord(ch)
        return any(lo <= cp <= hi for lo, hi in self._ranges)


def parse_rules(source: str) -> RuleSet:
    """Parse the directive format of ``segmenter.rules``.

    Blank lines and ``#`` comments are skipped. Unknown directives and
    unknown script names raise ``ValueError``.
    """
    terminators: set[str] = set()
    abbreviations: set[str] = set()
    scripts: list[str] = []
    for lineno, raw in enumerate(source.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        directive, _, arg = line.partition(" ")
        arg = arg.strip()
        if not arg:
            raise ValueError(f"rules line {lineno}: missing argument for {directive}")
        if directive == "TERMINATOR":
            if len(arg) != 1:
                raise ValueError(f"rules line {lineno}: terminator must be one character")
            terminators.add(arg)
        elif directive == "ABBREV":
            abbreviations.add(arg.casefold())
        elif directive == "NOSPACE_SCRIPT":
            if arg not in SCRIPT_RANGES:
                raise ValueError(f"rules line {lineno}: unknown script {arg!r}")
            if arg not in scripts:
                scripts.append(arg)
        else:
            raise ValueError(f"rules line {lineno}: unknown directive {directive!r}")
    ranges = tuple(r for name in scripts for r in SCRIPT_RANGES[name])
    return RuleSet(frozenset(terminators), frozenset(abbreviations), tuple(scripts), ranges)


def load_rules(path: str | Path | None = None) -> RuleSet:
    """Load a rule file; ``None`` means the copy shipped with the package.

    Falls back to the embedded rules when the shipped file is missing.
    """
    if path is not None:
        return parse_rules(Path(path).read_text(encoding="utf-8"))
    return default_rules()


@lru_cache(maxsize=1)
def default_rules() -> RuleSet:
    try:
        text = resources.files("prunerank").joinpath("rules/segmenter.rules").read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        logger.debug("segmenter.rules not found, using embedded rules")
        text = _EMBEDDED_RULES
    return parse_rules(text)


def embedded_rules() -> RuleSet:
    return parse_rules(_EMBEDDED_RULES)


def _balanced_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    stack: list[tuple[str, int]] = []
    closer_to_opener = {v: k for k, v in _PAIRS.items()}
    for i, ch in enumerate(text):
        if ch == '"':
            for depth in range(len(stack) - 1, -1, -1):
                if stack[depth][0] == '"':
                    pairs.append((stack[depth][1], i))
                    del stack[depth:]
                    break
            else:
                stack.append((ch, i))
        elif ch in _PAIRS:
            stack.append((ch, i))
        elif ch in closer_to_opener:
            want = closer_to_opener[ch]
            for depth in range(len(stack) - 1, -1, -1):
                if stack[depth][0] == want:
                    pairs.append((stack[depth][1], i))
                    del stack[depth:]
                    break
    return pairs


def _is_ideographic_punct(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _IDEOGRAPHIC_PUNCT)


def _is_boundary(text, start, run_start, run_end, rules, pairs) -> bool:
    n = len(text)
    if run_end < n and not text[run_end].isspace():
        nospace = any(_is_ideographic_punct(c) for c in text[run_start:run_end]) or (
            run_start > start and rules.in_nospace_script(text[run_start - 1])
        )
        if not nospace:
            return False
    if text[run_start:run_end].rstrip("".join(_CLOSERS)) == ".":
        word_start = run_start
        while word_start > start and not text[word_start - 1].isspace():
            word_start -= 1
        word = text[word_start:run_start + 1].lstrip(_OPENERS_STRIP)
        if word.casefold() in rules.abbreviations:
            return False
    for o, c in pairs:
        if o < run_start and c >= run_end:
            return False
    return True


def segment(text: str, language_hint: Optional[str] = None, rules: Optional[RuleSet] = None) -> SegmentedPassage:
    """Split ``text`` into sentence spans.

    Total: empty or all-whitespace input gives an empty sentence list.
    ``language_hint`` is carried through untouched; the rules are the same
    for every language.
    """
    rules = rules or default_rules()
    terms = rules.terminators
    n = len(text)
    pairs = _balanced_pairs(text)
    spans: list[SentenceSpan] = []
    start: Optional[int] = None
    i = 0
    while i < n:
        ch = text[i]
        if start is None:
            if ch.isspace():
                i += 1
                continue
            start = i
            # Quote/bracket pairing restarts at a sentence start whenever a
            # pair reaches across it, so a sentence segments the same way
            # with or without its neighbours.
            if any(o < start <= c for o, c in pairs):
                pairs = [(o + start, c + start) for o, c in _balanced_pairs(text[start:])]
        if ch in terms:
            j = i
            while j < n and text[j] in terms:
                j += 1
            while j < n and text[j] in _CLOSERS:
                j += 1
            if _is_boundary(text, start, i, j, rules, pairs):
                spans.append(SentenceSpan(start, j))
                start = None
            i = j
            continue
        i += 1
    if start is not None:
        end = n
        while end > start and text[end - 1].isspace():
            end -= 1
        spans.append(SentenceSpan(start, end))
    return SegmentedPassage(text, tuple(spans), language_hint)


def from_sentences(sentences: Sequence[str], language_hint: Optional[str] = None, sep: str = " ") -> SegmentedPassage:
    """Build a passage from pre-split sentences, keeping their boundaries.

    Sentences are stripped; empty ones are dropped.
    """
    parts: list[str] = []
    spans: list[SentenceSpan] = []
    pos = 0
    for s in sentences:
        s = s.strip()
        if not s:
            continue
        if parts:
            parts.append(sep)
            pos += len(sep)
        spans.append(SentenceSpan(pos, pos + len(s)))
        parts.append(s)
        pos += len(s)
    return SegmentedPassage("".join(parts), tuple(spans), language_hint)


def align_tokens(
    tokens: Sequence[TokenSpan],
    sentences: Sequence[SentenceSpan],
    text: Optional[str] = None,
) -> list[int]:
    """Map every content token to the index of its sentence.

    A token belongs to the last sentence starting at or before its start
    offset, so tokens straddling a boundary or sitting in an inter-sentence
    gap go to the earlier sentence. Special tokens are skipped.

    A content token starting before the first sentence is only accepted when
    ``text`` is given and the token covers whitespace only; it is then
    assigned to sentence 0. Otherwise ``InconsistentSpans`` is raised.
    """
    starts = [s.start for s in sentences]
    out: list[int] = []
    for tok in tokens:
        if tok.is_special:
            continue
        idx = bisect.bisect_right(starts, tok.start) - 1
        if idx < 0:
            if starts and text is not None and not text[tok.start:max(tok.end, tok.start)].strip():
                idx = 0
            else:
                raise InconsistentSpans(
                    f"token [{tok.start},{tok.end}) is not covered by any sentence"
                )
        out.append(idx)
    return out
