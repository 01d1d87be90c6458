"""Risk-word, risk-category and dictionary-category features.

Phrase frequencies count days, not occurrences: a phrase's value is the
fraction of a user's active days on which it appears at least once.
Matching is case-insensitive over whole tokens; multi-word phrases must
appear as a contiguous token run.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DomainError, InputFileError, ValidationError
from .ingest import Message, UserCorpus

_TOKEN_RE = re.compile(r"[^\W_]+(?:'[^\W_]+)*")


@lru_cache(maxsize=1 << 19)
def tokenize(text: str) -> tuple[str, ...]:
    """Lowercase tokens split on non-alphanumerics; word-internal apostrophes kept."""
    return tuple(_TOKEN_RE.findall(text.lower().replace("’", "'")))


@dataclass(frozen=True)
class RiskLexicon:
    phrases: tuple[tuple[str, ...], ...]
    phrase_categories: tuple[int, ...]
    categories: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.phrases)) != len(self.phrases):
            raise ValidationError("lexicon phrases must be unique")
        if any(not p for p in self.phrases):
            raise ValidationError("lexicon contains an empty phrase")
        used = set(self.phrase_categories)
        if used != set(range(len(self.categories))):
            raise ValidationError("every lexicon category needs at least one phrase")
        index: dict[str, list[int]] = {}
        for i, p in enumerate(self.phrases):
            index.setdefault(p[0], []).append(i)
        object.__setattr__(self, "_first_token", index)

    @classmethod
    def from_mapping(cls, categories: dict[str, list[str]]) -> "RiskLexicon":
        phrases, cats, names = [], [], []
        for ci, (name, members) in enumerate(categories.items()):
            names.append(name)
            for raw in members:
                phrases.append(tokenize(raw))
                cats.append(ci)
        return cls(tuple(phrases), tuple(cats), tuple(names))

    @property
    def phrase_count(self) -> int:
        return len(self.phrases)

    @property
    def category_count(self) -> int:
        return len(self.categories)

    @property
    def phrase_names(self) -> list[str]:
        return [" ".join(p) for p in self.phrases]

    def category_members(self, c: int) -> list[int]:
        return [i for i, cat in enumerate(self.phrase_categories) if cat == c]

    def occurrences(self, tokens: tuple[str, ...]) -> list[int]:
        """Phrase indices of every match in ``tokens``, by start position then lexicon order."""
        out = []
        n = len(tokens)
        for start, tok in enumerate(tokens):
            for i in self._first_token.get(tok, ()):
                p = self.phrases[i]
                if start + len(p) <= n and tokens[start:start + len(p)] == p:
                    out.append(i)
        return out


@dataclass(frozen=True)
class CategoryDictionary:
    names: tuple[str, ...]
    literals: tuple[frozenset, ...]
    stems: tuple[tuple[str, ...], ...]

    @classmethod
    def from_mapping(cls, mapping: dict[str, list[str]]) -> "CategoryDictionary":
        names, literals, stems = [], [], []
        for name, patterns in mapping.items():
            lit, st = set(), []
            for pat in patterns:
                if pat != pat.lower():
                    raise ValidationError(f"dictionary pattern {pat!r} must be lowercase")
                if "*" in pat[:-1]:
                    raise ValidationError(f"wildcard only allowed at the end: {pat!r}")
                if pat.endswith("*"):
                    st.append(pat[:-1])
                else:
                    lit.add(pat)
            if not lit and not st:
                raise ValidationError(f"dictionary category {name!r} is empty")
            names.append(name)
            literals.append(frozenset(lit))
            stems.append(tuple(sorted(st)))
        return cls(tuple(names), tuple(literals), tuple(stems))

    def matches(self, token: str, c: int) -> bool:
        return token in self.literals[c] or any(token.startswith(s) for s in self.stems[c])

    def membership(self, token: str) -> tuple[int, ...]:
        cache = self.__dict__.setdefault("_membership", {})
        hit = cache.get(token)
        if hit is None:
            hit = tuple(c for c in range(len(self.names)) if self.matches(token, c))
            cache[token] = hit
        return hit


def _read_json(path):
    try:
        with Path(path).open(encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputFileError(path, "file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputFileError(path, f"invalid JSON ({exc})") from exc


def load_lexicon(path=None) -> RiskLexicon:
    """Load ``{"categories": {name: [phrase, ...]}}``; the packaged placeholder when ``path`` is None."""
    if path is None:
        data = json.loads(resources.files("risktext.data").joinpath("lexicon.json").read_text("utf-8"))
    else:
        data = _read_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("categories"), dict):
        raise ValidationError("lexicon JSON needs a 'categories' object")
    return RiskLexicon.from_mapping(data["categories"])


def load_dictionary(path=None) -> CategoryDictionary:
    if path is None:
        data = json.loads(resources.files("risktext.data").joinpath("dictionary.json").read_text("utf-8"))
    else:
        data = _read_json(path)
    if not isinstance(data, dict):
        raise ValidationError("dictionary JSON must map category -> pattern list")
    return CategoryDictionary.from_mapping(data)


def _require_days(corpus: UserCorpus) -> int:
    if corpus.n_days == 0:
        raise DomainError(f"corpus for {corpus.user_id} has no days")
    return corpus.n_days


def word_day_frequency(corpus: UserCorpus, phrase) -> float:
    n_days = _require_days(corpus)
    target = tokenize(phrase) if isinstance(phrase, str) else tuple(phrase)
    if not target:
        return 0.0
    k = len(target)
    hits = 0
    for msgs in corpus.days.values():
        for msg in msgs:
            toks = tokenize(msg.text)
            if any(toks[i:i + k] == target for i in range(len(toks) - k + 1)):
                hits += 1
                break
    return hits / n_days


def _day_phrase_sets(corpus: UserCorpus, lexicon: RiskLexicon) -> list[set[int]]:
    out = []
    for msgs in corpus.days.values():
        found: set[int] = set()
        for msg in msgs:
            found.update(lexicon.occurrences(tokenize(msg.text)))
        out.append(found)
    return out


def riskword_features(corpus: UserCorpus, lexicon: RiskLexicon) -> np.ndarray:
    n_days = _require_days(corpus)
    counts = np.zeros(lexicon.phrase_count)
    for found in _day_phrase_sets(corpus, lexicon):
        for i in found:
            counts[i] += 1
    return counts / n_days


def riskcat_features(corpus: UserCorpus, lexicon: RiskLexicon) -> np.ndarray:
    n_days = _require_days(corpus)
    counts = np.zeros(lexicon.category_count)
    for found in _day_phrase_sets(corpus, lexicon):
        for c in {lexicon.phrase_categories[i] for i in found}:
            counts[c] += 1
    return counts / n_days


def dict_category_features(corpus: UserCorpus, dictionary: CategoryDictionary) -> np.ndarray:
    """Weighted mean over messages of per-category token proportions."""
    _require_days(corpus)
    k = len(dictionary.names)
    total = np.zeros(k)
    weight_sum = 0
    for msg, w in corpus.weighted_messages():
        weight_sum += w
        toks = tokenize(msg.text)
        if not toks:
            continue
        hits = np.zeros(k)
        for tok in toks:
            for c in dictionary.membership(tok):
                hits[c] += 1
        total += w * hits / len(toks)
    return total / weight_sum


def risk_message_partition(corpus: UserCorpus, lexicon: RiskLexicon) -> tuple[list[Message], float, list[str]]:
    """Risk messages (corpus order), weighted risk-message ratio, and the phrase stream.

    The stream lists every phrase occurrence, repeated per app weight.
    """
    names = lexicon.phrase_names
    risk, stream = [], []
    risk_w = total_w = 0
    for msg, w in corpus.weighted_messages():
        total_w += w
        occ = lexicon.occurrences(tokenize(msg.text))
        if occ:
            risk.append(msg)
            risk_w += w
            stream.extend([names[i] for i in occ] * w)
    ratio = risk_w / total_w if total_w else 0.0
    return risk, ratio, stream
