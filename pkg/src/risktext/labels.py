"""Survey responses to per-user binary labels, including AUDIT-C scoring.

Answers are 1-based option indices in the order the questionnaire lists
them. "Decline to answer" / "I don't know" answers, and missing answers,
exclude a user from the labels that depend on that question only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError

LABELS = ("binge_monthly", "auditc_high", "over5_partners", "takes_prep")
AUDITC_HIGH_THRESHOLD = 6


@dataclass(frozen=True)
class Question:
    qid: str
    options: tuple[str, ...]
    excluded: frozenset = frozenset()  # option indices that mean no usable answer

    @property
    def n_options(self) -> int:
        return len(self.options)


def _q(qid, options, excluded=()):
    return Question(qid, tuple(options), frozenset(excluded))


_YES_NO = ("Yes", "No", "Decline to answer")

# AUDIT-C items also accept a trailing "Decline to answer" (index 6).
QUESTIONS: dict[str, Question] = {q.qid: q for q in (
    _q("substances_3mo", ("Yes, methamphetamines", "Yes, injectable drugs not prescribed",
                          "Yes, used both", "Neither", "Decline to answer"), {5}),
    _q("treatment_3mo", _YES_NO, {3}),
    _q("inject_cocaine_3mo", _YES_NO, {3}),
    _q("inject_meth_3mo", _YES_NO, {3}),
    _q("share_equipment_3mo", _YES_NO, {3}),
    _q("inject_group_3mo", _YES_NO, {3}),
    _q("takes_prep", _YES_NO, {3}),
    _q("partners_3mo", (">10", "6-10", "1-5", "0", "Decline to answer"), {5}),
    _q("condomless_receptive_3mo", ("1 or more times", "0 times", "Decline to answer"), {3}),
    _q("hiv_pos_partners_3mo", ("More than 1 HIV+ male partners", "1 HIV+ male partner", "0",
                                "Don't know", "Decline to answer"), {4, 5}),
    _q("condomless_insertive_hivpos_3mo", ("5 or more times", "0-4 times", "Decline to answer"), {3}),
    _q("auditc_q1", ("Never", "Monthly or less", "2 to 4 times a month", "2 to 3 times a week",
                     "four or more times a week", "Decline to answer"), {6}),
    _q("auditc_q2", ("1-2", "3-4", "5-6", "7-9", "10 or more", "Decline to answer"), {6}),
    _q("auditc_q3", ("Never", "Less than monthly", "monthly", "weekly", "daily or almost daily",
                     "Decline to answer"), {6}),
)}

AUDITC_ITEMS = ("auditc_q1", "auditc_q2", "auditc_q3")
BINGE_POSITIVE = frozenset({3, 4, 5})       # monthly or more often
PARTNERS_POSITIVE = frozenset({1, 2})       # ">10", "6-10"
PARTNERS_NEGATIVE = frozenset({3, 4})
PREP_YES, PREP_NO = 1, 2


@dataclass(frozen=True)
class SurveyResponse:
    user_id: str
    question_id: str
    answer_index: int

    def __post_init__(self):
        q = QUESTIONS.get(self.question_id)
        if q is None:
            raise ValidationError(f"unknown question_id {self.question_id!r}")
        if not 1 <= self.answer_index <= q.n_options:
            raise ValidationError(
                f"{self.question_id}: answer_index {self.answer_index} outside 1..{q.n_options} (user {self.user_id})")


@dataclass
class LabelSet:
    """Per-user outcomes: 1 positive, 0 negative, None excluded."""

    user_id: str
    binge_monthly: int | None = None
    auditc_high: int | None = None
    over5_partners: int | None = None
    takes_prep: int | None = None
    answers: dict[str, int] = field(default_factory=dict)
    auditc_score: int | None = None

    def get(self, label: str) -> int | None:
        if label not in LABELS:
            raise KeyError(label)
        return getattr(self, label)


def score_audit_c(q1: int, q2: int, q3: int) -> int:
    """AUDIT-C total, 0-12: each item scores ``index - 1``."""
    for name, v in (("auditc_q1", q1), ("auditc_q2", q2), ("auditc_q3", q3)):
        if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= 5:
            raise ValidationError(f"{name}: answer index {v!r} outside 1..5")
    return (q1 - 1) + (q2 - 1) + (q3 - 1)


def _usable(answers: dict[str, int], qid: str) -> int | None:
    idx = answers.get(qid)
    if idx is None or idx in QUESTIONS[qid].excluded:
        return None
    return idx


def labels_from_answers(user_id: str, answers: dict[str, int]) -> LabelSet:
    out = LabelSet(user_id, answers=dict(answers))
    q3 = _usable(answers, "auditc_q3")
    if q3 is not None:
        out.binge_monthly = int(q3 in BINGE_POSITIVE)
    items = [_usable(answers, q) for q in AUDITC_ITEMS]
    if all(i is not None for i in items):
        out.auditc_score = score_audit_c(*items)
        out.auditc_high = int(out.auditc_score >= AUDITC_HIGH_THRESHOLD)
    partners = _usable(answers, "partners_3mo")
    if partners is not None:
        out.over5_partners = int(partners in PARTNERS_POSITIVE)
    prep = _usable(answers, "takes_prep")
    if prep is not None:
        out.takes_prep = int(prep == PREP_YES)
    return out


def derive_labels(responses) -> dict[str, LabelSet]:
    answers: dict[str, dict[str, int]] = {}
    conflicts = set()
    for r in responses:
        user = answers.setdefault(r.user_id, {})
        prev = user.get(r.question_id)
        if prev is not None and prev != r.answer_index:
            conflicts.add(r.user_id)
        user[r.question_id] = r.answer_index
    if conflicts:
        raise ValidationError(f"conflicting duplicate survey answers for users: {sorted(conflicts)}")
    return {u: labels_from_answers(u, a) for u, a in sorted(answers.items())}


def read_survey_csv(path) -> list[SurveyResponse]:
    """Rows with an empty or ``NA`` answer are treated as missing."""
    out = []
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "question_id", "answer_index"} - set(reader.fieldnames or ())
        if missing:
            raise ValidationError(f"{path}: survey CSV lacks columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            raw = (row["answer_index"] or "").strip()
            if raw in ("", "NA", "na"):
                continue
            try:
                idx = int(raw)
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: answer_index {raw!r} is not an integer") from None
            out.append(SurveyResponse(row["user_id"].strip(), row["question_id"].strip(), idx))
    return out


def write_survey_csv(path, responses) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("user_id", "question_id", "answer_index"))
        for r in responses:
            writer.writerow((r.user_id, r.question_id, r.answer_index))


def _fmt(v: int | None) -> str:
    return "NA" if v is None else str(v)


def write_labels_csv(path, labels: dict[str, LabelSet]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("user_id", *LABELS))
        for user in sorted(labels):
            ls = labels[user]
            writer.writerow((user, *(_fmt(ls.get(name)) for name in LABELS)))


def read_labels_csv(path) -> dict[str, LabelSet]:
    out = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {name: (None if row[name] == "NA" else int(row[name])) for name in LABELS}
            out[row["user_id"]] = LabelSet(row["user_id"], **vals)
    return out
