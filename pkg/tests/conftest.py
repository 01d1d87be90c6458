from __future__ import annotations

from datetime import date, datetime, timedelta, timezone

import pytest

from risktext.ingest import Message, UserCorpus
from risktext.lexfeat import RiskLexicon

T0 = datetime(2023, 1, 1, 12, 0, 0, tzinfo=timezone.utc)


def msg(text, day=0, user="u1", app="instagram", second=0):
    return Message(user, app, T0 + timedelta(days=day, seconds=second), text)


def corpus_from(day_texts, user="u1", app="instagram", weights=None):
    """``day_texts`` maps day offset -> list of texts (or (text, app) pairs)."""
    days = {}
    for offset in sorted(day_texts):
        msgs = []
        for k, item in enumerate(day_texts[offset]):
            text, a = item if isinstance(item, tuple) else (item, app)
            msgs.append(msg(text, offset, user, a, second=k))
        days[(T0 + timedelta(days=offset)).date()] = msgs
    return UserCorpus(user, days, dict(weights or {}))


@pytest.fixture
def small_lexicon():
    return RiskLexicon.from_mapping({
        "alcohol": ["beer", "vodka", "wasted"],
        "drugs": ["meth", "molly", "party and play"],
        "sex": ["hookup", "bareback"],
    })


@pytest.fixture
def reference_day():
    return date(2023, 1, 1)
