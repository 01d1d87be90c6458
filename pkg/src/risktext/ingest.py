"""Parse app exports into canonical messages and build per-user corpora.

Every export adapter (CSV, JSON records, HTML table) normalizes to the same
canonical row ``user_id,app,sent_at,text``. Only messages sent by the
account owner are kept; timestamps are normalized to UTC.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import statistics
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from html.parser import HTMLParser
from pathlib import Path

from .errors import ConfigError, InputFileError, ValidationError

logger = logging.getLogger(__name__)

APPS = ("grindr", "grindr_profile_note", "tinder", "instagram", "snapchat", "twitter", "reddit", "facebook")
FORMATS = ("csv", "json_records", "html_table")
CANONICAL_HEADER = ("user_id", "app", "sent_at", "text")
EXCLUSION_HEADER = ("user_id", "reason", "detail")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

_COLUMN_ALIASES = {
    "user_id": ("user_id", "user", "userid", "sender_id", "author", "owner_id"),
    "sent_at": ("sent_at", "timestamp", "datetime", "date", "time", "created_at"),
    "text": ("text", "message", "content", "body"),
    "direction": ("direction", "type", "is_sent", "from_me", "outgoing"),
    "app": ("app",),
}
_SENT_VALUES = {"sent", "outgoing", "out", "true", "1", "yes", "self"}
_RECEIVED_VALUES = {"received", "incoming", "in", "false", "0", "no", "other"}
_EXTRA_TIME_FORMATS = ("%m/%d/%Y %H:%M:%S", "%m/%d/%Y %H:%M", "%b %d, %Y, %I:%M %p", "%d %b %Y %H:%M:%S")


@dataclass(frozen=True, slots=True)
class Message:
    user_id: str
    app: str
    sent_at: datetime
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("message text is empty")
        if self.app not in APPS:
            raise ValidationError(f"unknown app {self.app!r}")

    @property
    def day(self) -> date:
        return self.sent_at.date()


@dataclass
class ParseStats:
    rows_read: int = 0
    parsed: int = 0
    received: int = 0
    empty_text: int = 0
    malformed: int = 0

    @property
    def dropped(self) -> int:
        return self.received + self.empty_text + self.malformed

    def merge(self, other: "ParseStats") -> None:
        for name in ("rows_read", "parsed", "received", "empty_text", "malformed"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class IngestConfig:
    retention_days: int = 183
    min_days: int = 30
    min_messages: int = 1000
    excluded_apps: frozenset = frozenset({"facebook"})
    app_weights: dict = field(default_factory=lambda: {"grindr": 2})
    reference_date: date | None = None

    def __post_init__(self):
        self.excluded_apps = frozenset(self.excluded_apps)
        for name in ("retention_days", "min_days", "min_messages"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"IngestConfig.{name} must be positive")
        unknown = (set(self.excluded_apps) | set(self.app_weights)) - set(APPS)
        if unknown:
            raise ConfigError(f"unknown apps in IngestConfig: {sorted(unknown)}")
        if any(int(w) < 1 for w in self.app_weights.values()):
            raise ConfigError("app weights must be >= 1")
        self.app_weights = {a: int(w) for a, w in self.app_weights.items()}
        if isinstance(self.reference_date, str):
            self.reference_date = date.fromisoformat(self.reference_date)

    def weight(self, app: str) -> int:
        return self.app_weights.get(app, 1)

    @classmethod
    def from_dict(cls, data: dict) -> "IngestConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown ingest config fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "retention_days": self.retention_days,
            "min_days": self.min_days,
            "min_messages": self.min_messages,
            "excluded_apps": sorted(self.excluded_apps),
            "app_weights": dict(sorted(self.app_weights.items())),
            "reference_date": self.reference_date.isoformat() if self.reference_date else None,
        }


@dataclass
class UserCorpus:
    user_id: str
    days: dict[date, list[Message]]
    weights: dict[str, int] = field(default_factory=dict)

    def weight(self, app: str) -> int:
        return self.weights.get(app, 1)

    def messages(self):
        for msgs in self.days.values():
            yield from msgs

    def weighted_messages(self):
        """Yield ``(message, replication_weight)`` in corpus order."""
        for msg in self.messages():
            yield msg, self.weight(msg.app)

    def replicated_texts(self, messages=None) -> list[str]:
        msgs = self.messages() if messages is None else messages
        out = []
        for msg in msgs:
            out.extend([msg.text] * self.weight(msg.app))
        return out

    @property
    def n_days(self) -> int:
        return len(self.days)

    @property
    def n_messages(self) -> int:
        return sum(len(m) for m in self.days.values())


@dataclass(frozen=True)
class Exclusion:
    user_id: str
    reason: str
    detail: str


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def parse_timestamp(value) -> datetime | None:
    """Parse ISO-8601 strings or epoch seconds/milliseconds to second-precision UTC."""
    if value is None:
        return None
    if isinstance(value, bool):
        return None
    try:
        if isinstance(value, (int, float)):
            num = float(value)
        else:
            s = str(value).strip()
            if not s:
                return None
            try:
                num = float(s)
            except ValueError:
                num = None
            if num is None:
                iso = s[:-1] + "+00:00" if s.endswith(("Z", "z")) else s
                try:
                    dt = datetime.fromisoformat(iso)
                except ValueError:
                    dt = None
                    for fmt in _EXTRA_TIME_FORMATS:
                        try:
                            dt = datetime.strptime(s, fmt)
                            break
                        except ValueError:
                            continue
                    if dt is None:
                        return None
                if dt.tzinfo is None:
                    dt = dt.replace(tzinfo=timezone.utc)
                return dt.astimezone(timezone.utc).replace(microsecond=0)
        if num != num or num in (float("inf"), float("-inf")):
            return None
        if abs(num) > 1e11:
            num /= 1000.0
        return datetime.fromtimestamp(int(num), tz=timezone.utc)
    except (OverflowError, OSError, ValueError):
        return None


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(TIMESTAMP_FORMAT)


def _resolve_columns(keys) -> dict[str, str]:
    lowered = {str(k).strip().lower(): k for k in keys if k is not None}
    cols = {}
    for canon, aliases in _COLUMN_ALIASES.items():
        for alias in aliases:
            if alias in lowered:
                cols[canon] = lowered[alias]
                break
    return cols


def _direction(value) -> str | None:
    if isinstance(value, bool):
        return "sent" if value else "received"
    v = str(value).strip().lower()
    if v in _SENT_VALUES:
        return "sent"
    if v in _RECEIVED_VALUES:
        return "received"
    return None


def _record_to_message(rec: dict, cols: dict, app: str | None, stats: ParseStats) -> Message | None:
    stats.rows_read += 1
    if "direction" in cols:
        direction = _direction(rec.get(cols["direction"]))
        if direction is None:
            stats.malformed += 1
            return None
        if direction == "received":
            stats.received += 1
            return None
    user = rec.get(cols["user_id"]) if "user_id" in cols else None
    text = rec.get(cols["text"]) if "text" in cols else None
    row_app = rec.get(cols["app"]) if "app" in cols else None
    row_app = str(row_app).strip().lower() if row_app not in (None, "") else app
    sent_at = parse_timestamp(rec.get(cols["sent_at"])) if "sent_at" in cols else None
    if user is None or str(user).strip() == "" or sent_at is None or row_app not in APPS or (
        text is not None and not isinstance(text, str)
    ):
        stats.malformed += 1
        return None
    if text is None or not text.strip():
        stats.empty_text += 1
        return None
    stats.parsed += 1
    return Message(str(user).strip(), row_app, sent_at, text)


def _read_text(path: Path) -> str:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputFileError(path, exc.strerror or str(exc)) from exc
    return raw.decode("utf-8", errors="replace").lstrip("﻿")


def _csv_records(text: str):
    reader = csv.DictReader(io.StringIO(text, newline=""))
    try:
        keys = reader.fieldnames or []
    except csv.Error:
        return [], []

    def rows():
        # a row the csv module rejects (e.g. NUL bytes) becomes a non-dict, counted as malformed
        while True:
            try:
                yield next(reader)
            except StopIteration:
                return
            except csv.Error:
                yield None

    return keys, rows()


def _json_records(text: str, path: Path):
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputFileError(path, f"invalid JSON: {exc}") from exc
    if isinstance(data, dict):
        for key in ("messages", "records", "data"):
            if isinstance(data.get(key), list):
                data = data[key]
                break
    if not isinstance(data, list):
        raise InputFileError(path, "expected a JSON array of records")
    keys = []
    for rec in data:
        if isinstance(rec, dict):
            keys.extend(k for k in rec if k not in keys)
    return keys, data


class _TableParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.rows: list[list[str]] = []
        self._row: list[str] | None = None
        self._cell: list[str] | None = None
        self._tables_seen = 0
        self._depth = 0

    def handle_starttag(self, tag, attrs):
        if tag == "table":
            self._depth += 1
            self._tables_seen += 1
        elif self._tables_seen == 1 and self._depth:
            if tag == "tr":
                self._row = []
            elif tag in ("td", "th") and self._row is not None:
                self._cell = []
            elif tag == "br" and self._cell is not None:
                self._cell.append("\n")

    def handle_endtag(self, tag):
        if tag == "table":
            self._depth = max(0, self._depth - 1)
        elif tag in ("td", "th") and self._cell is not None and self._row is not None:
            self._row.append("".join(self._cell).strip())
            self._cell = None
        elif tag == "tr" and self._row is not None:
            self.rows.append(self._row)
            self._row = None

    def handle_data(self, data):
        if self._cell is not None:
            self._cell.append(data)


def _html_records(text: str):
    parser = _TableParser()
    parser.feed(text)
    parser.close()
    if not parser.rows:
        return [], []
    header, *body = parser.rows
    records = []
    for row in body:
        # short/long rows keep their cells; missing values then count as malformed
        records.append({h: (row[i] if i < len(row) else None) for i, h in enumerate(header)})
    return header, records


def parse_export(path, app: str | None, fmt: str, stats: ParseStats | None = None) -> list[Message]:
    """Parse one export file into sent messages.

    ``app`` tags every record unless the file carries its own ``app`` column.
    Malformed rows are dropped and tallied in ``stats``.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown export format {fmt!r}; expected one of {FORMATS}")
    if app is not None and app not in APPS:
        raise ConfigError(f"unknown app {app!r}")
    path = Path(path)
    if not path.is_file():
        raise InputFileError(path, "no such file")
    text = _read_text(path)
    if fmt == "csv":
        keys, records = _csv_records(text)
    elif fmt == "json_records":
        keys, records = _json_records(text, path)
    else:
        keys, records = _html_records(text)
    cols = _resolve_columns(keys)
    local = ParseStats()
    out = []
    for rec in records:
        if not isinstance(rec, dict):
            local.rows_read += 1
            local.malformed += 1
            continue
        msg = _record_to_message(rec, cols, app, local)
        if msg is not None:
            out.append(msg)
    if local.dropped:
        logger.info("%s: kept %d of %d rows (%d received, %d empty, %d malformed)", path,
                    local.parsed, local.rows_read, local.received, local.empty_text, local.malformed)
    if stats is not None:
        stats.merge(local)
    return out


_EXT_FORMATS = {".csv": "csv", ".json": "json_records", ".html": "html_table", ".htm": "html_table"}


def discover_exports(directory) -> list[tuple[Path, str, str]]:
    """Find ``<app>[_suffix].{csv,json,html}`` files; returns ``(path, app, format)``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputFileError(directory, "export directory not found")
    found = []
    by_length = sorted(APPS, key=len, reverse=True)
    for path in sorted(directory.iterdir()):
        fmt = _EXT_FORMATS.get(path.suffix.lower())
        if fmt is None or not path.is_file():
            continue
        stem = path.stem.lower()
        app = next((a for a in by_length if stem == a or stem.startswith(a + "_") or stem.startswith(a + "-")), None)
        if app is None:
            logger.warning("skipping %s: file name does not start with a known app", path)
            continue
        found.append((path, app, fmt))
    return found


# ---------------------------------------------------------------------------
# dedup, windowing, eligibility
# ---------------------------------------------------------------------------

def deduplicate(messages) -> list[Message]:
    """Keep the first message per ``(user_id, sent_at, text)``."""
    seen = set()
    out = []
    for msg in messages:
        key = (msg.user_id, msg.sent_at, msg.text)
        if key not in seen:
            seen.add(key)
            out.append(msg)
    return out


def _corpus_order(msg: Message):
    return (msg.sent_at, msg.app, msg.text)


def build_corpora(messages, cfg: IngestConfig) -> tuple[dict[str, UserCorpus], list[Exclusion]]:
    by_user: dict[str, list[Message]] = {}
    for msg in messages:
        by_user.setdefault(msg.user_id, []).append(msg)

    corpora: dict[str, UserCorpus] = {}
    excluded: list[Exclusion] = []
    for user in sorted(by_user):
        msgs = [m for m in by_user[user] if m.app not in cfg.excluded_apps]
        if not msgs:
            excluded.append(Exclusion(user, "no_messages", "0 messages after app exclusion"))
            continue
        anchor = cfg.reference_date or max(m.day for m in msgs)
        oldest = anchor - timedelta(days=cfg.retention_days)
        msgs = [m for m in msgs if oldest <= m.day <= anchor]
        days: dict[date, list[Message]] = {}
        for msg in sorted(msgs, key=_corpus_order):
            days.setdefault(msg.day, []).append(msg)
        n_days, n_msgs = len(days), len(msgs)
        failed = []
        if n_days < cfg.min_days:
            failed.append(("min_days", f"days={n_days} (<{cfg.min_days})"))
        if n_msgs < cfg.min_messages:
            failed.append(("min_messages", f"messages={n_msgs} (<{cfg.min_messages})"))
        if failed:
            excluded.append(Exclusion(user, failed[0][0], "; ".join(d for _, d in failed)))
            continue
        weights = {app: cfg.weight(app) for app in sorted({m.app for m in msgs})}
        corpora[user] = UserCorpus(user, dict(sorted(days.items())), weights)
    return corpora, excluded


# ---------------------------------------------------------------------------
# canonical files
# ---------------------------------------------------------------------------

def write_canonical_csv(path, messages) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANONICAL_HEADER)
        for msg in messages:
            writer.writerow((msg.user_id, msg.app, format_timestamp(msg.sent_at), msg.text))
            n += 1
    return n


def read_canonical_csv(path, stats: ParseStats | None = None) -> list[Message]:
    return parse_export(path, None, "csv", stats=stats)


def write_exclusions(path, exclusions) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EXCLUSION_HEADER)
        for ex in exclusions:
            writer.writerow((ex.user_id, ex.reason, ex.detail))


def read_exclusions(path) -> list[Exclusion]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return [Exclusion(r["user_id"], r["reason"], r["detail"]) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

def app_counts(corpora: dict[str, UserCorpus]) -> dict[str, int]:
    counts = Counter(m.app for c in corpora.values() for m in c.messages())
    return {app: counts.get(app, 0) for app in APPS if app in counts}


def message_stats(corpora: dict[str, UserCorpus]) -> dict[str, float]:
    sizes = [c.n_messages for c in corpora.values()]
    if not sizes:
        return {"total": 0, "mean": 0.0, "median": 0.0, "max": 0, "min": 0, "sd": 0.0}
    return {
        "total": sum(sizes),
        "mean": statistics.fmean(sizes),
        "median": float(statistics.median(sizes)),
        "max": max(sizes),
        "min": min(sizes),
        "sd": statistics.stdev(sizes) if len(sizes) > 1 else 0.0,
    }


def format_ingest_summary(corpora: dict[str, UserCorpus]) -> str:
    counts = app_counts(corpora)
    total = sum(counts.values())
    apps = list(counts)
    lines = ["Messages per app", " | ".join(["Total", *apps]), " | ".join([f"{total:,}", *(f"{counts[a]:,}" for a in apps)])]
    st = message_stats(corpora)
    lines += [
        "",
        f"Messages per user (users={len(corpora)})",
        "Total | Mean | Median | Maximum | Minimum | SD",
        f"{st['total']:,} | {st['mean']:,.2f} | {st['median']:,.1f} | {st['max']:,} | {st['min']:,} | {st['sd']:,.2f}",
    ]
    return "\n".join(lines) + "\n"
