"""Synthetic exports and survey answers for offline end-to-end runs.

Each user gets latent binary outcomes. A latent-positive user sprinkles
phrases from the outcome's lexicon category into messages at
``positive_rate``, everyone else at ``negative_rate``; survey answers are
drawn to agree with the (optionally noise-flipped) latent outcomes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .ingest import CANONICAL_HEADER, format_timestamp
from .labels import LABELS, SurveyResponse, write_survey_csv
from .lexfeat import load_lexicon

LABEL_CATEGORIES = {
    "binge_monthly": "alcohol",
    "auditc_high": "heavy_drinking",
    "over5_partners": "hookup",
    "takes_prep": "prep_hiv",
}
BACKGROUND_CATEGORIES = ("stimulants", "party_drugs", "cannabis", "condomless")
APP_MIX = {"grindr": 0.55, "grindr_profile_note": 0.002, "tinder": 0.02, "instagram": 0.33,
           "snapchat": 0.09, "twitter": 0.005, "reddit": 0.003}

_FILLER = (
    "hey hi hello sup yo what's up how are you doing good thanks lol haha nice cool okay sure "
    "maybe later tonight tomorrow today weekend morning work class gym movie dinner lunch coffee "
    "pizza music show netflix beach walk dog cat home apartment friend guys people chat talk meet "
    "text call send pic photo pics cute sweet love fun great awesome sorry busy tired sleep bed "
    "just got back from the store downtown uptown trip travel plans yeah yes nah not really where "
    "are you from live near far close miles away new city here there this that it is was were be "
    "have had do did go going went come see saw look looking nice to meet too so very much more "
    "less about with for on in at by and or but if then because also still again always never "
    "sometimes often what when why who how which one two three four five six seven some any all "
    "game games play played watch watching read book books cook cooking food hungry eat dance "
    "dancing concert festival shopping clothes shirt shoes outfit haircut selfie story post"
).split()


@dataclass
class SynthConfig:
    n_users: int = 160
    days_per_user: int = 45
    extra_days: int = 15
    messages_per_day: int = 25
    positive_rate: float = 0.06
    negative_rate: float = 0.01
    background_rate: float = 0.01
    label_noise: float = 0.03
    decline_rate: float = 0.02
    prevalence: dict = field(default_factory=lambda: {
        "binge_monthly": 0.53, "over5_partners": 0.525, "takes_prep": 0.575})
    auditc_given_binge: tuple = (0.12, 0.55)
    signal_labels: tuple = LABELS
    facebook_per_user: int = 20
    duplicate_rate: float = 0.01
    end_date: str = "2023-06-30"
    seed: int = 0

    def __post_init__(self):
        for name in ("positive_rate", "negative_rate", "background_rate", "label_noise", "decline_rate",
                     "duplicate_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"SynthConfig.{name} must lie in [0, 1]")
        if self.positive_rate < self.negative_rate:
            raise ConfigError("positive_rate must be >= negative_rate")
        if self.n_users < 1 or self.days_per_user < 1 or self.messages_per_day < 1:
            raise ConfigError("n_users, days_per_user and messages_per_day must be positive")
        self.signal_labels = tuple(self.signal_labels)
        unknown = set(self.signal_labels) - set(LABELS)
        if unknown:
            raise ConfigError(f"unknown signal labels {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth config fields: {sorted(unknown)}")
        data = dict(data)
        if "auditc_given_binge" in data:
            data["auditc_given_binge"] = tuple(data["auditc_given_binge"])
        return cls(**data)


@dataclass
class SynthResult:
    latent: dict[str, dict[str, int]]
    observed: dict[str, dict[str, int]]
    responses: list[SurveyResponse]
    exports: dict[str, list[tuple[str, str, str, str]]]


def _draw_latent(cfg: SynthConfig, rng) -> dict[str, int]:
    out = {name: int(rng.random() < p) for name, p in cfg.prevalence.items()}
    p_high = cfg.auditc_given_binge[out.get("binge_monthly", 0)]
    out["auditc_high"] = int(rng.random() < p_high)
    return {name: out[name] for name in LABELS}


def _survey_answers(observed: dict[str, int], declined: set[str], rng) -> dict[str, int]:
    a = {}
    q3 = int(rng.choice([3, 4, 5])) if observed["binge_monthly"] else int(rng.choice([1, 2]))
    p3 = q3 - 1
    while True:
        q1, q2 = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        score = (q1 - 1) + (q2 - 1) + p3
        if (score >= 6) == bool(observed["auditc_high"]):
            break
    a["auditc_q1"], a["auditc_q2"], a["auditc_q3"] = q1, q2, q3
    a["partners_3mo"] = int(rng.choice([1, 2])) if observed["over5_partners"] else int(rng.choice([3, 4]))
    a["takes_prep"] = 1 if observed["takes_prep"] else 2
    a["substances_3mo"] = int(rng.choice([1, 4, 4, 4]))
    for qid in ("treatment_3mo", "inject_cocaine_3mo", "inject_meth_3mo", "share_equipment_3mo", "inject_group_3mo"):
        a[qid] = 2
    a["condomless_receptive_3mo"] = int(rng.choice([1, 2]))
    a["hiv_pos_partners_3mo"] = int(rng.choice([1, 2, 3, 3, 4]))
    a["condomless_insertive_hivpos_3mo"] = 2
    # declines: the source question of a label gets its "Decline to answer" option
    decline_q = {"binge_monthly": ("auditc_q3", 6), "auditc_high": ("auditc_q1", 6),
                 "over5_partners": ("partners_3mo", 5), "takes_prep": ("takes_prep", 3)}
    for label in declined:
        qid, idx = decline_q[label]
        a[qid] = idx
    return a


def _message(rng, inserts: list[str]) -> str:
    n_words = int(rng.integers(3, 11))
    words = [_FILLER[i] for i in rng.integers(0, len(_FILLER), size=n_words)]
    for phrase in inserts:
        words.insert(int(rng.integers(0, len(words) + 1)), phrase)
    text = " ".join(words)
    return text[0].upper() + text[1:]


def generate(cfg: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))
    lexicon = load_lexicon()
    names = lexicon.phrase_names
    cat_phrases = {lexicon.categories[c]: [names[i] for i in lexicon.category_members(c)]
                   for c in range(lexicon.category_count)}
    end = datetime.combine(datetime.fromisoformat(cfg.end_date).date(), time(0), tzinfo=timezone.utc)
    apps = list(APP_MIX)
    app_p = np.array([APP_MIX[a] for a in apps])
    app_p /= app_p.sum()

    latent, observed, responses = {}, {}, []
    exports: dict[str, list] = {a: [] for a in (*apps, "facebook")}
    for u in range(cfg.n_users):
        uid = f"u{u + 1:04d}"
        lat = _draw_latent(cfg, rng)
        obs = {k: v ^ int(rng.random() < cfg.label_noise) for k, v in lat.items()}
        declined = {k for k in LABELS if rng.random() < cfg.decline_rate}
        latent[uid], observed[uid] = lat, obs
        for qid, idx in sorted(_survey_answers(obs, declined, rng).items()):
            responses.append(SurveyResponse(uid, qid, idx))

        rates = []
        for label, cat in LABEL_CATEGORIES.items():
            positive = lat[label] and label in cfg.signal_labels
            rates.append((cat, cfg.positive_rate if positive else cfg.negative_rate))
        rates += [(cat, cfg.background_rate) for cat in BACKGROUND_CATEGORIES]
        cats = [cat for cat, _ in rates]
        rate_vec = np.array([r for _, r in rates])

        n_days = cfg.days_per_user + int(rng.integers(0, cfg.extra_days + 1))
        day_offsets = np.sort(rng.choice(170, size=min(n_days, 170), replace=False))
        mpd = cfg.messages_per_day
        for off in day_offsets:
            day = end - timedelta(days=int(off))
            secs = np.sort(rng.integers(0, 86400, size=mpd))
            emit = rng.random((mpd, len(cats))) < rate_vec
            app_idx = rng.choice(len(apps), size=mpd, p=app_p)
            for m in range(mpd):
                inserts = [cat_phrases[cats[c]][int(rng.integers(0, len(cat_phrases[cats[c]])))]
                           for c in np.flatnonzero(emit[m])]
                app = apps[int(app_idx[m])]
                row = (uid, app, format_timestamp(day + timedelta(seconds=int(secs[m]))), _message(rng, inserts))
                exports[app].append(row)
                if rng.random() < cfg.duplicate_rate:
                    exports[app].append(row)
        for _ in range(cfg.facebook_per_user):
            off = int(rng.integers(0, 170))
            stamp = end - timedelta(days=off) + timedelta(seconds=int(rng.integers(0, 86400)))
            exports["facebook"].append((uid, "facebook", format_timestamp(stamp), _message(rng, [])))
    return SynthResult(latent, observed, responses, exports)


def write_synth(result: SynthResult, out_dir, cfg: SynthConfig | None = None) -> dict[str, Path]:
    """Write ``exports/<app>.csv``, ``survey.csv``, ``latent_labels.csv`` and ``config.json``."""
    out = Path(out_dir)
    exports = out / "exports"
    exports.mkdir(parents=True, exist_ok=True)
    for app, rows in result.exports.items():
        if not rows:
            continue
        with (exports / f"{app}.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CANONICAL_HEADER)
            writer.writerows(rows)
    write_survey_csv(out / "survey.csv", result.responses)
    with (out / "latent_labels.csv").open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("user_id", *LABELS))
        for uid in sorted(result.latent):
            writer.writerow((uid, *(result.latent[uid][k] for k in LABELS)))
    config = {
        "paths": {"exports": "exports", "survey": "survey.csv", "cache_dir": "cache", "output_dir": "out"},
        "seed": cfg.seed if cfg else 0,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if cfg is not None:
        (out / "synth_config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n",
                                               encoding="utf-8")
    return {"exports": exports, "survey": out / "survey.csv", "config": out / "config.json"}
