"""Synthetic review corpora with a planted personalization signal.

Each review's text tokens are drawn from the guest-type segment lexicon
with probability ``signal_strength`` and from a shared background lexicon
otherwise, so guest type is the only context field that predicts review
text.  Beyond the text signal, two realism features are planted:

* review_score is drawn around the accommodation's own score.  The
  resulting score correlation is visible ACROSS accommodations (review
  scores echo the accommodation score that also appears in the context
  string) but carries no information for ranking within one accommodation,
  where every context shares the same accommodation score.  Randomly
  sampled training batches can therefore lower their loss through this
  shortcut while in-accommodation batches cannot, which is precisely the
  contrast the two samplers are meant to expose.
* helpful votes are sparse (a configurable fraction, 8.7% by default,
  matching the published corpus) and heavy-tailed, and independent of the
  planted signal, so the votes baseline is uninformative by construction.

``bayes_optimal_mrr`` scores a generated corpus with the true generative
likelihood, giving the ceiling any trained model can reach.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    AccommodationContext,
    GuestContext,
    GuestType,
    Month,
    Review,
    ReviewRecord,
    group_by_accommodation,
)
from .encoder import tokenize
from .evaluation import RankedList, per_accommodation_mrr

DEFAULT_SEGMENT_LEXICONS: dict[GuestType, tuple[str, ...]] = {
    GuestType.SOLO_TRAVELLER: (
        "quiet", "workspace", "wifi", "laptop", "backpack", "dorm", "locker",
        "commute", "metro", "espresso", "solo", "independence", "reading",
        "desk", "headphones", "keycard", "efficiency", "compact", "single",
        "minimalist", "router", "nomad", "journal", "earplugs",
    ),
    GuestType.COUPLE: (
        "romantic", "sunset", "terrace", "candlelight", "honeymoon",
        "champagne", "jacuzzi", "rooftop", "intimate", "anniversary", "cozy",
        "wine", "balcony", "massage", "privacy", "scenic", "stroll",
        "fireplace", "twilight", "serenade", "roses", "moonlight",
        "secluded", "duet",
    ),
    GuestType.GROUP: (
        "friends", "lounge", "billiards", "crew", "karaoke", "barbecue",
        "bunk", "gathering", "parties", "foosball", "hangout", "squad",
        "beers", "gaming", "bonfire", "dartboard", "reunion", "chants",
        "tournament", "banter", "singalong", "huddle", "matchday", "rounds",
    ),
    GuestType.FAMILY_WITH_CHILDREN: (
        "playground", "cots", "stroller", "toddler", "kids", "highchair",
        "cartoons", "babysitting", "sandbox", "slides", "swings", "diapers",
        "naptime", "snacks", "minivan", "childproof", "bunkbeds", "puzzles",
        "crayons", "storytime", "teddy", "pram", "lullaby", "wading",
    ),
}

DEFAULT_BACKGROUND_LEXICON: tuple[str, ...] = (
    "clean", "comfortable", "location", "staff", "breakfast", "room", "bed",
    "bathroom", "shower", "friendly", "helpful", "great", "good", "nice",
    "lovely", "excellent", "perfect", "amazing", "view", "pool", "parking",
    "restaurant", "bar", "coffee", "tea", "towels", "pillows", "aircon",
    "heating", "elevator", "reception", "luggage", "city", "beach", "walk",
    "close", "value", "price", "spotless", "street",
)

_GUEST_COUNTRIES = (
    "UK", "Germany", "France", "Netherlands", "Spain", "Italy", "Poland",
    "Sweden", "Ireland", "Belgium", "Austria", "Denmark",
)
_ACCOMMODATION_COUNTRIES = (
    "Spain", "Italy", "France", "Greece", "Portugal", "Croatia", "Austria",
    "Netherlands",
)
_ACCOMMODATION_TYPES = (
    "Hotel", "Apartment", "Hostel", "Guesthouse", "Villa", "Chalet",
    "Resort", "Bed and breakfast",
)
_STAR_LEVELS = (0.0, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)


@dataclass(frozen=True)
class SynthConfig:
    n_accommodations: int = 300
    reviews_per_accommodation: tuple[int, int] = (12, 12)  # inclusive range
    signal_strength: float = 0.9
    segment_lexicons: dict[GuestType, tuple[str, ...]] = field(
        default_factory=lambda: dict(DEFAULT_SEGMENT_LEXICONS)
    )
    background_lexicon: tuple[str, ...] = DEFAULT_BACKGROUND_LEXICON
    seed: int = 0
    vote_fraction: float = 0.087
    score_noise: float = 0.6

    def __post_init__(self):
        if self.n_accommodations < 1:
            raise ValueError(f"n_accommodations must be >= 1, got {self.n_accommodations}")
        lo, hi = self.reviews_per_accommodation
        if lo < 1 or hi < lo:
            raise ValueError(
                f"reviews_per_accommodation must be a valid range, got {lo}..{hi}"
            )
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError(f"signal_strength outside [0, 1]: {self.signal_strength}")
        if not 0.0 <= self.vote_fraction <= 1.0:
            raise ValueError(f"vote_fraction outside [0, 1]: {self.vote_fraction}")
        if self.score_noise < 0:
            raise ValueError(f"score_noise must be >= 0, got {self.score_noise}")
        if set(self.segment_lexicons) != set(GuestType):
            raise ValueError("segment_lexicons must cover every guest type")
        pools = [tuple(self.background_lexicon)] + [
            tuple(self.segment_lexicons[gt]) for gt in GuestType
        ]
        seen: set[str] = set()
        for pool in pools:
            if not pool:
                raise ValueError("lexicons must be non-empty")
            for token in pool:
                if tokenize(token) != [token]:
                    raise ValueError(f"lexicon entry is not a single clean token: {token!r}")
                if token in seen:
                    raise ValueError(f"lexicons are not pairwise disjoint: {token!r}")
                seen.add(token)


# Scalar knobs exposed in the key=value config format.  The lexicons are
# code-level defaults; custom lexicons are constructor-only.
_CONFIG_FIELDS = {
    "n_accommodations": int,
    "signal_strength": float,
    "seed": int,
    "vote_fraction": float,
    "score_noise": float,
}


def parse_synth_value(key: str, raw: str):
    raw = raw.strip()
    if key == "reviews_per_accommodation":
        lo, sep, hi = raw.partition("..")
        return (int(lo), int(hi)) if sep else (int(raw), int(raw))
    if key not in _CONFIG_FIELDS:
        raise ValueError(f"unknown config key {key!r}")
    return _CONFIG_FIELDS[key](raw)


def parse_synth_config_file(path: str | Path) -> dict:
    """Flat ``key = value`` config file; '#' starts a comment line."""
    overrides = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {line_no} is not a key=value pair: {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        overrides[key] = parse_synth_value(key, value)
    return overrides


def synth_config_to_text(config: SynthConfig) -> str:
    """Stable key=value echo of the scalar generator knobs."""
    lo, hi = config.reviews_per_accommodation
    lines = [f"reviews_per_accommodation = {lo}..{hi}"]
    for key in _CONFIG_FIELDS:
        lines.append(f"{key} = {getattr(config, key)}")
    return "\n".join(sorted(lines)) + "\n"


def _draw_tokens(rng, n, segment, background, signal):
    tokens = []
    for _ in range(n):
        pool = segment if rng.random() < signal else background
        tokens.append(pool[int(rng.integers(0, len(pool)))])
    return tokens


def generate(config: SynthConfig) -> list[ReviewRecord]:
    """Deterministic synthetic corpus; schema-valid and strict-ingestable."""
    records: list[ReviewRecord] = []
    guest_types = list(GuestType)
    months = list(Month)
    for acc_idx in range(config.n_accommodations):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, acc_idx]))
        lo, hi = config.reviews_per_accommodation
        n_reviews = int(rng.integers(lo, hi + 1))
        accommodation = AccommodationContext(
            accommodation_id=f"synth-{acc_idx:05d}",
            accommodation_type=_ACCOMMODATION_TYPES[
                int(rng.integers(0, len(_ACCOMMODATION_TYPES)))
            ],
            accommodation_score=round(float(rng.uniform(2.4, 10.0)), 1),
            accommodation_country=_ACCOMMODATION_COUNTRIES[
                int(rng.integers(0, len(_ACCOMMODATION_COUNTRIES)))
            ],
            accommodation_star_rating=_STAR_LEVELS[int(rng.integers(0, len(_STAR_LEVELS)))],
            location_is_beach=bool(rng.random() < 0.3),
            location_is_ski=bool(rng.random() < 0.15),
            location_is_city_center=bool(rng.random() < 0.4),
        )
        for _ in range(n_reviews):
            guest_type = guest_types[int(rng.integers(0, 4))]
            segment = config.segment_lexicons[guest_type]
            background = config.background_lexicon
            title = _draw_tokens(rng, int(rng.integers(2, 4)), segment, background,
                                 config.signal_strength)
            positive = _draw_tokens(rng, int(rng.integers(8, 15)), segment, background,
                                    config.signal_strength)
            n_negative = int(rng.integers(0, 5))
            negative = _draw_tokens(rng, n_negative, segment, background,
                                    config.signal_strength)
            score = round(
                float(
                    np.clip(
                        rng.normal(accommodation.accommodation_score, config.score_noise),
                        1.0,
                        10.0,
                    )
                ),
                1,
            )
            votes = int(rng.geometric(0.25)) if rng.random() < config.vote_fraction else 0
            guest = GuestContext(
                guest_type=guest_type,
                guest_country=_GUEST_COUNTRIES[int(rng.integers(0, len(_GUEST_COUNTRIES)))],
                room_nights=1 + int(rng.poisson(3.0)),
                month=months[int(rng.integers(0, 12))],
            )
            records.append(
                ReviewRecord(
                    review=Review(
                        review_title=" ".join(title),
                        review_positive=" ".join(positive),
                        review_negative=" ".join(negative),
                        review_score=score,
                        review_helpful_votes=votes,
                    ),
                    guest=guest,
                    accommodation=accommodation,
                )
            )
    return records


def _review_tokens(record: ReviewRecord) -> list[str]:
    text = " ".join(
        p
        for p in (
            record.review.review_title,
            record.review.review_positive,
            record.review.review_negative,
        )
        if p
    )
    return tokenize(text)


def token_log_likelihood(
    tokens: Sequence[str], guest_type: GuestType, config: SynthConfig
) -> float:
    """Log-probability of a token sequence under one guest type's mixture."""
    segment = set(config.segment_lexicons[guest_type])
    background = set(config.background_lexicon)
    seg_p = config.signal_strength / len(segment)
    bg_p = (1.0 - config.signal_strength) / len(background)
    total = 0.0
    for token in tokens:
        p = (seg_p if token in segment else 0.0) + (bg_p if token in background else 0.0)
        if p == 0.0:
            return -math.inf
        total += math.log(p)
    return total


def bayes_optimal_mrr(config: SynthConfig, records: Sequence[ReviewRecord] | None = None) -> float:
    """MRR of the ideal scorer on a corpus generated from ``config``.

    Every review is scored with the exact generative likelihood of its
    tokens under the context's guest type; this is the model-free ceiling.
    Pass ``records`` to reuse an already generated corpus.
    """
    if records is None:
        records = generate(config)
    ranked_groups = []
    for group in group_by_accommodation(records):
        tokens = [_review_tokens(r) for r in group.records]
        m = len(group)
        ranked = []
        for j in range(m):
            guest_type = group.records[j].guest.guest_type
            scores = [token_log_likelihood(t, guest_type, config) for t in tokens]
            order = sorted(range(m), key=lambda i: (-scores[i], i))
            ranked.append(
                RankedList(context_index=j, order=tuple(order), rank_of_own=order.index(j) + 1)
            )
        ranked_groups.append(ranked)
    values = per_accommodation_mrr(ranked_groups)
    return sum(values) / len(values)
