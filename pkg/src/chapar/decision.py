"""Spot selection once a worker's foraging energy runs out.

The private message is ranked on three keys: colour match first, then the
5-hop category, then Euclidean distance.  Hop categories trade off starvation
(few robots know the spot) against saturation (many robots are heading there).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Union

from chapar.protocol import PrivateMessage, SpotKey, SpotRow

DEFAULT_BUCKET_SIZE = 5
DEFAULT_RETRY_THRESHOLD = 6


@dataclass(frozen=True)
class RankedCandidate:
    key: SpotKey
    row: SpotRow
    color_match: bool
    hop_bucket: int
    distance: float

    def sort_key(self):
        return (not self.color_match, self.hop_bucket, self.distance, self.key)


@dataclass(frozen=True)
class GoToSpot:
    key: SpotKey


@dataclass(frozen=True)
class ReturnToCharge:
    pass


DecisionOutcome = Union[GoToSpot, ReturnToCharge]


def hop_bucket(hops: int, bucket_size: int = DEFAULT_BUCKET_SIZE) -> int:
    if bucket_size < 1:
        raise ValueError(f"bucket_size must be >= 1, got {bucket_size}")
    return hops // bucket_size


def saturation_risk(row: SpotRow) -> bool:
    """True when the robots already aware of the spot could fill it first.

    A row seen after ``h`` relays suggests up to ``h - 1`` other robots know of
    the spot and may reach it earlier.
    """
    return max(row.hops - 1, 0) >= row.needed


def rank(candidates: PrivateMessage, target: int, here: tuple[float, float],
         bucket_size: int = DEFAULT_BUCKET_SIZE) -> list[RankedCandidate]:
    hx, hy = here
    ranked = [
        RankedCandidate(key=key, row=row, color_match=row.color == target,
                        hop_bucket=hop_bucket(row.hops, bucket_size),
                        distance=math.hypot(row.x - hx, row.y - hy))
        for key, row in candidates.rows.items()
        if row.needed > 0
    ]
    ranked.sort(key=RankedCandidate.sort_key)
    return ranked


def decide(candidates: PrivateMessage, target: int, here: tuple[float, float], attempts: int,
           retry_threshold: int = DEFAULT_RETRY_THRESHOLD,
           bucket_size: int = DEFAULT_BUCKET_SIZE) -> DecisionOutcome:
    if attempts < 0:
        raise ValueError("attempts must be nonnegative")
    if attempts >= retry_threshold:
        return ReturnToCharge()
    ranked = rank(candidates, target, here, bucket_size)
    if not ranked:
        return ReturnToCharge()
    return GoToSpot(ranked[0].key)


def accept_en_route(spot, row: SpotRow | None, target: int) -> bool:
    """Whether a worker in transit should settle on the spot it is standing in.

    ``spot`` is a perception (anything with ``color`` and ``capacity``).
    """
    if spot.color != target:
        return False
    if row is None:
        return spot.capacity >= 1
    return row.needed >= 1 and not saturation_risk(row)


def resample_target(candidates: PrivateMessage, rng: random.Random, current: int) -> int:
    """Draw a new target colour in proportion to the colours of known rows.

    One uniform draw per call, so the caller's stream advances identically
    whatever the message holds.
    """
    u = rng.random()
    colors = candidates.colors()
    if not colors:
        return current
    counts: dict[int, int] = {}
    for c in colors:
        counts[c] = counts.get(c, 0) + 1
    total = len(colors)
    acc = 0
    for c in sorted(counts):
        acc += counts[c]
        if u * total < acc:
            return c
    return max(counts)
