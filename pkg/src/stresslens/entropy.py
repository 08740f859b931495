"""Shannon entropy estimators for discrete contact-count distributions.

Diversity features measure how evenly a person's interactions spread over
their contacts.  Both estimators work in nats (natural log).  The
Miller-Madow variant adds the classic first-order bias correction
``(occupied_bins - 1) / (2 * total)`` to the plug-in estimate, which matters
at the small daily sample sizes seen here.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable


@dataclass(frozen=True)
class CountDistribution:
    """Nonnegative interaction counts, one entry per contact (bin)."""

    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        clean = []
        for c in self.counts:
            if isinstance(c, bool) or int(c) != c or c < 0:
                raise ValueError(f"counts must be nonnegative integers, got {c!r}")
            clean.append(int(c))
        object.__setattr__(self, "counts", tuple(clean))

    @classmethod
    def from_observations(cls, observations: Iterable[Hashable]) -> "CountDistribution":
        """Tally raw observations (e.g. peer ids) into a distribution."""
        return cls(tuple(Counter(observations).values()))

    @property
    def total(self) -> int:
        """Number of observations (N)."""
        return sum(self.counts)

    @property
    def occupied_bins(self) -> int:
        """Number of bins with a nonzero count."""
        return sum(1 for c in self.counts if c > 0)


def shannon_ml(distribution: CountDistribution) -> float:
    """Maximum-likelihood (plug-in) Shannon entropy in nats.

    Zero-count bins contribute nothing.  Raises ``ValueError`` for an empty
    distribution because the plug-in probabilities are undefined at N = 0.
    """
    n = distribution.total
    if n == 0:
        raise ValueError("empty distribution")
    acc = 0.0
    for c in distribution.counts:
        if c > 0:
            p = c / n
            acc -= p * math.log(p)
    return acc


def miller_madow(distribution: CountDistribution) -> float:
    """Bias-corrected Shannon entropy: plug-in estimate plus (m-1)/(2N) nats."""
    n = distribution.total
    if n == 0:
        raise ValueError("empty distribution")
    return shannon_ml(distribution) + (distribution.occupied_bins - 1) / (2.0 * n)
