from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Mapping, Optional, Sequence

from .estimators import UcbScore


def _value(s) -> float:
    return s.value if isinstance(s, UcbScore) else float(s)


def select_top(scores: Mapping[str, object], k: int) -> List[str]:
    """The min(k, |scores|) best clients; ties go to the smallest client id."""
    if not scores:
        raise ValueError("no scores to select from")
    ranked = sorted(scores, key=lambda cid: (-_value(scores[cid]), cid))
    return ranked[: min(k, len(ranked))]


@dataclass
class RegretTracker:
    """Cumulative regret of chosen subsets against the best-k subset.

    By default both sums use true rewards (pseudo-regret). With
    ``literal=True`` the chosen set is valued by the predicted rewards
    instead, which can make a round's regret negative.
    """

    literal: bool = False
    per_round: List[float] = field(default_factory=list)

    @property
    def cumulative(self) -> float:
        return float(sum(self.per_round))

    @property
    def T(self) -> int:
        return len(self.per_round)

    def record(
        self,
        true_rewards: Mapping[str, float],
        chosen: Sequence[str],
        k: int,
        predicted_rewards: Optional[Mapping[str, float]] = None,
    ) -> float:
        best = sorted(true_rewards.values(), reverse=True)[: min(k, len(true_rewards))]
        if self.literal:
            if predicted_rewards is None:
                raise ValueError("literal regret needs predicted rewards")
            got = sum(predicted_rewards[c] for c in chosen)
            r = float(sum(best) - got)
        else:
            # the i-th best reward dominates the i-th best chosen one, so pairing
            # them keeps every term >= 0 exactly despite float rounding
            picked = sorted((true_rewards[c] for c in chosen), reverse=True)
            r = float(sum(b - g for b, g in zip(best, picked)) + sum(best[len(picked):]) - sum(picked[len(best):]))
        self.per_round.append(r)
        return r


def record_regret(tracker: RegretTracker, true_rewards, chosen, k, predicted_rewards=None) -> RegretTracker:
    tracker.record(true_rewards, chosen, k, predicted_rewards)
    return tracker


def jain_index(counts: Iterable[float]) -> float:
    counts = list(counts)
    total = sum(counts)
    squares = sum(c * c for c in counts)
    if not counts or squares == 0:
        return 1.0
    return total * total / (len(counts) * squares)
