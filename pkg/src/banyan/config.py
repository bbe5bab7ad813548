"""Protocol configuration: resilience bounds, quorum sizes, leader rotation, delays.

All timing values are simulated milliseconds.  The resilience requirement is

    n >= max(3f + 2p - 1, 3f + 1)        with 0 <= p <= f

where ``p`` is the number of replicas whose cooperation the fast path can
forgo.  Quorum arithmetic lives here so that every other module shares one
source of truth.
"""

from __future__ import annotations

import random
import warnings
from dataclasses import dataclass, field

MODE_BANYAN = "banyan"
MODE_ICC = "icc"

ROTATION_ROUND_ROBIN = "round_robin"
ROTATION_SEEDED = "seeded_permutation"


class ConfigError(ValueError):
    """Raised when a protocol configuration violates a stated bound."""


@dataclass(frozen=True)
class Rotation:
    """Leader rotation rule.

    ``round_robin``: rank(u, k) = (u - k) mod n, so the leader of round k is
    replica k mod n.  ``seeded_permutation``: a deterministic shuffle keyed
    by (seed, round).
    """

    kind: str = ROTATION_ROUND_ROBIN
    seed: int = 0

    def permutation(self, rnd: int, n: int) -> list[int]:
        """Replica id at each rank for the given round."""
        if self.kind == ROTATION_ROUND_ROBIN:
            return [(rnd + r) % n for r in range(n)]
        order = list(range(n))
        random.Random(f"{self.seed}:{rnd}").shuffle(order)
        return order

    def rank_of(self, replica: int, rnd: int, n: int) -> int:
        if self.kind == ROTATION_ROUND_ROBIN:
            return (replica - rnd) % n
        return self.permutation(rnd, n).index(replica)


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    f: int
    p: int
    delta_ms: float
    mode: str = MODE_BANYAN
    rotation: Rotation = field(default_factory=Rotation)

    # Per-round permutation cache; id-keyed so frozen dataclass stays hashable.
    def __post_init__(self):
        object.__setattr__(self, "_perm_cache", {})

    def validate(self) -> None:
        validate_config(self)

    # quorum arithmetic -------------------------------------------------

    def notarization_quorum(self) -> int:
        """Votes needed to notarize a block; also the finalization-vote quorum."""
        return (self.n + self.f + 2) // 2

    def fast_quorum(self) -> int:
        """Fast votes needed to finalize a rank-0 block in one round trip."""
        return self.n - self.p

    def unlock_threshold(self) -> int:
        """Support must strictly exceed this for a block to become unlocked."""
        return self.f + self.p

    # rotation ----------------------------------------------------------

    def permutation(self, rnd: int) -> list[int]:
        cache = self._perm_cache
        perm = cache.get(rnd)
        if perm is None:
            perm = self.rotation.permutation(rnd, self.n)
            cache[rnd] = perm
        return perm

    def rank_of(self, replica: int, rnd: int) -> int:
        return self.permutation(rnd).index(replica)

    def leader_of(self, rnd: int) -> int:
        return self.permutation(rnd)[0]

    def proposer_at_rank(self, rnd: int, rank: int) -> int:
        return self.permutation(rnd)[rank]

    # delays --------------------------------------------------------------

    def proposal_delay(self, rank: int) -> float:
        """Wait before proposing, measured from the replica's round start."""
        return 2.0 * self.delta_ms * rank

    def notarization_delay(self, rank: int) -> float:
        """Wait before notarization-voting a block of the given rank."""
        return 2.0 * self.delta_ms * rank


def validate_config(cfg: ProtocolConfig) -> None:
    """Accept iff the resilience inequalities hold; the error names the one violated."""
    if cfg.n < 1:
        raise ConfigError(f"n must be positive, got {cfg.n}")
    if cfg.f < 0:
        raise ConfigError(f"f must be non-negative, got {cfg.f}")
    if not 0 <= cfg.p <= cfg.f:
        raise ConfigError(f"p must satisfy 0 <= p <= f, got p={cfg.p}, f={cfg.f}")
    if cfg.delta_ms <= 0:
        raise ConfigError(f"delta_ms must be positive, got {cfg.delta_ms}")
    if cfg.n < 3 * cfg.f + 2 * cfg.p - 1:
        raise ConfigError(
            f"n >= 3f + 2p - 1 violated: n={cfg.n} < {3 * cfg.f + 2 * cfg.p - 1}"
        )
    if cfg.n < 3 * cfg.f + 1:
        raise ConfigError(f"n >= 3f + 1 violated: n={cfg.n} < {3 * cfg.f + 1}")
    if cfg.mode not in (MODE_BANYAN, MODE_ICC):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.rotation.kind not in (ROTATION_ROUND_ROBIN, ROTATION_SEEDED):
        raise ConfigError(f"unknown rotation {cfg.rotation.kind!r}")
    if cfg.p == 0:
        # Same replica count as p=1 but strictly slower; legal, just pointless.
        warnings.warn("p=0 disables the fast path for no resilience gain", stacklevel=2)
