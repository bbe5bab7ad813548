"""Simulated signatures and vote aggregation behind a provider interface.

A signature is an unforgeable-by-construction tag binding (signer, message):
the only way to obtain one is to call ``sign`` with the signer's own id, so
Byzantine replicas can equivocate freely but can never speak for an honest
replica.  Aggregation collects explicit vote sets; verification enforces
distinct voters, matching rounds/subjects, and the quorum thresholds.
"""

from __future__ import annotations

import hashlib
import struct

from .config import ProtocolConfig
from .votes import (
    FAST_FINALIZATION,
    FAST_VOTE,
    FINALIZATION,
    FINALIZATION_VOTE,
    NOTARIZATION,
    NOTARIZATION_VOTE,
    UNLOCK_PROOF,
    Aggregate,
    Vote,
)

_KIND_TAG = {NOTARIZATION_VOTE: 0, FAST_VOTE: 1, FINALIZATION_VOTE: 2}


class UnknownReplica(KeyError):
    pass


class KeyRegistry:
    """One simulated identity per replica id in [0, n)."""

    def __init__(self, n: int):
        self.n = n

    def _check(self, replica: int) -> None:
        if not 0 <= replica < self.n:
            raise UnknownReplica(replica)

    def sign(self, replica: int, message: bytes) -> tuple:
        self._check(replica)
        tag = hashlib.sha256(b"sig" + struct.pack("<I", replica) + message).digest()[:16]
        return (replica, tag)

    def verify(self, replica: int, message: bytes, signature) -> bool:
        if not 0 <= replica < self.n or not signature:
            return False
        signer, tag = signature
        return signer == replica and self.sign(replica, message)[1] == tag

    # message encodings ---------------------------------------------------

    @staticmethod
    def vote_message(kind: str, rnd: int, block_hash: bytes) -> bytes:
        return struct.pack("<BQ", _KIND_TAG[kind], rnd) + block_hash

    def make_vote(self, kind: str, voter: int, rnd: int, block_hash: bytes) -> Vote:
        sig = self.sign(voter, self.vote_message(kind, rnd, block_hash))
        return Vote(kind, voter, rnd, block_hash, sig)

    def verify_vote(self, vote: Vote) -> bool:
        if vote.kind not in _KIND_TAG:
            return False
        msg = self.vote_message(vote.kind, vote.round, vote.block_hash)
        return self.verify(vote.voter, msg, vote.signature)


_AGG_VOTE_KIND = {
    NOTARIZATION: NOTARIZATION_VOTE,
    FINALIZATION: FINALIZATION_VOTE,
    FAST_FINALIZATION: FAST_VOTE,
    UNLOCK_PROOF: FAST_VOTE,
}


def aggregate(kind: str, rnd: int, subject: bytes, votes) -> Aggregate:
    """Combine votes into an aggregate; order-insensitive (votes are sorted)."""
    ordered = tuple(sorted(votes, key=lambda v: (v.voter, v.block_hash)))
    return Aggregate(kind, rnd, subject, ordered)


def verify_aggregate(
    agg: Aggregate,
    cfg: ProtocolConfig,
    registry: KeyRegistry,
    subject_rank: int | None = None,
    quorum_override: int | None = None,
) -> bool:
    """Check signatures, voter distinctness, round consistency, and quorum size.

    Fast finalizations additionally require the subject to have rank 0;
    pass ``subject_rank`` when the subject block is known.  Unlock proofs
    are only checked at the vote level here: their unlock condition is
    support-set arithmetic over several blocks and is evaluated by the
    engine via the tally kernel.  ``quorum_override`` replaces the
    kind-derived threshold (used by the engine so mutation forks weaken
    verification together with assembly).
    """
    want_kind = _AGG_VOTE_KIND.get(agg.kind)
    if want_kind is None:
        return False
    seen = set()
    for v in agg.votes:
        if v.kind != want_kind or v.round != agg.round:
            return False
        if v.voter in seen:
            return False
        if agg.kind != UNLOCK_PROOF and v.block_hash != agg.subject:
            return False
        if not registry.verify_vote(v):
            return False
        seen.add(v.voter)
    if agg.kind == NOTARIZATION or agg.kind == FINALIZATION:
        need = cfg.notarization_quorum() if quorum_override is None else quorum_override
        return len(seen) >= need
    if agg.kind == FAST_FINALIZATION:
        if subject_rank is not None and subject_rank != 0:
            return False
        need = cfg.fast_quorum() if quorum_override is None else quorum_override
        return len(seen) >= need
    return True  # unlock proof: vote contents valid; condition checked by caller
