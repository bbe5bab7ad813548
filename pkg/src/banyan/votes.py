"""Vote and aggregate types plus the three wire message shapes.

Aggregates store explicit voter sets rather than opaque multi-signatures;
the crypto provider can swap in real aggregation later without touching the
engine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .blocks import Block

# Vote kinds
NOTARIZATION_VOTE = "notarization"
FAST_VOTE = "fast"
FINALIZATION_VOTE = "finalization"

VOTE_KINDS = (NOTARIZATION_VOTE, FAST_VOTE, FINALIZATION_VOTE)

# Aggregate kinds
NOTARIZATION = "notarization_agg"
FINALIZATION = "finalization_agg"
FAST_FINALIZATION = "fast_finalization_agg"
UNLOCK_PROOF = "unlock_proof"


@dataclass(slots=True)
class Vote:
    kind: str
    voter: int
    round: int
    block_hash: bytes
    signature: tuple | None = None

    def key(self) -> tuple:
        return (self.kind, self.voter, self.round, self.block_hash)


@dataclass(slots=True)
class Aggregate:
    """A quorum of votes for one subject (or, for unlock proofs, a vote
    collection that may attest several blocks of the round)."""

    kind: str
    round: int
    subject: bytes
    votes: tuple[Vote, ...]

    def voters(self) -> set[int]:
        return {v.voter for v in self.votes}


@dataclass(slots=True)
class BlockMsg:
    """A proposed or relayed block with its parent's admission evidence.

    For blocks extending genesis both aggregates are None.  In ICC mode
    ``parent_unlock_proof`` is always None.
    """

    block: Block
    parent_notarization: Aggregate | None
    parent_unlock_proof: Aggregate | None

    @property
    def round(self) -> int:
        return self.block.round


@dataclass(slots=True)
class VoteMsg:
    vote: Vote

    @property
    def round(self) -> int:
        return self.vote.round


@dataclass(slots=True)
class AggregateMsg:
    aggregate: Aggregate

    @property
    def round(self) -> int:
        return self.aggregate.round


Message = BlockMsg | VoteMsg | AggregateMsg
