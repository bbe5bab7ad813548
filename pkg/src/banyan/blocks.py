"""Blocks, canonical hashing, payload generation, and the notarized block-tree.

A block hash is sha256 over a canonical little-endian encoding of
(round, proposer, rank, parent, payload digest), so traces are
bit-reproducible across runs.  Payloads are fixed-size seeded-random byte
vectors; the engine only ever carries their digest and size.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

HASH_LEN = 32
_HDR = struct.Struct("<QIIxxxx")  # round u64, proposer u32, rank u32, pad

GENESIS_PARENT = b"\x00" * HASH_LEN


def payload_digest(seed: int, proposer: int, rnd: int, size: int, variant: int = 0) -> bytes:
    """Digest of the deterministic payload a proposer generates for a round.

    ``variant`` lets an equivocating proposer derive a second, distinct
    payload for the same round.
    """
    tag = struct.pack("<qIQQI", seed, proposer & 0xFFFFFFFF, rnd, size, variant)
    return hashlib.sha256(b"payload" + tag).digest()


def payload_bytes(seed: int, proposer: int, rnd: int, size: int, variant: int = 0) -> bytes:
    """Materialize the payload itself (tests and size accounting only)."""
    tag = payload_digest(seed, proposer, rnd, size, variant)
    out = bytearray()
    counter = 0
    while len(out) < size:
        out += hashlib.sha256(tag + struct.pack("<I", counter)).digest()
        counter += 1
    return bytes(out[:size])


@dataclass(slots=True)
class Block:
    round: int
    proposer: int
    rank: int
    parent: bytes
    payload: bytes  # payload digest
    payload_size: int
    signature: tuple | None = None
    embedded_fast_vote: object | None = None  # Vote; present iff rank == 0
    hash: bytes = b""

    def __post_init__(self):
        if not self.hash:
            self.hash = block_hash(self.round, self.proposer, self.rank, self.parent, self.payload)


def block_hash(rnd: int, proposer: int, rank: int, parent: bytes, payload: bytes) -> bytes:
    return hashlib.sha256(_HDR.pack(rnd, proposer, rank) + parent + payload).digest()


def genesis_block() -> Block:
    """Round-0 root; notarized, finalized, and unlocked by definition."""
    return Block(
        round=0,
        proposer=0,
        rank=0,
        parent=GENESIS_PARENT,
        payload=hashlib.sha256(b"genesis").digest(),
        payload_size=0,
    )


GENESIS = genesis_block()

PATH_FAST = "fast"
PATH_SLOW = "slow"
PATH_IMPLICIT = "implicit"


class BlockNode:
    """A block plus this replica's local status flags and evidence for it."""

    __slots__ = (
        "block",
        "notarized",
        "unlocked",
        "finalized",
        "valid",
        "path",
        "notarization",
        "unlock_proof",
    )

    def __init__(self, block: Block):
        self.block = block
        self.notarized = False
        self.unlocked = False
        self.finalized = False
        self.valid = False
        self.path = None  # fast | slow | implicit once finalized
        self.notarization = None  # Aggregate evidence, once notarized
        self.unlock_proof = None  # Aggregate evidence, once unlocked via votes/proof

    @property
    def hash(self) -> bytes:
        return self.block.hash


class BlockTree:
    """One replica's view of the block-tree.

    A non-genesis node may only gain notarized status once its parent is
    present, notarized, and unlocked; marking helpers enforce that ordering.
    ``round_all_unlocked`` records rounds where the round-wide unlock
    condition fired (sticky: covers blocks received later).
    """

    def __init__(self):
        g = BlockNode(GENESIS)
        g.notarized = g.unlocked = g.finalized = g.valid = True
        self.nodes: dict[bytes, BlockNode] = {GENESIS.hash: g}
        self.by_round: dict[int, list[bytes]] = {0: [GENESIS.hash]}
        self.round_all_unlocked: set[int] = set()

    def __contains__(self, h: bytes) -> bool:
        return h in self.nodes

    def get(self, h: bytes) -> BlockNode | None:
        return self.nodes.get(h)

    def add(self, block: Block) -> BlockNode | None:
        """Insert a structurally-checked block; returns None if already known."""
        if block.hash in self.nodes:
            return None
        node = BlockNode(block)
        self.nodes[block.hash] = node
        self.by_round.setdefault(block.round, []).append(block.hash)
        return node

    def round_hashes(self, rnd: int) -> list[bytes]:
        return self.by_round.get(rnd, [])

    def chain_to(self, h: bytes, lo_round: int) -> list[BlockNode] | None:
        """Blocks on the path ending at ``h`` with round > lo_round, oldest first.

        Returns None if any block on the path is missing locally.
        """
        out = []
        node = self.nodes.get(h)
        while node is not None and node.block.round > lo_round:
            out.append(node)
            node = self.nodes.get(node.block.parent)
        if node is None:
            return None
        out.reverse()
        return out
