"""Pure-Python vote-tally kernel (fallback twin of the compiled extension).

One ``RoundTally`` instance holds a single replica's per-round vote
accounting: distinct-voter bitmasks per block for each vote kind, plus the
fast-vote support arithmetic behind the unlock conditions:

  condition 1:  |supp(b) u supp(non-leader blocks)| > threshold
  condition 2:  |supp(all blocks except the best-supported rank-0 block)| > threshold

Only blocks that have actually been received participate in the set unions;
fast votes for still-unknown hashes are retained and start counting the
moment the block arrives.  Ties for the best-supported rank-0 block break
toward the smallest block hash.
"""

from __future__ import annotations

NOTAR = 0
FAST = 1
FINAL = 2


class RoundTally:
    __slots__ = ("n", "blocks", "masks")

    def __init__(self, n: int):
        self.n = n
        self.blocks: dict[bytes, int] = {}  # received block hash -> rank
        self.masks = ({}, {}, {})  # per kind: block hash -> voter bitmask

    def add_block(self, h: bytes, rank: int) -> bool:
        if h in self.blocks:
            return False
        self.blocks[h] = rank
        return True

    def has_block(self, h: bytes) -> bool:
        return h in self.blocks

    def add_vote(self, kind: int, voter: int, h: bytes) -> int:
        """Record a vote; returns the new distinct count, or -1 for a duplicate."""
        masks = self.masks[kind]
        bit = 1 << voter
        cur = masks.get(h, 0)
        if cur & bit:
            return -1
        cur |= bit
        masks[h] = cur
        return cur.bit_count()

    def count(self, kind: int, h: bytes) -> int:
        return self.masks[kind].get(h, 0).bit_count()

    def voters(self, kind: int, h: bytes) -> list[int]:
        mask = self.masks[kind].get(h, 0)
        return [i for i in range(self.n) if mask >> i & 1]

    def supp(self, h: bytes) -> int:
        return self.masks[FAST].get(h, 0).bit_count()

    def fast_votes(self) -> list[tuple[int, bytes]]:
        """All (voter, block hash) fast-vote pairs seen this round."""
        out = []
        for h, mask in self.masks[FAST].items():
            for i in range(self.n):
                if mask >> i & 1:
                    out.append((i, h))
        return out

    def cond1(self, h: bytes, threshold: int) -> bool:
        fast = self.masks[FAST]
        union = fast.get(h, 0)
        for bh, rank in self.blocks.items():
            if rank != 0:
                union |= fast.get(bh, 0)
        return union.bit_count() > threshold

    def cond2(self, threshold: int) -> bool:
        fast = self.masks[FAST]
        best = None
        best_count = -1
        for bh, rank in self.blocks.items():
            if rank == 0:
                c = fast.get(bh, 0).bit_count()
                if c > best_count or (c == best_count and (best is None or bh < best)):
                    best = bh
                    best_count = c
        union = 0
        for bh in self.blocks:
            if bh != best:
                union |= fast.get(bh, 0)
        return union.bit_count() > threshold
