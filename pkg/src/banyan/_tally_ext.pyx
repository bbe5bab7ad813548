# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled vote-tally kernel: the hot per-delivery arithmetic.

Drop-in twin of ``_tally_py.RoundTally`` restricted to n <= 64 so voter
sets fit in one machine word; the selector in ``banyan.tally`` falls back
to the pure twin for larger networks.
"""

from libc.stdint cimport uint64_t

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil

NOTAR = 0
FAST = 1
FINAL = 2


cdef class RoundTally:
    cdef public int n
    cdef dict blocks          # block hash -> rank
    cdef dict m_notar, m_fast, m_final

    def __init__(self, int n):
        if n > 64:
            raise ValueError("compiled tally supports at most 64 replicas")
        self.n = n
        self.blocks = {}
        self.m_notar = {}
        self.m_fast = {}
        self.m_final = {}

    cdef dict _mask(self, int kind):
        if kind == 0:
            return self.m_notar
        if kind == 1:
            return self.m_fast
        return self.m_final

    def add_block(self, bytes h, int rank):
        if h in self.blocks:
            return False
        self.blocks[h] = rank
        return True

    def has_block(self, bytes h):
        return h in self.blocks

    def add_vote(self, int kind, int voter, bytes h):
        cdef dict masks = self._mask(kind)
        cdef uint64_t bit = (<uint64_t>1) << voter
        cdef uint64_t cur = masks.get(h, 0)
        if cur & bit:
            return -1
        cur |= bit
        masks[h] = cur
        return __builtin_popcountll(cur)

    def count(self, int kind, bytes h):
        cdef uint64_t cur = self._mask(kind).get(h, 0)
        return __builtin_popcountll(cur)

    def voters(self, int kind, bytes h):
        cdef uint64_t mask = self._mask(kind).get(h, 0)
        cdef int i
        out = []
        for i in range(self.n):
            if (mask >> i) & 1:
                out.append(i)
        return out

    def supp(self, bytes h):
        cdef uint64_t cur = self.m_fast.get(h, 0)
        return __builtin_popcountll(cur)

    def fast_votes(self):
        cdef uint64_t mask
        cdef int i
        out = []
        for h, m in self.m_fast.items():
            mask = m
            for i in range(self.n):
                if (mask >> i) & 1:
                    out.append((i, h))
        return out

    def cond1(self, bytes h, int threshold):
        cdef uint64_t union_mask = self.m_fast.get(h, 0)
        cdef uint64_t m
        for bh, rank in self.blocks.items():
            if rank != 0:
                m = self.m_fast.get(bh, 0)
                union_mask |= m
        return __builtin_popcountll(union_mask) > threshold

    def cond2(self, int threshold):
        cdef uint64_t m, union_mask
        cdef int c, best_count = -1
        best = None
        for bh, rank in self.blocks.items():
            if rank == 0:
                m = self.m_fast.get(bh, 0)
                c = __builtin_popcountll(m)
                if c > best_count or (c == best_count and (best is None or bh < best)):
                    best = bh
                    best_count = c
        union_mask = 0
        for bh in self.blocks:
            if bh != best:
                m = self.m_fast.get(bh, 0)
                union_mask |= m
        return __builtin_popcountll(union_mask) > threshold
