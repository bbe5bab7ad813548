"""The replica engine: a pure, deterministic event-driven state machine.

Inputs are timestamped deliveries and timer ticks; outputs are broadcasts
and trace records (including finalized-payload outputs).  Identical input
sequences produce identical output sequences, byte for byte.

The engine runs in one of two modes:

* ``banyan``: the full protocol with fast votes, unlock conditions,
  unlock proofs, and one-round-trip fast finalization of rank-0 blocks.
* ``icc``: the slow-path baseline.  Fast votes and unlock proofs are never
  emitted, every notarized block counts as unlocked, and round advancement
  does not wait on a fast vote.

Each input event is processed run-to-completion: sub-handlers fire until no
guard holds.  Malformed or unverifiable messages are ignored; Byzantine
noise must never crash an honest replica.
"""

from __future__ import annotations

from .blocks import (
    GENESIS,
    HASH_LEN,
    PATH_FAST,
    PATH_IMPLICIT,
    PATH_SLOW,
    Block,
    BlockNode,
    BlockTree,
    payload_digest,
)
from .config import MODE_ICC, ProtocolConfig
from .crypto import KeyRegistry, aggregate, verify_aggregate
from .tally import FAST, FINAL, NOTAR, new_tally
from .votes import (
    FAST_FINALIZATION,
    FAST_VOTE,
    FINALIZATION,
    FINALIZATION_VOTE,
    NOTARIZATION,
    NOTARIZATION_VOTE,
    UNLOCK_PROOF,
    Aggregate,
    AggregateMsg,
    BlockMsg,
    Vote,
    VoteMsg,
)

# Engine mutations used by the checker sensitivity tests.  Applied to every
# replica of a run: each weakens one rule the safety argument relies on.
MUT_QUORUM_MINUS_ONE = "quorum_minus_one"
MUT_UNLOCK_GEQ = "unlock_geq"
MUT_DOUBLE_FAST_VOTE = "double_fast_vote"
MUTATIONS = (MUT_QUORUM_MINUS_ONE, MUT_UNLOCK_GEQ, MUT_DOUBLE_FAST_VOTE)

_KIND_TO_INT = {NOTARIZATION_VOTE: NOTAR, FAST_VOTE: FAST, FINALIZATION_VOTE: FINAL}


class _RoundCtx:
    __slots__ = ("tally", "votes_by", "fast_votes")

    def __init__(self, n: int):
        self.tally = new_tally(n)
        self.votes_by: dict[tuple, list[Vote]] = {}  # (kind_int, hash) -> votes
        self.fast_votes: list[Vote] = []  # naive unlock-proof collection


class Engine:
    """One replica.  Drive it with ``handle``; never touch internals mid-run."""

    def __init__(
        self,
        cfg: ProtocolConfig,
        replica_id: int,
        registry: KeyRegistry,
        payload_size: int = 0,
        run_seed: int = 0,
        mutation: str | None = None,
    ):
        if mutation is not None and mutation not in MUTATIONS:
            raise ValueError(f"unknown mutation {mutation!r}")
        self.cfg = cfg
        self.rid = replica_id
        self.registry = registry
        self.payload_size = payload_size
        self.run_seed = run_seed
        self.mutation = mutation
        self.icc = cfg.mode == MODE_ICC

        self.quorum = cfg.notarization_quorum() - (1 if mutation == MUT_QUORUM_MINUS_ONE else 0)
        self.fast_q = cfg.fast_quorum()
        self.unlock_thr = cfg.unlock_threshold() - (1 if mutation == MUT_UNLOCK_GEQ else 0)

        self.tree = BlockTree()
        self.rounds: dict[int, _RoundCtx] = {}
        self.pending_aggs: list[Aggregate] = []

        self.k = 0  # 0 until the first input starts round 1
        self.k_max = 0
        self.t0 = 0.0
        self.now = 0.0
        self.proposed = False
        self.fast_vote_sent = False
        self.N: set[bytes] = set()
        self.b_p = GENESIS.hash

        self._msgs: list = []
        self._recs: list = []

    # ------------------------------------------------------------------ API

    def handle(self, inp) -> tuple[list, list]:
        """Process one input: ("timer", now) or ("deliver", message, now).

        Returns (broadcasts, trace records) produced by this input.
        """
        self._msgs = []
        self._recs = []
        now = inp[-1]
        if now < self.now:
            raise ValueError("timestamps must be non-decreasing")
        self.now = now
        if self.k == 0:
            self.k = 1
            self._enter_round()
        if inp[0] == "deliver":
            self._ingest(inp[1])
        self._pump()
        return self._msgs, self._recs

    def next_wakeup(self) -> float | None:
        """Earliest future time at which a time-gated guard may fire."""
        best = None
        if self.k == 0:
            return None
        if not self.proposed:
            t = self.t0 + self.cfg.proposal_delay(self.cfg.rank_of(self.rid, self.k))
            if t > self.now:
                best = t
        for h in self.tree.round_hashes(self.k):
            if h in self.N:
                continue
            t = self.t0 + self.cfg.notarization_delay(self.tree.nodes[h].block.rank)
            if t > self.now and (best is None or t < best):
                best = t
        return best

    # ------------------------------------------------------------- ingest

    def _ingest(self, msg) -> None:
        if type(msg) is VoteMsg:
            self._ingest_vote(msg.vote)
        elif type(msg) is BlockMsg:
            self._ingest_block_msg(msg)
        elif type(msg) is AggregateMsg:
            self._ingest_aggregate(msg.aggregate)

    def _ctx(self, rnd: int) -> _RoundCtx:
        ctx = self.rounds.get(rnd)
        if ctx is None:
            ctx = _RoundCtx(self.cfg.n)
            self.rounds[rnd] = ctx
        return ctx

    def _ingest_vote(self, vote: Vote) -> None:
        kind = _KIND_TO_INT.get(vote.kind)
        if kind is None or vote.round < 1:
            return
        if self.icc and kind == FAST:
            return
        if not self.registry.verify_vote(vote):
            return
        ctx = self._ctx(vote.round)
        if ctx.tally.add_vote(kind, vote.voter, vote.block_hash) < 0:
            return  # duplicate
        ctx.votes_by.setdefault((kind, vote.block_hash), []).append(vote)
        if kind == FAST:
            ctx.fast_votes.append(vote)

    def _ingest_block_msg(self, msg: BlockMsg) -> None:
        b = msg.block
        if not self._block_well_formed(b):
            return
        if msg.parent_notarization is not None:
            self._ingest_aggregate(msg.parent_notarization)
        if msg.parent_unlock_proof is not None:
            self._ingest_aggregate(msg.parent_unlock_proof)
        node = self.tree.add(b)
        if node is not None:
            self._ctx(b.round).tally.add_block(b.hash, b.rank)
        if b.embedded_fast_vote is not None:
            self._ingest_vote(b.embedded_fast_vote)

    def _block_well_formed(self, b: Block) -> bool:
        cfg = self.cfg
        if b.round < 1 or not 0 <= b.proposer < cfg.n:
            return False
        if len(b.parent) != HASH_LEN:
            return False
        if b.rank != cfg.rank_of(b.proposer, b.round):
            return False
        if not self.registry.verify(b.proposer, b"blk" + b.hash, b.signature):
            return False
        fv = b.embedded_fast_vote
        if self.icc:
            return fv is None
        if b.rank == 0:
            return (
                fv is not None
                and fv.kind == FAST_VOTE
                and fv.voter == b.proposer
                and fv.round == b.round
                and fv.block_hash == b.hash
                and self.registry.verify_vote(fv)
            )
        return fv is None

    def _ingest_aggregate(self, agg: Aggregate) -> None:
        if agg.round < 1:
            return
        if self.icc and agg.kind in (UNLOCK_PROOF, FAST_FINALIZATION):
            return
        if not self._verify_agg(agg):
            return
        for v in agg.votes:
            self._ingest_vote(v)
        if self._agg_obsolete(agg):
            return
        if agg not in self.pending_aggs:
            self.pending_aggs.append(agg)

    def _verify_agg(self, agg: Aggregate) -> bool:
        # Quorum thresholds come from the engine so mutations apply to
        # verification as well as assembly.
        if agg.kind in (NOTARIZATION, FINALIZATION):
            override = self.quorum
        elif agg.kind == FAST_FINALIZATION:
            override = self.fast_q
        elif agg.kind == UNLOCK_PROOF:
            override = None
        else:
            return False
        return verify_aggregate(agg, self.cfg, self.registry, quorum_override=override)

    def _agg_obsolete(self, agg: Aggregate) -> bool:
        node = self.tree.get(agg.subject)
        if agg.kind == NOTARIZATION:
            return node is not None and node.notarized
        if agg.kind == UNLOCK_PROOF:
            return node is not None and node.unlocked
        return agg.round <= self.k_max or (node is not None and node.finalized)

    # --------------------------------------------------------------- pump

    def _pump(self) -> None:
        while True:
            acted = (
                self._maybe_propose()
                or self._maybe_notarize_vote()
                or self._assemble_notarizations()
                or self._apply_pending_aggs()
                or self._refresh_unlocks()
                or self._maybe_finalize()
                or self._maybe_advance()
            )
            if not acted:
                return

    def _window(self):
        return range(max(1, self.k_max), self.k + 1)

    # Alg. 1: propose once the rank-proportional delay has passed.
    def _maybe_propose(self) -> bool:
        if self.proposed or self.k == 0:
            return False
        rank = self.cfg.rank_of(self.rid, self.k)
        if self.now < self.t0 + self.cfg.proposal_delay(rank):
            return False
        parent = self.tree.nodes[self.b_p]
        payload = payload_digest(self.run_seed, self.rid, self.k, self.payload_size)
        b = Block(
            round=self.k,
            proposer=self.rid,
            rank=rank,
            parent=self.b_p,
            payload=payload,
            payload_size=self.payload_size,
        )
        b.signature = self.registry.sign(self.rid, b"blk" + b.hash)
        if not self.icc and rank == 0:
            b.embedded_fast_vote = self.registry.make_vote(FAST_VOTE, self.rid, self.k, b.hash)
            self.fast_vote_sent = True
        self.proposed = True
        self._rec("propose", self.k, b.hash, parent=b.parent)
        self._bcast(
            BlockMsg(
                block=b,
                parent_notarization=parent.notarization,
                parent_unlock_proof=None if self.icc else parent.unlock_proof,
            )
        )
        return True

    # Alg. 1: relay + notarization-vote the lowest-rank valid block(s) of the
    # current round, adding a fast vote to the round's first one.
    def _maybe_notarize_vote(self) -> bool:
        if self.k == 0:
            return False
        nodes = self.tree.nodes
        best_rank = None
        for h in self.tree.round_hashes(self.k):
            node = nodes[h]
            if self._valid(node) and (best_rank is None or node.block.rank < best_rank):
                best_rank = node.block.rank
        if best_rank is None:
            return False
        candidates = []
        for h in self.tree.round_hashes(self.k):
            if h in self.N:
                continue
            node = nodes[h]
            if not node.valid or node.block.rank != best_rank:
                continue
            if self.now < self.t0 + self.cfg.notarization_delay(best_rank):
                continue
            candidates.append(node)
        if not candidates:
            return False
        node = min(candidates, key=lambda nd: nd.hash)
        b = node.block
        if b.proposer != self.rid:
            self._bcast(
                BlockMsg(
                    block=b,
                    parent_notarization=self.tree.nodes[b.parent].notarization,
                    parent_unlock_proof=None if self.icc else self.tree.nodes[b.parent].unlock_proof,
                )
            )
        self.N.add(b.hash)
        if not self.icc and (not self.fast_vote_sent or self.mutation == MUT_DOUBLE_FAST_VOTE):
            self._bcast(VoteMsg(self.registry.make_vote(FAST_VOTE, self.rid, self.k, b.hash)))
            self.fast_vote_sent = True
        self._bcast(VoteMsg(self.registry.make_vote(NOTARIZATION_VOTE, self.rid, self.k, b.hash)))
        return True

    # Alg. 2: combine a quorum of notarization votes into a notarization.
    def _assemble_notarizations(self) -> bool:
        for rnd in self._window():
            ctx = self.rounds.get(rnd)
            if ctx is None:
                continue
            for h in self.tree.round_hashes(rnd):
                node = self.tree.nodes[h]
                if node.notarized or not self._valid(node):
                    continue
                if ctx.tally.count(NOTAR, h) >= self.quorum:
                    agg = aggregate(NOTARIZATION, rnd, h, ctx.votes_by[(NOTAR, h)])
                    self._mark_notarized(node, agg)
                    return True
        return False

    def _apply_pending_aggs(self) -> bool:
        # Handles at most one aggregate per call (the pump loops); any
        # removal returns immediately so index arithmetic stays valid.
        for i, agg in enumerate(self.pending_aggs):
            node = self.tree.get(agg.subject)
            if self._agg_obsolete(agg):
                del self.pending_aggs[i]
                return True
            if node is None or not self._valid(node):
                continue
            if agg.kind == NOTARIZATION:
                del self.pending_aggs[i]
                self._mark_notarized(node, agg)
                return True
            if agg.kind == UNLOCK_PROOF:
                del self.pending_aggs[i]
                if self._unlock_proof_holds(agg):
                    self._mark_unlocked(node, proof=agg)
                return True
            # finalization / fast finalization
            if agg.kind == FAST_FINALIZATION and node.block.rank != 0:
                del self.pending_aggs[i]
                return True
            if self.tree.chain_to(agg.subject, self.k_max) is None:
                continue
            del self.pending_aggs[i]
            path = PATH_FAST if agg.kind == FAST_FINALIZATION else PATH_SLOW
            self._finalize(node, path, agg)
            return True
        return False

    def _unlock_proof_holds(self, agg: Aggregate) -> bool:
        """Re-evaluate the unlock conditions over exactly the proof's votes.

        Referenced blocks we have not received are treated as non-leader
        blocks: that can only enlarge the condition-1 union and the
        condition-2 remainder, which the quorum counting argument tolerates
        regardless of how Byzantine voters label their subjects.
        """
        probe = new_tally(self.cfg.n)
        for v in agg.votes:
            node = self.tree.get(v.block_hash)
            rank = node.block.rank if node is not None else 1
            probe.add_block(v.block_hash, rank)
            probe.add_vote(FAST, v.voter, v.block_hash)
        return probe.cond1(agg.subject, self.unlock_thr) or probe.cond2(self.unlock_thr)

    # Definition of unlocked blocks: condition 1 per block, condition 2
    # round-wide and sticky; finalized blocks are unlocked by definition.
    def _refresh_unlocks(self) -> bool:
        if self.icc:
            return False
        changed = False
        for rnd in self._window():
            ctx = self.rounds.get(rnd)
            if ctx is None:
                continue
            sticky = rnd in self.tree.round_all_unlocked
            if not sticky and ctx.tally.cond2(self.unlock_thr):
                self.tree.round_all_unlocked.add(rnd)
                sticky = True
            for h in self.tree.round_hashes(rnd):
                node = self.tree.nodes[h]
                if node.unlocked or not self._valid(node):
                    continue
                if sticky or ctx.tally.cond1(h, self.unlock_thr):
                    self._mark_unlocked(node, snapshot_round=rnd)
                    changed = True
        return changed

    # Alg. 2 finalization guard, all three disjuncts.
    def _maybe_finalize(self) -> bool:
        for rnd in self._window():
            if rnd <= self.k_max:
                continue
            ctx = self.rounds.get(rnd)
            if ctx is None:
                continue
            for h in self.tree.round_hashes(rnd):
                node = self.tree.nodes[h]
                if node.finalized or not self._valid(node):
                    continue
                if ctx.tally.count(FINAL, h) >= self.quorum:
                    agg = aggregate(FINALIZATION, rnd, h, ctx.votes_by[(FINAL, h)])
                    self._finalize(node, PATH_SLOW, agg)
                    return True
                if (
                    not self.icc
                    and node.block.rank == 0
                    and ctx.tally.count(FAST, h) >= self.fast_q
                ):
                    agg = aggregate(FAST_FINALIZATION, rnd, h, ctx.votes_by[(FAST, h)])
                    self._finalize(node, PATH_FAST, agg)
                    return True
        return False

    # Alg. 2: move to round k+1 once an unlocked block is notarized (and a
    # fast vote went out); broadcast the evidence, finalization-vote if we
    # voted for nothing else.
    def _maybe_advance(self) -> bool:
        if self.k == 0:
            return False
        if not self.icc and not self.fast_vote_sent:
            return False
        chosen = None
        for h in self.tree.round_hashes(self.k):
            node = self.tree.nodes[h]
            if not node.notarized or not (node.unlocked or self.icc):
                continue
            if not self._valid(node):
                continue
            if chosen is None or (node.block.rank, node.hash) < (chosen.block.rank, chosen.hash):
                chosen = node
        if chosen is None:
            return False
        b = chosen.block
        self._bcast(AggregateMsg(chosen.notarization))
        if not self.icc:
            proof = chosen.unlock_proof
            if proof is None:
                proof = self._build_unlock_proof(self.k, b.hash)
            if proof is not None:
                self._bcast(AggregateMsg(proof))
        if self.N <= {b.hash}:
            self._bcast(
                VoteMsg(self.registry.make_vote(FINALIZATION_VOTE, self.rid, self.k, b.hash))
            )
        self.b_p = b.hash
        self.k += 1
        self._enter_round()
        return True

    def _enter_round(self) -> None:
        self.t0 = self.now
        self.proposed = False
        self.fast_vote_sent = False
        self.N = set()
        self._ctx(self.k)
        self._rec("enter_round", self.k)

    # ------------------------------------------------------------ actions

    def _valid(self, node: BlockNode) -> bool:
        """Alg. 2 validity: extends a notarized (and, in banyan mode,
        unlocked) block of the previous round; structural checks happened
        at ingest."""
        if node.valid:
            return True
        b = node.block
        parent = self.tree.get(b.parent)
        if parent is None or parent.block.round != b.round - 1:
            return False
        if not parent.notarized:
            return False
        if not self.icc and not parent.unlocked:
            return False
        node.valid = True
        return True

    def _mark_notarized(self, node: BlockNode, agg: Aggregate) -> None:
        node.notarized = True
        node.notarization = agg
        self._rec("notarized", node.block.round, node.hash)
        if self.icc and not node.unlocked:
            # Slow path has no lock concept; keep the trace uniform.
            node.unlocked = True
            self._rec("unlocked", node.block.round, node.hash)

    def _mark_unlocked(self, node: BlockNode, proof=None, snapshot_round=None) -> None:
        node.unlocked = True
        if proof is not None:
            node.unlock_proof = proof
        elif snapshot_round is not None:
            node.unlock_proof = self._build_unlock_proof(snapshot_round, node.hash)
        self._rec("unlocked", node.block.round, node.hash)

    def _build_unlock_proof(self, rnd: int, subject: bytes) -> Aggregate | None:
        ctx = self.rounds.get(rnd)
        if ctx is None or not ctx.fast_votes:
            return None
        return aggregate(UNLOCK_PROOF, rnd, subject, ctx.fast_votes)

    def _finalize(self, node: BlockNode, path: str, agg: Aggregate) -> None:
        chain = self.tree.chain_to(node.hash, self.k_max)
        if chain is None:  # unreachable for valid blocks; guard against noise
            return
        self._bcast(AggregateMsg(agg))
        for anc in chain:
            anc.finalized = True
            anc.path = path if anc is node else PATH_IMPLICIT
            if not anc.unlocked:
                anc.unlocked = True
                self._rec("unlocked", anc.block.round, anc.hash)
            self._rec("output", anc.block.round, anc.hash, path=anc.path, parent=anc.block.parent)
        self.k_max = node.block.round

    # ------------------------------------------------------------ helpers

    def _bcast(self, msg) -> None:
        self._msgs.append(("bcast", msg))

    def _rec(self, kind, rnd=None, h=None, vote=None, path=None, parent=None) -> None:
        self._recs.append(
            (
                self.now,
                kind,
                self.rid,
                None,
                rnd,
                h.hex() if h is not None else None,
                vote,
                path,
                parent.hex() if parent is not None else None,
            )
        )
