"""Checkpoint timestamping and the client fork-choice rule.

Consumer heights are grouped into periods of m (period(H) = H//m + 1, with
the height-0 genesis in period 1's preamble). The validator set for period e
is pinned by the highest provider block referred by consumer blocks of
periods 1..e-1; period 1's set is designated by genesis. A timestamp is a
(height, block id, quorum certificate) triple carried on the provider chain
as chunked data payloads.

A client walks the on-chain timestamps in inclusion order. A timestamp is
correct in its current context iff it is for a height above its tip in the
expected period, its certificate verifies against that period's validator
set, and it landed within k_d provider blocks of the period's reference
height. A correct timestamp whose chain it cannot fetch or validate is a
stop sign (halt rule 1); a correct, consistent one with a nearby correct
conflicting timestamp is another (halt rule 2); otherwise the client adopts
the chain. Between timestamps the client fast-forwards along uniquely
extending valid blocks while its provider view is within the k_d window.

Emergency timestamps cover every canonical block after the last one whose
correct timestamp is at least k_d + k_f blocks deep, and are sent on going
offline, on either halt, on a missing period timestamp, or on seeing two
correct timestamps for one period that do not belong to one chain.
"""

import enum
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .consensus import ConsumerBlock, GENESIS_BLOCK, GENESIS_ID
from .crypto import DapsPublicKey, Signature
from .finality import (
    ConfirmSig,
    FinalVote,
    verify_confirm_sig,
    verify_final_vote,
)
from .group import Point
from .provider import BondRegistry, EVIDENCE_MARKER


def unbonding_delay(k_c: int, k_f: int) -> int:
    """Provider blocks a deposit stays locked after duties end."""
    return 2 * k_c + 4 * k_f


def timestamp_delay(k_c: int, k_f: int) -> int:
    """Inclusion window for a period's timestamps, in provider blocks."""
    return 2 * k_c + k_f


def period_of(height: int, m: int) -> int:
    if height < 0:
        raise ValueError("height must be >= 0")
    if m < 2:
        raise ValueError("period length must be >= 2")
    return height // m + 1


def last_height_of_period(e: int, m: int) -> int:
    return e * m - 1


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    f: int
    m: int            # consumer heights per period
    k_c: int          # provider growth bound per confirmation span
    k_f: int          # provider inclusion bound
    duty_span: int    # provider blocks of duty per bond
    delta: int        # consensus message delay bound, in events

    def __post_init__(self):
        if self.n < 3 * self.f + 1:
            raise ValueError("need n >= 3f+1")
        if self.k_f < 2:
            raise ValueError("inclusion bound must be >= 2")

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    @property
    def k_d(self) -> int:
        return timestamp_delay(self.k_c, self.k_f)

    @property
    def k_u(self) -> int:
        return unbonding_delay(self.k_c, self.k_f)

    def period(self, height: int) -> int:
        return period_of(height, self.m)


class Mode(enum.Enum):
    DUMB_COVENANT = "dumb-covenant"
    DUMB_COMMITTEE = "dumb-committee"
    SMART = "smart"

    @property
    def dumb(self) -> bool:
        return self is not Mode.SMART


# ---------------------------------------------------------------------------
# on-chain payload formats: timestamps and misbehavior evidence
# ---------------------------------------------------------------------------

STAMP_MARKER = b"STMP"

_KIND_FINAL = 0
_KIND_CONFIRM = 1


@dataclass(frozen=True)
class Timestamp:
    height: int
    block_id: bytes
    cert: Tuple  # FinalVote... or ConfirmSig..., all for (height, block_id)

    def encode(self) -> bytes:
        kind = _KIND_FINAL if (not self.cert or isinstance(self.cert[0], FinalVote)) else _KIND_CONFIRM
        out = self.height.to_bytes(8, "big") + self.block_id + bytes([kind, len(self.cert)])
        for v in sorted(self.cert, key=lambda x: x.signer):
            out += v.signer.to_bytes(2, "big") + v.sig.encode()
        return out

    @classmethod
    def decode(cls, b: bytes) -> "Timestamp":
        if len(b) < 42:
            raise ValueError("timestamp payload too short")
        height = int.from_bytes(b[:8], "big")
        block_id = b[8:40]
        kind, count = b[40], b[41]
        if kind not in (_KIND_FINAL, _KIND_CONFIRM):
            raise ValueError("unknown certificate kind")
        body = b[42:]
        if len(body) != count * 66:
            raise ValueError("certificate length mismatch")
        votes = []
        for i in range(count):
            chunk = body[i * 66 : (i + 1) * 66]
            signer = int.from_bytes(chunk[:2], "big")
            sig = Signature.decode(chunk[2:])
            if kind == _KIND_FINAL:
                votes.append(FinalVote(height, block_id, signer, sig))
            else:
                votes.append(ConfirmSig(height, block_id, signer, sig))
        return cls(height, block_id, tuple(votes))


def stamp_payload(ts: Timestamp) -> bytes:
    return STAMP_MARKER + ts.encode()


def parse_stamp(payload: bytes) -> Optional[Timestamp]:
    if not payload.startswith(STAMP_MARKER):
        return None
    try:
        return Timestamp.decode(payload[len(STAMP_MARKER):])
    except ValueError:
        return None


def _encode_cert(block_id: bytes, cert: Sequence[ConfirmSig]) -> bytes:
    out = block_id + bytes([len(cert)])
    for v in sorted(cert, key=lambda x: x.signer):
        out += v.signer.to_bytes(2, "big") + v.sig.encode()
    return out


def evidence_payload(height: int, cert_a: Sequence[ConfirmSig], cert_b: Sequence[ConfirmSig]) -> bytes:
    """Two full confirmation certificates for one height, different blocks."""
    out = EVIDENCE_MARKER + height.to_bytes(8, "big")
    out += _encode_cert(cert_a[0].block_id, cert_a)
    out += _encode_cert(cert_b[0].block_id, cert_b)
    return out


def parse_evidence(payload: bytes) -> Optional[Tuple[int, Tuple[ConfirmSig, ...], Tuple[ConfirmSig, ...]]]:
    if not payload.startswith(EVIDENCE_MARKER):
        return None
    try:
        height = int.from_bytes(payload[4:12], "big")
        rest = payload[12:]
        certs = []
        for _ in range(2):
            block_id, count = rest[:32], rest[32]
            body, rest = rest[33 : 33 + count * 66], rest[33 + count * 66 :]
            if len(body) != count * 66:
                raise ValueError("truncated certificate")
            cert = []
            for i in range(count):
                chunk = body[i * 66 : (i + 1) * 66]
                cert.append(
                    ConfirmSig(
                        height, block_id,
                        int.from_bytes(chunk[:2], "big"),
                        Signature.decode(chunk[2:]),
                    )
                )
            certs.append(tuple(cert))
        if rest:
            raise ValueError("trailing bytes")
        return height, certs[0], certs[1]
    except (ValueError, IndexError):
        return None


@dataclass(frozen=True)
class OnchainTimestamp:
    ts: Timestamp
    inclusion_height: int  # provider height of the chunk completing it
    seq: int               # position in on-chain order


@dataclass
class ProviderView:
    """What a client can read off the provider chain at one instant."""

    height: int
    ref_height_of: Callable[[bytes], Optional[int]]
    timestamps: List[OnchainTimestamp]
    registry: BondRegistry


# ---------------------------------------------------------------------------
# validator schedule
# ---------------------------------------------------------------------------


class Schedule:
    """Derives per-period validator sets from chain references and bonds."""

    def __init__(self, params: ProtocolParams, genesis_set: Sequence[int]):
        self.params = params
        self.genesis_set = sorted(genesis_set)

    def ref_height_before_period(
        self, e: int, chain: Sequence[ConsumerBlock], view: ProviderView
    ) -> Optional[int]:
        """Highest provider height referred by chain blocks of periods 1..e-1
        (0 when no block of those periods refers anywhere)."""
        cutoff = last_height_of_period(e - 1, self.params.m) if e > 1 else 0
        best = 0
        for block in chain[1 : cutoff + 1]:
            h = view.ref_height_of(block.provider_ref)
            if h is None:
                return None
            best = max(best, h)
        return best

    def set_for_period(
        self, e: int, chain: Sequence[ConsumerBlock], view: ProviderView
    ) -> Optional[List[int]]:
        """Validator ids for period e, or None when the chain cannot justify
        the computation yet (missing blocks of earlier periods)."""
        if e <= 1:
            return list(self.genesis_set)
        cutoff = last_height_of_period(e - 1, self.params.m)
        if len(chain) <= cutoff:
            return None
        ref = self.ref_height_before_period(e, chain, view)
        if ref is None:
            return None
        if ref == 0:
            return list(self.genesis_set)
        return view.registry.bonded_ids_at(ref)

    def dump(self, upto_period: int, chain, view) -> List[str]:
        lines = []
        for e in range(1, upto_period + 1):
            s = self.set_for_period(e, chain, view)
            lines.append(f"period {e}: {s}")
        return lines


# ---------------------------------------------------------------------------
# client state and fork choice
# ---------------------------------------------------------------------------


@dataclass
class RuleEvent:
    rule: str
    ts_seq: Optional[int]
    provider_height: int
    detail: str = ""


class ClientState:
    """One client's fork-choice state. Everything here is a deterministic
    function of (delivered blocks, delivered votes, provider view), so two
    clients with identical inputs land in identical states."""

    def __init__(
        self,
        name: str,
        params: ProtocolParams,
        mode: Mode,
        schedule: Schedule,
        daps_pk_of: Callable[[int], Optional[DapsPublicKey]],
        vote_pk_of: Callable[[int], Optional[Point]],
        verify_final: Callable = verify_final_vote,
        verify_confirm: Callable = verify_confirm_sig,
    ):
        self.name = name
        self.params = params
        self.mode = mode
        self.schedule = schedule
        self.daps_pk_of = daps_pk_of
        self.vote_pk_of = vote_pk_of
        self.verify_final = verify_final
        self.verify_confirm = verify_confirm

        self.store: Dict[bytes, ConsumerBlock] = {GENESIS_ID: GENESIS_BLOCK}
        # vote pools, indexed by (height, block id) then signer
        self._final: Dict[Tuple[int, bytes], Dict[int, FinalVote]] = {}
        self._confirm: Dict[Tuple[int, bytes], Dict[int, ConfirmSig]] = {}
        self._slot_ids: Dict[Tuple[int, int], Set[bytes]] = {}
        self.conflict_slots: Set[Tuple[int, int]] = set()   # (signer, height)

        # the timestamped canonical chain: durable, only grows through the
        # update rule, and the anchor for every staleness / period / window
        # computation below
        self.stamped: List[ConsumerBlock] = [GENESIS_BLOCK]
        # fast-progress complement: blocks output ahead of the timestamps
        self.suffix: List[ConsumerBlock] = []
        self.halted: Optional[str] = None
        self._halt_chain: Optional[List[ConsumerBlock]] = None
        self.processed_seq = -1     # fork-choice cursor over on-chain stamps
        # timestamps sequenced ahead of their period (e.g. front-run by a
        # later period's stamp) wait here until the stamped chain catches up
        self._deferred: List[OnchainTimestamp] = []
        self._defer_logged: Set[int] = set()
        self.cert_seq = -1          # evidence-ingest cursor (runs even halted)
        self.rule_log: List[RuleEvent] = []
        self._valid_memo: Set[bytes] = set()
        self._emergency_sent: Set[Tuple[int, bytes]] = set()
        self._cond4_fired: Set[int] = set()
        self._cond5_fired: Set[int] = set()
        self.offline = False
        self._view: Optional[ProviderView] = None

    @property
    def canonical(self) -> List[ConsumerBlock]:
        """The output chain. A halted client outputs its timestamped chain
        only; otherwise the timestamped chain plus the fast-progress suffix."""
        if self.halted is not None:
            return self.stamped
        return self.stamped + self.suffix

    @property
    def last_ts_height(self) -> int:
        return self.stamped[-1].height

    def _emergency_chain(self) -> List[ConsumerBlock]:
        """Blocks eligible for emergency timestamps: the output as of the
        halt for halted clients, the live output otherwise."""
        if self.halted is not None and self._halt_chain is not None:
            return self._halt_chain
        return self.stamped + self.suffix

    def _set_halt(self, rule: str):
        self._halt_chain = self.stamped + self.suffix
        self.suffix = []
        self.halted = rule

    # -- feeding ------------------------------------------------------------

    def add_block(self, block: ConsumerBlock):
        self.store.setdefault(block.block_id(), block)

    def add_vote(self, vote):
        if isinstance(vote, FinalVote):
            bucket = self._final.setdefault((vote.height, vote.block_id), {})
            if vote.signer in bucket:
                return
            bucket[vote.signer] = vote
            slot = (vote.signer, vote.height)
            ids = self._slot_ids.setdefault(slot, set())
            ids.add(vote.block_id)
            if len(ids) > 1:
                self.conflict_slots.add(slot)
        elif isinstance(vote, ConfirmSig):
            bucket = self._confirm.setdefault((vote.height, vote.block_id), {})
            if vote.signer in bucket:
                return
            bucket[vote.signer] = vote
        else:
            raise TypeError(f"not a vote: {vote!r}")

    def all_votes(self) -> List:
        out: List = []
        for bucket in self._final.values():
            out.extend(bucket.values())
        for bucket in self._confirm.values():
            out.extend(bucket.values())
        return out

    def final_votes_in_conflicts(self) -> List[FinalVote]:
        out = []
        for (height, _bid), bucket in self._final.items():
            for vote in bucket.values():
                if (vote.signer, height) in self.conflict_slots:
                    out.append(vote)
        return out

    def confirm_conflict_pairs(self, quorum: int) -> List[Tuple[int, bytes, bytes]]:
        """(height, id_a, id_b) pairs where both sides hold >= quorum sigs."""
        by_height: Dict[int, List[bytes]] = {}
        for (height, bid), bucket in self._confirm.items():
            if len(bucket) >= quorum:
                by_height.setdefault(height, []).append(bid)
        out = []
        for height, ids in by_height.items():
            for i in range(len(ids)):
                for j in range(i + 1, len(ids)):
                    a, b = sorted((ids[i], ids[j]))
                    out.append((height, a, b))
        return out

    def confirm_cert(self, height: int, block_id: bytes, quorum: int) -> Optional[Tuple[ConfirmSig, ...]]:
        bucket = self._confirm.get((height, block_id), {})
        picked = []
        for signer in sorted(bucket):
            pk = self.vote_pk_of(signer)
            if pk is not None and self.verify_confirm(pk, bucket[signer]):
                picked.append(bucket[signer])
                if len(picked) >= quorum:
                    return tuple(picked)
        return None

    def ingest_timestamp_cert(self, ts: Timestamp):
        for v in ts.cert:
            self.add_vote(v)

    def ingest_new_onchain_certs(self, view: ProviderView):
        """Pull certificates off every new on-chain timestamp. Runs even for
        halted clients: halting stops block output, not evidence collection."""
        for ots in view.timestamps:
            if ots.seq > self.cert_seq:
                self.ingest_timestamp_cert(ots.ts)
                self.cert_seq = ots.seq

    # -- validity -----------------------------------------------------------

    def _quorum_ok(self, height: int, block_id: bytes, vset: Sequence[int]) -> bool:
        members = set(vset)
        need = self.params.quorum
        good = 0
        if self.mode.dumb:
            bucket = self._final.get((height, block_id), {})
            for signer, v in bucket.items():
                if signer not in members:
                    continue
                pk = self.daps_pk_of(signer)
                if pk is not None and self.verify_final(pk, v):
                    good += 1
                    if good >= need:
                        return True
            return False
        bucket = self._confirm.get((height, block_id), {})
        for signer, v in bucket.items():
            if signer not in members:
                continue
            pk = self.vote_pk_of(signer)
            if pk is not None and self.verify_confirm(pk, v):
                good += 1
                if good >= need:
                    return True
        return False

    def quorum_cert(
        self, height: int, block_id: bytes,
        chain: Optional[Sequence[ConsumerBlock]] = None,
    ) -> Optional[Tuple]:
        """A full verifying certificate from the pool, for timestamping."""
        e = self.params.period(max(height, 1))
        if chain is None:
            chain = self.canonical
        vset = self.schedule.set_for_period(e, chain, self._view)
        if vset is None:
            return None
        members = set(vset)
        picked = []
        if self.mode.dumb:
            bucket = self._final.get((height, block_id), {})
            for signer in sorted(bucket):
                if signer not in members:
                    continue
                pk = self.daps_pk_of(signer)
                if pk is not None and self.verify_final(pk, bucket[signer]):
                    picked.append(bucket[signer])
                    if len(picked) >= self.params.quorum:
                        return tuple(picked)
            return None
        bucket = self._confirm.get((height, block_id), {})
        for signer in sorted(bucket):
            if signer not in members:
                continue
            pk = self.vote_pk_of(signer)
            if pk is not None and self.verify_confirm(pk, bucket[signer]):
                picked.append(bucket[signer])
                if len(picked) >= self.params.quorum:
                    return tuple(picked)
        return None

    def resolve_chain(self, block_id: bytes):
        """("ok", chain) | ("unavailable", missing id) | ("invalid", reason)."""
        path: List[ConsumerBlock] = []
        cur = block_id
        while cur != GENESIS_ID:
            block = self.store.get(cur)
            if block is None:
                return ("unavailable", cur)
            path.append(block)
            cur = block.parent
        path.append(GENESIS_BLOCK)
        path.reverse()
        for idx, block in enumerate(path):
            if block.height != idx:
                return ("invalid", "heights not contiguous")
        for block in path[1:]:
            if not self._block_valid(block, path):
                return ("invalid", f"block {block.height} fails validity")
        return ("ok", path)

    def _block_valid(self, block: ConsumerBlock, chain: Sequence[ConsumerBlock]) -> bool:
        bid = block.block_id()
        if bid in self._valid_memo:
            return True
        if self._view.ref_height_of(block.provider_ref) is None:
            return False
        e = self.params.period(block.height)
        vset = self.schedule.set_for_period(e, chain, self._view)
        if vset is None:
            return False
        if not self._quorum_ok(block.height, bid, vset):
            return False
        self._valid_memo.add(bid)
        return True

    # -- fork choice --------------------------------------------------------

    def process(self, view: ProviderView) -> List[RuleEvent]:
        """One full pass: new on-chain timestamps, then fast progress.
        Returns the rule events fired during this pass."""
        self._view = view
        self.ingest_new_onchain_certs(view)
        if self.offline:
            return []
        fired: List[RuleEvent] = []
        if self.halted is None:
            pending = list(self._deferred)
            self._deferred = []
            for ots in view.timestamps:
                if ots.seq > self.processed_seq:
                    pending.append(ots)
                    self.processed_seq = ots.seq
            pending.sort(key=lambda o: o.seq)
            # a successful update can make a previously future-period
            # timestamp current, so retry the leftovers until a fixpoint
            progressed = True
            while pending and progressed and self.halted is None:
                progressed = False
                retry: List[OnchainTimestamp] = []
                for i, ots in enumerate(pending):
                    if self.halted is not None:
                        retry.extend(pending[i:])
                        break
                    ev = self._process_timestamp(ots, view)
                    if ev.rule == "defer_future":
                        if ots.seq not in self._defer_logged:
                            self._defer_logged.add(ots.seq)
                            fired.append(ev)
                            self.rule_log.append(ev)
                        retry.append(ots)
                        continue
                    fired.append(ev)
                    self.rule_log.append(ev)
                    if ev.rule == "update":
                        progressed = True
                pending = retry
            self._deferred = pending
        if self.halted is None:
            fired += self._fast_progress(view)
        return fired

    def _context(self, view: ProviderView) -> Tuple[int, int, int]:
        """(stamped tip height, expected timestamp period, reference height).

        All three derive from the timestamped chain, never from the
        fast-progress suffix: a client running ahead of the timestamps is
        still owed one timestamp per period, in order."""
        h = self.stamped[-1].height
        if h > 0:
            e = self.params.period(h)
            e_next = e + 1 if h == last_height_of_period(e, self.params.m) else e
        else:
            e_next = 1
        ref = self.schedule.ref_height_before_period(e_next, self.stamped, view)
        return h, e_next, 0 if ref is None else ref

    def _ts_correct(
        self, ots: OnchainTimestamp, e_expect: int, ref: int, view: ProviderView,
        chain_for_sets: Sequence[ConsumerBlock],
    ) -> bool:
        ts = ots.ts
        if self.params.period(ts.height) != e_expect:
            return False
        if ots.inclusion_height >= ref + self.params.k_d:
            return False
        vset = self.schedule.set_for_period(e_expect, chain_for_sets, view)
        if vset is None:
            return False
        return self._quorum_ok(ts.height, ts.block_id, vset)

    def _process_timestamp(self, ots: OnchainTimestamp, view: ProviderView) -> RuleEvent:
        h_tip, e_expect, ref = self._context(view)
        ts = ots.ts
        if ts.height <= h_tip:
            return RuleEvent("ignore_stale", ots.seq, view.height)
        if self.params.period(ts.height) > e_expect:
            # sequenced ahead of its period: not judgeable yet (its
            # reference and validator set hinge on state we lack), so park
            # it instead of discarding
            return RuleEvent("defer_future", ots.seq, view.height)
        if not self._ts_correct(ots, e_expect, ref, view, self.stamped):
            return RuleEvent("ignore_incorrect", ots.seq, view.height)
        status, result = self.resolve_chain(ts.block_id)
        if status != "ok":
            self._set_halt("rule1")
            return RuleEvent("halt_rule1", ots.seq, view.height, detail=str(result)[:64])
        chain = result
        if chain[-1].height != ts.height:
            return RuleEvent("ignore_height_mismatch", ots.seq, view.height)
        if chain[: len(self.stamped)] != self.stamped:
            return RuleEvent("ignore_inconsistent", ots.seq, view.height)
        edge = ref + self.params.k_d + self.params.k_f
        if view.height >= edge:
            other = self._conflicting_correct_ts(ots, chain, edge, view)
            if other is not None:
                self._set_halt("rule2")
                return RuleEvent(
                    "halt_rule2", ots.seq, view.height, detail=f"conflicts with seq {other.seq}"
                )
        # update: the timestamped chain grows; keep whatever part of the old
        # output still extends it, drop the rest
        old_output = self.stamped + self.suffix
        if len(old_output) > len(chain) and old_output[: len(chain)] == chain:
            self.suffix = old_output[len(chain):]
        else:
            self.suffix = []
        self.stamped = chain
        return RuleEvent("update", ots.seq, view.height)

    def _conflicting_correct_ts(
        self, ots: OnchainTimestamp, chain: List[ConsumerBlock], edge: int,
        view: ProviderView,
    ) -> Optional[OnchainTimestamp]:
        for other in view.timestamps:
            if other.seq == ots.seq or other.inclusion_height >= edge:
                continue
            o = other.ts
            if o.height < 1 or o.height > chain[-1].height:
                continue
            if chain[o.height].block_id() == o.block_id:
                continue
            e_o = self.params.period(o.height)
            vset = self.schedule.set_for_period(e_o, chain, view)
            if vset is None:
                continue
            if self._quorum_ok(o.height, o.block_id, vset):
                return other
        return None

    def _fast_progress(self, view: ProviderView) -> List[RuleEvent]:
        """Complement the timestamped chain with available, finalized blocks
        as long as they extend it uniquely and the window anchored at the
        stamped tip's period is still open. Already-output suffix blocks are
        never retracted here; later forks only stop further extension."""
        tip_h = self.stamped[-1].height
        e_tip = self.params.period(tip_h) if tip_h > 0 else 1
        ref = self.schedule.ref_height_before_period(e_tip, self.stamped, view)
        if ref is None:
            return []
        fired: List[RuleEvent] = []
        while view.height < ref + self.params.k_d:
            chain = self.stamped + self.suffix
            tip = chain[-1]
            tip_id = tip.block_id()
            valid_children = []
            for b in self.store.values():
                if b.parent == tip_id and b.height == tip.height + 1:
                    if self._block_valid(b, chain + [b]):
                        valid_children.append(b)
            unique_ids = {c.block_id() for c in valid_children}
            if len(unique_ids) > 1:
                fired.append(
                    RuleEvent("suffix_fork", None, view.height,
                              detail=f"{len(unique_ids)} valid children")
                )
                break
            if not valid_children:
                break
            extension = valid_children[0]
            self.suffix = self.suffix + [extension]
            fired.append(
                RuleEvent("suffix_extend", None, view.height,
                          detail=extension.block_id().hex()[:16])
            )
        for ev in fired:
            self.rule_log.append(ev)
        return fired

    # -- emergency timestamps -----------------------------------------------

    def _correct_onchain_ts_for(
        self, view: ProviderView, chain: Sequence[ConsumerBlock],
    ) -> Dict[Tuple[int, bytes], OnchainTimestamp]:
        """Correct-in-retrospect timestamps of the given chain's blocks."""
        out = {}
        for ots in view.timestamps:
            ts = ots.ts
            if ts.height < 1 or ts.height >= len(chain):
                continue
            if chain[ts.height].block_id() != ts.block_id:
                continue
            e = self.params.period(ts.height)
            ref = self.schedule.ref_height_before_period(e, chain, view)
            if ref is None or ots.inclusion_height >= ref + self.params.k_d:
                continue
            vset = self.schedule.set_for_period(e, chain, view)
            if vset is None or not self._quorum_ok(ts.height, ts.block_id, vset):
                continue
            key = (ts.height, ts.block_id)
            if key not in out:
                out[key] = ots
        return out

    def emergency_timestamps(self, view: ProviderView, reason: str) -> List[Timestamp]:
        """Timestamps for every output block after the last one with a
        correct on-chain timestamp at or below height view.height - k_d - k_f.
        A halted client stamps the output it held when it halted."""
        self._view = view
        base = self._emergency_chain()
        deep = view.height - self.params.k_d - self.params.k_f
        correct = self._correct_onchain_ts_for(view, base)
        anchor = 0
        for (h, _bid), ots in correct.items():
            if ots.inclusion_height <= deep and h > anchor:
                anchor = h
        out = []
        for block in base[anchor + 1 :]:
            key = (block.height, block.block_id())
            if key in self._emergency_sent:
                continue
            cert = self.quorum_cert(block.height, block.block_id(), chain=base)
            if cert is None:
                continue
            self._emergency_sent.add(key)
            out.append(Timestamp(block.height, block.block_id(), cert))
        if out:
            self.rule_log.append(
                RuleEvent(f"emergency_{reason}", None, view.height, detail=f"{len(out)} ts")
            )
        return out

    def check_emergency_conditions(self, view: ProviderView) -> List[Timestamp]:
        """Conditions 4 and 5: missing or mutually inconsistent period
        timestamps. Conditions 1-3 are triggered by the caller (going
        offline) or by the halt transitions."""
        if self.halted is not None or self.offline:
            return []
        self._view = view
        out: List[Timestamp] = []
        chain = self.stamped + self.suffix
        tip_h = chain[-1].height
        correct = self._correct_onchain_ts_for(view, chain)
        # condition 4: a completed period's last block with no correct
        # timestamp while the provider chain has reached ref + k_d
        e = 1
        while last_height_of_period(e, self.params.m) <= tip_h:
            h_last = last_height_of_period(e, self.params.m)
            ref = self.schedule.ref_height_before_period(e, chain, view)
            if ref is not None and view.height >= ref + self.params.k_d and e not in self._cond4_fired:
                bid = chain[h_last].block_id()
                if (h_last, bid) not in correct:
                    self._cond4_fired.add(e)
                    out += self.emergency_timestamps(view, "cond4")
            e += 1
        # condition 5: two correct timestamps within one period that are not
        # one chain (conflicting, or one side unresolvable)
        by_period: Dict[int, List[OnchainTimestamp]] = {}
        for ots in view.timestamps:
            ts = ots.ts
            if ts.height < 1:
                continue
            e_o = self.params.period(ts.height)
            ref = self.schedule.ref_height_before_period(e_o, chain, view)
            if ref is None or ots.inclusion_height >= ref + self.params.k_d:
                continue
            vset = self.schedule.set_for_period(e_o, chain, view)
            if vset is None:
                continue
            if not self._quorum_ok(ts.height, ts.block_id, vset):
                continue
            by_period.setdefault(e_o, []).append(ots)
        for e_o, lst in by_period.items():
            if e_o in self._cond5_fired or len(lst) < 2:
                continue
            trouble = False
            for i in range(len(lst)):
                for j in range(i + 1, len(lst)):
                    a, b = lst[i].ts, lst[j].ts
                    if a.height == b.height and a.block_id != b.block_id:
                        trouble = True
                    else:
                        lo, hi = (a, b) if a.height < b.height else (b, a)
                        status, result = self.resolve_chain(hi.block_id)
                        if status != "ok":
                            trouble = True
                        elif result[lo.height].block_id() != lo.block_id:
                            trouble = True
                    if trouble:
                        break
                if trouble:
                    break
            if trouble:
                self._cond5_fired.add(e_o)
                out += self.emergency_timestamps(view, "cond5")
        return out

    def go_offline(self, view: ProviderView) -> List[Timestamp]:
        """Condition 1: the client stops participating after this."""
        out = self.emergency_timestamps(view, "cond1")
        self.offline = True
        return out

    # -- replay identity ------------------------------------------------------

    def snapshot(self) -> dict:
        """Deterministic digest of everything fork-choice-relevant."""
        return {
            "name": self.name,
            "stamped": [b.block_id().hex() for b in self.stamped],
            "canonical": [b.block_id().hex() for b in self.canonical],
            "halted": self.halted,
            "offline": self.offline,
            "processed_seq": self.processed_seq,
            "deferred": [o.seq for o in self._deferred],
            "rules": [(e.rule, e.ts_seq, e.provider_height) for e in self.rule_log],
        }
