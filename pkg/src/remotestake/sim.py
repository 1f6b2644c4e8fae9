"""Deterministic whole-protocol simulator.

One World couples a provider chain (mined on a fixed tick cadence), a set of
consumer validators running the consensus core plus the finality layer, a
watchtower, and a set of fork-choice clients. Time is a bare event counter;
every actor derives its randomness from the run seed, so a (scenario, seed)
pair replays to a byte-identical trace.

The adversary never edits honest code. Its whole power is: the keys of the
ids listed as adversarial (it may sign anything with them), scheduling of
message delivery (bounded for honest senders by max(send, GST) + delta),
and bounded deferral of provider inclusion (within the k_f window).

The trace is a list of flat JSON-able records; the safety and liveness
checkers are pure functions of the trace.
"""

import heapq
import itertools
import json
import random
import threading
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .consensus import (
    Broadcast,
    ConsumerBlock,
    Decision,
    GENESIS_BLOCK,
    GENESIS_ID,
    Message,
    ScheduleTimeout,
    SignedMessage,
    ValidatorCore,
    round_robin_leader,
)
from .crypto import (
    DapsKeypair,
    SchnorrKeypair,
    daps_extract,
    daps_keygen,
    schnorr_keygen,
    schnorr_keypair_from_scalar,
    schnorr_sign,
    schnorr_verify,
    tagged_hash,
)
from .finality import (
    ConfirmSig,
    FinalVote,
    FinalityGadget,
    cert_signers,
    confirm_message,
    key_extract,
    make_final_vote,
    verify_confirm_sig,
    verify_final_vote,
)
from .group import Point, encode_point
from .musig import IncompleteSignature, aggregate, key_aggregate, nonce_gen, partial_sign
from .provider import (
    BondRegistry,
    BOND_MARKER,
    ChunkAssembler,
    Op,
    ProviderChain,
    ProviderTx,
    SLASH_SELECTOR,
    TxIn,
    TxOut,
    UNBOND_MARKER,
    WITHDRAW_SELECTOR,
    build_slashing_tx,
    committee_bond_script,
    covenant_bond_script,
    ctv_template_hash,
    data_script,
    encode_chunks,
    op,
    push,
    sighash,
)
from .timestamping import (
    ClientState,
    Mode,
    OnchainTimestamp,
    ProtocolParams,
    ProviderView,
    Schedule,
    Timestamp,
    evidence_payload,
    last_height_of_period,
    parse_evidence,
    parse_stamp,
    stamp_payload,
)

TRACE_VERSION = 1
PARTIAL_MARKER = b"PART"
BOND_AMOUNT = 1000


# ---------------------------------------------------------------------------
# keys: one ring per (n, horizon, committee size), shared across runs
# ---------------------------------------------------------------------------


@dataclass
class Keyring:
    daps: Dict[int, DapsKeypair]
    vote: Dict[int, SchnorrKeypair]       # consensus + confirmation keys
    committee: Dict[int, SchnorrKeypair]  # covenant-committee member keys


_KEYRING_CACHE: Dict[Tuple[int, int, int], Keyring] = {}
_CACHE_LOCK = threading.Lock()


def keyring_for(n: int, horizon: int, committee_size: int) -> Keyring:
    key = (n, horizon, committee_size)
    with _CACHE_LOCK:
        ring = _KEYRING_CACHE.get(key)
        if ring is None:
            ring = Keyring(
                daps={i: daps_keygen(b"validator-slot-" + i.to_bytes(2, "big"), horizon)
                      for i in range(n)},
                vote={i: schnorr_keygen(b"validator-vote-" + i.to_bytes(2, "big"))
                      for i in range(n)},
                committee={i: schnorr_keygen(b"committee-seat-" + i.to_bytes(2, "big"))
                           for i in range(committee_size)},
            )
            _KEYRING_CACHE[key] = ring
    return ring


# ---------------------------------------------------------------------------
# scenario description
# ---------------------------------------------------------------------------


@dataclass
class NetworkModel:
    """Partially synchronous delivery: anything an honest actor sends at time
    s reaches every intended recipient by max(s, gst) + delta."""

    gst: int
    delta: int

    def backstop(self, send_t: int) -> int:
        return max(send_t, self.gst) + self.delta


@dataclass
class Scenario:
    name: str
    n: int = 4
    f: int = 1
    m: int = 4                    # consumer heights per period
    k_c: int = 4
    k_f: int = 2
    duty_span: int = 48           # provider blocks of duty
    delta: int = 4
    gst: int = 0
    t_end: int = 480
    seed: int = 7
    mode: Mode = Mode.DUMB_COVENANT
    provider_interval: int = 12   # ticks per provider block
    consumer_pause: int = 6       # ticks a validator rests between heights
    horizon: int = 96             # one-time-signature contexts per key
    committee_size: int = 5
    committee_defector: Optional[int] = None
    adversarial: Tuple[int, ...] = ()
    n_clients: int = 2
    client_online: Tuple[int, ...] = ()   # per-client first processing tick
    watchtower: bool = True
    tx_period: int = 36           # inject a consumer tx every this many ticks
    withdraw_at_timelock: bool = True
    expect_halts: bool = False
    expect_liveness: bool = True
    script: Optional[Callable] = None     # World -> AdversaryScript
    notes: Dict[str, object] = field(default_factory=dict)

    def params(self) -> ProtocolParams:
        return ProtocolParams(
            n=self.n, f=self.f, m=self.m, k_c=self.k_c, k_f=self.k_f,
            duty_span=self.duty_span, delta=self.delta,
        )

    def honest_ids(self) -> List[int]:
        return [i for i in range(self.n) if i not in self.adversarial]


class AdversaryScript:
    """Hook surface. Subclasses may only act through these hooks plus the
    world's forging helpers for the corrupted ids; honest actors always run
    the unmodified module code."""

    def __init__(self, world: "World"):
        self.world = world
        self.corrupted: Set[int] = set(world.scenario.adversarial)

    def delivery(self, kind: str, obj, sender: str, recipient: str, send_t: int) -> Optional[int]:
        """Return a delivery tick, DROP to withhold (corrupted senders only),
        or None for the default schedule."""
        return None

    def defer_tx(self, entry, next_height: int) -> bool:
        return False

    def suppress_watchtower(self, period: int) -> bool:
        return False

    def suppress_fallback(self, vid: int, period: int) -> bool:
        return False

    def on_tick(self, t: int):
        pass

    def on_provider_block(self, block):
        pass


DROP = -1


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class SafetyReport:
    ok: bool
    conflict: Optional[dict]          # {"height", "ids", "clients"}
    slashed: List[dict]               # {"validator","burn_height","timelock"}
    honest_slashed: List[int]
    extracted: List[dict]
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "conflict": self.conflict,
            "slashed": self.slashed,
            "honest_slashed": self.honest_slashed,
            "extracted": self.extracted,
            "detail": self.detail,
        }


@dataclass
class LivenessReport:
    ok: bool
    max_latency: Optional[int]        # worst post-GST confirmation, in ticks
    halts: List[dict]                 # {"client","rule","t"}
    missing_txs: List[str]
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "max_latency": self.max_latency,
            "halts": self.halts,
            "missing_txs": self.missing_txs,
            "detail": self.detail,
        }


# ---------------------------------------------------------------------------
# actors
# ---------------------------------------------------------------------------


class ValidatorActor:
    """Wires one honest consensus core + finality layer into the world."""

    def __init__(self, world: "World", vid: int, honest: bool):
        self.world = world
        self.vid = vid
        self.honest = honest
        self.crashed = False
        self.pause_until = 0
        self.mempool: List[bytes] = []
        self._seen_txs: Set[bytes] = set()
        self.future: Dict[int, List[SignedMessage]] = {}
        self.decided: Dict[int, ConsumerBlock] = {0: GENESIS_BLOCK}
        self._max_ref: List[int] = [0]  # max provider ref over heights 1..i
        self.final_pool: Dict[Tuple[int, bytes], Dict[int, FinalVote]] = {}
        self.confirm_pool: Dict[Tuple[int, bytes], Dict[int, ConfirmSig]] = {}
        self._ts_pacified: Set[int] = set()
        self._withdraw_sent = False
        params = world.params
        if world.mode.dumb:
            self.gadget = FinalityGadget(vid, world.keyring.daps[vid])
        else:
            self.gadget = None
        self.core = ValidatorCore(
            me=vid,
            f=params.f,
            delta=params.delta,
            make_block=self._make_block,
            proposal_valid=self._proposal_valid,
            leader_fn=world.leader_fn,
            on_transition=self._on_transition,
        )

    # -- consensus plumbing --------------------------------------------------

    def begin(self):
        if self.crashed:
            return
        self._dispatch(self.core.begin(list(range(self.world.params.n))))

    def _make_block(self, height: int) -> ConsumerBlock:
        return ConsumerBlock(
            height=height,
            parent=self.core.chain_tip_id(),
            proposer=self.vid,
            provider_ref=self.world.provider.tip_hash(),
            txs=tuple(tx for tx in self.mempool if tx not in self._seen_txs),
        )

    def _proposal_valid(self, block: ConsumerBlock) -> bool:
        if self.world.ref_height(block.provider_ref) is None:
            return False
        return block.parent == self.core.chain_tip_id()

    def _on_transition(self, info: dict):
        self.world.emit(
            "step", v=info["validator"], ev=info["event"],
            h=info["height"], r=info["round"],
        )

    def receive_consensus(self, signed: SignedMessage):
        if self.crashed:
            return
        if not self.world.verify_consensus(signed):
            self.world.emit("bad_sig", v=self.vid, h=signed.msg.height)
            return
        if signed.msg.height > self.core.height:
            self.future.setdefault(signed.msg.height, []).append(signed)
            return
        self._dispatch(self.core.on_message(signed))

    def receive_block(self, block: ConsumerBlock):
        if self.crashed:
            return
        self._dispatch(self.core.learn_block(block))

    def receive_vote(self, vote):
        if self.crashed:
            return
        if isinstance(vote, FinalVote):
            self.final_pool.setdefault((vote.height, vote.block_id), {}).setdefault(vote.signer, vote)
        elif isinstance(vote, ConfirmSig):
            self.confirm_pool.setdefault((vote.height, vote.block_id), {}).setdefault(vote.signer, vote)

    def on_timeout(self, kind: str, height: int, round_: int):
        if self.crashed:
            return
        self._dispatch(self.core.on_timeout(kind, height, round_))

    def _dispatch(self, actions):
        for a in actions:
            if isinstance(a, Broadcast):
                self.world.broadcast_consensus(self, a.msg)
            elif isinstance(a, ScheduleTimeout):
                base = max(self.world.t, self.pause_until)
                self.world.schedule(base + a.delay, self.on_timeout, a.kind, a.height, a.round)
            elif isinstance(a, Decision):
                self._on_decision(a)
        while not self.crashed and self.core.height in self.future:
            for signed in self.future.pop(self.core.height):
                self._dispatch(self.core.on_message(signed))

    def _on_decision(self, d: Decision):
        world = self.world
        self.pause_until = max(self.pause_until, world.t + world.scenario.consumer_pause)
        block = d.block
        bid = block.block_id()
        self.decided[d.height] = block
        ref = world.ref_height(block.provider_ref) or 0
        self._max_ref.append(max(self._max_ref[-1], ref))
        for tx in block.txs:
            self._seen_txs.add(tx)
            if tx in self.mempool:
                self.mempool.remove(tx)
        world.emit(
            "decision", v=self.vid, h=d.height, id=bid.hex()[:16],
            txs=[t.hex() for t in block.txs],
        )
        world.broadcast_block(self, block)
        if self.gadget is not None:
            for vote in self.gadget.on_decision(d.height, bid):
                world.memoize_final(world.keyring.daps[vote.signer].pk, vote)
                world.broadcast_vote(self, vote)
        else:
            cs = ConfirmSig(
                d.height, bid, self.vid,
                schnorr_sign(world.keyring.vote[self.vid], confirm_message(d.height, bid)),
            )
            world.memoize_confirm(world.keyring.vote[self.vid].pk, cs)
            world.broadcast_vote(self, cs)

    # -- provider-side duties --------------------------------------------------

    def on_provider_block(self):
        if self.crashed:
            return
        self._maybe_fallback_stamp()
        self._maybe_withdraw()

    def _ref_before_period(self, e: int) -> int:
        cutoff = last_height_of_period(e - 1, self.world.params.m) if e > 1 else 0
        cutoff = min(cutoff, len(self._max_ref) - 1)
        return self._max_ref[cutoff]

    def _maybe_fallback_stamp(self):
        """Stamp completed periods. The designated watchtower validator
        publishes as soon as a period's closing block is final; everyone else
        holds back until the inclusion window nears its end, as a backstop
        against a suppressed or faulty watchtower."""
        world = self.world
        params = world.params
        prompt = world.prompt_stamper == self.vid
        tip = max(self.decided)
        e = 1
        while last_height_of_period(e, params.m) <= tip:
            bh = last_height_of_period(e, params.m)
            if e not in self._ts_pacified:
                block = self.decided.get(bh)
                if block is None:
                    break
                bid = block.block_id()
                if world.has_onchain_stamp(bh, bid):
                    self._ts_pacified.add(e)
                else:
                    if prompt:
                        due = not world.adversary.suppress_watchtower(e)
                    else:
                        due = (
                            world.provider.height
                            >= self._ref_before_period(e) + params.k_d - params.k_f - 1
                            and not world.adversary.suppress_fallback(self.vid, e)
                        )
                    if due:
                        cert = self._pool_cert(bh, bid)
                        if cert is not None:
                            if world.submit_stamp(Timestamp(bh, bid, cert), by=f"val{self.vid}"):
                                self._ts_pacified.add(e)
            e += 1

    def _pool_cert(self, height: int, bid: bytes) -> Optional[Tuple]:
        world = self.world
        need = world.params.quorum
        picked = []
        if world.mode.dumb:
            bucket = self.final_pool.get((height, bid), {})
            for signer in sorted(bucket):
                if world.memo_verify_final(world.daps_pk_of(signer), bucket[signer]):
                    picked.append(bucket[signer])
                    if len(picked) >= need:
                        return tuple(picked)
            return None
        bucket = self.confirm_pool.get((height, bid), {})
        for signer in sorted(bucket):
            if world.memo_verify_confirm(world.vote_pk_of(signer), bucket[signer]):
                picked.append(bucket[signer])
                if len(picked) >= need:
                    return tuple(picked)
        return None

    def _maybe_withdraw(self):
        world = self.world
        if not world.scenario.withdraw_at_timelock or self._withdraw_sent:
            return
        rec = world.registry.records.get(self.vid)
        if rec is None or rec.status != "bonded":
            return
        if world.provider.height + 1 < rec.timelock:
            return
        self._withdraw_sent = True
        tx = world.build_withdrawal(self.vid, rec)
        world.provider.submit(tx, note=f"withdraw:{self.vid}")
        world.track_tx(tx)
        world.emit("withdraw_submit", v=self.vid, txid=tx.txid().hex()[:16],
                   timelock=rec.timelock)


class ClientActor:
    """A fork-choice client. Clients do not stamp on the happy path; they
    submit timestamps only under the emergency conditions."""

    def __init__(self, world: "World", name: str, online_at: int = 0):
        self.world = world
        self.name = name
        self.online_at = online_at
        self.dirty = False
        self._adopted: List[str] = [GENESIS_ID.hex()[:16]]
        self._halt_emitted = False
        self._extracted: Set[int] = set()
        self._evidence_sent: Set[Tuple[int, bytes, bytes]] = set()
        self.state = ClientState(
            name,
            world.params,
            world.mode,
            world.schedule_obj,
            daps_pk_of=world.daps_pk_of,
            vote_pk_of=world.vote_pk_of,
            verify_final=world.memo_verify_final,
            verify_confirm=world.memo_verify_confirm,
        )

    def online(self) -> bool:
        return self.world.t >= self.online_at

    def receive_block(self, block: ConsumerBlock):
        self.state.add_block(block)
        self.dirty = True

    def receive_vote(self, vote):
        self.state.add_vote(vote)
        self.dirty = True

    def process_pass(self):
        self.dirty = False
        if not self.online():
            return
        view = self.world.view()
        events = self.state.process(view)
        self._after_process(view, events)

    def on_provider_block(self):
        if not self.online():
            self.dirty = True  # catch up on the pass after coming online
            return
        view = self.world.view()
        events = self.state.process(view)
        if self.state.halted is None and not self.state.offline:
            for ts in self.state.check_emergency_conditions(view):
                self.world.submit_stamp(ts, by=self.name, emergency=True)
        self._after_process(view, events)

    def _after_process(self, view: ProviderView, events):
        world = self.world
        for ev in events:
            world.emit("client_rule", client=self.name, rule=ev.rule,
                       seq=ev.ts_seq, ph=ev.provider_height)
        # output diffs: every (height, id) this client commits to
        canonical = self.state.canonical
        for i in range(1, len(canonical)):
            bid = canonical[i].block_id().hex()[:16]
            if i < len(self._adopted):
                if self._adopted[i] != bid:
                    self._adopted[i] = bid
                    world.emit("client_adopt", client=self.name, h=i, id=bid)
            else:
                self._adopted.append(bid)
                world.emit("client_adopt", client=self.name, h=i, id=bid)
        if self.state.halted is not None and not self._halt_emitted:
            self._halt_emitted = True
            world.emit("halt", client=self.name, rule=self.state.halted)
            reason = "cond2" if self.state.halted == "rule1" else "cond3"
            for ts in self.state.emergency_timestamps(view, reason):
                world.submit_stamp(ts, by=self.name, emergency=True)
        self._slash_driver(view)

    # -- automatic slashing ---------------------------------------------------

    def _slash_driver(self, view: ProviderView):
        world = self.world
        if world.mode.dumb:
            if not self.state.conflict_slots:
                return
            votes = [v for v in self.state.final_votes_in_conflicts()
                     if v.signer not in self._extracted]
            for ex in key_extract(votes, world.daps_pk_of,
                                  verify=world.memo_verify_final,
                                  extract=_memo_daps_extract):
                self._extracted.add(ex.signer)
                world.emit("extraction", client=self.name, v=ex.signer, h=ex.height)
                rec = world.registry.records.get(ex.signer)
                if rec is None or rec.status != "bonded":
                    world.emit("slash_unavailable", client=self.name, v=ex.signer,
                               status=rec.status if rec else "none")
                    continue
                tx = world.build_slash_tx(ex.signer, rec, ex.secret)
                world.provider.submit(tx, note=f"slash:{ex.signer}:{self.name}")
                world.track_tx(tx)
                world.emit("slash_submit", client=self.name, v=ex.signer,
                           txid=tx.txid().hex()[:16])
            return
        # contract mode: publish double-confirmation evidence
        for pair in self.state.confirm_conflict_pairs(world.params.quorum):
            if pair in self._evidence_sent:
                continue
            height, id_a, id_b = pair
            cert_a = self.state.confirm_cert(height, id_a, world.params.quorum)
            cert_b = self.state.confirm_cert(height, id_b, world.params.quorum)
            if cert_a is None or cert_b is None:
                continue
            self._evidence_sent.add(pair)
            world.submit_data(evidence_payload(height, cert_a, cert_b),
                              by=self.name, note="evidence")
            world.emit("evidence_submit", client=self.name, h=height,
                       a=id_a.hex()[:16], b=id_b.hex()[:16])


# ---------------------------------------------------------------------------
# the world
# ---------------------------------------------------------------------------


_PRESIGN_CACHE: Dict[Tuple, Tuple] = {}

# extraction is a pure function of its inputs, so solved pairs are shared
# across clients and runs
_EXTRACT_CACHE: Dict[Tuple, int] = {}


def _memo_daps_extract(pk, ct, m1, sig1, m2, sig2) -> int:
    key = (pk.encode(), ct, m1, sig1.encode(), m2, sig2.encode())
    hit = _EXTRACT_CACHE.get(key)
    if hit is None:
        hit = daps_extract(pk, ct, m1, sig1, m2, sig2)
        _EXTRACT_CACHE[key] = hit
    return hit


class World:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.params = scenario.params()  # validates n >= 3f+1 up front
        if scenario.k_f >= scenario.k_c:
            raise ValueError("need k_f < k_c for provider liveness")
        self.mode = scenario.mode
        self.net = NetworkModel(scenario.gst, scenario.delta)
        self.keyring = keyring_for(scenario.n, scenario.horizon, scenario.committee_size)
        self.leader_fn = round_robin_leader

        self.t = 0
        self._seq = itertools.count()
        self.queue: List[Tuple[int, int, Callable, tuple]] = []
        self.trace: List[dict] = []
        self._memo: Set[Tuple] = set()
        self._pk_digest_cache: Dict[int, bytes] = {}

        self._net_rng = random.Random(
            tagged_hash("remotestake/sim/net", scenario.seed.to_bytes(8, "big"))
        )

        self.registry = BondRegistry(
            smart=(self.mode is Mode.SMART),
            k_u=self.params.k_u,
            duty_span=scenario.duty_span,
        )
        self.provider = ProviderChain(scenario.k_f, self.registry)
        self.provider.data_listeners.append(self._on_data)
        self._ref_map: Dict[bytes, int] = {}
        self._onchain: List[OnchainTimestamp] = []
        self._onchain_keys: Set[Tuple[int, bytes]] = set()
        self.stamps_in_flight: Set[Tuple[int, bytes]] = set()
        self._assembler = ChunkAssembler()
        self._submit_heights: Dict[bytes, int] = {}
        self._status_cache: Dict[int, Tuple[str, Optional[int]]] = {}
        self._provider_events_seen = 0

        self.committee_members: List[int] = list(range(scenario.committee_size))
        self.committee_sigs: Dict[int, object] = {}
        self.committee_keys_deleted = False

        self.emit(
            "meta", v=TRACE_VERSION, scenario=scenario.name, seed=scenario.seed,
            mode=self.mode.value, n=scenario.n, f=scenario.f, m=scenario.m,
            k_c=scenario.k_c, k_f=scenario.k_f, k_d=self.params.k_d,
            k_u=self.params.k_u, duty_span=scenario.duty_span,
            delta=scenario.delta, gst=scenario.gst, t_end=scenario.t_end,
            provider_interval=scenario.provider_interval,
            consumer_pause=scenario.consumer_pause, tx_period=scenario.tx_period,
            adversarial=sorted(scenario.adversarial),
            honest=scenario.honest_ids(),
            quorum=self.params.quorum,
            expect_halts=scenario.expect_halts,
            watchtower=(
                min(scenario.honest_ids())
                if scenario.watchtower and scenario.honest_ids() else None
            ),
            clients=[f"c{i}" for i in range(scenario.n_clients)],
            client_online=[
                (scenario.client_online[i] if i < len(scenario.client_online) else 0)
                for i in range(scenario.n_clients)
            ],
        )

        self._build_genesis()

        self.schedule_obj = Schedule(self.params, list(range(scenario.n)))
        # the watchtower is the lowest honest validator: it publishes each
        # period's timestamp as soon as the closing block is final, while the
        # rest only step in near the inclusion deadline
        self.prompt_stamper: Optional[int] = (
            min(scenario.honest_ids())
            if scenario.watchtower and scenario.honest_ids() else None
        )
        self.validators = [
            ValidatorActor(self, i, honest=(i not in scenario.adversarial))
            for i in range(scenario.n)
        ]
        self.clients: List[ClientActor] = [
            ClientActor(
                self, f"c{i}",
                online_at=(scenario.client_online[i] if i < len(scenario.client_online) else 0),
            )
            for i in range(scenario.n_clients)
        ]

        self.adversary = scenario.script(self) if scenario.script else AdversaryScript(self)
        self._assert_sound()

    # -- structural soundness -------------------------------------------------

    def _assert_sound(self):
        sc = self.scenario
        labels = set(sc.adversarial) | set(sc.honest_ids())
        assert labels == set(range(sc.n)), "every validator needs a label"
        assert set(self.adversary.corrupted) == set(sc.adversarial), (
            "adversary corruption set must match the scenario labels"
        )
        for v in self.validators:
            assert type(v) is ValidatorActor, "validator actors must be stock"
            assert type(v.core) is ValidatorCore, "honest core must be stock"

    # -- genesis + bonds -------------------------------------------------------

    def _bond_script(self, vid: int, timelock: int, agg_pk: Optional[Point]):
        if self.mode is Mode.DUMB_COVENANT:
            # the template commits outputs + locktime only, so one per amount
            template = ctv_template_hash(build_slashing_tx(b"\x00" * 32, 0, BOND_AMOUNT))
            return covenant_bond_script(self._daps_pk33(vid), timelock, template)
        if self.mode is Mode.DUMB_COMMITTEE:
            return committee_bond_script(self._daps_pk33(vid), timelock, encode_point(agg_pk))
        return (push(encode_point(self.keyring.vote[vid].pk)), op(Op.CHECKSIG))

    def _daps_pk33(self, vid: int) -> bytes:
        return encode_point(self.keyring.daps[vid].pk.point)

    def _mint_tx(self, agg_pk: Optional[Point]) -> ProviderTx:
        n = self.scenario.n
        timelock = self.scenario.duty_span + self.params.k_u
        outputs = [TxOut(BOND_AMOUNT, self._bond_script(v, timelock, agg_pk)) for v in range(n)]
        for v in range(n):
            payload = BOND_MARKER + v.to_bytes(2, "big") + bytes([v]) + BOND_AMOUNT.to_bytes(8, "big")
            outputs.append(TxOut(0, data_script(payload)))
        return ProviderTx(inputs=(), outputs=tuple(outputs), locktime=0)

    def _build_genesis(self):
        sc = self.scenario
        agg_pk = None
        publish_partials = []
        if self.mode is Mode.DUMB_COMMITTEE:
            members = list(range(sc.committee_size))
            if sc.committee_defector is not None:
                # dry-run ceremony against the would-be deposits: the defector
                # withholds, the rest publish their partials, setup restarts
                provisional_ctx = key_aggregate(
                    [self.keyring.committee[i].pk for i in members]
                )
                provisional = self._mint_tx(provisional_ctx.agg_pk)
                sigs, missing, partials = self._presign(
                    members, provisional, defector=sc.committee_defector
                )
                assert sigs is None and missing
                self.emit("committee_ceremony_failed",
                          members=members, missing=sorted(missing))
                for (mid, partial) in partials:
                    publish_partials.append(
                        PARTIAL_MARKER + mid.to_bytes(2, "big") + partial.to_bytes(32, "big")
                    )
                members = [m for m in members if m not in missing]
                self.emit("committee_rekey", members=members)
            self.committee_members = members
            agg_pk = key_aggregate(
                [self.keyring.committee[i].pk for i in members]
            ).agg_pk
        mint = self._mint_tx(agg_pk)
        self.provider.genesis([mint])
        self._ref_map[self.provider.tip_hash()] = 0
        self._drain_provider_events()
        for v, rec in self.registry.records.items():
            self._status_cache[v] = (rec.status, rec.burn_height)
            self.emit("bond", v=v, amount=rec.amount, duty_end=rec.duty_end,
                      timelock=rec.timelock)
        if self.mode is Mode.DUMB_COMMITTEE:
            sigs, missing, _ = self._presign(self.committee_members, mint, defector=None)
            assert sigs is not None, f"committee presign failed: missing {missing}"
            self.committee_sigs = sigs
            self.committee_keys_deleted = True
            self.emit("committee_presigned",
                      members=self.committee_members,
                      validators=sorted(sigs), keys_deleted=True)
        for payload in publish_partials:
            self.submit_data(payload, by="committee", note="partials")

    def _presign(self, members: List[int], mint: ProviderTx, defector: Optional[int]):
        """Run the slash-template signing ceremony for every deposit. Returns
        (sigs by validator, missing member ids, published partials)."""
        key = (
            self.scenario.n, tuple(members), defector,
            self.scenario.duty_span, self.params.k_u, mint.txid(),
        )
        with _CACHE_LOCK:
            cached = _PRESIGN_CACHE.get(key)
        if cached is not None:
            return cached
        ctx = key_aggregate([self.keyring.committee[i].pk for i in members])
        txid = mint.txid()
        sigs: Dict[int, object] = {}
        result = None
        for v in range(self.scenario.n):
            stx = build_slashing_tx(txid, v, BOND_AMOUNT)
            msg = sighash(stx, 0)
            secs, pubs = [], []
            for pos, mid in enumerate(members):
                sec, pub = nonce_gen(b"slash-nonce-" + mid.to_bytes(2, "big"), pos, msg)
                secs.append(sec)
                pubs.append(pub)
            partials: Dict[int, int] = {}
            for pos, mid in enumerate(members):
                if mid == defector:
                    continue
                partials[pos] = partial_sign(
                    secs[pos], self.keyring.committee[mid].sk, pos, ctx, pubs, msg
                )
            try:
                sigs[v] = aggregate(partials, ctx, pubs, msg)
            except IncompleteSignature as exc:
                missing_ids = [members[pos] for pos in exc.missing]
                published = [(members[pos], partials[pos]) for pos in sorted(partials)]
                result = (None, missing_ids, published)
                break
        if result is None:
            result = (sigs, [], [])
        with _CACHE_LOCK:
            _PRESIGN_CACHE[key] = result
        return result

    # -- key lookups + signature memo ------------------------------------------

    def daps_pk_of(self, i: int):
        kp = self.keyring.daps.get(i)
        return kp.pk if kp else None

    def vote_pk_of(self, i: int):
        kp = self.keyring.vote.get(i)
        return kp.pk if kp else None

    def _pk_digest(self, pk) -> bytes:
        d = self._pk_digest_cache.get(id(pk))
        if d is None:
            d = tagged_hash("remotestake/sim/pk", pk.encode())
            self._pk_digest_cache[id(pk)] = d
        return d

    def memoize_final(self, pk, vote: FinalVote):
        self._memo.add((self._pk_digest(pk), vote.height, vote.block_id,
                        vote.sig.rx, vote.sig.s))

    def memo_verify_final(self, pk, vote: FinalVote) -> bool:
        if pk is None:
            return False
        key = (self._pk_digest(pk), vote.height, vote.block_id, vote.sig.rx, vote.sig.s)
        if key in self._memo:
            return True
        ok = verify_final_vote(pk, vote)
        if ok:
            self._memo.add(key)
        return ok

    def memoize_confirm(self, pk: Point, cs: ConfirmSig):
        self._memo.add((pk, cs.height, cs.block_id, cs.sig.rx, cs.sig.s))

    def memo_verify_confirm(self, pk: Point, cs: ConfirmSig) -> bool:
        if pk is None:
            return False
        key = (pk, cs.height, cs.block_id, cs.sig.rx, cs.sig.s)
        if key in self._memo:
            return True
        ok = verify_confirm_sig(pk, cs)
        if ok:
            self._memo.add(key)
        return ok

    def sign_consensus(self, vid: int, msg: Message):
        sig = schnorr_sign(self.keyring.vote[vid], msg.encode())
        self._memo.add((vid, msg.encode(), sig.rx, sig.s))
        return sig

    def verify_consensus(self, signed: SignedMessage) -> bool:
        vid = signed.msg.sender
        key = (vid, signed.msg.encode(), signed.sig.rx, signed.sig.s)
        if key in self._memo:
            return True
        pk = self.vote_pk_of(vid)
        ok = pk is not None and schnorr_verify(pk, signed.msg.encode(), signed.sig)
        if ok:
            self._memo.add(key)
        return ok

    # -- event plumbing ---------------------------------------------------------

    def schedule(self, t: int, fn: Callable, *args):
        heapq.heappush(self.queue, (max(t, self.t), next(self._seq), fn, args))

    def emit(self, kind: str, **fields):
        rec = {"t": self.t, "kind": kind}
        rec.update(fields)
        self.trace.append(rec)

    def ref_height(self, block_hash: bytes) -> Optional[int]:
        return self._ref_map.get(block_hash)

    def view(self) -> ProviderView:
        return ProviderView(
            height=self.provider.height,
            ref_height_of=self._ref_map.get,
            timestamps=self._onchain,
            registry=self.registry,
        )

    def has_onchain_stamp(self, height: int, block_id: bytes) -> bool:
        return (height, block_id) in self._onchain_keys

    def onchain_stamps(self) -> List[OnchainTimestamp]:
        return list(self._onchain)

    def meta_clients(self) -> List[str]:
        return [c.name for c in self.clients]

    def block_ref(self, block: ConsumerBlock) -> int:
        """Provider height a consumer block's anchor reference resolves to."""
        return self._ref_map.get(block.provider_ref, 0)

    # -- message fabric -----------------------------------------------------------

    def _delivery_time(self, kind: str, obj, sender_key: str, recipient_key: str,
                       send_t: int, honest_sender: bool) -> Optional[int]:
        want = self.adversary.delivery(kind, obj, sender_key, recipient_key, send_t)
        cap = self.net.backstop(send_t)
        if honest_sender:
            if want is None or want == DROP:
                if send_t >= self.net.gst:
                    want = send_t + 1
                else:
                    want = self._net_rng.randint(send_t + 1, cap)
            return max(send_t + 1, min(want, cap))
        if want is None:
            return send_t + 1
        if want == DROP:
            return None
        return max(send_t + 1, want)

    def broadcast_consensus(self, sender: ValidatorActor, msg: Message):
        send_t = max(self.t, sender.pause_until)
        signed = SignedMessage(msg, self.sign_consensus(sender.vid, msg))
        skey = f"val:{sender.vid}"
        for r in self.validators:
            if r.vid == sender.vid:
                self.schedule(send_t, r.receive_consensus, signed)
                continue
            dt = self._delivery_time("consensus", msg, skey, f"val:{r.vid}",
                                     send_t, sender.honest)
            if dt is not None:
                self.schedule(dt, r.receive_consensus, signed)

    def broadcast_vote(self, sender: ValidatorActor, vote):
        # finality votes ship at decision time; the inter-height pause only
        # paces the next height's consensus messages
        send_t = self.t
        skey = f"val:{sender.vid}"
        kind = "vote"
        self.emit(
            "final_vote" if isinstance(vote, FinalVote) else "confirm_sig",
            v=vote.signer, h=vote.height, id=vote.block_id.hex()[:16],
        )
        for r in self.validators:
            if r.vid == sender.vid:
                self.schedule(send_t, r.receive_vote, vote)
                continue
            dt = self._delivery_time(kind, vote, skey, f"val:{r.vid}", send_t, sender.honest)
            if dt is not None:
                self.schedule(dt, r.receive_vote, vote)
        for c in self.clients:
            dt = self._delivery_time(kind, vote, skey, f"client:{c.name}", send_t, sender.honest)
            if dt is not None:
                self.schedule(dt, c.receive_vote, vote)

    def broadcast_block(self, sender: ValidatorActor, block: ConsumerBlock):
        send_t = self.t
        skey = f"val:{sender.vid}"
        for r in self.validators:
            if r.vid == sender.vid:
                continue
            dt = self._delivery_time("block", block, skey, f"val:{r.vid}", send_t, sender.honest)
            if dt is not None:
                self.schedule(dt, r.receive_block, block)
        for c in self.clients:
            dt = self._delivery_time("block", block, skey, f"client:{c.name}", send_t, sender.honest)
            if dt is not None:
                self.schedule(dt, c.receive_block, block)

    # -- adversary helpers (forging with corrupted keys) --------------------------

    def forge_block(self, height: int, parent: bytes, proposer: int,
                    txs: Tuple[bytes, ...] = (), ref: Optional[bytes] = None) -> ConsumerBlock:
        assert proposer in self.adversary.corrupted
        return ConsumerBlock(
            height=height, parent=parent, proposer=proposer,
            provider_ref=ref if ref is not None else self.provider.tip_hash(),
            txs=txs,
        )

    def forge_final_votes(self, block: ConsumerBlock, signers: Sequence[int]) -> List[FinalVote]:
        out = []
        bid = block.block_id()
        for s in signers:
            assert s in self.adversary.corrupted, "only corrupted keys can be forged with"
            vote = make_final_vote(self.keyring.daps[s], s, block.height, bid)
            self.memoize_final(self.keyring.daps[s].pk, vote)
            out.append(vote)
        return out

    def forge_confirm_sigs(self, block: ConsumerBlock, signers: Sequence[int]) -> List[ConfirmSig]:
        out = []
        bid = block.block_id()
        for s in signers:
            assert s in self.adversary.corrupted
            cs = ConfirmSig(block.height, bid, s,
                            schnorr_sign(self.keyring.vote[s], confirm_message(block.height, bid)))
            self.memoize_confirm(self.keyring.vote[s].pk, cs)
            out.append(cs)
        return out

    def reveal(self, to: str, at: int, blocks: Sequence[ConsumerBlock] = (),
               votes: Sequence = ()):
        """Adversary-paced direct delivery to one client or validator."""
        for c in self.clients:
            if c.name == to:
                for b in blocks:
                    self.schedule(at, c.receive_block, b)
                for v in votes:
                    self.schedule(at, c.receive_vote, v)
                return
        for r in self.validators:
            if f"val:{r.vid}" == to:
                for b in blocks:
                    self.schedule(at, r.receive_block, b)
                for v in votes:
                    self.schedule(at, r.receive_vote, v)
                return
        raise KeyError(to)

    def crash(self, vid: int):
        self.validators[vid].crashed = True
        self.emit("crash", v=vid)

    # -- provider-side submissions -------------------------------------------------

    def track_tx(self, tx: ProviderTx):
        self._submit_heights.setdefault(tx.txid(), self.provider.height)

    def submit_stamp(self, ts: Timestamp, by: str, emergency: bool = False) -> bool:
        key = (ts.height, ts.block_id)
        if key in self.stamps_in_flight or key in self._onchain_keys:
            return False
        self.stamps_in_flight.add(key)
        self.submit_data(stamp_payload(ts), by=by, note=f"stamp:{by}")
        self.emit("stamp_submit", by=by, h=ts.height, id=ts.block_id.hex()[:16],
                  emergency=emergency)
        return True

    def submit_data(self, payload: bytes, by: str, note: str = "data"):
        for chunk in encode_chunks(payload):
            tx = ProviderTx(inputs=(), outputs=(TxOut(0, data_script(chunk)),), locktime=0)
            self.provider.submit(tx, note=note)
            self.track_tx(tx)

    def submit_unbond(self, vid: int, by: str):
        """Publish an unbond request.  Marker payloads are scanned raw, so
        this must not go through the chunk encoder."""
        payload = UNBOND_MARKER + vid.to_bytes(2, "big")
        tx = ProviderTx(inputs=(), outputs=(TxOut(0, data_script(payload)),), locktime=0)
        self.provider.submit(tx, note=f"unbond:{vid}")
        self.track_tx(tx)
        self.emit("unbond_submit", vid=vid, by=by)

    def build_slash_tx(self, vid: int, rec, secret: int) -> ProviderTx:
        tx = build_slashing_tx(rec.utxo[0], rec.utxo[1], rec.amount)
        sig = schnorr_sign(schnorr_keypair_from_scalar(secret), sighash(tx, 0))
        if self.mode is Mode.DUMB_COVENANT:
            witness = (sig.encode(), SLASH_SELECTOR)
        elif self.mode is Mode.DUMB_COMMITTEE:
            witness = (sig.encode(), self.committee_sigs[vid].encode(), SLASH_SELECTOR)
        else:
            raise ValueError("contract mode slashes via evidence, not spends")
        return ProviderTx(
            inputs=(TxIn(rec.utxo[0], rec.utxo[1], witness),),
            outputs=tx.outputs, locktime=tx.locktime,
        )

    def build_withdrawal(self, vid: int, rec) -> ProviderTx:
        if self.mode.dumb:
            own = schnorr_keypair_from_scalar(self.keyring.daps[vid].sk.scalar)
        else:
            own = self.keyring.vote[vid]
        dest = (push(encode_point(own.pk)), op(Op.CHECKSIG))
        tx = ProviderTx(
            inputs=(TxIn(rec.utxo[0], rec.utxo[1]),),
            outputs=(TxOut(rec.amount, dest),),
            locktime=rec.timelock,
        )
        sig = schnorr_sign(own, sighash(tx, 0))
        witness = (sig.encode(), WITHDRAW_SELECTOR) if self.mode.dumb else (sig.encode(),)
        return ProviderTx(
            inputs=(TxIn(rec.utxo[0], rec.utxo[1], witness),),
            outputs=tx.outputs, locktime=tx.locktime,
        )

    # -- on-chain data ingestion ------------------------------------------------

    def _on_data(self, height: int, payload: bytes):
        for full, h in self._assembler.feed(height, payload):
            ts = parse_stamp(full)
            if ts is not None:
                ots = OnchainTimestamp(ts, h, len(self._onchain))
                self._onchain.append(ots)
                self._onchain_keys.add((ts.height, ts.block_id))
                self.stamps_in_flight.discard((ts.height, ts.block_id))
                self.emit("stamp_onchain", h=ts.height, id=ts.block_id.hex()[:16],
                          ph=h, seq=ots.seq, signers=cert_signers(ts.cert))
                continue
            ev = parse_evidence(full)
            if ev is not None:
                self._on_evidence(h, *ev)
                continue
            if full.startswith(PARTIAL_MARKER):
                self.emit("partial_onchain", member=int.from_bytes(full[4:6], "big"), ph=h)
                continue
            self.emit("junk_payload", ph=h, size=len(full))

    def _on_evidence(self, height: int, ev_height: int, cert_a, cert_b):
        if self.mode is not Mode.SMART:
            self.emit("evidence_ignored", ph=height, h=ev_height)
            return
        quorum = self.params.quorum
        ids = {cert_a[0].block_id, cert_b[0].block_id}
        if len(ids) != 2:
            return
        for cert in (cert_a, cert_b):
            good = {
                cs.signer for cs in cert
                if cs.height == ev_height and self.memo_verify_confirm(self.vote_pk_of(cs.signer), cs)
            }
            if len(good) < quorum:
                self.emit("evidence_rejected", ph=height, h=ev_height)
                return
        guilty = sorted(set(cert_signers(cert_a)) & set(cert_signers(cert_b)))
        self.registry.mark_slashed_by_evidence(guilty, height)
        self.emit("evidence_accepted", ph=height, h=ev_height, guilty=guilty)

    # -- provider mining ------------------------------------------------------------

    def _drain_provider_events(self):
        for ev in self.provider.events[self._provider_events_seen:]:
            if ev["kind"] == "tx_rejected":
                self.emit("tx_rejected", txid=ev["txid"][:16], reason=ev["reason"])
        self._provider_events_seen = len(self.provider.events)

    def _mine(self):
        block = self.provider.mine(defer=self.adversary.defer_tx)
        self._ref_map[block.hash()] = block.height
        self._drain_provider_events()
        self.emit("provider_block", height=block.height,
                  txs=[tx.txid().hex()[:16] for tx in block.txs])
        for v, rec in self.registry.records.items():
            now = (rec.status, rec.burn_height)
            if self._status_cache.get(v) != now:
                self._status_cache[v] = now
                if rec.status == "slashed" and rec.burn_height is not None:
                    self.emit("burn", v=v, burn_height=rec.burn_height,
                              timelock=rec.timelock)
                elif rec.status == "slashed":
                    self.emit("slash_marked", v=v, timelock=rec.timelock)
                elif rec.status == "withdrawn":
                    self.emit("withdrawn", v=v, ph=block.height)
        for v in self.validators:
            v.on_provider_block()
        for c in self.clients:
            c.on_provider_block()
        self.adversary.on_provider_block(block)

    # -- consumer transactions -------------------------------------------------------

    def _schedule_txs(self):
        sc = self.scenario
        if sc.tx_period <= 0:
            return
        bound = sc.provider_interval * sc.k_c + 2 * sc.delta
        last = sc.t_end - bound - 10
        idx = 0
        t = sc.tx_period
        while t <= last:
            self.schedule(max(t, 1), self._inject_tx, idx)
            idx += 1
            t += sc.tx_period

    def _inject_tx(self, idx: int):
        alive = [v for v in self.validators if v.honest and not v.crashed]
        if not alive:
            return
        payload = b"tx" + idx.to_bytes(4, "big")
        for v in alive:  # gossip reaches the whole honest set
            v.mempool.append(payload)
        self.emit("tx_inject", tx=payload.hex(), to=[v.vid for v in alive])

    # -- main loop ----------------------------------------------------------------

    def run_loop(self):
        sc = self.scenario
        for v in self.validators:
            v.begin()
        self._schedule_txs()
        while self.t <= sc.t_end:
            while self.queue and self.queue[0][0] <= self.t:
                _, _, fn, args = heapq.heappop(self.queue)
                fn(*args)
            if self.t > 0 and self.t % sc.provider_interval == 0:
                self._mine()
            self.adversary.on_tick(self.t)
            for c in self.clients:
                if c.dirty:
                    c.process_pass()
            self.t += 1

    def finalize(self):
        """Inclusion-window invariant: every submitted tx either landed within
        k_f - 1 provider blocks of submission, was rejected, or is still
        inside its window. Nothing is censored past its deadline."""
        k_f = self.scenario.k_f
        included: Dict[bytes, int] = {}
        for b in self.provider.blocks:
            for tx in b.txs:
                included[tx.txid()] = b.height
        for txid, sub_h in self._submit_heights.items():
            if txid in included:
                assert included[txid] - sub_h <= k_f - 1, (
                    f"tx included {included[txid] - sub_h} blocks after submission"
                )
        pending = {e.tx.txid() for e in self.provider.mempool}
        for txid, sub_h in self._submit_heights.items():
            if txid in pending:
                assert self.provider.height + 1 <= sub_h + k_f - 1, (
                    "mempool holds a tx past its inclusion deadline"
                )


# ---------------------------------------------------------------------------
# running + checking
# ---------------------------------------------------------------------------


def run(scenario: Scenario, seed: Optional[int] = None,
        mode: Optional[Mode] = None):
    """Returns (trace, SafetyReport, LivenessReport). Deterministic in
    (scenario, seed); invalid parameter combinations raise before any event."""
    sc = scenario
    if seed is not None or mode is not None:
        sc = replace(
            scenario,
            seed=scenario.seed if seed is None else seed,
            mode=scenario.mode if mode is None else mode,
        )
    world = World(sc)
    world.run_loop()
    world.finalize()
    trace = world.trace
    return trace, check_economic_safety(trace), check_liveness(trace)


def _meta(trace: List[dict]) -> dict:
    if not trace or trace[0].get("kind") != "meta":
        raise ValueError("trace has no meta record")
    return trace[0]


def check_economic_safety(trace: List[dict]) -> SafetyReport:
    """Fails iff a conflict exists without at least f+1 adversarial deposits
    burned strictly before their timelocks, or any honest deposit burned."""
    meta = _meta(trace)
    adversarial = set(meta["adversarial"])
    honest = set(meta["honest"])
    f = meta["f"]

    conflict = None
    outputs: Dict[int, Dict[str, Set[str]]] = {}  # height -> id -> clients
    for rec in trace:
        if rec["kind"] != "client_adopt":
            continue
        ids = outputs.setdefault(rec["h"], {})
        ids.setdefault(rec["id"], set()).add(rec["client"])
        if conflict is None and len(ids) > 1:
            pair = sorted(ids)
            conflict = {
                "height": rec["h"],
                "ids": pair,
                "clients": sorted(ids[pair[0]] | ids[pair[1]]),
            }

    slashed, honest_slashed, extracted = [], [], []
    good_burns = set()
    for rec in trace:
        if rec["kind"] == "burn":
            slashed.append({"validator": rec["v"], "burn_height": rec["burn_height"],
                            "timelock": rec["timelock"]})
            if rec["v"] in honest:
                honest_slashed.append(rec["v"])
            elif rec["burn_height"] < rec["timelock"]:
                good_burns.add(rec["v"])
        elif rec["kind"] == "extraction":
            extracted.append({"client": rec["client"], "validator": rec["v"],
                              "height": rec["h"]})

    ok = True
    detail = "no conflict" if conflict is None else ""
    if honest_slashed:
        ok = False
        detail = f"honest deposits burned: {sorted(set(honest_slashed))}"
    elif conflict is not None:
        need = f + 1
        if len(good_burns & adversarial) >= need:
            detail = (f"conflict at height {conflict['height']} answered by "
                      f"{len(good_burns & adversarial)} burns before timelock")
        else:
            ok = False
            detail = (f"conflict at height {conflict['height']} but only "
                      f"{len(good_burns & adversarial)} of {need} required burns")
    return SafetyReport(ok=ok, conflict=conflict, slashed=slashed,
                        honest_slashed=sorted(set(honest_slashed)),
                        extracted=extracted, detail=detail)


def check_liveness(trace: List[dict], t_bound: Optional[int] = None) -> LivenessReport:
    """Fails iff some tx handed to an honest validator is not in every
    (from-genesis) client's chain within max(t, GST) + T_confirm + 2*delta
    ticks, or any client halts."""
    meta = _meta(trace)
    gst = meta["gst"]
    if t_bound is None:
        t_bound = meta["provider_interval"] * meta["k_c"] + 2 * meta["delta"]

    eligible = [c for c, online in zip(meta["clients"], meta["client_online"]) if online == 0]
    injected: Dict[str, int] = {}
    block_of_tx: Dict[str, str] = {}
    adopt_t: Dict[Tuple[str, str], int] = {}
    halts = []
    for rec in trace:
        kind = rec["kind"]
        if kind == "tx_inject":
            injected.setdefault(rec["tx"], rec["t"])
        elif kind == "decision":
            for tx in rec["txs"]:
                block_of_tx.setdefault(tx, rec["id"])
        elif kind == "client_adopt":
            adopt_t.setdefault((rec["client"], rec["id"]), rec["t"])
        elif kind == "halt":
            halts.append({"client": rec["client"], "rule": rec["rule"], "t": rec["t"]})

    missing, worst = [], None
    for tx, t_in in injected.items():
        deadline = max(t_in, gst) + t_bound
        bid = block_of_tx.get(tx)
        if bid is None:
            missing.append(tx)
            continue
        lat = None
        for c in eligible:
            at = adopt_t.get((c, bid))
            if at is None or at > deadline:
                missing.append(tx)
                lat = None
                break
            lat = max(lat or 0, at - max(t_in, gst))
        if lat is not None:
            worst = max(worst or 0, lat)

    ok = not halts and not missing
    detail = ""
    if halts:
        detail = f"{len(halts)} client halt(s)"
    elif missing:
        detail = f"{len(missing)} tx(s) missed the confirmation bound"
    elif worst is not None:
        detail = f"worst confirmation latency {worst} ticks (bound {t_bound})"
    return LivenessReport(ok=ok, max_latency=worst, halts=halts,
                          missing_txs=sorted(missing), detail=detail)


# ---------------------------------------------------------------------------
# trace serialization
# ---------------------------------------------------------------------------


def dump_trace(trace: List[dict]) -> str:
    return "\n".join(
        json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in trace
    ) + "\n"


def write_trace(path, trace: List[dict]):
    with open(path, "w") as fh:
        fh.write(dump_trace(trace))


def read_trace(path) -> List[dict]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def reports_to_dict(safety: SafetyReport, liveness: LivenessReport) -> dict:
    return {"v": TRACE_VERSION, "safety": safety.to_dict(), "liveness": liveness.to_dict()}
