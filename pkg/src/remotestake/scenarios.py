"""Named simulation scenarios: a clean run plus the attack playbook.

Each factory returns a Scenario whose ``script`` hook drives the corrupted
validators.  Honest actors always run the stock module code; the scripts act
only through the world's forging and reveal helpers, so every scenario is a
statement about what the protocol tolerates rather than about patched
internals.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .consensus import (
    GENESIS_ID,
    ConsumerBlock,
    Precommit,
    Prevote,
    Proposal,
    SignedMessage,
)
from .crypto import schnorr_sign, tagged_hash
from .finality import FinalVote, key_extract, make_final_vote
from .sim import (
    DROP,
    AdversaryScript,
    Mode,
    Scenario,
    World,
    keyring_for,
)
from .timestamping import Timestamp, last_height_of_period


def _f_for(n: int) -> int:
    return (n - 1) // 3


def _interval_for(gst: int) -> int:
    # a provider block must outlast the worst message round-trip, and the
    # inclusion windows (k_d provider blocks) must leave consensus room to
    # restart after GST, so the block interval grows with the synchrony
    # bound under test
    if gst > 100:
        return 40
    if gst > 20:
        return 24
    return 12


def _t_end_for(gst: int) -> int:
    return 640 if gst >= 100 else 480


# ---------------------------------------------------------------------------
# clean run
# ---------------------------------------------------------------------------


class _CrashSilent(AdversaryScript):
    """Corrupted validators simply stop at t=0 and never speak again."""

    def on_tick(self, t: int):
        if t == 0:
            for vid in sorted(self.corrupted):
                self.world.crash(vid)


def scenario_normal_path(n: int = 4, gst: int = 0, seed: int = 7,
                         mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    """Clean run with the maximum tolerated number of crash-silent
    validators.  The liveness checker must pass at every GST."""
    f = _f_for(n)
    return Scenario(
        name="normal_path",
        n=n, f=f,
        gst=gst,
        t_end=_t_end_for(gst),
        provider_interval=_interval_for(gst),
        seed=seed,
        mode=mode,
        adversarial=tuple(range(n - f, n)),
        n_clients=2,
        client_online=(0, 0),
        expect_halts=False,
        expect_liveness=True,
        script=_CrashSilent,
    )


# ---------------------------------------------------------------------------
# shared plumbing for the staged attack scripts
# ---------------------------------------------------------------------------


class _StagedAttack(AdversaryScript):
    """Base for the attack scripts: exposes the forged-chain and forged-cert
    helpers they all share, plus a tiny stage counter."""

    def __init__(self, world: World):
        super().__init__(world)
        self.stage = 0
        self.hidden: List[ConsumerBlock] = []
        self.hidden_votes: Dict[bytes, list] = {}

    # -- helpers -------------------------------------------------------------

    def witness(self):
        """Lowest honest validator; its decided map tells the script how far
        the public chain has progressed."""
        return self.world.validators[min(self.world.scenario.honest_ids())]

    def public_decided(self, h: int) -> Optional[ConsumerBlock]:
        return self.witness().decided.get(h)

    def signers(self) -> List[int]:
        return sorted(self.corrupted)

    def forge_votes(self, block: ConsumerBlock) -> list:
        w = self.world
        if w.mode is Mode.SMART:
            votes = w.forge_confirm_sigs(block, self.signers())
        else:
            votes = w.forge_final_votes(block, self.signers())
        self.hidden_votes[block.block_id()] = votes
        return votes

    def forge_shadow_chain(self, start: int, end: int, parent: bytes,
                           tag: bytes) -> List[ConsumerBlock]:
        """Forge blocks start..end hanging off ``parent`` and sign each with
        every corrupted validator."""
        blocks = []
        proposers = self.signers()
        for h in range(start, end + 1):
            blk = self.world.forge_block(
                h, parent, proposers[h % len(proposers)],
                txs=(tag + h.to_bytes(2, "big"),),
            )
            self.forge_votes(blk)
            blocks.append(blk)
            parent = blk.block_id()
        return blocks

    def all_votes(self, blocks: Sequence[ConsumerBlock]) -> list:
        out = []
        for blk in blocks:
            out.extend(self.hidden_votes[blk.block_id()])
        return out

    def crash_all(self):
        for vid in self.signers():
            self.world.crash(vid)

    def request_unbond_all(self):
        for vid in self.signers():
            self.world.submit_unbond(vid, by=f"val{vid}")

    def unbond_effective(self) -> bool:
        regs = self.world.registry.records
        return all(
            regs[v].duty_end < self.world.scenario.duty_span
            for v in self.signers()
        )


def _attack_scenario(name: str, n: int, seed: int, mode: Mode,
                     script: Callable, **kw) -> Scenario:
    f = _f_for(n)
    defaults = dict(
        name=name,
        n=n, f=f,
        gst=0,
        seed=seed,
        mode=mode,
        provider_interval=12,
        adversarial=tuple(range(n - (2 * f + 1), n)),
        expect_liveness=False,
        script=script,
    )
    defaults.update(kw)
    return Scenario(**defaults)


# ---------------------------------------------------------------------------
# posterior corruption
# ---------------------------------------------------------------------------


class _PosteriorCorruption(_StagedAttack):
    """The majority behaves honestly until its stake is unlocked, then signs
    a conflicting chain from the era it was still on duty for and serves it
    to a late-joining client."""

    def on_tick(self, t: int):
        w = self.world
        m = w.scenario.m
        if self.stage == 0:
            # wait until the first period is closed and timestamped publicly
            if (last_height_of_period(1, m) - 1 + 1) in self.witness().decided \
                    and len(w.onchain_stamps()) >= 1:
                self.request_unbond_all()
                self.stage = 1
        elif self.stage == 1:
            if self.unbond_effective():
                base = self.public_decided(last_height_of_period(1, m))
                if base is None:
                    return
                top = last_height_of_period(2, m)
                self.hidden = self.forge_shadow_chain(
                    m, top, base.block_id(), b"shadow-",
                )
                tip = self.hidden[-1]
                w.submit_stamp(
                    Timestamp(tip.height, tip.block_id(),
                              tuple(self.hidden_votes[tip.block_id()])),
                    by="adversary",
                )
                self.stage = 2
        elif self.stage == 2:
            # hand the private chain to the late client just before it wakes
            late = w.scenario.client_online[1]
            if t >= late - 1:
                w.reveal("c1", t, blocks=self.hidden,
                         votes=self.all_votes(self.hidden))
                self.stage = 3


def scenario_posterior_corruption(n: int = 4, seed: int = 7,
                                  mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    # the late client wakes inside the inclusion window of the forged
    # timestamp, so it adopts the private chain and the two clients output
    # conflicting histories; the checker then demands the burns
    return _attack_scenario(
        "posterior_corruption", n, seed, mode, _PosteriorCorruption,
        t_end=260,
        n_clients=2,
        client_online=(0, 130),
        expect_halts=True,
        withdraw_at_timelock=False,
    )


# ---------------------------------------------------------------------------
# data availability
# ---------------------------------------------------------------------------


class _DataAvailability(_StagedAttack):
    """The majority forges two private continuations, shows every client one
    of them, and timestamps the other without ever publishing its blocks."""

    def __init__(self, world: World):
        super().__init__(world)
        self.shown: List[ConsumerBlock] = []

    def on_tick(self, t: int):
        w = self.world
        m = w.scenario.m
        b1 = last_height_of_period(1, m)
        if self.stage == 0:
            if b1 in self.witness().decided and b1 + 1 not in self.witness().decided:
                self.crash_all()
                self.stage = 1
        elif self.stage == 1:
            if any(s.ts.height == b1 for s in w.onchain_stamps()):
                base = self.public_decided(b1).block_id()
                top = last_height_of_period(2, m)
                self.shown = self.forge_shadow_chain(m, top, base, b"shown-")
                self.hidden = self.forge_shadow_chain(m, top, base, b"veiled-")
                for c in w.meta_clients():
                    w.reveal(c, t + 1, blocks=self.shown,
                             votes=self.all_votes(self.shown))
                tip = self.hidden[-1]
                w.submit_stamp(
                    Timestamp(tip.height, tip.block_id(),
                              tuple(self.hidden_votes[tip.block_id()])),
                    by="adversary",
                )
                self.stage = 2


def scenario_data_availability(n: int = 4, seed: int = 7,
                               mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    return _attack_scenario(
        "data_availability", n, seed, mode, _DataAvailability,
        t_end=220,
        n_clients=2,
        client_online=(0, 0),
        expect_halts=True,
        withdraw_at_timelock=False,
    )


# ---------------------------------------------------------------------------
# escaping stake, both flavours
# ---------------------------------------------------------------------------


class _EscapingStakeA(_StagedAttack):
    """Unbond, wait out the inclusion window, then serve two conflicting
    single-height forks to two different clients.  Neither client may adopt:
    the signing set behind the forks is stale."""

    def on_tick(self, t: int):
        w = self.world
        m = w.scenario.m
        b1 = last_height_of_period(1, m)
        if self.stage == 0:
            if b1 in self.witness().decided and b1 + 1 not in self.witness().decided:
                self.crash_all()
                self.request_unbond_all()
                self.stage = 1
        elif self.stage == 1:
            # the set for period 2 resolves near the start of period 1's
            # stamps; once the provider is past that reference plus the
            # inclusion window, new period-2 certificates are unusable
            if w.provider.height >= w.params.k_d and self.unbond_effective():
                base = self.public_decided(b1).block_id()
                fork_a = self.forge_shadow_chain(m, m, base, b"fork-a-")
                self.hidden_votes_a = self.all_votes(fork_a)
                fork_b = self.forge_shadow_chain(m, m, base, b"fork-b-")
                w.reveal("c0", t + 1, blocks=fork_a, votes=self.hidden_votes_a)
                w.reveal("c1", t + 1, blocks=fork_b,
                         votes=self.all_votes(fork_b))
                self.stage = 2


class _EscapingStakeB(_StagedAttack):
    """Forge the continuation early but submit its timestamp so late that it
    misses the inclusion window.  Every client, including one that joins
    long after, must ignore it."""

    def on_tick(self, t: int):
        w = self.world
        m = w.scenario.m
        b1 = last_height_of_period(1, m)
        if self.stage == 0:
            if b1 in self.witness().decided and b1 + 1 not in self.witness().decided:
                self.crash_all()
                self.stage = 1
        elif self.stage == 1:
            if len(w.onchain_stamps()) >= 1:
                base = self.public_decided(b1).block_id()
                top = last_height_of_period(2, m)
                self.hidden = self.forge_shadow_chain(m, top, base, b"late-")
                self.stage = 2
        elif self.stage == 2:
            # h1 for period 2 is the deepest provider reference of the
            # period-1 stamps; past h1 + k_d - 1 the inclusion must miss
            ref = max(w.block_ref(b) for b in self._period1_public())
            if w.provider.height >= ref + w.params.k_d - 1:
                tip = self.hidden[-1]
                w.submit_stamp(
                    Timestamp(tip.height, tip.block_id(),
                              tuple(self.hidden_votes[tip.block_id()])),
                    by="adversary",
                )
                self.stage = 3
        elif self.stage == 3:
            # bodies only after the fast-progress window is shut for
            # everyone, so the rejection is purely about set staleness
            ref = max(w.block_ref(b) for b in self._period1_public())
            if w.provider.height >= ref + w.params.k_d:
                for c in w.meta_clients():
                    w.reveal(c, t + 1, blocks=self.hidden,
                             votes=self.all_votes(self.hidden))
                self.stage = 4

    def _period1_public(self) -> List[ConsumerBlock]:
        m = self.world.scenario.m
        return [self.public_decided(h) for h in range(1, m + 1)
                if self.public_decided(h) is not None]


def scenario_escaping_stake_a(n: int = 4, seed: int = 7,
                              mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    return _attack_scenario(
        "escaping_stake_a", n, seed, mode, _EscapingStakeA,
        t_end=220,
        n_clients=2,
        client_online=(0, 0),
        expect_halts=False,
        withdraw_at_timelock=False,
    )


def scenario_escaping_stake_b(n: int = 4, seed: int = 7,
                              mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    return _attack_scenario(
        "escaping_stake_b", n, seed, mode, _EscapingStakeB,
        t_end=260,
        n_clients=2,
        client_online=(0, 200),
        expect_halts=False,
        withdraw_at_timelock=False,
    )


# ---------------------------------------------------------------------------
# mismatched timestamp
# ---------------------------------------------------------------------------


class _MismatchedTimestamp(_StagedAttack):
    """Three conflicting tips: one shown to early clients, one timestamped
    with its body withheld.  Early clients halt and urgently stamp what they
    saw; a client joining after the vicinity window must refuse to follow
    the attacker's timestamp because a conflicting one sits right next to
    it."""

    def on_tick(self, t: int):
        w = self.world
        m = w.scenario.m
        b1 = last_height_of_period(1, m)
        if self.stage == 0:
            if b1 in self.witness().decided and b1 + 1 not in self.witness().decided:
                self.crash_all()
                self.stage = 1
        elif self.stage == 1:
            if any(s.ts.height == b1 for s in w.onchain_stamps()):
                base = self.public_decided(b1).block_id()
                top = last_height_of_period(2, m)
                prefix = self.forge_shadow_chain(m, top - 1, base, b"trunk-")
                head = prefix[-1].block_id()
                shown_tip = self.forge_shadow_chain(top, top, head, b"tip-a-")
                veiled_tip = self.forge_shadow_chain(top, top, head, b"tip-b-")
                self.hidden = prefix + veiled_tip
                shown = prefix + shown_tip
                for c in w.meta_clients():
                    if c != w.scenario.notes.get("late_client"):
                        w.reveal(c, t + 1, blocks=shown,
                                 votes=self.all_votes(shown))
                tip = veiled_tip[0]
                w.submit_stamp(
                    Timestamp(tip.height, tip.block_id(),
                              tuple(self.hidden_votes[tip.block_id()])),
                    by="adversary",
                )
                self.late_bundle = (prefix + shown_tip + veiled_tip,
                                    self.all_votes(prefix + shown_tip + veiled_tip))
                self.stage = 2
        elif self.stage == 2:
            late = w.scenario.notes.get("late_client")
            wake = w.scenario.client_online[-1]
            if late is not None and t >= wake - 1:
                blocks, votes = self.late_bundle
                w.reveal(late, t, blocks=blocks, votes=votes)
                self.stage = 3


def scenario_mismatched_timestamp(n: int = 4, seed: int = 7,
                                  mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    return _attack_scenario(
        "mismatched_timestamp", n, seed, mode, _MismatchedTimestamp,
        t_end=260,
        n_clients=3,
        client_online=(0, 0, 190),
        expect_halts=True,
        withdraw_at_timelock=False,
        notes={"late_client": "c2"},
    )


# ---------------------------------------------------------------------------
# amnesia, in-simulation flavour
# ---------------------------------------------------------------------------


class _AmnesiaDoubleSign(_StagedAttack):
    """A one-past-quorum minority signs two conflicting first blocks.  With
    only extractable one-time signatures in play the signers lose their
    bonds even though consensus itself never misbehaved."""

    def on_tick(self, t: int):
        w = self.world
        if self.stage == 0 and t == 0:
            self.crash_all()
            self.stage = 1
        elif self.stage == 1 and t >= 10:
            p = self.signers()[0]
            q = self.signers()[-1]
            blk_a = w.forge_block(1, GENESIS_ID, p, txs=(b"first-a",))
            blk_b = w.forge_block(1, GENESIS_ID, q, txs=(b"first-b",))
            votes = self.forge_votes(blk_a) + self.forge_votes(blk_b)
            for c in w.meta_clients():
                w.reveal(c, t + 1, blocks=[blk_a, blk_b], votes=votes)
            self.stage = 2


def scenario_amnesia(n: int = 4, seed: int = 7,
                     mode: Mode = Mode.DUMB_COVENANT) -> Scenario:
    f = _f_for(n)
    return _attack_scenario(
        "amnesia", n, seed, mode, _AmnesiaDoubleSign,
        t_end=160,
        adversarial=tuple(range(n - (f + 1), n)),
        n_clients=2,
        client_online=(0, 0),
        expect_halts=False,
        withdraw_at_timelock=False,
        tx_period=0,
    )


# ---------------------------------------------------------------------------
# committee defection
# ---------------------------------------------------------------------------


def scenario_committee_defector(n: int = 4, seed: int = 7,
                                mode: Mode = Mode.DUMB_COMMITTEE) -> Scenario:
    """Committee mode with one seat refusing to co-sign the refresh
    ceremony.  The published-partials fallback must complete the spend path
    and the trace must name the defector."""
    f = _f_for(n)
    return Scenario(
        name="committee_defector",
        n=n, f=f,
        seed=seed,
        mode=Mode.DUMB_COMMITTEE,
        t_end=480,
        committee_defector=2,
        adversarial=(),
        n_clients=2,
        client_online=(0, 0),
        expect_halts=False,
        expect_liveness=True,
    )


# ---------------------------------------------------------------------------
# the two-world ambiguity construction
# ---------------------------------------------------------------------------


@dataclass
class AmnesiaWorld:
    """One side of the paired construction: who was corrupted, what the two
    clients jointly observed, and what the one-time-signature overlay lets
    an observer extract."""

    name: str
    adversarial: Tuple[int, ...]
    forensic: List[bytes]
    finality_votes: List[FinalVote]
    extracted: Tuple[int, ...]
    decided_first: bytes
    decided_second: bytes


def _signed(keyring, msg) -> SignedMessage:
    return SignedMessage(msg, schnorr_sign(keyring.vote[msg.sender], msg.encode()))


def build_amnesia_worlds(n: int = 4) -> Tuple[AmnesiaWorld, AmnesiaWorld]:
    """Construct the two executions in which different validator subsets are
    corrupted yet the union of the two clients' consensus transcripts is the
    same multiset of signed bytes.

    Group layout for n = 3f+1: disjoint f-sized groups P, Q, R plus one
    extra validator x.  World one corrupts R and x; world two corrupts P and
    x.  Both worlds decide block A at round 0 (seen by the first client) and
    block B over rounds 1..3 (seen by the second client).  Raw consensus
    messages cannot tell the worlds apart; the one-time-signature overlay
    pins each world's actual double-signers.
    """
    f = _f_for(n)
    if n != 3 * f + 1:
        raise ValueError("construction needs n = 3f + 1")
    ids = list(range(n))
    grp_p = ids[:f]
    grp_q = ids[f:2 * f]
    grp_r = ids[2 * f:3 * f]
    extra = ids[3 * f]

    keyring = keyring_for(n, 96, 5)
    block_a = ConsumerBlock(1, GENESIS_ID, grp_p[0], GENESIS_ID, (b"first-a",))
    block_b = ConsumerBlock(1, GENESIS_ID, grp_q[0], GENESIS_ID, (b"first-b",))
    id_a = block_a.block_id()
    id_b = block_b.block_id()

    def world(name: str, corrupted: Sequence[int],
              second_round_hidden: Set[int]) -> AmnesiaWorld:
        # client one watches round 0: proposal for A plus a full quorum of
        # prevotes and precommits from P, R and x.  A is decided.
        c1: List[SignedMessage] = []
        c1.append(_signed(keyring, Proposal(1, 0, block_a, -1, grp_p[0])))
        for v in grp_p + grp_r + [extra]:
            c1.append(_signed(keyring, Prevote(1, 0, id_a, v)))
            c1.append(_signed(keyring, Precommit(1, 0, id_a, v)))

        # client two watches rounds 1..3 and decides B.  Round 1: Q prevotes
        # B after an honest re-proposal but cannot gather quorum.  In world
        # two P and x also prevote here, hidden from client two, which is
        # exactly the knowledge the vote encoding fails to carry.
        c2: List[SignedMessage] = []
        c2.append(_signed(keyring, Proposal(1, 1, block_b, -1, grp_q[0])))
        for v in grp_q:
            c2.append(_signed(keyring, Prevote(1, 1, id_b, v)))
            c2.append(_signed(keyring, Precommit(1, 1, b"", v)))
        # round 2: x re-proposes B, quorum of prevotes from Q, R and x, but
        # x withholds its own prevote so nobody precommits B yet.
        c2.append(_signed(keyring, Proposal(1, 2, block_b, -1, extra)))
        for v in grp_q + grp_r + [extra]:
            if v not in second_round_hidden:
                c2.append(_signed(keyring, Prevote(1, 2, id_b, v)))
        for v in grp_q + grp_r:
            c2.append(_signed(keyring, Precommit(1, 2, b"", v)))
        # round 3: the round-2 prevote quorum surfaces, the locked group
        # releases its lock, and P, R and x decide B.
        c2.append(_signed(keyring, Proposal(1, 3, block_b, 2, extra)))
        for v in grp_p + grp_r + [extra]:
            c2.append(_signed(keyring, Prevote(1, 3, id_b, v)))
            c2.append(_signed(keyring, Precommit(1, 3, id_b, v)))

        forensic = sorted(s.encode() for s in c1 + c2)

        # the finality overlay: honest validators one-time-sign only what
        # they decide, which here is the round-3 block.  The first block's
        # certificate can only come from the corrupted group, and those are
        # the votes that double up.
        votes: List[FinalVote] = []
        for v in sorted(corrupted):
            votes.append(make_final_vote(keyring.daps[v], v, 1, id_a))
        for v in sorted(set(grp_p + grp_r + [extra])):
            votes.append(make_final_vote(keyring.daps[v], v, 1, id_b))

        hits = key_extract(votes, pk_of=lambda i: keyring.daps[i].pk)
        extracted = tuple(sorted({e.signer for e in hits}))
        return AmnesiaWorld(
            name=name,
            adversarial=tuple(sorted(corrupted)),
            forensic=forensic,
            finality_votes=votes,
            extracted=extracted,
            decided_first=id_a,
            decided_second=id_b,
        )

    # world one: R and x corrupted; the round-2 prevote x hides is its own.
    # world two: P and x corrupted; P and x prevoted B in round 1 as well,
    # but since prevotes carry no lock context those extra messages are the
    # ones client two never receives, and the transcripts stay identical.
    w1 = world("world-1", grp_r + [extra], {extra})
    w2 = world("world-2", grp_p + [extra], {extra})
    return w1, w2


# ---------------------------------------------------------------------------
# randomized corpus
# ---------------------------------------------------------------------------


@dataclass
class _RandomPlan:
    crash_at: Dict[int, int] = field(default_factory=dict)
    equivocate: Dict[int, int] = field(default_factory=dict)   # vid -> height
    suppress: Set[int] = field(default_factory=set)            # periods
    defer_stride: int = 0
    jitter_seed: bytes = b""


class _RandomAdversary(AdversaryScript):
    """Deterministic mixed bag: crashes, one-off double-signs, withheld
    prompt stamps and deferred provider inclusion, all drawn from a plan
    fixed at scenario-construction time so replays are bit-identical."""

    def __init__(self, world: World, plan: _RandomPlan):
        super().__init__(world)
        self.plan = plan
        self.done_equivocate: Set[int] = set()
        self.rng = random.Random(plan.jitter_seed)

    def suppress_watchtower(self, period: int) -> bool:
        return period in self.plan.suppress

    def defer_tx(self, entry, next_height: int) -> bool:
        if self.plan.defer_stride <= 0:
            return False
        return (entry.submit_height + next_height) % self.plan.defer_stride == 0

    def delivery(self, kind, obj, sender, recipient, send_t):
        # corrupted senders add jitter inside the allowed envelope; honest
        # deliveries keep the default policy
        if sender.startswith("val:"):
            vid = int(sender.split(":")[1])
            if vid in self.corrupted:
                if vid in self.plan.crash_at and send_t >= self.plan.crash_at[vid]:
                    return DROP
                return send_t + 1 + self.rng.randrange(self.world.scenario.delta)
        return None

    def on_tick(self, t: int):
        w = self.world
        for vid, when in self.plan.crash_at.items():
            if t == when:
                w.crash(vid)
        for vid, h in self.plan.equivocate.items():
            if vid in self.done_equivocate or vid in self.plan.crash_at and \
                    t >= self.plan.crash_at[vid]:
                continue
            honest = min(w.scenario.honest_ids())
            decided = w.validators[honest].decided
            if h in decided and h - 1 in decided:
                rival = w.forge_block(
                    h, decided[h - 1].block_id(), vid,
                    txs=(b"rival-" + vid.to_bytes(2, "big"),),
                )
                if w.mode is Mode.SMART:
                    votes = w.forge_confirm_sigs(rival, [vid])
                else:
                    votes = w.forge_final_votes(rival, [vid])
                for c in w.meta_clients():
                    w.reveal(c, t + 1, blocks=[rival], votes=votes)
                self.done_equivocate.add(vid)


def randomized_scenario(index: int) -> Scenario:
    """Deterministic corpus member ``index``: random size, adversary mix and
    schedule, but always within the fault budget, so both checkers must
    pass."""
    seed_bytes = tagged_hash("remotestake/random-corpus",
                             index.to_bytes(8, "big"))
    rng = random.Random(seed_bytes)
    n = 7 if index % 5 == 4 else 4
    f = _f_for(n)
    n_bad = rng.randint(0, f)
    corrupted = tuple(sorted(rng.sample(range(1, n), n_bad)))
    gst = rng.choice((0, 0, 20, 50))
    mode = rng.choice((Mode.DUMB_COVENANT, Mode.DUMB_COMMITTEE, Mode.SMART))

    plan = _RandomPlan(jitter_seed=seed_bytes)
    for vid in corrupted:
        if rng.random() < 0.5:
            plan.crash_at[vid] = rng.randint(0, 120)
        else:
            plan.equivocate[vid] = rng.randint(2, 6)
    # stamp suppression is not drawn here: the watchtower seat is always
    # honest in this corpus, and an adversary cannot mute an honest actor
    if rng.random() < 0.3:
        plan.defer_stride = rng.randint(3, 5)

    def make_script(world: World, _plan=plan) -> AdversaryScript:
        return _RandomAdversary(world, _plan)

    return Scenario(
        name=f"random_{index:03d}",
        n=n, f=f,
        gst=gst,
        t_end=400 if gst > 20 else 280,
        provider_interval=_interval_for(gst),
        seed=9000 + index,
        mode=mode,
        adversarial=corrupted,
        n_clients=2,
        client_online=(0, rng.choice((0, 0, 140))),
        expect_halts=False,
        expect_liveness=True,
        script=make_script,
    )


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------


SCENARIOS: Dict[str, Callable[..., Scenario]] = {
    "normal_path": scenario_normal_path,
    "posterior_corruption": scenario_posterior_corruption,
    "data_availability": scenario_data_availability,
    "escaping_stake_a": scenario_escaping_stake_a,
    "escaping_stake_b": scenario_escaping_stake_b,
    "mismatched_timestamp": scenario_mismatched_timestamp,
    "amnesia": scenario_amnesia,
    "committee_defector": scenario_committee_defector,
}
