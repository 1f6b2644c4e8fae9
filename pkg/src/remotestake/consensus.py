"""Consumer-chain consensus: a height/round/step vote state machine.

One core instance per validator. The core is sans-I/O: every handler returns
a list of actions (broadcasts, timeout requests, decisions) that the
simulator's event loop interprets. Message authenticity is checked by the
caller before feeding the core; the core's own job is the voting discipline:

* a validator prevotes a proposal only if it is unlocked, locked on that very
  value, or shown a 2f+1 prevote quorum from a round later than its lock;
* it locks (and precommits) on seeing a 2f+1 prevote quorum in its round;
* it decides on a 2f+1 precommit quorum for a block it has.

Every message sent or received lands in append-only logs so forensic checks
can replay exactly what a validator can prove after the fact.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from .crypto import Signature, id_hash

NIL = b"\x00" * 32


@dataclass(frozen=True)
class ConsumerBlock:
    height: int
    parent: bytes          # block id of the parent (NIL for genesis' parent)
    proposer: int
    provider_ref: bytes    # hash of a provider block this block points at
    txs: Tuple[bytes, ...] = ()

    def encode(self) -> bytes:
        out = self.height.to_bytes(8, "big") + self.parent
        out += self.proposer.to_bytes(2, "big") + self.provider_ref
        out += len(self.txs).to_bytes(2, "big")
        for t in self.txs:
            out += len(t).to_bytes(2, "big") + t
        return out

    def block_id(self) -> bytes:
        return id_hash(b"cblock" + self.encode())


GENESIS_BLOCK = ConsumerBlock(0, NIL, 0, NIL, ())
GENESIS_ID = GENESIS_BLOCK.block_id()


@dataclass(frozen=True)
class Proposal:
    height: int
    round: int
    block: ConsumerBlock
    valid_round: int
    sender: int

    def encode(self) -> bytes:
        return (
            b"prop"
            + self.height.to_bytes(8, "big")
            + self.round.to_bytes(2, "big")
            + (self.valid_round + 1).to_bytes(2, "big")
            + self.sender.to_bytes(2, "big")
            + self.block.encode()
        )


@dataclass(frozen=True)
class Prevote:
    height: int
    round: int
    block_id: bytes  # NIL for a nil vote
    sender: int

    def encode(self) -> bytes:
        return (
            b"pvot"
            + self.height.to_bytes(8, "big")
            + self.round.to_bytes(2, "big")
            + self.sender.to_bytes(2, "big")
            + self.block_id
        )


@dataclass(frozen=True)
class Precommit:
    height: int
    round: int
    block_id: bytes
    sender: int

    def encode(self) -> bytes:
        return (
            b"pcom"
            + self.height.to_bytes(8, "big")
            + self.round.to_bytes(2, "big")
            + self.sender.to_bytes(2, "big")
            + self.block_id
        )


Message = object  # Proposal | Prevote | Precommit


@dataclass(frozen=True)
class SignedMessage:
    msg: Message
    sig: Signature

    def encode(self) -> bytes:
        return self.msg.encode() + self.sig.encode()


# actions handed back to the event loop
@dataclass(frozen=True)
class Broadcast:
    msg: Message  # unsigned; the world signs on the validator's behalf


@dataclass(frozen=True)
class ScheduleTimeout:
    kind: str  # propose | prevote | precommit
    height: int
    round: int
    delay: int


@dataclass(frozen=True)
class Decision:
    height: int
    block: ConsumerBlock


PROPOSE, PREVOTE, PRECOMMIT = "Proposal", "Prevote", "Precommit"


def round_robin_leader(validators: Sequence[int], height: int, round_: int) -> int:
    return validators[(height + round_) % len(validators)]


class ValidatorCore:
    """State machine for one validator across consumer heights."""

    def __init__(
        self,
        me: int,
        f: int,
        delta: int,
        make_block: Callable[[int], ConsumerBlock],
        proposal_valid: Callable[[ConsumerBlock], bool],
        leader_fn: Callable[[Sequence[int], int, int], int] = round_robin_leader,
        on_transition: Optional[Callable[[dict], None]] = None,
    ):
        self.me = me
        self.f = f
        self.delta = delta
        self.make_block = make_block
        self.proposal_valid = proposal_valid
        self.leader_fn = leader_fn
        self.on_transition = on_transition

        self.height = 1
        self.round = 0
        self.step = PROPOSE
        self.locked_value: Optional[ConsumerBlock] = None
        self.locked_round = -1
        self.valid_value: Optional[ConsumerBlock] = None
        self.valid_round = -1
        self.validators: List[int] = []
        self.decisions: Dict[int, ConsumerBlock] = {}
        self.block_store: Dict[bytes, ConsumerBlock] = {GENESIS_ID: GENESIS_BLOCK}

        # received votes for the current height, keyed (round, block_id)
        self._prevotes: Dict[Tuple[int, bytes], Set[int]] = {}
        self._prevote_any: Dict[int, Set[int]] = {}
        self._precommits: Dict[Tuple[int, bytes], Set[int]] = {}
        self._precommit_any: Dict[int, Set[int]] = {}
        self._proposals: Dict[int, Proposal] = {}
        self._done_rules: Set[Tuple] = set()
        self.recv_log: List[SignedMessage] = []
        self.sent_log: List[Message] = []
        self._prevoted_this_round = False

    # -- helpers ------------------------------------------------------------

    @property
    def quorum(self) -> int:
        return 2 * self.f + 1

    def leader(self, round_: int) -> int:
        return self.leader_fn(self.validators, self.height, round_)

    def _emit(self, event: str, **delta):
        if self.on_transition:
            self.on_transition(
                {"validator": self.me, "event": event, "height": self.height,
                 "round": self.round, "step": self.step, **delta}
            )

    def _reset_height_state(self):
        self.round = 0
        self.step = PROPOSE
        self.locked_value = None
        self.locked_round = -1
        self.valid_value = None
        self.valid_round = -1
        self._prevotes.clear()
        self._prevote_any.clear()
        self._precommits.clear()
        self._precommit_any.clear()
        self._proposals.clear()
        self._done_rules.clear()
        self._prevoted_this_round = False

    def chain_tip_id(self) -> bytes:
        if self.height == 1:
            return GENESIS_ID
        return self.decisions[self.height - 1].block_id()

    # -- entry points -------------------------------------------------------

    def begin(self, validators: Sequence[int]) -> List[object]:
        self.validators = list(validators)
        return self._start_round(0)

    def set_validators(self, validators: Sequence[int]):
        self.validators = list(validators)

    def learn_block(self, block: ConsumerBlock) -> List[object]:
        """Blocks learned out of band (sync, reveals) unblock pending decisions."""
        self.block_store[block.block_id()] = block
        return self._reevaluate()

    def on_message(self, signed: SignedMessage) -> List[object]:
        msg = signed.msg
        if getattr(msg, "height", None) != self.height:
            # stale or future height: future ones are re-delivered by the
            # world when the height advances; stale ones only feed evidence
            self.recv_log.append(signed)
            return []
        self.recv_log.append(signed)
        if isinstance(msg, Proposal):
            self.block_store[msg.block.block_id()] = msg.block
            if msg.sender != self.leader(msg.round):
                self._emit("non_leader_proposal_ignored", sender=msg.sender)
                return []
            self._proposals.setdefault(msg.round, msg)
        elif isinstance(msg, Prevote):
            self._prevotes.setdefault((msg.round, msg.block_id), set()).add(msg.sender)
            self._prevote_any.setdefault(msg.round, set()).add(msg.sender)
        elif isinstance(msg, Precommit):
            self._precommits.setdefault((msg.round, msg.block_id), set()).add(msg.sender)
            self._precommit_any.setdefault(msg.round, set()).add(msg.sender)
        else:
            return []
        return self._reevaluate()

    def on_timeout(self, kind: str, height: int, round_: int) -> List[object]:
        if height != self.height or round_ != self.round:
            return []
        actions: List[object] = []
        if kind == "propose" and self.step == PROPOSE:
            actions += self._prevote(NIL)
        elif kind == "prevote" and self.step == PREVOTE:
            actions += self._precommit(NIL)
        elif kind == "precommit":
            actions += self._start_round(self.round + 1)
        return actions + self._reevaluate()

    # -- internals ----------------------------------------------------------

    def _start_round(self, round_: int) -> List[object]:
        self.round = round_
        self.step = PROPOSE
        self._prevoted_this_round = False
        self._emit("start_round")
        actions: List[object] = []
        if self.leader(round_) == self.me:
            block = self.valid_value if self.valid_value is not None else self.make_block(self.height)
            prop = Proposal(self.height, round_, block, self.valid_round, self.me)
            self.sent_log.append(prop)
            actions.append(Broadcast(prop))
        else:
            actions.append(
                ScheduleTimeout("propose", self.height, round_, self.delta * (2 + round_))
            )
        return actions

    def _prevote(self, block_id: bytes) -> List[object]:
        if self._prevoted_this_round:
            return []
        self._prevoted_this_round = True
        self.step = PREVOTE
        vote = Prevote(self.height, self.round, block_id, self.me)
        self.sent_log.append(vote)
        self._emit("prevote", block=block_id.hex()[:16])
        return [Broadcast(vote)]

    def _precommit(self, block_id: bytes) -> List[object]:
        self.step = PRECOMMIT
        vote = Precommit(self.height, self.round, block_id, self.me)
        self.sent_log.append(vote)
        self._emit("precommit", block=block_id.hex()[:16])
        return [Broadcast(vote)]

    def _once(self, key: Tuple) -> bool:
        if key in self._done_rules:
            return False
        self._done_rules.add(key)
        return True

    def _reevaluate(self) -> List[object]:
        actions: List[object] = []
        progressed = True
        while progressed:
            progressed = False

            # proposal handling in the propose step
            prop = self._proposals.get(self.round)
            if prop is not None and self.step == PROPOSE:
                v = prop.block
                vid = v.block_id()
                vr = prop.valid_round
                may_vote = False
                if vr == -1:
                    may_vote = True
                elif 0 <= vr < self.round:
                    quorum_at_vr = self._prevotes.get((vr, vid), set())
                    if len(quorum_at_vr) >= self.quorum:
                        may_vote = True
                    else:
                        may_vote = None  # wait for the justification to arrive
                else:
                    may_vote = False
                if may_vote is True:
                    ok = self.proposal_valid(v) and (
                        self.locked_round == -1
                        or self.locked_value.block_id() == vid  # voting rule 1
                        or (vr > self.locked_round)              # voting rule 2
                    )
                    actions += self._prevote(vid if ok else NIL)
                    progressed = True
                elif may_vote is False and self._once(("bad_proposal", self.round)):
                    actions += self._prevote(NIL)
                    progressed = True

            # 2f+1 prevotes for the proposed value in the current round
            prop = self._proposals.get(self.round)
            if prop is not None and self.step in (PREVOTE, PRECOMMIT):
                vid = prop.block.block_id()
                if len(self._prevotes.get((self.round, vid), set())) >= self.quorum:
                    if self._once(("prevote_quorum", self.round, vid)):
                        self.valid_value = prop.block
                        self.valid_round = self.round
                        self._emit("valid_value", block=vid.hex()[:16])
                        if self.step == PREVOTE:
                            self.locked_value = prop.block
                            self.locked_round = self.round
                            self._emit("locked", block=vid.hex()[:16])
                            actions += self._precommit(vid)
                        progressed = True

            # 2f+1 nil prevotes in the prevote step
            if self.step == PREVOTE:
                if len(self._prevotes.get((self.round, NIL), set())) >= self.quorum:
                    if self._once(("nil_prevote_quorum", self.round)):
                        actions += self._precommit(NIL)
                        progressed = True

            # any-mix prevote quorum: arm the prevote timeout
            if self.step == PREVOTE:
                if len(self._prevote_any.get(self.round, set())) >= self.quorum:
                    if self._once(("prevote_timeout", self.round)):
                        actions.append(
                            ScheduleTimeout(
                                "prevote", self.height, self.round,
                                self.delta * (2 + self.round),
                            )
                        )
                        progressed = True

            # decision: 2f+1 precommits for a block we have, any round
            decided = False
            for (r, bid), senders in list(self._precommits.items()):
                if bid == NIL or len(senders) < self.quorum:
                    continue
                block = self.block_store.get(bid)
                if block is None:
                    continue
                actions += self._decide(block)
                decided = progressed = True
                break
            if decided:
                continue

            # any-mix precommit quorum: arm the precommit timeout
            if len(self._precommit_any.get(self.round, set())) >= self.quorum:
                if self._once(("precommit_timeout", self.round)):
                    actions.append(
                        ScheduleTimeout(
                            "precommit", self.height, self.round,
                            self.delta * (2 + self.round),
                        )
                    )
                    progressed = True

            # f+1 messages from a later round: jump forward
            later = set()
            for r in set(self._prevote_any) | set(self._precommit_any) | set(self._proposals):
                if r > self.round:
                    later |= self._prevote_any.get(r, set()) | self._precommit_any.get(r, set())
                    if r in self._proposals:
                        later.add(self._proposals[r].sender)
            if len(later) >= self.f + 1:
                target = min(r for r in
                             set(self._prevote_any) | set(self._precommit_any) | set(self._proposals)
                             if r > self.round)
                actions += self._start_round(target)
                progressed = True

        return actions

    def _decide(self, block: ConsumerBlock) -> List[object]:
        h = self.height
        self.decisions[h] = block
        self._emit("decision", block=block.block_id().hex()[:16])
        self.height = h + 1
        self._reset_height_state()
        return [Decision(h, block), *self._start_round(0)]
