"""Finality layer on top of consensus decisions.

Validators confirm each decided block with a one-time signature whose signing
context is the block's height. Contexts are consumed strictly in order: a
decision arriving early is buffered until the gap fills, and a height is
never skipped or signed twice. Clients append a block to their finalized
chain once they hold 2f+1 verifying votes for it from the right validator
set. Because any two 2f+1 quorums over n <= 3f+1 validators share at least
f+1 signers, conflicting finalized blocks at one height hand over f+1
double-signed contexts, and each of those extracts a secret key.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .crypto import (
    DapsKeypair,
    DapsPublicKey,
    Signature,
    daps_extract,
    daps_sign,
    daps_verify,
    schnorr_verify,
)
from .consensus import ConsumerBlock


@dataclass(frozen=True)
class FinalVote:
    height: int
    block_id: bytes
    signer: int
    sig: Signature

    def encode(self) -> bytes:
        return (
            self.height.to_bytes(8, "big")
            + self.block_id
            + self.signer.to_bytes(2, "big")
            + self.sig.encode()
        )

    @classmethod
    def decode(cls, b: bytes) -> "FinalVote":
        if len(b) != 106:
            raise ValueError("final vote must be 106 bytes")
        return cls(
            int.from_bytes(b[:8], "big"),
            b[8:40],
            int.from_bytes(b[40:42], "big"),
            Signature.decode(b[42:]),
        )


def make_final_vote(keypair: DapsKeypair, signer: int, height: int, block_id: bytes) -> FinalVote:
    return FinalVote(height, block_id, signer, daps_sign(keypair, block_id, height))


def verify_final_vote(pk: DapsPublicKey, vote: FinalVote) -> bool:
    return daps_verify(pk, vote.block_id, vote.height, vote.sig)


class SigningDiscipline(RuntimeError):
    """An honest signer was asked to sign twice for one context."""


class FinalityGadget:
    """Per-validator vote emitter: strictly sequential contexts."""

    def __init__(self, me: int, keypair: DapsKeypair):
        self.me = me
        self.keypair = keypair
        self.height = 0                      # last height voted
        self._pending: Dict[int, bytes] = {}  # buffered decisions
        self.signed: Dict[int, bytes] = {}    # context -> block id, the discipline log

    def on_decision(self, height: int, block_id: bytes) -> List[FinalVote]:
        """Returns the votes released by this decision (possibly several, if
        it fills a buffered gap; possibly none, if the gap remains)."""
        self._pending.setdefault(height, block_id)
        votes: List[FinalVote] = []
        while self.height + 1 in self._pending:
            h = self.height + 1
            bid = self._pending.pop(h)
            if h in self.signed:
                if self.signed[h] != bid:
                    raise SigningDiscipline(f"context {h} already used")
                self.height = h
                continue
            self.signed[h] = bid
            votes.append(make_final_vote(self.keypair, self.me, h, bid))
            self.height = h
        return votes


# ---------------------------------------------------------------------------
# client-side finalization
# ---------------------------------------------------------------------------


def quorum_for(
    votes: Iterable[FinalVote],
    height: int,
    block_id: bytes,
    validator_set: Dict[int, DapsPublicKey],
    threshold: int,
    verify: Callable[[DapsPublicKey, FinalVote], bool] = verify_final_vote,
) -> Optional[Tuple[FinalVote, ...]]:
    """A verifying 2f+1 quorum from the given set, or None. One vote per signer."""
    picked: Dict[int, FinalVote] = {}
    for v in votes:
        if v.height != height or v.block_id != block_id or v.signer in picked:
            continue
        pk = validator_set.get(v.signer)
        if pk is None or not verify(pk, v):
            continue
        picked[v.signer] = v
        if len(picked) >= threshold:
            return tuple(sorted(picked.values(), key=lambda x: x.signer))
    return None


def output_chain(
    chain: List[ConsumerBlock],
    tree: Dict[bytes, ConsumerBlock],
    votes: Iterable[FinalVote],
    validator_set_fn: Callable[[int], Dict[int, DapsPublicKey]],
    threshold: int,
    verify: Callable[[DapsPublicKey, FinalVote], bool] = verify_final_vote,
) -> List[ConsumerBlock]:
    """Extend `chain` with every block that (a) is the next height, (b) has
    the current tip as parent, and (c) carries a verifying vote quorum from
    the validator set for its height. Returns the extended chain."""
    votes = list(votes)
    chain = list(chain)
    while True:
        tip = chain[-1]
        next_h = tip.height + 1
        extended = False
        for block in tree.values():
            if block.height != next_h or block.parent != tip.block_id():
                continue
            vset = validator_set_fn(next_h)
            if quorum_for(votes, next_h, block.block_id(), vset, threshold, verify):
                chain.append(block)
                extended = True
                break
        if not extended:
            return chain


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Extraction:
    signer: int
    height: int
    block_ids: Tuple[bytes, bytes]
    secret: int


def key_extract(
    votes: Iterable[FinalVote],
    pk_of: Callable[[int], Optional[DapsPublicKey]],
    verify: Callable[[DapsPublicKey, FinalVote], bool] = verify_final_vote,
    extract: Callable[..., int] = daps_extract,
) -> List[Extraction]:
    """Every signer with two verifying votes on distinct blocks at one height
    leaks its secret key. Returns one extraction per (signer, height)."""
    by_slot: Dict[Tuple[int, int], Dict[bytes, FinalVote]] = {}
    for v in votes:
        by_slot.setdefault((v.signer, v.height), {}).setdefault(v.block_id, v)
    out: List[Extraction] = []
    seen_signers = set()
    for (signer, height), per_block in sorted(by_slot.items()):
        if len(per_block) < 2 or signer in seen_signers:
            continue
        pk = pk_of(signer)
        if pk is None:
            continue
        verified = [v for v in per_block.values() if verify(pk, v)]
        if len(verified) < 2:
            continue
        v1, v2 = verified[0], verified[1]
        secret = extract(pk, height, v1.block_id, v1.sig, v2.block_id, v2.sig)
        out.append(Extraction(signer, height, (v1.block_id, v2.block_id), secret))
        seen_signers.add(signer)
    return out


# ---------------------------------------------------------------------------
# smart-mode confirmation signatures (plain Schnorr, identification only)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConfirmSig:
    height: int
    block_id: bytes
    signer: int
    sig: Signature

    def message(self) -> bytes:
        return b"confirm" + self.height.to_bytes(8, "big") + self.block_id

    def encode(self) -> bytes:
        return (
            self.height.to_bytes(8, "big")
            + self.block_id
            + self.signer.to_bytes(2, "big")
            + self.sig.encode()
        )

    @classmethod
    def decode(cls, b: bytes) -> "ConfirmSig":
        if len(b) != 106:
            raise ValueError("confirmation signature must be 106 bytes")
        return cls(
            int.from_bytes(b[:8], "big"),
            b[8:40],
            int.from_bytes(b[40:42], "big"),
            Signature.decode(b[42:]),
        )


def confirm_message(height: int, block_id: bytes) -> bytes:
    return b"confirm" + height.to_bytes(8, "big") + block_id


def verify_confirm_sig(pk_point, cs: ConfirmSig) -> bool:
    return schnorr_verify(pk_point, cs.message(), cs.sig)


def cert_signers(cert: Sequence) -> List[int]:
    return sorted({v.signer for v in cert})


def cert_intersection(cert_a: Sequence, cert_b: Sequence) -> List[int]:
    """Signers present in both quorums: the provably misbehaving set."""
    return sorted(set(cert_signers(cert_a)) & set(cert_signers(cert_b)))
