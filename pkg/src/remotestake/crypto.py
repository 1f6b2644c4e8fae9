"""Signature schemes for the staking protocol.

Three schemes share one keypair shape (scalar secret, curve-point public key):

* extractable one-time signatures for finality votes: every signing context
  (one per consumer height) has its nonce point pre-committed in the public
  key, so two different messages signed for the same context leak the secret
  key to anyone holding both signatures;
* plain Schnorr with per-message nonces for consensus votes and provider
  transaction spends;
* (see musig.py) a two-round aggregate used by bond-committee contracts.

All signing is deterministic: nonces are derived by hashing, so identical
inputs re-sign to identical bytes and simulation traces replay exactly.

Wire formats, pinned by golden vectors: public keys are 33-byte compressed
points, signatures are 64 bytes (32-byte x-only nonce point, even y, then the
32-byte scalar).
"""

import hashlib
from dataclasses import dataclass
from typing import List, Tuple

from .group import (
    G,
    N,
    P,
    Point,
    decode_point,
    encode_point,
    generator_mul,
    has_even_y,
    lift_x,
    point_add,
    point_mul,
)


class ContextExhausted(ValueError):
    """Signing context outside the key's committed horizon."""


class ExtractionFailure(ValueError):
    """The two signatures do not form an extracting pair."""


def tagged_hash(tag: str, *chunks: bytes) -> bytes:
    t = hashlib.sha256(tag.encode()).digest()
    h = hashlib.sha256(t + t)
    for c in chunks:
        h.update(c)
    return h.digest()


def hash_to_scalar(tag: str, *chunks: bytes) -> int:
    """Nonzero scalar mod the group order."""
    ctr = 0
    while True:
        extra = b"" if ctr == 0 else ctr.to_bytes(4, "big")
        v = int.from_bytes(tagged_hash(tag, *chunks, extra), "big") % N
        if v != 0:
            return v
        ctr += 1  # pragma: no cover - p(zero) ~ 2^-256


def id_hash(data: bytes) -> bytes:
    """32-byte content identifier used for blocks and transactions."""
    return tagged_hash("remotestake/id", data)


def encode_scalar(s: int) -> bytes:
    return (s % N).to_bytes(32, "big")


@dataclass(frozen=True)
class Signature:
    """64-byte signature: x coordinate of the nonce point (even y) and s."""

    rx: int
    s: int

    def encode(self) -> bytes:
        return self.rx.to_bytes(32, "big") + self.s.to_bytes(32, "big")

    @classmethod
    def decode(cls, b: bytes) -> "Signature":
        if len(b) != 64:
            raise ValueError("signature must be 64 bytes")
        return cls(int.from_bytes(b[:32], "big"), int.from_bytes(b[32:], "big"))


def _even_y_nonce(r: int) -> Tuple[int, Point]:
    """Adjust the nonce scalar so r*G has even y; returns (scalar, point)."""
    R = generator_mul(r)
    if not has_even_y(R):
        r = N - r
        R = (R[0], P - R[1])
    return r, R


# ---------------------------------------------------------------------------
# extractable one-time signatures (finality votes)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DapsPublicKey:
    point: Point
    # nonce_commitments[ct-1] is the mandatory nonce point for context ct
    nonce_commitments: Tuple[Point, ...]

    @property
    def horizon(self) -> int:
        return len(self.nonce_commitments)

    def encode(self) -> bytes:
        out = encode_point(self.point)
        for c in self.nonce_commitments:
            out += encode_point(c)
        return out


@dataclass(frozen=True)
class DapsSecretKey:
    scalar: int
    nonce_seed: bytes
    horizon: int


@dataclass(frozen=True)
class DapsKeypair:
    sk: DapsSecretKey
    pk: DapsPublicKey


def _daps_nonce(seed: bytes, ct: int) -> Tuple[int, Point]:
    r = hash_to_scalar("remotestake/daps/nonce", seed, ct.to_bytes(8, "big"))
    return _even_y_nonce(r)


def daps_keygen(seed: bytes, horizon: int) -> DapsKeypair:
    """Keypair whose public key pre-commits one nonce point per context 1..horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sk = hash_to_scalar("remotestake/daps/key", seed)
    nonce_seed = tagged_hash("remotestake/daps/seed", seed)
    commitments = tuple(_daps_nonce(nonce_seed, ct)[1] for ct in range(1, horizon + 1))
    pk = DapsPublicKey(generator_mul(sk), commitments)
    return DapsKeypair(DapsSecretKey(sk, nonce_seed, horizon), pk)


def _daps_challenge(rx: int, pk: DapsPublicKey, ct: int, msg: bytes) -> int:
    return hash_to_scalar(
        "remotestake/daps/challenge",
        rx.to_bytes(32, "big"),
        encode_point(pk.point),
        ct.to_bytes(8, "big"),
        msg,
    )


def daps_sign(keypair: DapsKeypair, msg: bytes, ct: int) -> Signature:
    if not 1 <= ct <= keypair.sk.horizon:
        raise ContextExhausted(f"context {ct} outside horizon 1..{keypair.sk.horizon}")
    r, R = _daps_nonce(keypair.sk.nonce_seed, ct)
    e = _daps_challenge(R[0], keypair.pk, ct, msg)
    s = (r + e * keypair.sk.scalar) % N
    return Signature(R[0], s)


def daps_verify(pk: DapsPublicKey, msg: bytes, ct: int, sig: Signature) -> bool:
    """Valid iff the nonce point equals the context's commitment and the
    Schnorr equation holds. The commitment check is what makes a second
    signature on the same context extracting rather than merely suspicious."""
    if not 1 <= ct <= pk.horizon:
        return False
    commitment = pk.nonce_commitments[ct - 1]
    if sig.rx != commitment[0]:
        return False
    if not 0 <= sig.s < N:
        return False
    e = _daps_challenge(sig.rx, pk, ct, msg)
    lhs = generator_mul(sig.s)
    rhs = point_add(commitment, point_mul(pk.point, e))
    return lhs == rhs


def daps_extract(
    pk: DapsPublicKey,
    ct: int,
    m1: bytes,
    sig1: Signature,
    m2: bytes,
    sig2: Signature,
) -> int:
    """Secret key from two verifying signatures on distinct messages for one
    context. Both signatures necessarily share the committed nonce, so
    s1 - s2 = (e1 - e2) * sk."""
    if m1 == m2:
        raise ExtractionFailure("messages are identical")
    if not daps_verify(pk, m1, ct, sig1) or not daps_verify(pk, m2, ct, sig2):
        raise ExtractionFailure("signatures do not verify")
    e1 = _daps_challenge(sig1.rx, pk, ct, m1)
    e2 = _daps_challenge(sig2.rx, pk, ct, m2)
    if e1 == e2:  # pragma: no cover - hash collision
        raise ExtractionFailure("challenge collision")
    sk = (sig1.s - sig2.s) * pow(e1 - e2, -1, N) % N
    return sk


# ---------------------------------------------------------------------------
# plain Schnorr (consensus votes, provider spends)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SchnorrKeypair:
    sk: int
    pk: Point


def schnorr_keygen(seed: bytes) -> SchnorrKeypair:
    sk = hash_to_scalar("remotestake/schnorr/key", seed)
    return SchnorrKeypair(sk, generator_mul(sk))


def schnorr_keypair_from_scalar(sk: int) -> SchnorrKeypair:
    sk %= N
    if sk == 0:
        raise ValueError("secret scalar must be nonzero")
    return SchnorrKeypair(sk, generator_mul(sk))


def _schnorr_challenge(rx: int, pk: Point, msg: bytes) -> int:
    return hash_to_scalar(
        "remotestake/schnorr/challenge",
        rx.to_bytes(32, "big"),
        encode_point(pk),
        msg,
    )


def schnorr_sign(keypair: SchnorrKeypair, msg: bytes) -> Signature:
    """Deterministic: the nonce is hashed from (sk, msg), fresh per message."""
    r = hash_to_scalar(
        "remotestake/schnorr/nonce", encode_scalar(keypair.sk), msg
    )
    r, R = _even_y_nonce(r)
    e = _schnorr_challenge(R[0], keypair.pk, msg)
    s = (r + e * keypair.sk) % N
    return Signature(R[0], s)


def schnorr_verify(pk: Point, msg: bytes, sig: Signature) -> bool:
    if pk is None:
        return False
    R = lift_x(sig.rx)
    if R is None or not 0 <= sig.s < N:
        return False
    e = _schnorr_challenge(sig.rx, pk, msg)
    lhs = generator_mul(sig.s)
    rhs = point_add(R, point_mul(pk, e))
    return lhs == rhs


def schnorr_verify_bytes(pk33: bytes, msg: bytes, sig64: bytes) -> bool:
    """Byte-level verifier used by the provider script checker."""
    try:
        pk = decode_point(pk33)
        sig = Signature.decode(sig64)
    except ValueError:
        return False
    return schnorr_verify(pk, msg, sig)
