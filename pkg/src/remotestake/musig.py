"""Two-round aggregate signatures for bond committees.

Key aggregation weights each member key by a hash of the sorted key list and
the key itself, so the aggregate key commits to the exact committee. Signing
is two rounds: every member publishes a nonce pair, then every member
publishes a partial signature. Partials are individually checkable, which is
what lets the fallback path name a defecting member instead of just failing.

The finished aggregate is an ordinary Schnorr signature under the aggregate
key; the provider script checker needs no aggregate-specific logic.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .crypto import (
    Signature,
    _even_y_nonce,
    _schnorr_challenge,
    hash_to_scalar,
    encode_scalar,
)
from .group import (
    N,
    P,
    Point,
    encode_point,
    generator_mul,
    has_even_y,
    point_add,
    point_mul,
    point_neg,
)


class IncompleteSignature(ValueError):
    """Aggregation attempted with partials missing; names the defectors."""

    def __init__(self, missing: Sequence[int]):
        self.missing = tuple(sorted(missing))
        super().__init__(f"missing partial signatures from members {list(self.missing)}")


@dataclass(frozen=True)
class AggregateContext:
    pubkeys: Tuple[Point, ...]          # member keys, committee order
    coefficients: Tuple[int, ...]       # per-member weights
    agg_pk: Point


@dataclass(frozen=True)
class NoncePair:
    r1: Point
    r2: Point

    def encode(self) -> bytes:
        return encode_point(self.r1) + encode_point(self.r2)


@dataclass(frozen=True)
class SecretNonce:
    k1: int
    k2: int


def key_aggregate(pubkeys: Sequence[Point]) -> AggregateContext:
    if not pubkeys:
        raise ValueError("empty committee")
    sorted_enc = b"".join(sorted(encode_point(pk) for pk in pubkeys))
    coeffs = []
    agg: Point = None
    for pk in pubkeys:
        a = hash_to_scalar("remotestake/agg/coeff", sorted_enc, encode_point(pk))
        coeffs.append(a)
        agg = point_add(agg, point_mul(pk, a))
    if agg is None:  # pragma: no cover - requires engineered key cancellation
        raise ValueError("aggregate key is the point at infinity")
    return AggregateContext(tuple(pubkeys), tuple(coeffs), agg)


def nonce_gen(seed: bytes, member: int, msg_hint: bytes = b"") -> Tuple[SecretNonce, NoncePair]:
    k1 = hash_to_scalar("remotestake/agg/nonce1", seed, member.to_bytes(4, "big"), msg_hint)
    k2 = hash_to_scalar("remotestake/agg/nonce2", seed, member.to_bytes(4, "big"), msg_hint)
    return SecretNonce(k1, k2), NoncePair(generator_mul(k1), generator_mul(k2))


def _nonce_coefficient(ctx: AggregateContext, nonces: Sequence[NoncePair], msg: bytes) -> int:
    return hash_to_scalar(
        "remotestake/agg/noncecoeff",
        encode_point(ctx.agg_pk),
        b"".join(np.encode() for np in nonces),
        msg,
    )


def _effective_nonce(
    ctx: AggregateContext, nonces: Sequence[NoncePair], msg: bytes
) -> Tuple[Point, int, bool]:
    """Group nonce point R (even y), the nonce coefficient b, and whether the
    raw sum needed negating to reach even y."""
    b = _nonce_coefficient(ctx, nonces, msg)
    r_sum: Point = None
    for np_ in nonces:
        r_sum = point_add(r_sum, point_add(np_.r1, point_mul(np_.r2, b)))
    if r_sum is None:  # pragma: no cover - engineered nonce cancellation
        raise ValueError("aggregate nonce is the point at infinity")
    negated = not has_even_y(r_sum)
    if negated:
        r_sum = (r_sum[0], P - r_sum[1])
    return r_sum, b, negated


def partial_sign(
    secnonce: SecretNonce,
    sk: int,
    member: int,
    ctx: AggregateContext,
    nonces: Sequence[NoncePair],
    msg: bytes,
) -> int:
    if len(nonces) != len(ctx.pubkeys):
        raise ValueError("need one nonce pair per member")
    R, b, negated = _effective_nonce(ctx, nonces, msg)
    e = _schnorr_challenge(R[0], ctx.agg_pk, msg)
    k = (secnonce.k1 + b * secnonce.k2) % N
    if negated:
        k = N - k
    return (k + e * ctx.coefficients[member] * sk) % N


def partial_verify(
    partial: int,
    member: int,
    ctx: AggregateContext,
    nonces: Sequence[NoncePair],
    msg: bytes,
) -> bool:
    """Pinpoints a defective contribution before aggregation."""
    if not 0 <= partial < N:
        return False
    R, b, negated = _effective_nonce(ctx, nonces, msg)
    e = _schnorr_challenge(R[0], ctx.agg_pk, msg)
    eff = point_add(nonces[member].r1, point_mul(nonces[member].r2, b))
    if negated:
        eff = point_neg(eff)
    lhs = generator_mul(partial)
    rhs = point_add(eff, point_mul(ctx.pubkeys[member], e * ctx.coefficients[member] % N))
    return lhs == rhs


def aggregate(
    partials: Dict[int, int],
    ctx: AggregateContext,
    nonces: Sequence[NoncePair],
    msg: bytes,
) -> Signature:
    """Combine partials into a 64-byte signature under ctx.agg_pk.

    Raises IncompleteSignature listing every member whose partial is absent;
    the caller uses that list to identify defectors.
    """
    missing = [i for i in range(len(ctx.pubkeys)) if i not in partials]
    if missing:
        raise IncompleteSignature(missing)
    R, _b, _neg = _effective_nonce(ctx, nonces, msg)
    s = 0
    for i in range(len(ctx.pubkeys)):
        s = (s + partials[i]) % N
    return Signature(R[0], s)
