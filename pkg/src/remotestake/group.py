"""secp256k1 group arithmetic.

Affine points are exposed as plain ``(x, y)`` int tuples with ``None`` for the
point at infinity, like the usual reference implementations. Internally the
hot paths run in Jacobian coordinates over gmpy2 mpz field elements when gmpy2
is importable (plain Python ints otherwise; same code, slower), plus a 4-bit
window table for generator multiples. Any prime-order group of size >= 2^250
would do for the protocol; this one is the standard pick and keeps signatures
interoperable with the provider-side script checker.
"""

from typing import Optional, Tuple

try:
    from gmpy2 import mpz
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    def mpz(x):
        return x

P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

_P = mpz(P)
_ZERO = mpz(0)
_ONE = mpz(1)

Point = Optional[Tuple[int, int]]

G: Point = (GX, GY)

# Jacobian triples (X, Y, Z); Z == 0 encodes infinity.
_INF_J = (_ZERO, _ONE, _ZERO)


def _jac_double(p):
    X, Y, Z = p
    if not Y or not Z:
        return _INF_J
    YY = Y * Y % _P
    S = 4 * X * YY % _P
    M = 3 * X * X % _P
    X2 = (M * M - 2 * S) % _P
    Y2 = (M * (S - X2) - 8 * YY * YY) % _P
    Z2 = 2 * Y * Z % _P
    return (X2, Y2, Z2)


def _jac_add_mixed(p, q):
    """p Jacobian + q affine (mpz pair)."""
    X1, Y1, Z1 = p
    x2, y2 = q
    if not Z1:
        return (x2, y2, _ONE)
    Z1Z1 = Z1 * Z1 % _P
    U2 = x2 * Z1Z1 % _P
    S2 = y2 * Z1 * Z1Z1 % _P
    H = (U2 - X1) % _P
    r = (S2 - Y1) % _P
    if not H:
        if not r:
            return _jac_double(p)
        return _INF_J
    HH = H * H % _P
    HHH = H * HH % _P
    V = X1 * HH % _P
    X3 = (r * r - HHH - 2 * V) % _P
    Y3 = (r * (V - X3) - Y1 * HHH) % _P
    Z3 = Z1 * H % _P
    return (X3, Y3, Z3)


def _jac_add(p, q):
    X1, Y1, Z1 = p
    X2, Y2, Z2 = q
    if not Z1:
        return q
    if not Z2:
        return p
    Z1Z1 = Z1 * Z1 % _P
    Z2Z2 = Z2 * Z2 % _P
    U1 = X1 * Z2Z2 % _P
    U2 = X2 * Z1Z1 % _P
    S1 = Y1 * Z2 * Z2Z2 % _P
    S2 = Y2 * Z1 * Z1Z1 % _P
    H = (U2 - U1) % _P
    r = (S2 - S1) % _P
    if not H:
        if not r:
            return _jac_double(p)
        return _INF_J
    HH = H * H % _P
    HHH = H * HH % _P
    V = U1 * HH % _P
    X3 = (r * r - HHH - 2 * V) % _P
    Y3 = (r * (V - X3) - S1 * HHH) % _P
    Z3 = Z1 * Z2 * H % _P
    return (X3, Y3, Z3)


def _to_jac(p: Point):
    if p is None:
        return _INF_J
    return (mpz(p[0]), mpz(p[1]), _ONE)


def _from_jac(p) -> Point:
    X, Y, Z = p
    if not Z:
        return None
    zi = pow(Z, _P - 2, _P)
    zi2 = zi * zi % _P
    return (int(X * zi2 % _P), int(Y * zi2 * zi % _P))


def point_add(p1: Point, p2: Point) -> Point:
    if p1 is None:
        return p2
    if p2 is None:
        return p1
    return _from_jac(_jac_add_mixed(_to_jac(p1), (mpz(p2[0]), mpz(p2[1]))))


def point_neg(p: Point) -> Point:
    if p is None:
        return None
    return (p[0], P - p[1])


def point_mul(p: Point, k: int) -> Point:
    """Variable-base scalar multiple k*p."""
    k %= N
    if p is None or k == 0:
        return None
    q = _INF_J
    base = (mpz(p[0]), mpz(p[1]))
    for bit in bin(k)[2:]:
        q = _jac_double(q)
        if bit == "1":
            q = _jac_add_mixed(q, base)
    return _from_jac(q)


def _build_gen_table():
    # table[w][d] = d * 16^w * G in affine mpz, d in 1..15, 64 windows
    table = []
    base = (mpz(GX), mpz(GY))
    for _ in range(64):
        row = [None]
        acc = _INF_J
        for _d in range(15):
            acc = _jac_add_mixed(acc, base)
            aff = _from_jac(acc)
            row.append((mpz(aff[0]), mpz(aff[1])))
        table.append(row)
        nxt = (base[0], base[1], _ONE)
        for _i in range(4):
            nxt = _jac_double(nxt)
        aff = _from_jac(nxt)
        base = (mpz(aff[0]), mpz(aff[1]))
    return table


_GEN_TABLE = _build_gen_table()


def generator_mul(k: int) -> Point:
    """k*G via the fixed window table; ~5x cheaper than point_mul(G, k)."""
    k %= N
    if k == 0:
        return None
    q = _INF_J
    w = 0
    while k:
        d = k & 15
        if d:
            q = _jac_add_mixed(q, _GEN_TABLE[w][d])
        k >>= 4
        w += 1
    return _from_jac(q)


def double_mul(k1: int, p: Point, k2: int) -> Point:
    """k1*G + k2*p, sharing the doubling ladder. Used by verification."""
    a = _to_jac(generator_mul(k1))
    if p is None or k2 % N == 0:
        return _from_jac(a)
    b = _to_jac(point_mul(p, k2))
    return _from_jac(_jac_add(a, b))


def is_on_curve(p: Point) -> bool:
    if p is None:
        return True
    x, y = p
    return 0 <= x < P and 0 < y < P and (y * y - (x * x * x + 7)) % P == 0


def has_even_y(p: Point) -> bool:
    if p is None:
        raise ValueError("infinity has no parity")
    return p[1] % 2 == 0


def lift_x(x: int) -> Point:
    """Even-y point with the given x coordinate, or None if x is not on the curve."""
    if not (0 <= x < P):
        return None
    c = (pow(x, 3, P) + 7) % P
    y = pow(c, (P + 1) // 4, P)
    if y * y % P != c:
        return None
    return (x, y if y % 2 == 0 else P - y)


def encode_point(p: Point) -> bytes:
    """33-byte compressed encoding; infinity is not encodable."""
    if p is None:
        raise ValueError("cannot encode the point at infinity")
    return bytes([2 + (p[1] & 1)]) + p[0].to_bytes(32, "big")


def decode_point(b: bytes) -> Point:
    if len(b) != 33 or b[0] not in (2, 3):
        raise ValueError("malformed point encoding")
    x = int.from_bytes(b[1:], "big")
    p = lift_x(x)
    if p is None:
        raise ValueError("x coordinate not on curve")
    if (b[0] & 1) != (p[1] & 1):
        p = (p[0], P - p[1])
    return p
