"""Arithmetic in the multiplicative group of a safe-prime field.

Field elements are plain Python ints in ``[1, p-1]``. Records are carried as
vectors of such elements: the byte string is chunked into payload blocks and
every chunk gets a ``0x01`` marker byte on top, which keeps each block
nonzero and strictly below ``p``.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass
from typing import Iterable

from .errors import CorruptionError, NotInGroupError

MILLER_RABIN_ROUNDS = 64
BLOCK_PREFIX = 0x01

_SMALL_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149,
)


@dataclass(frozen=True)
class FieldParams:
    p: int
    q: int
    p_bits: int

    @classmethod
    def from_prime(cls, p: int, check: bool = True) -> "FieldParams":
        if check and not is_safe_prime(p):
            raise ValueError(f"{p:#x} is not a safe prime")
        return cls(p=p, q=(p - 1) // 2, p_bits=p.bit_length())

    def validate(self) -> None:
        if self.p != 2 * self.q + 1:
            raise ValueError("p != 2q + 1")
        if self.p_bits != self.p.bit_length():
            raise ValueError("p_bits does not match p")
        if not (is_probable_prime(self.p) and is_probable_prime(self.q)):
            raise ValueError("p or q failed the primality test")

    @property
    def block_size(self) -> int:
        """Payload bytes per block."""
        return (self.p_bits - 8) // 8 - 1

    @property
    def element_bytes(self) -> int:
        return (self.p_bits + 7) // 8

    def dumps(self) -> str:
        return f"p={self.p:x}\nq={self.q:x}\np_bits={self.p_bits}\n"

    @classmethod
    def loads(cls, text: str) -> "FieldParams":
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            params = cls(p=int(fields["p"], 16), q=int(fields["q"], 16), p_bits=int(fields["p_bits"]))
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r} in params document") from None
        params.validate()
        return params


# RFC 2409 (second Oakley group) 1024-bit MODP prime. It is a safe prime.
OAKLEY_1024_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1"
    "29024E088A67CC74020BBEA63B139B22514A08798E3404DD"
    "EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245"
    "E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381"
    "FFFFFFFFFFFFFFFF",
    16,
)

DEFAULT_PARAMS = FieldParams(p=OAKLEY_1024_P, q=(OAKLEY_1024_P - 1) // 2, p_bits=1024)

NAMED_PARAMS = {
    "oakley-1024": DEFAULT_PARAMS,
    "toy-23": FieldParams(p=23, q=11, p_bits=5),
    "toy-47": FieldParams(p=47, q=23, p_bits=6),
}


def check_element(a: int, params: FieldParams) -> int:
    if not isinstance(a, int) or isinstance(a, bool):
        raise NotInGroupError(f"field element must be an int, got {type(a).__name__}")
    if not 1 <= a <= params.p - 1:
        raise NotInGroupError(f"{a} is not in F_p*")
    return a


def mod_exp(base: int, exp: int, params: FieldParams) -> int:
    """``base**exp mod p`` via the interpreter's square-and-multiply ``pow``."""
    check_element(base, params)
    if exp < 0:
        raise ValueError("exponent must be non-negative")
    return pow(base, exp, params.p)


def mod_inv(a: int, params: FieldParams) -> int:
    if a % params.p == 0:
        raise NotInGroupError("0 has no inverse mod p")
    check_element(a, params)
    return pow(a, -1, params.p)


def is_probable_prime(n: int, rounds: int = MILLER_RABIN_ROUNDS, rng: random.Random | None = None) -> bool:
    """Miller-Rabin with ``rounds`` random bases; error at most ``4**-rounds``."""
    if n < 2:
        return False
    for sp in _SMALL_PRIMES:
        if n == sp:
            return True
        if n % sp == 0:
            return False
    rng = rng or secrets.SystemRandom()
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def is_safe_prime(p: int) -> bool:
    if p < 5 or p % 2 == 0:
        return False
    return is_probable_prime(p) and is_probable_prime((p - 1) // 2)


def generate_safe_prime(bits: int, rng: random.Random | None = None) -> FieldParams:
    """Search for a ``bits``-bit safe prime. Slow for large sizes; offline use only."""
    if bits < 3:
        raise ValueError("need at least 3 bits")
    rng = rng or secrets.SystemRandom()
    while True:
        q = rng.getrandbits(bits - 1) | (1 << (bits - 2)) | 1
        # p = 2q+1 must not be divisible by 3, so q must not be 1 mod 3
        if bits > 4 and q % 3 == 1:
            continue
        p = 2 * q + 1
        if p.bit_length() != bits:
            continue
        if is_probable_prime(q) and is_probable_prime(p):
            return FieldParams(p=p, q=q, p_bits=bits)


def fermat_generator_test(a: int, params: FieldParams) -> bool:
    """True iff ``a**q == -1 mod p``.

    This also accepts ``p-1``, whose order is 2, so it is not a generator test
    on its own; combine it with :func:`has_large_order`.
    """
    return mod_exp(a, params.q, params) == params.p - 1


def has_large_order(a: int, params: FieldParams) -> bool:
    """True iff ``a**2 != 1``; for a safe prime the order is then q or 2q."""
    check_element(a, params)
    return a * a % params.p != 1


def is_acceptable_generator(a: int, params: FieldParams, strict: bool = False) -> bool:
    if not has_large_order(a, params):
        return False
    return fermat_generator_test(a, params) if strict else True


def find_large_order_element(params: FieldParams, rng=None, strict: bool = False) -> int:
    """Draw candidates from ``rng.randrange(1, p)`` until one has large order."""
    rng = rng or secrets.SystemRandom()
    while True:
        a = rng.randrange(1, params.p)
        if is_acceptable_generator(a, params, strict=strict):
            return a


@dataclass(frozen=True)
class BlockVector:
    blocks: tuple[int, ...]
    original_length: int

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))


def _block_size(params: FieldParams, block_size: int | None) -> int:
    size = params.block_size if block_size is None else block_size
    if size < 1:
        raise ValueError(f"field of {params.p_bits} bits is too small to carry record bytes")
    if 1 << (8 * (size + 1)) > params.p:
        raise ValueError(f"block size {size} does not fit below p")
    return size


def encode_record(data: bytes, params: FieldParams, block_size: int | None = None) -> BlockVector:
    if not data:
        raise ValueError("cannot encode an empty record")
    size = _block_size(params, block_size)
    blocks = []
    for start in range(0, len(data), size):
        chunk = data[start:start + size]
        blocks.append(int.from_bytes(bytes([BLOCK_PREFIX]) + chunk, "big"))
    return BlockVector(tuple(blocks), len(data))


def decode_block(block: int, params: FieldParams) -> bytes:
    if not 1 <= block < params.p:
        raise CorruptionError(f"block value {block} outside F_p*")
    raw = block.to_bytes((block.bit_length() + 7) // 8, "big")
    if raw[0] != BLOCK_PREFIX:
        raise CorruptionError("block is missing its 0x01 prefix")
    return raw[1:]


def decode_record(bv: BlockVector, params: FieldParams, block_size: int | None = None) -> bytes:
    size = _block_size(params, block_size)
    expected_blocks = -(-bv.original_length // size)
    if bv.original_length < 1 or len(bv.blocks) != expected_blocks:
        raise CorruptionError(
            f"{len(bv.blocks)} blocks cannot carry {bv.original_length} bytes at {size} bytes/block"
        )
    out = bytearray()
    last = len(bv.blocks) - 1
    for idx, block in enumerate(bv.blocks):
        payload = decode_block(block, params)
        want = size if idx < last else bv.original_length - size * last
        if len(payload) != want:
            raise CorruptionError(f"block {idx} carries {len(payload)} bytes, expected {want}")
        out += payload
    return bytes(out)


def element_to_hex(a: int) -> str:
    """Lowercase big-endian hex without leading zero bytes."""
    if a < 0:
        raise ValueError("negative values have no element encoding")
    raw = a.to_bytes(max(1, (a.bit_length() + 7) // 8), "big")
    return raw.hex()


def element_from_hex(text: str) -> int:
    try:
        return int(text, 16)
    except ValueError:
        raise CorruptionError(f"not a hex field element: {text!r}") from None


def element_bytes(a: int) -> bytes:
    """Minimal big-endian byte encoding of a positive integer."""
    return a.to_bytes((a.bit_length() + 7) // 8, "big")


def product_mod(values: Iterable[int], params: FieldParams) -> int:
    acc = 1
    for v in values:
        acc = acc * v % params.p
    return acc
