"""Master keys and ephemeral content keys.

A content key for record ``i`` at epoch ``j`` is two HMAC-SHA3-512 digests,
keyed with one side's master key, over the generator powers ``g**(2j-1)`` and
``g**(2j)``, concatenated and reduced into F_p*.

HMAC message layout (fixed so both sides and the owner agree byte for byte)::

    minimal big-endian generator power || block index (8 bytes, big-endian) [|| retry byte]
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import secrets
from dataclasses import dataclass, field
from typing import Protocol

from .modmath import FieldParams, check_element, element_bytes, mod_exp

MASTER_KEY_BYTES = 64
DIGEST_BYTES = 64
MAX_ZERO_RETRIES = 255


class Side(str, enum.Enum):
    X = "X"
    Y = "Y"


@dataclass(frozen=True)
class MasterKey:
    key: bytes = field(repr=False)
    side: Side

    def __post_init__(self):
        if len(self.key) != MASTER_KEY_BYTES:
            raise ValueError(f"master key must be {MASTER_KEY_BYTES} bytes, got {len(self.key)}")
        object.__setattr__(self, "side", Side(self.side))

    def __repr__(self):
        return f"MasterKey(side={self.side.value}, key=<{len(self.key)} bytes>)"


@dataclass(frozen=True)
class PrngInputs:
    e1: int
    e2: int


@dataclass(frozen=True)
class ContentKey:
    residue: int
    record_id: int
    epoch: int
    side: Side
    block_index: int


def gen_master_key(side: Side | str, rng=None) -> MasterKey:
    """64 random bytes for one side. ``rng`` needs a ``randbytes(n)`` method."""
    if rng is None:
        key = secrets.token_bytes(MASTER_KEY_BYTES)
    else:
        key = rng.randbytes(MASTER_KEY_BYTES)
    return MasterKey(key, Side(side))


def prng_inputs(g: int, j: int, params: FieldParams) -> PrngInputs:
    if j < 1:
        raise ValueError("epochs start at 1")
    return PrngInputs(mod_exp(g, 2 * j - 1, params), mod_exp(g, 2 * j, params))


class GeneratorPowers:
    """Walks ``(g**(2j-1), g**(2j))`` forward one epoch at a time.

    Each step costs two modular multiplications instead of two exponentiations.
    """

    def __init__(self, g: int, params: FieldParams, epoch: int = 1):
        check_element(g, params)
        self.g = g
        self.params = params
        self.epoch = epoch
        self._current = prng_inputs(g, epoch, params)

    @property
    def current(self) -> PrngInputs:
        return self._current

    def peek(self) -> PrngInputs:
        """Inputs for the next epoch, without moving."""
        p = self.params.p
        e1 = self._current.e2 * self.g % p
        return PrngInputs(e1, e1 * self.g % p)

    def advance(self) -> PrngInputs:
        self._current = self.peek()
        self.epoch += 1
        return self._current


def hmac_sha3_512(key: bytes, message: bytes) -> bytes:
    return hmac.new(key, message, hashlib.sha3_512).digest()


def hmac_message(power: int, block_index: int, retry: int = 0) -> bytes:
    msg = element_bytes(power) + block_index.to_bytes(8, "big")
    if retry:
        msg += bytes([retry])
    return msg


def raw_content_key(mk: MasterKey, inputs: PrngInputs, block_index: int, retry: int = 0) -> bytes:
    """The 128-byte concatenation before reduction."""
    return (hmac_sha3_512(mk.key, hmac_message(inputs.e1, block_index, retry))
            + hmac_sha3_512(mk.key, hmac_message(inputs.e2, block_index, retry)))


def derive_content_key(
    mk: MasterKey,
    g: int,
    i: int,
    j: int,
    block_index: int,
    params: FieldParams,
    inputs: PrngInputs | None = None,
) -> ContentKey:
    if j < 1:
        raise ValueError("epochs start at 1")
    if inputs is None:
        inputs = prng_inputs(g, j, params)
    for retry in range(MAX_ZERO_RETRIES + 1):
        residue = int.from_bytes(raw_content_key(mk, inputs, block_index, retry), "big") % params.p
        if residue:
            return ContentKey(residue, i, j, mk.side, block_index)
    raise RuntimeError("content key reduced to zero on every retry")


class KeySource(Protocol):
    """Supplies one side's content-key residues for a record.

    ``inputs`` is an optional precomputed generator-power pair for epoch ``j``.
    """

    side: Side

    def content_key(self, g: int, i: int, j: int, block_index: int,
                    inputs: PrngInputs | None = None) -> int: ...


class HmacKeySource:
    def __init__(self, mk: MasterKey, params: FieldParams):
        self.mk = mk
        self.side = mk.side
        self.params = params

    def content_key(self, g, i, j, block_index, inputs=None):
        return derive_content_key(self.mk, g, i, j, block_index, self.params, inputs).residue


class TableKeySource:
    """Fixed residues keyed by ``(i, j, block_index)``; for small worked examples."""

    def __init__(self, table: dict[tuple[int, int, int], int], side: Side | str):
        self.table = dict(table)
        self.side = Side(side)

    def content_key(self, g, i, j, block_index, inputs=None):
        try:
            return self.table[(i, j, block_index)]
        except KeyError:
            raise KeyError(f"no injected {self.side.value}-key for record {i}, epoch {j}, block {block_index}") from None


def as_key_source(key, params: FieldParams) -> KeySource:
    if isinstance(key, MasterKey):
        return HmacKeySource(key, params)
    return key


def fold_content_keys(source: KeySource, g: int, i: int, upto: int, block_count: int,
                      params: FieldParams) -> list[int]:
    """Per-block product of freshly derived keys over epochs ``1..upto``."""
    acc = [1] * block_count
    for j in range(1, upto + 1):
        inputs = prng_inputs(g, j, params)
        for b in range(block_count):
            acc[b] = acc[b] * source.content_key(g, i, j, b, inputs) % params.p
    return acc
