"""Record owner: offline setup, first encryption, and provisioning of X and Y."""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import AlreadyBootstrapped, BootstrapAborted, DuplicateRecord, NotBootstrapped, UnknownRecord
from .keyderive import KeySource, MasterKey, Side, as_key_source, gen_master_key, prng_inputs
from .messages import MsgType, ProtocolMessage
from .modmath import (BlockVector, FieldParams, decode_record, encode_record,
                      find_large_order_element, has_large_order, mod_inv)

OWNER = "owner"
STORAGE_X = "X"
STORAGE_Y = "Y"


@dataclass(frozen=True)
class RecordManifest:
    record_id: int
    g: int
    plaintext: bytes = field(repr=False)


@dataclass(frozen=True)
class EncryptedRecord:
    record_id: int
    epoch: int
    g: int
    blocks: tuple[int, ...]
    original_length: int


def encrypt_blocks(blocks: Sequence[int], g: int, i: int, key_x: KeySource, key_y: KeySource,
                   params: FieldParams) -> list[int]:
    """First-epoch encryption, block by block: ``ck_x * ck_y * R mod p``."""
    inputs = prng_inputs(g, 1, params)
    p = params.p
    return [
        key_x.content_key(g, i, 1, b, inputs) * key_y.content_key(g, i, 1, b, inputs) * block % p
        for b, block in enumerate(blocks)
    ]


def encrypt_record(manifest: RecordManifest, mk_x, mk_y, params: FieldParams) -> EncryptedRecord:
    """Encode and encrypt a record at ``j = 1``.

    ``mk_x``/``mk_y`` are master keys or any :class:`KeySource`.
    """
    if manifest.record_id < 1:
        raise ValueError("record ids are positive integers")
    if not has_large_order(manifest.g, params):
        raise ValueError("record generator must have large order")
    bv = encode_record(manifest.plaintext, params)
    blocks = encrypt_blocks(bv.blocks, manifest.g, manifest.record_id,
                            as_key_source(mk_x, params), as_key_source(mk_y, params), params)
    return EncryptedRecord(manifest.record_id, 1, manifest.g, tuple(blocks), bv.original_length)


def self_test(record: EncryptedRecord, mk_x, mk_y, params: FieldParams) -> bytes:
    """Invert the first encryption with both keys and decode."""
    kx, ky = as_key_source(mk_x, params), as_key_source(mk_y, params)
    inputs = prng_inputs(record.g, 1, params)
    plain_blocks = []
    for b, block in enumerate(record.blocks):
        key = kx.content_key(record.g, record.record_id, 1, b, inputs) * \
            ky.content_key(record.g, record.record_id, 1, b, inputs) % params.p
        plain_blocks.append(mod_inv(key, params) * block % params.p)
    return decode_record(BlockVector(tuple(plain_blocks), record.original_length), params)


class RecordOwner:
    party_id = OWNER

    def __init__(self, params: FieldParams, rng=None, strict_generators: bool = False):
        self.params = params
        self.rng = rng or secrets.SystemRandom()
        self.strict_generators = strict_generators
        self.mk_x: MasterKey | None = None
        self.mk_y: MasterKey | None = None
        self.records: dict[int, RecordManifest] = {}
        self._used_generators: set[int] = set()

    @property
    def bootstrapped(self) -> bool:
        return self.mk_x is not None

    def bootstrap(self, send: Callable[[list[ProtocolMessage]], None] | None = None) -> list[ProtocolMessage]:
        """Generate both master keys and build the two bootstrap messages.

        ``send`` delivers both messages; if it raises, the keys are discarded.
        """
        if self.bootstrapped:
            raise AlreadyBootstrapped("master keys are fixed for the lifetime of a deployment")
        mk_x = gen_master_key(Side.X, self.rng)
        mk_y = gen_master_key(Side.Y, self.rng)
        msgs = [
            ProtocolMessage(MsgType.BOOTSTRAP_X, OWNER, STORAGE_X, {"master_key": mk_x.key}),
            ProtocolMessage(MsgType.BOOTSTRAP_Y, OWNER, STORAGE_Y, {"master_key": mk_y.key}),
        ]
        if send is not None:
            try:
                send(msgs)
            except Exception as exc:
                raise BootstrapAborted(f"bootstrap aborted: {exc}") from exc
        self.mk_x, self.mk_y = mk_x, mk_y
        return msgs

    def restore_keys(self, mk_x: MasterKey, mk_y: MasterKey) -> None:
        self.mk_x, self.mk_y = mk_x, mk_y

    def add_record(self, i: int, data: bytes, g: int | None = None) -> RecordManifest:
        if i in self.records:
            raise DuplicateRecord(f"record {i} already exists")
        if g is None:
            g = find_large_order_element(self.params, self.rng, strict=self.strict_generators)
            # distinct generator per record when the field is big enough to allow it
            while g in self._used_generators and len(self._used_generators) < self.params.q:
                g = find_large_order_element(self.params, self.rng, strict=self.strict_generators)
        manifest = RecordManifest(i, g, bytes(data))
        self.records[i] = manifest
        self._used_generators.add(g)
        return manifest

    def encrypt(self, i: int) -> EncryptedRecord:
        if not self.bootstrapped:
            raise NotBootstrapped("owner has no master keys yet")
        try:
            manifest = self.records[i]
        except KeyError:
            raise UnknownRecord(f"record {i}") from None
        record = encrypt_record(manifest, self.mk_x, self.mk_y, self.params)
        if self_test(record, self.mk_x, self.mk_y, self.params) != manifest.plaintext:
            raise RuntimeError(f"self-test failed for record {i}")
        return record

    def provision_messages(self, i: int) -> list[ProtocolMessage]:
        record = self.encrypt(i)
        return provision_messages(record)


def provision_messages(record: EncryptedRecord) -> list[ProtocolMessage]:
    """ProvisionX carries the ciphertext; ProvisionY only public state."""
    return [
        ProtocolMessage(MsgType.PROVISION_X, OWNER, STORAGE_X, {
            "i": record.record_id, "j": record.epoch, "g": record.g,
            "blocks": list(record.blocks), "original_length": record.original_length,
        }),
        ProtocolMessage(MsgType.PROVISION_Y, OWNER, STORAGE_Y, {
            "i": record.record_id, "j": record.epoch, "g": record.g,
            "block_count": len(record.blocks),
        }),
    ]
