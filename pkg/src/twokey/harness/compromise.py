"""What a fully compromised storage X can do with what it holds.

X has its master key (so every X-key of every epoch), its accumulators, the
current ciphertext and every Y-key it was sent during rekeys. It never sees
Y's epoch-1 key, so each of its decryption attempts is still off by that
factor.
"""

from __future__ import annotations

from ..messages import MsgType
from ..modmath import BlockVector, FieldParams, decode_record, encode_record, mod_inv, product_mod
from ..storage_x import StorageX


def _known_keys(x: StorageX, i: int, y_keys: dict[int, list[int]], b: int) -> tuple[int, list[int]]:
    """(product of all key material X holds for block ``b``, every combination worth trying)."""
    params = x.params
    entry = x.entries[i]
    acc_x = x.accumulators[i].acc[b]
    received = [keys[b] for _, keys in sorted(y_keys.items())]
    prod_y = product_mod(received, params)
    own = [x.key_source.content_key(entry.g, i, j, b) for j in range(1, entry.epoch + 1)]
    everything = acc_x * prod_y % params.p
    combos = [1, acc_x, prod_y, everything] + own + received + [k * prod_y % params.p for k in own]
    return everything, list(dict.fromkeys(combos))


def x_compromise_attempts(x: StorageX, messages, plaintexts: dict[int, bytes]) -> dict[int, bool]:
    """Try every key combination X holds on every record; report which were recovered."""
    params: FieldParams = x.params
    y_keys: dict[int, dict[int, list[int]]] = {}
    for m in messages:
        if m.msg_type is MsgType.REKEY_INIT and m.receiver == "X" and not m.dropped:
            y_keys.setdefault(m.payload["i"], {})[m.payload["j"]] = m.payload["ck_y"]
    recovered = {}
    for i, entry in sorted(x.entries.items()):
        target = encode_record(plaintexts[i], params).blocks
        hit = False
        best_guess = []
        for b, s in enumerate(entry.blocks):
            everything, combos = _known_keys(x, i, y_keys.get(i, {}), b)
            if any(s * mod_inv(k, params) % params.p == target[b] for k in combos):
                hit = True
            best_guess.append(s * mod_inv(everything, params) % params.p)
        try:
            if decode_record(BlockVector(tuple(best_guess), entry.original_length), params) == plaintexts[i]:
                hit = True
        except ValueError:
            pass
        recovered[i] = hit
    return recovered
