"""Regenerate the frozen vector files under tests/data (run once, by hand).

    python3 tests/oracles/make_vectors.py
"""

import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from oracles.reference import content_key_oracle, hmac_oracle, power_by_multiplication  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "data"

# RFC 2409 Oakley group 2, written out independently of the package constant
OAKLEY_P = int(
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE65381FFFFFFFFFFFFFFFF", 16)


def hmac_vectors(rng):
    cases = [(b"", b""), (b"key", b"The quick brown fox jumps over the lazy dog")]
    for klen, mlen in ((1, 0), (20, 8), (64, 9), (64, 137), (72, 50), (73, 1), (131, 300), (64, 129)):
        cases.append((rng.randbytes(klen), rng.randbytes(mlen)))
    return [f"{k.hex() or '-'} {m.hex() or '-'} {hmac_oracle(k, m).hex()}" for k, m in cases]


def content_key_vectors(rng):
    lines = []
    for _ in range(10):
        mk = rng.randbytes(64)
        while True:
            g = rng.randrange(2, OAKLEY_P - 1)
            if power_by_multiplication(g, 2, OAKLEY_P) != 1:
                break
        i, j, b = rng.randint(1, 500), rng.randint(1, 12), rng.randint(0, 33)
        lines.append(f"{mk.hex()} {g:x} {i} {j} {b} {content_key_oracle(mk, g, j, b, OAKLEY_P):x}")
    return lines


def pipeline_vector(rng):
    """Owner-side epoch-1 encryption of a two-block record, done by hand."""
    import json
    mk_x, mk_y = rng.randbytes(64), rng.randbytes(64)
    g = 0
    while power_by_multiplication(g, 2, OAKLEY_P) in (0, 1):
        g = rng.randrange(2, OAKLEY_P - 1)
    data = rng.randbytes(200)
    size = (OAKLEY_P.bit_length() - 8) // 8 - 1
    chunks = [data[k:k + size] for k in range(0, len(data), size)]
    blocks = []
    for b, chunk in enumerate(chunks):
        r = int((b"\x01" + chunk).hex(), 16)
        kx = content_key_oracle(mk_x, g, 1, b, OAKLEY_P)
        ky = content_key_oracle(mk_y, g, 1, b, OAKLEY_P)
        blocks.append(format(r * kx * ky % OAKLEY_P, "x"))
    return json.dumps({"mk_x": mk_x.hex(), "mk_y": mk_y.hex(), "g": format(g, "x"), "i": 9,
                       "data": data.hex(), "blocks": blocks}, indent=1) + "\n"


def main():
    rng = random.Random(20240611)
    DATA.mkdir(exist_ok=True)
    (DATA / "hmac_sha3_512.txt").write_text("\n".join(hmac_vectors(rng)) + "\n")
    (DATA / "content_keys_oakley1024.txt").write_text("\n".join(content_key_vectors(rng)) + "\n")
    (DATA / "pipeline_golden.json").write_text(pipeline_vector(rng))


if __name__ == "__main__":
    main()
