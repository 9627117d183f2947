import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import P23, P24, P47, ScriptedRng
from oracles.reference import brute_force_order, power_by_multiplication
from twokey.errors import CorruptionError, NotInGroupError
from twokey.modmath import (DEFAULT_PARAMS, OAKLEY_1024_P, BlockVector, FieldParams, check_element,
                            decode_block, decode_record, element_from_hex, element_to_hex, encode_record,
                            fermat_generator_test, find_large_order_element, generate_safe_prime,
                            has_large_order, is_acceptable_generator, is_probable_prime, is_safe_prime,
                            mod_exp, mod_inv, product_mod)

P7 = FieldParams.from_prime(7)


def test_default_prime_is_safe_and_1024_bits():
    assert DEFAULT_PARAMS.p == OAKLEY_1024_P
    assert DEFAULT_PARAMS.p_bits == 1024 == OAKLEY_1024_P.bit_length()
    assert is_safe_prime(DEFAULT_PARAMS.p)
    assert DEFAULT_PARAMS.block_size == 126


def test_mod_exp_example():
    assert mod_exp(5, 11, P23) == 22


def test_mod_inv_example():
    assert mod_inv(3, P23) == 8


def test_mod_inv_of_zero_rejected():
    with pytest.raises(NotInGroupError):
        mod_inv(0, P23)
    with pytest.raises(NotInGroupError):
        mod_inv(23, P23)


@pytest.mark.parametrize("n,expected", [(23, True), (13, False), (47, True), (7, True), (5, True), (29, False)])
def test_is_safe_prime_examples(n, expected):
    assert is_safe_prime(n) is expected


def test_primality_small_and_composite():
    assert [n for n in range(60) if is_probable_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41,
                                                            43, 47, 53, 59]
    assert not is_probable_prime(561)  # Carmichael
    assert not is_probable_prime((1 << 61) - 1 + 2)
    assert is_probable_prime((1 << 127) - 1)


def test_generate_safe_prime_small():
    params = generate_safe_prime(32, random.Random(5))
    assert params.p_bits == 32 and is_safe_prime(params.p) and params.q == (params.p - 1) // 2


def test_params_roundtrip_and_validation():
    assert FieldParams.loads(DEFAULT_PARAMS.dumps()) == DEFAULT_PARAMS
    with pytest.raises(ValueError):
        FieldParams.from_prime(29)
    with pytest.raises(ValueError):
        FieldParams.loads("p=1d\nq=e\np_bits=5\n")
    with pytest.raises(ValueError):
        FieldParams.loads("p=17\n")


def test_fermat_examples():
    assert fermat_generator_test(5, P23)
    assert fermat_generator_test(22, P23)  # order 2, yet passes
    assert not fermat_generator_test(2, P23)


def test_large_order_examples():
    assert has_large_order(5, P23)
    assert not has_large_order(22, P23)
    assert not has_large_order(1, P23)


def test_strict_flag_excludes_p_minus_1_and_quadratic_residues():
    assert not is_acceptable_generator(22, P23, strict=True)
    assert is_acceptable_generator(5, P23, strict=True)
    assert is_acceptable_generator(2, P23) and not is_acceptable_generator(2, P23, strict=True)


@pytest.mark.parametrize("params,draws,expected", [
    (P23, [22, 5], 5),
    (P7, [6, 1, 3], 3),
    (P23, [2], 2),
])
def test_find_large_order_element_examples(params, draws, expected):
    rng = ScriptedRng(draws)
    assert find_large_order_element(params, rng) == expected
    assert rng.values == []
    assert all(call == (1, params.p) for call in rng.calls)


@pytest.mark.parametrize("params", [P23, P47])
def test_generator_tests_against_brute_force(params):
    p, q = params.p, params.q
    for a in range(1, p):
        order = brute_force_order(a, p)
        assert has_large_order(a, params) == (order in (q, 2 * q))
        assert fermat_generator_test(a, params) == (power_by_multiplication(a, q, p) == p - 1)
        if fermat_generator_test(a, params):
            assert q % order != 0 or a == p - 1
            assert order == 2 * q or (order == 2 and a == p - 1)


def test_encode_single_zero_byte_small_field():
    assert P24.block_size == 1
    bv = encode_record(b"\x00", P24)
    assert bv.blocks == (256,) and bv.original_length == 1
    assert decode_record(BlockVector((256,), 1), P24) == b"\x00"


def test_encode_300_bytes_three_blocks():
    data = bytes(range(256)) + bytes(44)
    bv = encode_record(data, DEFAULT_PARAMS)
    assert len(bv.blocks) == 3
    assert [len(decode_block(b, DEFAULT_PARAMS)) for b in bv.blocks] == [126, 126, 48]
    assert decode_record(bv, DEFAULT_PARAMS) == data


def test_encode_rejects_empty_and_tiny_fields():
    with pytest.raises(ValueError):
        encode_record(b"", DEFAULT_PARAMS)
    with pytest.raises(ValueError):
        encode_record(b"a", P23)


def test_decode_detects_corruption():
    bv = encode_record(b"hello", DEFAULT_PARAMS)
    with pytest.raises(CorruptionError):
        decode_record(BlockVector((bv.blocks[0] ^ (1 << 40),), 5), DEFAULT_PARAMS)  # prefix intact, length wrong
    with pytest.raises(CorruptionError):
        decode_record(BlockVector((12345,), 5), DEFAULT_PARAMS)  # no 0x01 prefix
    with pytest.raises(CorruptionError):
        decode_record(BlockVector((bv.blocks[0], bv.blocks[0]), 5), DEFAULT_PARAMS)
    with pytest.raises(CorruptionError):
        decode_block(DEFAULT_PARAMS.p, DEFAULT_PARAMS)


def test_check_element():
    assert check_element(1, P23) == 1
    for bad in (0, 23, -1, True, 2.0):
        with pytest.raises(NotInGroupError):
            check_element(bad, P23)


def test_hex_helpers():
    assert element_to_hex(255) == "ff"
    assert element_to_hex(256) == "0100"
    assert element_from_hex("0100") == 256
    assert product_mod([3, 5, 7], P23) == 105 % 23


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=1, max_size=2000))
def test_encode_decode_roundtrip(data):
    bv = encode_record(data, DEFAULT_PARAMS)
    assert all(1 <= b < DEFAULT_PARAMS.p for b in bv.blocks)
    assert decode_record(bv, DEFAULT_PARAMS) == data


@given(st.integers(min_value=1, max_value=DEFAULT_PARAMS.p - 1))
def test_mod_inv_property(a):
    assert a * mod_inv(a, DEFAULT_PARAMS) % DEFAULT_PARAMS.p == 1


@given(st.integers(min_value=1, max_value=46), st.integers(min_value=0, max_value=200))
def test_mod_exp_matches_repeated_multiplication(a, e):
    assert mod_exp(a, e, P47) == power_by_multiplication(a, e, 47)


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2**32))
def test_found_elements_have_large_order(seed):
    a = find_large_order_element(DEFAULT_PARAMS, random.Random(seed))
    assert pow(a, 2, DEFAULT_PARAMS.p) != 1
    assert pow(a, DEFAULT_PARAMS.q, DEFAULT_PARAMS.p) in (1, DEFAULT_PARAMS.p - 1)
