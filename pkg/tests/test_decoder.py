from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcra.channel import ChannelParams, transmit
from qcra.decoder import BeliefPropagationDecoder, DecodeResult, check_node_update, decode
from qcra.encoder import encode, syndrome_weight
from oracles import check_node_log_domain


def test_check_node_erasure_absorbs():
    assert check_node_update([0.0, 1.3]) == [1.3, 0.0]


def test_check_node_two_edge_identity():
    assert check_node_update([2.0, 2.0]) == pytest.approx([2.0, 2.0], abs=1e-12)


def test_check_node_matches_log_domain():
    assert check_node_update([2.0, 3.0, -1.0]) == pytest.approx(check_node_log_domain([2.0, 3.0, -1.0]), abs=1e-9)


@settings(max_examples=200)
@given(st.lists(st.floats(-12, 12).filter(lambda x: abs(x) > 1e-3), min_size=2, max_size=20))
def test_property_check_node_log_domain(inbound):
    assert check_node_update(inbound) == pytest.approx(check_node_log_domain(inbound), abs=1e-7, rel=1e-7)


def test_check_node_needs_two_inputs():
    with pytest.raises(ValueError):
        check_node_update([1.0])


def test_noiseless_all_zero(r1_10):
    res = decode(r1_10, np.full(r1_10.n, 20.0))
    assert res.converged and res.iterations_used <= 1 and not res.bits.any()
    assert isinstance(res, DecodeResult) and not res.detected_failure


@pytest.mark.parametrize("variant", ["sum-product", "min-sum"])
def test_noiseless_round_trip(r1_10, variant):
    dec = BeliefPropagationDecoder(r1_10, variant)
    cw = encode(r1_10, np.random.default_rng(0).integers(0, 2, r1_10.k))
    res = dec.decode(25.0 * (1.0 - 2.0 * cw))
    assert res.converged and np.array_equal(res.bits, cw)


def test_tie_decides_zero(tiny_code):
    res = decode(tiny_code, np.zeros(tiny_code.n), max_iterations=3)
    assert not res.bits.any() and res.converged


def test_rejects_bad_input(tiny_code):
    with pytest.raises(ValueError, match="LLRs"):
        decode(tiny_code, np.zeros(tiny_code.n - 1))
    bad = np.zeros(tiny_code.n)
    bad[4] = np.inf
    with pytest.raises(ValueError, match="finite"):
        decode(tiny_code, bad)
    with pytest.raises(ValueError):
        decode(tiny_code, np.zeros(tiny_code.n), max_iterations=0)
    with pytest.raises(ValueError):
        BeliefPropagationDecoder(tiny_code, "bit-flip")


def _noisy(code, snr, seed):
    cw = encode(code, np.random.default_rng(seed).integers(0, 2, code.k))
    return cw, transmit(cw, ChannelParams(snr), seed)


@pytest.mark.parametrize("variant", ["sum-product", "min-sum"])
def test_converged_implies_valid_codeword(toy_code, variant):
    dec = BeliefPropagationDecoder(toy_code, variant)
    seen = set()
    for seed in range(30):
        _, llr = _noisy(toy_code, 10 ** (-1.2 / 10), seed)
        res = dec.decode(llr, 50)
        seen.add(res.converged)
        assert res.converged == (syndrome_weight(toy_code, res.bits) == 0)
    assert seen == {True, False}


def test_monotone_iteration_budget(toy_code):
    dec = BeliefPropagationDecoder(toy_code)
    for seed in range(10):
        _, llr = _noisy(toy_code, 10 ** (-1.5 / 10), seed)
        first = dec.decode(llr, 200)
        if not first.converged:
            continue
        t = first.iterations_used
        for budget in (t, t + 1, t + 50):
            again = dec.decode(llr, budget)
            assert again.converged and again.iterations_used == t
            assert np.array_equal(again.bits, first.bits)
        if t > 1:
            assert not dec.decode(llr, t - 1).converged


def test_decoder_reuse_is_deterministic(toy_code):
    dec = BeliefPropagationDecoder(toy_code)
    _, llr = _noisy(toy_code, 0.7, 1)
    a = dec.decode(llr, 30)
    dec.decode(-llr, 30)
    b = dec.decode(llr, 30)
    c = BeliefPropagationDecoder(toy_code).decode(llr, 30)
    for r in (b, c):
        assert np.array_equal(a.bits, r.bits) and a.iterations_used == r.iterations_used


def test_sign_symmetry_on_codewords(toy_code):
    """Decoding is equivariant under the sign flips induced by a codeword.

    For a codeword c, flipping the LLR signs on the support of c maps every
    message-passing trajectory onto its mirror, so the decoder must return
    the decision for the all-zero case XOR c.
    """
    dec = BeliefPropagationDecoder(toy_code)
    rng = np.random.default_rng(9)
    mags = np.abs(rng.normal(1.4, 1.2, toy_code.n))
    signs = np.where(rng.random(toy_code.n) < 0.08, -1.0, 1.0)
    base = dec.decode(mags * signs, 40)
    c = encode(toy_code, rng.integers(0, 2, toy_code.k))
    flipped = dec.decode(mags * signs * (1.0 - 2.0 * c), 40)
    assert flipped.iterations_used == base.iterations_used
    assert np.array_equal(flipped.bits, base.bits ^ c)


def test_far_below_threshold_fails(r1_10):
    dec = BeliefPropagationDecoder(r1_10)
    fails = 0
    for seed in range(5):
        _, llr = _noisy(r1_10, 0.05, seed)
        fails += dec.decode(llr, 20).detected_failure
    assert fails == 5


def test_min_sum_label():
    from qcra.decoder import variant_label

    assert variant_label("min-sum") == "min-sum(scale=0.8)"
    assert variant_label("sum-product") == "sum-product"
