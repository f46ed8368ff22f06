import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lstnet.autograd import ContractError, Tensor, check_gradients
from lstnet.fern import (
    ConfigurationError,
    FernBlock,
    FernEnsemble,
    SoftFern,
    TransformerNetwork,
    fern_coefficients,
    fern_enumerate,
    fern_leaves,
    fern_reparam,
    route_probabilities,
    soft_decision,
)


def test_soft_decision_values():
    assert soft_decision(0.3, 0.3) == 0.5
    assert abs(soft_decision(50.0, 0.0) - 1.0) < 1e-9
    assert abs(soft_decision(1.0, 0.0) - 0.7310586) < 1e-7
    xs = np.linspace(-5, 5, 21)
    assert np.all(np.diff(soft_decision(xs, 0.2)) > 0)


def test_fern_enumerate_hand_values():
    assert fern_enumerate([1, 2, 3, 4], 0.5, 0.5) == 2.5
    assert fern_enumerate([7, 7, 7, 7], 0.13, 0.91) == pytest.approx(7.0)
    assert fern_enumerate([1.5, 2, 3, 4], 1.0, 1.0) == 1.5


@pytest.mark.parametrize("p0,p1", [(-0.1, 0.5), (0.5, 1.2)])
def test_fern_enumerate_rejects_bad_probabilities(p0, p1):
    with pytest.raises(ContractError):
        fern_enumerate([1, 2, 3, 4], p0, p1)


def test_fern_reparam_trivial_cases():
    assert fern_reparam(2.0, 0.0, 0.0, 0.0, 0.3, -0.8) == 2.0
    b, x, y, z = fern_coefficients([1, 1, 1, 1])
    assert (b, x, y, z) == (1.0, 0.0, 0.0, 0.0)
    assert fern_reparam(b, x, y, z, 0.4, 0.2) == 1.0


def test_coefficient_pairing_follows_the_expansion():
    # d0 multiplies (q0 + q1 - q2 - q3) / 4, d1 multiplies (q0 - q1 + q2 - q3) / 4
    b, x, y, z = fern_coefficients([1.0, 2.0, 3.0, 4.0])
    assert (b, x, y, z) == (2.5, -1.0, -0.5, 0.0)
    np.testing.assert_allclose(fern_leaves([b, x, y, z]), [1, 2, 3, 4])


def test_reparam_equals_enumeration_on_1000_random_ferns():
    rng = np.random.default_rng(0)
    q = rng.uniform(-3, 3, (1000, 4))
    d = rng.uniform(-1, 1, (1000, 2))
    enum = fern_enumerate(q, (1 + d[:, 0]) / 2, (1 + d[:, 1]) / 2)
    b, x, y, z = fern_coefficients(q).T
    assert np.max(np.abs(fern_reparam(b, x, y, z, d[:, 0], d[:, 1]) - enum)) < 1e-6


@settings(max_examples=200, deadline=None)
@given(q=st.lists(st.floats(-100, 100), min_size=4, max_size=4),
       p0=st.floats(0, 1), p1=st.floats(0, 1))
def test_enumerated_fern_is_convex_and_routes_sum_to_one(q, p0, p1):
    out = fern_enumerate(q, p0, p1)
    assert min(q) - 1e-9 <= out <= max(q) + 1e-9
    assert abs(route_probabilities(p0, p1).sum() - 1.0) < 1e-6


def test_soft_fern_matches_sigmoid_routing():
    fern = SoftFern([1.0, -2.0, 0.5, 3.0], [0.1, -0.4])
    x0, x1 = 0.7, -1.1
    p0, p1 = 1 / (1 + math.exp(-(x0 - 0.1))), 1 / (1 + math.exp(-(x1 + 0.4)))
    expected = 1.0 * p0 * p1 - 2.0 * p0 * (1 - p1) + 0.5 * (1 - p0) * p1 + 3.0 * (1 - p0) * (1 - p1)
    assert fern(x0, x1) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ConfigurationError):
        SoftFern([1, 2, 3], [0, 0])


def test_ensemble_equals_per_fern_enumeration(rng):
    ens = FernEnsemble(6, 5, rng)
    ens.bias_map.data[...] = rng.standard_normal(5)
    first, second = rng.uniform(-1, 1, (10, 6)), rng.uniform(-1, 1, (10, 6))
    out = ens(Tensor(first, dtype=np.float64), Tensor(second, dtype=np.float64)).data
    np.testing.assert_allclose(out, ens.enumerate(first, second), atol=1e-5)


def test_fern_block_zero_interpretation_gives_zero(rng):
    block = FernBlock(6, 4, rng)
    block.ferns.zero_()
    out = block(Tensor(rng.standard_normal((5, 6)))).data
    assert np.all(out == 0)


def test_fern_block_saturated_decisions_are_hard_ferns(rng):
    block = FernBlock(4, 4, rng)
    block.pre.weight.data[...] = 0
    block.pre.bias.data[...] = 0
    block.norm.eval()
    block.norm.running_mean[...] = 0
    block.norm.running_var[...] = 1 - 1e-5
    block.norm.beta.data[...] = np.array([100, -100, -100, 100], np.float32)
    out = block(Tensor(np.zeros((2, 4)))).data
    # decisions split into first=[1, -1], second=[-1, 1]; their products are [-1, -1]
    pattern = np.array([[1, -1, -1, 1, -1, -1]], np.float32)
    w = np.concatenate([block.ferns.first_map.data, block.ferns.second_map.data, block.ferns.interaction_map.data])
    np.testing.assert_allclose(out, np.repeat(pattern @ w + block.ferns.bias_map.data, 2, axis=0), atol=1e-6)


def test_fern_block_decisions_in_open_interval(rng):
    block = FernBlock(8, 6, rng)
    d = block.decisions(Tensor(rng.standard_normal((16, 8)))).data
    assert np.all(np.abs(d) < 1)


def test_fern_block_configuration_errors(rng):
    with pytest.raises(ConfigurationError):
        FernBlock(8, 5, rng)
    with pytest.raises(ConfigurationError):
        FernBlock(8, 4, rng)(Tensor(np.zeros((2, 7))))


def test_fern_block_gradients(rng):
    block = FernBlock(5, 6, rng).astype(np.float64)
    x = Tensor(rng.uniform(-1, 1, (7, 5)), requires_grad=True, dtype=np.float64)
    proj = Tensor(rng.standard_normal((7, 5)))
    tensors = {"x": x, **dict(block.named_parameters())}
    for rep in check_gradients(lambda: (block(x) * proj).sum(), tensors, h=1e-3):
        assert rep.ok(1e-4), rep


def test_transformer_with_zero_blocks_is_affine(rng):
    tn = TransformerNetwork(5, 3, 8, 4, 2, rng)
    for block in tn.blocks:
        block.ferns.zero_()
    tn.output_map.weight.data[...] = rng.standard_normal((8, 3))
    x = Tensor(rng.standard_normal((4, 5)))
    np.testing.assert_array_equal(tn(x).data, tn.output_map(tn.input_map(x)).data)


def test_transformer_identity_maps_and_zero_block():
    rng = np.random.default_rng(3)
    tn = TransformerNetwork(4, 4, 4, 4, 1, rng)
    tn.blocks[0].ferns.zero_()
    for lin in (tn.input_map, tn.output_map):
        lin.weight.data[...] = np.eye(4)
        lin.bias.data[...] = 0
    x = Tensor(rng.standard_normal((3, 4)))
    np.testing.assert_array_equal(tn(x).data, x.data)


def test_transformer_zero_interpretation_output_is_zero(rng):
    tn = TransformerNetwork(5, 3, 8, 4, 2, rng)
    tn.zero_interpretation()
    assert np.all(tn(Tensor(rng.standard_normal((4, 5)))).data == 0)


def test_transformer_width_mismatch(rng):
    with pytest.raises(ConfigurationError):
        TransformerNetwork(5, 3, 8, 4, 1, rng)(Tensor(np.zeros((2, 6))))


def test_transformer_end_to_end_gradients(rng):
    tn = TransformerNetwork(4, 3, 6, 4, 2, rng).astype(np.float64)
    tn.output_map.weight.data[...] = rng.uniform(-0.5, 0.5, (6, 3))
    x = Tensor(rng.uniform(-1, 1, (6, 4)), requires_grad=True, dtype=np.float64)
    proj = Tensor(rng.standard_normal((6, 3)))
    tensors = {"x": x, **dict(tn.named_parameters())}
    for rep in check_gradients(lambda: (tn(x) * proj).sum(), tensors, h=1e-3):
        assert rep.ok(1e-3), rep
