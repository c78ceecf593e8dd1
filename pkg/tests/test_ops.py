"""Operator library: shapes, identities, and exact count-measure agreement."""

from __future__ import annotations

import numpy as np
import pytest

from ftso import functional as F
from ftso.errors import ConfigError, ShapeError
from ftso.gradcheck import finite_diff_gradients, max_relative_error
from ftso.ops import (
    CANONICAL_OPERATORS,
    OperatorKind,
    make_operator,
    operator_flop_count,
    operator_param_count,
)
from ftso.tensor import FlopCounter, Tape, Tensor

ALL_NAMES = list(CANONICAL_OPERATORS) + ["conv_1x1", "conv_3x3", "conv_5x5"]


def test_exactly_eight_canonical_kinds():
    assert len(OperatorKind) == 8
    assert CANONICAL_OPERATORS == (
        "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5",
        "max_pool_3x3", "avg_pool_3x3", "skip_connect", "none",
    )


def test_skip_connect_stride1_is_identity():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 4, 6, 6)))
    op = make_operator("skip_connect", 4, 4, 1, rng)
    assert op(x) is x
    assert op.param_count() == 0


def test_zero_output_and_absorption():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((2, 4, 6, 6)))
    y = rng.standard_normal((2, 4, 6, 6))
    op = make_operator("none", 4, 4, 1, rng)
    out = op(x)
    assert not out.data.any()
    np.testing.assert_array_equal(out.data + y, y)  # absorbs exactly
    strided = make_operator("none", 4, 4, 2, rng)(x)
    assert strided.shape == (2, 4, 3, 3)


def test_max_pool_of_constant_is_constant():
    rng = np.random.default_rng(0)
    x = Tensor(np.full((1, 3, 6, 6), 2.5))
    op = make_operator("max_pool_3x3", 3, 3, 1, rng)
    np.testing.assert_array_equal(op(x).data, np.full((1, 3, 6, 6), 2.5))


@pytest.mark.parametrize("name", [n for n in ALL_NAMES if n != "none"])
@pytest.mark.parametrize("stride", [1, 2])
def test_output_shapes_follow_convolution_rule(name, stride):
    rng = np.random.default_rng(1)
    c = 4
    op = make_operator(name, c, c, stride, rng)
    x = Tensor(rng.standard_normal((2, c, 8, 8)))
    out = op(x)
    assert out.shape == (2, c, 8 // stride, 8 // stride)


@pytest.mark.parametrize("name", ALL_NAMES)
@pytest.mark.parametrize("stride,affine", [(1, False), (2, False), (1, True), (2, True)])
def test_param_count_matches_allocation(name, stride, affine):
    rng = np.random.default_rng(2)
    op = make_operator(name, 4, 4, stride, rng, affine=affine)
    assert op.param_count() == operator_param_count(name, 4, 4, stride, affine=affine)


@pytest.mark.parametrize("name", ALL_NAMES)
@pytest.mark.parametrize("stride", [1, 2])
def test_flop_count_matches_instrumented_forward(name, stride):
    rng = np.random.default_rng(3)
    c, h = 4, 8
    op = make_operator(name, c, c, stride, rng)
    x = Tensor(rng.standard_normal((1, c, h, h)))
    with FlopCounter() as fc:
        op(x)
    h_out = h // stride
    assert fc.total == operator_flop_count(name, c, c, h_out, h_out, stride)


def test_vanilla_conv_counts_match_worked_examples():
    assert operator_param_count("conv_5x5", 512, 512) == (25 * 512 + 1) * 512 == 6_554_112
    assert operator_flop_count("conv_3x3", 2, 2, 4, 4) == 9 * 2 * 16 * 2 == 576
    assert operator_param_count("skip_connect", 512, 512) == 0
    assert operator_param_count("max_pool_3x3", 512, 512) == 0
    assert operator_flop_count("skip_connect", 512, 512, 8, 8) == 0
    assert operator_flop_count("none", 512, 512, 8, 8) == 0


def test_factorized_reduce_halves_resolution_and_mixes_offsets():
    rng = np.random.default_rng(4)
    op = make_operator("skip_connect", 4, 4, 2, rng)
    x = Tensor(rng.standard_normal((2, 4, 8, 8)))
    out = op(x)
    assert out.shape == (2, 4, 4, 4)
    assert op.param_count() == 4 * 4  # two 4->2 pointwise projections
    with pytest.raises(ShapeError):
        op(Tensor(rng.standard_normal((2, 4, 7, 7))))
    with pytest.raises(ShapeError):
        make_operator("skip_connect", 4, 5, 2, rng)


@pytest.mark.parametrize("name", ["sep_conv_3x3", "dil_conv_3x3", "conv_3x3"])
def test_operator_gradients_match_finite_differences(name):
    rng = np.random.default_rng(5)
    op = make_operator(name, 2, 2, 1, rng)
    params = op.parameters()
    assert params
    xd = rng.uniform(0.2, 1.0, size=(2, 2, 5, 5))  # positive: away from relu kinks
    target = rng.standard_normal((2, 2, 5, 5))

    def forward() -> Tensor:
        return (op(Tensor(xd)) * Tensor(target)).sum()

    with Tape() as tape:
        loss = forward()
    analytic = tape.gradient(loss, params)

    arrays = [p.data.copy() for p in params]

    def scalar(values):
        for p, v in zip(params, values):
            p.data = np.asarray(v)
        try:
            return forward().item()
        finally:
            for p, a in zip(params, arrays):
                p.data = a.copy()

    numeric = finite_diff_gradients(scalar, arrays, eps=1e-5)
    for a, n in zip(analytic, numeric):
        assert max_relative_error(a, n) < 1e-4


def test_operator_construction_is_seed_deterministic():
    a = make_operator("sep_conv_3x3", 4, 4, 1, np.random.default_rng(42))
    b = make_operator("sep_conv_3x3", 4, 4, 1, np.random.default_rng(42))
    for pa, pb in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_search_mode_batch_norm_has_no_parameters_or_state():
    rng = np.random.default_rng(6)
    op = make_operator("sep_conv_3x3", 4, 4, 1, rng, affine=False)
    assert op.bn1.running is None and op.bn2.running is None
    affine = make_operator("sep_conv_3x3", 4, 4, 1, rng, affine=True)
    assert affine.param_count() - op.param_count() == 2 * 4 + 2 * 4


def test_eval_mode_uses_running_statistics():
    rng = np.random.default_rng(7)
    op = make_operator("dil_conv_3x3", 2, 2, 1, rng, affine=True)
    x = Tensor(rng.standard_normal((4, 2, 6, 6)) + 5.0)
    op(x, training=True)  # updates running stats
    assert op.bn.running["mean"].any()
    y1 = op(x, training=False)
    y2 = op(x, training=False)  # eval mode must not mutate state
    np.testing.assert_array_equal(y1.data, y2.data)


def test_rejections():
    rng = np.random.default_rng(8)
    with pytest.raises(ConfigError):
        make_operator("transformer", 4, 4, 1, rng)
    with pytest.raises(ConfigError):
        make_operator("conv_2x2", 4, 4, 1, rng)
    with pytest.raises(ShapeError):
        make_operator("max_pool_3x3", 4, 8, 1, rng)
    with pytest.raises(ConfigError):
        make_operator("skip_connect", 4, 4, 3, rng)
