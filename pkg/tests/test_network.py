"""Evaluation networks: construction from genotypes, params, training."""

import numpy as np
import pytest

from ftso.errors import GenotypeError
from ftso.functional import cross_entropy
from ftso.genotype import Genotype
from ftso.network import Network, genotype_to_network, infer_nodes
from ftso.ops import operator_param_count
from ftso.optim import SGD, zero_grad
from ftso.supernet import SpaceConfig
from ftso.tensor import Tape, Tensor

TINY = Genotype(
    normal=((0, 2, "sep_conv_3x3"), (1, 2, "skip_connect")),
    reduce=((0, 2, "max_pool_3x3"), (1, 2, "avg_pool_3x3")),
)

MIXED = Genotype(
    normal=(
        (0, 2, "sep_conv_3x3"), (1, 2, "dil_conv_5x5"),
        (1, 3, "sep_conv_5x5"), (2, 3, "skip_connect"),
    ),
    reduce=(
        (0, 2, "max_pool_3x3"), (1, 2, "avg_pool_3x3"),
        (0, 3, "dil_conv_3x3"), (2, 3, "skip_connect"),
    ),
)


class TestConstruction:
    def test_infer_nodes(self):
        assert infer_nodes(TINY) == 4
        assert infer_nodes(MIXED) == 5

    def test_inferred_config_matches_explicit(self):
        net = genotype_to_network(TINY, seed=1)
        assert net.cfg.n == 4

    def test_out_of_range_nodes_rejected(self):
        cfg = SpaceConfig(n=4, cells=1, init_channels=8)
        with pytest.raises(GenotypeError, match="out of range|mismatch"):
            Network(MIXED, cfg, seed=0)

    def test_genotype_round_trip(self):
        net = genotype_to_network(MIXED, SpaceConfig(n=5, cells=1, init_channels=8),
                                  seed=2)
        assert net.genotype == MIXED

    def test_forward_shape(self):
        cfg = SpaceConfig(n=4, cells=2, init_channels=8, in_channels=3,
                          num_classes=6)
        net = Network(TINY, cfg, seed=3)
        x = np.random.default_rng(0).standard_normal((2, 3, 12, 12))
        assert net.forward(x).shape == (2, 6)

    def test_reduction_stack(self):
        cfg = SpaceConfig(n=5, cells=3, init_channels=8, num_classes=4)
        net = Network(MIXED, cfg, seed=4)
        x = np.random.default_rng(1).standard_normal((2, 3, 16, 16))
        assert net.forward(x).shape == (2, 4)
        assert net.out_channels == 2 * 32

    def test_every_parameter_is_trainable(self):
        net = genotype_to_network(MIXED, SpaceConfig(n=5, cells=1, init_channels=8),
                                  seed=5)
        params = net.parameters()
        assert params and all(p.requires_grad for p in params)

    def test_seeded_determinism(self):
        cfg = SpaceConfig(n=4, cells=1, init_channels=8)
        a = Network(TINY, cfg, seed=6)
        b = Network(TINY, cfg, seed=6)
        c = Network(TINY, cfg, seed=7)
        x = np.random.default_rng(2).standard_normal((2, 3, 8, 8))
        assert np.array_equal(a.forward(x).data, b.forward(x).data)
        assert not np.array_equal(a.forward(x).data, c.forward(x).data)


class TestParamAccounting:
    def test_param_count_is_sum_of_operator_counts_plus_backbone(self):
        c = 8
        cfg = SpaceConfig(n=4, cells=1, init_channels=c, in_channels=3,
                          num_classes=10)
        net = Network(TINY, cfg, seed=8)
        stem = 3 * c * 9 + 2 * c            # conv weights + affine batch norm
        ops = sum(operator_param_count(op, c, c, stride=1, affine=True)
                  for _, _, op in TINY.normal)
        classifier = net.out_channels * 10 + 10
        assert net.param_count() == stem + ops + classifier

    def test_reduction_cell_uses_strided_operator_counts(self):
        c = 8
        cfg = SpaceConfig(n=4, cells=2, init_channels=c, in_channels=3,
                          num_classes=5, reduction_positions=(1,))
        net = Network(TINY, cfg, seed=9)
        stem = 3 * c * 9 + 2 * c
        normal_ops = sum(operator_param_count(op, c, c, stride=1, affine=True)
                         for _, _, op in TINY.normal)
        c2 = 2 * c
        reduce_ops = sum(
            operator_param_count(op, c2, c2, stride=2 if src < 2 else 1, affine=True)
            for src, _, op in TINY.reduce)
        # reduction cell preprocesses both inputs down to c2 channels
        pre = 2 * (c * c2 + 2 * c2)
        classifier = net.out_channels * 5 + 5
        assert net.param_count() == stem + normal_ops + reduce_ops + pre + classifier


class TestTraining:
    def test_one_step_reduces_loss(self):
        cfg = SpaceConfig(n=4, cells=1, init_channels=8, in_channels=2,
                          num_classes=3)
        net = Network(TINY, cfg, seed=10)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((8, 2, 8, 8))
        y = rng.integers(0, 3, size=8)
        params = net.parameters()
        opt = SGD(params, lr=0.05)
        with Tape() as tape:
            loss0 = cross_entropy(net.forward(Tensor(x)), y)
        tape.backward(loss0, params)
        opt.step()
        zero_grad(params)
        loss1 = cross_entropy(net.forward(Tensor(x)), y)
        assert loss1.item() < loss0.item()

    def test_eval_mode_uses_running_statistics(self):
        cfg = SpaceConfig(n=4, cells=1, init_channels=8, in_channels=2,
                          num_classes=3)
        net = Network(TINY, cfg, seed=11)
        rng = np.random.default_rng(4)
        x = rng.standard_normal((8, 2, 8, 8))
        net.forward(x, training=True)  # populates running statistics
        e1 = net.forward(x, training=False)
        e2 = net.forward(x, training=False)
        t = net.forward(x, training=True)
        assert np.array_equal(e1.data, e2.data)
        assert not np.array_equal(e1.data, t.data)
