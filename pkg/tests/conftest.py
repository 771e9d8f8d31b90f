"""Shared helpers: seeded instance factories used across the suite."""

import numpy as np
import pytest

from sgsqp import (
    BlockPartition,
    BlockSymOperator,
    BlockVector,
    CompositeQP,
    conservative_shifts,
)
from sgsqp.instances import gen


def anchor_2x2():
    """The running 2x2 example: Q=[[2,1],[1,2]], b=[1,1], two 1-blocks."""
    part = BlockPartition((1, 1))
    Q = BlockSymOperator(part, {(0, 0): np.array([[2.0]]),
                                (0, 1): np.array([[1.0]]),
                                (1, 1): np.array([[2.0]])})
    return CompositeQP(Q, BlockVector(part, np.array([1.0, 1.0])))


def random_problem(seed, dims=(2, 3, 2), prox_kind="zero", kappa=10.0,
                   coupling=1.0, singular=False):
    inst = gen(dims, kappa=kappa, coupling=coupling, prox_kind=prox_kind,
               seed=seed, singular=singular)
    return inst.composite()


def shifted_problem(seed, dims=(2, 2, 3), prox_kind="nonneg", kappa=6.0):
    """Non-identity first block, made prox-ready by conservative shifts."""
    inst = gen(dims, kappa=kappa, coupling=1.0, prox_kind=prox_kind,
               seed=seed, identity_block1=False)
    Q = BlockSymOperator(inst.partition, dict(inst.Q))
    return CompositeQP(Q, BlockVector(inst.partition, inst.b), p=inst.prox,
                       shifts=conservative_shifts(Q))


def random_point(prob, seed):
    rng = np.random.default_rng(seed)
    return BlockVector(prob.partition, rng.standard_normal(prob.partition.total))


@pytest.fixture
def rng():
    return np.random.default_rng(0)
