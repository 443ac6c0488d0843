"""Shared builders for the test suite."""

import numpy as np

from rmdp.core import RmdpInstance
from rmdp.gallery import with_uncertainty


def random_instance(rng, num_states=3, num_actions=2, uncertainty=None, sparse=False):
    kernel = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    if sparse:
        kernel[kernel < 0.15] = 0.0
        kernel /= kernel.sum(axis=2, keepdims=True)
    rewards = rng.uniform(-1, 1, size=(num_states, num_actions, num_states))
    p0 = rng.dirichlet(np.ones(num_states))
    inst = RmdpInstance(rewards, kernel, p0, name="random")
    if uncertainty is not None:
        inst = with_uncertainty(inst, uncertainty[0], uncertainty[1], exact_fallback=True)
    return inst
