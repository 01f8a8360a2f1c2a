import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from skelhmm.hmm import DiscreteHmm
from skelhmm.skeleton import ActionSequence, SkeletonTopology, default_topology


@pytest.fixture(scope="session")
def kinect():
    return default_topology()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def chain(n: int) -> SkeletonTopology:
    names = [f"j{i}" for i in range(n)]
    return SkeletonTopology(names, [(names[i], names[i + 1]) for i in range(n - 1)], root="j0", name=f"chain{n}")


def random_sequence(topology, frames, rng, **meta) -> ActionSequence:
    return ActionSequence(topology, rng.normal(size=(frames, topology.joint_count, 3)), **meta)


def separated_models(rng, n_models=3, n_states=2, n_symbols=9):
    """Models whose states emit from disjoint symbol blocks per model."""
    block = n_symbols // n_models
    models = []
    for k in range(n_models):
        emission = np.full((n_states, n_symbols), 0.02 / (n_symbols - block))
        emission[:, k * block:(k + 1) * block] = rng.dirichlet(np.ones(block), size=n_states) * 0.98
        models.append(DiscreteHmm(rng.dirichlet(np.ones(n_states)), rng.dirichlet(np.ones(n_states) * 2, size=n_states), emission, k))
    return models


@pytest.fixture(scope="session")
def harness():
    """Two synthetic actions, 20 sequences each, and a bundle fitted on them."""
    from skelhmm import synthetic
    from skelhmm.pipeline import PipelineConfig, fit

    data = synthetic.make_dataset(2, range(1, 11), 2, seed=3)
    cfg = PipelineConfig.from_dict({"seed": 7, "descriptor": "cartesian", "ap_max_rows": 800})
    bundle, log = fit(data, cfg)
    return data, cfg, bundle, log
