import numpy as np
import pytest

from fedteach import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run the test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_world():
    """A 4-class problem with a quickly trained teacher, shared across tests."""
    from fedteach.datagen import generate_synthetic
    from fedteach.teacher import train_teacher

    train = generate_synthetic(4, 6, 150, 6.0, seed=21, split="train")
    test = generate_synthetic(4, 6, 100, 6.0, seed=21, split="test")
    teacher = train_teacher(train, epochs=15, lr=0.05, seed=3, eval_data=test,
                            hidden=(24, 24), feature_dim=5, projector_dim=5, head_hidden=8,
                            batch_size=32)
    return train, test, teacher


TINY = {
    "data": {"num_classes": 4, "dim": 6, "n_per_class": 80, "test_per_class": 30,
             "class_separation": 4.0},
    "long_tail": {"imbalance_factor": 10, "max_per_class": 60},
    "partition": {"num_clients": 4},
    "teacher": {"hidden": [16], "feature_dim": 4, "projector_dim": 4, "head_hidden": 8,
                "epochs": 3, "lr": 0.02},
    "student": {"hidden": [8]},
    "pretrain": {"epochs": 2, "ramp_epochs": 1},
    "federated": {"rounds": 3, "fraction": 0.5},
    "alignment": {"epochs": 2, "per_class": 5},
}


@pytest.fixture
def tiny_config(tmp_path):
    """A config dict small enough for a whole pipeline run in well under a second."""
    import copy
    d = copy.deepcopy(TINY)
    d["output_dir"] = str(tmp_path / "run")
    return d
