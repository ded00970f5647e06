import hypothesis
import numpy as np
import pytest

import modn

hypothesis.settings.register_profile(
    "default", max_examples=25, deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def small_table():
    """Mixed-kind synthetic table with missingness, shared across tests."""
    spec = modn.SyntheticSpec(n_records=120, n_continuous=3, n_binary=2, n_categorical=1,
                              n_targets=2, missing_rate=0.2, seed=42)
    return modn.generate_synthetic(spec)


@pytest.fixture(scope="session")
def small_model(small_table):
    return modn.init_model(small_table.schema, small_table.targets, state_dim=6, seed=7)


@pytest.fixture(scope="session")
def trained_model(small_table):
    config = modn.TrainConfig(epochs=8, batch_size=16, state_dim=6,
                              optimizer=modn.OptimizerConfig(lr=5e-3))
    model = modn.init_model(small_table.schema, small_table.targets, 6, seed=3)
    train_tab = small_table.subset(small_table.records[:90])
    val_tab = small_table.subset(small_table.records[90:])
    model, _ = modn.train(model, train_tab, val_tab, config)
    return model


def finite_arrays(shape, lo=-3.0, hi=3.0):
    from hypothesis.extra import numpy as hnp
    from hypothesis import strategies as st

    return hnp.arrays(np.float64, shape,
                      elements=st.floats(lo, hi, allow_nan=False, allow_infinity=False))
