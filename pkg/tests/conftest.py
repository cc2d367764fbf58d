import os

import numpy as np
import pytest
import torch

torch.set_num_threads(1)  # tiny models; avoids thread-count nondeterminism


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GLTREE_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="stretch test; set GLTREE_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def wdbc_csv(tmp_path_factory):
    """Breast-cancer CSV (569 rows, 30 features, label 1 = malignant)."""
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    names = [n.replace(" ", "_") for n in bunch.feature_names]
    path = tmp_path_factory.mktemp("data") / "wdbc.csv"
    # sklearn target: 0 = malignant, 1 = benign; flip so positive = malignant
    y = 1 - bunch.target
    with open(path, "w") as fh:
        fh.write(",".join(names) + ",label\n")
        for row, label in zip(bunch.data, y):
            fh.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")
    return path


@pytest.fixture(scope="session")
def iris_arrays():
    """Iris features + species names, in the original row order."""
    from sklearn.datasets import load_iris

    bunch = load_iris()
    names = [n.replace(" (cm)", "").replace(" ", "_") for n in bunch.feature_names]
    species = np.array([bunch.target_names[t] for t in bunch.target])
    return names, bunch.data.astype(np.float64), species
