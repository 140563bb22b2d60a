"""Session fixtures shared by the mesh-based tests."""
import warnings

import numpy as np
import pytest

from hurwitzwp.covering import BranchConfiguration
from hurwitzwp.family import FamilyCalculus
from hurwitzwp.mesh import build_mesh
from hurwitzwp.operators import OperatorContext
from hurwitzwp.uniformization import metric_family, solve_liouville


def one_point(b: int, m: int) -> np.ndarray:
    v = np.zeros(b, dtype=complex)
    v[m] = 1
    return v


@pytest.fixture(scope="session")
def sixth():
    return BranchConfiguration.roots_of_unity(genus=2)


@pytest.fixture(scope="session")
def solved8(sixth):
    mesh = build_mesh(sixth, 8)
    return mesh, solve_liouville(mesh)


@pytest.fixture(scope="session")
def solved12(sixth):
    mesh = build_mesh(sixth, 12)
    return mesh, solve_liouville(mesh)


@pytest.fixture(scope="session")
def ctx12(solved12):
    return OperatorContext(solved12[1])


@pytest.fixture(scope="session")
def moves12(solved12):
    """Metric family of the one-point moves of e_0 and e_1 with all second derivatives."""
    mesh, metric = solved12
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fam = metric_family(mesh, [one_point(6, 0), one_point(6, 1)], second="full", metric=metric)
    return FamilyCalculus(fam)
