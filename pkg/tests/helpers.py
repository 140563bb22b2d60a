"""Shared test utilities."""
import numpy as np
from scipy.spatial import cKDTree

from hurwitzwp.mesh import w_to_sphere


def rotation_map(mesh, k: int = 1):
    """Node permutation induced by ``w -> exp(i pi k / 3) w`` on a sixth-roots mesh.

    Returns ``(distance, index)``: node ``n`` is sent to node ``index[n]``.
    ``y`` is unchanged since the rotation preserves ``w^6 - 1``, but the
    fiber coordinate ``y / w^3`` at infinity changes sign for odd ``k``.
    """
    z = np.exp(1j * np.pi * k / 3)

    def key(w, y, flip):
        with np.errstate(all="ignore"):
            yn = np.where(np.isinf(w), np.sign(y.real) * flip, y / (1 + np.abs(w) ** 2) ** 1.5)
        return np.c_[w_to_sphere(w), yn.real, yn.imag]

    return cKDTree(key(mesh.w, mesh.y, 1)).query(key(z * mesh.w, mesh.y, (-1) ** k))
