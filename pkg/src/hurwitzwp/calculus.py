"""Nodal Wirtinger derivatives by local least-squares polynomial fits.

Every node is fitted in its owner chart from the nodes within a few edge
rings.  Neighbour coordinates and values are carried into that chart with
the static transition maps ``w' = 1/w`` and ``w = e_m + t^2``.  Only fields
that are geometric objects at a fixed parameter (scalars, vectors, metric
densities) may be fitted; the parameter-dependent chart flow is handled by
the callers in :mod:`hurwitzwp.family`.
"""
from __future__ import annotations

from math import factorial

import numpy as np
import scipy.sparse as sp

from .mesh import CHART_T, CHART_W, CHART_WP, CoveringMesh

KINDS = ("scalar", "vector", "log_density", "section")
_NAMES = {(0, 0): "f", (1, 0): "z", (0, 1): "zb", (2, 0): "zz", (1, 1): "zzb", (0, 2): "zbzb"}


class NodalCalculus:
    """Precomputed local fits on a mesh.

    ``fit(values, kind)`` returns a dict of derivatives at every node in its
    owner chart: keys ``"f"``, ``"z"``, ``"zb"``, ``"zz"``, ``"zzb"``,
    ``"zbzb"``.  ``kind`` controls how neighbour values are carried into the
    node's chart: ``"scalar"`` (unchanged), ``"vector"`` (a ``(1,0)``-vector,
    multiplied by ``dz_node / dz_nbr``) or ``"log_density"`` (``log`` of a
    metric density, shifted by ``2 log |dz_nbr / dz_node|``) or ``"section"``
    (a section of ``beta^* T`` stored in the node frame, converted between the
    ``w`` and ``w'`` frames).  Values at nodes whose chart differs from the
    fitted node's are converted with the static transition maps only.

    The defaults (degree 4 over three rings) average out the mesh-scale
    roughness of finite-element data better than a minimal stencil.
    """

    def __init__(self, mesh: CoveringMesh, degree: int = 4, rings: int = 3):
        self.mesh = mesh
        self.degree = degree
        e = mesh.edges
        n = mesh.n_nodes
        A = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)).tocsr()
        R = sp.identity(n, format="csr")
        P = sp.identity(n, format="csr")
        for _ in range(rings):
            P = P @ A
            R = R + P
        R = R.tocsr()
        R.data[:] = 1
        R.sort_indices()
        counts = np.diff(R.indptr)
        pos = np.arange(counts.max())[None, :] < counts[:, None]
        nbr = np.tile(np.arange(n)[:, None], (1, counts.max()))
        nbr[pos] = R.indices
        z, dwdz, usable = self._coords(nbr)
        pos &= usable
        counts = pos.sum(axis=1)
        self.nbr = nbr
        self.valid = pos
        d = np.where(pos, z - mesh.node_z[:, None], 0)
        scale = np.sqrt(np.sum(np.abs(d) ** 2, axis=1) / np.maximum(counts - 1, 1))
        self.scale = scale
        zeta = d / scale[:, None]
        self.monomials = [(a, tot - a) for tot in range(degree + 1) for a in range(tot, -1, -1)]
        X = np.stack([zeta**a * np.conj(zeta) ** b for a, b in self.monomials], axis=-1)
        X = np.where(pos[..., None], X, 0)
        s = np.linalg.svd(X, compute_uv=False)
        self.min_singular = s[:, -1] / s[:, 0]
        if np.any(self.min_singular < 1e-8):
            bad = int(np.argmin(self.min_singular))
            raise ValueError(f"node {bad}: neighbourhood too small for a degree-{degree} fit")
        self.pinv = np.linalg.pinv(X)
        # dz_nbr / dz_node = (dw/dz_node) / (dw/dz_nbr), both taken at the neighbour
        same = mesh.node_chart[nbr] == mesh.node_chart[:, None]
        jac = np.ones(nbr.shape, dtype=complex)
        cross = pos & ~same
        jac[cross] = dwdz[cross] / self._dwdz_own(nbr[cross])
        self._vec = np.where(pos, 1.0 / jac, 0)
        self._logd = np.where(pos, 2 * np.log(np.abs(jac)), 0)
        self._sec = np.where(pos, mesh.frame_factor(nbr, mesh.node_frame[:, None]), 0)

    def _dwdz_own(self, nodes: np.ndarray) -> np.ndarray:
        m = self.mesh
        ch = m.node_chart[nodes]
        out = np.ones(nodes.shape, dtype=complex)
        wp = ch == CHART_WP
        out[wp] = -1.0 / m.wp[nodes[wp]] ** 2
        tc = ch >= CHART_T
        out[tc] = 2 * m.t[nodes[tc]]
        return out

    def _coords(self, nbr: np.ndarray):
        """Coordinates of the neighbours in each node's chart and ``dw/dz`` there."""
        m = self.mesh
        chart = np.broadcast_to(m.node_chart[:, None], nbr.shape)
        z = np.empty(nbr.shape, dtype=complex)
        dwdz = np.ones(nbr.shape, dtype=complex)
        sel = chart == CHART_W
        z[sel] = m.w[nbr[sel]]
        sel = chart == CHART_WP
        z[sel] = m.wp[nbr[sel]]
        with np.errstate(divide="ignore", invalid="ignore"):
            dwdz[sel] = -1.0 / z[sel] ** 2
        sel = chart >= CHART_T
        rows = np.nonzero(sel)[0]
        disc = chart[sel] - CHART_T
        k = nbr[sel]
        same = m.disc[k] == disc
        t = np.where(same, m.t[k], 0)
        # base nodes join a disc stencil through w = e + t^2 (branch nearest the
        # centre node); nodes of other discs or of the w' chart are dropped
        other = ~same & (m.disc[k] < 0) & (m.node_chart[k] == CHART_W)
        root = np.sqrt(m.w[k[other]] - m.config.e[disc[other]])
        centre = m.t[rows[other]]
        t[other] = np.where(np.abs(root - centre) <= np.abs(root + centre), root, -root)
        z[sel] = t
        dwdz[sel] = 2 * t
        usable = np.ones(nbr.shape, bool)
        usable[sel] = same | other
        return z, dwdz, usable

    def gather(self, values: np.ndarray, kind: str = "scalar", disc_values=None) -> np.ndarray:
        if kind not in KINDS:
            raise ValueError(f"unknown kind {kind!r}")
        vals = np.asarray(values)[self.nbr]
        if disc_values is not None:
            rows = self.mesh.node_chart >= CHART_T
            vals = np.where(rows[:, None], np.asarray(disc_values)[self.nbr], vals)
        if kind == "vector":
            vals = vals * self._vec
        elif kind == "log_density":
            vals = vals + self._logd
        elif kind == "section":
            vals = vals * self._sec
        return np.where(self.valid, vals, 0)

    def fit(self, values: np.ndarray, kind: str = "scalar", disc_values=None) -> dict:
        """Fit ``values`` around every node.

        ``disc_values``, when given, replaces ``values`` for the stencils of
        nodes owned by a ramification chart.  This serves fields whose gauge
        differs between the ``w`` and ``t`` family charts: pass the ``w``-gauge
        field as ``values`` and the ``t``-gauge field as ``disc_values``, both
        defined on every node that can appear in the respective stencils.
        """
        vals = self.gather(values, kind, disc_values)
        coef = np.einsum("nkl,nl->nk", self.pinv, vals.astype(complex))
        out = {}
        for k, (a, b) in enumerate(self.monomials):
            if (a, b) in _NAMES:
                out[_NAMES[(a, b)]] = coef[:, k] * factorial(a) * factorial(b) / self.scale ** (a + b)
        return out

    def dz(self, values, kind="scalar"):
        return self.fit(values, kind)["z"]

    def dzbar(self, values, kind="scalar"):
        return self.fit(values, kind)["zb"]
