"""Triangulated two-sheeted mesh of a hyperelliptic covering surface.

Charts
------
Each triangle lives in exactly one chart:

* ``CHART_W`` (0): the target coordinate ``w`` itself (fiber coordinate
  ``z = w``), used where all vertices satisfy ``|w| <= r_split``;
* ``CHART_WP`` (1): ``w' = 1/w`` near infinity;
* ``CHART_T + m`` (2 + m): ramification chart around ``e_m`` with
  ``w = e_m + t^2``.

Every node has an owner chart used for nodal densities and nodal gradient
recovery, and a target frame (``FRAME_W`` or ``FRAME_WP``) in which
sections ``u = u^w d/dw`` are stored.  Ramification-chart nodes use the
``w`` frame.

Areas are Euclidean ``dx dy`` areas in the chart coordinate; the surface
measure used elsewhere is ``dA = i dz ^ dzbar = 2 dx dy``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull

from .covering import BranchConfiguration, ConfigError

CHART_W, CHART_WP, CHART_T = 0, 1, 2
FRAME_W, FRAME_WP = 0, 1

# Degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1).
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
QUAD_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
        [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
    ]
)
QUAD_W = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic, nearly uniform points on the unit sphere."""
    k = np.arange(n) + 0.5
    zc = 1 - 2 * k / n
    rad = np.sqrt(1 - zc**2)
    phi = np.pi * (1 + np.sqrt(5)) * k
    return np.column_stack([rad * np.cos(phi), rad * np.sin(phi), zc])


def sphere_to_w(p: np.ndarray) -> np.ndarray:
    return (p[:, 0] + 1j * p[:, 1]) / (1 - p[:, 2])


def w_to_sphere(w: np.ndarray) -> np.ndarray:
    """Inverse stereographic projection; ``w = inf`` maps to the north pole."""
    fin = np.isfinite(w)
    wf = np.where(fin, w, 0)
    q = 1 + np.abs(wf) ** 2
    out = np.column_stack([2 * wf.real / q, 2 * wf.imag / q, (np.abs(wf) ** 2 - 1) / q])
    out[~fin] = (0.0, 0.0, 1.0)
    return out


def rotation_order(e: np.ndarray, tol: float = 1e-9) -> int:
    """Largest ``k`` such that rotation by ``2 pi / k`` about 0 permutes ``e``."""
    for k in range(len(e), 1, -1):
        rot = e * np.exp(2j * np.pi / k)
        if np.all(np.min(np.abs(rot[:, None] - e[None, :]), axis=1) < tol):
            return k
    return 1


def base_points(n_sphere: int, order: int, h_s: float) -> np.ndarray:
    """Base vertices in ``w``; symmetric under rotation by ``2 pi / order``.

    For ``order > 1`` the points of one sector are replicated and both poles
    (``w = 0`` and ``w = inf``) are added so that the convex hull has no
    planar polygon around the rotation axis.
    """
    pts = fibonacci_sphere(n_sphere)
    if order == 1:
        return sphere_to_w(pts)
    far = np.abs(pts[:, 2]) < np.cos(0.75 * h_s)
    w = sphere_to_w(pts[far])
    sector = np.mod(np.angle(w), 2 * np.pi) < 2 * np.pi / order
    w = w[sector]
    rot = np.exp(2j * np.pi * np.arange(order) / order)
    return np.concatenate([(rot[:, None] * w[None, :]).ravel(), [0j, complex(np.inf, 0)]])


def branch_sqrt_factor(e: np.ndarray, m: int, w) -> np.ndarray:
    """Continuous ``F_m(w)`` with ``F_m^2 = prod_{n != m} (w - e_n)`` near ``e_m``."""
    others = np.delete(e, m)
    base = np.sqrt(np.prod(e[m] - others))
    w = np.asarray(w, dtype=complex)
    ratio = (w[..., None] - e[m]) / (e[m] - others)
    return base * np.exp(0.5 * np.sum(np.log1p(ratio), axis=-1))


@dataclass(frozen=True)
class MeshParams:
    resolution: int
    r_ram: float
    r_split: float
    K: int
    h_sphere: float


@dataclass
class CoveringMesh:
    """Immutable two-sheeted mesh; see the module docstring for conventions.

    Node arrays have length ``n_nodes``; triangle arrays ``n_tris``.
    """

    config: BranchConfiguration
    params: MeshParams
    w: np.ndarray            # beta value of each node
    t: np.ndarray            # ramification coordinate (nan outside discs)
    disc: np.ndarray         # disc index of the node's t-chart, -1 if none
    node_chart: np.ndarray   # owner chart code
    sheet: np.ndarray        # 0/1 for base lifts, -1 for disc interior nodes
    y: np.ndarray            # y coordinate on the curve
    tris: np.ndarray         # (T, 3) counter-clockwise in tri_chart
    tri_chart: np.ndarray    # chart code per triangle
    rho0: float = 0.0        # background smoothing scale (|t|^2 units)
    delta: float = 0.0       # background smoothing amplitude
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("w", "t", "disc", "node_chart", "sheet", "y", "tris", "tri_chart"):
            getattr(self, name).setflags(write=False)

    # -- sizes -----------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return len(self.w)

    @property
    def n_tris(self) -> int:
        return len(self.tris)

    @cached_property
    def edges(self) -> np.ndarray:
        e = np.sort(self.tris[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    @property
    def euler_characteristic(self) -> int:
        return self.n_nodes - len(self.edges) + self.n_tris

    # -- frames and charts ----------------------------------------------
    @cached_property
    def wp(self) -> np.ndarray:
        """``1 / w`` per node (0 at the node over infinity)."""
        with np.errstate(divide="ignore"):
            out = np.where(self.w == 0, np.inf, 1.0 / np.where(self.w == 0, 1, self.w))
        out.setflags(write=False)
        return out

    @cached_property
    def node_frame_coord(self) -> np.ndarray:
        """Target coordinate of each node in its frame (``w`` or ``w'``)."""
        out = np.where(self.node_frame == FRAME_WP, self.wp, self.w)
        out.setflags(write=False)
        return out

    @cached_property
    def node_frame(self) -> np.ndarray:
        f = np.where(self.node_chart == CHART_WP, FRAME_WP, FRAME_W)
        f.setflags(write=False)
        return f

    @cached_property
    def tri_frame(self) -> np.ndarray:
        f = np.where(self.tri_chart == CHART_WP, FRAME_WP, FRAME_W)
        f.setflags(write=False)
        return f

    def chart_coord(self, nodes: np.ndarray, chart: np.ndarray) -> np.ndarray:
        """Coordinates of ``nodes`` in the charts ``chart`` (broadcast)."""
        nodes, chart = np.broadcast_arrays(nodes, chart)
        out = np.empty(nodes.shape, dtype=complex)
        m = chart == CHART_W
        out[m] = self.w[nodes[m]]
        m = chart == CHART_WP
        out[m] = self.wp[nodes[m]]
        m = chart >= CHART_T
        if np.any(self.disc[nodes[m]] != chart[m] - CHART_T):
            raise ValueError("node used in a ramification chart it does not belong to")
        out[m] = self.t[nodes[m]]
        return out

    @cached_property
    def node_z(self) -> np.ndarray:
        """Coordinate of each node in its owner chart."""
        return self.chart_coord(np.arange(self.n_nodes), self.node_chart)

    @cached_property
    def zeta(self) -> np.ndarray:
        """``d beta / dz`` per node (owner chart, node frame)."""
        z = np.ones(self.n_nodes, dtype=complex)
        m = self.node_chart >= CHART_T
        z[m] = 2 * self.t[m]
        return z

    @cached_property
    def tri_z(self) -> np.ndarray:
        return self.chart_coord(self.tris, self.tri_chart[:, None])

    @cached_property
    def tri_area(self) -> np.ndarray:
        z = self.tri_z
        return 0.5 * np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))

    @cached_property
    def dzbar_phi(self) -> np.ndarray:
        """``d/dzbar`` of the three hat functions on each triangle, ``(T, 3)``."""
        z = self.tri_z
        e = np.stack([z[:, 2] - z[:, 1], z[:, 0] - z[:, 2], z[:, 1] - z[:, 0]], axis=1)
        return 1j * e / (4 * self.tri_area[:, None])

    @property
    def dz_phi(self) -> np.ndarray:
        return np.conj(self.dzbar_phi)

    def frame_factor(self, nodes: np.ndarray, target_frame: np.ndarray) -> np.ndarray:
        """Multiply a section component stored in the node frame to get it in ``target_frame``."""
        nodes, target_frame = np.broadcast_arrays(nodes, target_frame)
        src = self.node_frame[nodes]
        w = self.w[nodes]
        out = np.ones(nodes.shape, dtype=complex)
        m = (src == FRAME_W) & (target_frame == FRAME_WP)
        out[m] = -self.wp[nodes[m]] ** 2
        m = (src == FRAME_WP) & (target_frame == FRAME_W)
        out[m] = -w[m] ** 2
        return out

    @cached_property
    def tri_frame_factor(self) -> np.ndarray:
        return self.frame_factor(self.tris, self.tri_frame[:, None])

    def chart_jacobian(self, nodes: np.ndarray, chart_from: np.ndarray, chart_to: np.ndarray):
        """``d z_from / d z_to`` at ``nodes`` (for densities and vectors)."""
        nodes, chart_from, chart_to = np.broadcast_arrays(nodes, chart_from, chart_to)

        def dw_dz(ch, sel):
            out = np.ones(sel.sum(), dtype=complex)
            n, c = nodes[sel], ch[sel]
            m = c == CHART_WP
            out[m] = -self.w[n[m]] ** 2
            m = c >= CHART_T
            out[m] = 2 * self.t[n[m]]
            return out

        res = np.ones(nodes.shape, dtype=complex)
        diff = chart_from != chart_to
        res[diff] = dw_dz(chart_to, diff) / dw_dz(chart_from, diff)
        return res

    def zeta_in(self, nodes: np.ndarray, chart: np.ndarray) -> np.ndarray:
        """``d beta / dz`` at ``nodes`` in ``chart`` (frame ``w'`` for the ``w'`` chart, else ``w``)."""
        nodes, chart = np.broadcast_arrays(nodes, chart)
        out = np.ones(nodes.shape, dtype=complex)
        m = chart >= CHART_T
        out[m] = 2 * self.chart_coord(nodes[m], chart[m])
        return out

    @cached_property
    def tri_jacobian(self) -> np.ndarray:
        """``dz_owner / dz_tri`` for every triangle corner, ``(T, 3)``."""
        return self.chart_jacobian(self.tris, self.node_chart[self.tris], self.tri_chart[:, None])

    def density_to_tri(self, values: np.ndarray) -> np.ndarray:
        """Corner values in the triangle chart of a density ``g |dz|^2`` given per node."""
        return np.asarray(values)[self.tris] * np.abs(self.tri_jacobian) ** 2

    def section_to_tri(self, values: np.ndarray) -> np.ndarray:
        """Corner values in the triangle frame of a ``beta^* T`` section given per node."""
        return np.asarray(values)[self.tris] * self.tri_frame_factor

    def vector_to_tri(self, values: np.ndarray) -> np.ndarray:
        """Corner values in the triangle chart of a ``(1,0)`` vector given per node."""
        return np.asarray(values)[self.tris] / self.tri_jacobian

    # -- quadrature ------------------------------------------------------
    @cached_property
    def quad_points(self) -> np.ndarray:
        """Chart coordinates of the quadrature points, ``(T, 7)``."""
        return self.tri_z @ QUAD_BARY.T

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """``dx dy`` quadrature weights, ``(T, 7)``."""
        return self.tri_area[:, None] * QUAD_W[None, :]

    def quad_w(self) -> np.ndarray:
        """Target coordinate ``w`` at quadrature points (inf-safe in w' charts)."""
        zq = self.quad_points
        ch = self.tri_chart[:, None]
        w = np.array(zq, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(ch == CHART_WP, 1.0 / zq, w)
        e = self.current_e
        tchart = self.tri_chart >= CHART_T
        m = self.tri_chart[tchart] - CHART_T
        w[tchart] = e[m][:, None] + zq[tchart] ** 2
        return w

    @property
    def current_e(self) -> np.ndarray:
        return self.config.e

    # -- chart interfaces ------------------------------------------------
    @cached_property
    def interface_edges(self) -> np.ndarray:
        """Edges shared by triangles of different charts: rows ``(u, v, T_a, T_b)``, ``chart(T_b) < chart(T_a)``."""
        T = self.n_tris
        loc = np.array([[0, 1], [1, 2], [2, 0]])
        ends = np.sort(self.tris[:, loc].reshape(-1, 2), axis=1)
        owner = np.repeat(np.arange(T), 3)
        order = np.lexsort((ends[:, 1], ends[:, 0]))
        ends, owner = ends[order], owner[order]
        same = np.all(ends[1:] == ends[:-1], axis=1)
        i = np.nonzero(same)[0]
        ta, tb = owner[i], owner[i + 1]
        cross = self.tri_chart[ta] != self.tri_chart[tb]
        i, ta, tb = i[cross], ta[cross], tb[cross]
        # canonical order: T_b has the lower chart code
        swap = self.tri_chart[ta] < self.tri_chart[tb]
        ta, tb = np.where(swap, tb, ta), np.where(swap, ta, tb)
        return np.c_[ends[i], ta, tb]

    def map_points(self, z: np.ndarray, chart_from: np.ndarray, chart_to: np.ndarray, ref: np.ndarray) -> np.ndarray:
        """Chart change of arbitrary points; the ``t`` branch is the one closest to ``ref``."""
        z, chart_from, chart_to, ref = np.broadcast_arrays(z, chart_from, chart_to, ref)
        e = self.current_e
        w = np.array(z, dtype=complex)
        m = chart_from == CHART_WP
        w[m] = 1 / z[m]
        m = chart_from >= CHART_T
        w[m] = e[chart_from[m] - CHART_T] + z[m] ** 2
        out = np.array(w)
        m = chart_to == CHART_WP
        out[m] = 1 / w[m]
        m = chart_to >= CHART_T
        t = np.sqrt(w[m] - e[chart_to[m] - CHART_T])
        out[m] = np.where(np.abs(t - ref[m]) <= np.abs(t + ref[m]), t, -t)
        return out

    def interface_load(self, density, n_gauss: int = 5) -> np.ndarray:
        """Correction to ``int f phi_n dA`` for the slivers at chart interfaces.

        Triangles are straight in their own chart, so along an interface edge
        the two neighbours either overlap or leave a gap.  The sliver between
        the two chords is integrated in the chart of the second triangle by a
        Gauss rule along the edge times the signed normal offset; overlaps are
        subtracted and gaps added, with the hat functions of the two edge nodes.
        ``density(chart, z)`` returns ``f`` in the given charts.
        """
        out = np.zeros(self.n_nodes)
        E = self.interface_edges
        if len(E) == 0:
            return out
        u, v, ta, tb = E.T
        ca, cb = self.tri_chart[ta], self.tri_chart[tb]
        za0, za1 = self.chart_coord(u, ca), self.chart_coord(v, ca)
        zb0, zb1 = self.chart_coord(u, cb), self.chart_coord(v, cb)
        third = self.tris[tb][(self.tris[tb] != u[:, None]) & (self.tris[tb] != v[:, None])]
        z3 = self.chart_coord(third, cb)
        d = zb1 - zb0
        L = np.abs(d)
        side = np.sign(np.imag(np.conj(d) * (z3 - zb0)))
        x, wg = np.polynomial.legendre.leggauss(n_gauss)
        s = 0.5 * (x + 1)
        wg = 0.5 * wg
        da = za1 - za0
        for sk, wk in zip(s, wg):
            chord = (1 - sk) * zb0 + sk * zb1
            za = (1 - sk) * za0 + sk * za1
            curve = self.map_points(za, ca, cb, chord)
            # tangential speed of the curve, from the chart-change derivative
            step = 1e-6 * da
            dcurve = (self.map_points(za + step, ca, cb, curve) - self.map_points(za - step, ca, cb, curve)) / 2e-6
            speed = np.real(np.conj(d) * dcurve) / L
            offset = np.imag(np.conj(d) * (curve - chord)) / L
            mid = chord + 0.5j * offset * d / L
            f = density(cb, mid)
            # dA = 2 dx dy; positive overlap is counted twice by the mesh
            c = -2 * wk * speed * side * offset * f
            out += np.bincount(u, weights=(1 - sk) * c, minlength=self.n_nodes)
            out += np.bincount(v, weights=sk * c, minlength=self.n_nodes)
        return out

    def node_lumped_area(self) -> np.ndarray:
        """Lumped ``dx dy`` area per node in its owner chart."""
        ids = self.tris.ravel()
        jac = self.chart_jacobian(self.tris, self.tri_chart[:, None], self.node_chart[self.tris])
        a = (self.tri_area[:, None] / 3.0) * np.abs(jac) ** 2
        return np.bincount(ids, weights=a.ravel(), minlength=self.n_nodes)

    # -- moved meshes ----------------------------------------------------
    def branch_xi(self, velocities) -> np.ndarray:
        """``xi^w = d beta / ds`` per node for the branch move ``e + s * velocities``.

        Nodes of a ramification chart are fixed in ``t`` while ``w = e_m(s) + t^2``,
        so ``xi^w = edot_m`` there; base nodes are fixed in ``w`` and have ``xi = 0``.
        """
        v = np.asarray(velocities, dtype=complex)
        if v.shape != (self.config.b,):
            raise ValueError(f"expected {self.config.b} velocities, got shape {v.shape}")
        xi = np.zeros(self.n_nodes, dtype=complex)
        inside = self.disc >= 0
        xi[inside] = v[self.disc[inside]]
        return xi

    @property
    def flow_radius(self) -> float:
        """Outer radius in ``w`` of the mesh velocity around each branch point."""
        e, r = self.config.e, self.params.r_ram
        return float(min(self.config.min_separation - r, self.params.r_split - np.max(np.abs(e)) - r))

    def mesh_velocity(self, velocities) -> tuple[np.ndarray, np.ndarray]:
        """Node velocity ``V^w`` of a branch move and ``d V / d wbar``.

        Disc nodes keep their ``t`` and so move with their branch point.  A
        base node at distance ``rho`` from ``e_m`` moves by ``edot_m chi(rho)``
        where ``chi`` is 1 on the disc, falls to 0 at ``flow_radius`` and is
        C^3.  The supports never reach another disc or the ``w'`` chart.
        Because the motion is smooth, element shapes change at a rate of
        order one and finite differences in ``s`` stay smooth in space.
        """
        v = np.asarray(velocities, dtype=complex)
        if v.shape != (self.config.b,):
            raise ValueError(f"expected {self.config.b} velocities, got shape {v.shape}")
        V = np.zeros(self.n_nodes, dtype=complex)
        dV = np.zeros(self.n_nodes, dtype=complex)
        inside = self.disc >= 0
        V[inside] = v[self.disc[inside]]
        base = np.nonzero(~inside & (self.node_chart == CHART_W))[0]
        w = self.w[base]
        r, R = self.params.r_ram, self.flow_radius
        for m, e in enumerate(self.config.e):
            d = w - e
            rho = np.abs(d)
            x = np.clip((rho - r) / (R - r), 0, 1)
            chi = 1 - x**4 * (35 - 84 * x + 70 * x**2 - 20 * x**3)
            dchi = -140 * x**3 * (1 - x) ** 3 / (R - r)
            V[base] += v[m] * chi
            dV[base] += v[m] * dchi * d / (2 * np.maximum(rho, 1e-300))
        return V, dV

    def moved(self, velocities, s: complex) -> "CoveringMesh":
        """Same connectivity with branch points ``e + s * velocities``.

        Nodes follow :meth:`mesh_velocity`: disc nodes keep ``t``, base nodes
        move by ``s V``.  Raises ``ValueError`` if a triangle folds over.
        """
        v = np.asarray(velocities, dtype=complex)
        if s == 0 or not np.any(v):
            return self
        config = self.config.moved(v, s)
        V, _ = self.mesh_velocity(v)
        w = np.array(self.w)
        base = (self.disc < 0) & (self.node_chart == CHART_W)
        w[base] = w[base] + s * V[base]
        inside = self.disc >= 0
        w[inside] = config.e[self.disc[inside]] + self.t[inside] ** 2
        mesh = CoveringMesh(
            config=config, params=self.params, w=w, t=np.array(self.t),
            disc=np.array(self.disc), node_chart=np.array(self.node_chart),
            sheet=np.array(self.sheet), y=np.array(self.y), tris=np.array(self.tris),
            tri_chart=np.array(self.tri_chart), rho0=self.rho0, delta=self.delta,
            extra=dict(self.extra),
        )
        if np.any(mesh.tri_area <= 0):
            raise ValueError(f"moved mesh folds over at s={s}")
        return mesh

    # -- I/O -------------------------------------------------------------
    def to_json(self) -> str:
        nodes = [
            {
                "chart": int(c),
                "z": [float(z.real), float(z.imag)],
                "w": [float(w.real), float(w.imag)],
                "sheet": int(sh),
            }
            for c, z, w, sh in zip(self.node_chart, self.node_z, self.w, self.sheet)
        ]
        return json.dumps(
            {
                "config": self.config.to_dict(),
                "resolution": self.params.resolution,
                "r_ram": self.params.r_ram,
                "nodes": nodes,
                "cells": self.tris.tolist(),
                "cell_chart": self.tri_chart.tolist(),
                "weights": [float(a) for a in self.tri_area],
            }
        )


def _ring_strip(inner: np.ndarray, outer: np.ndarray):
    """Triangulate the annulus strip between two closed rings of uniformly spaced points.

    Both rings start at angle zero; positions are compared as exact
    fractions so that ties break identically in every sector.
    """
    tris = []
    ni, no = len(inner), len(outer)
    i = j = 0
    while i < ni or j < no:
        if j >= no or (i < ni and (i + 1) * no <= (j + 1) * ni):
            tris.append((inner[i % ni], inner[(i + 1) % ni], outer[j % no]))
            i += 1
        else:
            tris.append((inner[i % ni], outer[(j + 1) % no], outer[j % no]))
            j += 1
    return tris


def build_mesh(
    config: BranchConfiguration,
    resolution: int = 16,
    r_ram: float | None = None,
) -> CoveringMesh:
    """Mesh the covering surface ``y^2 = prod (w - e_m)``.

    ``resolution`` is the number of mesh edges per unit length on the unit
    sphere: doubling it roughly quadruples the node count.
    """
    if resolution < 4:
        raise ConfigError(f"resolution must be >= 4, got {resolution}")
    e = config.e
    b = len(e)
    r = config.r_ram if r_ram is None else float(r_ram)
    if r <= 0:
        raise ConfigError("r_ram must be positive")
    d = np.abs(e[:, None] - e[None, :]) + np.diag(np.full(b, np.inf))
    i, j = np.unravel_index(np.argmin(d), d.shape)
    if d[i, j] < 2.5 * r:
        raise ConfigError(
            f"branch points {min(i, j)} and {max(i, j)} are too close "
            f"(distance {d[i, j]:.3g}) for ramification radius {r:.3g}"
        )
    h_s = 1.0 / resolution
    r_split = max(2.0, 2.0 * float(np.max(np.abs(e) + r)))
    # one ring count for all discs, from the finest local scale needed
    h_w = h_s * (1 + np.abs(e) ** 2) / 2
    K = int(max(3, np.ceil(np.max(2 * np.pi * r / (3 * h_w)))))
    tau = np.sqrt(r)

    # base region vertices: sphere points outside the discs plus circle points
    n_sphere = int(np.ceil(8 * np.pi / (np.sqrt(3) * h_s**2)))
    order = rotation_order(e)
    wf = base_points(n_sphere, order, h_s)
    spacing = 2 * np.pi * r / (3 * K)
    with np.errstate(invalid="ignore"):
        keep = np.all(np.abs(wf[:, None] - e[None, :]) > r + 0.6 * spacing, axis=1)
    wf = wf[keep]
    # disc patterns are phased by arg(e_m) so that symmetric configurations
    # produce symmetric meshes
    phase = np.angle(e)
    ang = 2 * np.pi * np.arange(3 * K) / (3 * K)
    circ = (e[:, None] + r * np.exp(1j * (ang[None, :] + phase[:, None]))).ravel()
    circ_disc = np.repeat(np.arange(b), 3 * K)
    wb = np.concatenate([circ, wf])
    on_circle = np.concatenate([circ_disc, np.full(len(wf), -1)])
    hull = ConvexHull(w_to_sphere(wb))
    tri = hull.simplices
    dc = on_circle[tri]
    inside = (dc[:, 0] >= 0) & (dc[:, 0] == dc[:, 1]) & (dc[:, 1] == dc[:, 2])
    tri = tri[~inside]
    _check_circles(tri, on_circle, b, 3 * K)

    # lift: y reference values per base vertex, sheet matching per triangle
    nb = len(wb)
    fin = np.isfinite(wb)
    wfin = np.where(fin, wb, 0)
    yref = np.where(fin, np.exp(0.5 * np.sum(np.log(wfin[:, None] - e[None, :]), axis=1)), np.inf)
    # y' = y / w^(b/2) is the fiber coordinate near infinity; it tends to +-1
    regular = fin & (wb != 0)
    yprime = np.ones(nb, dtype=complex)
    yprime[regular] = yref[regular] / wb[regular] ** (b // 2)
    chart = np.where(np.all(np.abs(wb[tri]) <= r_split, axis=1), CHART_W, CHART_WP)
    cmp = np.where(chart[:, None] == CHART_WP, yprime[tri], yref[tri])
    sgn = np.sign(np.real(cmp * np.conj(cmp[:, :1])))
    if np.any(sgn == 0):
        raise ValueError("ambiguous sheet matching; increase resolution")
    flip = (sgn < 0).astype(int)  # sheet offset of each vertex relative to vertex 0
    lifted = []
    for sheet0 in (0, 1):
        s_idx = (sheet0 + flip) % 2
        lifted.append(tri + nb * s_idx)
    base_tris = np.vstack(lifted)
    base_chart = np.concatenate([chart, chart])
    # lifted node arrays: node id = v + nb * sheet
    node_w = np.concatenate([wb, wb])
    node_y = np.concatenate([yref, -yref])
    node_sheet = np.repeat([0, 1], nb)
    node_t = np.full(2 * nb, np.nan + 0j)
    node_disc = np.full(2 * nb, -1)
    node_chart = np.where(np.abs(node_w) > r_split, CHART_WP, CHART_W)

    # ramification discs
    t_w, t_t, t_disc, t_y = [], [], [], []
    disc_tris, disc_chart = [], []
    next_id = 2 * nb
    for m in range(b):
        rings = []
        center = next_id
        t_w.append(e[m]); t_t.append(0j); t_disc.append(m); t_y.append(0j)
        next_id += 1
        rings.append(np.array([center]))
        for k in range(1, K):
            th = 2 * np.pi * np.arange(6 * k) / (6 * k)
            tk = tau * k / K * np.exp(1j * (th + phase[m] / 2))
            wk = e[m] + tk**2
            ids = np.arange(next_id, next_id + 6 * k)
            next_id += 6 * k
            t_w.extend(wk); t_t.extend(tk); t_disc.extend([m] * (6 * k))
            t_y.extend(tk * branch_sqrt_factor(e, m, wk))
            rings.append(ids)
        # outer ring: lifted circle vertices
        th = 2 * np.pi * np.arange(6 * K) / (6 * K)
        tK = tau * np.exp(1j * (th + phase[m] / 2))
        yK = tK * branch_sqrt_factor(e, m, e[m] + tK**2)
        q = np.arange(6 * K) % (3 * K)
        v = m * 3 * K + q  # base vertex index of the circle point
        same = np.real(yK * np.conj(yref[v])) > 0
        outer = v + nb * np.where(same, 0, 1)
        if len(set(outer.tolist())) != 6 * K:
            raise ValueError(f"disc {m}: outer ring does not match the lifted circle")
        node_t[outer] = tK
        node_disc[outer] = m
        node_chart[outer] = CHART_T + m
        rings.append(outer)
        for k in range(1, K + 1):
            if k == 1:
                ring = rings[1]
                for p in range(len(ring)):
                    disc_tris.append((center, ring[p], ring[(p + 1) % len(ring)]))
            else:
                disc_tris.extend(_ring_strip(rings[k - 1], rings[k]))
        disc_chart.extend([CHART_T + m] * (len(disc_tris) - len(disc_chart)))

    w_all = np.concatenate([node_w, np.array(t_w)])
    t_all = np.concatenate([node_t, np.array(t_t)])
    disc_all = np.concatenate([node_disc, np.array(t_disc)])
    chart_all = np.concatenate([node_chart, CHART_T + np.array(t_disc)])
    y_all = np.concatenate([node_y, np.array(t_y)])
    sheet_all = np.concatenate([node_sheet, np.full(len(t_w), -1)])
    tris_all = np.vstack([base_tris, np.array(disc_tris)])
    tchart_all = np.concatenate([base_chart, np.array(disc_chart)])

    # drop base vertices that no triangle uses (none expected) and renumber
    order = _deterministic_order(chart_all, w_all, t_all, sheet_all)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    tris_all = inv[tris_all]

    rho0 = tau**2
    mesh = CoveringMesh(
        config=config,
        params=MeshParams(resolution, r, r_split, K, h_s),
        w=w_all[order], t=t_all[order], disc=disc_all[order], node_chart=chart_all[order],
        sheet=sheet_all[order], y=y_all[order], tris=tris_all, tri_chart=tchart_all,
        rho0=rho0, delta=rho0 / 8,
    )
    _orient(mesh)
    return mesh


def _deterministic_order(chart, w, t, sheet):
    with np.errstate(divide="ignore", invalid="ignore"):
        coord = np.where(chart >= CHART_T, t, np.where(chart == CHART_WP, 1 / w, w))
    return np.lexsort((sheet, np.round(coord.imag, 12), np.round(coord.real, 12), chart))


def _check_circles(tri: np.ndarray, on_circle: np.ndarray, b: int, nq: int):
    edges = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    dc = on_circle[edges]
    same = (dc[:, 0] >= 0) & (dc[:, 0] == dc[:, 1])
    gap = np.abs(edges[same, 0] - edges[same, 1])
    if np.any((gap != 1) & (gap != nq - 1)):
        raise ValueError("base triangulation cuts through a ramification disc")
    uniq = np.unique(edges[same], axis=0)
    if len(uniq) != b * nq:
        raise ValueError("ramification circles are not resolved by the base triangulation")


def _orient(mesh: CoveringMesh):
    """Make every triangle counter-clockwise in its own chart (in place)."""
    tris = np.array(mesh.tris)
    z = mesh.chart_coord(tris, mesh.tri_chart[:, None])
    area = 0.5 * np.imag(np.conj(z[:, 1] - z[:, 0]) * (z[:, 2] - z[:, 0]))
    neg = area < 0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    if np.any(np.abs(area) < 1e-14):
        raise ValueError("degenerate triangle in mesh")
    object.__setattr__(mesh, "tris", tris)
    tris.setflags(write=False)
