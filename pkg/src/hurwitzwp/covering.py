"""Branch configurations, the target sphere metric, and hyperelliptic coverings.

The covering surface is ``y^2 = prod_m (w - e_m)`` with covering map
``beta = w``.  Its mesh lives in :mod:`hurwitzwp.mesh`; this module holds the
configuration data, the target metric, and evaluation of pulled-back
sections.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .jets import Jet


class ConfigError(ValueError):
    """Invalid branch configuration or run configuration."""


def riemann_hurwitz(n: int, genus: int) -> int:
    """Number of simple branch points of a degree ``n`` cover of genus ``genus``."""
    if n < 1 or genus < 0:
        raise ConfigError(f"need n >= 1 and genus >= 0, got n={n}, genus={genus}")
    b = 2 * n + 2 * genus - 2
    if b < 0:
        raise ConfigError(f"no covering with n={n}, genus={genus} (b={b})")
    return b


@dataclass(frozen=True)
class BranchConfiguration:
    """Degree, genus and finite branch points of a simple covering of P^1."""

    n: int
    genus: int
    branch_points: tuple

    def __post_init__(self):
        pts = tuple(complex(p) for p in self.branch_points)
        object.__setattr__(self, "branch_points", pts)
        if self.n != 2:
            raise ConfigError(f"only hyperelliptic covers (n=2) are supported, got n={self.n}")
        b = riemann_hurwitz(self.n, self.genus)
        if len(pts) != b:
            raise ConfigError(
                f"branch_points: expected {b} points for n={self.n}, genus={self.genus}, got {len(pts)}"
            )
        if not all(np.isfinite(p) for p in pts):
            raise ConfigError("branch_points: all branch points must be finite")
        for i, j in combinations(range(len(pts)), 2):
            if abs(pts[i] - pts[j]) < 1e-9:
                raise ConfigError(f"branch_points: points {i} and {j} coincide")

    @property
    def b(self) -> int:
        return len(self.branch_points)

    @property
    def e(self) -> np.ndarray:
        return np.array(self.branch_points, dtype=complex)

    @property
    def min_separation(self) -> float:
        e = self.e
        d = np.abs(e[:, None] - e[None, :])
        d[np.diag_indices_from(d)] = np.inf
        return float(d.min())

    @property
    def closest_pair(self) -> tuple[int, int]:
        e = self.e
        d = np.abs(e[:, None] - e[None, :])
        d[np.diag_indices_from(d)] = np.inf
        i, j = np.unravel_index(np.argmin(d), d.shape)
        return int(min(i, j)), int(max(i, j))

    @property
    def r_ram(self) -> float:
        """Radius of the ramification discs."""
        return min(self.min_separation / 3.0, 0.5)

    @property
    def h0_dim(self) -> int:
        """``dim H^0(X, beta^* T_P1) = 2n - g + 1`` (valid for ``b > 4g - 4``)."""
        return 2 * self.n - self.genus + 1

    def moved(self, velocities, s: complex) -> "BranchConfiguration":
        """Configuration with ``e_m + s * velocities[m]``."""
        v = np.asarray(velocities, dtype=complex)
        return BranchConfiguration(self.n, self.genus, tuple(self.e + s * v))

    # -- I/O -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "genus": self.genus,
            "branch_points": [[p.real, p.imag] for p in self.branch_points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BranchConfiguration":
        for key in ("n", "genus", "branch_points"):
            if key not in d:
                raise ConfigError(f"{key}: missing field")
        try:
            n, genus = int(d["n"]), int(d["genus"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"n/genus: expected integers ({exc})") from None
        pts = []
        for k, p in enumerate(d["branch_points"]):
            if not (isinstance(p, (list, tuple)) and len(p) == 2):
                raise ConfigError(f"branch_points[{k}]: expected [re, im]")
            try:
                pts.append(complex(float(p[0]), float(p[1])))
            except (TypeError, ValueError):
                raise ConfigError(f"branch_points[{k}]: non-numeric entry") from None
        return cls(n, genus, tuple(pts))

    @classmethod
    def from_json(cls, path) -> "BranchConfiguration":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def roots_of_unity(cls, genus: int = 2, radius: float = 1.0) -> "BranchConfiguration":
        b = riemann_hurwitz(2, genus)
        pts = radius * np.exp(2j * np.pi * np.arange(b) / b)
        return cls(2, genus, tuple(pts))


class TargetMetric:
    """Constant curvature metric ``h = c / (1 + eps |w|^2)^2`` on the target.

    With ``c = 2`` for ``eps = +-1`` (and ``c = 1`` for ``eps = 0``) the metric
    satisfies ``-d_w d_wbar log h = eps * h``.  Every method accepts plain
    arrays or jets; for jets pass ``wb`` explicitly.
    """

    def __init__(self, epsilon: int = 1):
        if epsilon not in (-1, 0, 1):
            raise ConfigError(f"epsilon must be -1, 0 or 1, got {epsilon}")
        self.epsilon = epsilon
        self.c = 2.0 if epsilon != 0 else 1.0

    def h(self, w, wb=None):
        wb = np.conj(w) if wb is None else wb
        q = 1.0 + self.epsilon * w * wb
        return self.c / (q * q)

    def gamma(self, w, wb=None):
        """``Gamma_w = d_w log h``."""
        wb = np.conj(w) if wb is None else wb
        return -2.0 * self.epsilon * wb / (1.0 + self.epsilon * w * wb)

    def K(self, w, wb=None):
        """``K_{w wbar} = eps * h``."""
        return self.epsilon * self.h(w, wb)

    def h_inverted(self, wp, wpb=None):
        """Density of the same metric in the chart ``w' = 1/w``."""
        return self.h(wp, wpb)

    def curvature_residual(self, w) -> np.ndarray:
        """``|-d d_bar log h - eps h|`` evaluated exactly with jets."""
        jw, jwb = Jet.variables([w, np.conj(w)], order=2)
        lh = self.h(jw, jwb).log()
        return np.abs(-lh.partial((1, 1)) - self.epsilon * self.h(np.asarray(w)))


def fubini_study(w) -> tuple:
    """``(h, Gamma_w, K)`` of the curvature ``+1`` sphere metric at ``w``."""
    tm = TargetMetric(1)
    return tm.h(w), tm.gamma(w), tm.K(w)


@dataclass
class NormalField:
    """Section ``u = u^w d/dw`` of ``beta^* T_P1`` sampled at mesh nodes.

    ``values`` are stored in each node's frame (``w`` or ``w' = 1/w``).  When
    built from a deformation direction, ``xi`` (``d beta / ds``) and the
    horizontal lift ``a`` (vertical component in the node's chart) are kept.
    """

    mesh: object
    values: np.ndarray
    xi: np.ndarray | None = None
    a: np.ndarray | None = None
    label: str = ""

    def on_triangles(self) -> np.ndarray:
        """Corner values in each triangle's frame, ``(T, 3)``."""
        return self.mesh.section_to_tri(self.values)

    def __add__(self, other: "NormalField") -> "NormalField":
        return NormalField(self.mesh, self.values + other.values)

    def __sub__(self, other: "NormalField") -> "NormalField":
        return NormalField(self.mesh, self.values - other.values)

    def __mul__(self, c) -> "NormalField":
        return NormalField(self.mesh, self.values * c)

    __rmul__ = __mul__


def pullback_values(mesh, q) -> np.ndarray:
    """Node values (node frame) of the pullback of ``q(w) d/dw`` with ``deg q <= 2``."""
    q = np.asarray(q, dtype=complex)
    if q.shape != (3,):
        raise ConfigError("q must hold three coefficients (c0, c1, c2) of a polynomial of degree <= 2")
    c0, c1, c2 = q
    from .mesh import FRAME_WP

    out = np.empty(mesh.n_nodes, dtype=complex)
    wf = mesh.node_frame == FRAME_WP
    w = mesh.w[~wf]
    out[~wf] = c0 + c1 * w + c2 * w * w
    # in the frame w' = 1/w: q(w) d/dw = -(c0 w'^2 + c1 w' + c2) d/dw'
    wp = mesh.wp[wf]
    out[wf] = -(c0 * wp * wp + c1 * wp + c2)
    return out


def eval_pullback_section(mesh, q) -> NormalField:
    """Pullback section ``u^w = q(beta)`` of a quadratic vector field on the sphere."""
    vals = pullback_values(mesh, q)
    return NormalField(mesh, vals, xi=vals.copy(), a=np.zeros(mesh.n_nodes, dtype=complex), label=f"q={list(q)}")


def dbar_residual(field: NormalField, ghat: np.ndarray | None = None) -> float:
    """Relative discrete ``dbar``-norm ``|dbar u|_{L2} / |u|_{L2}`` of a section.

    The ``(0,1)``-norm needs only ``h``; the section norm uses the lumped
    background area ``ghat`` (any fixed metric gives an equivalent norm).
    """
    mesh = field.mesh
    tm = TargetMetric(1)
    ut = field.on_triangles()
    d = np.sum(ut * mesh.dzbar_phi, axis=1)
    wc = mesh.quad_w().mean(axis=1)
    from .mesh import FRAME_WP

    hc = tm.h(np.where(mesh.tri_frame == FRAME_WP, _safe_inv(wc), wc)).real
    num = np.sum(np.abs(d) ** 2 * hc * 2 * mesh.tri_area)
    hn = tm.h(mesh.node_frame_coord).real
    area = mesh.node_lumped_area() * 2 if ghat is None else ghat
    den = np.sum(np.abs(field.values) ** 2 * hn * area)
    return float(np.sqrt(num / den))


def _safe_inv(z):
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(np.isinf(z), 0, 1 / np.where(z == 0, 1, z))
