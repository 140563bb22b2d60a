"""Deformation fields of a family of covers with their hyperbolic metrics.

For a branch-move family the metric family is only known along moving mesh
nodes (see :class:`hurwitzwp.uniformization.MetricFamily`).  This module
turns those node-following derivatives into derivatives at fixed family
chart coordinates: ``w`` on the base region and ``t`` on the ramification
discs, where ``w = e_m(s) + t^2``.  With ``V`` the mesh velocity of a base
node and ``Gamma = d_z log g``,

    G_i           = G^f_i - V_i Gamma,
    G_{i jbar}    = G^f_{i jbar} + Vbar_j g a_i + V_i g abar_j - V_i Vbar_j g,

and disc nodes need no conversion because they keep their ``t``.  Fits
that straddle a ramification circle translate between the two gauges with
``G^(t)_i = G^(w)_i + edot_i Gamma^w`` and ``a^w = edot + 2 t a^t``.

Fields are stored per node in the node's owner chart (and, for sections,
the node frame), in the gauge of that chart.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .calculus import NodalCalculus
from .covering import ConfigError, NormalField, TargetMetric, pullback_values
from .mesh import CHART_T, CHART_W, FRAME_WP, CoveringMesh
from .uniformization import MetricFamily


# -- directions ---------------------------------------------------------------

@dataclass(frozen=True)
class DeformationDirection:
    """A tangent direction of the Hurwitz space.

    ``kind`` is ``"branch-move"`` (branch points move with ``velocities``)
    or ``"fixed-x"`` (the map is composed with the flow of ``q(w) d/dw``, a
    quadratic vector field, and the curve does not change).
    """

    kind: str
    velocities: tuple | None = None
    q: tuple | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind == "branch-move":
            if self.velocities is None or len(self.velocities) == 0:
                raise ConfigError("branch-move direction needs velocities")
        elif self.kind == "fixed-x":
            if self.q is None or len(self.q) != 3:
                raise ConfigError("fixed-x direction needs q = [c0, c1, c2]")
        else:
            raise ConfigError(f"direction kind must be 'branch-move' or 'mobius', got {self.kind!r}")

    @classmethod
    def branch_move(cls, b: int, m: int, velocity: complex = 1.0) -> "DeformationDirection":
        if not 0 <= m < b:
            raise ConfigError(f"branch point index m={m} out of range for b={b}")
        v = [0j] * b
        v[m] = complex(velocity)
        return cls("branch-move", tuple(v), label=f"move e_{m}")

    @classmethod
    def translation(cls, b: int, velocity: complex = 1.0) -> "DeformationDirection":
        """All branch points move together; a Moebius motion of the target."""
        return cls("branch-move", (complex(velocity),) * b, label="translate all")

    @classmethod
    def fixed_x(cls, q) -> "DeformationDirection":
        q = tuple(complex(c) for c in q)
        return cls("fixed-x", q=q, label=f"q={[str(c) for c in q]}")

    @classmethod
    def from_dict(cls, d: dict, b: int) -> "DeformationDirection":
        """Parse ``{"kind": "branch-move", "m": 0, "velocity": [1, 0]}`` or ``{"kind": "mobius", "q": [...]}``."""
        kind = d.get("kind")
        if kind == "branch-move":
            if "velocities" in d:
                vel = d["velocities"]
                if len(vel) != b:
                    raise ConfigError(f"directions: 'velocities' needs {b} entries")
                return cls("branch-move", tuple(_complex(v, "velocities") for v in vel))
            if "m" not in d:
                raise ConfigError("directions: branch-move needs 'm'")
            return cls.branch_move(b, int(d["m"]), _complex(d.get("velocity", [1, 0]), "velocity"))
        if kind in ("mobius", "fixed-x"):
            if "q" not in d or len(d["q"]) != 3:
                raise ConfigError("directions: mobius needs 'q' with three coefficients")
            return cls.fixed_x([_complex(c, "q") for c in d["q"]])
        raise ConfigError(f"directions: unknown kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "branch-move":
            return {"kind": "branch-move", "velocities": [[v.real, v.imag] for v in map(complex, self.velocities)]}
        return {"kind": "mobius", "q": [[c.real, c.imag] for c in map(complex, self.q)]}

    def xi(self, mesh: CoveringMesh) -> np.ndarray:
        """``xi^w = d beta / ds`` per node in the node frame at fixed family chart."""
        if self.kind == "branch-move":
            return mesh.branch_xi(np.asarray(self.velocities, dtype=complex))
        return pullback_values(mesh, np.asarray(self.q, dtype=complex))


def _complex(v, field: str) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(f"directions: '{field}' entries must be [re, im]")
        return complex(float(v[0]), float(v[1]))
    return complex(v)


# -- field containers -----------------------------------------------------------

@dataclass
class HorizontalLift:
    """Vertical part ``a^z`` of the horizontal lift, per node in its owner chart and gauge."""

    a: np.ndarray
    G: np.ndarray          # d_i log g at fixed family chart (owner gauge)
    dbar_G: np.ndarray     # d_zbar of G (owner gauge) = g_{i zbar}
    index: int


@dataclass
class BeltramiField:
    """``A = d_zbar a``, a Beltrami coefficient per node, and ``|A|^2``."""

    A: np.ndarray
    index: int

    @property
    def norm2(self) -> np.ndarray:
        return np.abs(self.A) ** 2


@dataclass
class PhiPotential:
    """``phi_{i jbar}`` from the definition and from the lift formula."""

    values: np.ndarray
    values_lemma: np.ndarray
    i: int
    j: int

    @property
    def formula_gap(self) -> float:
        return float(np.max(np.abs(self.values - self.values_lemma)))


# -- calculus on a branch-move family ------------------------------------------

class FamilyCalculus:
    """Horizontal lifts, Beltrami fields, harmonic representatives and ``phi``.

    Built from a :class:`MetricFamily`; the family directions are branch moves
    given by velocity vectors.  All nodal derivatives use one
    :class:`NodalCalculus` on the base mesh.
    """

    def __init__(self, family: MetricFamily, calc: NodalCalculus | None = None, target: TargetMetric | None = None):
        self.family = family
        self.mesh = family.mesh
        self.calc = calc if calc is not None else NodalCalculus(family.mesh)
        self.target = target if target is not None else TargetMetric(1)
        m = self.mesh
        self.disc = m.disc >= 0
        self.g = family.g
        self.r = family.r
        # the mesh moves only base nodes of the w chart; disc nodes keep t
        self.mover = (~self.disc) & (m.node_chart == CHART_W)
        self.V = np.where(self.mover[None, :], family.velocity, 0)
        self.dV = np.where(self.mover[None, :], family.dbar_velocity, 0)
        # the disc whose gauge a base node borrows when it enters a disc stencil
        w = np.where(np.isfinite(m.w), m.w, 1e300)
        nearest = np.argmin(np.abs(w[:, None] - m.config.e[None, :]), axis=1)
        nearest = np.where(self.disc, m.disc, nearest)
        self.edot = np.asarray(family.directions)[:, nearest]  # (r, N)
        self._t = np.where(self.disc, m.t, 1.0)

    # -- metric derivatives in space ---------------------------------------
    @cached_property
    def _log_g_fit(self) -> dict:
        return self.calc.fit(self.family.log_g, "log_density")

    @property
    def gamma(self) -> np.ndarray:
        """``Gamma = d_z log g`` in the owner chart."""
        return self._log_g_fit["z"]

    @cached_property
    def gamma_w(self) -> np.ndarray:
        """``d_w log g^w`` at every node; at disc nodes from the ``t``-chart fit."""
        t = self._t
        with np.errstate(divide="ignore", invalid="ignore"):
            gw = self.gamma / (2 * t) - 1 / (2 * t * t)
        return np.where(self.disc, gw, self.gamma)

    # -- gauge-aware fits ----------------------------------------------------
    def _fit_scalar_gauge(self, own: np.ndarray, i: int, shift: np.ndarray) -> dict:
        """Fit a scalar whose ``t`` gauge value is ``w`` gauge value plus ``shift``."""
        with np.errstate(invalid="ignore", over="ignore"):
            w_vals = np.where(self.disc, own - shift, own)
            t_vals = np.where(self.disc, own, own + shift)
        return self.calc.fit(w_vals, "scalar", disc_values=t_vals)

    def _fit_lift_gauge(self, own: np.ndarray, i: int) -> dict:
        """Fit a horizontal-lift-like vector obeying ``a^w = edot + 2 t a^t``."""
        ed = self.edot[i]
        with np.errstate(divide="ignore", invalid="ignore"):
            w_vals = np.where(self.disc, ed / (2 * self._t) + own, own)
        t_vals = np.where(self.disc, own, own - ed)
        return self.calc.fit(w_vals, "vector", disc_values=t_vals)

    # -- first order ---------------------------------------------------------
    def G(self, i: int) -> np.ndarray:
        """``d_i log g`` at fixed family chart, owner gauge."""
        return self.family.d1[i] - self.V[i] * self.gamma

    @cached_property
    def _G_fits(self) -> list:
        with np.errstate(invalid="ignore", over="ignore"):
            return [self._fit_scalar_gauge(self.G(i), i, self.edot[i] * self.gamma_w) for i in range(self.r)]

    def horizontal_lift(self, i: int) -> HorizontalLift:
        """``a = -g^{zbar z} g_{i zbar}`` per node."""
        dG = self._G_fits[i]["zb"]
        return HorizontalLift(a=-dG / self.g, G=self.G(i), dbar_G=dG, index=i)

    @cached_property
    def _lifts(self) -> list:
        return [self.horizontal_lift(i) for i in range(self.r)]

    def relative_lift(self, i: int) -> np.ndarray:
        """``a - V``: the lift relative to the mesh motion, a vector field on the fiber."""
        return self._lifts[i].a - self.V[i]

    def beltrami(self, i: int) -> BeltramiField:
        """``A = d_zbar a`` by a gauge-aware fit of the lift."""
        A = self._fit_lift_gauge(self._lifts[i].a, i)["zb"]
        return BeltramiField(A=A, index=i)

    @cached_property
    def _beltramis(self) -> list:
        return [self.beltrami(i) for i in range(self.r)]

    def xi(self, i: int) -> np.ndarray:
        return self.mesh.branch_xi(self.family.directions[i])

    def harmonic_rep(self, i: int) -> NormalField:
        """``u^w = xi^w + a zeta`` in the node frame."""
        a = self._lifts[i].a
        xi = self.xi(i)
        u = xi + a * self.mesh.zeta
        return NormalField(self.mesh, u, xi=xi, a=a, label=f"u_{i}")

    # -- second order ----------------------------------------------------------
    def G_mixed(self, i: int, j: int) -> np.ndarray:
        """``d_i d_jbar log g`` at fixed family chart (owner gauge)."""
        fam = self.family
        gf = fam.dmix[i, j]
        if not np.all(np.isfinite(gf)):
            raise ValueError(f"metric family lacks d_{i} d_{j}bar; build it with second='full'")
        ai, aj = self._lifts[i].a, self._lifts[j].a
        Vi, Vj = self.V[i], self.V[j]
        g = self.g
        return gf + np.conj(Vj) * g * ai + Vi * g * np.conj(aj) - Vi * np.conj(Vj) * g

    def phi(self, i: int, j: int) -> PhiPotential:
        """``phi_{i jbar}`` from ``g_{i jbar} - g_{i zbar} g_{z jbar} / g`` and from ``g_{i jbar} - g a_i abar_j``."""
        Gij = self.G_mixed(i, j)
        li, lj = self._lifts[i], self._lifts[j]
        definition = Gij - li.dbar_G * np.conj(lj.dbar_G) / self.g
        lemma = Gij - self.g * li.a * np.conj(lj.a)
        return PhiPotential(values=definition, values_lemma=lemma, i=i, j=j)

    def mu_dot(self, i: int, j: int) -> np.ndarray:
        """``A_i . A_jbar = A_i conj(A_j)`` per node."""
        return self._beltramis[i].A * np.conj(self._beltramis[j].A)

    def box(self, f: np.ndarray) -> np.ndarray:
        """``-g^{-1} d_z d_zbar f`` of a scalar by nodal fits."""
        return -self.calc.fit(f, "scalar")["zzb"] / self.g

    def check_elliptic_identity(self, i: int, j: int) -> dict:
        """Residual of ``(box + 1) phi = A_i . A_jbar`` node-wise and integrated.

        ``sup`` and ``l2`` are absolute; ``l2_rel`` divides by the ``L2`` norm
        of the right side.  ``integral_lhs``/``integral_rhs`` compare
        ``int phi dA_g`` with ``int A_i . A_jbar dA_g`` (the box term
        integrates to zero on a closed surface).
        """
        phi = self.phi(i, j).values
        lhs = self.box(phi) + phi
        rhs = self.mu_dot(i, j)
        res = lhs - rhs
        mass = self.family.metric.mass
        l2 = float(np.sqrt(np.sum(mass * np.abs(res) ** 2)))
        norm = float(np.sqrt(np.sum(mass * np.abs(rhs) ** 2)))
        return {
            "sup": float(np.max(np.abs(res))),
            "l2": l2,
            "l2_rel": l2 / norm if norm > 0 else np.inf,
            "integral_lhs": complex(np.sum(mass * phi)),
            "integral_rhs": complex(np.sum(mass * rhs)),
        }

    def mu_norm2(self, i: int, how: str = "phi") -> float:
        """``||mu_i||^2 = int |A_i|^2 dA_g``.

        ``how="phi"`` integrates ``phi_{i ibar}`` instead, which equals the same
        number on a closed surface and avoids the second spatial derivative.
        """
        mass = self.family.metric.mass
        if how == "phi":
            return float(np.sum(mass * self.phi(i, i).values.real))
        if how == "direct":
            return float(np.sum(mass * self._beltramis[i].norm2))
        raise ValueError(f"unknown method {how!r}")

    # -- Liu's identities --------------------------------------------------------
    def liu_residuals(self, i: int, l: int | None = None) -> dict:
        """Node-wise residuals of the first-order identities for the lift.

        * ``dz_a``: ``d_z a_i + Gamma a_i + d_i log g``;
        * ``dzbar_abar``: its conjugate counterpart;
        * ``dlbar_a`` (needs ``l`` and mixed derivatives): ``d_lbar a_i + A_i abar_l + g^{-1} d_zbar phi_{i lbar}``,
          where ``d_lbar a_i = -g^{-1} d_zbar g_{i lbar} - a_i conj(G_l)``.
        """
        a = self._lifts[i].a
        fa = self._fit_lift_gauge(a, i)
        out = {"dz_a": fa["z"] + self.gamma * a + self.G(i)}
        out["dzbar_abar"] = np.conj(out["dz_a"])
        if l is not None:
            d_lbar_a = self.dlbar_lift(i, l)
            phi = self.phi(i, l).values
            dphi = self.calc.fit(phi, "scalar")["zb"]
            out["dlbar_a"] = d_lbar_a + self._beltramis[i].A * np.conj(self._lifts[l].a) + dphi / self.g
        return out

    def dlbar_lift(self, i: int, l: int) -> np.ndarray:
        """``d_lbar a_i = -g^{-1} d_zbar g_{i lbar} - a_i conj(G_l)`` per node."""
        Gil = self.G_mixed(i, l)
        # g_{i lbar} changes gauge like G_i with the conjugate shift of direction l
        dGil = self._fit_scalar_gauge(Gil, i, self._mixed_shift(i, l))["zb"]
        return -dGil / self.g - self._lifts[i].a * np.conj(self.G(l))

    def _mixed_shift(self, i: int, j: int) -> np.ndarray:
        """``G^(t)_{i jbar} - G^(w)_{i jbar}`` at nodes near a disc."""
        ei, ej = self.edot[i], self.edot[j]
        g = self.g
        # w-gauge lifts at every node: base a, disc edot + 2 t a^t
        # the w gauge is singular at t = 0, which never enters a base stencil
        t = np.where(self._t == 0, 1, self._t)
        with np.errstate(invalid="ignore"):
            ai = np.where(self.disc, ei + 2 * t * self._lifts[i].a, self._lifts[i].a)
            aj = np.where(self.disc, ej + 2 * t * self._lifts[j].a, self._lifts[j].a)
            gw = np.where(self.disc, g / np.abs(2 * t) ** 2, g)
        # same algebra as the mesh-velocity conversion with V = edot
        return -(np.conj(ej) * gw * ai + ei * gw * np.conj(aj) - ei * np.conj(ej) * gw)

    # -- Lie-derivative identity ----------------------------------------------------
    def lie_density_residual(self, i: int) -> np.ndarray:
        """``L_{v_i}(g dz ^ dzbar)`` per node divided by ``g``.

        Equals ``G_i + a Gamma + d_z a`` and vanishes identically.
        """
        return self.liu_residuals(i)["dz_a"]


# -- fixed-X and tilde lift -----------------------------------------------------

def tilde_lift(direction: DeformationDirection, mesh: CoveringMesh) -> tuple[np.ndarray, np.ndarray]:
    """``b^z = -xi^w / zeta`` per node in its owner chart and a mask of pole nodes.

    Nodes where ``zeta = 0`` (ramification points) are flagged and set to 0.
    """
    xi = direction.xi(mesh)
    zeta = mesh.zeta
    pole = zeta == 0
    b = np.zeros(mesh.n_nodes, dtype=complex)
    ok = ~pole
    b[ok] = -xi[ok] / zeta[ok]
    return b, pole & (xi != 0)


def section_gamma(mesh: CoveringMesh, target: TargetMetric | None = None) -> np.ndarray:
    """Target Christoffel symbol ``Gamma_w`` at each node in the node frame."""
    target = target if target is not None else TargetMetric(1)
    return target.gamma(mesh.node_frame_coord)


def nabla_z(u: NormalField, calc: NodalCalculus, target: TargetMetric | None = None) -> np.ndarray:
    """``(u^w_{|z} + Gamma_w zeta u^w)`` per node (owner chart, node frame)."""
    du = calc.fit(u.values, "section")["z"]
    return du + section_gamma(u.mesh, target) * u.mesh.zeta * u.values


def covariant_D_fixed_x(
    u_i: NormalField,
    q_k,
    mesh: CoveringMesh,
    calc: NodalCalculus,
    q_i=None,
    target: TargetMetric | None = None,
) -> np.ndarray:
    """``D_k u_i`` for fixed-X flows, where ``a_k = 0`` and ``D_k = nabla_k``.

    ``u_i = q_i(beta)`` so ``d_k u_i = q_i'(beta) xi_k`` and
    ``nabla_k u_i = d_k u_i + Gamma_w xi_k u_i``.  Without ``q_i`` the
    derivative ``d_k u_i`` is recovered from the spatial fit as
    ``u_{i|z} xi_k / zeta`` (valid away from ramification points).
    """
    xi_k = pullback_values(mesh, q_k)
    gam = section_gamma(mesh, target)
    if q_i is not None:
        dq = _dq_section(mesh, q_i)
    else:
        du = calc.fit(u_i.values, "section")["z"]
        with np.errstate(divide="ignore", invalid="ignore"):
            dq = np.where(mesh.zeta != 0, du / mesh.zeta, np.nan)
    return dq * xi_k + gam * xi_k * u_i.values


def _dq_section(mesh: CoveringMesh, q) -> np.ndarray:
    """Frame derivative ``d q^frame / d w^frame`` of a pulled-back quadratic field."""
    c0, c1, c2 = np.asarray(q, dtype=complex)
    out = np.empty(mesh.n_nodes, dtype=complex)
    wf = mesh.node_frame == FRAME_WP
    w = mesh.w[~wf]
    out[~wf] = c1 + 2 * c2 * w
    wp = mesh.wp[wf]
    # q in the w' frame is -(c0 w'^2 + c1 w' + c2)
    out[wf] = -(2 * c0 * wp + c1)
    return out
