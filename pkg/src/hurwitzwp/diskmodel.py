"""Closed-form disk families for checking the pointwise deformation identities.

Every family here has metrics of the form ``g = |F_z|^2 * 2 / (1 - |F|^2)^2``
with ``F(z, s, sbar)`` holomorphic in ``z``.  Such a ``g`` solves the
Liouville equation ``d_z d_zbar log g = g`` exactly for every parameter
value, so all the identities that rest only on that equation can be checked
pointwise to round-off with jets, with no PDE solve involved.

The map ``beta(z, s)`` is a polynomial in ``z`` whose coefficients depend
holomorphically on two complex parameters ``s1, s2``.

Jet variable slots are ``(z, zb, s1, s1b, s2, s2b)``.  Conjugate quantities
are built by evaluating the same closed form with conjugated coefficients and
with holomorphic and antiholomorphic slots swapped.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .covering import TargetMetric
from .jets import Jet, log

Z, ZB = 0, 1
S = (2, 4)
SB = (3, 5)
NPARAM = 2


@dataclass(frozen=True)
class DiskModelFamily:
    """Explicit family of Liouville metrics and maps over a two-parameter base.

    ``metric_terms`` are ``(c, p, (e_s1, e_t1, e_s2, e_t2))`` and add
    ``c * z**p * s1**e_s1 * t1**e_t1 * s2**e_s2 * t2**e_t2`` to ``F``, where
    ``t = conj(s)``.  When ``mobius`` is set, ``F`` also contains the disk
    automorphism ``(z + s1) / (1 + t1 z)``.  ``beta_terms`` are
    ``(c, p, (e_s1, e_s2))`` for the holomorphic map.
    """

    name: str
    metric_terms: tuple = ()
    mobius: bool = True
    beta_terms: tuple = ((1.0, 2, (0, 0)),)
    epsilon: int = 1
    sample_radius: float = 0.6
    param_radius: float = 0.15

    # -- metric ----------------------------------------------------------
    def _F(self, z, s, t, conj: bool):
        out = 0.0 * z
        dz = 0.0 * z
        if self.mobius:
            den = 1.0 + t[0] * z
            out = out + (z + s[0]) / den
            dz = dz + (1.0 - s[0] * t[0]) / (den * den)
        for c, p, (a1, b1, a2, b2) in self.metric_terms:
            c = np.conj(c) if conj else c
            par = s[0] ** a1 * t[0] ** b1 * s[1] ** a2 * t[1] ** b2
            out = out + c * par * z**p
            if p > 0:
                dz = dz + (c * p) * par * z ** (p - 1)
        return out, dz

    def log_metric(self, z, zb, s, t):
        """``log g`` with ``g = |F_z|^2 2/(1-|F|^2)^2``."""
        F, Fz = self._F(z, s, t, conj=False)
        Fb, Fbz = self._F(zb, t, s, conj=True)
        return log(Fz) + log(Fbz) + np.log(2.0) - 2.0 * log(1.0 - F * Fb)

    # -- covering map ----------------------------------------------------
    def _beta(self, z, s, conj: bool):
        out = 0.0 * z
        for c, p, (e1, e2) in self.beta_terms:
            c = np.conj(c) if conj else c
            out = out + c * s[0] ** e1 * s[1] ** e2 * z**p
        return out

    def beta(self, z, s):
        return self._beta(z, s, conj=False)

    def beta_bar(self, zb, t):
        return self._beta(zb, t, conj=True)

    @property
    def target(self) -> TargetMetric:
        return TargetMetric(self.epsilon)

    # -- presets ---------------------------------------------------------
    @classmethod
    def mobius_family(cls) -> "DiskModelFamily":
        """Automorphism family: ``g`` is the Poincare metric for every ``s``."""
        return cls(
            name="mobius",
            beta_terms=((1.0, 2, (0, 0)), (1.0, 1, (1, 0)), (0.5, 3, (0, 1))),
        )

    @classmethod
    def warped_family(cls) -> "DiskModelFamily":
        """Non-trivial family with both ``s`` and ``conj(s)`` dependence."""
        return cls(
            name="warped",
            metric_terms=(
                (0.3 + 0.1j, 2, (0, 0, 1, 0)),
                (0.2 - 0.15j, 3, (0, 0, 0, 1)),
                (0.25 + 0.05j, 2, (1, 0, 0, 1)),
                (0.15 - 0.1j, 1, (0, 1, 1, 0)),
            ),
            beta_terms=(
                (1.0, 2, (0, 0)),
                (0.7 - 0.2j, 1, (1, 0)),
                (0.4 + 0.3j, 3, (0, 1)),
                (0.3, 0, (1, 1)),
            ),
        )

    @classmethod
    def trivial_family(cls) -> "DiskModelFamily":
        """Neither the metric nor the map depends on the parameters."""
        return cls(name="trivial", mobius=False, metric_terms=((1.0, 1, (0, 0, 0, 0)),))


def sample_points(family: DiskModelFamily, n: int, seed: int = 0):
    """Random points ``(z, s1, s2)`` in the disk of radius ``sample_radius``."""
    rng = np.random.default_rng(seed)

    def disk(r, size):
        rad = r * np.sqrt(rng.uniform(0, 1, size))
        return rad * np.exp(2j * np.pi * rng.uniform(0, 1, size))

    return disk(family.sample_radius, n), disk(family.param_radius, n), disk(family.param_radius, n)


@dataclass
class FamilyJets:
    """All derived jets of a disk family at a batch of sample points."""

    L: Jet
    g: Jet
    a: list
    abar: list
    A: list
    Abar: list
    phi: list
    phi_def: list
    beta: Jet
    betab: Jet
    zeta: Jet
    zetab: Jet
    xi: list
    xib: list
    h: Jet
    Gamma: Jet
    K: Jet
    extras: dict = field(default_factory=dict)


def family_jets(family: DiskModelFamily, z, s1, s2) -> FamilyJets:
    """Evaluate the metric, horizontal lift, phi potentials and map data as jets."""
    jz, jzb, js1, jt1, js2, jt2 = Jet.variables(
        [z, np.conj(z), s1, np.conj(s1), s2, np.conj(s2)], order=4
    )
    s, t = (js1, js2), (jt1, jt2)
    L = family.log_metric(jz, jzb, s, t)
    g = L.exp()
    a = [-(L.d(S[i]).d(ZB)) / g for i in range(NPARAM)]
    abar = [-(L.d(SB[j]).d(Z)) / g for j in range(NPARAM)]
    A = [ai.d(ZB) for ai in a]
    Abar = [aj.d(Z) for aj in abar]
    phi, phi_def = [], []
    for i in range(NPARAM):
        row, row_def = [], []
        for j in range(NPARAM):
            gij = L.d(S[i]).d(SB[j])
            row.append(gij - g * a[i] * abar[j])
            row_def.append(gij - L.d(S[i]).d(ZB) * L.d(Z).d(SB[j]) / g)
        phi.append(row)
        phi_def.append(row_def)
    beta = family.beta(jz, s)
    betab = family.beta_bar(jzb, t)
    tm = family.target
    h = tm.h(beta, betab)
    return FamilyJets(
        L=L, g=g, a=a, abar=abar, A=A, Abar=Abar, phi=phi, phi_def=phi_def,
        beta=beta, betab=betab, zeta=beta.d(Z), zetab=betab.d(ZB),
        xi=[beta.d(S[k]) for k in range(NPARAM)],
        xib=[betab.d(SB[k]) for k in range(NPARAM)],
        h=h, Gamma=tm.gamma(beta, betab), K=tm.epsilon * h,
    )


def _holomorphic_sections(J: FamilyJets):
    """Two sections ``q(beta)`` holomorphic in ``(z, s)``."""
    b = J.beta
    return [1.0 + 0.3 * b + 0.1 * b * b, b - 0.2 * b * b]


def _covariant_z(J: FamilyJets, u: Jet) -> Jet:
    return u.d(Z) + J.Gamma * J.zeta * u


def covariant_D(J: FamilyJets, u: Jet, k: int) -> Jet:
    """``D_k u = u_|k + Gamma xi_k u + a_k (u_|z + Gamma zeta u)``."""
    return u.d(S[k]) + J.Gamma * J.xi[k] * u + J.a[k] * _covariant_z(J, u)


def identity_residuals(J: FamilyJets) -> dict[str, np.ndarray]:
    """Per-sample absolute residual ``|lhs - rhs|`` of every identity.

    Each entry is the maximum over all parameter index combinations.
    """
    R: dict[str, list] = {}

    def put(name, jet_or_arr):
        val = jet_or_arr.value if isinstance(jet_or_arr, Jet) else jet_or_arr
        R.setdefault(name, []).append(np.abs(val))

    g, L = J.g, J.L
    put("liouville", L.d(Z).d(ZB) - g)
    put("target_curvature", -(log(J.h)).d(Z).d(ZB) - J.K * J.zeta * J.zetab)
    put("nabla_z_h", J.h.d(Z) - J.Gamma * J.zeta * J.h)
    idx = range(NPARAM)
    for k in idx:
        put("nabla_k_h", J.h.d(S[k]) - J.Gamma * J.xi[k] * J.h)
        put("dbar_l_gamma", J.Gamma.d(SB[k]) + J.K * J.xib[k])
    for i in idx:
        put("liu_dz_a", J.a[i].d(Z) + L.d(Z) * J.a[i] + L.d(S[i]))
        put("liu_dzb_abar", J.abar[i].d(ZB) + L.d(ZB) * J.abar[i] + L.d(SB[i]))
    for i, l in product(idx, idx):
        put("liu_dlb_a", J.a[i].d(SB[l]) + J.A[i] * J.abar[l] + J.phi[i][l].d(ZB) / g)
        put("liu_dk_abar", J.abar[i].d(S[l]) + J.Abar[i] * J.a[l] + J.phi[l][i].d(Z) / g)
        put("phi_formula", J.phi[i][l] - J.phi_def[i][l])
        box_phi = -(J.phi[i][l].d(Z).d(ZB)) / g
        put("elliptic_phi", box_phi + J.phi[i][l] - J.A[i] * J.Abar[l])
        put("phi_hermitian", J.phi[i][l].value - np.conj(J.phi[l][i].value))
    U = [J.xi[k] + J.a[k] * J.zeta for k in idx]
    Ub = [J.xib[k] + J.abar[k] * J.zetab for k in idx]
    Hzz = J.h * J.zeta * J.zetab
    for k in idx:
        put("lie_g", g.d(S[k]) + J.a[k] * g.d(Z) + J.a[k].d(Z) * g)
        lie_h = Hzz.d(S[k]) + J.a[k] * Hzz.d(Z) + J.a[k].d(Z) * Hzz
        put("kahler_integrand", _covariant_z(J, U[k]) * J.zetab * J.h - lie_h)
        b = -J.xi[k] / J.zeta
        put("lie_tilde_h", Hzz.d(S[k]) + b * Hzz.d(Z) + b.d(Z) * Hzz)
    for i, k in product(idx, idx):
        put(
            "sym_a_az",
            J.a[k] * J.a[i].d(Z) - J.a[i] * J.a[k].d(Z) - (L.d(S[k]) * J.a[i] - L.d(S[i]) * J.a[k]),
        )
        put(
            "sym_a_ds",
            J.a[i].d(S[k]) - J.a[k].d(S[i]) - (L.d(S[i]) * J.a[k] - L.d(S[k]) * J.a[i]),
        )
        put("sym_D_u", covariant_D(J, U[i], k) - covariant_D(J, U[k], i))
        nabla_v_ub = Ub[i].d(S[k]) + J.a[k] * Ub[i].d(Z)
        put("nabla_v_ubar", nabla_v_ub + J.phi[k][i].d(Z) / g * J.zetab)
    for u in _holomorphic_sections(J):
        uz = _covariant_z(J, u)
        for k, l in product(idx, idx):
            Dku = covariant_D(J, u, k)
            lhs = Dku.d(SB[l]) + J.abar[l] * Dku.d(ZB)
            rhs = -J.K * Ub[l] * U[k] * u - J.phi[k][l].d(ZB) / g * uz
            put("dbar_D_expansion", lhs - rhs)
    return {k: np.max(np.stack(v), axis=0) for k, v in R.items()}


IDENTITY_NAMES = (
    "liouville", "target_curvature", "nabla_z_h", "nabla_k_h", "dbar_l_gamma",
    "liu_dz_a", "liu_dzb_abar", "liu_dlb_a", "liu_dk_abar", "phi_formula",
    "elliptic_phi", "phi_hermitian", "lie_g", "kahler_integrand",
    "lie_tilde_h", "sym_a_az", "sym_a_ds", "sym_D_u", "nabla_v_ubar", "dbar_D_expansion",
)


def verify_pointwise_identities(
    family: DiskModelFamily, n_samples: int = 200, seed: int = 0, zeta_floor: float = 1e-3
) -> dict:
    """Check every identity at random sample points; report the worst residual.

    Samples where ``|d beta/dz|`` falls below ``zeta_floor`` are skipped
    (the tilde lift has a pole there) and counted in the report.
    """
    z, s1, s2 = sample_points(family, n_samples, seed)
    J = family_jets(family, z, s1, s2)
    keep = np.abs(J.zeta.value) >= zeta_floor
    res = identity_residuals(J)
    report = {
        "family": family.name,
        "samples": int(keep.sum()),
        "skipped": int((~keep).sum()),
        "residuals": {k: float(np.max(res[k][keep], initial=0.0)) for k in IDENTITY_NAMES},
        "max_abs_a": float(max(np.max(np.abs(a.value)) for a in J.a)),
        "max_abs_phi": float(max(np.max(np.abs(p.value)) for row in J.phi for p in row)),
    }
    return report


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def _d1(f, x, step, direction):
    """Fourth-order central first difference of ``f`` along ``direction``."""
    e = step * direction
    return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * step)


def _d2(f, x, step, direction):
    """Fourth-order central second difference of ``f`` along ``direction``."""
    e = step * direction
    return (-f(x + 2 * e) + 16 * f(x + e) - 30 * f(x) + 16 * f(x - e) - f(x - 2 * e)) / (
        12 * step**2
    )


def fd_cross_check(family: DiskModelFamily, n_samples: int = 50, seed: int = 1, step: float = 1e-4):
    """Compare jet derivatives of ``log g`` with central finite differences.

    First Wirtinger derivatives in ``z`` and ``s1`` are differenced from plain
    evaluations of ``log g``.  Second derivatives ``d_z d_zbar`` and
    ``d_s1 d_s1bar`` are checked two ways: differencing the jet's first
    derivative (``nested``), and a plain second difference (``plain``), whose
    round-off floor is about ``eps / step**2``.  Returns maximum absolute
    discrepancies.
    """
    z, s1, s2 = sample_points(family, n_samples, seed)
    J = family_jets(family, z, s1, s2)

    def L_at(zz, ss):
        return family.log_metric(zz, np.conj(zz), (ss, s2), (np.conj(ss), np.conj(s2))).real

    def jet_first(zz, ss, var):
        v = Jet.variables([zz, np.conj(zz), ss, np.conj(ss), s2, np.conj(s2)], order=1)
        return family.log_metric(v[0], v[1], (v[2], v[4]), (v[3], v[5])).d(var).value

    out = {}
    for name, x, k, kb in (("z", z, Z, ZB), ("s1", s1, S[0], SB[0])):
        move = (lambda x_: (x_, s1)) if name == "z" else (lambda x_: (z, x_))
        f = lambda x_: L_at(*move(x_))  # noqa: E731
        dx, dy = _d1(f, x, step, 1.0), _d1(f, x, step, 1j)
        out[f"d_{name}"] = float(np.max(np.abs(0.5 * (dx - 1j * dy) - J.L.d(k).value)))
        out[f"d_{name}bar"] = float(np.max(np.abs(0.5 * (dx + 1j * dy) - J.L.d(kb).value)))
        exact = J.L.d(k).d(kb).value
        fb = lambda x_: jet_first(*move(x_), kb)  # noqa: E731
        nested = 0.5 * (_d1(fb, x, step, 1.0) - 1j * _d1(fb, x, step, 1j))
        out[f"d_{name}d_{name}bar_nested"] = float(np.max(np.abs(nested - exact)))
        plain = 0.25 * (_d2(f, x, step, 1.0) + _d2(f, x, step, 1j))
        out[f"d_{name}d_{name}bar_plain"] = float(np.max(np.abs(plain - exact)))
    return out
