"""Constitutive laws: capillary saturation, capillary energy, mobilities and
equivalent pressure for the four rock types (matrix, fracture and the two
damaged layers).

All functions accept scalars or numpy arrays. Pressures are in Pa, viscosities
in Pa s, mobilities in 1/(Pa s).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from .errors import DomainError

__all__ = [
    "SaturationLaw",
    "MobilityLaw",
    "RockType",
    "saturation",
    "saturation_derivative",
    "capillary_energy",
    "capillary_pressure",
    "mobility",
    "equivalent_pressure",
    "ROCK_M",
    "ROCK_F",
    "ROCK_PLUS",
    "ROCK_MINUS",
]

ROCK_M, ROCK_F, ROCK_PLUS, ROCK_MINUS = 0, 1, 2, 3

SATURATION_KINDS = ("corey",)
MOBILITY_KINDS = ("quadratic_over_mu", "linear_over_mu", "van_genuchten_over_mu")

# Taylor coefficients of 1 - exp(-x)(1 + x) = sum_k (-1)^k (k-1)/k! x^k, k >= 2
_U_SERIES = np.array([(-1) ** k * (k - 1) / factorial(k) for k in range(2, 16)])
_U_SERIES_SWITCH = 0.05


@dataclass(frozen=True)
class SaturationLaw:
    """Capillary law ``p_c -> s^nw``.

    Only the Corey-type law ``S(p_c) = max(1 - exp(-p_c / R), 0)`` is
    provided.

    Parameters
    ----------
    kind : str
        Law family, ``"corey"``.
    R : float
        Pressure scale in Pa.
    """

    kind: str = "corey"
    R: float = 1.0e4

    def __post_init__(self):
        if self.kind not in SATURATION_KINDS:
            raise ValueError(f"unknown saturation law kind {self.kind!r}")
        if not self.R > 0:
            raise ValueError("saturation law scale R must be positive")

    def evaluate(self, pc):
        """Return ``(S, dS/dpc, U)`` as arrays.

        ``dS/dpc`` at ``pc = 0`` is the right derivative ``1/R``.
        """
        pc = np.asarray(pc, dtype=float)
        x = pc / self.R
        pos = x >= 0.0
        xp = np.where(pos, x, 0.0)
        e = np.exp(-xp)
        s = np.where(pos, -np.expm1(-xp), 0.0)
        ds = np.where(pos, e / self.R, 0.0)
        u = np.where(pos, self.R * _unit_energy(xp), 0.0)
        return s, ds, u


def _unit_energy(x):
    """``1 - exp(-x)(1+x)`` for ``x >= 0`` without cancellation near 0."""
    x = np.asarray(x, dtype=float)
    small = x < _U_SERIES_SWITCH
    xs = np.where(small, x, 0.0)
    series = np.zeros_like(xs)
    for c in _U_SERIES[::-1]:
        series = (series + c) * xs
    series *= xs
    direct = -np.expm1(-x) - x * np.exp(-x)
    return np.where(small, series, direct)


@dataclass(frozen=True)
class MobilityLaw:
    """Phase mobility ``eta(s)`` where ``s`` is the saturation of ``phase``.

    Parameters
    ----------
    kind : str
        ``quadratic_over_mu`` (s^2/mu), ``linear_over_mu`` (s/mu) or
        ``van_genuchten_over_mu`` (k_r(s)/mu with the van Genuchten-Mualem
        relative permeability of the given phase).
    phase : str
        ``"w"`` or ``"nw"``; selects the van Genuchten branch.
    mu : float
        Dynamic viscosity in Pa s.
    q, s_lr, s_gr : float
        Van Genuchten exponent and residual liquid/gas saturations.
    floor : float
        Optional lower bound on the mobility (1/(Pa s)); 0 keeps the law as is.
    """

    kind: str
    phase: str
    mu: float
    q: float = 0.5
    s_lr: float = 0.0
    s_gr: float = 0.0
    floor: float = 0.0

    def __post_init__(self):
        if self.kind not in MOBILITY_KINDS:
            raise ValueError(f"unknown mobility law kind {self.kind!r}")
        if self.phase not in ("w", "nw"):
            raise ValueError("phase must be 'w' or 'nw'")
        if not self.mu > 0:
            raise ValueError("viscosity must be positive")
        if self.kind == "van_genuchten_over_mu":
            if not 0 < self.q < 1:
                raise ValueError("van Genuchten exponent q must lie in (0, 1)")
            if self.s_lr < 0 or self.s_gr < 0 or self.s_lr + self.s_gr >= 1:
                raise ValueError("residual saturations must satisfy s_lr + s_gr < 1")

    def evaluate(self, s):
        """Return ``(eta, deta/ds)``; ``s`` is clipped to [0, 1]."""
        s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
        if self.kind == "quadratic_over_mu":
            kr, dkr = s * s, 2.0 * s
        elif self.kind == "linear_over_mu":
            kr, dkr = s, np.ones_like(s)
        else:
            kr, dkr = self._van_genuchten(s)
        eta = kr / self.mu
        deta = dkr / self.mu
        if self.floor > 0:
            low = eta < self.floor
            eta = np.where(low, self.floor, eta)
            deta = np.where(low, 0.0, deta)
        return eta, deta

    def _van_genuchten(self, s):
        width = 1.0 - self.s_lr - self.s_gr
        q = self.q
        sw = s if self.phase == "w" else 1.0 - s
        sbar = (sw - self.s_lr) / width
        inside = (sbar > 0.0) & (sbar < 1.0)
        sb = np.where(inside, sbar, 0.5)
        a = sb ** (1.0 / q)
        g = 1.0 - a
        da_dsb = a / (q * sb)
        if self.phase == "w":
            gq = g**q
            h = 1.0 - gq
            kr = np.sqrt(sb) * h * h
            # d(gq)/dsb = q g^(q-1) (-da)
            dgq = -q * g ** (q - 1.0) * da_dsb
            dkr_dsb = 0.5 / np.sqrt(sb) * h * h - 2.0 * np.sqrt(sb) * h * dgq
            kr = np.where(inside, kr, np.where(sbar >= 1.0, 1.0, 0.0))
            dkr = np.where(inside, dkr_dsb / width, 0.0)
        else:
            r = np.sqrt(1.0 - sb)
            g2q = g ** (2.0 * q)
            kr = r * g2q
            dg2q = -2.0 * q * g ** (2.0 * q - 1.0) * da_dsb
            dkr_dsb = -0.5 / r * g2q + r * dg2q
            kr = np.where(inside, kr, np.where(sbar <= 0.0, 1.0, 0.0))
            # s^nw = 1 - s^w, so d/ds^nw = -d/dsbar / width
            dkr = np.where(inside, -dkr_dsb / width, 0.0)
        return kr, dkr


@dataclass(frozen=True)
class RockType:
    """Saturation and mobility laws of one rock type.

    ``width`` and ``porosity`` are used only for the damaged layers.
    """

    saturation: SaturationLaw
    mobility_nw: MobilityLaw
    mobility_w: MobilityLaw
    tag: str = "m"
    width: float | None = None
    porosity: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.tag not in ("m", "f", "+", "-"):
            raise ValueError(f"unknown rock type tag {self.tag!r}")
        if self.tag in ("+", "-"):
            if self.width is None or not self.width > 0:
                raise ValueError("damaged layer width must be positive")
            if self.porosity is None or not self.porosity > 0:
                raise ValueError("damaged layer porosity must be positive")
        if self.mobility_nw.phase != "nw" or self.mobility_w.phase != "w":
            raise ValueError("mobility laws must be given for phases nw and w")

    def mobility(self, phase):
        return self.mobility_nw if phase == "nw" else self.mobility_w


def saturation(law: SaturationLaw, pc):
    """Non-wetting saturation ``S^nw(p_c)``."""
    s, _, _ = law.evaluate(pc)
    return s if np.ndim(s) else float(s)


def saturation_derivative(law: SaturationLaw, pc):
    """``dS^nw/dp_c`` (right derivative at the kink)."""
    _, ds, _ = law.evaluate(pc)
    return ds if np.ndim(ds) else float(ds)


def capillary_energy(law: SaturationLaw, pc):
    """Capillary energy density ``U(p_c) = int_0^pc q S'(q) dq``."""
    _, _, u = law.evaluate(pc)
    return u if np.ndim(u) else float(u)


def capillary_pressure(law: SaturationLaw, s_nw):
    """Inverse of the saturation law on ``s_nw`` in [0, 1)."""
    s_nw = np.asarray(s_nw, dtype=float)
    if np.any(s_nw < 0) or np.any(s_nw >= 1):
        raise DomainError("inverse saturation needs s_nw in [0, 1)")
    pc = -law.R * np.log1p(-s_nw)
    return pc if np.ndim(pc) else float(pc)


def mobility(law: MobilityLaw, s):
    """Mobility of ``law.phase`` at its own saturation ``s``.

    Raises
    ------
    DomainError
        If ``s`` lies outside [0, 1] by more than 1e-12.
    """
    arr = np.asarray(s, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1.0 + 1e-12) or np.any(np.isnan(arr)):
        raise DomainError(f"saturation outside [0, 1]: {s!r}")
    eta, _ = law.evaluate(arr)
    return eta if np.ndim(eta) else float(eta)


def equivalent_pressure(p_nw, p_w, law: SaturationLaw):
    """``p^E = p^nw S^nw + p^w S^w - U(p^nw - p^w)``."""
    p_nw = np.asarray(p_nw, dtype=float)
    p_w = np.asarray(p_w, dtype=float)
    s, _, u = law.evaluate(p_nw - p_w)
    pe = p_nw * s + p_w * (1.0 - s) - u
    return pe if np.ndim(pe) else float(pe)
