"""Exact arithmetic for the symplectic groupoid over the Bruhat sphere.

The groupoid is the quotient T\\(SU(2) x N) over CP(1), with N the upper
unipotent subgroup of SL(2,C).  An element is stored as a canonical triple
(alpha, beta, w): (alpha, beta) is the first row of an SU(2) matrix and w
the upper-right entry of the N factor.  The torus acts by

    (alpha, beta, w)  ~  (e^{it} alpha, e^{it} beta, e^{2it} w),

and the canonical gauge takes beta real >= 0 (alpha = 1 exactly when the
orbit hits beta = 0).  All structure maps are computed through the Iwasawa
decomposition n k = k' a' n' in SL(2,C); nothing is special-cased, so the
groupoid axioms hold to rounding error by construction.

Chart trivializations of the source submersion:

    chart_x(z, w)       source [z, 1],  N-coordinate -conj(w)
    chart_xdot(zd, wd)  source [1, zd], N-coordinate -conj(wd)

With these, the closed identities ([1,0]^w)^{-1} = [1,0]^{-w},
chart_x(z,w)^{-1} = chart_x(z + conj(w), -w) and the overlap
chart_x(z,w) = chart_xdot(1/z, z^2 w/|z|^2) hold exactly up to gauge.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import CompositionMismatch, NotOnSphere

#: tolerance below which beta is treated as exactly zero in the gauge fix
PHASE_TOL = 1e-12

#: unit-sphere norm tolerance accepted on input
NORM_TOL = 1e-12

#: chordal endpoint tolerance for composability
COMPOSE_TOL = 1e-9


@dataclass(frozen=True)
class UnitPoint:
    """Canonical representative [alpha, beta] of a point of CP(1)."""

    alpha: complex
    beta: complex

    def chordal_distance(self, other: "UnitPoint") -> float:
        # |u ^ v| form of sqrt(1 - |<u,v>|^2); no cancellation near 0
        return abs(self.alpha * other.beta - self.beta * other.alpha)

    def zcoord(self) -> complex:
        """Undotted stereographic coordinate alpha/beta (inf at [1,0])."""
        if abs(self.beta) == 0.0:
            return complex(math.inf, 0.0)
        return self.alpha / self.beta


@dataclass(frozen=True)
class GroupoidElement:
    """Canonical representative of a point of T\\(SU(2) x N)."""

    alpha: complex
    beta: complex
    w: complex

    def unit_point(self) -> UnitPoint:
        return UnitPoint(self.alpha, self.beta)


@dataclass(frozen=True)
class IwasawaFactors:
    """k', a', n' with n k = k' a' n' in SL(2,C)."""

    kprime: tuple
    aprime: float
    nprime: complex


def _gauge(alpha: complex, beta: complex, w: complex):
    """Rotate a unit-norm triple into the canonical torus gauge."""
    if beta.imag == 0.0 and beta.real >= PHASE_TOL:
        return alpha, complex(beta.real), w     # already canonical, bit-exact
    if abs(beta) < PHASE_TOL:
        if alpha == 1.0:
            return complex(1.0), complex(0.0), w
        phase = np.conj(alpha) / abs(alpha)
        return complex(1.0), complex(0.0), complex(w * phase * phase)
    phase = np.conj(beta) / abs(beta)
    return complex(alpha * phase), complex(abs(beta)), complex(w * phase * phase)


def canonicalize(alpha: complex, beta: complex, w: complex = 0.0) -> GroupoidElement:
    """Canonical representative of the T-orbit through (alpha, beta, w).

    Accepts representatives off the unit sphere by renormalizing first;
    rejects (0, 0, w).  Idempotent bit-exactly: a canonical triple passes
    through unchanged (the norm division is skipped inside NORM_TOL so no
    rounding is reintroduced).
    """
    norm2 = abs(alpha) ** 2 + abs(beta) ** 2
    if norm2 == 0.0:
        raise NotOnSphere("(0, 0, w) does not represent a point of SU(2)")
    if abs(norm2 - 1.0) > NORM_TOL:
        norm = math.sqrt(norm2)
        alpha, beta = alpha / norm, beta / norm
    a, b, ww = _gauge(complex(alpha), complex(beta), complex(w))
    return GroupoidElement(a, b, ww)


def unit(x: UnitPoint) -> GroupoidElement:
    """Unit arrow over x, u(x) = (alpha, beta, 0)."""
    return canonicalize(x.alpha, x.beta, 0.0)


def unit_point(alpha: complex, beta: complex) -> UnitPoint:
    g = canonicalize(alpha, beta, 0.0)
    return UnitPoint(g.alpha, g.beta)


def _kmat(alpha: complex, beta: complex) -> np.ndarray:
    return np.array([[alpha, beta], [-np.conj(beta), np.conj(alpha)]])


def _nmat(w: complex) -> np.ndarray:
    return np.array([[1.0, w], [0.0, 1.0]])


def iwasawa_nk(w: complex, k: UnitPoint) -> IwasawaFactors:
    """Iwasawa decomposition n(w) k = k' a' n' in SL(2,C).

    k' is read off the normalized first column of the product; a', n' are
    recovered by solving k'^{-1} n k = a' n'.  Global on N K, so no error
    cases arise for unit-norm input.
    """
    g = _nmat(w) @ _kmat(k.alpha, k.beta)
    c0, c1 = g[0, 0], g[1, 0]
    aprime = math.sqrt(abs(c0) ** 2 + abs(c1) ** 2)
    alpha_p = c0 / aprime
    beta_p = np.conj(-c1 / aprime)
    rest = np.conj(_kmat(alpha_p, beta_p).T) @ g
    nprime = rest[0, 1] / rest[0, 0]
    return IwasawaFactors((complex(alpha_p), complex(beta_p)), aprime, complex(nprime))


def _target_rep(g: GroupoidElement):
    """Un-gauged K-part of the target, i.e. k' of n(w) k."""
    fac = iwasawa_nk(g.w, UnitPoint(g.alpha, g.beta))
    return fac.kprime


def source_target(g: GroupoidElement):
    """(source, target) unit points of a canonical element."""
    src = unit_point(g.alpha, g.beta)
    ap, bp = _target_rep(g)
    return src, unit_point(ap, bp)


def inverse(g: GroupoidElement) -> GroupoidElement:
    """Groupoid inverse, i(k, n) = (k', n^{-1})."""
    ap, bp = _target_rep(g)
    return canonicalize(ap, bp, -g.w)


def multiply(g1: GroupoidElement, g2: GroupoidElement) -> GroupoidElement:
    """Product g1 g2, defined when source(g1) = target(g2).

    g1 is rotated into the gauge whose K-part equals the literal Iwasawa
    k' of g2 (snapping endpoints within COMPOSE_TOL), and the N parts add
    in that common gauge.
    """
    at, bt = _target_rep(g2)
    ip = np.conj(g1.alpha) * at + np.conj(g1.beta) * bt
    dist = abs(g1.alpha * bt - g1.beta * at)
    if dist > COMPOSE_TOL:
        raise CompositionMismatch(
            f"source(g1) and target(g2) differ by chordal distance {dist:.3e}"
        )
    phase = ip / abs(ip)
    return canonicalize(g2.alpha, g2.beta, g1.w * phase * phase + g2.w)


def chart_x(z: complex, w: complex) -> GroupoidElement:
    """Source trivialization over the undotted chart: source [z, 1]."""
    s = math.sqrt(1.0 + abs(z) ** 2)
    return canonicalize(z / s, 1.0 / s, -np.conj(w))


def chart_xdot(zdot: complex, wdot: complex) -> GroupoidElement:
    """Source trivialization over the dotted chart: source [1, zdot]."""
    s = math.sqrt(1.0 + abs(zdot) ** 2)
    return canonicalize(1.0 / s, zdot / s, -np.conj(wdot))


def mult_differential_bound(alpha: complex, beta: complex, w: complex):
    """Lower-bound data for the multiplication differential.

    Q is the squared Iwasawa normalizer a'^2 of n(w) k(alpha, beta); the
    returned flag asserts Q >= 1/(4 |w|^2) whenever |w| > 1 (the bound is
    only claimed there; smaller |w| reports True).
    """
    g = canonicalize(alpha, beta, w)
    fac = iwasawa_nk(g.w, UnitPoint(g.alpha, g.beta))
    q = fac.aprime ** 2
    if abs(w) <= 1.0:
        return q, True
    return q, bool(q >= 1.0 / (4.0 * abs(w) ** 2))


def element_distance(g1: GroupoidElement, g2: GroupoidElement) -> float:
    """Max coordinate distance between canonical representatives."""
    return max(
        abs(g1.alpha - g2.alpha), abs(g1.beta - g2.beta), abs(g1.w - g2.w)
    )


def random_elements(rng: np.random.Generator, n: int, w_scale: float = 2.0):
    """n canonical elements with Haar-uniform base and Gaussian N part."""
    v = rng.normal(size=(n, 4))
    a = v[:, 0] + 1j * v[:, 1]
    b = v[:, 2] + 1j * v[:, 3]
    nrm = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    wre = rng.normal(size=n) * w_scale
    wim = rng.normal(size=n) * w_scale
    return [
        canonicalize(a[i] / nrm[i], b[i] / nrm[i], wre[i] + 1j * wim[i])
        for i in range(n)
    ]


def random_composable_pair(rng: np.random.Generator, w_scale: float = 2.0):
    """(g1, g2) with source(g1) = target(g2) exactly."""
    g1 = random_elements(rng, 1, w_scale)[0]
    w = (rng.normal() + 1j * rng.normal()) * w_scale
    h = canonicalize(g1.alpha, g1.beta, w)  # same source as g1
    return g1, inverse(h)  # target(h^{-1}) = source(h) = source(g1)


# ---------------------------------------------------------------------------
# vectorized raw-representative helpers (no gauge fixing; intended for
# evaluating T-invariant functions on arrays of chart points)

def chart_x_coords(z, w):
    """Raw (alpha, beta, n0) arrays of chart_x over array arguments."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    s = np.sqrt(1.0 + np.abs(z) ** 2)
    return z / s, 1.0 / s, -np.conj(w)


def chart_xdot_coords(zdot, wdot):
    """Raw (alpha, beta, n0) arrays of chart_xdot over array arguments."""
    zdot = np.asarray(zdot, dtype=complex)
    wdot = np.asarray(wdot, dtype=complex)
    s = np.sqrt(1.0 + np.abs(zdot) ** 2)
    return 1.0 / s, zdot / s, -np.conj(wdot)


def target_z_of_chart(z, w):
    """Undotted coordinate of the target of chart_x(z, w)."""
    return np.asarray(z, dtype=complex) + np.conj(np.asarray(w, dtype=complex))


def phase_of(z: complex) -> complex:
    return cmath.exp(1j * cmath.phase(z))
