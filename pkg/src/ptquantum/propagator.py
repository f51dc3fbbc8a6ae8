"""Closed-form propagator, Langevin-force moments and their EP limits.

The Heisenberg-Langevin system ``dA/dt = -i M A + L`` for
``A = (a1, a1^+, a2, a2^+)`` is solved by ``P(t) = exp(-i M t)``.  With
``gamma_+ = (gamma1 + gamma2)/2``, ``gamma_- = (gamma1 - gamma2)/2`` and
``mu = sqrt(eps^2 - kappa^2 - gamma_-^2)`` the shifted generator squares to
``-mu^2``, so every entry of ``P`` is ``exp(-gamma_+ t)`` times a combination
of ``cos(mu t)`` and ``sin(mu t)/mu``.  Everything below is analytic in
``mu^2``: in the PT-broken phase ``mu`` is purely imaginary and the same
expressions are evaluated in complex arithmetic.

Functions accept scalar or array ``t`` and broadcast over it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInput, NotAtEP
from .model import EP_THRESHOLD, SystemRates, effective_frequency

_EXCHANGE = np.array([[0.0, 1.0], [1.0, 0.0]])


def dynamical_matrix(rates: SystemRates, epsilon: float, kappa: float) -> np.ndarray:
    """4x4 matrix ``M`` over the ordering (a1, a1^+, a2, a2^+)."""
    g1, g2 = rates.gamma1, rates.gamma2
    e, k = epsilon, kappa
    return np.array(
        [
            [-1j * g1, 0, e, k],
            [0, -1j * g1, -k, -e],
            [e, k, -1j * g2, 0],
            [-k, -e, 0, -1j * g2],
        ],
        dtype=complex,
    )


@dataclass(frozen=True)
class EigenData:
    eigenvalues: np.ndarray
    t_matrix: np.ndarray
    t_inverse: np.ndarray
    xi: complex
    zeta_plus: complex
    zeta_minus: complex
    psi_plus: complex
    psi_minus: complex

    def reconstruct(self) -> np.ndarray:
        return self.t_matrix @ np.diag(self.eigenvalues) @ self.t_inverse


def eigendecomposition(m: np.ndarray, rates: SystemRates, tol: float = 1e-8) -> EigenData:
    """Closed-form eigenvectors of the dynamical matrix.

    Diagnostic only: the eigenvectors coalesce at an EP (``mu = 0``) and
    ``DegenerateInput`` is raised there.  ``epsilon`` and ``kappa`` are read
    off ``m`` itself.
    """
    m = np.asarray(m)
    eps = float(np.real(m[0, 2]))
    kap = float(np.real(m[0, 3]))
    gp, gm = rates.gamma_plus, rates.gamma_minus
    mu, mu2 = effective_frequency(eps, kap, gm)
    xi = complex(np.sqrt(complex(eps**2 - kap**2)))
    # mu^2 within rounding of zero is an EP even if |mu| ~ sqrt(eps) > tol
    rounding = 4 * np.finfo(float).eps * (eps**2 + kap**2 + gm**2)
    if abs(mu) < tol * eps or abs(xi) < tol * eps or abs(mu2) <= rounding:
        raise DegenerateInput(f"eigenvectors coalesce: |mu|={abs(mu):.3g}, |xi|={abs(xi):.3g}")
    zp = complex(np.sqrt(eps + xi))
    zm = complex(np.sqrt(eps - xi))
    pp = (mu + 1j * gm) / xi
    pm = (mu - 1j * gm) / xi

    cols = [
        [zp, -zm, zp * pp, -zm * pp],
        [zm, -zp, -zm * pp, zp * pp],
        [zp, -zm, -zp * pm, zm * pm],
        [zm, -zp, zm * pm, -zp * pm],
    ]
    t_matrix = np.array(cols, dtype=complex).T / (2.0 * math.sqrt(eps))
    inv_cols = [
        [zp * pm, -zm * pm, zp * pp, -zm * pp],
        [zm * pm, -zp * pm, zm * pp, -zp * pp],
        [zp, zm, -zp, -zm],
        [zm, zp, -zm, -zp],
    ]
    t_inverse = np.array(inv_cols, dtype=complex).T * (math.sqrt(eps) / (2.0 * mu))
    eigenvalues = -1j * gp + mu * np.array([1.0, 1.0, -1.0, -1.0])
    return EigenData(eigenvalues, t_matrix, t_inverse, xi, zp, zm, pp, pm)


def _exp_moment(n: int, z):
    """``int_0^1 u^n exp(z u) du`` for complex ``z``, stable for small |z|."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1.0
    # power series: sum_k z^k / (k! (n + k + 1))
    zs = np.where(small, z, 0.0)
    term = np.ones_like(zs)
    series = term / (n + 1)
    for k in range(1, 30):
        term = term * zs / k
        series = series + term / (n + k + 1)
    zl = np.where(small, 1.0, z)
    ez = np.exp(zl)
    rec = (ez - 1.0) / zl
    for j in range(1, n + 1):
        rec = (ez - j * rec) / zl
    return np.where(small, series, rec)


def _growth_integral(n: int, rate, t):
    """``int_0^t tau^n exp(-rate * tau) d tau``."""
    t = np.asarray(t, dtype=float)
    return t ** (n + 1) * _exp_moment(n, -rate * t)


@dataclass(frozen=True)
class AuxFunctions:
    """Time functions entering the propagator and the force moments.

    ``re_f`` and ``im_f`` are the parts of ``f`` that are even and odd in
    ``mu``; for real ``mu`` they are the ordinary real and imaginary parts,
    and they stay correct for imaginary ``mu``.
    """

    mu: complex
    mu_squared: float
    s: np.ndarray
    c: np.ndarray
    f: np.ndarray
    re_f: np.ndarray
    im_f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    h_plus: np.ndarray
    h_minus: np.ndarray
    d_plus: np.ndarray
    d_minus: np.ndarray
    s_tilde: np.ndarray
    c_tilde: np.ndarray
    theta: float
    j1: np.ndarray
    j2: np.ndarray

    @property
    def h0_tilde(self) -> np.ndarray:
        # [(t + g+ t^2) exp(-2 g+ t) - g(t)] / g+^2, regular at g+ = 0
        return -2.0 * self.j2

    @property
    def w(self) -> np.ndarray:
        # [t exp(-2 g+ t) - g(t)] / (2 g+)
        return -self.j1


def aux_functions(rates: SystemRates, epsilon: float, kappa: float, t) -> AuxFunctions:
    t = np.asarray(t, dtype=float)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    mu, mu2 = effective_frequency(epsilon, kappa, gm)
    xi2 = epsilon**2 - kappa**2

    f = _growth_integral(0, 2.0 * (gp + 1j * mu), t)
    f_mirror = _growth_integral(0, 2.0 * (gp - 1j * mu), t)
    re_f = 0.5 * (f + f_mirror)
    im_f = (f - f_mirror) / 2j
    g = _growth_integral(0, 2.0 * gp, t).real

    h = (re_f - g).real
    h_plus = ((mu2 - gm**2) * re_f - 2.0 * mu * gm * im_f + xi2 * g).real
    h_minus = ((mu2 - gm**2) * re_f + 2.0 * mu * gm * im_f + xi2 * g).real
    d_plus = (mu * im_f + gm * re_f - gm * g).real
    d_minus = (mu * im_f - gm * re_f + gm * g).real

    s = np.sin(mu * t)
    c = np.cos(mu * t)
    decay = np.exp(-2.0 * gp * t)
    theta = math.inf if mu2 == 0 else 1.0 / (2.0 * mu2)
    return AuxFunctions(
        mu=mu,
        mu_squared=mu2,
        s=s,
        c=c,
        f=f,
        re_f=re_f,
        im_f=im_f,
        g=g,
        h=h,
        h_plus=h_plus,
        h_minus=h_minus,
        d_plus=d_plus,
        d_minus=d_minus,
        s_tilde=s * s * decay,
        c_tilde=s * c * decay,
        theta=theta,
        j1=_growth_integral(1, 2.0 * gp, t).real,
        j2=_growth_integral(2, 2.0 * gp, t).real,
    )


def _use_ep_branch(mu: complex, t, threshold: float) -> bool:
    t_max = float(np.max(np.abs(t))) if np.size(t) else 0.0
    return abs(mu) * t_max < threshold or mu == 0


@dataclass(frozen=True)
class PropagatorMatrices:
    u: np.ndarray
    v: np.ndarray


def propagator_matrices(
    rates: SystemRates, epsilon: float, kappa: float, t, ep_threshold: float = EP_THRESHOLD
) -> PropagatorMatrices:
    """``U`` and ``V`` blocks with ``a(t) = U a(0) + V a^+(0) + f(t)``."""
    t = np.asarray(t, dtype=float)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    mu, _ = effective_frequency(epsilon, kappa, gm)
    if _use_ep_branch(mu, t, ep_threshold):
        sinc = t.astype(complex)
        cos = np.ones_like(sinc)
    else:
        sinc = np.sin(mu * t) / mu
        cos = np.cos(mu * t)
    damp = np.exp(-gp * t)
    u = np.empty(t.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = (cos - gm * sinc) * damp
    u[..., 0, 1] = -1j * epsilon * sinc * damp
    u[..., 1, 0] = u[..., 0, 1]
    u[..., 1, 1] = (cos + gm * sinc) * damp
    v = (-1j * kappa * sinc * damp)[..., None, None] * _EXCHANGE
    return PropagatorMatrices(u, v)


@dataclass(frozen=True)
class ForceCorrelations:
    """Equal-time second moments of the integrated Langevin forces."""

    ff1: np.ndarray
    f1df1: np.ndarray
    f1f1d: np.ndarray
    ff2: np.ndarray
    f2df2: np.ndarray
    f2f2d: np.ndarray
    f1f2: np.ndarray
    f2f1: np.ndarray
    f1df2: np.ndarray
    f2f1d: np.ndarray


# terms of the small-|mu t| kernel series; exact to rounding for |mu t| <= 1
_KERNEL_TERMS = 15
_KERNEL_SERIES_MAX = 1.0


def _real_moments(n_max: int, x) -> np.ndarray:
    """``int_0^1 u^n exp(x u) du`` for n = 0..n_max and real ``x`` (last axis is n)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n_max + 1,))
    far = np.abs(x) > n_max + 1
    # upward recurrence only amplifies errors by j/|x| < 1 here
    if np.any(far):
        xf = x[far]
        ex = np.exp(xf)
        m = np.expm1(xf) / xf
        out[far, 0] = m
        for j in range(1, n_max + 1):
            m = (ex - j * m) / xf
            out[far, j] = m
    near = ~far
    if np.any(near):
        xn = x[near][:, None]
        n = np.arange(n_max + 1)[None, :]
        neg = xn <= 0
        # both expansions have positive terms for their sign of x
        ax = np.abs(xn)
        term = 1.0 / (n + 1.0) + 0.0 * ax
        total = term.copy()
        for k in range(1, 4 * (n_max + 1) + 40):
            term = term * ax * np.where(neg, 1.0 / (n + k + 1.0), (n + k) / (k * (n + k + 1.0)))
            total = total + term
        out[near] = np.where(neg, np.exp(-ax) * total, total)
    return out


def _kernel_parts(gamma_plus: float, mu2: float, aux: AuxFunctions, t):
    """``(re_f - g)/mu^2`` and ``im_f/mu`` without the cancellation near mu = 0."""
    t = np.asarray(t, dtype=float)
    mu = aux.mu
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (aux.re_f - aux.g).real / mu2 if mu2 != 0 else np.zeros_like(t)
        q = (aux.im_f / mu).real if mu != 0 else np.zeros_like(t)
    small = np.sqrt(abs(mu2)) * t <= _KERNEL_SERIES_MAX
    if mu2 == 0 or np.any(small):
        ts = t[small] if mu2 != 0 else t
        nk = _KERNEL_TERMS
        m = _real_moments(2 * nk + 2, -2.0 * gamma_plus * ts)
        z = mu2 * ts * ts
        ps = np.zeros_like(ts)
        qs = np.zeros_like(ts)
        zk = np.ones_like(ts)
        # cos(2 mu tau) - 1 and sin(2 mu tau)/mu expanded in powers of mu^2
        for k in range(nk + 1):
            ps = ps + (-1) ** (k + 1) * 4.0 ** (k + 1) / math.factorial(2 * k + 2) * zk * m[..., 2 * k + 2]
            qs = qs - (-1) ** k * 2.0 ** (2 * k + 1) / math.factorial(2 * k + 1) * zk * m[..., 2 * k + 1]
            zk = zk * z
        ps = ps * ts**3
        qs = qs * ts**2
        if mu2 == 0:
            return ps, qs
        p, q = np.array(p, dtype=float), np.array(q, dtype=float)
        p[small], q[small] = ps, qs
    return p, q


def _noise_kernels(aux: AuxFunctions, rates: SystemRates, at_ep: bool, t):
    """theta * (h, h+, h-, d+, d-); at an EP these reduce to their mu -> 0 limits."""
    gm = rates.gamma_minus
    if at_ep:
        half_sum = aux.g
        mu2 = 0.0
    else:
        half_sum = 0.5 * (aux.re_f.real + aux.g)
        mu2 = aux.mu_squared
    p, q = _kernel_parts(rates.gamma_plus, mu2, aux, t)
    return (
        0.5 * p,
        half_sum - 0.5 * gm**2 * p - gm * q,
        half_sum - 0.5 * gm**2 * p + gm * q,
        0.5 * q + 0.5 * gm * p,
        0.5 * q - 0.5 * gm * p,
    )


def force_correlations(
    rates: SystemRates, epsilon: float, kappa: float, t, ep_threshold: float = EP_THRESHOLD
) -> ForceCorrelations:
    aux = aux_functions(rates, epsilon, kappa, t)
    at_ep = _use_ep_branch(aux.mu, t, ep_threshold)
    h, hp, hm, dp, dm = _noise_kernels(aux, rates, at_ep, t)
    e, k = epsilon, kappa
    l1, l1t, l2, l2t = rates.l1, rates.l1t, rates.l2, rates.l2t
    return ForceCorrelations(
        ff1=(l2 + l2t) * e * k * h + 0j,
        f1f1d=l1 * hm - (e**2 * l2 + k**2 * l2t) * h + 0j,
        f1df1=l1t * hm - (k**2 * l2 + e**2 * l2t) * h + 0j,
        ff2=(l1 + l1t) * e * k * h + 0j,
        f2f2d=l2 * hp - (e**2 * l1 + k**2 * l1t) * h + 0j,
        # h_plus here: the amplified-mode partner of f2f2d
        f2df2=l2t * hp - (k**2 * l1 + e**2 * l1t) * h + 0j,
        f1f2=1j * k * (l1 * dm + l2t * dp),
        f2f1=1j * k * (l1t * dm + l2 * dp),
        f1df2=1j * e * (l1t * dm - l2t * dp),
        f2f1d=1j * e * (l1 * dm - l2 * dp),
    )


class Coefficients(NamedTuple):
    """Second-order statistical coefficients of the Gaussian state."""

    b1: np.ndarray
    b2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    d: np.ndarray
    dbar: np.ndarray


def ep_limit_coefficients(
    rates: SystemRates, epsilon: float, kappa: float, t, tol: float = 1e-6
) -> Coefficients:
    """Statistical coefficients at an EP, where the evolution is polynomial in t."""
    mu2 = epsilon**2 - kappa**2 - rates.gamma_minus**2
    if abs(mu2) / epsilon**2 > tol:
        raise NotAtEP(f"mu^2/eps^2 = {mu2 / epsilon**2:.3g} is not at an exceptional point")
    return _ep_coefficients(rates, epsilon, kappa, t)


def _ep_coefficients(rates: SystemRates, epsilon: float, kappa: float, t) -> Coefficients:
    t = np.asarray(t, dtype=float)
    aux = aux_functions(rates, epsilon, kappa, t)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    e, k = epsilon, kappa
    l1, l1t, l2, l2t = rates.l1, rates.l1t, rates.l2, rates.l2t
    decay = np.exp(-2.0 * gp * t)
    g, h0, w = aux.g, aux.h0_tilde, aux.w

    # own-reservoir contribution to <f_j^+ f_j>; sign of the gm*w term flips with j
    own1 = g - gm**2 * h0 / 2.0 + 2.0 * gm * w
    own2 = g - gm**2 * h0 / 2.0 - 2.0 * gm * w
    b1 = k**2 * t**2 * decay + l1t * own1 - (k**2 * l2 + e**2 * l2t) * h0 / 2.0
    b2 = k**2 * t**2 * decay + l2t * own2 - (k**2 * l1 + e**2 * l1t) * h0 / 2.0
    c1 = -e * k * t**2 * decay + (l2 + l2t) * e * k * h0 / 2.0
    c2 = -e * k * t**2 * decay + (l1 + l1t) * e * k * h0 / 2.0
    d = (
        -1j * k * (t - gm * t**2) * decay
        + (l1 + l2t) * 1j * k * w
        - (l1 - l2t) * 1j * k * gm * h0 / 2.0
    )
    dbar = (l2t - l1t) * 1j * e * w + (l1t + l2t) * 1j * e * gm * h0 / 2.0
    return Coefficients(b1, b2, c1 + 0j, c2 + 0j, d, dbar + 0j)


def closed_form_coefficients(
    rates: SystemRates, epsilon: float, kappa: float, t, ep_threshold: float = EP_THRESHOLD
) -> Coefficients:
    """Coefficients for an initial coherent state (means do not enter)."""
    t = np.asarray(t, dtype=float)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    mu, mu2 = effective_frequency(epsilon, kappa, gm)
    if _use_ep_branch(mu, t, ep_threshold):
        return _ep_coefficients(rates, epsilon, kappa, t)
    aux = aux_functions(rates, epsilon, kappa, t)
    forces = force_correlations(rates, epsilon, kappa, t, ep_threshold)
    sq = (aux.s_tilde / mu2).real
    sc = (aux.c_tilde / mu).real
    e, k = epsilon, kappa
    b1 = k**2 * sq + forces.f1df1.real
    b2 = k**2 * sq + forces.f2df2.real
    c1 = -e * k * sq + forces.ff1
    c2 = -e * k * sq + forces.ff2
    d = -1j * k * sc + 1j * k * gm * sq + forces.f1f2
    dbar = -forces.f1df2
    return Coefficients(b1, b2, c1, c2, d, dbar)
