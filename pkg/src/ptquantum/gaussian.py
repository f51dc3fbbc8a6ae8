"""Gaussian states of the two modes: coefficients, coherence matrices, Wigner function.

A state is identified by its mean amplitudes and the normally ordered
fluctuation moments

    B_j = <da_j^+ da_j>,  C_j = <da_j^2>,  D = <da1 da2>,  Dbar = -<da1^+ da2>.

Coherence matrices use the quadratures ``q = (a + a^+)/2``,
``p = (a - a^+)/(2i)`` scaled so the vacuum is the identity; the
uncertainty relation then reads ``sigma + i Omega >= 0``.

All coefficient fields may be numpy arrays of a common shape (a time
series); the functions here broadcast over that leading shape.

Samples whose coherence matrix is large (strong amplification) can carry
scaled-integer matrices from :mod:`ptquantum.exact`; measures of such
samples are computed from exact invariants instead of the rounded entries.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import exact as _exact
from .errors import PrecisionLoss, SingularKMatrix
from .model import EP_THRESHOLD, SystemConfig, derive_rates
from .propagator import closed_form_coefficients, propagator_matrices

OMEGA = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))

# samples with 1 + 2 max(B1, B2) above this get exact matrices in state_at
EXACT_SCALE = 1e4

# relative rounding error assumed for coherence-matrix entries (the closed
# forms carry a few ulps more than a single rounding)
ENTRY_EPS = 8 * np.finfo(float).eps

# absolute accuracy demanded of eigenvalue-type measures computed in floats
FLOAT_ATOL = 1e-9

# coordinate map (q, p) -> (-p, q) on each mode
_ROTATE = np.kron(np.eye(2), np.array([[0.0, -1.0], [1.0, 0.0]]))


class ExactMoments:
    """Scaled-integer coherence matrices for some samples of a state.

    ``packed`` is an object array shaped like the state holding either
    ``None`` or the packed matrix from :func:`ptquantum.exact.exact_covariances`.
    Invariants are computed on first use and cached.
    """

    def __init__(self, packed):
        if not isinstance(packed, np.ndarray):
            scalar = np.empty((), dtype=object)
            scalar[()] = packed
            packed = scalar
        self.packed = packed
        self._cache: dict = {}

    @property
    def mask(self) -> np.ndarray:
        flat = [p is not None for p in self.packed.ravel()]
        return np.array(flat, dtype=bool).reshape(self.packed.shape)

    def items(self):
        """``(flat index, invariants)`` for every sample with an exact matrix."""
        for k, p in enumerate(self.packed.ravel()):
            if p is not None:
                yield k, self.invariants(k)

    def invariants(self, flat_index: int) -> "_exact.ExactInvariants":
        if flat_index not in self._cache:
            self._cache[flat_index] = _exact.invariants(self.packed.ravel()[flat_index])
        return self._cache[flat_index]

    def __getitem__(self, index) -> "ExactMoments | None":
        p = self.packed[index]
        if isinstance(p, np.ndarray):
            return ExactMoments(p)
        return None if p is None else ExactMoments(p)

    def swapped(self) -> "ExactMoments":
        out = np.empty(self.packed.shape, dtype=object)
        for idx, p in np.ndenumerate(self.packed):
            out[idx] = None if p is None else _exact.swap_modes(p)
        return ExactMoments(out)


@dataclass(frozen=True)
class InitialState:
    """Coherent amplitudes at t = 0 (vacuum by default)."""

    alpha1: complex = 0j
    alpha2: complex = 0j

    def __post_init__(self):
        for name in ("alpha1", "alpha2"):
            value = complex(getattr(self, name))
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class GaussianState:
    alpha1: complex = 0j
    alpha2: complex = 0j
    b1: float = 0.0
    b2: float = 0.0
    c1: complex = 0j
    c2: complex = 0j
    d: complex = 0j
    dbar: complex = 0j
    exact: ExactMoments | None = field(default=None, compare=False, repr=False)

    @property
    def shape(self) -> tuple:
        return np.shape(self.b1)

    def at(self, index) -> "GaussianState":
        """One element of a time series as a scalar state."""
        vals = {}
        for f in fields(self):
            if f.name == "exact":
                continue
            v = np.asarray(getattr(self, f.name))
            v = v[index] if v.ndim else v
            vals[f.name] = float(v) if f.name in ("b1", "b2") else complex(v)
        ex = None
        if self.exact is not None:
            ex = self.exact[index] if self.exact.packed.ndim else self.exact
            ex = ex if ex is not None and ex.mask else None
        return GaussianState(**vals, exact=ex)

    def swapped(self) -> "GaussianState":
        """The same state with the mode labels exchanged."""
        # <da2^+ da1> = conj(<da1^+ da2>) so Dbar -> conj(Dbar)
        return GaussianState(
            self.alpha2,
            self.alpha1,
            self.b2,
            self.b1,
            self.c2,
            self.c1,
            self.d,
            np.conj(self.dbar),
            exact=None if self.exact is None else self.exact.swapped(),
        )

    def float_error(self):
        """Rounding-error estimate of O(1) eigenvalues computed from float entries."""
        return 4.0 * ENTRY_EPS * self.scale

    @property
    def scale(self):
        """Largest single-mode variance ``1 + 2 max(B1, B2)``, per sample."""
        return 1.0 + 2.0 * np.maximum(np.asarray(self.b1, dtype=float), np.asarray(self.b2, dtype=float))

    def exact_mask(self) -> np.ndarray:
        """Samples whose measures come from exact matrices."""
        if self.exact is None:
            return np.zeros(self.shape, dtype=bool)
        return self.exact.mask


def state_at(
    config: SystemConfig,
    init: InitialState | None = None,
    t=0.0,
    ep_threshold: float = EP_THRESHOLD,
    exact="auto",
) -> GaussianState:
    """Gaussian state at time(s) ``t`` for an initial coherent state.

    ``exact`` selects which samples also get scaled-integer coherence
    matrices: ``"auto"`` those with ``scale > EXACT_SCALE``, ``True`` all,
    ``False`` none.
    """
    if exact not in ("auto", True, False):
        raise ValueError(f"exact must be 'auto', True or False, got {exact!r}")
    init = init or InitialState()
    rates = derive_rates(config)
    eps, kap = config.epsilon, config.kappa
    co = closed_form_coefficients(rates, eps, kap, t, ep_threshold)
    prop = propagator_matrices(rates, eps, kap, t, ep_threshold)
    a0 = np.array([init.alpha1, init.alpha2])
    means = prop.u @ a0 + prop.v @ np.conj(a0)
    state = GaussianState(
        alpha1=means[..., 0],
        alpha2=means[..., 1],
        b1=np.asarray(co.b1, dtype=float),
        b2=np.asarray(co.b2, dtype=float),
        c1=co.c1,
        c2=co.c2,
        d=co.d,
        dbar=co.dbar,
    )
    if exact is False:
        return state
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), state.shape)
    flag = np.ones(state.shape, dtype=bool) if exact is True else ~(state.scale <= EXACT_SCALE)
    if not np.any(flag):
        return state
    packed = np.empty(state.shape, dtype=object)
    found = _exact.exact_covariances(config, t_arr[flag])
    for idx, p in zip(np.argwhere(flag), found):
        packed[tuple(idx)] = p
    return dataclasses.replace(state, exact=ExactMoments(packed))


def _single_mode_block(b, c, sign=1.0):
    b, c = np.asarray(b, dtype=float), np.asarray(c, dtype=complex)
    out = np.empty(np.broadcast(b, c).shape + (2, 2))
    out[..., 0, 0] = 1 + 2 * b + 2 * c.real
    out[..., 1, 1] = 1 + 2 * b - 2 * c.real
    out[..., 0, 1] = out[..., 1, 0] = sign * 2 * c.imag
    return out


def covariance(state: GaussianState, flavor: str = "plain") -> np.ndarray:
    """4x4 coherence matrix over (q1, p1, q2, p2).

    ``flavor="pt"`` gives the matrix of the state partially transposed in
    mode 2, i.e. of (q1, p1, q2, -p2).
    """
    if flavor not in ("plain", "pt"):
        raise ValueError(f"flavor must be 'plain' or 'pt', got {flavor!r}")
    pt = flavor == "pt"
    shape = np.broadcast(state.b1, state.b2, state.c1, state.c2, state.d, state.dbar).shape
    sigma = np.zeros(shape + (4, 4))
    sigma[..., :2, :2] = _single_mode_block(state.b1, state.c1)
    sigma[..., 2:, 2:] = _single_mode_block(state.b2, state.c2, -1.0 if pt else 1.0)
    d, db = np.asarray(state.d, dtype=complex), np.asarray(state.dbar, dtype=complex)
    cross = np.empty(shape + (2, 2))
    cross[..., 0, 0] = 2 * (d - db).real
    cross[..., 0, 1] = 2 * (d - db).imag * (-1.0 if pt else 1.0)
    cross[..., 1, 0] = 2 * (d + db).imag
    cross[..., 1, 1] = 2 * (d + db).real * (1.0 if pt else -1.0)
    sigma[..., :2, 2:] = cross
    sigma[..., 2:, :2] = np.swapaxes(cross, -1, -2)
    return sigma


def uncertainty_margin(sigma: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of ``sigma + i Omega`` (>= 0 for physical states)."""
    return np.linalg.eigvalsh(sigma + 1j * OMEGA).min(axis=-1)


def _exact_margin(inv: "_exact.ExactInvariants", sigma: np.ndarray) -> float:
    if inv.nu2 < 1.0 - FLOAT_ATOL:
        # violated uncertainty relation: the negative eigenvalue is far above rounding
        return float(uncertainty_margin(sigma))
    # sigma + i Omega >= 0 here; its inverse sigma^-1 (1 + i Omega sigma^-1)^-1 is
    # O(1) where sigma is huge, and its largest eigenvalue is 1/margin
    try:
        h_inv = inv.inverse @ np.linalg.inv(np.eye(4) + 1j * OMEGA @ inv.inverse)
    except np.linalg.LinAlgError:
        return 0.0  # pure state: a zero eigenvalue
    top = float(np.linalg.eigvalsh(0.5 * (h_inv + h_inv.conj().T))[-1])
    return 1.0 / top


def state_margin(state: GaussianState):
    """:func:`uncertainty_margin` of a state, exact where the state carries exact matrices.

    Raises ``PrecisionLoss`` for float samples too large to decide.
    """
    sigma = covariance(state)
    out = np.asarray(uncertainty_margin(sigma), dtype=float).copy()
    bad = (state.float_error() > FLOAT_ATOL) & ~state.exact_mask()
    if np.any(bad):
        worst = float(np.max(np.where(bad, state.scale, 0.0)))
        raise PrecisionLoss(f"coherence matrix scale {worst:.3g} too large for a double-precision margin")
    if state.exact is not None:
        flat = out.reshape(-1)
        sig = sigma.reshape(-1, 4, 4)
        for k, inv in state.exact.items():
            flat[k] = _exact_margin(inv, sig[k])
        out = flat.reshape(out.shape)
    return float(out) if out.ndim == 0 else out


def k_matrix(state: GaussianState, s: float = 0.0) -> np.ndarray:
    """Quadratic-form matrix of the s-ordered characteristic function.

    Ordering (beta1, beta1*, beta2, beta2*), with the conventional 1/2
    prefactor.  The C_j entries are placed consistently with the D, Dbar
    cross terms of the normal characteristic function; the matrix is
    Hermitian.
    """
    if not -1.0 <= s <= 1.0:
        raise ValueError("ordering parameter s must lie in [-1, 1]")
    b1s = (1 - s) / 2 + np.asarray(state.b1, dtype=float)
    b2s = (1 - s) / 2 + np.asarray(state.b2, dtype=float)
    c1, c2 = np.asarray(state.c1, dtype=complex), np.asarray(state.c2, dtype=complex)
    d, db = np.asarray(state.d, dtype=complex), np.asarray(state.dbar, dtype=complex)
    k = np.empty(np.broadcast(b1s, b2s, c1, c2, d, db).shape + (4, 4), dtype=complex)
    cj = np.conj
    rows = [
        [-b1s, c1, cj(db), d],
        [cj(c1), -b1s, cj(d), db],
        [db, d, -b2s, c2],
        [cj(d), cj(db), cj(c2), -b2s],
    ]
    for i, row in enumerate(rows):
        for j, entry in enumerate(row):
            k[..., i, j] = entry
    return 0.5 * k


def k_real(state: GaussianState) -> np.ndarray:
    """Real s=0 matrix over (Re, Im) parts of the two phase-space arguments.

    Equals ``-sigma/2`` written in the coordinates (-p1, q1, -p2, q2), which
    is the ordering :func:`wigner` feeds it.
    """
    b1s = 0.5 + np.asarray(state.b1, dtype=float)
    b2s = 0.5 + np.asarray(state.b2, dtype=float)
    c1, c2 = np.asarray(state.c1, dtype=complex), np.asarray(state.c2, dtype=complex)
    d, db = np.asarray(state.d, dtype=complex), np.asarray(state.dbar, dtype=complex)
    sp, sm = d + db, d - db
    k = np.empty(np.broadcast(b1s, b2s, c1, c2, d, db).shape + (4, 4))
    k[..., 0, 0] = -b1s + c1.real
    k[..., 1, 1] = -b1s - c1.real
    k[..., 0, 1] = k[..., 1, 0] = c1.imag
    k[..., 2, 2] = -b2s + c2.real
    k[..., 3, 3] = -b2s - c2.real
    k[..., 2, 3] = k[..., 3, 2] = c2.imag
    k[..., 0, 2] = k[..., 2, 0] = sp.real
    k[..., 0, 3] = k[..., 3, 0] = sp.imag
    k[..., 1, 2] = k[..., 2, 1] = sm.imag
    k[..., 1, 3] = k[..., 3, 1] = -sm.real
    return k


def phase_vector(x1, x2) -> np.ndarray:
    """Map complex displacements to the coordinate vector used with :func:`k_real`."""
    x1, x2 = np.asarray(x1, dtype=complex), np.asarray(x2, dtype=complex)
    return np.stack(np.broadcast_arrays(-x1.imag, x1.real, -x2.imag, x2.real), axis=-1)


def wigner_form(state: GaussianState) -> tuple[np.ndarray, float]:
    """``(Q, norm)`` with ``W = norm * exp(a^T Q a)`` for the mean-free state."""
    if state.shape != ():
        raise ValueError("wigner_form needs a single (scalar) state")
    if state.exact is not None and state.exact_mask():
        inv = state.exact.invariants(0)
        # K = -T sigma T^T / 2 with orthogonal T, so K^-1 = -2 T sigma^-1 T^T
        q = -2.0 * _ROTATE @ inv.inverse @ _ROTATE.T
        return q, 4.0 / (math.pi**2 * math.sqrt(inv.det))
    k = k_real(state)
    if ENTRY_EPS * np.linalg.cond(k) > 1e-8:
        raise PrecisionLoss("K matrix too ill-conditioned for double precision")
    det = float(np.linalg.det(k))
    if abs(det) < 1e-30:
        raise SingularKMatrix(f"det K = {det:.3g}")
    if det <= 0:
        raise SingularKMatrix(f"det K = {det:.3g} is not positive; state is unphysical")
    return np.linalg.inv(k), 1.0 / (math.pi**2 * math.sqrt(det))


def wigner(state: GaussianState, beta1, beta2):
    """Two-mode Wigner function at (beta1, beta2); broadcasts over the betas."""
    q, norm = wigner_form(state)
    a = phase_vector(np.asarray(beta1) - state.alpha1, np.asarray(beta2) - state.alpha2)
    val = norm * np.exp(np.einsum("...i,ij,...j->...", a, q, a))
    return float(val) if np.ndim(val) == 0 else val
