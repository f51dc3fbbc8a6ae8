"""Coherence matrices of strongly amplified states in scaled-integer arithmetic.

Amplified states have coherence-matrix entries of order B while the
negativity, steering and nonclassicality depths depend on O(1)
eigen-directions.  Double precision loses those once ``eps * B`` reaches
the wanted accuracy, even though each coefficient is itself accurate.

Here sigma is propagated as

    sigma(t + h) = E sigma(t) E^T + Q

with ``E, Q`` from an mpmath Van Loan exponential and sigma held as
integers scaled by ``2**FRAC_BITS``.  Each matrix is reduced to exact
determinants, minors and the adjugate before anything is rounded, so the
derived floats carry only a few ulps of error whatever the size of B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np

from .errors import NonPhysicalState
from .model import SystemConfig, derive_rates

FRAC_BITS = 160
MP_DPS = 80

# upper-triangle order of the stored 10 entries
_UPPER = [(i, j) for i in range(4) for j in range(i, 4)]
_ROW_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def _real_system(config: SystemConfig):
    """Drift ``A`` and diffusion ``N`` of ``d sigma/dt = A sigma + sigma A^T + N``.

    sigma is over (q1, p1, q2, p2) with ``a = q + i p``, scaled so the
    vacuum is the identity.
    """
    r = derive_rates(config)
    eps, kap = mpmath.mpf(config.epsilon), mpmath.mpf(config.kappa)
    g1, g2 = mpmath.mpf(r.gamma1), mpmath.mpf(r.gamma2)
    i = mpmath.mpc(0, 1)
    m = mpmath.matrix(
        [
            [-i * g1, 0, eps, kap],
            [0, -i * g1, -kap, -eps],
            [eps, kap, -i * g2, 0],
            [-kap, -eps, 0, -i * g2],
        ]
    )
    dif = mpmath.zeros(4, 4)
    dif[0, 1], dif[1, 0], dif[2, 3], dif[3, 2] = r.l1, r.l1t, r.l2, r.l2t
    half = mpmath.mpf(1) / 2
    lmat = mpmath.zeros(4, 4)
    linv = mpmath.zeros(4, 4)
    for k in (0, 2):
        lmat[k, k], lmat[k, k + 1], lmat[k + 1, k], lmat[k + 1, k + 1] = 1, i, 1, -i
        linv[k, k], linv[k, k + 1], linv[k + 1, k], linv[k + 1, k + 1] = half, half, -i * half, i * half
    a = linv * (-i * m) * lmat
    nx = linv * dif * linv.T
    drift = mpmath.matrix(4, 4)
    diff = mpmath.matrix(4, 4)
    for p in range(4):
        for q in range(4):
            drift[p, q] = mpmath.re(a[p, q])
            diff[p, q] = 2 * mpmath.re(nx[p, q] + nx[q, p])
    return drift, diff


def _to_int(x) -> int:
    return int(mpmath.nint(mpmath.ldexp(x, FRAC_BITS)))


@lru_cache(maxsize=64)
def step_operator(config: SystemConfig, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Scaled-integer ``(E, Q)`` advancing sigma by time ``h``."""
    with mpmath.workdps(MP_DPS):
        a, n = _real_system(config)
        z = mpmath.zeros(8, 8)
        for p in range(4):
            for q in range(4):
                z[p, q] = a[p, q]
                z[p, q + 4] = n[p, q]
                z[p + 4, q + 4] = -a[q, p]
        x = mpmath.expm(z * mpmath.mpf(h))
        e = x[0:4, 0:4]
        q = x[0:4, 4:8] * e.T
        e_int = np.empty((4, 4), dtype=object)
        q_int = np.empty((4, 4), dtype=object)
        for p in range(4):
            for c in range(4):
                e_int[p, c] = _to_int(e[p, c])
                q_int[p, c] = _to_int((q[p, c] + q[c, p]) / 2)
    return e_int, q_int


def _advance(sigma: np.ndarray, op) -> np.ndarray:
    e, q = op
    prod = e.dot(sigma).dot(e.T)
    shift = 2 * FRAC_BITS
    half = 1 << (shift - 1)
    return np.array([[(v + half) >> shift for v in row] for row in prod], dtype=object) + q


def _identity() -> np.ndarray:
    one = 1 << FRAC_BITS
    return np.array([[one if i == j else 0 for j in range(4)] for i in range(4)], dtype=object)


def _pack(sigma: np.ndarray) -> tuple:
    return tuple(int(sigma[i, j]) for i, j in _UPPER)


def exact_covariances(config: SystemConfig, times) -> list[tuple]:
    """Scaled-integer sigma (10 upper-triangle entries) at each of ``times``.

    The sorted times are reached by repeated steps of the most common
    spacing; a remainder below ``1e-9`` of a step is absorbed, anything
    larger costs one extra exponential.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or not np.all(np.isfinite(times)):
        raise ValueError("times must be finite and >= 0")
    flat = times.ravel()
    order = np.argsort(flat, kind="stable")
    uniq = np.unique(flat)
    gaps = np.diff(np.concatenate([[0.0], uniq]))
    gaps = gaps[gaps > 0]
    h0 = float(np.median(gaps)) if gaps.size else 0.0

    out: list = [None] * flat.size
    sigma = _identity()
    now = 0.0
    for idx in order:
        target = float(flat[idx])
        if h0 > 0:
            n = int(math.floor((target - now) / h0 + 1e-9))
            for _ in range(n):
                sigma = _advance(sigma, step_operator(config, h0))
            now += n * h0
        rest = target - now
        if rest > 1e-9 * max(h0, 1e-300):
            sigma = _advance(sigma, step_operator(config, rest))
            now = target
        out[idx] = _pack(sigma)
    return out


def exact_covariance(config: SystemConfig, t: float) -> tuple:
    """Scaled-integer sigma at a single time."""
    return exact_covariances(config, [t])[0]


def _full(packed) -> list[list[int]]:
    s = [[0] * 4 for _ in range(4)]
    for (i, j), v in zip(_UPPER, packed):
        s[i][j] = s[j][i] = v
    return s


def _ratio(num: int, den: int) -> float:
    # int / int is correctly rounded in Python whatever the operand sizes
    return num / den


def _scaled(n: int, bits: int) -> float:
    return _ratio(n, 1 << bits)


def _det3(s, rows, cols) -> int:
    (r0, r1, r2), (c0, c1, c2) = rows, cols
    return (
        s[r0][c0] * (s[r1][c1] * s[r2][c2] - s[r1][c2] * s[r2][c1])
        - s[r0][c1] * (s[r1][c0] * s[r2][c2] - s[r1][c2] * s[r2][c0])
        + s[r0][c2] * (s[r1][c0] * s[r2][c1] - s[r1][c1] * s[r2][c0])
    )


@dataclass(frozen=True)
class ExactInvariants:
    """Exact-arithmetic quantities of one coherence matrix, rounded to float.

    ``det`` is det sigma (equal for sigma and its partial transpose),
    ``det_modes`` the single-mode block determinants, ``lam_min_modes``
    their smallest eigenvalues, ``delta_pt`` the symplectic invariant of the
    partial transpose, ``nu2_pt`` / ``nu2`` the squared smallest
    symplectic eigenvalues with and without partial transposition, and
    ``inverse`` sigma^-1.
    """

    det: float
    det_modes: tuple
    lam_min_modes: tuple
    delta_pt: float
    nu2_pt: float
    nu2: float
    inverse: np.ndarray

    @property
    def lam_min(self) -> float:
        return 1.0 / float(np.linalg.eigvalsh(self.inverse)[-1])


def _small_root(tr: int, det: int, bits: int) -> float:
    """Smaller root of ``x^2 - tr x + det`` (both roots real, non-negative)."""
    rad = tr * tr - 4 * det
    if rad < 0:
        # only the rounding of sigma can push a double root below zero
        if -rad > (tr * tr) >> 100:
            raise NonPhysicalState("negative discriminant in exact invariants")
        rad = 0
    # tr at scale 2^bits, rad and det at 2^(2 bits)
    trf = _scaled(tr, bits)
    root = math.sqrt(_scaled(rad, 2 * bits))
    return 2.0 * _scaled(det, 2 * bits) / (trf + root)


def invariants(packed) -> ExactInvariants:
    s = _full(packed)
    f = FRAC_BITS
    d1 = s[0][0] * s[1][1] - s[0][1] * s[1][0]
    d2 = s[2][2] * s[3][3] - s[2][3] * s[3][2]
    d12 = s[0][2] * s[1][3] - s[0][3] * s[1][2]
    # Laplace expansion along rows (0, 1)
    det = 0
    for c in _ROW_PAIRS:
        rest = tuple(k for k in range(4) if k not in c)
        top = s[0][c[0]] * s[1][c[1]] - s[0][c[1]] * s[1][c[0]]
        bot = s[2][rest[0]] * s[3][rest[1]] - s[2][rest[1]] * s[3][rest[0]]
        sign = -1 if (c[0] + c[1] + 1) % 2 else 1
        det += sign * top * bot
    if det <= 0:
        raise NonPhysicalState("exact det sigma is not positive")

    # symplectic invariants at scale 2^(2f); det at 2^(4f)
    nu2_pt = _small_root(d1 + d2 - 2 * d12, det, 2 * f)
    nu2 = _small_root(d1 + d2 + 2 * d12, det, 2 * f)
    lam1 = _small_root(s[0][0] + s[1][1], d1, f)
    lam2 = _small_root(s[2][2] + s[3][3], d2, f)

    inv = np.empty((4, 4))
    for i in range(4):
        for j in range(i, 4):
            rows = [k for k in range(4) if k != j]
            cols = [k for k in range(4) if k != i]
            cof = _det3(s, rows, cols) * (-1 if (i + j) % 2 else 1)
            # cofactor at 2^(3f), det at 2^(4f)
            inv[i, j] = inv[j, i] = _ratio(cof << f, det)
    return ExactInvariants(
        det=_scaled(det, 4 * f),
        det_modes=(_scaled(d1, 2 * f), _scaled(d2, 2 * f)),
        lam_min_modes=(lam1, lam2),
        delta_pt=_scaled(d1 + d2 - 2 * d12, 2 * f),
        nu2_pt=nu2_pt,
        nu2=nu2,
        inverse=inv,
    )


def swap_modes(packed) -> tuple:
    """Packed sigma with the two modes exchanged."""
    s = _full(packed)
    perm = (2, 3, 0, 1)
    return tuple(s[perm[i]][perm[j]] for i, j in _UPPER)


def to_float(packed) -> np.ndarray:
    s = _full(packed)
    return np.array([[_scaled(v, FRAC_BITS) for v in row] for row in s])
