"""Quantumness measures of a two-mode Gaussian state.

Every measure except the Bell search accepts a time-series state (array
coefficients) and returns an array of the same leading shape.

Samples carrying exact coherence matrices (see :mod:`ptquantum.exact`) are
evaluated from exact invariants.  Float samples whose rounding leaves a
measure undetermined raise ``PrecisionLoss``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateCovariance, NonPhysicalState, PrecisionLoss
from .gaussian import (
    ENTRY_EPS,
    FLOAT_ATOL,
    GaussianState,
    covariance,
    k_matrix,
    wigner,
    wigner_form,
)

TSIRELSON = 2.0 * math.sqrt(2.0)
CLASSICAL_BELL = 2.0

# values within this of 2 are round-off of the vacuum-like corner
BELL_ROUNDOFF = 1e-12

# relative tolerance on the symplectic radicand before a state is called unphysical
RADICAND_TOL = 1e-9

QUANTITIES = ("tau", "tau1", "tau2", "en", "s12", "s21", "bell", "n")


def _scalar_or_array(x):
    x = np.asarray(x, dtype=float) + 0.0  # no -0.0
    return float(x) if x.ndim == 0 else x


def _exact_override(state: GaussianState, values, fn):
    """``values`` with every exact sample replaced by ``fn(invariants)``."""
    out = np.array(values, dtype=float)
    if state.exact is None:
        return out
    flat = out.reshape(-1)
    for k, inv in state.exact.items():
        flat[k] = fn(inv)
    return flat.reshape(out.shape)


def _require_resolved(state: GaussianState, unresolved, what: str):
    bad = np.asarray(unresolved) & ~state.exact_mask()
    if np.any(bad):
        worst = float(np.max(np.where(bad, state.scale, 0.0)))
        raise PrecisionLoss(f"{what}: coherence matrix scale {worst:.3g} too large for double precision")


def local_tau(state: GaussianState, mode_index: int):
    """Single-mode nonclassicality depth ``max(0, |C_j| - B_j)``."""
    if mode_index == 1:
        b, c = state.b1, state.c1
    elif mode_index == 2:
        b, c = state.b2, state.c2
    else:
        raise ValueError(f"mode_index must be 1 or 2, got {mode_index}")
    b = np.asarray(b, dtype=float)
    _require_resolved(state, 4.0 * ENTRY_EPS * (1.0 + 2.0 * b) > FLOAT_ATOL, "local depth")
    vals = np.maximum(0.0, np.abs(c) - b)
    vals = _exact_override(state, vals, lambda inv: max(0.0, 0.5 * (1.0 - inv.lam_min_modes[mode_index - 1])))
    return _scalar_or_array(vals)


def global_tau(state: GaussianState):
    """Two-mode depth: largest positive eigenvalue of ``2 K(s=1)``.

    Equivalently ``(1 - lambda_min(sigma)) / 2``, which is how exact samples
    are evaluated.
    """
    _require_resolved(state, state.float_error() > FLOAT_ATOL, "global depth")
    lam = np.linalg.eigvalsh(2.0 * k_matrix(state, 1.0))[..., -1]
    vals = _exact_override(state, np.maximum(0.0, lam), lambda inv: max(0.0, 0.5 * (1.0 - inv.lam_min)))
    return _scalar_or_array(vals)


@dataclass(frozen=True)
class SymplecticData:
    nu_minus: float
    delta_cap: float
    delta_low: float


# relative accuracy of det sigma below which the negativity is trusted as is
DET_RTOL = 1e-6


def _minor(m, r0, r1, c0, c1):
    a, b = m[..., r0, c0] * m[..., r1, c1], m[..., r0, c1] * m[..., r1, c0]
    return a - b, np.abs(a) + np.abs(b)


def _det4(m):
    """LU determinant with a first-order bound for relative entry perturbations.

    The bound is ``|det| * sum_ij |m_ij (m^-1)_ji|``; where the computed
    determinant is not positive the entrywise Hadamard product bound is used.
    """
    det = np.linalg.det(m)
    scale = np.prod(np.linalg.norm(m, axis=-1), axis=-1)
    err = ENTRY_EPS * scale
    ok = det > 0
    if np.any(ok):
        inv = np.linalg.inv(np.where(ok[..., None, None], m, np.eye(4)))
        cond = np.abs(m * np.swapaxes(inv, -1, -2)).sum(axis=(-2, -1))
        err = np.where(ok, ENTRY_EPS * np.abs(det) * cond, err)
    return det, err


def symplectic_data(state: GaussianState) -> SymplecticData:
    """Smallest symplectic eigenvalue of the partially transposed matrix.

    Raises ``PrecisionLoss`` when rounding of the (large) matrix entries
    leaves det sigma undetermined and the state is not certainly separable.
    """
    spt = covariance(state, "pt")
    big, big_err = _det4(spt)
    m1, e1 = _minor(spt, 0, 1, 0, 1)
    m2, e2 = _minor(spt, 2, 3, 2, 3)
    m12, e12 = _minor(spt, 0, 1, 2, 3)
    small = m1 + m2 + 2.0 * m12
    small_err = ENTRY_EPS * (e1 + e2 + 2.0 * e12)

    float_rows = ~state.exact_mask()
    rad = small**2 / 4.0 - big
    rad_err = np.abs(small) * small_err / 2.0 + big_err
    tol = np.maximum(RADICAND_TOL * np.maximum(1.0, small**2 / 4.0), rad_err)
    if np.any((rad < -tol) & float_rows):
        worst = float(np.min(np.where(float_rows, rad, 0.0)))
        raise NonPhysicalState(f"symplectic radicand {worst:.3g} < 0")
    rad = np.maximum(rad, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        nu_plus2 = small / 2.0 + np.sqrt(rad)
        # nu_-^2 = Delta / nu_+^2 avoids cancellation for strongly mixed states
        nu_minus2 = np.maximum(big, 0.0) / nu_plus2
        lower = (big - big_err) / nu_plus2
    resolved = (big_err <= DET_RTOL * np.abs(big)) | (lower >= 1.0)
    bad = ~resolved & float_rows
    if np.any(bad):
        i = np.unravel_index(int(np.argmax(bad)), np.shape(bad)) if np.ndim(bad) else ()
        raise PrecisionLoss(
            f"det sigma = {float(np.asarray(big)[i]):.3g} +- {float(np.asarray(big_err)[i]):.2g}: "
            "coherence matrix too large for double precision"
        )
    # certainly separable float samples may carry an inaccurate nu_- >= 1; any value >= 1 gives E_N = 0
    return SymplecticData(
        nu_minus=_scalar_or_array(_exact_override(state, np.sqrt(nu_minus2), lambda inv: math.sqrt(inv.nu2_pt))),
        delta_cap=_scalar_or_array(_exact_override(state, big, lambda inv: inv.det)),
        delta_low=_scalar_or_array(_exact_override(state, small, lambda inv: inv.delta_pt)),
    )


def negativity(state: GaussianState):
    """Logarithmic negativity ``max(0, -ln nu_-)``."""
    nu = np.asarray(symplectic_data(state).nu_minus)
    with np.errstate(divide="ignore"):
        en = np.maximum(0.0, -np.log(nu))
    return _scalar_or_array(en)


def _direction(direction) -> int:
    """Index of the steering mode for direction strings such as ``1->2``."""
    key = str(direction).replace(" ", "").replace("->", "").replace("→", "")
    if key in ("12", "(1,2)"):
        return 1
    if key in ("21", "(2,1)"):
        return 2
    raise ValueError(f"direction must be 1->2 or 2->1, got {direction!r}")


def steering(state: GaussianState, direction="1->2", formula: str = "default"):
    """Gaussian steering of mode 3-j by mode j.

    ``formula="default"``: ``max(0, ln(det sigma_j / det sigma) / 2)``;
    ``formula="literal"``: ``max(0, det sigma_j / det sigma) / 2``.
    """
    j = _direction(direction)
    if formula not in ("default", "literal"):
        raise ValueError(f"formula must be 'default' or 'literal', got {formula!r}")
    sigma = covariance(state)
    float_rows = ~state.exact_mask()
    full, full_err = _det4(sigma)
    if np.any((full <= 0) & float_rows):
        raise DegenerateCovariance(f"det sigma = {float(np.min(np.where(float_rows, full, np.inf))):.3g}")
    r = 0 if j == 1 else 2
    block, block_err = _minor(sigma, r, r + 1, r, r + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = full_err / np.abs(full) + ENTRY_EPS * block_err / np.abs(block)
        ratio = block / full
    if np.any(~(rel <= DET_RTOL) & float_rows):
        raise PrecisionLoss("steering: det sigma not resolved in double precision")
    ratio = _exact_override(state, ratio, lambda inv: inv.det_modes[j - 1] / inv.det)
    if formula == "literal":
        return _scalar_or_array(np.maximum(0.0, ratio) / 2.0)
    return _scalar_or_array(np.maximum(0.0, 0.5 * np.log(ratio)))


def mean_photon(state: GaussianState):
    n = (
        np.asarray(state.b1, dtype=float)
        + np.asarray(state.b2, dtype=float)
        + np.abs(state.alpha1) ** 2
        + np.abs(state.alpha2) ** 2
    )
    return _scalar_or_array(n)


def parity_mean(state: GaussianState, beta1, beta2):
    """Mean of the displaced parity operator, ``pi^2/4 W(beta1, beta2)``."""
    return (math.pi**2 / 4.0) * wigner(state, beta1, beta2)


def bell_parameter(state: GaussianState, b1, b2, b1p, b2p):
    """CHSH combination of displaced parities."""
    return (
        parity_mean(state, b1, b2)
        + parity_mean(state, b1p, b2)
        + parity_mean(state, b1, b2p)
        - parity_mean(state, b1p, b2p)
    )


@dataclass(frozen=True)
class BellSearchConfig:
    radial_points: int = 12
    angular_points: int = 16
    refine_iterations: int = 60
    radius_factor: float = 1.0
    # extra rings at radius / radial_points * 2^-k, k = 1..geometric_points, for
    # strongly squeezed states whose optimal offsets are far below the ring spacing
    geometric_points: int = 8

    def __post_init__(self):
        if int(self.geometric_points) < 0:
            raise ValueError("geometric_points must be >= 0")
        for name in ("radial_points", "angular_points", "refine_iterations"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.radius_factor > 0:
            raise ValueError("radius_factor must be > 0")


class _ParityForm:
    """Bell combination of the mean-free state as a function of the offsets of beta'.

    With ``u_j = (-Im x_j, Re x_j)`` the Wigner exponent splits into
    ``e1(u1) + e2(u2) + 2 u1^T Q12 u2``, so grids reduce to one matrix product.
    """

    def __init__(self, state: GaussianState):
        q, norm = wigner_form(state)
        self.q11, self.q22, self.q12 = q[:2, :2], q[2:, 2:], q[:2, 2:]
        self.scale = (math.pi**2 / 4.0) * norm

    @staticmethod
    def _u(x):
        x = np.asarray(x, dtype=complex)
        return np.stack([-x.imag, x.real], axis=-1)

    @staticmethod
    def _quad(u, q):
        return u[..., 0] ** 2 * q[0, 0] + 2 * u[..., 0] * u[..., 1] * q[0, 1] + u[..., 1] ** 2 * q[1, 1]

    def bell_grid(self, x1, x2):
        """|B| on the outer product of offset arrays ``x1`` and ``x2``."""
        u1, u2 = self._u(x1), self._u(x2)
        e1 = self._quad(u1, self.q11)
        e2 = self._quad(u2, self.q22)
        cross = 2.0 * (u1 @ self.q12 @ u2.T)
        # the joint exponent is the (non-positive) Wigner form; exp of it never overflows
        joint = np.exp(e1[:, None] + e2[None, :] + cross)
        return np.abs(self.scale * (1.0 + np.exp(e1)[:, None] + np.exp(e2)[None, :] - joint))

    def bell_pairs(self, x1, x2):
        """|B| for paired offsets (same-shape arrays)."""
        u1, u2 = self._u(x1), self._u(x2)
        e1 = self._quad(u1, self.q11)
        e2 = self._quad(u2, self.q22)
        cross = 2.0 * np.einsum("...i,ij,...j->...", u1, self.q12, u2)
        return np.abs(self.scale * (1.0 + np.exp(e1) + np.exp(e2) - np.exp(e1 + e2 + cross)))


def _polar_grid(radius: float, cfg: BellSearchConfig) -> np.ndarray:
    inner = radius / cfg.radial_points * 2.0 ** -np.arange(cfg.geometric_points, 0, -1)
    radii = np.concatenate([inner, radius * np.arange(1, cfg.radial_points + 1) / cfg.radial_points])
    angles = 2.0 * np.pi * np.arange(cfg.angular_points) / cfg.angular_points
    ring = (radii[:, None] * np.exp(1j * angles[None, :])).ravel()
    return np.concatenate([[0.0 + 0.0j], ring])


def _clip_disk(x: np.ndarray, radius: float) -> np.ndarray:
    r = np.abs(x)
    return np.where(r > radius, x * (radius / np.maximum(r, 1e-300)), x)


def bell_max(state: GaussianState, cfg: BellSearchConfig | None = None):
    """Maximal |Bell parameter| with beta on the means and a search over beta'.

    Returns ``(value, (beta1, beta2, beta1p, beta2p))``.  Values not above
    the classical bound are reported as exactly 2.
    """
    cfg = cfg or BellSearchConfig()
    form = _ParityForm(state)
    a1, a2 = complex(state.alpha1), complex(state.alpha2)
    r1 = cfg.radius_factor * 2.0 * math.sqrt(0.5 + float(state.b1))
    r2 = cfg.radius_factor * 2.0 * math.sqrt(0.5 + float(state.b2))

    g1 = _polar_grid(r1, cfg)
    g2 = _polar_grid(r2, cfg)
    vals = form.bell_grid(g1, g2)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    best = float(vals[i, j])
    x1, x2 = g1[i], g2[j]

    # pattern search over (Re, Im) of both offsets; the joint moves matter
    # because moving a single offset away from zero leaves B at exactly 2
    step = max(r1, r2) / cfg.radial_points
    d1 = np.array([1, 1j, 0, 0, -1, -1j, 0, 0, 1, 1, -1, -1, 1j, 1j, -1j, -1j])
    d2 = np.array([0, 0, 1, 1j, 0, 0, -1, -1j, 1, -1, 1, -1, 1j, -1j, 1j, -1j])
    for _ in range(cfg.refine_iterations):
        t1 = _clip_disk(x1 + step * d1, r1)
        t2 = _clip_disk(x2 + step * d2, r2)
        tv = form.bell_pairs(t1, t2)
        k = int(np.argmax(tv))
        if tv[k] > best:
            best = float(tv[k])
            x1, x2 = t1[k], t2[k]
        else:
            step *= 0.5

    args = (a1, a2, a1 + complex(x1), a2 + complex(x2))
    value = best if best > CLASSICAL_BELL + BELL_ROUNDOFF else CLASSICAL_BELL
    return value, args


@dataclass(frozen=True)
class QuantifierSet:
    tau: float
    tau1: float
    tau2: float
    en: float
    s12: float
    s21: float
    bell: float
    n: float

    def as_dict(self) -> dict:
        return asdict(self)


def quantify(
    state: GaussianState,
    bell_cfg: BellSearchConfig | None = None,
    steering_formula: str = "default",
    with_bell: bool = True,
) -> QuantifierSet:
    """All measures at one time point.

    The Bell search is skipped (bell = 2) when ``with_bell`` is false or
    the state is not entangled, since separable states obey the CHSH bound.
    """
    en = negativity(state)
    bell = CLASSICAL_BELL
    if with_bell and en > 0:
        bell = bell_max(state, bell_cfg)[0]
    return QuantifierSet(
        tau=global_tau(state),
        tau1=local_tau(state, 1),
        tau2=local_tau(state, 2),
        en=en,
        s12=steering(state, "1->2", steering_formula),
        s21=steering(state, "2->1", steering_formula),
        bell=bell,
        n=mean_photon(state),
    )
