"""Brute-force references for the closed forms.

Nothing in here uses the closed-form propagator.  The second moments
``chi_ij = <A_i A_j>`` of ``A = (a1, a1^+, a2, a2^+)`` obey

    d chi / dt = K chi + chi K^T + N,      K = -i M,

where ``N`` holds the delta-correlation strengths of the reservoir noise
(``N[0,1] = l1``, ``N[1,0] = l1~``, ``N[2,3] = l2``, ``N[3,2] = l2~``).
That linear ODE is integrated with fixed-step classical RK4.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import StepTooLarge
from .gaussian import GaussianState, InitialState, covariance, state_at
from .model import SystemConfig, SystemKind, derive_rates
from .propagator import dynamical_matrix

DEFAULT_DT = 1e-4
# growth exponent (amplification rate x time) beyond which doubles become unsafe
MAX_GROWTH = 20.0
# step for the equivalence suite: RK4 truncation stays well under 1e-8 for t <= 10
VERIFY_DT = 2.5e-4


@dataclass(frozen=True)
class MomentMatrix:
    chi: np.ndarray
    means: np.ndarray
    t: float = 0.0
    trajectory: list = field(default_factory=list, repr=False)

    def commutator_residual(self) -> float:
        c1 = self.chi[0, 1] - self.chi[1, 0]
        c2 = self.chi[2, 3] - self.chi[3, 2]
        return float(max(abs(c1 - 1.0), abs(c2 - 1.0)))


def matrix_exponential(m: np.ndarray, t: float = 1.0, order: int = 18) -> np.ndarray:
    """``exp(-i m t)`` by scaling and squaring with a truncated Taylor kernel."""
    a = -1j * np.asarray(m, dtype=complex) * t
    norm = np.abs(a).sum(axis=0).max() if a.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    a = a / 2.0**squarings
    n = a.shape[0]
    result = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, order + 1):
        term = term @ a / k
        result = result + term
    for _ in range(squarings):
        result = result @ result
    return result


def noise_matrix(config: SystemConfig) -> np.ndarray:
    r = derive_rates(config)
    n = np.zeros((4, 4))
    n[0, 1], n[1, 0], n[2, 3], n[3, 2] = r.l1, r.l1t, r.l2, r.l2t
    return n


def initial_moments(init: InitialState) -> tuple[np.ndarray, np.ndarray]:
    """Moments of the coherent state |alpha1, alpha2>."""
    a1, a2 = complex(init.alpha1), complex(init.alpha2)
    means = np.array([a1, a1.conjugate(), a2, a2.conjugate()])
    chi = np.outer(means, means)
    chi[0, 1] += 1.0
    chi[2, 3] += 1.0
    return chi, means


def _growth_exponent(config: SystemConfig, t_end: float) -> float:
    r = derive_rates(config)
    return max(0.0, -r.gamma1, -r.gamma2) * t_end


def _rk4_batch(k, noise, chi, means, t_end, n_steps, sample_every=0):
    """Integrate a batch of moment systems, each with its own step t_end/n_steps."""
    h = (np.asarray(t_end, dtype=float) / max(n_steps, 1))[:, None, None]
    kt = np.swapaxes(k, -1, -2)

    def rhs(x):
        return k @ x + x @ kt + noise

    def kahan(x, comp, inc):
        # compensated x + inc: moments grow large while some differences stay near zero
        y = inc - comp
        s = x + y
        return s, (s - x) - y

    samples = []
    chi_c = np.zeros_like(chi)
    means_c = np.zeros_like(means)
    for step in range(n_steps):
        k1 = rhs(chi)
        k2 = rhs(chi + 0.5 * h * k1)
        k3 = rhs(chi + 0.5 * h * k2)
        k4 = rhs(chi + h * k3)
        chi, chi_c = kahan(chi, chi_c, h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))

        hv = h[:, :, 0]
        m1 = np.einsum("nij,nj->ni", k, means)
        m2 = np.einsum("nij,nj->ni", k, means + 0.5 * hv * m1)
        m3 = np.einsum("nij,nj->ni", k, means + 0.5 * hv * m2)
        m4 = np.einsum("nij,nj->ni", k, means + hv * m3)
        means, means_c = kahan(means, means_c, hv / 6.0 * (m1 + 2 * m2 + 2 * m3 + m4))
        if sample_every and (step + 1) % sample_every == 0:
            samples.append(((step + 1) * h[:, 0, 0], chi.copy(), means.copy()))
    return chi, means, samples


def integrate_moments_batch(
    configs: Sequence[SystemConfig],
    inits: Sequence[InitialState],
    t_ends: Sequence[float],
    dt: float = DEFAULT_DT,
) -> list[MomentMatrix]:
    """RK4 for several trajectories at once.

    All trajectories take the same number of steps, ``ceil(max(t_end)/dt)``,
    so each one uses a step no larger than ``dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    t_ends = np.asarray(t_ends, dtype=float)
    if np.any(t_ends < 0):
        raise ValueError("t_end must be >= 0")
    ks, noises, chis, means = [], [], [], []
    for cfg, init, t_end in zip(configs, inits, t_ends):
        m = dynamical_matrix(derive_rates(cfg), cfg.epsilon, cfg.kappa)
        if dt * np.abs(m).sum(axis=1).max() > 0.1:
            raise StepTooLarge(f"dt * |M| = {dt * np.abs(m).sum(axis=1).max():.3g} > 0.1")
        if _growth_exponent(cfg, t_end) > MAX_GROWTH:
            warnings.warn(
                f"amplification over t={t_end:g} grows moments by exp({2 * _growth_exponent(cfg, t_end):.0f})",
                RuntimeWarning,
                stacklevel=2,
            )
        c0, m0 = initial_moments(init)
        ks.append(-1j * m)
        noises.append(noise_matrix(cfg))
        chis.append(c0)
        means.append(m0)
    n_steps = int(math.ceil(t_ends.max() / dt)) if len(t_ends) and t_ends.max() > 0 else 0
    chi, mean, _ = _rk4_batch(
        np.array(ks), np.array(noises, dtype=complex), np.array(chis), np.array(means), t_ends, n_steps
    )
    return [MomentMatrix(chi[i], mean[i], float(t_ends[i])) for i in range(len(t_ends))]


def integrate_moments(
    config: SystemConfig,
    init: InitialState | None = None,
    t_end: float = 1.0,
    dt: float = DEFAULT_DT,
    sample_every: int = 0,
) -> MomentMatrix:
    """Moments at ``t_end``; with ``sample_every`` > 0 the trajectory is kept.

    The step is ``t_end / ceil(t_end / dt)``.  Trajectory entries are
    ``(t, chi, means)`` tuples.
    """
    init = init or InitialState()
    if t_end < 0 or dt <= 0:
        raise ValueError("need t_end >= 0 and dt > 0")
    m = dynamical_matrix(derive_rates(config), config.epsilon, config.kappa)
    if dt * np.abs(m).sum(axis=1).max() > 0.1:
        raise StepTooLarge(f"dt * |M| = {dt * np.abs(m).sum(axis=1).max():.3g} > 0.1")
    if _growth_exponent(config, t_end) > MAX_GROWTH:
        warnings.warn("moment growth beyond double-precision comfort", RuntimeWarning, stacklevel=2)
    chi0, m0 = initial_moments(init)
    n_steps = int(math.ceil(t_end / dt)) if t_end > 0 else 0
    chi, mean, samples = _rk4_batch(
        (-1j * m)[None],
        noise_matrix(config)[None].astype(complex),
        chi0[None],
        m0[None],
        np.array([t_end]),
        n_steps,
        sample_every,
    )
    traj = [(float(t[0]), c[0], mm[0]) for t, c, mm in samples]
    return MomentMatrix(chi[0], mean[0], float(t_end), traj)


def extract_coefficients(moments: MomentMatrix) -> GaussianState:
    chi, m = moments.chi, moments.means
    a1, a2 = m[0], m[2]
    return GaussianState(
        alpha1=complex(a1),
        alpha2=complex(a2),
        b1=float((chi[1, 0] - np.conj(a1) * a1).real),
        b2=float((chi[3, 2] - np.conj(a2) * a2).real),
        c1=complex(chi[0, 0] - a1 * a1),
        c2=complex(chi[2, 2] - a2 * a2),
        d=complex(chi[0, 2] - a1 * a2),
        dbar=complex(-(chi[1, 2] - np.conj(a1) * a2)),
    )


def wigner_by_fourier(state: GaussianState, beta1: complex, beta2: complex, n: int = 40) -> float:
    """Wigner function as the numerical Fourier transform of the s=0 characteristic function.

    ``W(b) = pi^-4 int d^2x1 d^2x2 exp(sum_j b_j x_j^* - b_j^* x_j) C_W(x)``
    with ``C_W = C_N * exp(-(|x1|^2 + |x2|^2)/2)``, integrated by a
    Gauss-Legendre tensor rule on a box covering 6 widths of ``C_W``.
    Slow (n^4 points); meant for spot checks.
    """
    b1, b2 = state.b1, state.b2
    c1, c2, d, db = state.c1, state.c2, state.d, state.dbar
    # |C_W| = exp(-x^T sigma x / 2); the widest direction has width 1/sqrt(lambda_min)
    lam_min = float(np.linalg.eigvalsh(covariance(state)).min())
    half = 6.0 / math.sqrt(lam_min)
    nodes, weights = np.polynomial.legendre.leggauss(n)
    x = nodes * half
    wx = weights * half
    x1r, x1i, x2r, x2i = np.meshgrid(x, x, x, x, indexing="ij", sparse=True)
    w = (
        wx[:, None, None, None]
        * wx[None, :, None, None]
        * wx[None, None, :, None]
        * wx[None, None, None, :]
    )
    mu1 = x1r + 1j * x1i
    mu2 = x2r + 1j * x2i
    a1, a2 = state.alpha1, state.alpha2
    expo = (
        (np.conj(a1) * mu1 - a1 * np.conj(mu1))
        + (np.conj(a2) * mu2 - a2 * np.conj(mu2))
        - (b1 + 0.5) * np.abs(mu1) ** 2
        - (b2 + 0.5) * np.abs(mu2) ** 2
        + (c1 * np.conj(mu1) ** 2 + np.conj(c1) * mu1**2) / 2
        + (c2 * np.conj(mu2) ** 2 + np.conj(c2) * mu2**2) / 2
        + 2 * np.real(d * np.conj(mu1) * np.conj(mu2) + db * mu1 * np.conj(mu2))
    )
    kernel = beta1 * np.conj(mu1) - np.conj(beta1) * mu1 + beta2 * np.conj(mu2) - np.conj(beta2) * mu2
    val = np.sum(w * np.exp(expo + kernel))
    return float(val.real / math.pi**4)


@dataclass
class VerificationReport:
    max_rel_deviation: float
    worst_case: dict
    n_cases: int
    tolerance: float
    max_commutator_residual: float
    rows: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return self.max_rel_deviation <= self.tolerance


COEFFICIENT_NAMES = ("b1", "b2", "c1", "c2", "d", "dbar")


def coefficient_deviation(closed: GaussianState, oracle: GaussianState, floor: float = 1e-2) -> float:
    """Largest relative deviation over the six coefficients and both means.

    Magnitudes below ``floor`` are measured against ``floor``, so a relative
    tolerance of 1e-8 becomes an absolute 1e-10 near zero.
    """
    worst = 0.0
    for name in COEFFICIENT_NAMES + ("alpha1", "alpha2"):
        a = complex(np.asarray(getattr(closed, name)))
        b = complex(np.asarray(getattr(oracle, name)))
        worst = max(worst, abs(a - b) / max(abs(b), floor))
    return worst


def verification_cases(n_random: int = 200, n_ep: int = 10, seed: int = 20240615):
    """Random draws plus exact-EP points, as (config, init, t) triples."""
    rng = np.random.default_rng(seed)
    kinds = list(SystemKind)
    cases = []
    for _ in range(n_random):
        kind = kinds[rng.integers(len(kinds))]
        cfg = SystemConfig(kappa=rng.uniform(0.0, 1.2), gamma=rng.uniform(0.0, 1.0), kind=kind)
        alpha = InitialState(complex(*rng.normal(0, 0.5, 2)), complex(*rng.normal(0, 0.5, 2)))
        cases.append((cfg, alpha, float(rng.uniform(0.0, 10.0))))
    for i in range(n_ep):
        kind = kinds[i % len(kinds)]
        kap = float(rng.uniform(0.05, 0.95))
        # gamma_minus = sqrt(1 - kap^2) on the EP; single-channel variants have gamma_minus = gamma/2
        gm = math.sqrt(1.0 - kap**2)
        gamma = 2 * gm if kind in (SystemKind.DAMPED_ONLY, SystemKind.AMPLIFIED_ONLY) else gm
        cfg = SystemConfig(kappa=kap, gamma=gamma, kind=kind)
        cases.append((cfg, InitialState(), float(rng.uniform(0.5, 10.0))))
    return cases


def verify_closed_forms(
    n_random: int = 200,
    n_ep: int = 10,
    seed: int = 20240615,
    dt: float = VERIFY_DT,
    tolerance: float = 1e-8,
) -> VerificationReport:
    """Compare the closed-form state against the RK4 oracle on random and EP draws."""
    cases = verification_cases(n_random, n_ep, seed)
    configs, inits, times = zip(*cases)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        moments = integrate_moments_batch(configs, inits, times, dt=dt)
    rows = []
    worst, worst_case, comm = 0.0, {}, 0.0
    for (cfg, init, t), mm in zip(cases, moments):
        ref = extract_coefficients(mm)
        got = state_at(cfg, init, t, exact=False)
        dev = coefficient_deviation(got, ref)
        comm = max(comm, mm.commutator_residual())
        row = {"kind": cfg.kind.value, "gamma": cfg.gamma, "kappa": cfg.kappa, "t": t, "deviation": dev}
        rows.append(row)
        if dev > worst:
            worst, worst_case = dev, row
    return VerificationReport(worst, worst_case, len(cases), tolerance, comm, rows)
