import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from conftest import random_states, tmsv
from ptquantum import (
    GaussianState,
    InitialState,
    PrecisionLoss,
    SystemConfig,
    covariance,
    k_matrix,
    k_real,
    state_at,
    state_margin,
    uncertainty_margin,
    wigner,
)
from ptquantum import exact as ex
from ptquantum.gaussian import EXACT_SCALE, OMEGA, _ROTATE, wigner_form
from ptquantum.oracle import extract_coefficients, integrate_moments, wigner_by_fourier

VAC = GaussianState()


# ------------------------------------------------------------- state_at


def test_vacuum_at_zero_time():
    s = state_at(SystemConfig(0.5, 0.3), None, 0.0)
    for name in ("alpha1", "alpha2", "b1", "b2", "c1", "c2", "d", "dbar"):
        assert abs(complex(getattr(s, name))) == 0


def test_lossless_quarter_period_coefficients():
    mu = math.sqrt(0.75)
    s = state_at(SystemConfig(0.5, 0.0), None, math.pi / (2 * mu))
    assert s.b1 == pytest.approx(1 / 3, rel=1e-13) and s.b2 == pytest.approx(1 / 3, rel=1e-13)
    assert complex(s.c1) == pytest.approx(-2 / 3, rel=1e-13)
    assert complex(s.c2) == pytest.approx(-2 / 3, rel=1e-13)
    assert abs(complex(s.d)) < 1e-13 and abs(complex(s.dbar)) < 1e-13


def test_near_critical_coupling_matches_oracle():
    cfg = SystemConfig(0.999, 0.0)
    t = 3.0
    ref = extract_coefficients(integrate_moments(cfg, None, t, dt=2.5e-4))
    got = state_at(cfg, None, t)
    for name in ("b1", "b2", "c1", "c2", "d", "dbar"):
        assert complex(getattr(got, name)) == pytest.approx(complex(getattr(ref, name)), rel=1e-9, abs=1e-11)


def test_coherent_amplitudes_follow_propagator():
    cfg = SystemConfig(0.0, 0.0)
    s = state_at(cfg, InitialState(1.0, 0.0), math.pi / 2)
    # beam splitter: a1(t) = cos t a1 - i sin t a2
    assert complex(s.alpha1) == pytest.approx(0, abs=1e-15)
    assert complex(s.alpha2) == pytest.approx(-1j, abs=1e-15)
    assert float(s.b1) == pytest.approx(0, abs=1e-15)


def test_series_matches_pointwise_evaluation():
    cfg = SystemConfig(0.7, 0.2, "d")
    t = np.linspace(0, 5, 6)
    series = state_at(cfg, InitialState(0.3 + 0.1j, -0.2j), t)
    for i, ti in enumerate(t):
        point = state_at(cfg, InitialState(0.3 + 0.1j, -0.2j), ti)
        assert series.at(i) == point


def test_state_at_rejects_bad_exact_flag():
    with pytest.raises(ValueError):
        state_at(SystemConfig(0.5, 0.3), None, 1.0, exact="yes")


# ------------------------------------------------------------ covariance


def test_vacuum_covariance_is_identity():
    assert np.array_equal(covariance(VAC), np.eye(4))
    assert np.array_equal(covariance(VAC, "pt"), np.eye(4))


def test_single_mode_block():
    sigma = covariance(GaussianState(b1=1.0, c1=0.5))
    assert sigma[:2, :2] == pytest.approx(np.diag([4.0, 2.0]))
    assert sigma[2:, 2:] == pytest.approx(np.eye(2))


def test_two_mode_squeezed_pattern():
    r = 0.4
    sigma = covariance(tmsv(r))
    off = 2 * math.sinh(r) * math.cosh(r)
    assert sigma[:2, 2:] == pytest.approx(off * np.array([[0, -1], [-1, 0]]))
    assert sigma[:2, :2] == pytest.approx(math.cosh(2 * r) * np.eye(2))
    assert uncertainty_margin(sigma) == pytest.approx(0, abs=1e-12)


def test_covariance_rejects_unknown_flavor():
    with pytest.raises(ValueError):
        covariance(VAC, "weird")


def test_covariance_matches_reference():
    for cfg, t in [(SystemConfig(0.5, 0.3), 2.0), (SystemConfig(1.1, 0.4, "a"), 4.0), (SystemConfig(0.2, 0.9, "dd"), 6.0)]:
        ref = reference.to_numpy(reference.covariance(cfg, t))
        got = covariance(state_at(cfg, None, t))
        assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))


def test_partial_transpose_flips_p2():
    s = state_at(SystemConfig(0.6, 0.2), None, 1.3)
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    assert covariance(s, "pt") == pytest.approx(flip @ covariance(s) @ flip)


def test_lossless_states_stay_pure():
    cfg = SystemConfig(0.7, 0.0)
    s = state_at(cfg, None, np.linspace(0, 6, 13))
    dets = np.linalg.det(covariance(s))
    assert dets == pytest.approx(np.ones_like(dets), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_generated_states_satisfy_uncertainty(seed):
    for _, _, s in random_states(3, seed, t_max=6.0):
        assert state_margin(s) >= -1e-9


# -------------------------------------------------------------- K matrices


def test_k_matrix_vacuum():
    assert k_matrix(VAC, 0.0) == pytest.approx(-0.25 * np.eye(4))
    assert not np.any(k_matrix(VAC, 1.0))


def test_k_matrix_antinormal_block_eigenvalues():
    s = GaussianState(b1=1 / 3, c1=-2 / 3)
    ev = np.linalg.eigvalsh(k_matrix(s, 1.0)[:2, :2])
    assert ev == pytest.approx([-1 / 2, 1 / 6])


def test_k_matrix_rejects_bad_order():
    with pytest.raises(ValueError):
        k_matrix(VAC, 1.5)


def test_k_matrix_is_hermitian():
    s = state_at(SystemConfig(0.6, 0.4, "a"), None, 2.5)
    k = k_matrix(s, 0.3)
    assert np.allclose(k, k.conj().T)


def test_k_real_examples():
    assert k_real(VAC) == pytest.approx(-0.5 * np.eye(4))
    k = k_real(GaussianState(b1=0.5))
    assert k[:2, :2] == pytest.approx(-np.eye(2)) and k[2:, 2:] == pytest.approx(-0.5 * np.eye(2))


def test_k_real_is_rotated_covariance():
    for _, _, s in random_states(10, 3):
        assert k_real(s) == pytest.approx(-0.5 * _ROTATE @ covariance(s) @ _ROTATE.T, rel=1e-12, abs=1e-12)
        assert np.max(np.linalg.eigvalsh(k_real(s))) < 0


# ----------------------------------------------------------------- Wigner


def test_wigner_vacuum_values():
    assert wigner(VAC, 0, 0) == pytest.approx(4 / math.pi**2, rel=1e-15)
    assert wigner(VAC, 1, 0) == pytest.approx(4 / math.pi**2 * math.exp(-2), rel=1e-14)


def test_wigner_follows_coherent_amplitude():
    s = GaussianState(alpha1=0.3 - 0.2j, alpha2=0.5j)
    assert wigner(s, 0.3 - 0.2j, 0.5j) == pytest.approx(4 / math.pi**2)


def test_wigner_matches_fourier_transform():
    s = state_at(SystemConfig(0.5, 0.2, "d"), InitialState(0.2, -0.1j), 0.8)
    for b1, b2 in [(0, 0), (0.3 + 0.1j, -0.2), (0.1j, 0.4 - 0.3j)]:
        assert wigner(s, b1, b2) == pytest.approx(wigner_by_fourier(s, b1, b2, n=30), abs=1e-3)


def test_wigner_normalised():
    s = state_at(SystemConfig(0.4, 0.1), None, 1.0)
    nodes, weights = np.polynomial.hermite.hermgauss(24)
    # W / Gaussian weight is smooth; integrate against exp(-x^2) in each axis
    x = nodes * 0.9
    w = weights * 0.9
    g = np.meshgrid(x, x, x, x, indexing="ij")
    vals = wigner(s, g[0] + 1j * g[1], g[2] + 1j * g[3]) * np.exp(sum((gi / 0.9) ** 2 for gi in g))
    total = np.einsum("ijkl,i,j,k,l->", vals, w, w, w, w)
    assert total == pytest.approx(1.0, rel=1e-6)


def test_wigner_of_series_requires_scalar():
    s = state_at(SystemConfig(0.4, 0.1), None, [0.5, 1.0])
    with pytest.raises(ValueError):
        wigner(s, 0, 0)
    assert wigner(s.at(1), 0, 0) > 0


# ------------------------------------------------------- exact sample path


def _big_state(t=15.0, exact="auto"):
    return SystemConfig(0.9, 1.0, "ad"), state_at(SystemConfig(0.9, 1.0, "ad"), None, t, exact=exact)


def test_exact_matrix_matches_closed_form():
    for cfg, t in [(SystemConfig(0.5, 0.3), 2.0), (SystemConfig(0.9, 1.0, "aa"), 3.0), (SystemConfig(0.8, 1.2, "d"), 5.0)]:
        s = state_at(cfg, None, t, exact=True)
        sig = ex.to_float(s.exact.packed[()])
        assert np.max(np.abs(sig - covariance(s))) <= 1e-12 * np.max(np.abs(sig))


def test_exact_matrix_matches_reference_when_huge():
    cfg, s = _big_state()
    assert s.scale > EXACT_SCALE and s.exact_mask()
    ref = reference.to_numpy(reference.covariance(cfg, 15.0))
    sig = ex.to_float(s.exact.packed[()])
    assert np.max(np.abs(sig - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_exact_invariants_match_reference():
    # amplified yet entangled and steerable: the O(1) structure sits under entries of 1e5
    cfg = SystemConfig(1.1, 0.5, "d")
    s = state_at(cfg, None, 20.0)
    assert s.exact_mask()
    inv = s.exact.invariants(0)
    ref = reference.measures(cfg, 20.0)
    assert inv.det == pytest.approx(ref["det"], rel=1e-12)
    assert 0.5 * (1 - inv.lam_min) == pytest.approx(ref["tau"], rel=1e-9)
    assert -0.5 * math.log(inv.nu2_pt) == pytest.approx(ref["en"], rel=1e-9)
    assert 0.5 * math.log(inv.det_modes[1] / inv.det) == pytest.approx(ref["s21"], rel=1e-9)


def test_exact_series_matches_single_time():
    cfg = SystemConfig(0.9, 1.0, "ad")
    t = np.linspace(0, 15, 31)
    series = state_at(cfg, None, t, exact=True)
    one = ex.to_float(ex.exact_covariance(cfg, t[-1]))
    assert np.max(np.abs(ex.to_float(series.exact.packed[-1]) - one)) <= 1e-14 * np.max(np.abs(one))
    assert series.exact_mask().all()


def test_auto_flags_only_large_samples():
    cfg = SystemConfig(0.9, 1.0, "ad")
    t = np.linspace(0, 15, 16)
    s = state_at(cfg, None, t)
    assert np.array_equal(s.exact_mask(), s.scale > EXACT_SCALE)
    assert s.at(0).exact is None and s.at(15).exact is not None


def test_swapped_state_swaps_exact_data():
    _, s = _big_state()
    inv, sw = s.exact.invariants(0), s.swapped().exact.invariants(0)
    assert sw.det_modes == inv.det_modes[::-1]
    assert sw.det == inv.det
    assert covariance(s.swapped()) == pytest.approx(np.roll(np.roll(covariance(s), 2, 0), 2, 1))


def test_margin_of_huge_float_state_is_refused():
    _, s = _big_state(exact=False)
    with pytest.raises(PrecisionLoss):
        state_margin(s)


def test_margin_of_huge_state_uses_exact_matrix():
    _, s = _big_state()
    m = state_margin(s)
    assert m >= 0
    # margin agrees with the float value at a modest time where both apply
    _, small = _big_state(t=3.0, exact=True)
    _, small_f = _big_state(t=3.0, exact=False)
    assert state_margin(small) == pytest.approx(state_margin(small_f), rel=1e-6, abs=1e-12)


def test_wigner_form_exact_matches_float():
    cfg = SystemConfig(0.5, 0.2, "d")
    se, sf = state_at(cfg, None, 0.5, exact=True), state_at(cfg, None, 0.5, exact=False)
    qe, ne = wigner_form(se)
    qf, nf = wigner_form(sf)
    assert qe == pytest.approx(qf, rel=1e-12, abs=1e-14)
    assert ne == pytest.approx(nf, rel=1e-12)


def test_wigner_form_refuses_ill_conditioned_float_state():
    _, s = _big_state(exact=False)
    with pytest.raises(PrecisionLoss):
        wigner_form(s)


def test_omega_is_symplectic_form():
    assert np.array_equal(OMEGA @ OMEGA, -np.eye(4))
