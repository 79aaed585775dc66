import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from ibexp.config import ValidationError
from ibexp.exponents import (ExponentQuery, capacity_curve, capacity_ib,
                             dmc_reference_exponents, e_zero, exponent_no_binning,
                             exponent_random_coding, exponent_sphere_packing,
                             exponent_sphere_packing_conjectured, exponent_wak, lm_rate)
from ibexp.types_core import channel_mi, mutual_information

from oracles import (LOG2, bsc_capacity_ib, e_zero_binary_grid, h2, min_kl_entropy_floor,
                     mi_joint, wak_identity_helper)

BSC = np.array([[0.9, 0.1], [0.1, 0.9]])
W23 = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
UNI = np.array([0.5, 0.5])
DSBS = np.array([[0.45, 0.05], [0.05, 0.45]])
CAP_BSC = LOG2 - h2(0.1)


# ---------------------------------------------------------------- capacity


def test_capacity_noiseless_and_zero():
    assert capacity_ib(np.eye(2), 0.3).value == pytest.approx(0.3, abs=2e-3)
    assert capacity_ib(BSC, 0.0).value == 0.0
    assert capacity_ib(W23, 0.0).value == 0.0


def test_capacity_bsc_closed_form():
    assert CAP_BSC == pytest.approx(0.368064, abs=1e-6)
    assert capacity_ib(BSC, 1.0).value == pytest.approx(CAP_BSC, abs=2e-3)


@pytest.mark.parametrize("B", [0.05, 0.2, 0.4, 0.6])
def test_capacity_matches_binary_symmetric_curve(B):
    # uniform input, U = Y through a BSC is optimal for the doubly symmetric pair
    v = capacity_ib(BSC, B, input_dist=UNI).value
    assert v == pytest.approx(bsc_capacity_ib(0.1, B), abs=2e-3)


def test_capacity_monotone_and_capped():
    Bs = [0.0, 0.1, 0.2, 0.4, 0.8, 1.6]
    vals = [r.value for r in capacity_curve(W23, Bs)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    cmax = max(channel_mi([t, 1 - t], W23) for t in np.linspace(0, 1, 2001))
    for B, v in zip(Bs, vals):
        assert v <= min(cmax, B) + 2e-3


def test_capacity_witness_is_feasible():
    r = capacity_ib(W23, 0.3)
    px, p = r.witnesses["P_X"], r.witnesses["P_U|Y"]
    py = px @ W23
    assert mutual_information(py[:, None] * p) <= 0.3 + 1e-6
    assert mutual_information(px[:, None] * (W23 @ p)) == pytest.approx(r.value, abs=1e-6)


def test_capacity_rejects_negative_B():
    with pytest.raises(ValidationError):
        capacity_ib(BSC, -0.1)


# --------------------------------------------------------------------- E_0


def random_cond(rng, a, c):
    m = rng.random((a, c)) ** 2
    return m / m.sum(1, keepdims=True)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(2, 4))
def test_e_zero_mmi_equals_mutual_information(seed, a, c):
    rng = np.random.default_rng(seed)
    px = rng.dirichlet(np.ones(a))
    q = random_cond(rng, a, c)
    assert e_zero(px, q, "MMI") == pytest.approx(mutual_information(px[:, None] * q), abs=1e-10)


def test_e_zero_independent_u_is_zero():
    q = np.array([[0.3, 0.7], [0.3, 0.7]])
    assert e_zero([0.4, 0.6], q, np.array([[2.0, 1.0], [1.0, 3.0]])) == pytest.approx(0, abs=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_e_zero_binary_log_metric_matches_grid(seed):
    rng = np.random.default_rng(100 + seed)
    px = rng.dirichlet([2, 2])
    q = random_cond(rng, 2, 2)
    m = rng.uniform(0.1, 3.0, size=(2, 2))
    v = e_zero(px, q, m)
    assert v == pytest.approx(e_zero_binary_grid(px, q, m), abs=1e-3)
    assert v <= mutual_information(px[:, None] * q) + 1e-10


def test_e_zero_validation():
    with pytest.raises(ValidationError):
        e_zero([0.5, 0.5], np.eye(2), np.array([[1.0, -1.0], [1.0, 1.0]]))
    with pytest.raises(ValidationError):
        e_zero([0.5, 0.5], np.eye(2), "euclid")


# --------------------------------------------------------- random coding


def q(channel=BSC, B=0.5, R=0.1, px=UNI, **kw):
    kw.setdefault("grid_resolution", 30)
    return ExponentQuery(channel, B, R, px, **kw)


def test_rc_zero_above_log_alphabet():
    assert exponent_random_coding(q(R=LOG2 + 0.01)).value == 0.0
    assert exponent_random_coding(q(W23, B=2.0, R=LOG2)).value == 0.0


def test_rc_zero_without_bottleneck():
    # with U degenerate every term of the program vanishes at the true channel
    for R in (0.0, 0.05, 0.3):
        assert exponent_random_coding(q(B=0.0, R=R)).value == pytest.approx(0.0, abs=1e-3)


def test_rc_degenerate_input_is_zero():
    assert exponent_random_coding(q(px=[1.0, 0.0])).value == 0.0


def test_no_binning_bounded_by_binning():
    for ch, B, R in [(BSC, 0.3, 0.05), (BSC, 0.6, 0.15), (W23, 0.4, 0.05)]:
        rc = exponent_random_coding(q(ch, B, R)).value
        nb = exponent_no_binning(q(ch, B, R)).value
        assert nb <= rc + 1e-9


def test_no_binning_coincides_for_large_B():
    rc = exponent_random_coding(q(B=10.0, R=0.1)).value
    nb = exponent_no_binning(q(B=10.0, R=0.1)).value
    assert nb == pytest.approx(rc, abs=1e-9)


def test_rc_monotone_in_R_and_B():
    byR = [exponent_random_coding(q(B=0.5, R=R)).value for R in (0.02, 0.08, 0.15)]
    assert byR[0] >= byR[1] - 1e-9 >= byR[2] - 2e-9
    byB = [exponent_random_coding(q(B=B, R=0.08)).value for B in (0.2, 0.4, 0.8)]
    assert byB[0] <= byB[1] + 1e-9 <= byB[2] + 2e-9


def test_rc_large_B_matches_dmc_oracle():
    er, _ = dmc_reference_exponents(BSC, 0.1, UNI)
    v = exponent_random_coding(q(B=10.0, R=0.1, grid_resolution=60)).value
    assert v == pytest.approx(er, abs=5e-3)


def test_rc_witness_constraints():
    r = exponent_random_coding(q(W23, B=0.4, R=0.05))
    qy, p, qx = (np.asarray(r.witnesses[k]) for k in ("Q_Y", "P_U|Y", "Q_X|YU"))
    joint = qx * (qy[:, None] * p)[None]  # (x, y, u)
    assert joint.sum(axis=(1, 2)) == pytest.approx(UNI, abs=1e-6)
    assert r.value >= 0


def test_rc_rejects_bad_queries():
    with pytest.raises(ValidationError):
        exponent_random_coding(ExponentQuery(BSC, -1.0, 0.1))
    with pytest.raises(ValidationError):
        exponent_random_coding(ExponentQuery(BSC, 1.0, 0.1, [0.3, 0.3, 0.4]))
    with pytest.raises(ValidationError):
        exponent_random_coding(ExponentQuery(BSC, 1.0, 0.1, metric=np.array([[1.0, -1.0]])))


# ------------------------------------------------------------ sphere packing


def test_sp_needs_fixed_input():
    with pytest.raises(ValidationError):
        exponent_sphere_packing(ExponentQuery(BSC, 0.5, 0.1))


def test_sp_zero_cases():
    assert exponent_sphere_packing(q(B=0.0, R=0.05, u_size=3)).value == 0.0
    cap = capacity_ib(BSC, 0.5, input_dist=UNI).value
    assert exponent_sphere_packing(q(B=0.5, R=cap + 0.01, u_size=3)).value == 0.0


def test_sp_large_B_matches_dmc_oracle():
    _, esp = dmc_reference_exponents(BSC, 0.2, UNI)
    v = exponent_sphere_packing(q(B=10.0, R=0.2, grid_resolution=60, u_size=3)).value
    assert v == pytest.approx(esp, abs=5e-3)


def test_sp_witness_constraints():
    r = exponent_sphere_packing(q(W23, B=0.5, R=0.05, u_size=4))
    qy, p, qyx = (np.asarray(r.witnesses[k]) for k in ("Q_Y", "P_U|Y", "Q_Y|X"))
    assert UNI @ qyx == pytest.approx(qy, abs=1e-6)
    assert mutual_information(UNI[:, None] * (qyx @ p)) <= 0.05 + 1e-6
    assert mutual_information(qy[:, None] * p) <= 0.5 + 1e-6


def test_sp_conjectured_flags_and_zero_cases():
    r = exponent_sphere_packing_conjectured(q(B=0.0, R=0.05, u_size=3))
    assert r.value == 0.0 and r.diagnostics["experimental"] is True
    assert exponent_sphere_packing_conjectured(q(B=0.5, R=0.4, u_size=3)).value == 0.0


def test_sp_conjectured_offset_grid_cross_check():
    a = exponent_sphere_packing_conjectured(q(B=10.0, R=0.2, grid_resolution=60, u_size=3)).value
    b = exponent_sphere_packing_conjectured(q(B=10.0, R=0.2, grid_resolution=37, u_size=3,
                                              refinement_rounds=2, seed=5)).value
    assert a == pytest.approx(b, abs=1e-2)


# ---------------------------------------------------------------------- WAK


def test_wak_zero_rate():
    assert exponent_wak(DSBS, 0.5, 0.0, grid_resolution=30).value == 0.0


def test_wak_identity_helper_reduction():
    v = exponent_wak(DSBS, 1.0, 0.5).value
    assert v == pytest.approx(wak_identity_helper(DSBS, 0.5, 1.0), abs=5e-3)


@pytest.mark.parametrize("R", [0.3, 0.6])
def test_wak_independent_helper_is_useless(R):
    px = np.array([0.8, 0.2])
    src = np.outer(px, [0.5, 0.5])
    v = exponent_wak(src, 0.3, R).value
    assert v == pytest.approx(min_kl_entropy_floor(px, R), abs=5e-3)


def test_wak_validation():
    with pytest.raises(ValidationError):
        exponent_wak(DSBS, -1.0, 0.3)
    with pytest.raises(ValidationError):
        exponent_wak(np.full((2, 2, 2), 1 / 8), 1.0, 0.3)


# ------------------------------------------------------------------ LM rates


def test_lm_rate_mmi_equals_capacity():
    for B in (0.2, 0.5):
        assert lm_rate("IB", BSC, B).value == pytest.approx(capacity_ib(BSC, B).value, abs=2e-3)
    assert lm_rate("IB", BSC, 0.0).value == 0.0


def _lm_grid_oracle(w, B, metric, res=20):
    """max over P_X and binary P_U|Y of the E_0 grid oracle under I(Y;U) <= B.

    P_U|Y is scanned on a lattice plus, for every lattice value of the first
    row, the second-row values putting I(Y;U) exactly on the constraint
    boundary (where the optimum of an increasing objective sits).
    """
    best = 0.0
    rows = np.linspace(0, 1, res + 1)
    for t in np.linspace(0, 1, res + 1):
        px = np.array([t, 1 - t])
        if min(px) == 0:
            continue
        py = px @ w

        def iyu(a, b):
            return float(mi_joint(py[:, None] * np.array([[a, 1 - a], [b, 1 - b]])))

        for a in rows:
            cands = list(rows)
            for lo, hi in ((0.0, a), (a, 1.0)):
                far = lo if lo != a else hi
                if iyu(a, far) > B and hi > lo:
                    cands.append(brentq(lambda b: iyu(a, b) - B, min(a, far), max(a, far)))
            for b in cands:
                if iyu(a, b) > B + 1e-9:
                    continue
                p = np.array([[a, 1 - a], [b, 1 - b]])
                best = max(best, e_zero_binary_grid(px, w @ p, metric, points=2001))
    return best


def test_lm_rate_mismatched_against_grid_oracle():
    metric = np.array([[1.0, 0.4], [0.6, 1.0]])
    v = lm_rate("IB", BSC, 0.4, metric, u_size=2).value
    assert v <= capacity_ib(BSC, 0.4).value + 2e-3
    assert v == pytest.approx(_lm_grid_oracle(BSC, 0.4, metric), abs=1e-2)


def test_lm_rate_wak_mode():
    v = lm_rate("WAK", DSBS, 0.3).value
    hx = LOG2
    assert 0 <= v <= hx
    mism = lm_rate("WAK", DSBS, 0.3, np.array([[1.0, 0.5, 0.7], [0.5, 1.0, 0.7]])).value
    assert mism >= v - 2e-3
    with pytest.raises(ValidationError):
        lm_rate("XY", BSC, 0.3)


# --------------------------------------------------------------- DMC oracle


def test_dmc_zero_above_mutual_information():
    i = channel_mi(UNI, BSC)
    assert dmc_reference_exponents(BSC, i + 1e-3, UNI) == (0.0, 0.0)


def test_dmc_noiseless_zero_rate_is_infinite():
    _, esp = dmc_reference_exponents(np.eye(2), 0.0, UNI)
    assert esp == math.inf


def test_dmc_resolution_self_consistency():
    a = dmc_reference_exponents(BSC, 0.2, UNI, resolution=100)
    b = dmc_reference_exponents(BSC, 0.2, UNI, resolution=200)
    assert a == pytest.approx(b, abs=2e-3)
    assert a[0] >= 0 and a[1] >= 0
