import csv
import io
import math

import numpy as np
import pytest

from ibexp.config import ValidationError
from ibexp.covering import floor_exp
from ibexp.simulator import (CSV_COLUMNS, Codebook, CoveringLibrary, ProtocolError, SimConfig,
                             WakConfig, decode_joint, quantize_conditional, quantize_type,
                             relay_compress, run_ib_trials, run_wak_trials, sample_codebook)
from ibexp.types_core import TypeVector, class_index

BSC01 = [[0.9, 0.1], [0.1, 0.9]]
NOISELESS = [[1.0, 0.0], [0.0, 1.0]]


# ------------------------------------------------------------------ quantization


def test_largest_remainder_rounding():
    assert quantize_type([1 / 3, 2 / 3], 4).counts == (1, 3)
    assert quantize_type([0.5, 0.5], 5).counts == (3, 2)  # tie goes to the lower symbol
    assert quantize_type([0.2, 0.3, 0.5], 10).counts == (2, 3, 5)
    assert quantize_conditional([[0.5, 0.5], [1.0, 0.0]], (3, 2)).tolist() == [[2, 1], [2, 0]]


# --------------------------------------------------------------------- codebooks


def test_codebook_single_and_deterministic():
    cb = sample_codebook(6, 0.0, (3, 3), seed=1)
    assert cb.size == 1 and sorted(cb.codewords[0].tolist()) == [0, 0, 0, 1, 1, 1]
    a, b = sample_codebook(8, 0.3, (4, 4), 9), sample_codebook(8, 0.3, (4, 4), 9)
    assert a.size == floor_exp(8 * 0.3) == 11
    assert (a.codewords == b.codewords).all()
    with pytest.raises(ValidationError):
        sample_codebook(8, 0.3, (4, 3), 0)
    with pytest.raises(ValidationError):
        Codebook(3, 0.0, TypeVector((2, 1)), np.array([[0, 1, 1]]))


def test_codeword_positions_follow_the_exact_marginal():
    cb = sample_codebook(8, math.log(10_000) / 8 + 1e-9, (4, 4), seed=3)
    assert cb.size == 10_000
    freq = (cb.codewords == 0).mean(axis=0)
    sigma = math.sqrt(0.25 / cb.size)
    assert np.all(np.abs(freq - 0.5) <= 3 * sigma)


# ------------------------------------------------------------------------ relay


def test_identity_relay_returns_y_in_its_own_bin():
    lib = CoveringLibrary(6, 2, 2.0)
    y = np.array([0, 1, 1, 0, 1, 0])
    ti, bi, u, us = lib.relay_full(y)
    assert (u == y).all() and us.tolist() == [y.tolist()]
    assert lib.types[ti] == (3, 3)
    assert bi == int(class_index((3, 3)).rank(y[None])[0])


def test_identity_relay_small_B_bin_contains_y():
    lib = CoveringLibrary(6, 2, 0.2)
    for seed in range(10):
        y = np.random.default_rng(seed).integers(2, size=6)
        ti, bi, u, us = lib.relay_full(y)
        assert any((m == y).all() for m in us)
        assert relay_compress(y, lib) == (ti, bi)


def test_single_bin_library():
    lib = CoveringLibrary(6, 2, 0.0, policy=[[0.8, 0.2], [0.2, 0.8]])
    for seed in range(10):
        y = np.random.default_rng(seed).integers(2, size=6)
        assert relay_compress(y, lib)[1] == 0


def test_relay_output_has_exact_joint_type():
    lib = CoveringLibrary(6, 2, 0.1, policy=[[0.7, 0.3], [0.2, 0.8]], seed=4)
    rng = np.random.default_rng(0)
    for _ in range(200):
        y = rng.integers(2, size=6)
        ti, bi, u, us = lib.relay_full(y)
        J = np.asarray(lib.entry(lib.types[ti]).code.cond_type)
        got = np.zeros_like(J)
        np.add.at(got, (y, u), 1)
        assert (got == J).all()
        assert any((m == u).all() for m in us)


def test_debug_run_checks_joint_types():
    cfg = SimConfig([[0.95, 0.05], [0.05, 0.95]], 6, 0.2, 0.1, trials=3000, seed=2,
                    covering=[[0.8, 0.2], [0.2, 0.8]], debug=True)
    assert run_ib_trials(cfg).trials == 3000


def test_unknown_policy_and_missing_type():
    with pytest.raises(ValidationError):
        CoveringLibrary(4, 2, 1.0, policy="nearest")
    with pytest.raises(ValidationError):
        CoveringLibrary(4, 2, 1.0).type_index((5, 0))


# ---------------------------------------------------------------------- decoder


def test_decode_noiseless_distinct_codewords():
    lib = CoveringLibrary(6, 2, 2.0)
    cb = np.array([[0, 0, 0, 1, 1, 1], [0, 1, 0, 1, 0, 1], [1, 1, 0, 0, 1, 0]])
    for m, x in enumerate(cb):
        ti, bi = relay_compress(x, lib)
        assert decode_joint(ti, bi, cb, lib) == m


def test_decode_tie_goes_to_lower_index():
    lib = CoveringLibrary(4, 2, 2.0)
    cb = np.array([[0, 1, 0, 1], [0, 0, 1, 1], [0, 0, 1, 1]])
    ti, bi = relay_compress(cb[2], lib)
    assert decode_joint(ti, bi, cb, lib) == 1  # sent index 2 is decoded as 1: an error


def test_decode_bad_indices():
    lib = CoveringLibrary(4, 2, 2.0)
    with pytest.raises(ProtocolError):
        decode_joint(99, 0, np.zeros((1, 4), dtype=int), lib)
    with pytest.raises(ValidationError):
        decode_joint(0, 0, np.array([[0, 1, 0, 1]]), lib, metric="ML")


def _manual_trials(cfg: SimConfig):
    """Replays the simulator's first RNG chunk trial by trial through the public relay/decoder."""
    w = np.asarray(cfg.channel)
    n, M = cfg.n, floor_exp(cfg.n * cfg.R)
    comp = quantize_type([0.5, 0.5], n)
    lib = CoveringLibrary(n, 2, cfg.B, cfg.covering, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0])
    canon = np.repeat(np.arange(2), comp.counts)
    books = rng.permuted(np.broadcast_to(canon, (cfg.trials, M, n)), axis=2)
    msgs = rng.integers(M, size=cfg.trials)
    x = books[np.arange(cfg.trials), msgs]
    cum = np.cumsum(w, axis=1)[:, :-1]
    y = (rng.random(x.shape)[..., None] >= cum[x]).sum(axis=-1)
    errors = 0
    for t in range(cfg.trials):
        ti, bi = relay_compress(y[t], lib)
        errors += decode_joint(ti, bi, books[t], lib, cfg.decoder) != msgs[t]
    return errors


@pytest.mark.parametrize("B,cov", [(0.1, "identity"), (2.0, "identity"),
                                   (0.1, [[0.8, 0.2], [0.3, 0.7]])])
def test_batched_simulator_matches_trial_by_trial_decoding(B, cov):
    cfg = SimConfig([[0.9, 0.1], [0.15, 0.85]], 6, 0.25, B, trials=400, seed=11, covering=cov)
    assert run_ib_trials(cfg).errors == _manual_trials(cfg)


# ------------------------------------------------------------------- IB trials


def test_noiseless_channel_zero_errors():
    r = run_ib_trials(SimConfig(NOISELESS, 32, 0.15, 2.0, trials=5000, seed=1))
    assert r.errors == 0 and r.wilson[0] == 0.0


def test_overloaded_rate_errs_at_least_duplicate_fraction():
    # n=4, (2,2): six sequences, M = floor(e^{4 * 0.6}) = 11 codewords
    r = run_ib_trials(SimConfig(NOISELESS, 4, 0.6, 2.0, trials=4000, seed=2))
    # at least 5 of the 11 codewords share their sequence with a lower index
    assert r.empirical_error >= 5 / 11 - 3 * math.sqrt(0.25 / 4000)


def test_finer_binning_cannot_hurt_paired_seeds():
    w = [[0.95, 0.05], [0.05, 0.95]]
    small = run_ib_trials(SimConfig(w, 6, 0.2, 0.05, trials=100_000, seed=5))
    large = run_ib_trials(SimConfig(w, 6, 0.2, 2.0, trials=100_000, seed=5))
    assert large.empirical_error <= small.empirical_error
    # same draws: a rival that beats the sent pair on y alone also beats it within any bin holding y
    assert large.relaxed_errors <= small.relaxed_errors


def test_report_invariants_and_csv():
    r = run_ib_trials(SimConfig(BSC01, 8, 0.2, 0.3, trials=1500, seed=4))
    lo, hi = r.wilson
    assert 0 <= r.errors <= r.trials and lo <= r.empirical_error <= hi
    assert sum(v[0] for v in r.per_type.values()) == r.trials
    assert sum(v[1] for v in r.per_type.values()) == r.errors
    rows = list(csv.DictReader(io.StringIO(r.to_csv())))
    assert list(rows[0]) == CSV_COLUMNS == ["n", "R", "B", "trials", "errors", "p_hat", "ci_lo",
                                            "ci_hi", "seed"]
    assert int(rows[0]["errors"]) == r.errors and float(rows[0]["p_hat"]) == r.empirical_error
    assert "threads" not in r.to_json()


@pytest.mark.parametrize("B,cov", [(2.0, "identity"), (0.2, "identity"),
                                   (0.2, [[0.8, 0.2], [0.2, 0.8]])])
def test_thread_count_does_not_change_results(B, cov):
    base = dict(channel=BSC01, n=8, R=0.2, B=B, trials=3000, seed=8, covering=cov)
    a = run_ib_trials(SimConfig(**base, threads=1))
    b = run_ib_trials(SimConfig(**base, threads=4))
    assert a.to_json() == b.to_json()


def test_config_validation():
    with pytest.raises(ValidationError):
        run_ib_trials(SimConfig(BSC01, 8, 0.2, 0.3, trials=0))
    with pytest.raises(ValidationError):
        run_ib_trials(SimConfig(BSC01, 8, -0.1, 0.3))
    with pytest.raises(ValidationError):
        run_ib_trials(SimConfig([[0.9, 0.2], [0.1, 0.9]], 8, 0.2, 0.3))


# ------------------------------------------------------------------ WAK trials


def test_wak_noiseless_side_information():
    r = run_wak_trials(WakConfig(np.diag([0.5, 0.5]), 16, 0.4, 2.0, trials=3000, seed=1))
    assert r.errors == 0 and r.aborted == 0


def test_wak_full_rate_is_lossless():
    src = [[0.45, 0.05], [0.05, 0.45]]
    r = run_wak_trials(WakConfig(src, 8, math.log(2), 0.0, trials=2000, seed=1))
    assert r.errors == 0 and r.metadata["types_built"] == 0


def test_wak_thread_determinism():
    src = [[0.45, 0.05], [0.05, 0.45]]
    a = run_wak_trials(WakConfig(src, 12, 0.5, 2.0, trials=1500, seed=3, threads=1))
    b = run_wak_trials(WakConfig(src, 12, 0.5, 2.0, trials=1500, seed=3, threads=3))
    assert a.to_json() == b.to_json()


def test_wak_source_validation():
    with pytest.raises(ValidationError):
        run_wak_trials(WakConfig([0.5, 0.5], 8, 0.3, 1.0))
    with pytest.raises(ValidationError):
        run_wak_trials(WakConfig([[0.5, 0.5], [0.5, 0.5]], 8, 0.3, 1.0))
