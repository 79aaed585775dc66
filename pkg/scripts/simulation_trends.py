"""Monte Carlo error of both schemes against blocklength, next to the exponent they approach.

IB: BSC, uniform constant-composition codes, identity relay covering, MMI.
WAK: doubly-symmetric binary source, permutation-built codebooks.
Each row carries -(1/n) log p_hat with its 95% interval; the IB rows also
carry E_r(R, B) for comparison.  At these n the estimate sits above E_r and
moves down towards it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from _common import parse_config, write_config, write_csv
from ibexp.exponents.api import ExponentQuery, exponent_random_coding
from ibexp.simulator import SimConfig, WakConfig, run_ib_trials, run_wak_trials


@dataclass
class Config:
    crossover: float = 0.1
    R: float = 0.15
    B: float = 2.0
    ib_n: list = field(default_factory=lambda: [8, 12, 16, 20, 24, 28, 32])
    ib_trials: int = 100_000
    wak_p: float = 0.1
    wak_R: float = 0.5
    wak_n: list = field(default_factory=lambda: [8, 12, 16, 20])
    wak_trials: int = 20_000
    seed: int = 7
    threads: int = 1
    out: str = "results/simulation"


def main():
    cfg = parse_config(Config, __doc__)
    p = cfg.crossover
    w = [[1 - p, p], [p, 1 - p]]
    er = exponent_random_coding(ExponentQuery(w, cfg.B, cfg.R, input_dist=[0.5, 0.5])).value
    rows = []
    for n in cfg.ib_n:
        r = run_ib_trials(SimConfig(w, n, cfg.R, cfg.B, trials=cfg.ib_trials, seed=cfg.seed,
                                    threads=cfg.threads))
        est, lo, hi = r.exponent_interval()
        rows.append({"scheme": "ib", **r.row(), "exp_est": est, "exp_lo": lo, "exp_hi": hi,
                     "E_r": er})
        print(f"ib  n={n:2d} p_hat={r.empirical_error:.5f} -(1/n)log p={est:.4f} "
              f"[{lo:.4f}, {hi:.4f}]  E_r={er:.4f}", flush=True)
    q = cfg.wak_p
    src = [[(1 - q) / 2, q / 2], [q / 2, (1 - q) / 2]]
    for n in cfg.wak_n:
        r = run_wak_trials(WakConfig(src, n, cfg.wak_R, cfg.B, trials=cfg.wak_trials,
                                     seed=cfg.seed, threads=cfg.threads))
        est, lo, hi = r.exponent_interval()
        rows.append({"scheme": "wak", **r.row(), "exp_est": est, "exp_lo": lo, "exp_hi": hi,
                     "E_r": ""})
        print(f"wak n={n:2d} p_hat={r.empirical_error:.5f} aborted={r.aborted}", flush=True)
    out = Path(cfg.out)
    write_csv(out / "trends.csv", rows)
    write_config(out / "config.json", cfg)


if __name__ == "__main__":
    main()
