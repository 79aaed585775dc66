"""Bottleneck capacity C(B) of a BSC and of a 2x3 channel over a grid of B.

For the BSC the uniform-input curve is also given in closed form through
Mrs. Gerber's lemma, log 2 - h(p * h^{-1}(log 2 - B)), and printed next to
the numerical value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from _common import parse_config, write_config, write_csv
from ibexp.exponents.api import capacity_curve


@dataclass
class Config:
    crossover: float = 0.1
    B: list = field(default_factory=lambda: [round(x, 3) for x in np.linspace(0, 1, 21)])
    out: str = "results/capacity"


def h2(p):
    return 0.0 if p <= 0 or p >= 1 else -(p * math.log(p) + (1 - p) * math.log(1 - p))


def mgl(p, B):
    v = math.log(2) - min(B, math.log(2))
    q = 0.5 if v >= math.log(2) else (0.0 if v <= 0 else brentq(lambda t: h2(t) - v, 1e-300, 0.5))
    return math.log(2) - h2(p * (1 - q) + (1 - p) * q)


def main():
    cfg = parse_config(Config, __doc__)
    p = cfg.crossover
    channels = {"bsc": [[1 - p, p], [p, 1 - p]], "w23": [[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]]}
    rows = []
    for name, w in channels.items():
        for B, r in zip(cfg.B, capacity_curve(w, cfg.B)):
            row = {"channel": name, "B": B, "C": r.value,
                   "P_X": ";".join(f"{v:.4f}" for v in r.witnesses["P_X"]),
                   "closed_form": mgl(p, B) if name == "bsc" else ""}
            rows.append(row)
            print(f"{name:4s} B={B:.3f}  C={r.value:.6f}"
                  + (f"  closed form {row['closed_form']:.6f}" if name == "bsc" else ""))
    out = Path(cfg.out)
    write_csv(out / "capacity.csv", rows)
    write_config(out / "config.json", cfg)


if __name__ == "__main__":
    main()
