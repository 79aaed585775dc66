"""Shared plumbing for the experiment scripts: dataclass configs from argparse, CSV output."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
from pathlib import Path


def parse_config(cls, description: str):
    """Build an argparse parser from a dataclass; lists are comma-separated on the command line."""
    ap = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, list):
            ap.add_argument(flag, default=",".join(map(str, default)),
                            help=f"comma-separated (default {default})")
        else:
            ap.add_argument(flag, type=type(default), default=default,
                            help=f"default {default}")
    ns = vars(ap.parse_args())
    kw = {}
    for f in dataclasses.fields(cls):
        v = ns[f.name]
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, list):
            cast = type(default[0]) if default else float
            v = [cast(x) for x in str(v).split(",") if x]
        kw[f.name] = v
    return cls(**kw)


def write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def write_config(path: Path, cfg) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True))
