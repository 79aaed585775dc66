"""Resource caps and numeric tolerances shared across modules."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

PMF_TOL = 1e-12


class ValidationError(ValueError):
    """Malformed input (bad pmf, inconsistent shapes, out-of-range args)."""


class ResourceError(RuntimeError):
    """A configured enumeration or grid cap would be exceeded."""


class VerificationError(AssertionError):
    """A constructive or numerical verification failed."""


@dataclass(frozen=True)
class Caps:
    max_types: int = 2_000_000
    max_type_class: int = 2_000_000
    max_grid_points: int = 5_000_000
    max_permutation_enum: int = 720 * 2_000
    max_sim_n: int = 64


_caps = Caps()


def get_caps() -> Caps:
    return _caps


def set_caps(**kwargs) -> Caps:
    global _caps
    _caps = replace(_caps, **kwargs)
    return _caps


def load_caps(path: str | os.PathLike) -> Caps:
    """Read overrides from a JSON file; unknown keys are rejected."""
    data = json.loads(Path(path).read_text())
    known = set(asdict(Caps()))
    bad = set(data) - known
    if bad:
        raise ValidationError(f"unknown cap keys: {sorted(bad)}")
    return set_caps(**data)
