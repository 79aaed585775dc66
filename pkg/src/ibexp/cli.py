"""Command-line front end.

Every command resolves its inputs (spec files are read and inlined) into a
JSON parameter record, runs, prints the result and, with ``--out DIR``,
writes the result files plus ``manifest.json``.  ``ibexp --replay
DIR/manifest.json --out NEW`` reruns the stored parameters and rewrites the
same bytes; ``--threads`` is an execution hint kept out of the manifest.

Exit codes: 0 success, 2 validation error, 3 resource cap, 4 verification failure.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from importlib import metadata, resources
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from .config import (ResourceError, ValidationError, VerificationError, get_caps, load_caps,
                     set_caps)
from .types_core import check_channel, check_joint

EXIT_OK, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_VERIFICATION = 0, 2, 3, 4
LOG2 = math.log(2.0)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.1.0"


# ----------------------------------------------------------------- spec files


@dataclass(frozen=True)
class ChannelSpec:
    """Row-stochastic matrix, rows indexed by inputs."""

    input_alphabet: int
    output_alphabet: int
    matrix: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if len({len(r) for r in self.matrix}) > 1:
            raise ValidationError("channel matrix rows have different lengths")
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (self.input_alphabet, self.output_alphabet):
            raise ValidationError(f"matrix shape {m.shape} does not match the declared alphabets")
        check_channel(m, "channel")

    @classmethod
    def from_obj(cls, obj) -> "ChannelSpec":
        if isinstance(obj, list):
            obj = {"matrix": obj}
        if not isinstance(obj, dict) or "matrix" not in obj:
            raise ValidationError("channel spec must be a JSON object with a 'matrix' field")
        try:
            rows = tuple(tuple(float(v) for v in r) for r in obj["matrix"])
        except (TypeError, ValueError) as e:
            raise ValidationError(f"malformed channel matrix: {e}") from None
        a = int(obj.get("input_alphabet", len(rows)))
        b = int(obj.get("output_alphabet", len(rows[0]) if rows else 0))
        return cls(a, b, rows)

    def array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)


def _read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: malformed JSON ({e})") from None
    except OSError as e:
        raise ValidationError(f"{path}: {e.strerror}") from None


def _source_matrix(obj) -> list[list[float]]:
    """Joint pmf P_XY (rows X) from a JSON object or bare nested list."""
    m = obj.get("matrix", obj.get("joint")) if isinstance(obj, dict) else obj
    try:
        arr = np.asarray(m, dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"malformed source matrix: {e}") from None
    check_joint(arr, "source")
    if arr.ndim != 2:
        raise ValidationError("source must be a |X| x |Y| joint pmf")
    return arr.tolist()


def _floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}") from None


def _matrix_file(path) -> list[list[float]] | None:
    if path is None:
        return None
    m = _read_json(path)
    if isinstance(m, dict):
        m = m.get("matrix")
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise ValidationError(f"{path}: expected a matrix")
    return arr.tolist()


# ------------------------------------------------------------------ payloads


def _plain(v):
    """JSON-ready copy: numpy to lists, non-finite floats to strings, Fractions to 'p/q'."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return v


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class Outcome:
    payload: dict
    files: dict[str, str] = field(default_factory=dict)
    exit_code: int = EXIT_OK
    summary: str = ""


@dataclass(frozen=True)
class RunManifest:
    command: str
    parameters: dict
    version: str
    timestamp: str
    seed: int | None

    def to_json(self) -> str:
        return dumps({**asdict(self), "caps": asdict(get_caps())})

    @classmethod
    def load(cls, path) -> tuple["RunManifest", dict]:
        d = _read_json(path)
        try:
            m = cls(d["command"], d["parameters"], d["version"], d["timestamp"], d.get("seed"))
        except KeyError as e:
            raise ValidationError(f"manifest lacks field {e}") from None
        return m, d.get("caps", {})


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
           else _dt.datetime.now(_dt.timezone.utc))
    return now.replace(microsecond=0).isoformat()


def schema_text() -> str:
    return resources.files("ibexp").joinpath("schemas/result.schema.json").read_text()


def validate_payload(doc: dict) -> None:
    """Check an output document against the published schema when jsonschema is available."""
    try:
        import jsonschema
    except ImportError:  # optional dependency
        return
    try:
        jsonschema.validate(doc, json.loads(schema_text()))
    except jsonschema.ValidationError as e:
        raise VerificationError(f"output does not match the result schema: {e.message}") from None


# ------------------------------------------------------------------- runners


def _query(p, R, B):
    from .exponents import ExponentQuery
    return ExponentQuery(p["channel"], B, R, p.get("input_dist") or "optimize", p.get("u_size"),
                         p.get("metric"), p["grid"], p["refine"], p["seed"])


def _exponent_fn(kind: str) -> Callable:
    from . import exponents as ex
    if kind == "wak":
        return lambda p, R, B: ex.exponent_wak(p["source"], B, R, p.get("u_size"),
                                               p.get("metric") or "MMI", p["grid"], p["refine"],
                                               p["seed"])
    fn = {"rc": ex.exponent_random_coding, "nb": ex.exponent_no_binning,
          "sp": ex.exponent_sphere_packing,
          "sp-conj": ex.exponent_sphere_packing_conjectured}[kind]
    return lambda p, R, B: fn(_query(p, R, B))


def run_capacity(p, threads):
    from .exponents import capacity_curve
    res = capacity_curve(p["channel"], p["B"], p.get("u_size"), p.get("input_dist") or "optimize")
    rows = [{"B": B, **r.to_json()} for B, r in zip(p["B"], res)]
    return Outcome({"results": rows}, summary=_summary_values(p["B"], [r.value for r in res]))


def _single_exponent(kind):
    def run(p, threads):
        r = _exponent_fn(kind)(p, p["R"], p["B"])
        return Outcome({"result": r.to_json()}, summary=_fmt_value(r.value))
    return run


def run_lm_rate(p, threads):
    from .exponents import lm_rate
    model = p["channel"] if p["mode"] == "IB" else p["source"]
    r = lm_rate(p["mode"], model, p["B"], p.get("metric") or "MMI", p.get("u_size"))
    return Outcome({"result": r.to_json()}, summary=_fmt_value(r.value))


def run_verify_covering(p, threads):
    from .covering import (degree_profile, find_covering_permutations,
                           find_simultaneous_covering, verify_permutation_cover)
    counts = tuple(p["type"])
    sets = [np.array([[int(ch) for ch in s] for s in member]) for member in p["sets"]]
    out: dict[str, Any] = {"type": list(counts)}
    ok = True
    if len(sets) == 1:
        cov = find_covering_permutations(sets[0], counts, p.get("max_k"), p["seed"])
        missed = verify_permutation_cover(sets[0], counts, cov.permutations)
        out.update({"k": len(cov), "budget": cov.budget, "success": cov.success,
                    "uncovered": cov.uncovered, "coverage_exact": missed == 0,
                    "permutations": [list(m.mapping) for m in cov]})
        ok = cov.success and missed == 0 and len(cov) <= cov.budget
        if p.get("degree"):
            deg = degree_profile(sets[0], counts)
            out["degree_profile"] = {"".join(map(str, x)): d for x, d in sorted(deg.items())}
            out["degree_uniform"] = len(set(deg.values())) == 1
            ok = ok and out["degree_uniform"]
        summary = f"k={len(cov)} (budget {cov.budget}), coverage {'exact' if missed == 0 else 'incomplete'}"
    else:
        sim = find_simultaneous_covering(sets, counts, p.get("max_k"), p["seed"], p["delta"])
        out.update({"k": len(sim.permutations), "budget": sim.budget, "success": sim.success,
                    "covered_fraction": sim.covered_fraction, "fully_covered": sim.fully_covered,
                    "permutations": [list(m.mapping) for m in sim.permutations]})
        ok = sim.success
        summary = (f"k={len(sim.permutations)} (budget {sim.budget}), "
                   f"covered fraction {sim.covered_fraction:.4g}")
    return Outcome({"result": out}, exit_code=EXIT_OK if ok else EXIT_VERIFICATION,
                   summary=summary)


def run_verify_ensemble(p, threads):
    from .ensemble import (PrefixLaw, cc_conditional, cc_marginal,
                           prefix_suffix_typical_probability, window_atypical_probability)
    from .types_core import type_class_sequences
    counts = tuple(p["type"])
    n = sum(counts)
    check = p["check"]
    out: dict[str, Any] = {"type": list(counts), "check": check}
    lines = []
    if check in ("marginal", "all"):
        seqs = type_class_sequences(counts)
        good = True
        for i in range(1, n + 1):
            emp = np.bincount(seqs[:, i - 1], minlength=len(counts))
            exact = tuple(Fraction(int(c), len(seqs)) for c in emp)
            good &= exact == cc_marginal(counts, i).probs
        out["marginal_matches_enumeration"] = bool(good)
        if not good:
            raise VerificationError("cc_marginal disagrees with enumeration")
        lines.append("marginal: exact match")
    if check in ("conditional", "all"):
        seqs = type_class_sequences(counts)
        checked = 0
        for i in range(0, n):
            prefixes, inv = np.unique(seqs[:, :i], axis=0, return_inverse=True)
            inv = np.asarray(inv).reshape(-1)
            for j, pre in enumerate(prefixes):
                nxt = np.bincount(seqs[inv == j, i], minlength=len(counts))
                tot = int(nxt.sum())
                exact = tuple(Fraction(int(c), tot) for c in nxt)
                if exact != cc_conditional(PrefixLaw(counts, tuple(pre))).probs:
                    raise VerificationError(f"cc_conditional disagrees at prefix {tuple(pre)}")
                checked += 1
        out["conditional_prefixes_checked"] = checked
        lines.append(f"conditional: {checked} prefixes exact")
    if check in ("window", "all"):
        w = window_atypical_probability(counts, p["i"] or n // 2, p["k"], Fraction(p["delta"]))
        out["window"] = {"exact": w.exact, "exact_float": float(w.exact), "bound": w.bound,
                         "vacuous": w.vacuous}
        lines.append(f"window: exact {float(w.exact):.6g}, bound {w.bound:.6g}"
                     + (" (vacuous)" if w.vacuous else ""))
    if check in ("prefix-suffix", "all"):
        i = p["i"] or max(1, math.ceil(math.sqrt(n)))
        d = None if p.get("ps_delta") is None else Fraction(p["ps_delta"])
        ps = prefix_suffix_typical_probability(counts, i, d)
        out["prefix_suffix"] = {"i": i, "exact": ps.exact, "exact_float": float(ps.exact),
                                "bound": ps.bound, "vacuous": ps.vacuous}
        lines.append(f"prefix/suffix: exact {float(ps.exact):.6g}, bound {ps.bound:.6g}"
                     + (" (vacuous)" if ps.vacuous else ""))
    return Outcome({"result": out}, summary="; ".join(lines))


def run_simulate_ib(p, threads):
    from .simulator import SimConfig, run_ib_trials
    cfg = SimConfig(p["channel"], p["n"], p["R"], p["B"], p["trials"], p["seed"],
                    p.get("composition") or "uniform", p.get("metric") or "MMI",
                    p.get("covering") or "identity", threads)
    rep = run_ib_trials(cfg)
    return Outcome({"result": json.loads(rep.to_json())}, {"result.csv": rep.to_csv()},
                   summary=rep.to_csv().rstrip())


def run_simulate_wak(p, threads):
    from .simulator import WakConfig, run_wak_trials
    cfg = WakConfig(p["source"], p["n"], p["R"], p["B"], p["trials"], p["seed"],
                    p.get("metric") or "MMI", p.get("covering") or "identity",
                    p["family_size"], threads)
    rep = run_wak_trials(cfg)
    return Outcome({"result": json.loads(rep.to_json())}, {"result.csv": rep.to_csv()},
                   summary=rep.to_csv().rstrip())


SWEEP_COLUMNS = ["R", "B", "value", "witness_summary"]


def witness_summary(wits: dict, digits: int = 4) -> str:
    """Compact 'name=[...]' list of the small witnesses (rounded), ';'-separated."""
    parts = []
    for k in sorted(wits):
        v = wits[k]
        if k in ("P_X", "Q_Y", "P_U|Y"):
            arr = np.round(np.asarray(v, dtype=float), digits)
            parts.append(f"{k}={json.dumps(arr.tolist(), separators=(',', ':'))}")
    return ";".join(parts)


def run_sweep(p, threads):
    fn = _exponent_fn(p["exponent"])
    grid = [(R, B) for B in p["B_grid"] for R in p["R_grid"]]

    def one(rb):
        return fn(p, rb[0], rb[1])

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, grid))
    else:
        results = [one(rb) for rb in grid]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    rows = []
    for (R, B), r in zip(grid, results):
        val = "inf" if math.isinf(r.value) else repr(float(r.value))
        w.writerow({"R": repr(R), "B": repr(B), "value": val,
                    "witness_summary": witness_summary(r.witnesses)})
        rows.append({"R": R, "B": B, "value": r.value, "refinement_gap": r.refinement_gap,
                     "grid_points_evaluated": r.grid_points_evaluated})
    return Outcome({"points": rows}, {"sweep.csv": buf.getvalue()},
                   summary=f"{len(rows)} grid points")


def _fmt_value(v: float) -> str:
    return "value = inf" if math.isinf(v) else f"value = {v:.6f}"


def _summary_values(Bs, vals) -> str:
    return "\n".join(f"B={B:g}: value = {v:.6f}" for B, v in zip(Bs, vals))


RUNNERS: dict[str, Callable] = {
    "capacity": run_capacity,
    "exponent-rc": _single_exponent("rc"),
    "exponent-sp": _single_exponent("sp"),
    "exponent-sp-conj": _single_exponent("sp-conj"),
    "exponent-wak": _single_exponent("wak"),
    "lm-rate": run_lm_rate,
    "verify-covering": run_verify_covering,
    "verify-ensemble": run_verify_ensemble,
    "simulate-ib": run_simulate_ib,
    "simulate-wak": run_simulate_wak,
    "sweep": run_sweep,
}


def execute(command: str, params: dict, *, out_dir=None, threads: int = 1, bits: bool = False,
            timestamp: str | None = None) -> int:
    """Run one command on resolved parameters; print, write files and the manifest."""
    if command not in RUNNERS:
        raise ValidationError(f"unknown command {command!r}")
    if command == "exponent-rc" and params.get("variant") == "nb":
        outcome = _single_exponent("nb")(params, threads)
    else:
        outcome = RUNNERS[command](params, threads)
    doc = {"command": command, "version": tool_version(), "units": "nats", **outcome.payload}
    validate_payload(doc)
    text = dumps(doc)
    summary = outcome.summary
    if bits and summary:
        summary = _to_bits(summary)
    if summary:
        click.echo(summary, err=True)
    click.echo(text, nl=False)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(text)
        for name, body in outcome.files.items():
            (out / name).write_text(body)
        man = RunManifest(command, params, tool_version(), timestamp or _timestamp(),
                          params.get("seed"))
        (out / "manifest.json").write_text(man.to_json())
    return outcome.exit_code


def _to_bits(summary: str) -> str:
    """Rescale 'value = x' fields of the console summary from nats to bits."""
    out = []
    for line in summary.splitlines():
        if "value = " in line and "inf" not in line.split("value = ")[1]:
            head, num = line.split("value = ")
            try:
                line = f"{head}value = {float(num) / LOG2:.6f} bits"
            except ValueError:
                pass
        out.append(line)
    return "\n".join(out)


# ---------------------------------------------------------------------- click


@click.group(invoke_without_command=True)
@click.option("--caps", "caps_path", type=click.Path(dir_okay=False),
              envvar="IBEXP_CAPS", help="JSON file overriding resource caps.")
@click.option("--replay", type=click.Path(dir_okay=False),
              help="Rerun the command stored in a manifest.json.")
@click.option("--out", "replay_out", type=click.Path(file_okay=False),
              help="Output directory for --replay.")
@click.option("--threads", "replay_threads", type=int, default=1, show_default=True,
              help="Worker threads for --replay (does not change results).")
@click.pass_context
def cli(ctx, caps_path, replay, replay_out, replay_threads):
    """Capacities, error exponents, covering and ensemble checks, and simulations."""
    if caps_path:
        load_caps(caps_path)
    if replay:
        man, caps = RunManifest.load(replay)
        if caps:
            set_caps(**caps)
        ctx.exit(execute(man.command, man.parameters, out_dir=replay_out, threads=replay_threads,
                         timestamp=man.timestamp))
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


def _common(f):
    f = click.option("--out", "out_dir", type=click.Path(file_okay=False),
                     help="Write result files and manifest.json here.")(f)
    f = click.option("--bits", is_flag=True, help="Show console values in bits (files stay in nats).")(f)
    return f


def _grid_opts(f):
    f = click.option("--seed", type=int, default=20240917, show_default=True)(f)
    f = click.option("--refine", type=int, default=4, show_default=True,
                     help="Local refinement rounds.")(f)
    f = click.option("--grid", type=int, default=60, show_default=True,
                     help="Simplex grid resolution.")(f)
    return f


def _channel(path) -> list[list[float]]:
    return [list(r) for r in ChannelSpec.from_obj(_read_json(path)).matrix]


def _dispatch(name, params, out_dir, bits, threads=1):
    code = execute(name, params, out_dir=out_dir, threads=threads, bits=bits)
    click.get_current_context().exit(code)


@cli.command("capacity")
@click.option("--channel", required=True, type=click.Path(dir_okay=False))
@click.option("--B", "B", required=True, help="Bottleneck rate(s) in nats, comma-separated.")
@click.option("--u-size", type=int)
@click.option("--input-dist", help="Fixed P_X (comma-separated); default optimizes it.")
@_common
def capacity_cmd(channel, B, u_size, input_dist, out_dir, bits):
    """Capacity of the bottleneck channel."""
    _dispatch("capacity", {"channel": _channel(channel), "B": _floats(B), "u_size": u_size,
                           "input_dist": _floats(input_dist)}, out_dir, bits)


def _exponent_command(name, help_text, needs_px=False, variant=False):
    @click.option("--channel", required=True, type=click.Path(dir_okay=False))
    @click.option("--R", "R", required=True, type=float)
    @click.option("--B", "B", required=True, type=float)
    @click.option("--input-dist", required=needs_px,
                  help="P_X, comma-separated" + ("" if needs_px else "; default optimizes it"))
    @click.option("--u-size", type=int)
    @click.option("--metric", type=click.Path(dir_okay=False),
                  help="JSON |X| x |U| decoding metric; default MMI.")
    @_grid_opts
    @_common
    def cmd(channel, R, B, input_dist, u_size, metric, grid, refine, seed, out_dir, bits, **kw):
        params = {"channel": _channel(channel), "R": R, "B": B,
                  "input_dist": _floats(input_dist), "u_size": u_size,
                  "metric": _matrix_file(metric), "grid": grid, "refine": refine, "seed": seed}
        if variant:
            params["variant"] = kw["variant"]
        _dispatch(name, params, out_dir, bits)

    if variant:
        cmd = click.option("--variant", type=click.Choice(["rc", "nb"]), default="rc",
                           show_default=True, help="rc: with binning; nb: without binning.")(cmd)
    cmd.__doc__ = help_text
    return cli.command(name)(cmd)


_exponent_command("exponent-rc", "Random-coding exponent (or its no-binning variant).", variant=True)
_exponent_command("exponent-sp", "Sphere-packing upper bound (fixed P_X).", needs_px=True)
_exponent_command("exponent-sp-conj", "Strengthened sphere-packing candidate (experimental).",
                  needs_px=True)


@cli.command("exponent-wak")
@click.option("--source", required=True, type=click.Path(dir_okay=False))
@click.option("--R", "R", required=True, type=float)
@click.option("--B", "B", required=True, type=float)
@click.option("--u-size", type=int)
@click.option("--metric", type=click.Path(dir_okay=False))
@_grid_opts
@_common
def exponent_wak_cmd(source, R, B, u_size, metric, grid, refine, seed, out_dir, bits):
    """Helper source-coding exponent for a joint source."""
    _dispatch("exponent-wak", {"source": _source_matrix(_read_json(source)), "R": R, "B": B,
                               "u_size": u_size, "metric": _matrix_file(metric), "grid": grid,
                               "refine": refine, "seed": seed}, out_dir, bits)


@cli.command("lm-rate")
@click.option("--mode", type=click.Choice(["IB", "WAK"], case_sensitive=False), default="IB",
              show_default=True)
@click.option("--channel", type=click.Path(dir_okay=False))
@click.option("--source", type=click.Path(dir_okay=False))
@click.option("--B", "B", required=True, type=float)
@click.option("--metric", type=click.Path(dir_okay=False))
@click.option("--u-size", type=int)
@_common
def lm_rate_cmd(mode, channel, source, B, metric, u_size, out_dir, bits):
    """LM rate for a decoding metric (MMI by default)."""
    mode = mode.upper()
    if mode == "IB" and not channel:
        raise ValidationError("IB mode needs --channel")
    if mode == "WAK" and not source:
        raise ValidationError("WAK mode needs --source")
    params = {"mode": mode, "B": B, "metric": _matrix_file(metric), "u_size": u_size}
    if mode == "IB":
        params["channel"] = _channel(channel)
    else:
        params["source"] = _source_matrix(_read_json(source))
    _dispatch("lm-rate", params, out_dir, bits)


@cli.command("verify-covering")
@click.option("--n", "n", required=True, type=int)
@click.option("--type", "type_", required=True, help="Counts of the type, comma-separated.")
@click.option("--set", "sets", required=True, multiple=True,
              help="Member sequences as digit strings, comma-separated; repeat for a family.")
@click.option("--max-k", type=int)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--delta", type=float, default=0.5, show_default=True,
              help="Target covered fraction for families.")
@click.option("--degree", is_flag=True, help="Also check the degree profile (small n).")
@_common
def verify_covering_cmd(n, type_, sets, max_k, seed, delta, degree, out_dir, bits):
    """Permutation covering of a type class (one set) or simultaneous covering (a family)."""
    counts = _ints(type_)
    if sum(counts) != n:
        raise ValidationError(f"type counts sum to {sum(counts)}, not n={n}")
    members = [[s.strip() for s in group.split(",") if s.strip()] for group in sets]
    for m in members:
        for s in m:
            if len(s) != n or not s.isdigit():
                raise ValidationError(f"sequence {s!r} is not a length-{n} digit string")
    _dispatch("verify-covering", {"n": n, "type": counts, "sets": members, "max_k": max_k,
                                  "seed": seed, "delta": delta, "degree": degree}, out_dir, bits)


@cli.command("verify-ensemble")
@click.option("--type", "type_", required=True, help="Composition counts, comma-separated.")
@click.option("--check", type=click.Choice(["marginal", "conditional", "window",
                                            "prefix-suffix", "all"]), default="all",
              show_default=True)
@click.option("--i", "i", type=int, help="Window length / prefix split point.")
@click.option("--k", "k", type=int, default=1, show_default=True, help="Window start (1-based).")
@click.option("--delta", type=str, default="1/4", show_default=True,
              help="Typicality slack for the window check (rational or decimal).")
@click.option("--ps-delta", type=str, help="Slack for the prefix/suffix check; default n^(-1/8).")
@_common
def verify_ensemble_cmd(type_, check, i, k, delta, ps_delta, out_dir, bits):
    """Exact constant-composition laws against enumeration, and concentration bounds."""
    try:
        Fraction(delta)
        if ps_delta is not None:
            Fraction(ps_delta)
    except (ValueError, ZeroDivisionError):
        raise ValidationError("delta must be a rational or decimal number") from None
    _dispatch("verify-ensemble", {"type": _ints(type_), "check": check, "i": i, "k": k,
                                  "delta": delta, "ps_delta": ps_delta}, out_dir, bits)


def _sim_opts(f):
    f = click.option("--threads", type=int, default=1, show_default=True,
                     help="Worker threads (results do not depend on it).")(f)
    f = click.option("--seed", type=int, default=0, show_default=True)(f)
    f = click.option("--trials", type=int, default=10_000, show_default=True)(f)
    f = click.option("--B", "B", required=True, type=float)(f)
    f = click.option("--R", "R", required=True, type=float)(f)
    f = click.option("--n", "n", required=True, type=int)(f)
    f = click.option("--metric", type=click.Path(dir_okay=False),
                     help="JSON decoding metric; default MMI.")(f)
    return f


@cli.command("simulate-ib")
@click.option("--channel", required=True, type=click.Path(dir_okay=False))
@click.option("--composition", help="P_X to quantize (comma-separated); default uniform.")
@click.option("--covering", type=click.Path(dir_okay=False),
              help="JSON P_U|Y matrix for the relay; default identity (U = Y).")
@_sim_opts
@_common
def simulate_ib_cmd(channel, composition, covering, metric, n, R, B, trials, seed, threads,
                    out_dir, bits):
    """Monte Carlo of the compress-forward scheme."""
    _dispatch("simulate-ib", {"channel": _channel(channel), "composition": _floats(composition),
                              "covering": _matrix_file(covering), "metric": _matrix_file(metric),
                              "n": n, "R": R, "B": B, "trials": trials, "seed": seed},
              out_dir, bits, threads)


@cli.command("simulate-wak")
@click.option("--source", required=True, type=click.Path(dir_okay=False))
@click.option("--covering", type=click.Path(dir_okay=False),
              help="JSON P_U|Y matrix for the helper; default identity (U = Y).")
@click.option("--family-size", type=int, default=1, show_default=True,
              help="Codebooks per type sharing one simultaneous permutation cover.")
@_sim_opts
@_common
def simulate_wak_cmd(source, covering, family_size, metric, n, R, B, trials, seed, threads,
                     out_dir, bits):
    """Monte Carlo of the permutation-built helper scheme."""
    _dispatch("simulate-wak", {"source": _source_matrix(_read_json(source)),
                               "covering": _matrix_file(covering), "metric": _matrix_file(metric),
                               "family_size": family_size, "n": n, "R": R, "B": B,
                               "trials": trials, "seed": seed}, out_dir, bits, threads)


@cli.command("sweep")
@click.option("--exponent", type=click.Choice(["rc", "nb", "sp", "sp-conj", "wak"]),
              default="rc", show_default=True)
@click.option("--channel", type=click.Path(dir_okay=False))
@click.option("--source", type=click.Path(dir_okay=False))
@click.option("--R-grid", "R_grid", required=True, help="Rates in nats, comma-separated.")
@click.option("--B-grid", "B_grid", required=True, help="Bottleneck rates, comma-separated.")
@click.option("--input-dist")
@click.option("--u-size", type=int)
@click.option("--metric", type=click.Path(dir_okay=False))
@click.option("--threads", type=int, default=1, show_default=True)
@_grid_opts
@_common
def sweep_cmd(exponent, channel, source, R_grid, B_grid, input_dist, u_size, metric, threads,
              grid, refine, seed, out_dir, bits):
    """Evaluate an exponent over an (R, B) grid; writes sweep.csv."""
    params = {"exponent": exponent, "R_grid": _floats(R_grid), "B_grid": _floats(B_grid),
              "input_dist": _floats(input_dist), "u_size": u_size,
              "metric": _matrix_file(metric), "grid": grid, "refine": refine, "seed": seed}
    if exponent == "wak":
        if not source:
            raise ValidationError("the wak exponent needs --source")
        params["source"] = _source_matrix(_read_json(source))
    else:
        if not channel:
            raise ValidationError("--channel is required")
        params["channel"] = _channel(channel)
    _dispatch("sweep", params, out_dir, bits, threads)


# ----------------------------------------------------------------- entry point


def run_command(argv: list[str] | None = None) -> int:
    """Run the CLI on argv and return the exit code instead of exiting."""
    try:
        # without standalone mode click returns ctx.exit codes instead of raising
        code = cli.main(args=argv, prog_name="ibexp", standalone_mode=False)
        return code if isinstance(code, int) else EXIT_OK
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_VALIDATION
    except click.exceptions.Abort:
        return 1
    except ValidationError as e:
        click.echo(f"validation error: {e}", err=True)
        return EXIT_VALIDATION
    except ResourceError as e:
        click.echo(f"resource cap exceeded: {e}", err=True)
        return EXIT_RESOURCE
    except VerificationError as e:
        click.echo(f"verification failed: {e}", err=True)
        return EXIT_VERIFICATION
    return EXIT_OK


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
