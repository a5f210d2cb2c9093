"""File formats.

Long format (raw samples)::

    time,value
    1,0.231
    1,0.518
    2,0.307

Quantile matrix (one column per time point, one row per probability level)::

    level,t1,t2
    0.0,0.0,0.01
    0.5,0.49,0.52
    1.0,1.0,0.98

When the level column starts at 0 and ends at 1 the outer rows are taken as
the essential infimum and supremum, so files written by
:func:`write_quantile_csv` read back exactly.

Fits are stored as JSON with a ``schema``/``version`` header.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .distributions import DegenerateInputError, Distribution, SampleBatch, from_samples
from .grid import Grid, ProbGrid
from .models import Atm1Fit, AtmPFit, CatFit, FitConfig

FIT_SCHEMA = "transport_ar/fit"
FIT_VERSION = 1
SUMMARY_SCHEMA = "transport_ar/mc-summary"


class FormatError(ValueError):
    """Input file does not follow one of the documented layouts."""


def _float(text: str, where: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise FormatError(f"{where}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise FormatError(f"{where}: non-finite value {text!r}")
    return v


def _read_rows(path) -> list[list[str]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    if len(rows) < 2:
        raise FormatError(f"{path}: expected a header and at least one data row")
    return [[c.strip() for c in r] for r in rows]


def sniff_format(path) -> str:
    header = _read_rows(path)[0]
    first = header[0].lower()
    if len(header) == 2 and first in ("time", "t") and header[1].lower() in ("value", "x", "y"):
        return "long"
    if first in ("level", "prob", "probability", "u"):
        return "quantile"
    raise FormatError(f"{path}: unrecognised header {header!r}; expected 'time,value' or 'level,...'")


def read_long_csv(path) -> list[SampleBatch]:
    rows = _read_rows(path)
    groups: dict = {}
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != 2:
            raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(r)}")
        t = _float(r[0], f"{path}:{lineno}")
        groups.setdefault(t, []).append(_float(r[1], f"{path}:{lineno}"))
    out = []
    for t in sorted(groups):
        label = int(t) if float(t).is_integer() else t
        out.append(SampleBatch(label, np.array(groups[t])))
    return out


def read_quantile_csv(path) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Returns ``(levels, time labels, values)`` with ``values`` of shape ``(K, n)``."""
    rows = _read_rows(path)
    header = rows[0]
    if len(header) < 2:
        raise FormatError(f"{path}: need a level column and at least one time column")
    times = header[1:]
    levels, vals = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {len(r)}")
        levels.append(_float(r[0], f"{path}:{lineno}"))
        vals.append([_float(c, f"{path}:{lineno}") for c in r[1:]])
    levels = np.array(levels)
    vals = np.array(vals)
    if np.any(np.diff(levels) <= 0) or levels[0] < 0 or levels[-1] > 1:
        raise FormatError(f"{path}: levels must be strictly increasing within [0, 1]")
    if np.any(np.diff(vals, axis=0) < 0):
        raise FormatError(f"{path}: quantile columns must be non-decreasing")
    return levels, times, vals


def quantile_matrix_to_distributions(levels, values, support: Grid) -> list[Distribution]:
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=float)
    closed = levels[0] == 0.0 and levels[-1] == 1.0
    if closed:
        if levels.size < 3:
            raise FormatError("closed level sets need at least one interior level")
        prob = ProbGrid(levels=levels[1:-1])
        return [Distribution(support, prob, col) for col in values.T]
    prob = ProbGrid(levels=levels)
    return [Distribution.from_quantile(support, prob, col) for col in values.T]


def load_distributions(path, grid_size: int = 101, prob_size: int = 201, support=None,
                       fmt: str = "auto") -> tuple[list, list[Distribution]]:
    """Read either layout into distributions on a shared support.

    The support defaults to the range of the data.  Quantile files keep their
    own probability levels; ``prob_size`` applies to raw samples.
    """
    if fmt == "auto":
        fmt = sniff_format(path)
    if fmt == "long":
        batches = read_long_csv(path)
        allv = np.concatenate([b.values for b in batches])
        lo, hi = (float(allv.min()), float(allv.max())) if support is None else support
        grid = _support_grid(lo, hi, grid_size)
        prob = ProbGrid(prob_size)
        return [b.time_index for b in batches], [from_samples(b, grid, prob) for b in batches]
    if fmt == "quantile":
        levels, times, vals = read_quantile_csv(path)
        lo, hi = (float(vals.min()), float(vals.max())) if support is None else support
        grid = _support_grid(lo, hi, grid_size)
        return times, quantile_matrix_to_distributions(levels, vals, grid)
    raise FormatError(f"unknown format {fmt!r}")


def _support_grid(lo: float, hi: float, m: int) -> Grid:
    if not hi > lo:
        raise DegenerateInputError(f"degenerate support [{lo}, {hi}]; all values are equal")
    return Grid(lo, hi, m)


def write_quantile_csv(path, dists, times=None) -> None:
    """Closed quantiles (levels 0 and 1 included) so the file reads back exactly.

    ``path`` may also be an open text stream.
    """
    dists = list(dists)
    if not dists:
        raise ValueError("nothing to write")
    times = list(times) if times is not None else [f"t{i + 1}" for i in range(len(dists))]
    levels = dists[0].prob.closed_levels
    if hasattr(path, "write"):
        _write_quantiles(path, dists, times, levels)
        return
    with Path(path).open("w", newline="") as fh:
        _write_quantiles(fh, dists, times, levels)


def _write_quantiles(fh, dists, times, levels):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["level"] + [str(t) for t in times])
    for k, u in enumerate(levels):
        w.writerow([repr(float(u))] + [repr(float(d.closed_quantile[k])) for d in dists])


def write_long_csv(path, batches) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for b in batches:
            for v in b.values:
                w.writerow([b.time_index, repr(float(v))])


# -- fits -----------------------------------------------------------------


def fit_to_json(fit, variant: str, support: Grid, config: FitConfig | None = None,
                seed: int | None = None, extra: dict | None = None) -> dict:
    body = fit.to_dict()
    doc = {
        "schema": FIT_SCHEMA,
        "version": FIT_VERSION,
        "variant": variant,
        "support": {"s1": support.s1, "s2": support.s2, "m": support.m},
        **body,
        "config": asdict(config) if config is not None else None,
        "seed": seed,
    }
    if extra:
        doc.update(extra)
    return doc


def fit_from_json(doc: dict):
    if doc.get("schema") != FIT_SCHEMA:
        raise FormatError(f"not a fit document (schema={doc.get('schema')!r})")
    if doc.get("version") != FIT_VERSION:
        raise FormatError(f"unsupported fit schema version {doc.get('version')!r}")
    try:
        if doc["model"] == "cat":
            b = doc["beta"]
            x = np.array(b["x"], dtype=float)
            return CatFit(x, np.array(b["beta"], dtype=float), np.array(b["sign"]),
                          np.array(b["degenerate"], dtype=bool), np.full(x.size, np.nan), np.full(x.size, np.nan))
        alphas = tuple(float(a) for a in doc["alphas"])
        if doc["p"] == 1 and "rho" in doc:
            losses = doc["losses"]
            return Atm1Fit(alphas[0], losses["plus"], losses["minus"], doc["chosen_sign"], doc["rho"])
        losses = doc.get("losses", {})
        return AtmPFit(alphas, list(losses.get("trace", [])), doc.get("iterations", 0),
                       doc.get("converged", True), doc.get("diagnostics", {}))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed fit document: {exc}") from None


def save_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")


def load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read JSON from {path}: {exc}") from None


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# -- experiments ------------------------------------------------------------

_LIST_KEYS = {"alphas": float, "models": str, "candidates": int}
_INT_KEYS = {"n", "n_train", "replications", "seed", "presample", "burn_in", "grid_size", "prob_size"}


def read_experiment_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower().replace("-", "_")
        try:
            if key in _LIST_KEYS:
                conv = _LIST_KEYS[key]
                out[key] = tuple(conv(v.strip()) for v in value.split(",") if v.strip())
            elif key in _INT_KEYS:
                out[key] = int(value)
            elif key == "lag_fix":
                out[key] = value.lower() in ("1", "true", "yes", "on")
            elif key in ("generator", "noise"):
                out[key] = value
            else:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def write_results_csv(path, records) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "model", "error"])
        for rep, model, err in records:
            w.writerow([rep, model, repr(float(err))])
