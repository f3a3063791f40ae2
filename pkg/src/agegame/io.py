"""Reading and writing the JSON/CSV file formats (see docs/formats.md).

Every index in a file is 1-based. Floats are written with 17 significant
digits so that reading a file back gives the identical double.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .model import (
    AgeReport,
    BlockingMatrix,
    Diversity,
    GeneralK,
    NoDiversity,
    SchedulingPolicy,
    SystemConfig,
    ValidationError,
    validate_blocking,
    validate_policy,
)


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    column: int
    message: str

    def to_json(self) -> str:
        return json.dumps(
            {"file": self.path, "line": self.line, "column": self.column, "message": self.message}
        )


class FormatError(ValidationError):
    """A file could not be turned into a valid model object."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__([f"{d.path}:{d.line}:{d.column}: {d.message}" for d in diagnostics])


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float at 17 significant digits; NaN/inf become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, Fraction):
        return json.dumps(str(obj))
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# --------------------------------------------------------------------------
# low-level parsing with positions


def _position(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _load(path) -> tuple[str, object]:
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError([Diagnostic(path, 0, 0, f"cannot read file: {exc.strerror}")]) from exc
    try:
        return text, json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError([Diagnostic(path, exc.lineno, exc.colno, exc.msg)]) from exc


def _array_offsets(text: str) -> list[int]:
    """Start offsets of the elements of a top-level JSON array."""
    decoder = json.JSONDecoder()
    ws = re.compile(r"[ \t\n\r]*")
    i = ws.match(text, 0).end()
    if text[i : i + 1] != "[":
        return []
    i = ws.match(text, i + 1).end()
    offsets = []
    while i < len(text) and text[i] != "]":
        offsets.append(i)
        _, i = decoder.raw_decode(text, i)
        i = ws.match(text, i).end()
        if text[i : i + 1] == ",":
            i = ws.match(text, i + 1).end()
    return offsets


def _key_position(text: str, key: str) -> tuple[int, int]:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return _position(text, m.start()) if m else (1, 1)


# --------------------------------------------------------------------------
# config


def _variant_from_json(v):
    if v is None:
        return NoDiversity()
    if isinstance(v, str):
        v = {"type": v}
    if not isinstance(v, dict):
        raise ValueError("variant must be an object with a 'type'")
    kind = v.get("type", "no_diversity")
    if kind == "no_diversity":
        return NoDiversity()
    if kind == "diversity":
        return Diversity(int(v["n_subcarriers"]))
    if kind == "general_k":
        return GeneralK(int(v["k"]), int(v.get("k_a", 1)))
    raise ValueError(f"unknown variant type {kind!r}")


def config_from_dict(d: dict) -> SystemConfig:
    fields = dict(
        n_users=d["n_users"],
        horizon=d["horizon"],
        alpha=Fraction(d["alpha"]) if isinstance(d["alpha"], str) else d["alpha"],
        variant=_variant_from_json(d.get("variant")),
    )
    if "age_indexing" in d:
        fields["age_indexing"] = d["age_indexing"]
    if d.get("budget") is not None:
        fields["budget"] = d["budget"]
    return SystemConfig(**fields)


def config_to_dict(config: SystemConfig) -> dict:
    v = config.variant
    variant: dict = {"type": v.name}
    if isinstance(v, Diversity):
        variant["n_subcarriers"] = v.n_subcarriers
    elif isinstance(v, GeneralK):
        variant.update(k=v.k, k_a=v.k_a)
    return {
        "n_users": config.n_users,
        "horizon": config.horizon,
        "alpha": str(config.alpha),
        "budget": config.budget,
        "variant": variant,
        "age_indexing": config.age_indexing,
    }


_CONFIG_KEYS = {"n_users", "horizon", "alpha", "budget", "variant", "age_indexing"}

# word in a validation message -> config key it is about
_PROBLEM_KEYS = {
    "budget": "budget",
    "age_indexing": "age_indexing",
    "alpha": "alpha",
    "horizon": "horizon",
    "n_users": "n_users",
    "k": "variant",
    "diversity": "variant",
    "variant": "variant",
}


def read_config(path) -> SystemConfig:
    text, data = _load(path)
    path = str(path)
    if not isinstance(data, dict):
        raise FormatError([Diagnostic(path, 1, 1, "config must be a JSON object")])
    diags = []
    for key in ("n_users", "horizon", "alpha"):
        if key not in data:
            diags.append(Diagnostic(path, 1, 1, f"missing key {key!r}"))
    for key in data:
        if key not in _CONFIG_KEYS:
            line, col = _key_position(text, key)
            diags.append(Diagnostic(path, line, col, f"unknown key {key!r}"))
    if diags:
        raise FormatError(diags)
    try:
        return config_from_dict(data)
    except ValidationError as exc:
        diags = []
        for problem in exc.problems:
            key = next((k for k in _PROBLEM_KEYS if k in problem), "n_users")
            key = _PROBLEM_KEYS.get(key, key)
            if key not in data:
                key = "alpha" if key == "budget" else "n_users"
            line, col = _key_position(text, key)
            diags.append(Diagnostic(path, line, col, problem))
        raise FormatError(diags) from exc
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        line, col = _key_position(text, "variant")
        raise FormatError([Diagnostic(path, line, col, f"bad value: {exc}")]) from exc


def write_config(config: SystemConfig, path) -> None:
    Path(path).write_text(dumps(config_to_dict(config)) + "\n")


# --------------------------------------------------------------------------
# policy


def policy_to_json(policy: SchedulingPolicy):
    if policy.subcarrier_pmf is None:
        return policy.user_pmf.tolist()
    return {"user_pmf": policy.user_pmf.tolist(), "subcarrier_pmf": policy.subcarrier_pmf.tolist()}


def read_policy(path, config: SystemConfig) -> SchedulingPolicy:
    """A bare array of user probabilities, or ``{"user_pmf", "subcarrier_pmf"}``."""
    text, data = _load(path)
    path = str(path)
    if isinstance(data, list):
        data = {"user_pmf": data}
    if not isinstance(data, dict) or "user_pmf" not in data:
        raise FormatError([Diagnostic(path, 1, 1, "policy must be an array or hold 'user_pmf'")])
    try:
        policy = SchedulingPolicy(
            np.asarray(data["user_pmf"], dtype=float),
            None
            if data.get("subcarrier_pmf") is None
            else np.asarray(data["subcarrier_pmf"], dtype=float),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError([Diagnostic(path, 1, 1, f"bad probability vector: {exc}")]) from exc
    problems = validate_policy(config, policy)
    if problems:
        line, col = _key_position(text, "user_pmf") if "user_pmf" in text else (1, 1)
        raise FormatError([Diagnostic(path, line, col, p) for p in problems])
    return policy


def write_policy(policy: SchedulingPolicy, path) -> None:
    Path(path).write_text(dumps(policy_to_json(policy)) + "\n")


# --------------------------------------------------------------------------
# blocking


def blocking_to_json(sigma: BlockingMatrix) -> list[dict]:
    out = []
    w = sigma.weights
    for t in range(sigma.horizon):
        targets = np.flatnonzero(w[:, t])
        if targets.size == 0:
            continue
        entry: dict = {"slot": t + 1, "targets": [int(i) + 1 for i in targets]}
        if np.any(w[targets, t] != 1):
            entry["weights"] = [float(x) for x in w[targets, t]]
        out.append(entry)
    return out


def blocking_from_json(entries, n_targets: int, horizon: int) -> BlockingMatrix:
    return _parse_blocking(entries, n_targets, horizon, "<memory>", None)


def _parse_blocking(entries, n_targets, horizon, path, offsets) -> BlockingMatrix:
    def where(i):
        if offsets is None or i >= len(offsets):
            return 1, 1
        return offsets[i]

    if not isinstance(entries, list):
        raise FormatError([Diagnostic(path, 1, 1, "blocking file must be a JSON array")])
    w = np.zeros((n_targets, horizon))
    seen = set()
    diags = []
    for i, e in enumerate(entries):
        line, col = where(i)

        def bad(msg):
            diags.append(Diagnostic(path, line, col, msg))

        if not isinstance(e, dict) or "slot" not in e or "targets" not in e:
            bad("entry needs 'slot' and 'targets'")
            continue
        slot, targets = e["slot"], e["targets"]
        weights = e.get("weights", [1.0] * len(targets) if isinstance(targets, list) else None)
        if not isinstance(slot, int) or isinstance(slot, bool) or not 1 <= slot <= horizon:
            bad(f"slot {slot!r} outside 1..{horizon}")
            continue
        if slot in seen:
            bad(f"slot {slot} listed twice")
            continue
        seen.add(slot)
        if not isinstance(targets, list) or not isinstance(weights, list) or len(weights) != len(targets):
            bad("'targets' must be a list, with 'weights' of the same length if given")
            continue
        for tg, wt in zip(targets, weights):
            if not isinstance(tg, int) or isinstance(tg, bool) or not 1 <= tg <= n_targets:
                bad(f"target {tg!r} outside 1..{n_targets}")
            elif not isinstance(wt, (int, float)) or not 0 <= wt <= 1:
                bad(f"weight {wt!r} outside [0, 1]")
            else:
                w[tg - 1, slot - 1] = wt
    if diags:
        raise FormatError(diags)
    return BlockingMatrix(w)


def read_blocking(path, config: SystemConfig) -> BlockingMatrix:
    text, data = _load(path)
    path = str(path)
    offsets = [_position(text, o) for o in _array_offsets(text)]
    sigma = _parse_blocking(data, config.n_targets, config.horizon, path, offsets)
    problems = validate_blocking(config, sigma)
    if problems:
        raise FormatError([Diagnostic(path, 1, 1, p) for p in problems])
    return sigma


def write_blocking(sigma: BlockingMatrix, path) -> None:
    Path(path).write_text(dumps(blocking_to_json(sigma)) + "\n")


# --------------------------------------------------------------------------
# results


def age_summary(report: AgeReport) -> dict:
    return {"per_user": report.per_user.tolist(), "system_average": report.system_average}


def write_age_csv(report: AgeReport, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["slot", "user", "expected_age"])
        n, horizon = report.per_slot.shape
        for t in range(horizon):
            for i in range(n):
                out.writerow([t + 1, i + 1, fmt(report.per_slot[i, t])])


def write_sim_csv(per_rep: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["rep", "user", "mean_age"])
        for r, row in enumerate(per_rep):
            for i, x in enumerate(row):
                out.writerow([r + 1, i + 1, fmt(x)])


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n")


__all__ = [
    "Diagnostic",
    "FormatError",
    "age_summary",
    "blocking_from_json",
    "blocking_to_json",
    "config_from_dict",
    "config_to_dict",
    "dumps",
    "fmt",
    "policy_to_json",
    "read_blocking",
    "read_config",
    "read_policy",
    "write_age_csv",
    "write_blocking",
    "write_config",
    "write_json",
    "write_policy",
    "write_sim_csv",
]
