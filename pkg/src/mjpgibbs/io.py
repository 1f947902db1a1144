"""File formats: MJP / CTBN model JSON, path and observation CSV, statistics JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .core import (
    Generator,
    InitialDistribution,
    MjpPath,
    ObservationSet,
    PointMassLikelihood,
    SufficientStats,
    TableLikelihood,
)
from .ctbn import CtbnModel
from .errors import ConfigError

_RATE_LIST = {
    "type": "array",
    "items": {
        "type": "array",
        "prefixItems": [{"type": "integer", "minimum": 0},
                        {"type": "integer", "minimum": 0},
                        {"type": "number", "minimum": 0}],
        "minItems": 3,
        "maxItems": 3,
    },
}

_TABLE = {"type": "array", "items": {"type": "array", "items": {"type": "number", "minimum": 0}}}

MJP_MODEL_SCHEMA = {
    "type": "object",
    "required": ["n", "rates", "pi"],
    "properties": {
        "n": {"type": "integer", "minimum": 1},
        "rates": _RATE_LIST,
        "pi": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "sparse": {"type": "boolean"},
        "likelihood": _TABLE,
    },
}

CTBN_MODEL_SCHEMA = {
    "type": "object",
    "required": ["nodes", "initial"],
    "properties": {
        "nodes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["states", "parents", "rates"],
                "properties": {
                    "name": {"type": "string"},
                    "states": {"type": "integer", "minimum": 1},
                    "parents": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                    "rates": {"type": "object", "additionalProperties": _RATE_LIST},
                    "sparse": {"type": "boolean"},
                    "likelihood": _TABLE,
                },
            },
        },
        "initial": {
            "oneOf": [
                {"type": "object", "required": ["product"],
                 "properties": {"product": {"type": "array", "items": {"type": "array"}}}},
                {"type": "object", "required": ["joint"],
                 "properties": {"joint": {"type": "array"}}},
            ],
        },
    },
}

STATS_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["dwell", "transitions"]},
        {"type": "array", "items": {"type": "object", "required": ["dwell", "transitions"]}},
    ],
}


def _load_json(path, schema):
    try:
        data = json.loads(Path(path).read_text())
        jsonschema.validate(data, schema)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as err:
        raise ConfigError(f"{path}: {err}") from err
    return data


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


# -- MJP models -------------------------------------------------------------------


def mjp_model_from_dict(d):
    """Returns ``(Generator, InitialDistribution, likelihood model)``."""
    jsonschema.validate(d, MJP_MODEL_SCHEMA)
    n = d["n"]
    A = Generator.from_entries(n, [tuple(e) for e in d["rates"]], sparse=d.get("sparse", False))
    pi = InitialDistribution(np.asarray(d["pi"], float))
    lik = TableLikelihood(d["likelihood"]) if "likelihood" in d else PointMassLikelihood()
    return A, pi, lik


def mjp_model_to_dict(A: Generator, pi: InitialDistribution, likelihood=None) -> dict:
    out = {
        "n": A.n,
        "rates": [[int(i), int(j), float(q)] for i, j, q in A.entries()],
        "pi": pi.weights.tolist(),
    }
    if A.is_sparse:
        out["sparse"] = True
    if isinstance(likelihood, TableLikelihood):
        out["likelihood"] = likelihood.table.tolist()
    return out


def load_mjp_model(path):
    d = _load_json(path, MJP_MODEL_SCHEMA)
    try:
        return mjp_model_from_dict(d)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def save_mjp_model(path, A, pi, likelihood=None):
    _write_json(path, mjp_model_to_dict(A, pi, likelihood))


# -- CTBN models ------------------------------------------------------------------


def ctbn_model_from_dict(d):
    """Returns ``(CtbnModel, per-node likelihood models)``."""
    jsonschema.validate(d, CTBN_MODEL_SCHEMA)
    sizes = [nd["states"] for nd in d["nodes"]]
    parents, gens, names, liks = [], [], [], []
    for k, nd in enumerate(d["nodes"]):
        ps = nd["parents"]
        n_cfg = int(np.prod([sizes[p] for p in ps])) if ps else 1
        table = nd["rates"]
        missing = [c for c in range(n_cfg) if str(c) not in table]
        if missing or len(table) != n_cfg:
            raise ConfigError(f"node {k}: rate tables must be keyed 0..{n_cfg - 1}")
        gens.append([Generator.from_entries(nd["states"], [tuple(e) for e in table[str(c)]],
                                            sparse=nd.get("sparse", False))
                     for c in range(n_cfg)])
        parents.append(ps)
        names.append(nd.get("name", f"X{k}"))
        liks.append(TableLikelihood(nd["likelihood"]) if "likelihood" in nd
                    else PointMassLikelihood())
    init = d["initial"]
    if "product" in init:
        initial = [InitialDistribution(np.asarray(w, float)) for w in init["product"]]
    else:
        initial = np.asarray(init["joint"], float)
    return CtbnModel(sizes, parents, gens, initial, names=names), liks


def ctbn_model_to_dict(model: CtbnModel, likelihoods=None) -> dict:
    nodes = []
    for k in range(model.m):
        gens = model.generators[k]
        nd = {
            "name": model.names[k],
            "states": model.n_states[k],
            "parents": list(model.parents[k]),
            "rates": {str(c): [[int(i), int(j), float(q)] for i, j, q in g.entries()]
                      for c, g in enumerate(gens)},
        }
        if all(g.is_sparse for g in gens):
            nd["sparse"] = True
        if likelihoods is not None and isinstance(likelihoods[k], TableLikelihood):
            nd["likelihood"] = likelihoods[k].table.tolist()
        nodes.append(nd)
    if model.initial_marginals is not None:
        initial = {"product": [d.weights.tolist() for d in model.initial_marginals]}
    else:
        initial = {"joint": model.initial_joint.tolist()}
    return {"nodes": nodes, "initial": initial}


def load_ctbn_model(path):
    d = _load_json(path, CTBN_MODEL_SCHEMA)
    try:
        return ctbn_model_from_dict(d)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def save_ctbn_model(path, model, likelihoods=None):
    _write_json(path, ctbn_model_to_dict(model, likelihoods))


# -- paths and observations ---------------------------------------------------------


def save_path(path, p: MjpPath):
    """CSV ``time,state``: first row at ``t_start`` then one row per jump."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "state"])
        w.writerow([repr(float(p.t_start)), int(p.states[0])])
        for t, s in zip(p.times, p.states[1:]):
            w.writerow([repr(float(t)), int(s)])


def load_path(path, t_end: float) -> MjpPath:
    rows = _read_csv(path, ["time", "state"])
    if not rows:
        raise ConfigError(f"{path}: empty path file")
    times = np.array([float(r["time"]) for r in rows])
    states = np.array([int(r["state"]) for r in rows])
    return MjpPath(times[0], float(t_end), times[1:], states)


def _read_csv(path, fields):
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or list(reader.fieldnames) != fields:
                raise ConfigError(f"{path}: expected header {','.join(fields)}")
            return list(reader)
    except OSError as err:
        raise ConfigError(f"{path}: {err}") from err


def load_mjp_observations(path, likelihood, n: int) -> ObservationSet:
    """CSV ``time,payload`` with integer payloads."""
    rows = _read_csv(path, ["time", "payload"])
    try:
        return ObservationSet([float(r["time"]) for r in rows],
                              [int(r["payload"]) for r in rows], likelihood, n)
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def save_mjp_observations(path, times, payloads):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "payload"])
        for t, x in zip(times, payloads):
            w.writerow([repr(float(t)), int(x)])


def load_ctbn_observations(path, model: CtbnModel, likelihoods) -> dict:
    """CSV ``node,time,payload``; ``node`` is an index or a node name."""
    rows = _read_csv(path, ["node", "time", "payload"])
    per = {}
    for r in rows:
        key = r["node"]
        k = model.names.index(key) if key in model.names else int(key)
        if not 0 <= k < model.m:
            raise ConfigError(f"{path}: unknown node {key!r}")
        per.setdefault(k, []).append((float(r["time"]), int(r["payload"])))
    try:
        return {k: ObservationSet([t for t, _ in v], [x for _, x in v], likelihoods[k],
                                  model.n_states[k])
                for k, v in per.items()}
    except ValueError as err:
        raise ConfigError(f"{path}: {err}") from err


def save_ctbn_observations(path, observations: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "time", "payload"])
        for k in sorted(observations):
            obs = observations[k]
            for t, x in zip(obs.times, obs.payloads):
                w.writerow([k, repr(float(t)), int(x)])


# -- statistics ---------------------------------------------------------------------


def stats_to_json(stats):
    if isinstance(stats, SufficientStats):
        return stats.to_dict()
    return [s.to_dict() for s in stats]


def stats_from_json(data):
    jsonschema.validate(data, STATS_SCHEMA)
    if isinstance(data, dict):
        return SufficientStats.from_dict(data)
    return [SufficientStats.from_dict(d) for d in data]


def save_stats(path, stats):
    _write_json(path, stats_to_json(stats))


def load_stats(path):
    return stats_from_json(_load_json(path, STATS_SCHEMA))


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
