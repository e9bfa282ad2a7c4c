"""CSV ingestion and export, run configuration, draws archives and report tables."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .diagnostics import convergence_table, summarize
from .event_data import Dataset, DataError, Subject
from .mcmc import McmcConfig, PosteriorDraws
from .priors import GammaProcessPrior, MeanCHF, ModelPriors, ParametricPriors

SCHEMA_VERSION = 1
SUBJECT_FIXED = ("id", "followup_end", "terminal_time")
EVENT_COLUMNS = ("id", "event_type", "time")


def fmt_time(x: float) -> str:
    """Decimal string with 12 significant digits."""
    return f"{float(x):.12g}"


def fmt_value(x: float) -> str:
    """Exact round-trip representation for stored draws."""
    return repr(float(x))


# -- provenance ---------------------------------------------------------------

def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(config: dict | None, seed) -> dict:
    return {"config_hash": config_hash(config or {}), "seed": seed, "version": __version__}


def _comment_lines(prov: dict | None) -> list[str]:
    if not prov:
        return []
    return [f"# {k}: {prov[k]}" for k in ("config_hash", "seed", "version")]


def _open_csv_rows(path):
    """Non-comment rows of a CSV file with their 1-based line numbers."""
    with open(path, newline="") as fh:
        lines = [(n, line) for n, line in enumerate(fh, start=1) if not line.startswith("#")]
    reader = csv.reader([line for _, line in lines])
    return [(n, row) for (n, _), row in zip(lines, reader) if row]


def write_csv(path, header: list[str], rows: list[list], prov: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in _comment_lines(prov):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_json(path, obj: dict, prov: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = {"provenance": prov, **obj} if prov else obj
    path.write_text(json.dumps(out, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


# -- datasets -----------------------------------------------------------------

def _number(text: str, path, line: int, column: str) -> float:
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"{path}, row {line}: {column} is not numeric ({text!r})") from None
    if not math.isfinite(val):
        raise DataError(f"{path}, row {line}: {column} is not finite")
    return val


def load_dataset(subjects_path, events_path, n_types: int | None = None) -> Dataset:
    """Read a subjects CSV and a long-format events CSV into a validated Dataset.

    Subjects: ``id``, covariate columns, ``followup_end``, ``terminal_time``
    (empty when censored). Events: ``id``, ``event_type`` (1..Q), ``time``.
    ``n_types`` defaults to the largest event type seen (at least 1).
    Lines starting with ``#`` are ignored.
    """
    rows = _open_csv_rows(subjects_path)
    if not rows:
        raise DataError(f"{subjects_path}: missing header")
    _, header = rows[0]
    missing = [c for c in SUBJECT_FIXED if c not in header]
    if missing:
        raise DataError(f"{subjects_path}: missing columns {missing}")
    if len(set(header)) != len(header):
        raise DataError(f"{subjects_path}: duplicate column names")
    cov_names = [c for c in header if c not in SUBJECT_FIXED]
    col = {c: header.index(c) for c in header}

    records = {}
    for line, row in rows[1:]:
        if len(row) != len(header):
            raise DataError(f"{subjects_path}, row {line}: expected {len(header)} fields, got {len(row)}")
        sid = row[col["id"]].strip()
        if not sid:
            raise DataError(f"{subjects_path}, row {line}: empty id")
        if sid in records:
            raise DataError(f"{subjects_path}, row {line}: duplicate subject id {sid!r}")
        x = [_number(row[col[c]], subjects_path, line, c) for c in cov_names]
        end = _number(row[col["followup_end"]], subjects_path, line, "followup_end")
        term_text = row[col["terminal_time"]].strip()
        term = None if term_text == "" else _number(term_text, subjects_path, line, "terminal_time")
        if end < 0:
            raise DataError(f"{subjects_path}, row {line}: followup_end must be >= 0")
        if term is not None and not 0 < term <= end:
            raise DataError(f"{subjects_path}, row {line}: terminal_time must lie in (0, followup_end]")
        records[sid] = (x, end, term, line)

    events: dict[str, dict[int, list[tuple[float, int]]]] = {sid: {} for sid in records}
    ev_rows = _open_csv_rows(events_path)
    q_max = 0
    if ev_rows:
        _, eh = ev_rows[0]
        if list(eh) != list(EVENT_COLUMNS):
            raise DataError(f"{events_path}: header must be {','.join(EVENT_COLUMNS)}")
        seen = set()
        for line, row in ev_rows[1:]:
            if len(row) != 3:
                raise DataError(f"{events_path}, row {line}: expected 3 fields, got {len(row)}")
            sid = row[0].strip()
            if sid not in records:
                raise DataError(f"{events_path}, row {line}: unknown subject id {sid!r}")
            q = _number(row[1], events_path, line, "event_type")
            if q != int(q) or q < 1:
                raise DataError(f"{events_path}, row {line}: event_type must be an integer >= 1")
            q = int(q)
            if n_types is not None and q > n_types:
                raise DataError(f"{events_path}, row {line}: event_type {q} exceeds {n_types} types")
            t = _number(row[2], events_path, line, "time")
            _, end, term, _ = records[sid]
            exit_time = end if term is None else term
            if t <= 0:
                raise DataError(f"{events_path}, row {line}: event time must be > 0")
            if t > end:
                raise DataError(f"{events_path}, row {line}: event at {t} after followup_end {end}")
            if t > exit_time:
                raise DataError(f"{events_path}, row {line}: event at {t} after terminal event {term}")
            key = (sid, q, t)
            if key in seen:
                raise DataError(f"{events_path}, row {line}: duplicate event {sid!r} type {q} at {t}")
            seen.add(key)
            events[sid].setdefault(q, []).append((t, line))
            q_max = max(q_max, q)

    Q = n_types if n_types is not None else max(q_max, 1)
    subjects = []
    for sid, (x, end, term, line) in records.items():
        rec = tuple(np.sort([t for t, _ in events[sid].get(q, [])]) for q in range(1, Q + 1))
        try:
            subjects.append(Subject(sid, np.asarray(x), end, term, rec))
        except DataError as exc:
            raise DataError(f"{subjects_path}, row {line}: {exc}") from None
    return Dataset(tuple(subjects), Q, len(cov_names), tuple(cov_names))


def export_dataset(dataset: Dataset, subjects_path, events_path, prov: dict | None = None) -> None:
    """Canonical CSV export: subjects in dataset order, events by subject, type, time."""
    names = list(dataset.covariate_names)
    srows, erows = [], []
    for s in dataset.subjects:
        term = "" if s.terminal_time is None else fmt_time(s.terminal_time)
        srows.append([str(s.id), *(fmt_time(v) for v in s.covariates), fmt_time(s.followup_end), term])
        for q, times in enumerate(s.recurrent_times, start=1):
            erows.extend([str(s.id), q, fmt_time(t)] for t in times)
    write_csv(subjects_path, ["id", *names, "followup_end", "terminal_time"], srows, prov)
    write_csv(events_path, list(EVENT_COLUMNS), erows, prov)


# -- configuration --------------------------------------------------------------

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer", "minimum": 0}
_NUMS = {"type": "array", "items": _NUM}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_MEAN_CHF = _obj({"family": {"enum": ["weibull", "exponential"]}, "scale": _POS, "shape": _POS},
                 ["family", "scale"])

CONFIG_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "seed": _INT,
    "workers": {"type": "integer", "minimum": 1},
    "out": {"type": "string"},
    "data": _obj({"subjects": {"type": "string"}, "events": {"type": "string"},
                  "n_types": {"type": "integer", "minimum": 1}}, ["subjects", "events"]),
    "draws": {"type": "string"},
    "scenario": _obj({
        "n": _INT, "nu_true": _POS, "weibull_shape": _POS,
        "recurrent_scales": {"type": "array", "items": _POS, "minItems": 1},
        "terminal_scale": _POS,
        "alpha_true": {"type": "array"},
        "gamma_true": _NUMS,
        "beta_true": {"type": "array", "items": _NUMS},
        "tau": _POS, "censor_low": _NUM, "censor_high": _NUM,
        "covariates": {"type": "array", "items": {"type": "array"}},
    }),
    "priors": _obj({
        "precision": _POS,
        "mean_chf": {"type": "array", "items": _MEAN_CHF},
        "beta_var": _POS, "nu_shape": _POS, "nu_rate": _POS,
        "dyn_shape": _POS, "dyn_rate": _POS,
    }),
    "mcmc": _obj({
        "iterations": {"type": "integer", "minimum": 1},
        "burn_in": _INT,
        "thin": {"type": "integer", "minimum": 1},
        "n_chains": {"type": "integer", "minimum": 1},
        "update_mode": {"enum": ["sample", "posterior_mean"]},
        "dynamic_structure": {"enum": ["same_type", "full"]},
        "population_size": {"type": ["integer", "null"], "minimum": 4},
        "init_jitter": {"type": "number", "minimum": 0},
        "nu_proposal_scale": _POS,
        "adapt_every": {"type": "integer", "minimum": 1},
        "demc_jitter": {"type": "number", "minimum": 0},
        "big_step_every": _INT,
        "store_full_frailties": {"type": "boolean"},
    }),
    "replicate": _obj({
        "R": {"type": "integer", "minimum": 2},
        "arms": {"type": "array",
                 "items": {"enum": ["standard", "strong", "weak", "vague", "misspecified"]}},
    }),
    "survival_times": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    "survival_marginal": {"type": "boolean"},
}, ["schema_version"])


def load_config(path) -> dict:
    """Read and validate a JSON run configuration; relative paths resolve against its folder."""
    path = Path(path)
    cfg = json.loads(path.read_text())
    validate_config(cfg)
    base = path.resolve().parent
    if "data" in cfg:
        for k in ("subjects", "events"):
            cfg["data"][k] = str((base / cfg["data"][k]).resolve())
    for k in ("draws", "out"):
        if k in cfg:
            cfg[k] = str((base / cfg[k]).resolve())
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"invalid config at {where}: {exc.message}") from None


def mcmc_config(cfg: dict, seed: int, workers: int) -> McmcConfig:
    return McmcConfig(**{**cfg.get("mcmc", {}), "seed": seed, "workers": workers})


def model_priors(cfg: dict, n_types: int, n_covariates: int, default_means=None) -> ModelPriors:
    """Priors from the ``priors`` config block.

    ``mean_chf`` lists one entry per process (terminal first); without it
    ``default_means`` is used, else unit-rate exponential means.
    """
    pc = cfg.get("priors", {})
    P = n_types + 1
    if "mean_chf" in pc:
        means = [MeanCHF.from_dict(d) for d in pc["mean_chf"]]
    elif default_means is not None:
        means = list(default_means)
    else:
        means = [MeanCHF("exponential", 1.0)] * P
    if len(means) != P:
        raise ValueError(f"priors.mean_chf needs {P} entries (terminal first)")
    c = pc.get("precision", 0.1)
    parametric = ParametricPriors.default(
        n_types, n_covariates, pc.get("beta_var", 1.0), pc.get("nu_shape", 1.0),
        pc.get("nu_rate", 1.0), pc.get("dyn_shape", 0.5), pc.get("dyn_rate", 2.0))
    return ModelPriors([GammaProcessPrior(c, m) for m in means], parametric)


# -- draws archive ------------------------------------------------------------

def _chain_iter_rows(values: np.ndarray, iterations: np.ndarray) -> list[list]:
    C, K = values.shape[:2]
    flat = values.reshape(C, K, -1)
    iterations = np.broadcast_to(iterations, (C, K))
    return [[c, int(iterations[c, k]), *(fmt_value(v) for v in flat[c, k])]
            for c in range(C) for k in range(K)]


def write_draws(draws: PosteriorDraws, directory, prov: dict | None = None) -> Path:
    """Directory of per-block CSV files plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    it = draws.iterations
    files = {"parameters": "parameters.csv", "log_likelihood": "log_likelihood.csv",
             "frailty_means": "frailty_means.csv", "grid": "grid.csv"}
    blocks = {}
    for name in draws.names:
        block = name.split("_")[0]
        blocks.setdefault(block, []).append(name)
    write_csv(d / files["parameters"], ["chain", "iteration", *draws.names],
              _chain_iter_rows(draws.values, it), prov)
    write_csv(d / files["log_likelihood"], ["chain", "iteration", "log_likelihood"],
              _chain_iter_rows(draws.log_likelihood[..., None], it), prov)
    n = draws.frailty_means.shape[-1]
    write_csv(d / files["frailty_means"], ["chain", "iteration", *(f"W{i + 1}" for i in range(n))],
              _chain_iter_rows(draws.frailty_means, it), prov)
    write_csv(d / files["grid"], ["j", "time"],
              [[j + 1, fmt_value(t)] for j, t in enumerate(draws.grid_times)], prov)
    for p in range(draws.increments.shape[2]):
        key = f"increments_{p}"
        files[key] = f"{key}.csv"
        write_csv(d / files[key], ["chain", "iteration", *(f"d{j + 1}" for j in range(draws.grid_times.size))],
                  _chain_iter_rows(draws.increments[:, :, p, :], it), prov)
    manifest = {
        "format": "dynfrail-draws",
        "schema_version": SCHEMA_VERSION,
        "names": draws.names,
        "blocks": blocks,
        "n_chains": draws.n_chains,
        "n_kept": draws.n_kept,
        "n_types": draws.n_types,
        "n_covariates": draws.n_covariates,
        "covariate_names": list(draws.covariate_names),
        "files": files,
        "metadata": draws.metadata,
    }
    write_json(d / "manifest.json", manifest, prov)
    return d


def _read_matrix(path, n_chains: int, n_kept: int):
    rows = _open_csv_rows(path)[1:]
    arr = np.array([[float(v) for v in r] for _, r in rows])
    if arr.shape[0] != n_chains * n_kept:
        raise DataError(f"{path}: expected {n_chains * n_kept} rows, found {arr.shape[0]}")
    it = arr[:, 1].astype(int).reshape(n_chains, n_kept)[0]
    return arr[:, 2:].reshape(n_chains, n_kept, -1), it


def read_draws(directory) -> PosteriorDraws:
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"{d} is not a draws archive (no manifest.json)")
    m = json.loads(mpath.read_text())
    if m.get("format") != "dynfrail-draws":
        raise DataError(f"{mpath}: unrecognized archive format")
    C, K = m["n_chains"], m["n_kept"]
    files = m["files"]
    values, it = _read_matrix(d / files["parameters"], C, K)
    ll, _ = _read_matrix(d / files["log_likelihood"], C, K)
    fm, _ = _read_matrix(d / files["frailty_means"], C, K)
    grid = np.array([float(r[1]) for _, r in _open_csv_rows(d / files["grid"])[1:]])
    incs = np.stack([_read_matrix(d / files[f"increments_{p}"], C, K)[0]
                     for p in range(m["n_types"] + 1)], axis=2)
    return PosteriorDraws(
        names=list(m["names"]), values=values, increments=incs, frailty_means=fm,
        log_likelihood=ll[..., 0], iterations=it, grid_times=grid, n_types=m["n_types"],
        n_covariates=m["n_covariates"], covariate_names=list(m["covariate_names"]),
        metadata=m.get("metadata", {}),
    )


# -- report tables --------------------------------------------------------------

def _label(name: str, draws: PosteriorDraws, event_names=None) -> tuple[str, str]:
    """(event, variable) labels for the posterior summary table."""
    parts = name.split("_")
    events = event_names or ["terminal", *(f"type {q}" for q in range(1, draws.n_types + 1))]
    if parts[0] == "beta":
        q, k = int(parts[1][0]), int(parts[1][1:])
        return events[q], draws.covariate_names[k - 1]
    return "", name


def summary_rows(draws: PosteriorDraws, level: float = 0.95) -> list[list]:
    """Event, Variable, Estimate, Standard Error, Lower CI, Upper CI, Hazard Ratio."""
    rows = []
    for r in summarize(draws, level):
        event, var = _label(r.name, draws)
        hr = "" if r.hazard_ratio is None else f"{r.hazard_ratio:.6g}"
        rows.append([event, var, r.name, f"{r.mean:.6g}", f"{r.std_error:.6g}",
                     f"{r.lower:.6g}", f"{r.upper:.6g}", hr])
    return rows


SUMMARY_HEADER = ["Event", "Variable", "Parameter", "Estimate", "Standard Error",
                  "Lower CI", "Upper CI", "Hazard Ratio"]


def diagnostics_rows(draws: PosteriorDraws) -> tuple[list[str], list[list]]:
    """Stat rows (R-hat, ESS, ESS(%)) with one column per parameter, nu first."""
    table = {r["parameter"]: r for r in convergence_table(draws)}
    order = ["nu"] + [n for n in draws.names if n != "nu"]
    header = ["Stat", *order]
    rows = [
        ["R-hat", *(f"{table[n]['rhat']:.4f}" for n in order)],
        ["ESS", *(f"{table[n]['ess']:.1f}" for n in order)],
        ["ESS(%)", *(f"{table[n]['ess_pct']:.1f}" for n in order)],
    ]
    return header, rows
