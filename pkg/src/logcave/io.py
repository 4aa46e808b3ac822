"""CSV and JSON serialization for datasets, models, and profiles.

Floats are written with shortest round-trip formatting, so files regenerate
bit-identically from identical values and models reload with the exact tent
vector that was fitted.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ParseError
from .hull import Dataset, make_dataset
from .solver import FittedModel, RunRecord

PROFILE_COLUMNS = ["t", "wall_seconds", "m_t", "obj", "best_obj", "rel_obj"]

KIND_TO_CLI = {"logconcave": "logconcave", "log_concave": "logconcave",
               "s_concave_mle": "smle", "quasi_concave_renyi": "renyi"}
CLI_TO_KIND = {"logconcave": "log_concave", "smle": "s_concave_mle",
               "renyi": "quasi_concave_renyi"}


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_dataset_csv(path, points) -> None:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    d = points.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{k + 1}" for k in range(d)])
        for row in points:
            writer.writerow([_fmt(float(v)) for v in row])


def read_dataset_csv(path, standardize: bool = False) -> Dataset:
    """Parse a numeric CSV into a validated Dataset.

    With ``standardize`` each column is divided by its sample standard
    deviation (columns are not centered).  Duplicate rows and degenerate
    geometry raise the corresponding package errors; malformed numbers raise
    ``ParseError`` with the 1-based line number.
    """
    rows = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = None
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if header is None:
                try:
                    rows.append([float(c) for c in row])
                except ValueError:
                    header = row
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    if not rows:
        raise ParseError("no data rows found")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ParseError(f"inconsistent column counts {sorted(widths)}")
    pts = np.array(rows, dtype=float)
    if standardize:
        sd = pts.std(axis=0, ddof=1)
        if np.any(sd <= 0):
            raise ParseError("a column has zero variance; cannot standardize")
        pts = pts / sd
    return make_dataset(pts)


def model_to_dict(model: FittedModel) -> dict:
    return {
        "format": "logcave-model-v1",
        "objective": KIND_TO_CLI.get(model.objective_kind, model.objective_kind),
        "s": model.s,
        "phi": [float(v) for v in model.phi],
        "points": [[float(v) for v in row] for row in model.points],
        "delta": model.delta,
        "vertex_count": model.vertex_count,
        "final_objective": model.final_objective,
        "integral_check": model.integral_check,
        "method": model.method,
        "seed": model.seed,
        "schedule": model.schedule,
        "timings": model.timings,
        "containment_violations": model.containment_violations,
        "parameters": model.parameters,
    }


def write_model_json(path, model: FittedModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_model_json(path) -> FittedModel:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("format") != "logcave-model-v1":
        raise ParseError(f"not a model file: {path}")
    return FittedModel(
        phi=np.array(data["phi"], dtype=float),
        points=np.array(data["points"], dtype=float),
        delta=data["delta"],
        vertex_count=data["vertex_count"],
        objective_kind=CLI_TO_KIND.get(data["objective"], data["objective"]),
        s=data["s"],
        final_objective=data["final_objective"],
        integral_check=data["integral_check"],
        method=data["method"],
        seed=data["seed"],
        schedule=data["schedule"],
        timings=data["timings"],
        containment_violations=data["containment_violations"],
        profile=[],
        parameters=data["parameters"],
    )


def write_profile_csv(path, records, method: str = None, seed: int = None) -> None:
    """Profile rows as CSV; with method/seed set, those lead each row."""
    extra = []
    if method is not None:
        extra = ["method", "seed"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(extra + PROFILE_COLUMNS)
        for rec in records:
            prefix = [method, seed] if method is not None else []
            writer.writerow(prefix + _record_row(rec))


def _record_row(rec: RunRecord):
    rel = "" if rec.relative_objective is None else _fmt(float(rec.relative_objective))
    return [rec.t, _fmt(float(rec.wall_seconds)), rec.m_t,
            _fmt(float(rec.objective)), _fmt(float(rec.best_objective)), rel]


def append_profile_rows(writer, records, method, seed) -> None:
    for rec in records:
        writer.writerow([method, seed] + _record_row(rec))
