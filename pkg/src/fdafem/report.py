"""Deterministic CSV and JSON output for experiment runs."""

import csv
import json
import math
from pathlib import Path

from .diagnostics import fit_rate

UZAWA_COLUMNS = ["i", "j", "n_tri", "n_sigma", "E_outer", "E_Uzawa", "E_inner", "e_u",
                 "e_lambda", "afem_rounds", "E_outer_alt", "n_marked", "tolerance"]
CONDITIONING_COLUMNS = ["n_sigma", "n_tri", "kappa_S", "kappa_MinvS", "rho_MinvS", "rho_MSinv"]
INT_COLUMNS = {"i", "j", "n_tri", "n_sigma", "afem_rounds", "n_marked"}

# quantity -> size column used for its fitted rate
RATE_AXES = {
    "e_u": "n_tri",
    "E_inner": "n_tri",
    "e_lambda": "n_sigma",
    "E_outer": "n_sigma",
    "E_Uzawa": "n_sigma",
    "E_outer_alt": "n_sigma",
}


def fmt(v):
    """12 significant digits; integers verbatim."""
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.12g}"


def _clean(obj):
    """JSON-safe copy with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, int):
        return obj
    v = float(obj)
    if not math.isfinite(v):
        return None
    return float(f"{v:.12g}")


def write_csv(path, columns, rows):
    """Rows are mappings; missing values become ``nan``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, float("nan"))) for c in columns])
    return path


def write_json(path, data):
    path = Path(path)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = []
        for r in csv.DictReader(fh):
            rows.append({k: (int(v) if k in INT_COLUMNS else float(v)) for k, v in r.items()})
    return rows


def uzawa_row_dicts(trace):
    return [{c: getattr(r, c) for c in UZAWA_COLUMNS} for r in trace.rows]


def rates_from_rows(rows, K, skip=3):
    """Fitted rates on the ``j = K`` rows; ``nan`` where a fit is impossible."""
    last = [r for r in rows if r["j"] == K]
    out = {}
    for key, axis in RATE_AXES.items():
        try:
            out[key] = fit_rate([(r[axis], r[key]) for r in last], skip=skip)
        except ValueError:
            out[key] = float("nan")
    return out


def refinement_counts(rows):
    """``{i: [j, ...]}`` of inner steps in which afem refined."""
    out = {}
    for r in rows:
        out.setdefault(r["i"], [])
        if r["afem_rounds"] > 0:
            out[r["i"]].append(r["j"])
    return out


def uzawa_summary(rows, K, skip=3):
    last = [r for r in rows if r["j"] == K]
    ref = refinement_counts(rows)
    return {
        "rates": rates_from_rows(rows, K, skip),
        "skip": skip,
        "outer_iterations": len(last),
        "final_n_tri": last[-1]["n_tri"] if last else 0,
        "final_n_sigma": last[-1]["n_sigma"] if last else 0,
        "refinement_steps": {str(i): js for i, js in ref.items()},
        "refinement_counts": {str(i): len(js) for i, js in ref.items()},
    }


def emit_report(trace, out_dir, config=None, skip=3):
    """Write ``uzawa.csv`` and ``summary.json``; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = uzawa_row_dicts(trace)
    csv_path = write_csv(out / "uzawa.csv", UZAWA_COLUMNS, rows)
    # the summary is computed from the rounded CSV so that it can be regenerated
    summary = uzawa_summary(read_csv(csv_path), trace.params.K, skip)
    summary["experiment"] = "uzawa"
    summary["L"] = trace.L
    summary["params"] = trace.params.to_dict()
    if config is not None:
        summary["config"] = config.to_dict()
    json_path = write_json(out / "summary.json", summary)
    return csv_path, json_path


def regenerate_summary(csv_path, K, skip=3):
    """Recompute the rate summary from a written CSV."""
    return _clean(uzawa_summary(read_csv(csv_path), K, skip))


def emit_conditioning(reports, out_dir, config=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{"n_sigma": r.n_sigma, "n_tri": r.n_tri, "kappa_S": r.kappa_S,
             "kappa_MinvS": r.kappa_MS, "rho_MinvS": r.rho_MinvS, "rho_MSinv": r.rho_MSinv}
            for r in reports]
    csv_path = write_csv(out / "conditioning.csv", CONDITIONING_COLUMNS, rows)
    k = [r.kappa_S for r in reports]
    summary = {
        "experiment": "conditioning",
        "kappa_MinvS_range": [min(r.kappa_MS for r in reports), max(r.kappa_MS for r in reports)]
        if reports else [],
        "kappa_S_ratios": [b / a for a, b in zip(k[:-1], k[1:])],
    }
    if config is not None:
        summary["config"] = config.to_dict()
    json_path = write_json(out / "summary.json", summary)
    return csv_path, json_path
