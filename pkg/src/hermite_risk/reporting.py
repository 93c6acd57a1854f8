"""Report files, run manifests and the analytic-vs-simulation comparison."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DigestMismatchError
from .measures import CONTRIBUTION_COLUMNS, RiskReport
from .montecarlo import SimResult

try:
    from importlib.metadata import version as _pkg_version

    TOOL_VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    TOOL_VERSION = "0.1.0"


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict[str, str]  # logical name -> sha256
    version: str = TOOL_VERSION
    timings: dict[str, float] = field(default_factory=dict)
    deterministic: bool = False

    def to_dict(self) -> dict:
        out = {
            "command": self.command,
            "config": self.config,
            "inputs": dict(self.inputs),
            "version": self.version,
            "deterministic": self.deterministic,
        }
        if not self.deterministic:
            out["timings"] = dict(self.timings)
        return out


def report_document(report: RiskReport, manifest: RunManifest) -> dict:
    doc = report.to_dict()
    doc["manifest"] = manifest.to_dict()
    doc["kind"] = "analytic"
    return doc


def sim_document(result: SimResult, manifest: RunManifest) -> dict:
    doc = result.to_dict()
    doc["manifest"] = manifest.to_dict()
    doc["kind"] = "simulation"
    return doc


def write_json(doc: dict, path) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def write_contributions_csv(report: RiskReport, path) -> None:
    cols = [c for c in CONTRIBUTION_COLUMNS if c in report.contributions]
    rows = ([fid] + [report.contributions[c][i] for c in cols] for i, fid in enumerate(report.ids))
    _write_rows(path, ["id"] + cols, rows)


def write_sim_contributions_csv(result: SimResult, path) -> None:
    rows = zip(result.ids, result.contributions, result.contribution_se)
    _write_rows(path, ["id", "var_c", "var_c_se"], rows)


def write_tail_csv(result: SimResult, path) -> None:
    _write_rows(path, ["rank", "portfolio_value"], ((i + 1, v) for i, v in enumerate(result.tail_values)))


# --------------------------------------------------------------------------
# comparison


def _measures(doc: dict) -> dict[str, float]:
    if doc.get("kind") == "simulation":
        return {"var": doc["var_estimate"], "es": doc["es_estimate"]}
    block = doc["portfolio"]
    out = {"var": block["var_total"], "es": block["es_total"]}
    for label, v in block["cumulative_var"].items():
        out[f"var[{label}]"] = v
    return out


def _facility_table(doc: dict) -> dict[str, dict]:
    return {f["id"]: f for f in doc.get("facilities", [])}


def _rel(a, b):
    if b == 0.0:
        return 0.0 if a == 0.0 else math.copysign(math.inf, a)
    return (a - b) / b


def compare_documents(analytic: dict, reference: dict) -> dict:
    """Relative differences ``(analytic - reference) / reference``.

    ``reference`` is normally a simulation document but any report works.
    Raises :class:`DigestMismatchError` when the portfolio inputs differ.
    """
    da = analytic.get("manifest", {}).get("inputs", {})
    db = reference.get("manifest", {}).get("inputs", {})
    shared = set(da) & set(db)
    if not shared or any(da[k] != db[k] for k in shared):
        raise DigestMismatchError(f"input digests differ: {da} vs {db}")

    ma, mb = _measures(analytic), _measures(reference)
    measures = {}
    for key, val in ma.items():
        ref = mb.get(key, mb["var"] if key.startswith("var") else None)
        if ref is None:
            continue
        measures[key] = {"analytic": val, "reference": ref, "rel_diff": _rel(val, ref)}
    if "var_std_error" in reference and reference["var_estimate"]:
        measures["var"]["reference_rel_se"] = reference["var_std_error"] / reference["var_estimate"]

    fa, fb = _facility_table(analytic), _facility_table(reference)
    rows = []
    for fid, rec in fa.items():
        other = fb.get(fid)
        if other is None:
            continue
        a, b = rec["var_c"], other["var_c"]
        se = other.get("var_c_se")
        z = (a - b) / se if se else (0.0 if a == b else math.inf)
        rows.append({
            "id": fid, "y_dot_beta": rec.get("y_dot_beta", 0.0), "analytic": a, "reference": b,
            "reference_se": se if se is not None else 0.0, "rel_diff": _rel(a, b),
            "z": z, "outside_3se": bool(abs(z) > 3.0),
        })
    summary = {}
    if rows:
        rd = np.array([abs(r["rel_diff"]) for r in rows])
        rd = rd[np.isfinite(rd)]
        if rd.size:
            summary = {f"abs_rel_diff_q{int(q * 100)}": float(np.quantile(rd, q)) for q in (0.1, 0.5, 0.9)}
        summary["n_outside_3se"] = int(sum(r["outside_3se"] for r in rows))
        summary["fraction_within_3se"] = 1.0 - summary["n_outside_3se"] / len(rows)
    return {"measures": measures, "facilities": rows, "summary": summary}


def write_comparison(cmp: dict, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json({"measures": cmp["measures"], "summary": cmp["summary"]}, out / "comparison.json")
    cols = ["id", "y_dot_beta", "analytic", "reference", "reference_se", "rel_diff", "z", "outside_3se"]
    rows = cmp["facilities"]
    _write_rows(out / "facility_comparison.csv", cols, ([r[c] for c in cols] for r in rows))
    ordered = sorted(rows, key=lambda r: (r["y_dot_beta"], r["id"]))
    _write_rows(out / "plot_data.csv", ["rank", "id", "y_dot_beta", "rel_diff"],
                ((i, r["id"], r["y_dot_beta"], r["rel_diff"]) for i, r in enumerate(ordered)))


def format_comparison(cmp: dict) -> str:
    lines = [f"{'measure':<26}{'analytic':>14}{'reference':>14}{'rel diff':>11}"]
    for key, m in cmp["measures"].items():
        lines.append(f"{key:<26}{m['analytic']:>14.6g}{m['reference']:>14.6g}{m['rel_diff']:>10.2%}")
    for key, v in cmp["summary"].items():
        lines.append(f"{key}: {v:.6g}" if isinstance(v, float) else f"{key}: {v}")
    return "\n".join(lines)
