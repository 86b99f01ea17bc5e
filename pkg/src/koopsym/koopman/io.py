"""CSV and JSON serialization of eigenfunction fields.

Floats are written with :func:`repr`, the shortest decimal string that
round-trips, so repeated runs produce byte-identical files.
"""

import csv
import io
import json
from pathlib import Path

import numpy as np


def _num(v):
    return repr(float(v))


def field_columns(dim):
    return [f"x{k + 1}" for k in range(dim)] + [
        "re_psi", "im_psi", "abs_psi", "arg_psi", "converged_T", "last_rel_change", "status"]


def field_to_csv(field):
    """Render a field as CSV text, one row per grid point in row-major order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(field_columns(field.points.shape[1]))
    for x, v, T, r, s in zip(field.points, field.values, field.converged_T,
                             field.last_rel_change, field.status):
        v = complex(v)
        w.writerow([_num(c) for c in x]
                   + [_num(v.real), _num(v.imag), _num(abs(v)), _num(np.angle(v)), _num(T), _num(r), s])
    return buf.getvalue()


def write_field_csv(field, path):
    path = Path(path)
    path.write_text(field_to_csv(field), encoding="utf-8")
    return path


def read_field_csv(path):
    """Load a field CSV into a dict of arrays: ``points``, ``values``, ``converged_T``,
    ``last_rel_change``, ``status``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = sum(1 for h in header if h.startswith("x"))
    col = {h: k for k, h in enumerate(header)}
    num = np.array([[float(r[k]) for k in range(len(header) - 1)] for r in body]).reshape(len(body), -1)
    return {
        "points": num[:, :n],
        "values": num[:, col["re_psi"]] + 1j * num[:, col["im_psi"]],
        "converged_T": num[:, col["converged_T"]],
        "last_rel_change": num[:, col["last_rel_change"]],
        "status": np.array([r[col["status"]] for r in body], dtype=object),
    }


def _pair(z):
    z = complex(z)
    return [z.real, z.imag]


def field_metadata(fields, system, spec, tol, version):
    """Metadata for a set of fields computed in one run."""
    fields = list(fields)
    first = fields[0]
    return {
        "system": system.name,
        "dim": system.dim,
        "params": {k: float(v) for k, v in sorted(dict(system.params).items())},
        "equilibrium": [float(v) for v in system.equilibrium],
        "grid": first.grid.to_dict(),
        "eigenfunctions": [
            {"index": f.index + 1, "eigenvalue": _pair(f.eigenvalue),
             "left_vector": [_pair(z) for z in f.left_vector],
             "points": int(len(f.values)),
             "converged": int(np.sum(f.status == "converged"))}
            for f in fields
        ],
        "spectral": spec.to_dict(),
        "schedule": first.schedule.to_dict(),
        "tolerances": {"atol": float(tol[0]), "rtol": float(tol[1])},
        "version": version,
    }


def write_metadata(meta, path):
    path = Path(path)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path

