"""Plain-text artifacts: states, space-time trajectories, error reports and adaptive histories.

Reals are written with 17 significant digits so that reading them back
reproduces the binary values exactly. Lines end with a bare newline.
"""
import csv
import io as _io

import numpy as np

from .mesh import read_mesh, write_mesh  # noqa: F401  (re-exported)


class FormatError(ValueError):
    pass


def fmt(v):
    if v is None:
        return "NA"
    return f"{float(v):.17g}"


def _write(path, text):
    if path is not None:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _read(path, text):
    if text is None:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return [ln for ln in text.splitlines() if ln.strip()]


def write_state(U, path=None, kind="state"):
    """``state v1 <N>`` (or ``adjoint v1 <N>``) followed by one coefficient per line."""
    U = np.asarray(U, dtype=float)
    return _write(path, "\n".join([f"{kind} v1 {len(U)}"] + [fmt(v) for v in U]) + "\n")


def read_state(path=None, text=None, kind="state"):
    lines = _read(path, text)
    head = lines[0].split() if lines else []
    if len(head) != 3 or head[:2] != [kind, "v1"]:
        raise FormatError(f"missing '{kind} v1 <N>' header")
    n = int(head[2])
    if len(lines) != n + 1:
        raise FormatError(f"expected {n} coefficients, found {len(lines) - 1}")
    return np.array([float(v) for v in lines[1:]])


def write_trajectory(times, vectors, path=None, kind="spacetime", first_step=0):
    """``kind v1 <N> <N_t>`` header, then ``step m t N_m`` blocks.

    Space-time solutions store steps 0..N_t (step 0 is the initial state);
    adjoints store steps 1..N_t. N is the largest per-step size.
    """
    n_max = max(len(v) for v in vectors)
    n_t = len(times) - 1
    lines = [f"{kind} v1 {n_max} {n_t}"]
    for i, v in enumerate(vectors):
        m = first_step + i
        lines.append(f"step {m} {fmt(times[m])} {len(v)}")
        lines.extend(fmt(x) for x in v)
    return _write(path, "\n".join(lines) + "\n")


def read_trajectory(path=None, text=None, kind="spacetime"):
    lines = _read(path, text)
    head = lines[0].split() if lines else []
    if len(head) != 4 or head[:2] != [kind, "v1"]:
        raise FormatError(f"missing '{kind} v1 <N> <N_t>' header")
    steps, times, vectors = [], [], []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "step":
            raise FormatError(f"line {i + 1}: expected 'step m t N_m'")
        m, t, n = int(parts[1]), float(parts[2]), int(parts[3])
        vals = lines[i + 1 : i + 1 + n]
        if len(vals) != n:
            raise FormatError(f"step {m}: expected {n} values")
        steps.append(m)
        times.append(t)
        vectors.append(np.array([float(v) for v in vals]))
        i += 1 + n
    return steps, np.array(times), vectors


def report_csv(report, path=None):
    unsteady = report.steps is not None
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["elem", "step", "signed_contrib", "indicator", "beta_space"] if unsteady else ["elem", "signed_contrib", "indicator", "beta_space"])
    for i, c in enumerate(report.contributions):
        beta = "NA" if report.beta_space is None else fmt(report.beta_space[i])
        row = [int(report.elements[i])]
        if unsteady:
            row.append(int(report.steps[i]))
        w.writerow(row + [fmt(c), fmt(abs(c)), beta])
    w.writerow(["total", fmt(report.estimate), "effectivity", fmt(report.effectivity)])
    return _write(path, buf.getvalue())


def history_csv(history, path=None):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iter", "dof", "J", "dJ_est", "J_corrected", "true_error_or_NA"])
    for r in history.records:
        w.writerow([r.iteration, r.dof, fmt(r.J), fmt(r.dJ_est), fmt(r.J_corrected), fmt(r.true_error)])
    return _write(path, buf.getvalue())


def read_csv_strict(path=None, text=None):
    """Parse a CSV written by this package; every numeric cell must be a plain float or NA."""
    if text is None:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    if "\r" in text:
        raise FormatError("carriage return found; artifacts use bare newlines")
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise FormatError("empty CSV")
    width = len(rows[0])
    for i, row in enumerate(rows[1:], start=2):
        footer = bool(row) and row[0] in ("total", "slope")
        for cell in row:
            if cell == "NA" or (footer and cell.isidentifier()):
                continue
            try:
                float(cell)
            except ValueError:
                raise FormatError(f"row {i}: cell {cell!r} is not a number") from None
            if "," in cell:
                raise FormatError(f"row {i}: locale-style decimal separator")
        if not footer and len(row) != width:
            raise FormatError(f"row {i}: {len(row)} cells, header has {width}")
    return rows
