"""Executable casebook: worked examples with checked, tolerance-aware expectations.

Each case lives in ``casebook/<id>/``:

``case.cfg``
    the run configuration;
``run.txt``
    one command line, e.g. ``dwrlab estimate --config case.cfg --out {out}``;
``expect.txt``
    ``anchor = <topic>`` lines naming what the case demonstrates, and
    ``value = <file> <row> <column> <expected> <tolerance>`` lines.

Rows are matched on the first field of a line (``key=second`` also matches
the second field, ``last`` picks the last row that starts with a number);
columns are header names or 0-based indices. Topics that are demonstrated by
a ``verify`` check instead of a case are listed in ``casebook/INDEX.txt`` as
``<topic> | verify <check>``. Every topic in :data:`ANCHORS` must be covered
exactly once.
"""
import argparse
import csv
from dataclasses import dataclass, field
import io
import os
import shlex
import sys
import tempfile

from . import cli
from .study import CHECKS

CASEBOOK = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, os.pardir, "casebook")

ANCHORS = (
    "discrete adjoint solve",
    "dual form of a linear output",
    "adjoint of a diffusion problem with a boundary derivative output",
    "transpose identity between operator and adjoint",
    "adjoint as rows of the inverse operator",
    "adjoint consistency and convergence to the continuous adjoint",
    "adjoint of a point output",
    "Jacobian of the residual",
    "linearization of the output",
    "dual-weighted residual output error estimate",
    "dual error form",
    "Galerkin orthogonality",
    "primal-dual equivalence",
    "output superconvergence for advection",
    "output convergence for diffusion",
    "second-order nonlinear estimate and remainder rate",
    "third-order nonlinear estimate and remainder rate",
    "goal-oriented adaptive loop",
    "unsteady adjoint by backward march",
    "monolithic space-time adjoint",
    "closed-form scalar unsteady adjoint",
    "checkpointed unsteady adjoint",
    "unsteady error estimate with space-time localization",
    "space-time anisotropy split",
    "space-time adaptive loop",
)


class CaseFailure(RuntimeError):
    def __init__(self, case_id, reason):
        self.case_id = case_id
        super().__init__(f"case {case_id}: {reason}")


@dataclass
class Fragment:
    file: str
    row: str
    column: str
    expected: str
    tol: float
    line: int


@dataclass
class ExampleCase:
    id: str
    path: str
    anchors: list
    command: list
    fragments: list = field(default_factory=list)

    @property
    def config(self):
        return os.path.join(self.path, "case.cfg")


@dataclass
class Drift:
    case_id: str
    fragment: Fragment
    old: str
    new: float

    def __str__(self):
        f = self.fragment
        return f"{self.case_id}: {f.file} {f.row} {f.column}: expected {self.old} (tol {f.tol:g}), got {self.new!r}"


def load_case(path):
    case_id = os.path.basename(os.path.normpath(path))
    for name in ("case.cfg", "run.txt", "expect.txt"):
        if not os.path.isfile(os.path.join(path, name)):
            raise CaseFailure(case_id, f"missing {name}")
    with open(os.path.join(path, "run.txt"), encoding="utf-8") as fh:
        command = shlex.split(fh.read().strip())
    if not command or command[0] != "dwrlab" or command[1] not in cli.COMMANDS:
        raise CaseFailure(case_id, "run.txt must hold one 'dwrlab <subcommand> ...' line")
    case = ExampleCase(case_id, path, [], command)
    with open(os.path.join(path, "expect.txt"), encoding="utf-8") as fh:
        for i, raw in enumerate(fh):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if key == "anchor":
                case.anchors.append(value)
            elif key == "value":
                parts = value.split()
                if len(parts) != 5:
                    raise CaseFailure(case_id, f"expect.txt line {i + 1}: need file row column expected tolerance")
                case.fragments.append(Fragment(*parts[:4], float(parts[4]), i))
            else:
                raise CaseFailure(case_id, f"expect.txt line {i + 1}: unknown entry {key!r}")
    return case


def load_casebook(root=None):
    root = CASEBOOK if root is None else root
    ids = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    return [load_case(os.path.join(root, d)) for d in ids]


def read_index(root=None):
    """``{topic: "verify <check>"}`` from INDEX.txt."""
    root = CASEBOOK if root is None else root
    entries = []
    with open(os.path.join(root, "INDEX.txt"), encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                topic, _, target = (s.strip() for s in line.partition("|"))
                entries.append((topic, target))
    return entries


def coverage(root=None):
    """Map each topic to the places that cover it, and list problems with the mapping."""
    places = {a: [] for a in ANCHORS}
    problems = []
    known_checks = {c[0] for c in CHECKS}
    for case in load_casebook(root):
        for a in case.anchors:
            places.setdefault(a, []).append(f"case {case.id}")
    for topic, target in read_index(root):
        kind, _, name = target.partition(" ")
        if kind != "verify" or name not in known_checks:
            problems.append(f"index entry {topic!r} points at unknown target {target!r}")
        places.setdefault(topic, []).append(target)
    for topic, where in places.items():
        if topic not in ANCHORS:
            problems.append(f"unknown topic {topic!r} in {', '.join(where)}")
        elif not where:
            problems.append(f"topic {topic!r} is not covered")
        elif len(where) > 1:
            problems.append(f"topic {topic!r} is covered more than once: {', '.join(where)}")
    return places, problems


def _rows(text, is_csv):
    if is_csv:
        return list(csv.reader(io.StringIO(text)))
    return [ln.split() for ln in text.splitlines() if ln.strip()]


def _is_number(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


def extract(outdir, frag):
    path = os.path.join(outdir, frag.file)
    with open(path, encoding="utf-8") as fh:
        rows = _rows(fh.read(), frag.file.endswith(".csv"))
    if frag.row == "last":
        matches = [r for r in rows if r and _is_number(r[0])][-1:]
    else:
        first, _, second = frag.row.partition("=")
        matches = [r for r in rows if r and r[0] == first and (not second or (len(r) > 1 and r[1] == second))]
    if not matches:
        raise LookupError(f"no row {frag.row!r} in {frag.file}")
    row = matches[0]
    col = int(frag.column) if frag.column.isdigit() else rows[0].index(frag.column)
    return float(row[col])


def run_case(case, outdir):
    """Run the case command into ``outdir``; returns measured values in fragment order."""
    argv = []
    for tok in case.command[1:]:
        tok = tok.replace("{out}", outdir)
        if tok == "case.cfg":
            tok = case.config
        argv.append(tok)
    stdout = sys.stdout
    sys.stdout = io.StringIO()
    try:
        status = cli.main(argv)
    finally:
        sys.stdout = stdout
    if status != 0:
        raise CaseFailure(case.id, f"command exited with status {status}")
    try:
        return [extract(outdir, f) for f in case.fragments]
    except (OSError, LookupError, ValueError) as exc:
        raise CaseFailure(case.id, str(exc)) from None


def _rewrite(case, updates):
    path = os.path.join(case.path, "expect.txt")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    for frag, value in updates:
        lines[frag.line] = f"value = {frag.file} {frag.row} {frag.column} {value!r} {frag.tol:g}"
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def regenerate_examples(root=None, update=True, ids=None):
    """Run every case and compare against its expected fragments.

    Values within tolerance are left alone. Drift beyond tolerance (or a
    ``?`` placeholder) is reported and, with ``update``, written back.
    Returns the list of :class:`Drift` records, ordered by case id.
    """
    drifts = []
    for case in load_casebook(root):
        if ids is not None and case.id not in ids:
            continue
        with tempfile.TemporaryDirectory() as tmp:
            measured = run_case(case, tmp)
        updates = []
        for frag, value in zip(case.fragments, measured):
            if frag.expected == "?" or not abs(value - float(frag.expected)) <= frag.tol:
                drifts.append(Drift(case.id, frag, frag.expected, value))
                updates.append((frag, value))
        if update and updates:
            _rewrite(case, updates)
    return drifts


def main(argv=None):
    parser = argparse.ArgumentParser(prog="python3 -m dwrlab.docsbook")
    parser.add_argument("--root", default=None, help="casebook directory")
    parser.add_argument("--check", action="store_true", help="report drift without rewriting expectations")
    args = parser.parse_args(argv)
    _, problems = coverage(args.root)
    for p in problems:
        print(f"coverage: {p}")
    drifts = regenerate_examples(args.root, update=not args.check)
    for d in drifts:
        print(f"drift: {d}")
    print(f"{len(drifts)} drift(s), {len(problems)} coverage problem(s)")
    return 1 if (problems or (args.check and drifts)) else 0


if __name__ == "__main__":
    sys.exit(main())
