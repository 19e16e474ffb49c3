"""Run configuration: sectioned ``key = value`` text files.

A problem comes either from the catalog (``case = smooth_advection``) or
from explicit fields (``variant = advection``, ``a = 1``, ``f = exp(x)`` ...).
Outputs likewise come by catalog name or by fields. Every key is checked;
unknown keys, out-of-range values and incompatible outputs are rejected with
:class:`ValidationError`. ``Config.text`` holds the effective configuration,
defaults included, and loading that text again gives an identical run.
"""
import configparser
from dataclasses import dataclass, field, replace
import logging
import math
import os

import numpy as np

from .error import FORMS
from .expressions import ExpressionError, parse_expression
from .mesh import read_mesh, uniform_mesh
from .problems import (
    CATALOG,
    KINDS,
    IncompatibleOutput,
    NotAvailable,
    OutputFunctional,
    PrimalProblem,
    exact_output,
    output_compatibility_check,
)

log = logging.getLogger(__name__)

SECTIONS = ("problem", "output", "discretization", "adaptation", "study")

PROBLEM_KEYS = ("case", "variant", "x_L", "x_R", "a", "nu", "f", "u_L", "ux_R", "u0", "T", "N_t")
OUTPUT_KEYS = ("name", "g", "x_p", "g_R", "g_L", "u_left", "dudx_right", "flux", "t_a", "t_b")

DEFAULTS = {
    "discretization": {
        "n_elem": "8",
        "p": "1",
        "fine_space": "p_enrich",
        "adjoint_mode": "exact",
        "surrogate": "exact",
        "checkpoint_interval": "0",
        "mesh_file": "",
    },
    "adaptation": {
        "mode": "h",
        "refine_fraction": "0.2",
        "coarsen_fraction": "0.0",
        "tol": "1e-8",
        "max_iter": "12",
        "dof_cap": "200000",
        "indicator": "dwr",
    },
    "study": {
        "meshes": "8, 16, 32, 64",
        "forms": "primal, fe_orthogonalized, dual, third_order",
    },
}


class ParseError(ValueError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ValidationError(ValueError):
    def __init__(self, key, reason):
        self.key = key
        self.reason = reason
        super().__init__(f"{key}: {reason}")


@dataclass
class Config:
    problem: PrimalProblem
    output: OutputFunctional
    case: str = None
    n_elem: int = 8
    p: int = 1
    fine_space: str = "p_enrich"
    adjoint_mode: str = "exact"
    smoothing_iterations: int = 5
    surrogate: str = "exact"
    checkpoint_interval: int = 0
    mesh_file: str = None
    adaptation: dict = field(default_factory=dict)
    study: dict = field(default_factory=dict)
    J_exact: float = None
    warnings: list = field(default_factory=list)
    text: str = ""

    def mesh(self):
        if self.mesh_file:
            return read_mesh(self.mesh_file)
        return uniform_mesh(self.problem.x_L, self.problem.x_R, self.n_elem, self.p)


def _number(section, key, raw, kind=float, low=None, high=None, open_low=False):
    try:
        v = kind(raw)
    except ValueError:
        raise ValidationError(f"{section}.{key}", f"expected {kind.__name__}, got {raw!r}") from None
    if kind is float and not math.isfinite(v):
        raise ValidationError(f"{section}.{key}", "must be finite")
    if low is not None and (v < low or (open_low and v == low)):
        raise ValidationError(f"{section}.{key}", f"must be {'>' if open_low else '>='} {low}")
    if high is not None and v > high:
        raise ValidationError(f"{section}.{key}", f"must be <= {high}")
    return v


def _expr(section, key, raw, allowed=("x", "t")):
    try:
        e = parse_expression(raw)
    except ExpressionError as exc:
        raise ValidationError(f"{section}.{key}", str(exc)) from None
    for name in ("x", "t"):
        if name not in allowed and e.uses(name):
            raise ValidationError(f"{section}.{key}", f"may not depend on {name}")
    return e


def _time_value(section, key, raw):
    """Boundary data: a number, or an expression in t."""
    e = _expr(section, key, raw, allowed=("t",))
    if not e.uses("t"):
        return float(e(0.0))
    return lambda t, e=e: float(e(0.0, t))


def _flag(section, key, raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{section}.{key}", f"expected true/false, got {raw!r}")


def _choice(section, key, raw, options):
    if raw not in options:
        raise ValidationError(f"{section}.{key}", f"must be one of {', '.join(options)}")
    return raw


def _read_parser(text):
    cp = configparser.ConfigParser(
        interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",), delimiters=("=",)
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError(exc.lineno, "key outside of any [section]") from None
    except configparser.DuplicateSectionError as exc:
        raise ParseError(exc.lineno, f"duplicate section [{exc.section}]") from None
    except configparser.DuplicateOptionError as exc:
        raise ParseError(exc.lineno, f"duplicate key {exc.option!r}") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        raise ParseError(lineno, "expected 'key = value'") from None
    return cp


def _problem(sec):
    for key in sec:
        if key not in PROBLEM_KEYS:
            raise ValidationError(f"problem.{key}", "unknown key")
    if "case" in sec:
        name = sec["case"]
        if name not in CATALOG:
            raise ValidationError("problem.case", f"unknown catalog case; known: {', '.join(CATALOG)}")
        extra = [k for k in sec if k not in ("case", "N_t")]
        if extra:
            raise ValidationError(f"problem.{extra[0]}", "a catalog case fixes its data; only N_t may be overridden")
        problem = CATALOG[name].problem
        if "N_t" in sec:
            if problem.steady:
                raise ValidationError("problem.N_t", "only unsteady problems have time steps")
            problem = replace(problem, N_t=_number("problem", "N_t", sec["N_t"], int, low=1))
        return name, problem
    if "variant" not in sec:
        raise ValidationError("problem.variant", "give either case or variant")
    kind = _choice("problem", "variant", sec["variant"], KINDS)
    kw = {"kind": kind}
    for key in ("x_L", "x_R", "a", "nu", "T"):
        if key in sec:
            kw[key] = _number("problem", key, sec[key])
    if "N_t" in sec:
        kw["N_t"] = _number("problem", "N_t", sec["N_t"], int, low=1)
    steady_only = kind != "unsteady"
    if steady_only:
        for key in ("u0", "T", "N_t"):
            if key in sec:
                raise ValidationError(f"problem.{key}", "only unsteady problems take this key")
    if "f" in sec:
        kw["f"] = _expr("problem", "f", sec["f"], allowed=("x",) if steady_only else ("x", "t"))
    if "u0" in sec:
        kw["u0"] = _expr("problem", "u0", sec["u0"], allowed=("x",))
    for key in ("u_L", "ux_R"):
        if key in sec:
            kw[key] = _time_value("problem", key, sec[key])
            if steady_only and callable(kw[key]):
                raise ValidationError(f"problem.{key}", "steady boundary data may not depend on t")
    if kind in ("advection", "burgers") and "nu" in sec:
        raise ValidationError("problem.nu", f"{kind} has no diffusion")
    if kind == "diffusion" and "a" in sec:
        raise ValidationError("problem.a", "diffusion has no advection")
    if kind == "burgers" and "a" in sec:
        raise ValidationError("problem.a", "Burgers advects with the state itself")
    if kind == "advection" and "a" not in sec:
        kw["a"] = 1.0
    if kind == "diffusion" and "nu" not in sec:
        kw["nu"] = 1.0
    try:
        return None, PrimalProblem(**kw)
    except ValueError as exc:
        raise ValidationError("problem", str(exc)) from None


def _output(sec, case, problem):
    for key in sec:
        if key not in OUTPUT_KEYS:
            raise ValidationError(f"output.{key}", "unknown key")
    if "name" in sec:
        if case is None:
            raise ValidationError("output.name", "named outputs need a catalog case")
        outputs = CATALOG[case].outputs
        if sec["name"] not in outputs:
            raise ValidationError("output.name", f"case {case} has outputs {', '.join(outputs)}")
        if len(sec) > 1:
            other = next(k for k in sec if k != "name")
            raise ValidationError(f"output.{other}", "a named output fixes its data")
        return outputs[sec["name"]]
    kw = {}
    if "g" in sec:
        kw["g"] = _expr("output", "g", sec["g"], allowed=("x",) if problem.steady else ("x", "t"))
    for key, attr in (("x_p", "x_p"), ("g_R", "g_R"), ("g_L", "g_L"), ("u_left", "u_left_weight"), ("dudx_right", "dudx_right_weight")):
        if key in sec:
            kw[attr] = _number("output", key, sec[key])
    if "flux" in sec:
        kw["flux"] = _flag("output", "flux", sec["flux"])
    if ("t_a" in sec) != ("t_b" in sec):
        raise ValidationError("output.t_a" if "t_b" in sec else "output.t_b", "t_a and t_b go together")
    if "t_a" in sec:
        kw["window"] = (_number("output", "t_a", sec["t_a"]), _number("output", "t_b", sec["t_b"]))
    return OutputFunctional(**kw)


def _check_compatible(problem, output):
    try:
        output_compatibility_check(problem, output)
    except IncompatibleOutput as exc:
        key = "output"
        if output.u_left_weight:
            key = "output.u_left"
        elif output.g_L and problem.kind != "diffusion":
            key = "output.g_L"
        elif output.dudx_right_weight:
            key = "output.dudx_right"
        elif output.window is not None:
            key = "output.t_a"
        elif output.x_p is not None:
            key = "output.x_p"
        raise ValidationError(key, f"incompatible output: {exc}") from None
    if output.window is not None:
        dt = problem.T / problem.N_t
        for key, t in zip(("t_a", "t_b"), output.window):
            k = t / dt
            if abs(k - round(k)) > 1e-9:
                raise ValidationError(f"output.{key}", f"{t:g} is not a step boundary (dt = {dt:g})")


def _shift_point(output, mesh, warnings):
    """Nudge x_p off element boundaries so it names a single element."""
    if output.x_p is None or output.name is not None:
        return output
    span = mesh.x_R - mesh.x_L
    if np.any(np.abs(mesh.boundaries[1:-1] - output.x_p) <= 1e-12 * span):
        x_new = output.x_p - 1e-9 * span
        _warn(warnings, f"output.x_p = {output.x_p!r} lies on an element boundary; shifted to {x_new!r}")
        output = replace(output, x_p=x_new)
    if output.x_p < mesh.boundaries[1] or output.x_p > mesh.boundaries[-2]:
        _warn(warnings, f"output.x_p = {output.x_p!r} lies in a boundary element; the point adjoint is poorly resolved there")
    return output


def _warn(warnings, msg):
    log.warning(msg)
    warnings.append(msg)


def _discretization(sec, cfg, base_dir):
    for key in sec:
        if key not in DEFAULTS["discretization"]:
            raise ValidationError(f"discretization.{key}", "unknown key")
    d = dict(DEFAULTS["discretization"], **sec)
    cfg.n_elem = _number("discretization", "n_elem", d["n_elem"], int, low=1)
    cfg.p = _number("discretization", "p", d["p"], int, low=0, high=9)
    cfg.fine_space = _choice("discretization", "fine_space", d["fine_space"], ("p_enrich", "h_refine"))
    mode = d["adjoint_mode"]
    if mode.startswith("smoothed"):
        _, _, k = mode.partition(":")
        cfg.adjoint_mode = "smoothed"
        cfg.smoothing_iterations = _number("discretization", "adjoint_mode", k or "5", int, low=1)
    else:
        cfg.adjoint_mode = _choice("discretization", "adjoint_mode", mode, ("exact", "smoothed:k"))
    cfg.surrogate = _choice("discretization", "surrogate", d["surrogate"], ("exact", "smoothed", "none"))
    cfg.checkpoint_interval = _number("discretization", "checkpoint_interval", d["checkpoint_interval"], int, low=0)
    if d["mesh_file"]:
        d["mesh_file"] = os.path.abspath(os.path.join(base_dir or ".", d["mesh_file"]))
    cfg.mesh_file = d["mesh_file"] or None
    return d


def _adaptation(sec):
    for key in sec:
        if key not in DEFAULTS["adaptation"]:
            raise ValidationError(f"adaptation.{key}", "unknown key")
    d = dict(DEFAULTS["adaptation"], **sec)
    out = {
        "mode": _choice("adaptation", "mode", d["mode"], ("h", "p")),
        "refine_fraction": _number("adaptation", "refine_fraction", d["refine_fraction"], low=0.0, high=1.0),
        "coarsen_fraction": _number("adaptation", "coarsen_fraction", d["coarsen_fraction"], low=0.0, high=1.0),
        "tol": _number("adaptation", "tol", d["tol"], low=0.0, open_low=True),
        "max_iter": _number("adaptation", "max_iter", d["max_iter"], int, low=0),
        "dof_cap": _number("adaptation", "dof_cap", d["dof_cap"], int, low=1),
        "indicator": _choice("adaptation", "indicator", d["indicator"], ("dwr", "residual")),
    }
    if out["refine_fraction"] + out["coarsen_fraction"] > 1.0:
        raise ValidationError("adaptation.coarsen_fraction", "refine_fraction + coarsen_fraction must not exceed 1")
    return d, out


def _study(sec):
    for key in sec:
        if key not in DEFAULTS["study"]:
            raise ValidationError(f"study.{key}", "unknown key")
    d = dict(DEFAULTS["study"], **sec)
    meshes = [_number("study", "meshes", m.strip(), int, low=1) for m in d["meshes"].split(",") if m.strip()]
    if len(meshes) < 2:
        raise ValidationError("study.meshes", "need at least two meshes for a slope")
    forms = [f.strip() for f in d["forms"].split(",") if f.strip()]
    for f in forms:
        _choice("study", "forms", f, FORMS)
    return d, {"meshes": meshes, "forms": forms}


def _echo(sections):
    lines = []
    for name in SECTIONS:
        if name not in sections:
            continue
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in sections[name].items())
        lines.append("")
    return "\n".join(lines)


def parse_config(text, base_dir=None):
    cp = _read_parser(text)
    for name in cp.sections():
        if name not in SECTIONS:
            raise ValidationError(name, "unknown section")
    for name in ("problem", "output"):
        if not cp.has_section(name):
            raise ValidationError(name, "required section missing")
    psec = dict(cp["problem"])
    osec = dict(cp["output"])
    case, problem = _problem(psec)
    output = _output(osec, case, problem)
    _check_compatible(problem, output)
    cfg = Config(problem=problem, output=output, case=case)
    effective = {"problem": psec, "output": osec}
    effective["discretization"] = _discretization(dict(cp["discretization"]) if cp.has_section("discretization") else {}, cfg, base_dir)
    effective["adaptation"], cfg.adaptation = _adaptation(dict(cp["adaptation"]) if cp.has_section("adaptation") else {})
    effective["study"], cfg.study = _study(dict(cp["study"]) if cp.has_section("study") else {})
    try:
        mesh = cfg.mesh()
    except (OSError, ValueError) as exc:
        raise ValidationError("discretization.mesh_file", str(exc)) from None
    if mesh.x_L != problem.x_L or mesh.x_R != problem.x_R:
        raise ValidationError("discretization.mesh_file", "mesh does not span the problem domain")
    cfg.output = _shift_point(output, mesh, cfg.warnings)
    if cfg.output is not output:
        osec["x_p"] = repr(cfg.output.x_p)
    if case is not None and cfg.output.name is not None:
        try:
            cfg.J_exact = exact_output(problem, cfg.output)
        except NotAvailable:
            cfg.J_exact = None
    cfg.text = _echo(effective)
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
