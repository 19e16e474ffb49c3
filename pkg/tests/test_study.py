import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dwrlab import study
from dwrlab.config import ValidationError, parse_config
from dwrlab.study import CHECKS, error_columns, loglog_slope, run_study, run_verify, study_rows


@given(st.floats(-6, 6), st.floats(0.1, 10))
def test_slope_of_exact_power_law(rate, c):
    h = [0.5, 0.25, 0.125, 0.0625]
    assert loglog_slope(h, [c * x**rate for x in h]) == pytest.approx(rate, abs=1e-9)


def test_slope_undefined_at_round_off():
    assert loglog_slope([0.5, 0.25], [1e-3, 1e-15]) is None
    assert loglog_slope([0.5], [1e-3]) is None
    assert loglog_slope([0.5, 0.25], [1e-3, math.nan]) is None


def test_slope_ignores_sign():
    assert loglog_slope([0.5, 0.25], [-4.0, 1.0]) == pytest.approx(2.0)


def _cfg(extra=""):
    return parse_config("[problem]\ncase = smooth_advection\n[output]\nname = weighted\n[study]\nmeshes = 4, 8, 16\n" + extra)


def test_study_rows_columns_and_identities():
    cfg = _cfg()
    rows = study_rows(cfg)
    assert [r["n_elem"] for r in rows] == [4, 8, 16]
    for r in rows:
        assert r["true_error"] == cfg.J_exact - r["J_H"]
        for f in cfg.study["forms"]:
            assert r[f"J_corrected_{f}"] == r["J_H"] + r[f"dJ_{f}"]
            assert abs(r[f"effectivity_{f}"] - 1.0) <= 1e-9
            assert r[f"remainder_{f}"] == r["fine_truth"] - r[f"dJ_{f}"]


def test_study_csv_footer():
    cfg = _cfg("forms = primal, dual\n")
    text = run_study(cfg)
    lines = text.splitlines()
    footer = [ln for ln in lines if ln.startswith("slope,")]
    assert [ln.split(",")[1] for ln in footer] == error_columns(["primal", "dual"])
    assert lines[0].startswith("n_elem,h,dof,J_H,true_error,fine_truth,dJ_primal")
    assert len(lines) == 1 + 3 + len(footer)


def test_study_needs_steady_catalog_case():
    with pytest.raises(ValidationError):
        study_rows(parse_config("[problem]\ncase = late_inflow\n[output]\nname = point\n"))
    with pytest.raises(ValidationError):
        study_rows(parse_config("[problem]\nvariant = advection\n[output]\ng = 1\n"))


def test_verify_line_format():
    text, ok = run_verify(["transpose_identity", "one_dof_adjoint"])
    assert ok
    lines = text.splitlines()
    assert len(lines) == 2
    for line in lines:
        tag, name, measured, tol, status = line.split()
        assert tag == "CHECK" and status == "PASS"
        float(measured), float(tol)


def test_check_names_unique():
    names = [c[0] for c in CHECKS]
    assert len(names) == len(set(names))


def test_min_checks_compare_upwards(monkeypatch):
    monkeypatch.setattr(study, "CHECKS", (("rate", 2.0, lambda: 1.5, "min"), ("gap", 1e-3, lambda: 1e-4)))
    text, ok = run_verify()
    assert not ok
    assert text.splitlines() == ["CHECK rate 1.500e+00 2 FAIL", "CHECK gap 1.000e-04 0.001 PASS"]


def test_crashing_check_fails(monkeypatch):
    def boom():
        raise RuntimeError("broken")

    monkeypatch.setattr(study, "CHECKS", (("boom", 1.0, boom),))
    text, ok = run_verify()
    assert not ok
    assert text.splitlines()[0].startswith("# boom: RuntimeError")
    assert text.splitlines()[1] == "CHECK boom nan 1 FAIL"


def test_seed_controls_random_vectors(monkeypatch):
    monkeypatch.setenv("DWRLAB_SEED", "7")
    a = study._rng().normal(size=3)
    b = study._rng().normal(size=3)
    monkeypatch.setenv("DWRLAB_SEED", "8")
    c = study._rng().normal(size=3)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert run_verify(["transpose_identity", "fd_jacobian"])[1]


def test_mutation_fails_several_checks(monkeypatch):
    monkeypatch.setenv("DWRLAB_MUTATE", "adjoint_rhs_sign")
    text, ok = run_verify()
    assert not ok
    failed = {ln.split()[1] for ln in text.splitlines() if ln.endswith("FAIL")}
    assert {"dual_form_steady", "dual_form_unsteady", "adjoint_inverse_rows", "one_dof_adjoint", "linear_exactness"} <= failed
    # both routes of the space-time cross-check carry the flipped sign, so they still agree
    assert "monolithic_adjoint" not in failed
    assert "transpose_identity" not in failed
