import os
import shutil

import pytest

from dwrlab import docsbook
from dwrlab.docsbook import ANCHORS, CaseFailure, coverage, load_case, load_casebook, regenerate_examples

CASE = "point_output_estimate"


@pytest.fixture
def book(tmp_path):
    root = tmp_path / "casebook"
    shutil.copytree(docsbook.CASEBOOK, root)
    return root


def _expect(root):
    return root / CASE / "expect.txt"


def _first_value(path):
    lines = path.read_text().split("\n")
    i = next(i for i, ln in enumerate(lines) if ln.startswith("value ="))
    return lines, i


def test_every_topic_covered_exactly_once():
    places, problems = coverage()
    assert problems == []
    assert set(places) == set(ANCHORS)
    assert all(len(where) == 1 for where in places.values())


def test_cases_load():
    cases = load_casebook()
    assert len(cases) == 12
    for case in cases:
        assert case.fragments
        assert case.command[0] == "dwrlab"


def test_shipped_casebook_has_no_drift(book):
    before = {p: p.read_text() for p in book.rglob("expect.txt")}
    assert regenerate_examples(str(book), update=False) == []
    assert before == {p: p.read_text() for p in book.rglob("expect.txt")}


def test_jitter_inside_tolerance_is_ignored(book):
    lines, i = _first_value(_expect(book))
    parts = lines[i].split()
    value, tol = float(parts[-2]), float(parts[-1])
    parts[-2] = repr(value + 0.5 * tol)
    lines[i] = " ".join(parts)
    _expect(book).write_text("\n".join(lines))
    text = _expect(book).read_text()
    assert regenerate_examples(str(book), ids={CASE}) == []
    assert _expect(book).read_text() == text


def test_drift_is_reported_and_rewritten(book):
    original = _expect(book).read_text()
    lines, i = _first_value(_expect(book))
    parts = lines[i].split()
    parts[-2] = repr(float(parts[-2]) + 100 * float(parts[-1]) + 1.0)
    lines[i] = " ".join(parts)
    _expect(book).write_text("\n".join(lines))
    drifts = regenerate_examples(str(book), ids={CASE})
    assert len(drifts) == 1 and drifts[0].case_id == CASE
    assert CASE in str(drifts[0])
    assert _expect(book).read_text() == original
    assert regenerate_examples(str(book), update=False, ids={CASE}) == []


def test_placeholder_is_filled(book):
    original = _expect(book).read_text()
    lines, i = _first_value(_expect(book))
    parts = lines[i].split()
    parts[-2] = "?"
    lines[i] = " ".join(parts)
    _expect(book).write_text("\n".join(lines))
    drifts = regenerate_examples(str(book), ids={CASE})
    assert [d.old for d in drifts] == ["?"]
    assert _expect(book).read_text() == original


@pytest.mark.parametrize("name", ["case.cfg", "run.txt", "expect.txt"])
def test_missing_file_fails_the_case(book, name):
    os.remove(book / CASE / name)
    with pytest.raises(CaseFailure, match=name):
        load_case(str(book / CASE))


@pytest.mark.parametrize("command", ["", "python3 run.py", "dwrlab frobnicate"])
def test_bad_command_fails_the_case(book, command):
    (book / CASE / "run.txt").write_text(command + "\n")
    with pytest.raises(CaseFailure):
        load_case(str(book / CASE))


@pytest.mark.parametrize("line", ["value = report.csv total 1 0.5", "colour = blue"])
def test_bad_expect_line_fails_the_case(book, line):
    with open(_expect(book), "a") as fh:
        fh.write("\n" + line + "\n")
    with pytest.raises(CaseFailure, match="expect.txt line"):
        load_case(str(book / CASE))


def test_missing_fragment_fails_the_run(book):
    with open(_expect(book), "a") as fh:
        fh.write("\nvalue = report.csv nowhere 1 0 1e-9\n")
    with pytest.raises(CaseFailure, match="nowhere"):
        regenerate_examples(str(book), update=False, ids={CASE})


def test_failing_command_fails_the_run(book):
    cfg = book / CASE / "case.cfg"
    cfg.write_text(cfg.read_text().replace("n_elem = 8", "n_elem = 0"))
    with pytest.raises(CaseFailure, match="status 2"):
        regenerate_examples(str(book), update=False, ids={CASE})


def test_index_problems_are_reported(book):
    with open(book / "INDEX.txt", "a") as fh:
        fh.write("made up topic | verify no_such_check\n")
    _, problems = coverage(str(book))
    assert any("no_such_check" in p for p in problems)
    assert any("made up topic" in p and "unknown topic" in p for p in problems)


def test_uncovered_and_duplicate_topics(book):
    index = book / "INDEX.txt"
    lines = index.read_text().splitlines()
    dropped = next(ln for ln in lines if "| verify transpose_identity" in ln)
    lines.remove(dropped)
    lines.append(next(ln for ln in lines if "| verify galerkin_orthogonality" in ln))
    index.write_text("\n".join(lines) + "\n")
    _, problems = coverage(str(book))
    assert any("not covered" in p for p in problems)
    assert any("more than once" in p for p in problems)


def test_main_check(book, capsys):
    assert docsbook.main(["--root", str(book), "--check"]) == 0
    assert "0 drift(s), 0 coverage problem(s)" in capsys.readouterr().out
