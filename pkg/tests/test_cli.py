"""CLI: exit codes, output determinism, and the demo registry."""

import json

import pytest

from guardcheck.cli import main
from guardcheck.demos import DEMOS, demo_documents, demo_path


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def frac_files(tmp_path):
    protocol = tmp_path / "frac.json"
    protocol.write_text(json.dumps({"builtin": "fractional"}))
    relations = tmp_path / "relations.json"
    relations.write_text(
        json.dumps(
            {
                "queries": [
                    {"kind": "guard", "p": ["frac", 1, 3], "s": ["int", 1], "expect": "holds"}
                ]
            }
        )
    )
    return str(protocol), str(relations)


def test_check_pass(frac_files, capsys):
    code, out, _ = run(capsys, "check", *frac_files)
    assert code == 0 and "PASS" in out


def test_check_wellformedness_only(frac_files, tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"queries": []}))
    code, out, _ = run(capsys, "check", frac_files[0], str(empty))
    assert code == 0


def test_check_verdict_mismatch_exits_1(frac_files, tmp_path, capsys):
    # an empty share guards nothing, so expecting holds must mismatch
    relations = tmp_path / "bad.json"
    relations.write_text(
        json.dumps(
            {"queries": [{"kind": "guard", "p": ["frac", 0, 1], "s": ["int", 1], "expect": "holds"}]}
        )
    )
    code, out, _ = run(capsys, "check", frac_files[0], str(relations))
    assert code == 1
    assert "witness" in out


def test_corrupt_json_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{nope")
    code, _, err = run(capsys, "check", str(bad))
    assert code == 2 and "input error" in err


def test_missing_file_exits_2(capsys):
    code, _, err = run(capsys, "check", "/nonexistent/file.json")
    assert code == 2


def test_schema_error_exits_2(tmp_path, capsys):
    doc = tmp_path / "m.json"
    doc.write_text(json.dumps({"builtin": "alchemy"}))
    code, _, err = run(capsys, "check", str(doc))
    assert code == 2


def test_explore_scenario_file(tmp_path, capsys):
    doc = demo_documents()["rwlock-exc"]["rwlock-exc.scenario.json"]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "explore", str(path), "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["ok"] and report["stuck_count"] == 0


def test_explore_bound_exceeded_exits_3(tmp_path, capsys):
    doc = demo_documents()["rwlock-exc"]["rwlock-exc.scenario.json"]
    path = tmp_path / "s.json"
    path.write_text(json.dumps(doc))
    code, out, _ = run(capsys, "explore", str(path), "--max-states", "5")
    assert code == 3


def test_demo_unknown_exits_2(capsys):
    code, _, err = run(capsys, "demo", "unknown-name")
    assert code == 2 and "available" in err


def test_demo_registry_complete():
    assert set(DEMOS) == {
        "rwlock-exc",
        "rwlock-shared",
        "rwlock-multi",
        "hashtable-collide",
        "race-negative",
        "protocol-frac",
        "protocol-count",
        "protocol-rwlock",
    }


def test_checked_in_demo_files_match_builders():
    for name, files in demo_documents().items():
        for fname, doc in files.items():
            on_disk = json.loads(demo_path(fname).read_text())
            assert on_disk == doc, f"{fname} is stale; run python -m guardcheck.demos"


def test_demo_check_runs(capsys):
    code, out, _ = run(capsys, "demo", "protocol-count", "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["ok"] and report["queries"]


def test_demo_json_deterministic(capsys):
    code1, out1, _ = run(capsys, "demo", "protocol-frac", "--format", "json")
    code2, out2, _ = run(capsys, "demo", "protocol-frac", "--format", "json")
    assert (code1, out1) == (code2, out2)


def test_quiet_suppresses_output(capsys):
    code, out, _ = run(capsys, "demo", "protocol-frac", "--quiet")
    assert code == 0 and out == ""


def test_report_rendering(tmp_path, capsys):
    code, out, _ = run(capsys, "demo", "protocol-frac", "--format", "json")
    path = tmp_path / "report.json"
    path.write_text(out)
    code, text, _ = run(capsys, "report", str(path))
    assert code == 0 and "PASS" in text


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit):
        main(["check", "--martian"])


def test_race_negative_demo(capsys):
    code, out, _ = run(capsys, "demo", "race-negative", "--format", "json")
    assert code == 0
    report = json.loads(out)
    assert report["stuck_count"] >= 1 and report["ok"]
