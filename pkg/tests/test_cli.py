"""Command-line stages: file handoffs, exit codes, determinism."""

import json

import pytest

from protocheck.cli import main
from protocheck.fixtures import fixture_text


@pytest.fixture()
def workdir(tmp_path):
    (tmp_path / "model.dot").write_text(fixture_text("illustrative.dot"))
    (tmp_path / "map.cpm").write_text(fixture_text("illustrative.cpm"))
    (tmp_path / "emrtd.cpm").write_text(fixture_text("emrtd.cpm"))
    (tmp_path / "uds.cpm").write_text(fixture_text("uds.cpm"))
    return tmp_path


def run(*argv):
    try:
        return main(list(argv))
    except SystemExit as exc:
        return exc.code


def test_stage_chain_on_worked_example(workdir, capsys):
    model = str(workdir / "model.dot")
    cpm = str(workdir / "map.cpm")
    annotated = str(workdir / "annotated.dot")
    expanded = str(workdir / "expanded.dot")
    assert run("annotate", "--model", model, "--cpm", cpm, "--out", annotated) == 0
    assert run("expand", "--annotated", annotated, "--cpm", cpm, "--out", expanded) == 0
    assert run("gen-rebeca", "--annotated", annotated, "--cpm", cpm,
               "--out", str(workdir / "model.rebeca")) == 0
    assert (workdir / "model.rebeca").read_text() == fixture_text("illustrative.rebeca")
    assert run("explore", "--annotated", annotated, "--cpm", cpm,
               "--out", str(workdir / "lts.dot")) == 0
    assert run("collapse", "--lts", str(workdir / "lts.dot"),
               "--out", str(workdir / "collapsed.dot")) == 0
    assert run("verify-roundtrip", "--model", model, "--cpm", cpm) == 0
    report = str(workdir / "report.json")
    assert run("check", "--expanded", expanded, "--cpm", cpm,
               "--report", report) == 0
    data = json.loads((workdir / "report.json").read_text())
    assert data["violations"] == 0


def test_check_uds_exit_code_and_report(workdir, tmp_path):
    # learn the fixture, annotate with the shipped map, check: violation named
    model = str(tmp_path / "uds.dot")
    assert run("learn", "--sul", "uds", "--out", model) == 0
    annotated = str(tmp_path / "uds_a.dot")
    expanded = str(tmp_path / "uds_e.dot")
    cpm = str(workdir / "uds.cpm")
    assert run("annotate", "--model", model, "--cpm", cpm, "--out", annotated) == 0
    assert run("expand", "--annotated", annotated, "--cpm", cpm, "--out", expanded) == 0
    report = str(tmp_path / "report.json")
    assert run("check", "--expanded", expanded, "--cpm", cpm, "--report", report) == 2
    data = json.loads((tmp_path / "report.json").read_text())
    verdicts = {e["name"]: e["verdict"] for e in data["properties"]}
    assert verdicts["no_invalid_key"] == "VIOLATED"
    assert verdicts["auth_before_access"] == "HOLDS"
    # violated entries embed a replayable test
    entry = next(e for e in data["properties"] if e["name"] == "no_invalid_key")
    assert entry["test"]["inputs"][-1] == "SAwWrongKey"

    tests_path = str(tmp_path / "tests.jsonl")
    assert run("emit-test", "--report", report, "--out", tests_path) == 0
    assert run("replay", "--tests", tests_path, "--sul", "uds") == 0
    assert run("replay", "--tests", tests_path, "--sul", "uds-patched") == 3


def test_annotate_with_empty_cpm(workdir, tmp_path):
    empty = tmp_path / "empty.cpm"
    empty.write_text("[GAINS]\n[LOSES]\n[TAUS]\n")
    out = tmp_path / "annotated.dot"
    assert run("annotate", "--model", str(workdir / "model.dot"),
               "--cpm", str(empty), "--out", str(out)) == 0
    text = out.read_text()
    assert 'label="q1 {}"' in text and 'label="q2 {}"' in text


def test_usage_errors_exit_64(workdir):
    assert run("annotate", "--model", str(workdir / "model.dot")) == 64
    assert run("no-such-command") == 64
    assert run("replay", "--tests", "x.jsonl", "--sul", "no-such-fixture") == 64
    assert run("annotate", "--model", "missing.dot", "--cpm", "missing.cpm",
               "--out", "x.dot") == 64


def test_learn_writes_stats(workdir, tmp_path):
    stats = tmp_path / "stats.json"
    assert run("learn", "--sul", "emrtd", "--out", str(tmp_path / "m.dot"),
               "--oracle", "random-walk", "--min-len", "40", "--max-len", "50",
               "--num-tests", "150", "--seed", "7", "--stats", str(stats)) == 0
    data = json.loads(stats.read_text())
    assert data["states"] == 6
    assert data["proven"] is True
    assert data["membership_queries"] <= 20_000


def test_pipeline_on_worked_example(workdir):
    config = workdir / "pipeline.json"
    out_dir = workdir / "out"
    config.write_text(json.dumps({
        "model": str(workdir / "model.dot"),
        "cpm": str(workdir / "map.cpm"),
        "out_dir": str(out_dir),
        "seed": 11,
    }))
    assert run("pipeline", "--config", str(config)) == 0
    produced = {p.name for p in out_dir.iterdir()}
    assert {"model.dot", "annotated.dot", "expanded.dot", "model.rebeca",
            "lts.dot", "collapsed.dot", "report.json", "tests.jsonl",
            "manifest.json"} <= produced
    report = json.loads((out_dir / "report.json").read_text())
    assert report["violations"] == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["seed"] == 11
    assert manifest["stages"]["verify-roundtrip"]["passed"] is True
    assert "config_sha256" in manifest and "tool_version" in manifest


def test_outputs_deterministic_across_runs(workdir):
    config = workdir / "pipeline.json"
    out_dir = workdir / "out"
    config.write_text(json.dumps({
        "model": str(workdir / "model.dot"),
        "cpm": str(workdir / "map.cpm"),
        "out_dir": str(out_dir),
        "seed": 3,
    }))
    assert run("pipeline", "--config", str(config)) == 0
    snapshot = {p.name: p.read_bytes() for p in out_dir.iterdir()}
    assert run("pipeline", "--config", str(config)) == 0
    again = {p.name: p.read_bytes() for p in out_dir.iterdir()}
    assert snapshot == again


def test_gen_rebeca_with_mutation(workdir, tmp_path):
    annotated = str(tmp_path / "a.dot")
    run("annotate", "--model", str(workdir / "model.dot"),
        "--cpm", str(workdir / "map.cpm"), "--out", annotated)
    out = tmp_path / "mutated.rebeca"
    assert run("gen-rebeca", "--annotated", annotated,
               "--cpm", str(workdir / "map.cpm"), "--out", str(out),
               "--timeout-mutation", "0.2") == 0
    text = out.read_text()
    assert "msgsrv timeout()" in text and "int to = ?(0,1);" in text


def test_collapse_mutated_lts_keeps_nondeterminism(workdir, tmp_path):
    annotated = str(tmp_path / "a.dot")
    run("annotate", "--model", str(workdir / "model.dot"),
        "--cpm", str(workdir / "map.cpm"), "--out", annotated)
    lts = str(tmp_path / "lts.dot")
    assert run("explore", "--annotated", annotated, "--cpm", str(workdir / "map.cpm"),
               "--out", lts, "--timeout-mutation", "0.2") == 0
    out = tmp_path / "collapsed.dot"
    assert run("collapse", "--lts", lts, "--out", str(out)) == 0
    text = out.read_text()
    assert text.count("q1 -> ") >= 2        # parallel outcomes kept
    assert "timeout" in text


def test_gen_rebeca_emits_companion_property_file(workdir, tmp_path):
    annotated = str(tmp_path / "a.dot")
    run("annotate", "--model", str(workdir / "model.dot"),
        "--cpm", str(workdir / "map.cpm"), "--out", annotated)
    props = tmp_path / "model.property"
    assert run("gen-rebeca", "--annotated", annotated,
               "--cpm", str(workdir / "map.cpm"),
               "--out", str(tmp_path / "model.rebeca"),
               "--properties-out", str(props)) == 0
    from protocheck import parse_property_file
    parsed = parse_property_file(props.read_text())
    assert "no_invalid_key" in parsed


def test_check_with_property_file_matches_builtin(workdir, tmp_path):
    from protocheck.fixtures import fixture_text
    annotated = str(tmp_path / "a.dot")
    expanded = str(tmp_path / "e.dot")
    cpm = str(workdir / "map.cpm")
    run("annotate", "--model", str(workdir / "model.dot"), "--cpm", cpm,
        "--out", annotated)
    run("expand", "--annotated", annotated, "--cpm", cpm, "--out", expanded)
    props = tmp_path / "generic.properties"
    props.write_text(fixture_text("generic.properties"))
    r_builtin = tmp_path / "r1.json"
    r_file = tmp_path / "r2.json"
    assert run("check", "--expanded", expanded, "--cpm", cpm,
               "--report", str(r_builtin)) == 0
    assert run("check", "--expanded", expanded, "--cpm", cpm,
               "--properties", str(props), "--report", str(r_file)) == 0
    b = json.loads(r_builtin.read_text())
    f = json.loads(r_file.read_text())
    assert {e["name"]: e["verdict"] for e in b["properties"]} == \
        {e["name"]: e["verdict"] for e in f["properties"]}


def test_pipeline_learns_mutates_and_replays(workdir):
    config = workdir / "uds_pipeline.json"
    out_dir = workdir / "uds_out"
    config.write_text(json.dumps({
        "sul": "uds",
        "cpm": str(workdir / "uds.cpm"),
        "out_dir": str(out_dir),
        "seed": 13,
        "learner": {"algorithm": "lstar", "oracle": "random-walk",
                    "min_len": 20, "max_len": 50, "num_tests": 50},
        "mutation": {"enabled": True, "probability": 0.2},
    }))
    assert run("pipeline", "--config", str(config)) == 0
    report = json.loads((out_dir / "report.json").read_text())
    verdicts = {e["name"]: e["verdict"] for e in report["properties"]}
    assert verdicts["no_invalid_key"] == "VIOLATED"
    replayed = json.loads((out_dir / "replay.json").read_text())
    assert replayed["diverged"] == 0          # confirmed on the same system
    manifest = json.loads((out_dir / "manifest.json").read_text())
    assert manifest["stages"]["learn"]["proven"] is True
    assert manifest["stages"]["gen-rebeca"]["mutated"] is True
    # mutated collapse keeps both outcomes
    assert "timeout" in (out_dir / "collapsed.dot").read_text()
    assert "model.property" in {p.name for p in out_dir.iterdir()}
