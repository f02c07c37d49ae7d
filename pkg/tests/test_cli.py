import csv
import hashlib
import io
import json
import os
import subprocess
import sys

import pytest

from distproc import asm, circuits, cli, isa
from distproc.hardware import data_path, load_data

DATA = {name: str(data_path(name)) for name in
        ("active_reset.asm.json", "conditional_flip.ir.json", "active_reset.ir.json", "calibration.json")}


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, [json.loads(line) for line in err.splitlines() if line.strip()]


def digest(directory):
    h = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as f:
            h[name] = hashlib.sha256(f.read()).hexdigest()
    return h


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


# --------------------------------------------------------------- compile

def test_compile_writes_manifest_and_is_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    code, out, _ = run(["compile", DATA["conditional_flip.ir.json"], "--out", a], capsys)
    assert code == 0 and out.strip() == str(a / "manifest.json")
    run(["compile", DATA["conditional_flip.ir.json"], "--out", b], capsys)
    manifest = json.loads((a / "manifest.json").read_text())
    assert len(manifest["cores"]) >= 1
    assert {"symbols.json", "program.asm.json", "manifest.json"} <= set(os.listdir(a))
    assert digest(a) == digest(b)


def test_compile_missing_calibration_is_exit_3(tmp_path, capsys):
    cal = load_data("calibration.json")
    cal["gates"] = [g for g in cal["gates"] if not (g["name"] == "X90" and g["qubits"] == ["Q0"])]
    write_json(tmp_path / "cal.json", cal)
    config = write_json(tmp_path / "project.json", {"calibration": "cal.json"})
    code, _, diags = run(["compile", DATA["conditional_flip.ir.json"], "--config", config, "--out", tmp_path / "o"],
                         capsys)
    assert code == 3
    assert any(d["error"] == "UnknownGate" for d in diags)


def test_compile_malformed_json_is_exit_2_with_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('[\n {"name": "read",\n')
    code, _, (diag,) = run(["compile", bad, "--out", tmp_path / "o"], capsys)
    assert code == 2 and diag["error"] == "JSONDecodeError" and diag["line"] == 3


def test_compile_schema_violation_is_exit_2(tmp_path, capsys):
    prog = write_json(tmp_path / "p.json", [{"name": "pulse", "freq": "Q0.freq", "env": {}}])
    code, _, diags = run(["compile", prog, "--out", tmp_path / "o"], capsys)
    assert code == 2 and diags


def test_missing_input_is_exit_4(tmp_path, capsys):
    code, _, (diag,) = run(["compile", tmp_path / "nope.json", "--out", tmp_path / "o"], capsys)
    assert code == 4 and diag["error"] == "FileNotFoundError"
    config = write_json(tmp_path / "project.json", {"channels": "missing.json"})
    code, _, _ = run(["compile", DATA["active_reset.ir.json"], "--config", config, "--out", tmp_path / "o"], capsys)
    assert code == 4


def test_pass_override(tmp_path, capsys):
    code, _, _ = run(["compile", DATA["active_reset.ir.json"], "--out", tmp_path / "o",
                      "--passes", "flatten,emit"], capsys)
    assert code == 3
    config = write_json(tmp_path / "project.json", {"passes": ["nonexistent"]})
    code, _, _ = run(["compile", DATA["active_reset.ir.json"], "--config", config, "--out", tmp_path / "o"], capsys)
    assert code == 3


# --------------------------------------------------------------- asm / disasm

def test_asm_then_disasm_is_a_fixed_point(tmp_path, capsys):
    code, out, _ = run(["asm", DATA["active_reset.asm.json"], "--out", tmp_path], capsys)
    assert code == 0
    (core,) = json.loads((tmp_path / "manifest.json").read_text())["cores"]
    binary = tmp_path / core["binary"]
    words = isa.bytes_to_words(binary.read_bytes())
    assert len(words) == 8
    code, listing, _ = run(["disasm", binary], capsys)
    assert code == 0
    assert asm.assemble_listing(listing) == words
    code, manifest_listing, _ = run(["disasm", tmp_path / "manifest.json"], capsys)
    assert manifest_listing.startswith("# core Q1.qdrv,Q1.rdrv,Q1.rdlo\n") and listing in manifest_listing


def test_disasm_reserved_bits_strict_and_lenient(tmp_path, capsys):
    word = isa.encode(isa.Done()) | 1
    path = tmp_path / "x.bin"
    path.write_bytes(isa.words_to_bytes([word]))
    code, _, (diag,) = run(["disasm", path], capsys)
    assert code == 3 and diag["error"] == "NonzeroReservedBits"
    with pytest.warns(UserWarning, match="nonzero bits"):
        code, listing, _ = run(["disasm", path, "--lenient"], capsys)
    assert code == 0 and "done" in listing


def test_asm_malformed_json_is_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"Q0": [}')
    code, _, (diag,) = run(["asm", bad, "--out", tmp_path / "o"], capsys)
    assert code == 2 and diag["line"] == 1 and diag["column"] > 1


def test_asm_error_is_exit_3(tmp_path, capsys):
    prog = load_data("active_reset.asm.json")
    core = next(iter(prog))
    prog[core].insert(1, {"op": "jump_i", "jump_label": "nowhere"})
    code, _, diags = run(["asm", write_json(tmp_path / "p.json", prog), "--out", tmp_path / "o"], capsys)
    assert code == 3 and diags


# --------------------------------------------------------------- sim / timeline

@pytest.fixture
def reset_manifest(tmp_path, capsys):
    run(["asm", DATA["active_reset.asm.json"], "--out", tmp_path / "bin"], capsys)
    return tmp_path / "bin" / "manifest.json"


def timeline_rows(text):
    return [(r["channel"], int(r["start_cycle"])) for r in csv.DictReader(io.StringIO(text))]


@pytest.mark.parametrize("bit,flip", [(1, True), (0, False)])
def test_sim_reset_scripted(tmp_path, capsys, reset_manifest, bit, flip):
    script = write_json(tmp_path / "s.json", {"Q1": [bit]})
    out = tmp_path / "run"
    code, _, _ = run(["sim", reset_manifest, "--backend", f"scripted:{script}", "--out", out], capsys)
    assert code == 0
    rows = timeline_rows((out / "timeline.csv").read_text())
    assert (("Q1.qdrv", 1195) in rows) == flip
    assert ("Q1.rdrv", 5) in rows and ("Q1.rdlo", 325) in rows
    (shot,) = [json.loads(line) for line in (out / "shots.jsonl").read_text().splitlines()]
    assert shot == {"shot": 0, "mid": {"Q1": [bit]}, "final": {}}


def test_timeline_command(tmp_path, capsys, reset_manifest):
    script = write_json(tmp_path / "s.json", {"Q1": [1]})
    code, out, _ = run(["timeline", reset_manifest, "--backend", f"scripted:{script}"], capsys)
    assert code == 0 and ("Q1.qdrv", 1195) in timeline_rows(out)


def test_sim_zero_shots(tmp_path, capsys, reset_manifest):
    out = tmp_path / "run"
    code, _, _ = run(["sim", reset_manifest, "--shots", 0, "--out", out], capsys)
    assert code == 0
    assert (out / "shots.jsonl").read_text() == ""
    assert json.loads((out / "report.json").read_text())["shots"] == 0


def test_sim_negative_shots_is_exit_2(tmp_path, capsys, reset_manifest):
    code, _, _ = run(["sim", reset_manifest, "--shots", -1, "--out", tmp_path], capsys)
    assert code == 2


def test_sim_error_is_exit_5_and_keeps_the_trace(tmp_path, capsys, chan_cfg):
    prog = {"Q0.qdrv,Q0.rdrv,Q0.rdlo": [
        {"op": "phase_reset"},
        {"op": "pulse", "freq": 4.9e9, "phase": 0.0, "amp": 0.5, "start_time": 2, "dest": "Q0.qdrv",
         "env": {"env_func": "square", "paradict": {"twidth": 3e-8}}},
        {"op": "done_stb"}]}
    src = write_json(tmp_path / "late.json", prog)
    run(["asm", src, "--out", tmp_path / "bin"], capsys)
    out = tmp_path / "run"
    code, _, (diag,) = run(["sim", tmp_path / "bin" / "manifest.json", "--out", out], capsys)
    assert code == 5 and diag["error"] == "TriggerMissed" and diag["shot"] == 0
    assert (out / "failed_shot.jsonl").exists()
    code, _, _ = run(["sim", tmp_path / "bin" / "manifest.json", "--out", out, "--lenient"], capsys)
    assert code == 0


def test_unknown_backend_is_exit_2(tmp_path, capsys, reset_manifest):
    code, _, (diag,) = run(["sim", reset_manifest, "--backend", "noisy", "--out", tmp_path], capsys)
    assert code == 2 and diag["error"] == "BackendSpec"


def test_statevector_needs_symbols(tmp_path, capsys, reset_manifest):
    code, _, _ = run(["sim", reset_manifest, "--backend", "statevector", "--out", tmp_path], capsys)
    assert code == 5


@pytest.fixture(scope="module")
def teleport_manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("teleport")
    prog = root / "teleport.json"
    prog.write_text(json.dumps(circuits.teleport("+", "X")))
    assert cli.main(["compile", str(prog), "--out", str(root / "bin")]) == 0
    return root / "bin" / "manifest.json"


def test_sim_teleport_report(tmp_path, capsys, teleport_manifest):
    out = tmp_path / "run"
    code, _, _ = run(["sim", teleport_manifest, "--backend", "statevector", "--shots", 10_000, "--seed", 7,
                      "--out", out], capsys)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["expectations"]["Q2"]["expectation"] == 1.0
    assert report["expectations"]["Q2"]["n"] == 10_000
    parts = report["partitions"]
    assert sorted(parts) == ["Q0=0,Q1=0", "Q0=0,Q1=1", "Q0=1,Q1=0", "Q0=1,Q1=1"]
    assert sum(p["n"] for p in parts.values()) == 10_000
    assert all(p["expectations"]["Q2"]["expectation"] == 1.0 for p in parts.values())


def test_sim_is_deterministic_and_parallel_safe(tmp_path, capsys, teleport_manifest):
    config = write_json(tmp_path / "project.json", {"simulation": {"workers": 2}})
    for name, extra in (("a", []), ("b", []), ("c", ["--config", config])):
        code, _, _ = run(["sim", teleport_manifest, "--backend", "statevector", "--shots", 300, "--seed", 1,
                          "--out", tmp_path / name] + extra, capsys)
        assert code == 0
    assert digest(tmp_path / "a") == digest(tmp_path / "b") == digest(tmp_path / "c")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "distproc", "asm", DATA["active_reset.asm.json"],
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "manifest.json").exists()
    proc = subprocess.run([sys.executable, "-m", "distproc", "frobnicate"], capture_output=True, text=True)
    assert proc.returncode == 2
