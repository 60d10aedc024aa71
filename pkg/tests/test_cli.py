import json
import subprocess
import sys

import pytest

from partsched import trace as tracefile
from partsched.cli import main
from partsched.model import MS
from test_analysis import adversarial_trace

OVERLAP = """scenario name=bad horizon=1s
node n1
partition n1 1 period=1s duration=500ms
partition n1 2 period=1s duration=300ms
minor n1 1 offset=0 duration=500ms
minor n1 2 offset=400ms duration=300ms
"""

STRIDE = """scenario name=stride horizon=1s
node n1
partition n1 1 period=500ms duration=100ms
minor n1 1 offset=0 duration=100ms
minor n1 1 offset=300ms duration=100ms
"""


def test_validate_fig1(capsys):
    assert main(["validate", "fig1"]) == 0
    out = capsys.readouterr().out
    assert "n1: valid (H=8s, 11 minor frames)" in out


def test_validate_all_bundled(capsys):
    for name in ("fig2", "fig3", "scatter_1", "scatter_2", "scatter_3"):
        assert main(["validate", name]) == 0
    assert "frame doubled: valid" in capsys.readouterr().out


def test_validate_overlap_is_domain_violation(tmp_path, capsys):
    path = tmp_path / "bad.scn"
    path.write_text(OVERLAP)
    assert main(["validate", str(path)]) == 1
    assert "K2_NO_OVERLAP" in capsys.readouterr().out


def test_validate_stride_violation(tmp_path, capsys):
    path = tmp_path / "stride.scn"
    path.write_text(STRIDE)
    assert main(["validate", str(path)]) == 1
    assert "C2" in capsys.readouterr().out


def test_run_writes_to_env_directory(out_dir, capsys):
    assert main(["run", "fig3"]) == 0
    trace = tracefile.load(out_dir / "fig3.trace")
    assert trace.horizon == 600 * MS
    report = json.loads((out_dir / "fig3.report.json").read_text())
    assert report["nodes"]["n1"]["exec_us"]["1001"] == 120 * MS


def test_run_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    assert main(["run", "scatter_2", "--trace-out", str(a), "--report-out", str(tmp_path / "a.json")]) == 0
    assert main(["run", "scatter_2", "--threads", "3", "--trace-out", str(b),
                 "--report-out", str(tmp_path / "b.json")]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_until_zero_gives_empty_trace(out_dir, capsys):
    assert main(["run", "fig3", "--until", "0"]) == 0
    trace = tracefile.load(out_dir / "fig3.trace")
    assert trace.events == [] and trace.horizon == 0
    assert main(["analyze", str(out_dir / "fig3.trace"), "--gantt"]) == 0
    out = capsys.readouterr().out
    assert "lane n1/frames" in out and "bar " not in out


def test_analyze_latency_scenario2(out_dir, capsys):
    main(["run", "scatter_2"])
    capsys.readouterr()
    assert main(["analyze", str(out_dir / "scatter_2.trace"), "--latency", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [r["node"] for r in doc["records"]] == ["sat1", "sat2", "sat3"]
    assert doc["summary"]["count"] == 3


def test_analyze_incomplete_chain_exit_1(out_dir, capsys):
    main(["run", "fig3"])
    assert main(["analyze", str(out_dir / "fig3.trace"), "--latency"]) == 1


def test_analyze_cap_audit(tmp_path, out_dir, capsys):
    main(["run", "fig3"])
    assert main(["analyze", str(out_dir / "fig3.trace"), "--cap-audit", "--jitter"]) == 0
    out = capsys.readouterr().out
    assert "cap-audit violations=0" in out and "jitter node=n1" in out
    bad = tmp_path / "adv.trace"
    tracefile.dump(adversarial_trace(13 * MS), bad)
    assert main(["analyze", str(bad), "--cap-audit"]) == 1
    assert "unexcused_us=1000" in capsys.readouterr().out
    assert main(["analyze", str(bad), "--cap-audit", "--slack", "2ms"]) == 0


def test_analyze_requires_a_mode(out_dir, capsys):
    main(["run", "fig3"])
    assert main(["analyze", str(out_dir / "fig3.trace")]) == 2


def test_analyze_rejects_unknown_trace_version(tmp_path, capsys):
    path = tmp_path / "future.trace"
    path.write_text("# partsched-trace 99\n")
    assert main(["analyze", str(path), "--jitter"]) == 2
    assert "version" in capsys.readouterr().err


def test_analyze_missing_file(tmp_path):
    assert main(["analyze", str(tmp_path / "missing.trace"), "--jitter"]) == 2


def test_gantt_to_file(out_dir, tmp_path):
    main(["run", "fig3"])
    dest = tmp_path / "g.json"
    assert main(["analyze", str(out_dir / "fig3.trace"), "--gantt", "--format", "json", "--out", str(dest)]) == 0
    doc = json.loads(dest.read_text())
    assert doc["version"] == 1 and len(doc["lanes"]) == 2


def test_generate_frame_fig1(capsys):
    assert main(["generate-frame", "-p", "1:2s:250ms", "-p", "2:2s:250ms", "-p", "3:4s:250ms",
                 "-p", "4:8s:250ms"]) == 0
    out = capsys.readouterr().out
    assert "# cli: H=8s" in out and "valid" in out
    assert out.count("frame_minor cli") >= 11


def test_generate_frame_infeasible(capsys):
    assert main(["generate-frame", "-p", "1:1s:600ms", "-p", "2:1s:600ms"]) == 1
    assert "infeasible" in capsys.readouterr().out


def test_generate_frame_needs_input(capsys):
    assert main(["generate-frame"]) == 2


def test_missing_scenario_and_parse_errors(tmp_path, capsys):
    assert main(["validate", "no-such-scenario"]) == 2
    path = tmp_path / "broken.scn"
    path.write_text("scenario name=x\nnode n1 cpus=lots\n")
    assert main(["validate", str(path)]) == 2
    assert "cpus" in capsys.readouterr().err


def test_bad_arguments_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["generate-frame", "-p", "nonsense"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "partsched", "validate", "fig3"], capture_output=True, text=True)
    assert proc.returncode == 0 and "valid" in proc.stdout
