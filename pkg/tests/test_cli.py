import io
import json
import shutil
import subprocess
import sys
from importlib.resources import files

import pytest

from neuraltm import cli

BP = str(files("neuraltm") / "machines" / "balanced_parens.yaml")
BP_STACK = str(files("neuraltm") / "machines" / "balanced_parens_stack.yaml")


def call(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out=out)
    return code, out.getvalue()


def test_compile_wcm(tmp_path):
    path = tmp_path / "net.json"
    code, out = call("compile", "--machine", BP, "--arch", "wcm21", "--T", "100",
                     "--out", str(path))
    assert code == 0
    lines = dict(line.split("\t") for line in out.splitlines())
    assert (lines["width"], lines["full_adders"], lines["self_attention"],
            lines["cross_attention"]) == ("59", "7", "9", "1")
    assert json.loads(path.read_text())["format"] == "neuraltm-weights"


def test_compile_ss4(tmp_path):
    code, out = call("compile", "--machine", BP_STACK, "--arch", "ss95-4",
                     "--out", str(tmp_path / "n.json"))
    assert code == 0
    assert "layers_per_step\t4" in out and "detector_width\t54" in out


def test_arch_mismatch(tmp_path, capsys):
    code, _ = call("compile", "--machine", BP_STACK, "--arch", "wcm21",
                   "--out", str(tmp_path / "n.json"))
    assert code == 2
    assert "Turing machine" in capsys.readouterr().err


def test_invalid_machine_file(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("states: [A]\nalphabet: [x]\ninitial: Z\nterminals: []\ntransitions: []\n")
    code, _ = call("compile", "--machine", str(bad), "--arch", "wcm21", "--out",
                   str(tmp_path / "n.json"))
    assert code == 2
    assert "unknown-state" in capsys.readouterr().err


def test_run_trace_format():
    code, out = call("run", "--machine", BP, "--arch", "wcm21", "--input", "B()E", "--trace")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 11 and lines[0] == "0\tI\t[B]()E" and lines[-1] == "T"


def test_run_ss4():
    code, out = call("run", "--machine", BP_STACK, "--arch", "ss95-4", "--input", "(()())",
                     "--T", "12")
    assert (code, out) == (0, "T\n")


def test_run_unknown_symbol(capsys):
    code, _ = call("run", "--machine", BP, "--arch", "wcm21", "--input", "B(x)E")
    assert code != 0
    assert "'x'" in capsys.readouterr().err


def test_run_without_answer(capsys):
    code, out = call("run", "--machine", BP, "--arch", "wcm21", "--input", "B()E", "--T", "3")
    assert code == 1 and out == ""
    assert "step-limit-exceeded" in capsys.readouterr().err


def test_run_from_weight_file(tmp_path):
    path = tmp_path / "n.json"
    call("compile", "--machine", BP_STACK, "--arch", "ss95-1", "--out", str(path))
    code, out = call("run", "--net", str(path), "--arch", "ss95-1", "--input", "(())")
    assert (code, out) == (0, "T\n")
    code, _ = call("run", "--net", str(path), "--arch", "ss95-4", "--input", "(())")
    assert code == 2


def test_verify_inputs_file(tmp_path):
    inputs = tmp_path / "in.txt"
    inputs.write_text("B()E\nB)(E\nB(()())E\n")
    code, out = call("verify", "--machine", BP, "--arch", "wcm21", "--inputs", str(inputs))
    assert code == 0
    assert out == "cases\t3\ndivergences\t0\n"


def test_verify_exhaustive_stack():
    code, out = call("verify", "--machine", BP_STACK, "--arch", "ss95-4", "--exhaustive", "6")
    assert code == 0 and out.startswith("cases\t127\n")


def test_verify_random_is_seeded():
    argv = ["verify", "--machine", BP_STACK, "--arch", "ss95-1", "--random", "30",
            "--seed", "4", "--max-len", "8"]
    assert call(*argv) == call(*argv)
    assert call(*argv)[0] == 0


def test_verify_random_machines():
    code, out = call("verify", "--arch", "wcm21", "--random-machines", "3", "--random", "5",
                     "--seed", "1")
    assert code == 0 and out.startswith("cases\t15\n")


def corrupt(path, layer, index, delta):
    doc = json.loads(path.read_text())
    arr = doc["layers"][layer]["b"]
    values = arr["data"].split()
    values[index] = repr(float(values[index]) + delta)
    arr["data"] = " ".join(values)
    path.write_text(json.dumps(doc))


def test_verify_reports_corruption(tmp_path):
    path = tmp_path / "n.json"
    call("compile", "--machine", BP, "--arch", "wcm21", "--out", str(path))
    corrupt(path, 0, 59 + 3, 1.0)  # loosen one transition detector
    code, out = call("verify", "--machine", BP, "--net", str(path), "--arch", "wcm21",
                     "--exhaustive", "4", "--symbols", "()", "--prefix", "B", "--suffix", "E")
    assert code == 1
    report = dict(line.split("\t", 1) for line in out.splitlines())
    assert report["divergences"] == "1+"
    assert int(report["step"]) >= 1
    assert report["expected"] != report["got"]


def test_verify_corrupted_stack_weights(tmp_path):
    path = tmp_path / "n.json"
    call("compile", "--machine", BP_STACK, "--arch", "ss95-4", "--out", str(path))
    corrupt(path, 3, 6, 0.125)  # nudge the reassembled stack-0 value
    code, out = call("verify", "--machine", BP_STACK, "--net", str(path), "--arch", "ss95-4",
                     "--exhaustive", "3")
    assert code == 1
    assert "step\t1" in out


def test_verify_rejects_foreign_weights(tmp_path, capsys):
    path = tmp_path / "n.json"
    call("compile", "--machine", BP, "--arch", "wcm21", "--T", "20", "--out", str(path))
    doc = json.loads(path.read_text())
    doc["meta"]["machine_hash"] = "0" * 64
    path.write_text(json.dumps(doc))
    code, _ = call("verify", "--machine", BP, "--net", str(path), "--arch", "wcm21",
                   "--exhaustive", "1", "--symbols", "()")
    assert code == 2
    assert "another machine" in capsys.readouterr().err


def test_malformed_weight_file(tmp_path, capsys):
    path = tmp_path / "n.json"
    path.write_text("{}")
    code, _ = call("run", "--net", str(path), "--arch", "wcm21", "--input", "B()E")
    assert code == 2
    assert "malformed-document" in capsys.readouterr().err


def test_precision_table():
    code, out = call("precision", "--b", "40", "--pops", "15")
    assert code == 0
    rows = [line.split("\t") for line in out.splitlines()[1:-1]]
    assert all(int(flips) == 0 for k, _, flips in rows if int(k) <= 9)
    assert out.splitlines()[-1] == "first_flip\t10"
    code, out = call("precision", "--b", "4", "--pops", "20")
    assert out.splitlines()[-1] == "first_flip\tnone"


def test_precision_base_too_small(capsys):
    assert call("precision", "--b", "3", "--pops", "5")[0] == 2
    assert "b must be >= 4" in capsys.readouterr().err


def test_oracle():
    code, out = call("oracle", "--machine", BP_STACK, "--input", "(())", "--trace")
    assert code == 0
    assert out.splitlines()[0] == "0\tI\t1100\t-" and out.splitlines()[-1] == "T"


def test_usage_errors():
    with pytest.raises(SystemExit) as e:
        cli.main(["run", "--arch", "wcm21"])
    assert e.value.code == 2
    assert call("verify", "--machine", BP, "--arch", "wcm21")[0] == 2


@pytest.mark.skipif(shutil.which("neuraltm") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["neuraltm", "run", "--machine", BP, "--arch", "wcm21",
                           "--input", "B(()E"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout == "F\n"


def test_module_entry():
    proc = subprocess.run([sys.executable, "-m", "neuraltm.cli", "precision", "--b", "2",
                           "--pops", "3"], capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stdout == "" and "error" in proc.stderr
