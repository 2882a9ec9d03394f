import csv
import io
import json
import subprocess
import sys

import pytest

from nodesplit.cli import main


def run(*args):
    p = subprocess.run([sys.executable, "-m", "nodesplit", *map(str, args)], capture_output=True, text=True)
    return p.returncode, p.stdout, p.stderr


def test_analyze_marks_split_and_is_deterministic(fixture_dir):
    rc, out, _ = run("analyze", fixture_dir / "ae1.arch")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 9
    assert [r["layer_id"] for r in rows if r["split"] == "SPLIT"] == ["B5"]
    assert run("analyze", fixture_dir / "ae1.arch")[1] == out
    rc, js, _ = run("analyze", fixture_dir / "ae1.arch", "--format", "structured")
    assert rc == 0 and json.loads(js)["split"] == "B5"


def test_analyze_single_layer_and_malformed(tmp_path):
    one = tmp_path / "one.arch"
    one.write_text(json.dumps({"name": "one", "input": [4, 4, 1],
                               "layers": [{"id": "c", "type": "conv2d", "kernel": [3, 3], "filters": 1}]}))
    rc, out, _ = run("analyze", one)
    assert rc == 0 and len(out.strip().splitlines()) == 2
    bad = tmp_path / "bad.arch"
    bad.write_text(json.dumps({"name": "b", "input": [4, 4, 1],
                               "layers": [{"id": "c", "type": "conv2d", "kernel": [3, 3], "filterz": 1}]}))
    rc, _, err = run("analyze", bad)
    assert rc == 2 and "filterz" in err
    rc, _, err = run("analyze", tmp_path / "missing.arch")
    assert rc == 2


@pytest.mark.parametrize("name, split", [("ae1", "B5"), ("ae2", "B3")])
def test_split_command(fixture_dir, name, split):
    rc, out, _ = run("split", fixture_dir / f"{name}.arch", "--protocol", "BLE", "--hub-energy-per-mac", "10e-12")
    assert rc == 0
    doc = json.loads(out)
    assert doc["split"] == split
    assert set(doc["feasibility"]) >= {"e_node", "e_comm", "e_hub", "checks"}


def test_split_protocol_handling(fixture_dir):
    arch = fixture_dir / "ae1.arch"
    rc, out, _ = run("split", arch, "--protocol", "custom:0.002:2000000", "--hub-energy-per-mac", "1e-11")
    assert rc == 0 and json.loads(out)["protocol"]["energy_point_nj"] == pytest.approx(0.002)
    rc, _, err = run("split", arch, "--protocol", "carrier-pigeon", "--hub-energy-per-mac", "1e-11")
    assert rc == 2 and "carrier-pigeon" in err
    rc, _, _ = run("split", arch, "--protocol", "BLE")
    assert rc == 2  # hub energy has no default


def _power(fixture_dir, *extra):
    rc, out, _ = run("power", fixture_dir / "ae1.arch", "--split", "B3", *extra)
    assert rc == 0
    return {r["layer_id"]: r for r in csv.DictReader(io.StringIO(out))}


def test_power_rows_and_flags(fixture_dir):
    par = _power(fixture_dir)
    assert float(par["B1"]["power_w"]) == pytest.approx(125.8e-6, rel=1e-3)
    assert float(par["B1"]["latency_s"]) == pytest.approx(5.24e-3, rel=1e-3)
    ser = _power(fixture_dir, "--implementation", "serial")
    assert float(ser["B1"]["power_w"]) == pytest.approx(471.9e-6, rel=1e-3)
    assert float(ser["B1"]["latency_s"]) == pytest.approx(26.2e-3, rel=1e-3)
    over = _power(fixture_dir, "--mem-overhead", "1.8", "--apply-overhead")
    fps = _power(fixture_dir, "--fps", "60")
    clk = _power(fixture_dir, "--clock-hz", "2e8")
    for lid in par:
        assert float(over[lid]["power_w"]) == pytest.approx(1.8 * float(par[lid]["power_w"]))
        assert over[lid]["latency_s"] == par[lid]["latency_s"]
        assert float(fps[lid]["power_w"]) == pytest.approx(2 * float(par[lid]["power_w"]))
        assert (fps[lid]["energy_j"], fps[lid]["latency_s"]) == (par[lid]["energy_j"], par[lid]["latency_s"])
        assert float(clk[lid]["latency_s"]) == pytest.approx(float(par[lid]["latency_s"]) / 2)
        assert (clk[lid]["energy_j"], clk[lid]["power_w"]) == (par[lid]["energy_j"], par[lid]["power_w"])
    rc, _, err = run("power", fixture_dir / "ae1.arch", "--split", "B99")
    assert rc == 2 and "B99" in err
    rc, _, _ = run("power", fixture_dir / "ae1.arch", "--fps", "-3")
    assert rc == 2


def test_power_baselines(fixture_dir, tmp_path):
    reg = tmp_path / "base.json"
    reg.write_text(json.dumps([{"name": "gpu", "energy_per_mac_pj": 1200, "source_note": "example"}]))
    rc, out, _ = run("power", fixture_dir / "ae1.arch", "--energy-basis", "analytic", "--baselines", reg,
                     "--format", "structured")
    assert rc == 0
    assert json.loads(out)["baselines"][0]["ratio"] == pytest.approx(1000, abs=1e-9)


def test_comm_and_protocols(fixture_dir, tmp_path):
    rc, out, _ = run("comm", fixture_dir / "ae1.arch", "--protocol", "Zigbee", "--split", "B5")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["layer_id"] == "B5" and int(rows[0]["bits"]) == 256 * 16
    rc, out, _ = run("protocols", "--format", "structured")
    assert rc == 0
    reg = tmp_path / "reg.json"
    reg.write_text(out)
    rc, out2, _ = run("comm", fixture_dir / "ae1.arch", "--protocol", "LoRa", "--protocols-file", reg)
    assert rc == 0 and len(out2.splitlines()) == 10


def test_simulate(fixture_dir, tmp_path):
    base = ["simulate", fixture_dir / "ae2.arch", "--weights", fixture_dir / "ae2.dnnw",
            "--input", fixture_dir / "ae2_input.dnnt"]
    rc, out, _ = run(*base, "--precision", "fp32")
    assert rc == 0 and json.loads(out)["quality"]["ssim"] == 1.0
    metrics, tensor = tmp_path / "m.json", tmp_path / "o.dnnt"
    rc, out, _ = run(*base, "--precision", "w10_f8", "--metrics", metrics, "--output-tensor", tensor)
    assert rc == 0
    m = json.loads(metrics.read_text())
    assert set(m) == {"ssim", "psnr", "max_abs_err", "mean_abs_err"}
    assert all(v is not None for v in m.values())
    assert tensor.read_bytes()[:4] == b"DNNT"


def test_simulate_data_file_errors(fixture_dir, tmp_path):
    truncated = tmp_path / "t.dnnt"
    truncated.write_bytes((fixture_dir / "ae2_input.dnnt").read_bytes()[:500])
    rc, _, err = run("simulate", fixture_dir / "ae2.arch", "--weights", fixture_dir / "ae2.dnnw",
                     "--input", truncated)
    assert rc == 3 and "at byte 500" in err
    bad = tmp_path / "w.dnnw"
    bad.write_bytes(b"NOPE" + (fixture_dir / "ae2.dnnw").read_bytes()[4:])
    rc, _, err = run("simulate", fixture_dir / "ae2.arch", "--weights", bad,
                     "--input", fixture_dir / "ae2_input.dnnt")
    assert rc == 3 and "at byte 0" in err
    rc, _, err = run("simulate", fixture_dir / "ae2.arch", "--weights", fixture_dir / "ae1.dnnw",
                     "--input", fixture_dir / "ae2_input.dnnt")
    assert rc == 2


def test_internal_errors_map_to_4(monkeypatch, fixture_dir, capsys):
    import nodesplit.cli as cli

    def boom(args):
        raise RuntimeError("inconsistent")
    monkeypatch.setitem(cli.COMMANDS, "analyze", boom)
    assert main(["analyze", str(fixture_dir / "ae1.arch")]) == 4
    assert "internal" in capsys.readouterr().err


def test_in_process_output_file(fixture_dir, tmp_path):
    out = tmp_path / "a.csv"
    assert main(["analyze", str(fixture_dir / "ae2.arch"), "-o", str(out)]) == 0
    assert "SPLIT" in out.read_text()
