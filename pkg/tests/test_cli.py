import csv
import json
import re
import subprocess
import sys

import pytest

from thznoma.cli import main
from thznoma.harness import CSV_FIELDS, read_csv

TINY = ["--snr-min", "0", "--snr-max", "10", "--snr-step", "10", "--max-trials", "200",
        "--block-size", "100"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_writes_csv_and_manifest(tmp_path, capsys):
    code, out, _ = run(["simulate", "--config", "fig3a", "--out", str(tmp_path), "--seed", "7",
                        "--detectors", "NC,SSD"] + TINY, capsys)
    assert code == 0
    recs = read_csv(tmp_path / "fig3a_sim.csv")
    assert {(r.detector, r.stream) for r in recs} == {(d, s) for d in ("NC", "SSD") for s in (1, 2)}
    assert len(recs) == 8
    man = json.loads((tmp_path / "fig3a_sim.manifest.json").read_text())
    assert man["seed"] == 7 and man["source"] == "simulation"
    assert man["overrides"]["sweep.detectors"] == "NC,SSD"
    assert "[streams]" in man["config_text"] and man["version"]


def test_simulate_seed_reproducible(tmp_path, capsys):
    for sub in ("a", "b"):
        assert run(["simulate", "--config", "fig3a", "--out", str(tmp_path / sub), "--seed", "7",
                    "--detectors", "PNC"] + TINY, capsys)[0] == 0
    assert (tmp_path / "a/fig3a_sim.csv").read_bytes() == (tmp_path / "b/fig3a_sim.csv").read_bytes()


def test_missing_field_exit_2(tmp_path, capsys):
    cfg = tmp_path / "broken.ini"
    cfg.write_text("[channel]\nkind = gaussian\n[streams]\nsizes = 2\npowers = 1\norder = 2\n"
                   "[sweep]\nsnr_min = 0\nsnr_max = 1\nsnr_step = 1\n")
    code, _, err = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 2 and "sweep.detectors" in err


def test_missing_file_exit_2(tmp_path, capsys):
    assert run(["theory", "--config", str(tmp_path / "nope.ini")], capsys)[0] == 2


def test_rank_deficient_exit_3(tmp_path, capsys):
    cfg = tmp_path / "singular.ini"
    cfg.write_text("[channel]\nkind = fixed\nrows = 2\nmatrix_real = 1, 1, 1, 1\n"
                   "[streams]\nsizes = 2\npowers = 1\norder = 2\n"
                   "[sweep]\ndetectors = NC\nsnr_min = 0\nsnr_max = 1\nsnr_step = 1\n")
    code, _, err = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 3 and "rank" in err


def test_theory_fig4a(tmp_path, capsys):
    assert run(["theory", "--config", "fig4a", "--out", str(tmp_path)], capsys)[0] == 0
    path = tmp_path / "fig4a_theory.csv"
    assert path.read_text().splitlines()[0] == ",".join(CSV_FIELDS)
    recs = read_csv(path)
    assert len(recs) == 4 * 3 * 17
    assert json.loads((tmp_path / "fig4a_theory.manifest.json").read_text())["source"] == "theory"


def test_channel_info(tmp_path, capsys):
    code, out, _ = run(["channel-info", "--config", "fig6c", "--out", str(tmp_path)], capsys)
    assert code == 0
    vals = dict(re.findall(r"^(\w+) = (.+)$", out, re.M))
    assert float(vals["delta_opt_z1_m"]) == pytest.approx(9.68e-3, abs=5e-6)
    assert float(vals["condition_number"]) < 1.5
    assert "delta_opt_z5_m" in vals and "rayleigh_distance_m" in vals
    assert "  tuned = yes" in out and "  f = 1e12" in out
    assert (tmp_path / "fig6c_channel.txt").read_text() == out


def test_noma_plan(tmp_path, capsys):
    paths = []
    for sub in ("a", "b"):
        assert run(["noma-plan", "--config", "table1", "--out", str(tmp_path / sub)], capsys)[0] == 0
        paths.append(tmp_path / sub / "table1_pairs.csv")
    assert paths[0].read_bytes() == paths[1].read_bytes()
    rows = list(csv.DictReader(paths[0].open()))
    assert rows and list(rows[0]) == ["pair_id", "d1_m", "d2_m", "p1_W", "p2_W"]
    for r in rows:
        assert float(r["p1_W"]) + float(r["p2_W"]) <= 0.1


def test_noma_empty_drop_exit_4(tmp_path, capsys):
    cfg = tmp_path / "empty.ini"
    from thznoma.config import profile_text

    cfg.write_text(profile_text("table1").replace("density_inner = 0.1", "density_inner = 1e-12"))
    code, _, err = run(["noma-plan", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 4 and "empty" in err


def test_complexity(tmp_path, capsys):
    code, out, _ = run(["complexity", "--n", "4,16,32", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert "105/136 = 77.2%" in out and "465/528 = 88.1%" in out
    assert "eps1 = 6 RAD + 12 RML" in out
    rows = list(csv.reader((tmp_path / "complexity.csv").open()))
    assert rows[0] == ["N", "item", "RAD", "RML", "flops", "note"]
    assert ["4", "eps1", "6", "12", "18", ""] in rows
    assert run(["complexity", "--n", "x"], capsys)[0] == 2
    assert run(["complexity", "--n", "1"], capsys)[0] == 2


def _write(path, rows):
    path.write_text(",".join(CSV_FIELDS) + "\n" + "".join(r + "\n" for r in rows))


def test_plot(tmp_path, capsys):
    src = tmp_path / "two.csv"
    _write(src, ["NC,1,0,1,100,10,0.05,0.01", "NC,1,10,0.1,100,0,0,0",
                 "SSD,1,0,1,100,4,0.02,0.01", "SSD,1,10,0.1,100,1,0.005,0.01"])
    code, _, _ = run(["plot", str(src)], capsys)
    assert code == 0
    svg = (tmp_path / "two.svg").read_text()
    assert svg.count("<polyline") == 2
    assert "NC stream 1" in svg and "SSD stream 1" in svg
    assert 'fill="white" stroke=' in svg and "1e-09" in svg


def test_plot_errors(tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    _write(empty, [])
    assert run(["plot", str(empty)], capsys)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("x,y\n1,2\n")
    assert run(["plot", str(bad)], capsys)[0] == 2


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "thznoma.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
