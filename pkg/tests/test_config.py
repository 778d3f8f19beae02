import numpy as np
import pytest

from thznoma.config import PROFILES, draw_plan, load, noma_sim, parse
from thznoma.detectors import DetectorKind
from thznoma.errors import ConfigError, EmptyDrop, InvalidArgument

MINIMAL = """\
[channel]
kind = gaussian
m = 2
n = 2

[streams]
sizes = 2
powers = 1
order = 2

[sweep]
detectors = NC, pnc
snr_min = 0
snr_max = 10
snr_step = 2.5
"""


def test_minimal():
    sc = parse(MINIMAL)
    assert sc.sim.snr_db == (0.0, 2.5, 5.0, 7.5, 10.0)
    assert sc.sim.detectors == (DetectorKind.NC, DetectorKind.PNC)
    assert sc.sim.max_trials == 1_000_000 and sc.sim.min_errors == 200
    assert sc.sections["channel"]["kind"] == "gaussian"


@pytest.mark.parametrize("name", PROFILES)
def test_every_profile_parses(name):
    sc = load(name)
    assert sc.sweep["detectors"]
    assert (sc.sim is None) == (sc.noma is not None)


def test_profile_contents():
    assert load("fig3a").sim.plan.N == 4
    sizes = [s.size for s in load("fig6c").sim.plan.streams]
    assert sizes == [16, 8, 4]
    assert load("fig6c").channel.tuned and not load("fig6d").channel.tuned
    t1 = load("table1").noma
    assert t1.mean_pairs == pytest.approx(7.854, rel=1e-3) and t1.budget == pytest.approx(0.1)
    flags = {n: (load(n).noma_options["tune_near"], load(n).noma_options["tune_far"])
             for n in ("fig7a", "fig7b", "fig7c", "fig7d")}
    assert flags == {"fig7a": (True, True), "fig7b": (False, False),
                     "fig7c": (False, True), "fig7d": (True, False)}


def test_overrides():
    sc = parse(MINIMAL, overrides={"sweep.snr_max": 5, "sweep.detectors": "SSD",
                                   "sweep.seed": 9})
    assert sc.sim.snr_db == (0.0, 2.5, 5.0)
    assert sc.sim.detectors == (DetectorKind.SSD,) and sc.sim.seed == 9


def test_missing_field_named():
    text = MINIMAL.replace("snr_step = 2.5\n", "")
    with pytest.raises(ConfigError) as ei:
        parse(text)
    assert ei.value.field == "sweep.snr_step" and "snr_step" in str(ei.value)


def test_bad_value_has_line():
    text = MINIMAL.replace("m = 2", "m = two")
    with pytest.raises(ConfigError) as ei:
        parse(text)
    assert ei.value.field == "channel.m" and ei.value.line == 3


@pytest.mark.parametrize("bad, field", [
    ("[channel]\nkind = gaussian\n[bogus]\nx = 1\n", "bogus"),
    (MINIMAL.replace("NC, pnc", "NC, MMSE"), "sweep.detectors"),
    (MINIMAL.replace("powers = 1", "powers = 1, 2"), "streams.powers"),
    (MINIMAL.replace("order = 2", "order = 8"), "streams.order"),
    (MINIMAL.replace("snr_step = 2.5", "snr_step = -1"), "sweep.snr_step"),
    (MINIMAL.replace("kind = gaussian", "kind = los"), "geometry"),
])
def test_config_errors(bad, field):
    with pytest.raises(ConfigError) as ei:
        parse(bad)
    assert ei.value.field == field


def test_unknown_profile():
    with pytest.raises(ConfigError):
        load("fig99")


def test_fixed_matrix_and_indices():
    text = MINIMAL.replace("kind = gaussian\nm = 2\nn = 2",
                           "kind = fixed\nrows = 3\nmatrix_real = 1,0,0, 0,1,0, 0,0,1")
    text = text.replace("sizes = 2\npowers = 1", "sizes = 3, 2\npowers = 1, 10\nindices2 = 0, 2")
    sc = parse(text)
    assert sc.channel.shape == (3, 3)
    assert sc.sim.plan.stream_indices(sc.sim.plan.streams[1]) == (0, 2)


def test_absorption_table_relative(tmp_path):
    (tmp_path / "k.txt").write_text("0.1e12 0.0\n1e12 0.5\n")
    cfg = tmp_path / "c.ini"
    cfg.write_text(load("fig6c").text.replace("kind = los", "kind = los\nabsorption_table = k.txt"))
    sc = load(str(cfg))
    assert sc.channel.params.K_abs == pytest.approx(0.5)
    assert sc.name == "c"


def test_draw_plan_deterministic():
    sc = load("table1")
    _, a = draw_plan(sc, 5)
    _, b = draw_plan(sc, 5)
    assert a == b


def test_noma_sim_pair():
    sc = load("fig7a")
    cfg, plan = noma_sim(sc)
    d1 = plan.inner_d[plan.pairs[0][0]]
    assert np.mean(np.abs(cfg.noma.H1) ** 2) == pytest.approx(d1 ** -2.2)
    assert cfg.noma.order == 16 and cfg.plan is None
    with pytest.raises(InvalidArgument):
        noma_sim(parse(sc.text, overrides={"noma.pair": 99}))


def test_empty_drop_budget():
    sc = parse(load("table1").text, overrides={"noma.density_inner": "1e-12", "noma.redraws": 3})
    with pytest.raises(EmptyDrop):
        draw_plan(sc, 0)
