"""INI scenario files.

Sections: ``[geometry]``, ``[channel]``, ``[streams]``, ``[noma]``, ``[sweep]``.
A file either describes a single-user superposition plan (``[streams]``) or a
two-user NOMA scenario (``[noma]``).  Lists are comma separated.  See the
bundled profiles in ``thznoma/profiles`` for complete examples.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .channel import (ArrayGeometry, ChannelParams, MultipathParams, absorption_at,
                      load_absorption_table)
from .constellation import build_qam
from .detectors import DetectorKind, Stream, StreamPlan
from .errors import ConfigError, ThzNomaError
from .harness import MODES, ChannelSpec, SimConfig
from .noma import NomaScenario, dbm_to_watts

SECTIONS = ("geometry", "channel", "streams", "noma", "sweep")
PROFILES = ("fig3a", "fig4a", "fig6b", "fig6c", "fig6d", "fig7a", "fig7b", "fig7c", "fig7d",
            "table1")


@dataclass
class Scenario:
    """A parsed scenario file."""

    name: str
    text: str
    sections: dict
    sim: SimConfig | None = None
    noma: NomaScenario | None = None
    noma_options: dict = field(default_factory=dict)
    geometry: ArrayGeometry | None = None
    channel: ChannelSpec | None = None
    sweep: dict = field(default_factory=dict)


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, text: str):
        self.cp = cp
        self.lines = text.splitlines()

    def line_of(self, section: str, key: str | None = None) -> int | None:
        current = None
        for n, raw in enumerate(self.lines, start=1):
            s = raw.strip()
            m = re.match(r"\[([^\]]+)\]", s)
            if m:
                current = m.group(1).strip().lower()
                if key is None and current == section:
                    return n
                continue
            if current == section and key is not None:
                k = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
                if k == key:
                    return n
        return None

    def error(self, section, key, msg):
        name = f"{section}.{key}" if key else section
        return ConfigError(f"{name}: {msg}", field=name, line=self.line_of(section, key))

    def has(self, section, key=None):
        if not self.cp.has_section(section):
            return False
        return key is None or self.cp.has_option(section, key)

    def raw(self, section, key, default=None, required=False):
        if not self.has(section, key):
            if required:
                if not self.has(section):
                    raise ConfigError(f"missing section [{section}] (needed for {section}.{key})",
                                      field=f"{section}.{key}")
                raise self.error(section, key, "required field is missing")
            return default
        return self.cp.get(section, key).strip()

    def _conv(self, section, key, conv, what, default, required):
        v = self.raw(section, key, None, required)
        if v is None:
            return default
        try:
            return conv(v)
        except (ValueError, TypeError):
            raise self.error(section, key, f"expected {what}, got {v!r}") from None

    def float(self, section, key, default=None, required=False):
        return self._conv(section, key, float, "a number", default, required)

    def int(self, section, key, default=None, required=False):
        return self._conv(section, key, int, "an integer", default, required)

    def bool(self, section, key, default=False):
        v = self.raw(section, key)
        if v is None:
            return default
        low = v.lower()
        if low in ("1", "yes", "true", "on"):
            return True
        if low in ("0", "no", "false", "off"):
            return False
        raise self.error(section, key, f"expected a boolean, got {v!r}")

    def floats(self, section, key, default=None, required=False):
        return self._conv(section, key, lambda s: [float(x) for x in s.split(",") if x.strip()],
                          "a comma-separated list of numbers", default, required)

    def ints(self, section, key, default=None, required=False):
        return self._conv(section, key, lambda s: [int(x) for x in s.split(",") if x.strip()],
                          "a comma-separated list of integers", default, required)


def profile_text(name: str) -> str:
    return resources.files("thznoma").joinpath("profiles", f"{name}.ini").read_text()


def resolve(path_or_name: str) -> tuple[str, str]:
    """Return ``(name, text)`` for a file path or a bundled profile name."""
    p = Path(path_or_name)
    if p.is_file():
        return p.stem, p.read_text()
    if path_or_name in PROFILES:
        return path_or_name, profile_text(path_or_name)
    raise ConfigError(f"no such config file or bundled profile: {path_or_name}", field="config")


def _geometry(r: _Reader) -> ArrayGeometry | None:
    if not r.has("geometry"):
        return None
    kw = {}
    for k in ("Mt", "Nt", "Mr", "Nr", "Q"):
        v = r.int("geometry", k.lower())
        if v is not None:
            kw[k] = v
    for k in ("delta", "Delta", "f", "D"):
        # configparser lower-cases keys; capital Delta is spelled "pitch"
        key = "pitch" if k == "Delta" else k.lower()
        v = r.float("geometry", key)
        if v is not None:
            kw[k] = v
    try:
        return ArrayGeometry(**kw)
    except ThzNomaError as exc:
        raise ConfigError(f"geometry: {exc}", field="geometry", line=r.line_of("geometry")) from None


def _params(r: _Reader, base_dir: Path | None) -> ChannelParams:
    k_abs = r.float("channel", "k_abs", 0.0)
    table = r.raw("channel", "absorption_table")
    if table:
        path = Path(table)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        try:
            f = r.float("geometry", "f", required=True)
            k_abs = absorption_at(load_absorption_table(path), f)
        except OSError as exc:
            raise r.error("channel", "absorption_table", str(exc)) from None
    deg = lambda k: math.radians(r.float("channel", k, 0.0))
    try:
        return ChannelParams(K_abs=k_abs, G_t=r.float("channel", "g_t", 1.0),
                             G_r=r.float("channel", "g_r", 1.0), phi_t=deg("phi_t_deg"),
                             theta_t=deg("theta_t_deg"), phi_r=deg("phi_r_deg"),
                             theta_r=deg("theta_r_deg"))
    except ThzNomaError as exc:
        raise ConfigError(f"channel: {exc}", field="channel", line=r.line_of("channel")) from None


def _multipath(r: _Reader) -> MultipathParams:
    kw = {}
    for key, conv in (("n_clusters", r.int), ("mean_rays", r.float), ("cluster_decay", r.float),
                      ("ray_decay", r.float), ("cluster_rate", r.float), ("ray_rate", r.float),
                      ("mix_weight", r.float)):
        v = conv("channel", key)
        if v is not None:
            kw[key] = v
    for key in ("spread1", "spread2"):
        v = r.float("channel", key + "_deg")
        if v is not None:
            kw[key] = math.radians(v)
    try:
        return MultipathParams(**kw)
    except ThzNomaError as exc:
        raise ConfigError(f"channel: {exc}", field="channel", line=r.line_of("channel")) from None


def _snr_grid(r: _Reader) -> tuple[float, ...]:
    lo = r.float("sweep", "snr_min", required=True)
    hi = r.float("sweep", "snr_max", required=True)
    step = r.float("sweep", "snr_step", required=True)
    if not step > 0 or hi < lo:
        raise r.error("sweep", "snr_step", "need snr_step > 0 and snr_max >= snr_min")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return tuple(float(round(lo + k * step, 10)) for k in range(n))


def _plan(r: _Reader, N: int) -> StreamPlan:
    sizes = r.ints("streams", "sizes", required=True)
    powers = r.floats("streams", "powers", required=True)
    orders = r.ints("streams", "orders")
    if orders is None:
        orders = [r.int("streams", "order", required=True)] * len(sizes)
    if not (len(sizes) == len(powers) == len(orders)):
        raise r.error("streams", "powers", "sizes, powers and orders must have equal lengths")
    streams = []
    for i, (s, p, o) in enumerate(zip(sizes, powers, orders), start=1):
        idx = r.ints("streams", f"indices{i}")
        try:
            streams.append(Stream(s, build_qam(o, p), tuple(idx) if idx else None))
        except (ThzNomaError, ValueError) as exc:
            raise r.error("streams", "orders" if r.has("streams", "orders") else "order",
                          str(exc)) from None
    try:
        return StreamPlan(N, tuple(streams))
    except ValueError as exc:
        raise r.error("streams", "sizes", str(exc)) from None


def _noma(r: _Reader) -> tuple[NomaScenario, dict]:
    kw = {}
    for key, attr in (("r_n", "R_N"), ("r_c", "R_C"), ("density_inner", "density_inner"),
                      ("density_outer", "density_outer"), ("pathloss_exp", "pathloss_exp"),
                      ("p_max", "P_max"), ("mu", "mu"), ("d_min", "d_min")):
        v = r.float("noma", key)
        if v is not None:
            kw[attr] = v
    v = r.float("noma", "rho_rx_dbm")
    if v is not None:
        kw["rho_rx"] = dbm_to_watts(v)
    v = r.int("noma", "n")
    if v is not None:
        kw["N"] = v
        kw.setdefault("P_max", 0.1 * v)
    v = r.float("noma", "sector_deg")
    if v is not None:
        kw["sector"] = math.radians(v)
    try:
        scen = NomaScenario(**kw)
    except ValueError as exc:
        raise ConfigError(f"noma: {exc}", field="noma", line=r.line_of("noma")) from None
    opts = {
        "order": r.int("noma", "order", 16),
        "tune_near": r.bool("noma", "tune_near"),
        "tune_far": r.bool("noma", "tune_far"),
        "pair": r.int("noma", "pair", 0),
        "redraws": r.int("noma", "redraws", 10),
    }
    return scen, opts


def parse(text: str, name: str = "config", base_dir: Path | None = None,
          overrides: dict | None = None) -> Scenario:
    """Parse scenario text; ``overrides`` maps ``"section.key"`` to string values."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}", line=getattr(exc, "lineno", None)) from None
    for sec in cp.sections():
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{sec}]", field=sec)
    for key, value in (overrides or {}).items():
        sec, opt = key.split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, opt, str(value))
    r = _Reader(cp, text)
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    sc = Scenario(name, text, sections)

    sc.geometry = _geometry(r)
    kind = r.raw("channel", "kind", required=True).lower()
    mode = r.raw("channel", "snr_mode", "transmit-normalized")
    if mode not in MODES:
        raise r.error("channel", "snr_mode", f"choose from {', '.join(MODES)}")

    det_raw = r.raw("sweep", "detectors", required=True)
    try:
        detectors = tuple(DetectorKind.parse(d) for d in det_raw.split(",") if d.strip())
    except ValueError as exc:
        raise r.error("sweep", "detectors", str(exc)) from None
    if not detectors:
        raise r.error("sweep", "detectors", "at least one detector is required")
    sweep = {
        "snr_db": _snr_grid(r),
        "max_trials": r.int("sweep", "max_trials", 1_000_000),
        "min_errors": r.int("sweep", "min_errors", 200),
        "seed": r.int("sweep", "seed", 0),
        "block_size": r.int("sweep", "block_size", 1000),
        "detectors": detectors,
        "mode": mode,
    }
    if sweep["max_trials"] < 1:
        raise r.error("sweep", "max_trials", "must be >= 1")
    if sweep["min_errors"] < 0:
        raise r.error("sweep", "min_errors", "must be >= 0")
    if sweep["block_size"] < 1:
        raise r.error("sweep", "block_size", "must be >= 1")
    sc.sweep = sweep

    try:
        params = _params(r, base_dir) if kind in ("los", "multipath") or r.has("channel", "k_abs") else None
        mp = _multipath(r) if kind == "multipath" else None
        matrix = None
        if kind == "diagonal":
            matrix = np.array(r.floats("channel", "diagonal", required=True))
        elif kind == "fixed":
            re_ = r.floats("channel", "matrix_real", required=True)
            im_ = r.floats("channel", "matrix_imag", [0.0] * len(re_))
            rows = r.int("channel", "rows", required=True)
            if len(re_) != len(im_) or len(re_) % rows:
                raise r.error("channel", "matrix_real", "matrix entries do not fit the row count")
            matrix = (np.array(re_) + 1j * np.array(im_)).reshape(rows, -1)
        if kind in ("los", "multipath") and sc.geometry is None:
            raise ConfigError(f"channel kind {kind} needs a [geometry] section", field="geometry")
        sc.channel = ChannelSpec(kind=kind, M=r.int("channel", "m", 4), N=r.int("channel", "n", 4),
                                 geometry=sc.geometry, params=params, multipath=mp,
                                 tuned=r.bool("channel", "tuned"),
                                 tuning_z=r.int("channel", "tuning_z", 1), matrix=matrix,
                                 normalize=(mode == "transmit-normalized"))
    except ConfigError:
        raise
    except ThzNomaError as exc:
        raise r.error("channel", "kind", str(exc)) from None

    if r.has("noma"):
        sc.noma, sc.noma_options = _noma(r)
        return sc
    M, N = sc.channel.shape
    plan = _plan(r, N)
    try:
        sc.sim = SimConfig(channel=sc.channel, plan=plan, **sweep)
    except ThzNomaError as exc:
        raise ConfigError(f"sweep: {exc}", field="sweep", line=r.line_of("sweep")) from None
    return sc


def load(path_or_name: str, overrides: dict | None = None) -> Scenario:
    name, text = resolve(path_or_name)
    p = Path(path_or_name)
    return parse(text, name, p.parent if p.is_file() else None, overrides)


def draw_plan(sc: Scenario, seed: int):
    """Drop users (redrawing on empty drops) and run JDCP; returns ``(drop, plan)``."""
    from .errors import EmptyDrop
    from .noma import drop_users, jdcp

    budget = max(1, sc.noma_options.get("redraws", 10))
    for attempt in range(budget):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed),
                                                                          spawn_key=(attempt,))))
        try:
            drop = drop_users(sc.noma, rng)
        except EmptyDrop:
            continue
        return drop, jdcp(drop.inner_d, drop.outer_d, sc.noma)
    raise EmptyDrop(f"every one of {budget} drops was empty")


def noma_sim(sc: Scenario, seed: int | None = None) -> tuple[SimConfig, object]:
    """SimConfig for the configured JDCP pair of a NOMA scenario.

    Each user's channel is the unit-gain LoS matrix at its distance (spatially
    tuned when requested) scaled by the large-scale coefficient ``d**(-alpha/2)``.
    """
    from .errors import InvalidArgument
    from .harness import NomaPair
    from .noma import build_noma_links

    seed = sc.sweep["seed"] if seed is None else seed
    if sc.geometry is None:
        raise ConfigError("NOMA scenarios need a [geometry] section", field="geometry")
    _, plan = draw_plan(sc, seed)
    k = sc.noma_options["pair"]
    if not 0 <= k < len(plan.pairs):
        raise InvalidArgument(f"pair {k} requested but the drop produced {len(plan.pairs)} pairs")
    opts = sc.noma_options
    links = build_noma_links(plan, sc.noma, sc.geometry, sc.channel.params,
                             tune_near=opts["tune_near"], tune_far=opts["tune_far"])
    link = links[k]
    from .channel import normalize_unit_gain

    H1 = link.sigma_h1 * normalize_unit_gain(link.H1.H)
    H2 = link.sigma_h2 * normalize_unit_gain(link.H2.H)
    pair = NomaPair(H1, H2, link.p1, link.p2, opts["order"])
    sweep = dict(sc.sweep)
    sweep["seed"] = seed
    return SimConfig(channel=sc.channel, plan=None, noma=pair, **sweep), plan
