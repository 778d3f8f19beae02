"""Monte Carlo BER engine.

Trials are processed in fixed-size blocks.  Block ``b`` draws its bits, noise
and (for random channel kinds) channels from Philox generators keyed by
``(seed, b, substream)``; the SNR point is not part of the key, so every SNR
point and every detector sees the same underlying draws (common random
numbers).  Noise is drawn at unit variance and scaled per SNR point.

A point stops at the first block after which every (detector, stream) cell
has reached ``min_errors`` bit errors, or when ``max_trials`` is reached.  Because block
contents do not depend on which worker ran them and blocks are accumulated
in index order, results are identical at any worker count.
"""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (ArrayGeometry, ChannelParams, MultipathParams, gaussian_channel,
                      los_channel, multipath_channel, normalize_unit_gain)
from .constellation import build_qam
from .detectors import ChannelFactors, DetectorKind, StreamPlan, detect_superposed
from .errors import InvalidArgument, UnknownMode
from .noma import noma_detect_pair

MODES = ("transmit-normalized", "physical")
CSV_FIELDS = ("detector", "stream", "snr_db", "sigma2_w", "trials", "bit_errors", "ber", "ci95")
_SUB_BITS, _SUB_NOISE, _SUB_CHANNEL = 0, 1, 2


def snr_to_sigma2(snr_db, total_power: float, mode: str = "transmit-normalized"):
    """Noise variance for a given SNR: ``sum(p) / 10**(snr/10)``.

    The formula is the same in both modes; they differ in whether the channel
    is normalized to unit mean gain (see :class:`ChannelSpec`).
    """
    if mode not in MODES:
        raise UnknownMode(f"unknown SNR mode {mode!r}; choose from {MODES}")
    return total_power / 10.0 ** (np.asarray(snr_db, dtype=float) / 10.0)


def sigma2_to_snr(sigma2, total_power: float, mode: str = "transmit-normalized"):
    if mode not in MODES:
        raise UnknownMode(f"unknown SNR mode {mode!r}; choose from {MODES}")
    return 10.0 * np.log10(total_power / np.asarray(sigma2, dtype=float))


def binomial_ci(errors: int, bits: int) -> float:
    """95% normal-approximation half-width; zero when no errors were seen."""
    if bits < 1:
        raise ValueError("need at least one bit")
    p = errors / bits
    return 1.96 * math.sqrt(p * (1.0 - p) / bits)


@dataclass(frozen=True)
class ChannelSpec:
    """Channel model of a sweep.

    ``gaussian`` and ``multipath`` are redrawn every trial; ``los``, ``fixed``
    and ``diagonal`` are generated once.  With ``normalize`` (the
    transmit-normalized SNR mode) deterministic channels are scaled to unit
    mean gain and multipath draws are scaled by the LoS reference gain.
    """

    kind: str = "gaussian"
    M: int = 4
    N: int = 4
    geometry: ArrayGeometry | None = None
    params: ChannelParams | None = None
    multipath: MultipathParams | None = None
    tuned: bool = False
    tuning_z: int = 1
    matrix: np.ndarray | None = field(default=None, compare=False)
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in ("gaussian", "los", "multipath", "fixed", "diagonal"):
            raise InvalidArgument(f"unknown channel kind {self.kind!r}")
        if self.kind in ("los", "multipath") and self.geometry is None:
            raise InvalidArgument(f"{self.kind} channels need a geometry")
        if self.kind == "multipath" and self.multipath is None:
            raise InvalidArgument("multipath channels need multipath parameters")
        if self.kind in ("fixed", "diagonal") and self.matrix is None:
            raise InvalidArgument(f"{self.kind} channels need a matrix")

    @property
    def random(self) -> bool:
        return self.kind in ("gaussian", "multipath")

    def effective_geometry(self) -> ArrayGeometry | None:
        if self.geometry is None:
            return None
        return self.geometry.tuned(self.tuning_z) if self.tuned else self.geometry

    @property
    def shape(self) -> tuple[int, int]:
        if self.kind in ("los", "multipath"):
            g = self.geometry
            return g.M, g.N
        if self.kind in ("fixed", "diagonal"):
            m = np.asarray(self.matrix)
            return (m.size, m.size) if self.kind == "diagonal" else m.shape
        return self.M, self.N

    def fixed_matrix(self) -> np.ndarray:
        if self.kind == "diagonal":
            H = np.diag(np.asarray(self.matrix, dtype=complex))
        elif self.kind == "fixed":
            H = np.asarray(self.matrix, dtype=complex)
        elif self.kind == "los":
            H = los_channel(self.effective_geometry(), self.params).H
        else:
            raise InvalidArgument(f"{self.kind} channels are random")
        return normalize_unit_gain(H) if self.normalize and self.kind == "los" else H

    def draw(self, rng, trials: int) -> np.ndarray:
        if self.kind == "gaussian":
            return gaussian_channel(self.M, self.N, rng, size=trials)
        g = self.effective_geometry()
        Hs = np.stack([multipath_channel(g, self.params, self.multipath, rng).H
                       for _ in range(trials)])
        if self.normalize:
            ref = los_channel(g, self.params).H
            Hs = Hs / np.sqrt(np.mean(np.abs(ref) ** 2))
        return Hs


@dataclass(frozen=True)
class NomaPair:
    """One JDCP pair: per-user channels (already including ``sigma_H``) and powers."""

    H1: np.ndarray = field(compare=False)
    H2: np.ndarray = field(compare=False)
    p1: float
    p2: float
    order: int = 16

    @property
    def total_power(self) -> float:
        return self.p1 + self.p2


@dataclass(frozen=True)
class SimConfig:
    channel: ChannelSpec
    plan: StreamPlan | None
    detectors: tuple
    snr_db: tuple
    max_trials: int = 1_000_000
    min_errors: int = 200
    seed: int = 0
    block_size: int = 1000
    mode: str = "transmit-normalized"
    noma: NomaPair | None = None

    def __post_init__(self):
        snr = np.asarray(self.snr_db, dtype=float)
        if snr.size == 0 or not np.all(np.isfinite(snr)) or np.any(np.diff(snr) < 0):
            raise InvalidArgument("SNR grid must be non-empty, finite and sorted")
        if self.max_trials < 1 or self.min_errors < 0 or self.block_size < 1:
            raise InvalidArgument("max_trials and block_size must be >= 1, min_errors >= 0")
        if self.mode not in MODES:
            raise UnknownMode(f"unknown SNR mode {self.mode!r}")
        if self.plan is None and self.noma is None:
            raise InvalidArgument("a stream plan or a NOMA pair is required")
        object.__setattr__(self, "detectors",
                           tuple(DetectorKind.parse(d) for d in self.detectors))
        object.__setattr__(self, "snr_db", tuple(float(s) for s in snr))

    @property
    def total_power(self) -> float:
        return self.noma.total_power if self.noma else self.plan.total_power

    @property
    def stream_bits(self) -> list[int]:
        if self.noma:
            b = int(math.log2(self.noma.order)) * self.noma.H1.shape[-1]
            return [b, b]
        return [s.size * s.constellation.bits_per_symbol for s in self.plan.streams]

    def sigma2(self) -> np.ndarray:
        return snr_to_sigma2(self.snr_db, self.total_power, self.mode)


@dataclass(frozen=True)
class BerRecord:
    detector: str
    stream: int
    snr_db: float
    sigma2_w: float
    trials: int
    bit_errors: int
    ber: float
    ci95: float

    def row(self) -> list[str]:
        return [self.detector, str(self.stream), f"{self.snr_db:.9g}", f"{self.sigma2_w:.9g}",
                str(self.trials), str(self.bit_errors), f"{self.ber:.9g}", f"{self.ci95:.9g}"]


def make_record(detector, stream, snr_db, sigma2, trials, errors, bits_per_trial) -> BerRecord:
    bits = trials * bits_per_trial
    ber = errors / bits if bits else 0.0
    ci = binomial_ci(errors, bits) if bits else 0.0
    return BerRecord(str(detector), int(stream), float(snr_db), float(sigma2), int(trials),
                     int(errors), ber, ci)


# --------------------------------------------------------------------------
# block simulation

def _rng(seed: int, block: int, sub: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block), int(sub)))
    return np.random.Generator(np.random.Philox(ss))


def _cnormal(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


class _Context:
    """Per-process state: config plus factors of a fixed channel."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.factors = None
        self.noma_factors = None
        if cfg.noma is not None:
            self.noma_factors = (ChannelFactors(cfg.noma.H1), ChannelFactors(cfg.noma.H2))
        elif not cfg.channel.random:
            self.factors = ChannelFactors(cfg.channel.fixed_matrix())


def block_trial_errors(ctx: _Context, snr_index: int, block: int) -> np.ndarray:
    """Bit errors per (detector, trial, stream) for one block at one SNR point."""
    cfg = ctx.cfg
    B = cfg.block_size
    sigma = math.sqrt(float(cfg.sigma2()[snr_index]))
    rb = _rng(cfg.seed, block, _SUB_BITS)
    rn = _rng(cfg.seed, block, _SUB_NOISE)
    if cfg.noma is not None:
        return _noma_block(ctx, rb, rn, sigma, B)

    plan = cfg.plan
    if cfg.channel.random:
        factors = ChannelFactors(cfg.channel.draw(_rng(cfg.seed, block, _SUB_CHANNEL), B))
    else:
        factors = ctx.factors
    H = factors.H
    M = H.shape[-2]
    x_full = np.zeros((B, plan.N), dtype=complex)
    tx_bits = []
    for s in plan.streams:
        c = s.constellation
        bits = rb.integers(0, 2, (B, s.size * c.bits_per_symbol))
        x = c.modulate(bits)
        x_full[:, list(plan.stream_indices(s))] += x
        tx_bits.append(bits)
    y = np.einsum("...ij,...j->...i", H, x_full) + sigma * _cnormal(rn, (B, M))
    out = np.zeros((len(cfg.detectors), B, len(plan.streams)), dtype=np.int64)
    for k, kind in enumerate(cfg.detectors):
        res = detect_superposed(y, plan, kind, factors)
        for i, bits in enumerate(tx_bits):
            out[k, :, i] = np.sum(res.bits[i] != bits, axis=-1)
    return out


def _noma_block(ctx: _Context, rb, rn, sigma, B):
    cfg = ctx.cfg
    pair = cfg.noma
    f1, f2 = ctx.noma_factors
    N = pair.H1.shape[-1]
    c1, c2 = build_qam(pair.order, pair.p1), build_qam(pair.order, pair.p2)
    k = c1.bits_per_symbol
    b1 = rb.integers(0, 2, (B, N * k))
    b2 = rb.integers(0, 2, (B, N * k))
    s = c1.modulate(b1) + c2.modulate(b2)
    y1 = s @ pair.H1.T + sigma * _cnormal(rn, (B, pair.H1.shape[0]))
    y2 = s @ pair.H2.T + sigma * _cnormal(rn, (B, pair.H2.shape[0]))
    out = np.zeros((len(cfg.detectors), B, 2), dtype=np.int64)
    for j, kind in enumerate(cfg.detectors):
        u1, u2 = noma_detect_pair(y1, y2, f1, f2, (pair.p1, pair.p2), kind, pair.order)
        out[j, :, 0] = np.sum(u1 != b1, axis=-1)
        out[j, :, 1] = np.sum(u2 != b2, axis=-1)
    return out


_WORKER_CTX: _Context | None = None


def _init_worker(cfg):
    global _WORKER_CTX
    _WORKER_CTX = _Context(cfg)


def _worker_block(args):
    snr_index, block = args
    return block_trial_errors(_WORKER_CTX, snr_index, block).sum(axis=1)


def run_ber_sweep(cfg: SimConfig, workers: int = 1) -> list[BerRecord]:
    """BER per (detector, stream, SNR point), deterministic for a given seed.

    Records are ordered by detector, then stream, then SNR.
    """
    n_blocks = max(1, math.ceil(cfg.max_trials / cfg.block_size))
    ctx = _Context(cfg)  # validates (and decomposes) fixed channels up front
    sig2 = cfg.sigma2()
    totals = {}
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(cfg,))
    try:
        for si in range(len(cfg.snr_db)):
            acc = np.zeros((len(cfg.detectors), len(cfg.stream_bits)), dtype=np.int64)
            done = 0
            b = 0
            while b < n_blocks:
                wave = list(range(b, min(b + max(workers, 1), n_blocks)))
                if pool is None:
                    results = [block_trial_errors(ctx, si, w).sum(axis=1) for w in wave]
                else:
                    results = list(pool.map(_worker_block, [(si, w) for w in wave]))
                stop = False
                for r in results:
                    acc += r
                    done += 1
                    if np.all(acc >= cfg.min_errors):
                        stop = True
                        break
                if stop:
                    break
                b += len(wave)
            totals[si] = (acc, done * cfg.block_size)
    finally:
        if pool is not None:
            pool.shutdown()
    records = []
    for k, kind in enumerate(cfg.detectors):
        for i, nbits in enumerate(cfg.stream_bits):
            for si, snr in enumerate(cfg.snr_db):
                acc, trials = totals[si]
                records.append(make_record(kind.value, i + 1, snr, sig2[si], trials,
                                           acc[k, i], nbits))
    return records


def paired_trial_errors(cfg: SimConfig, snr_index: int, n_blocks: int) -> np.ndarray:
    """Per-trial total bit errors, shape ``(detectors, trials)``, for paired tests."""
    ctx = _Context(cfg)
    parts = [block_trial_errors(ctx, snr_index, b).sum(axis=2) for b in range(n_blocks)]
    return np.concatenate(parts, axis=1)


# --------------------------------------------------------------------------
# output

def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow(r.row())
    return buf.getvalue()


def write_atomic(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(records, path) -> None:
    write_atomic(path, records_to_csv(records))


def read_csv(path) -> list[BerRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_FIELDS:
        raise ValueError(f"expected header {','.join(CSV_FIELDS)}")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_FIELDS):
            raise ValueError(f"line {n}: expected {len(CSV_FIELDS)} fields")
        try:
            out.append(BerRecord(row[0], int(row[1]), float(row[2]), float(row[3]),
                                 int(row[4]), int(row[5]), float(row[6]), float(row[7])))
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
    return out


def with_overrides(cfg: SimConfig, **kw) -> SimConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


# --------------------------------------------------------------------------
# theory curves

THEORY_KINDS = (DetectorKind.NC, DetectorKind.PNC, DetectorKind.CD, DetectorKind.PCD)


def _stream_diag(factors: ChannelFactors, idx, punctured: bool) -> np.ndarray:
    sel = list(idx)
    if punctured:
        d = np.diagonal(factors.wr().Rp, axis1=-2, axis2=-1)
    else:
        d = np.diagonal(factors.qr().R, axis1=-2, axis2=-1)
    return np.real(d[..., sel])


def theory_records(cfg: SimConfig, draws: int = 200) -> list[BerRecord]:
    """Closed-form BER per (detector, stream, SNR) in the simulation schema.

    Gaussian channels use the Rayleigh-averaged forms; deterministic channels
    the conditional forms on the realized diagonals; multipath channels the
    conditional forms averaged over ``draws`` channel realizations.  Streams
    are processed strongest first so that each weaker stream sees the
    residual SIC error of the one cancelled before it.  Only NC, PNC, CD and
    PCD have closed forms; other kinds are skipped.  ``trials`` is 0.
    """
    from .analysis import BerSpec, avg_ber_rayleigh, conditional_ber

    if cfg.plan is None:
        raise InvalidArgument("theory curves need a stream plan")
    plan = cfg.plan
    M, N = cfg.channel.shape
    kinds = [k for k in cfg.detectors if k in THEORY_KINDS]
    sig2 = cfg.sigma2()
    factors = None
    if cfg.channel.kind == "multipath":
        factors = ChannelFactors(cfg.channel.draw(_rng(cfg.seed, 0, _SUB_CHANNEL), draws))
    elif not cfg.channel.random:
        factors = ChannelFactors(cfg.channel.fixed_matrix())
    records = []
    for kind in kinds:
        per_stream = {}
        for si, s2 in enumerate(sig2):
            ber_next, p_next, order_next = 0.0, 0.0, 2
            for i in range(len(plan.streams) - 1, -1, -1):
                st = plan.streams[i]
                c = st.constellation
                base = BerSpec(kind=kind.value, layers=st.size, order=c.order, power=c.power,
                               sigma2=float(s2),
                               power_prev=sum(x.constellation.power for x in plan.streams[:i]),
                               power_next=p_next, order_next=order_next, ber_next=ber_next,
                               M=M, N=N)
                if factors is None:
                    ber = avg_ber_rayleigh(kind.value, base).clamped
                else:
                    diag = _stream_diag(factors, plan.stream_indices(st), kind.punctured)
                    rows = diag.reshape(-1, st.size)
                    vals = [np.mean(conditional_ber(kind.value, replace(base, r_diag=tuple(r))))
                            for r in rows]
                    ber = float(min(max(np.mean(vals), 0.0), 0.5))
                per_stream.setdefault(i, []).append(ber)
                ber_next, p_next, order_next = ber, c.power, c.order
        for i in range(len(plan.streams)):
            for si, snr in enumerate(cfg.snr_db):
                records.append(BerRecord(kind.value, i + 1, snr, float(sig2[si]), 0, 0,
                                         float(per_stream[i][si]), 0.0))
    return records
