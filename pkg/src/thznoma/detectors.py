"""QRD- and WRD-based hard-output detectors with superposition-coding SIC.

Every detector works on stacks: the receive vector may carry leading batch
axes (trials), and the triangular factor may be a single matrix shared by the
whole batch (fixed channel) or a matching stack (one channel per trial).
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from .constellation import Constellation
from .errors import DimensionMismatch, SearchSpaceTooLarge
from .numerics import RANK_TOL, QrFactors, WrFactors, hermitian, qr_decompose, wr_decompose

ML_CAP = 2 ** 20
_ML_CHUNK = 4096
_ML_BUDGET = 1 << 22  # complex entries per candidate chunk


class DetectorKind(str, enum.Enum):
    ML = "ML"
    NC = "NC"
    PNC = "PNC"
    CD = "CD"
    PCD = "PCD"
    LORD = "LORD"
    SSD = "SSD"

    @classmethod
    def parse(cls, name) -> "DetectorKind":
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).strip().upper())
        except ValueError:
            raise ValueError(f"unknown detector {name!r}; choose from "
                             f"{', '.join(k.value for k in cls)}") from None

    @property
    def punctured(self) -> bool:
        return self in (DetectorKind.PNC, DetectorKind.PCD, DetectorKind.SSD)


@dataclass(frozen=True)
class Stream:
    size: int
    constellation: Constellation
    indices: tuple[int, ...] | None = None


@dataclass(frozen=True)
class StreamPlan:
    """Superposition layout.  ``streams[0]`` is the lowest-power, full-width stream."""

    N: int
    streams: tuple[Stream, ...]

    def __post_init__(self):
        if not self.streams:
            raise ValueError("plan needs at least one stream")
        if self.streams[0].size != self.N:
            raise ValueError("the first stream must span all N SAs")
        for a, b in zip(self.streams, self.streams[1:]):
            if b.size > a.size:
                raise ValueError("stream sizes must be non-increasing")
            if not b.constellation.power > a.constellation.power:
                raise ValueError("stream powers must be strictly increasing")
        for s in self.streams:
            idx = self.stream_indices(s)
            if len(idx) != s.size or len(set(idx)) != s.size:
                raise ValueError("stream index set does not match its size")
            if self.N - 1 not in idx or min(idx) < 0 or max(idx) >= self.N:
                raise ValueError("every stream must include the last SA")

    @classmethod
    def build(cls, N: int, sizes, constellations) -> "StreamPlan":
        return cls(N, tuple(Stream(s, c) for s, c in zip(sizes, constellations)))

    def stream_indices(self, stream: Stream) -> tuple[int, ...]:
        if stream.indices is None:
            return tuple(range(self.N - stream.size, self.N))
        return tuple(sorted(stream.indices))

    def is_contiguous(self, stream: Stream) -> bool:
        return self.stream_indices(stream) == tuple(range(self.N - stream.size, self.N))

    @property
    def total_power(self) -> float:
        return float(sum(s.constellation.power for s in self.streams))


@dataclass
class DetectionResult:
    symbols: list
    bits: list
    distances: list = field(default_factory=list)


def _apply_h(A, v):
    """``A^H v`` over trailing axes, broadcasting batch axes."""
    return np.einsum("...mi,...m->...i", np.conj(A), v)


def _matvec(A, x):
    return np.einsum("...ij,...j->...i", A, x)


def residual(y, A, x) -> np.ndarray:
    return np.sum(np.abs(y - _matvec(A, x)) ** 2, axis=-1)


# --------------------------------------------------------------------------
# channel factors shared by all streams, detectors and SNR points

class ChannelFactors:
    """Lazily computed QR/WR factors of one channel (or one stack of channels).

    Shifted factors for LORD/SSD are keyed by the stream's SA set and the
    shift ``t``: the SAs outside the set stay in front, and the set itself is
    rotated left by ``t`` so that its ``t``-th SA (1-based) sits in the root
    position.
    """

    def __init__(self, H, rank_tol: float = RANK_TOL):
        self.H = np.asarray(H, dtype=complex)
        self.rank_tol = rank_tol
        self._qr: dict = {}
        self._wr: dict = {}

    @property
    def N(self) -> int:
        return self.H.shape[-1]

    def permutation(self, idx: tuple[int, ...], t: int) -> list[int]:
        S = len(idx)
        rest = [v for v in range(self.N) if v not in idx]
        return rest + [idx[(t + j) % S] for j in range(S)]

    def qr(self, idx=None, t: int = 0) -> QrFactors:
        key = self._key(idx, t)
        if key not in self._qr:
            perm = self.permutation(*key)
            self._qr[key] = qr_decompose(self.H[..., perm], self.rank_tol)
        return self._qr[key]

    def wr(self, idx=None, t: int = 0) -> WrFactors:
        key = self._key(idx, t)
        if key not in self._wr:
            perm = self.permutation(*key)
            self._wr[key] = wr_decompose(self.H[..., perm], self.rank_tol, qr=self.qr(*key))
        return self._wr[key]

    def _key(self, idx, t):
        idx = tuple(range(self.N)) if idx is None else tuple(idx)
        t %= len(idx)
        if t == 0 and self.permutation(idx, 0) == list(range(self.N)):
            return tuple(range(self.N)), 0
        return idx, t


# --------------------------------------------------------------------------
# single-stream kernels on an effective S-layer model

def _out_shape(y, R, root):
    batch = np.broadcast_shapes(np.shape(y)[:-1], np.shape(R)[:-2], np.shape(root))
    return batch + (np.shape(y)[-1],)


def _back_substitute(y, R, const: Constellation, root=None):
    shape = _out_shape(y, R, root)
    S = shape[-1]
    x = np.zeros(shape, dtype=complex)
    for n in range(S - 1, -1, -1):
        if n == S - 1 and root is not None:
            x[..., n] = root
            continue
        acc = y[..., n] - np.sum(R[..., n, n + 1:] * x[..., n + 1:], axis=-1)
        x[..., n] = const.slice(acc / np.real(R[..., n, n]))
    return x


def _punctured_slice(y, Rp, const: Constellation, root=None):
    shape = _out_shape(y, Rp, root)
    S = shape[-1]
    x = np.zeros(shape, dtype=complex)
    if root is None:
        x[..., S - 1] = const.slice(y[..., S - 1] / np.real(Rp[..., S - 1, S - 1]))
    else:
        x[..., S - 1] = root
    if S > 1:
        diag = np.real(np.diagonal(Rp, axis1=-2, axis2=-1))[..., :S - 1]
        z = (y[..., :S - 1] - Rp[..., :S - 1, S - 1] * x[..., S - 1:S]) / diag
        x[..., :S - 1] = const.slice(z)
    return x


def detect_ml(y, A, const: Constellation, cap: int = ML_CAP):
    """Exhaustive search of ``argmin ||y - A x||^2`` over the full lattice."""
    y = np.asarray(y)
    A = np.asarray(A)
    S = A.shape[-1]
    count = const.order ** S
    if count > cap:
        raise SearchSpaceTooLarge(f"{count} candidates exceed the cap of {cap}")
    batch = np.broadcast_shapes(y.shape[:-1], A.shape[:-2])
    best = np.full(batch, np.inf)
    best_x = np.zeros(batch + (S,), dtype=complex)
    it = itertools.product(const.points, repeat=S)
    per_candidate = max(1, int(np.prod(batch, dtype=np.int64))) * A.shape[-2]
    step = int(min(_ML_CHUNK, max(1, _ML_BUDGET // per_candidate)))
    while True:
        chunk = np.array(list(itertools.islice(it, step)), dtype=complex)
        if chunk.size == 0:
            break
        Ac = A @ chunk.T  # (..., M, C)
        d = np.sum(np.abs(y[..., :, None] - Ac) ** 2, axis=-2)
        j = np.argmin(d, axis=-1)
        dj = np.take_along_axis(d, j[..., None], axis=-1)[..., 0]
        better = dj < best
        best = np.where(better, dj, best)
        best_x = np.where(better[..., None], chunk[j], best_x)
    return best_x, best


def detect_nc(ytil, R, const: Constellation):
    return _back_substitute(np.asarray(ytil), np.asarray(R), const)


def detect_pnc(ybar, Rp, const: Constellation):
    return _punctured_slice(np.asarray(ybar), np.asarray(Rp), const)


def _chase(y, R, const, kernel):
    y = np.asarray(y)
    R = np.asarray(R)
    roots = const.points
    cand = kernel(y[..., None, :], R[..., None, :, :], const, root=roots)
    d = residual(y[..., None, :], R[..., None, :, :], cand)
    j = np.argmin(d, axis=-1)
    x = np.take_along_axis(cand, j[..., None, None], axis=-2)[..., 0, :]
    return x, np.take_along_axis(d, j[..., None], axis=-1)[..., 0]


def detect_cd(ytil, R, const: Constellation):
    """Chase detection: one NC candidate per root symbol, keep the closest."""
    return _chase(ytil, R, const, _back_substitute)


def detect_pcd(ybar, Rp, const: Constellation):
    """Punctured chase: for each root symbol the upper layers are sliced
    independently, which is the exact inner minimum because the punctured
    block is diagonal."""
    return _chase(ybar, Rp, const, _punctured_slice)


def _layered(y, factors: ChannelFactors, idx, const, punctured: bool):
    S = len(idx)
    shape = np.broadcast_shapes(y.shape[:-1], factors.H.shape[:-2]) + (S,)
    x = np.zeros(shape, dtype=complex)
    for t in range(1, S + 1):
        if punctured:
            f = factors.wr(idx, t)
            yt = _apply_h(f.W, y)[..., -S:]
            xt, _ = detect_pcd(yt, f.Rp[..., -S:, -S:], const)
        else:
            f = factors.qr(idx, t)
            yt = _apply_h(f.Q, y)[..., -S:]
            xt, _ = detect_cd(yt, f.R[..., -S:, -S:], const)
        # shift t puts stream SA number t (1-based) in the root position
        x[..., t - 1] = xt[..., -1]
    return x


def detect_lord(y, H, const: Constellation, factors: ChannelFactors | None = None, idx=None):
    """LORD over the SA set ``idx`` (default: all columns of ``H``)."""
    factors = factors or ChannelFactors(H)
    idx = tuple(range(factors.N)) if idx is None else tuple(idx)
    return _layered(np.asarray(y), factors, idx, const, punctured=False)


def detect_ssd(y, H, const: Constellation, factors: ChannelFactors | None = None, idx=None):
    """Subspace detection: LORD's assembly with WRD + PCD at every shift."""
    factors = factors or ChannelFactors(H)
    idx = tuple(range(factors.N)) if idx is None else tuple(idx)
    return _layered(np.asarray(y), factors, idx, const, punctured=True)


def sic_cancel(y, H_i, x_i):
    y = np.asarray(y)
    H_i = np.asarray(H_i)
    x_i = np.asarray(x_i)
    if H_i.shape[-2] != y.shape[-1] or H_i.shape[-1] != x_i.shape[-1]:
        raise DimensionMismatch(f"cannot cancel {H_i.shape} @ {x_i.shape} from {y.shape}")
    return y - _matvec(H_i, x_i)


# --------------------------------------------------------------------------
# superposition orchestration

def _stream_model(y, factors: ChannelFactors, idx, punctured: bool):
    sel = list(idx)
    if punctured:
        f = factors.wr()
        return _apply_h(f.W, y)[..., sel], f.Rp[..., sel, :][..., :, sel]
    f = factors.qr()
    return _apply_h(f.Q, y)[..., sel], f.R[..., sel, :][..., :, sel]


def detect_stream(y, factors: ChannelFactors, idx, const: Constellation, kind: DetectorKind):
    """Detect one stream on its SA set; returns ``(symbols, model residual)``."""
    kind = DetectorKind.parse(kind)
    if kind is DetectorKind.LORD:
        x = _layered(y, factors, idx, const, punctured=False)
    elif kind is DetectorKind.SSD:
        x = _layered(y, factors, idx, const, punctured=True)
    else:
        yy, RR = _stream_model(y, factors, idx, kind.punctured)
        if kind is DetectorKind.ML:
            return detect_ml(yy, RR, const)
        if kind is DetectorKind.NC:
            x = detect_nc(yy, RR, const)
        elif kind is DetectorKind.PNC:
            x = detect_pnc(yy, RR, const)
        elif kind is DetectorKind.CD:
            return detect_cd(yy, RR, const)
        else:
            return detect_pcd(yy, RR, const)
        return x, residual(yy, RR, x)
    yy, RR = _stream_model(y, factors, idx, kind.punctured)
    return x, residual(yy, RR, x)


def detect_superposed(y, plan: StreamPlan, kind, factors: ChannelFactors) -> DetectionResult:
    """Detect streams from the strongest (last) to the weakest with SIC.

    Each stream is detected on its own SA set while all weaker streams stay
    in the noise; its estimate is then cancelled from ``y``.  Factors are
    computed once from the full channel and reused for every stream.
    """
    kind = DetectorKind.parse(kind)
    y = np.asarray(y, dtype=complex)
    n = len(plan.streams)
    symbols, bits, dists = [None] * n, [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        stream = plan.streams[i]
        idx = plan.stream_indices(stream)
        if not plan.is_contiguous(stream) and not kind.punctured:
            raise ValueError(f"{kind.value} needs contiguous trailing SA sets; "
                             "non-contiguous streams are WRD-only")
        x, d = detect_stream(y, factors, idx, stream.constellation, kind)
        symbols[i], dists[i] = x, d
        bits[i] = stream.constellation.demap(x)
        if i > 0:
            y = sic_cancel(y, factors.H[..., list(idx)], x)
    return DetectionResult(symbols, bits, dists)


# --------------------------------------------------------------------------
# instrumented flop counting

class _Tally:
    """Scalar complex arithmetic that counts the real operations it performs."""

    def __init__(self, report):
        self.report = report
        self.phase = "misc"

    def mul(self, a, b):
        self.report.add(self.phase, 2, 4)
        return a * b

    def add(self, a, b):
        self.report.add(self.phase, 2, 0)
        return a + b

    def sub(self, a, b):
        self.report.add(self.phase, 2, 0)
        return a - b

    def scale(self, a, r):
        # complex divided by a real diagonal entry: two real operations
        self.report.add(self.phase, 0, 2)
        return a / r

    def abs2(self, a):
        self.report.add(self.phase, 1, 2)
        return a.real * a.real + a.imag * a.imag

    def radd(self, a, b):
        self.report.add(self.phase, 1, 0)
        return a + b


def _structural(n, j, S, punctured):
    if punctured:
        return j == n or j == S - 1
    return j >= n


def counted_matvec(A, x, punctured: bool, tally: _Tally):
    """``A x`` for triangular (or punctured) ``A``, skipping structural zeros.

    Products are booked under ``product`` and their summation under
    ``accumulate``.
    """
    S = len(x)
    out = []
    for n in range(S):
        terms = []
        tally.phase = "product"
        for j in range(S):
            if _structural(n, j, S, punctured):
                terms.append(tally.mul(A[n][j], x[j]))
        tally.phase = "accumulate"
        acc = terms[0]
        for t in terms[1:]:
            acc = tally.add(acc, t)
        out.append(acc)
    return out


def counted_back_substitute(y, R, const: Constellation, punctured: bool, tally: _Tally, root=None):
    """Scalar NC/PNC pass; returns the symbol list."""
    S = len(y)
    x = [0j] * S
    for n in range(S - 1, -1, -1):
        if n == S - 1 and root is not None:
            x[n] = root
            continue
        acc = y[n]
        for j in range(n + 1, S):
            if not _structural(n, j, S, punctured):
                continue
            tally.phase = "product"
            p = tally.mul(R[n][j], x[j])
            tally.phase = "accumulate"
            acc = tally.sub(acc, p)
        tally.phase = "scale"
        x[n] = complex(const.slice(tally.scale(acc, R[n][n].real)))
    return x


def counted_distance(y, R, x, punctured: bool, tally: _Tally):
    Rx = counted_matvec(R, x, punctured, tally)
    tally.phase = "distance"
    d = 0.0
    for n in range(len(y)):
        e = tally.abs2(tally.sub(y[n], Rx[n]))
        d = e if n == 0 else tally.radd(d, e)
    return d


def count_matvec(N: int, punctured: bool, rng=None):
    from .analysis import ComplexityReport

    rng = np.random.default_rng(0) if rng is None else rng
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    x = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    rep = ComplexityReport()
    counted_matvec(A.tolist(), x.tolist(), punctured, _Tally(rep))
    return rep


def count_flops(kind, N: int, order: int, n_streams: int = 1, decomposition: bool = False,
                rng=None):
    """Count the real operations executed by one single-stream detection.

    The detector's scalar kernels run on a random ``N``-layer model and every
    complex multiply (4 RML + 2 RAD), add (2 RAD) and real scaling (2 RML) is
    tallied by phase.  ML is counted as one distance per candidate.  Slicing
    is comparison-only and free.  The per-call count is multiplied by
    ``n_streams``; with ``decomposition`` the QRD/puncturing polynomials of
    the complexity model are added as separate phases (they are not
    instrumented).
    """
    from .analysis import ComplexityReport, flops_epsilon

    kind = DetectorKind.parse(kind)
    rng = np.random.default_rng(0) if rng is None else rng
    const = Constellation(order, 1.0)
    R = np.triu(rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N)))
    R[np.diag_indices(N)] = np.abs(R.diagonal()) + 1.0
    y = (rng.standard_normal(N) + 1j * rng.standard_normal(N)).tolist()
    Rl = R.tolist()
    rep = ComplexityReport()
    tally = _Tally(rep)
    p = kind.punctured

    def chase():
        best, best_x = np.inf, None
        for s in const.points:
            cand = counted_back_substitute(y, Rl, const, p, tally, root=complex(s))
            d = counted_distance(y, Rl, cand, p, tally)
            if d < best:
                best, best_x = d, cand
        return best_x

    if kind is DetectorKind.ML:
        if order ** N > ML_CAP:
            raise SearchSpaceTooLarge(f"{order ** N} candidates exceed the cap of {ML_CAP}")
        for cand in itertools.product(const.points.tolist(), repeat=N):
            counted_distance(y, Rl, list(cand), False, tally)
    elif kind in (DetectorKind.NC, DetectorKind.PNC):
        counted_back_substitute(y, Rl, const, p, tally)
    elif kind in (DetectorKind.CD, DetectorKind.PCD):
        chase()
    else:
        for _ in range(N):
            chase()
    for phase, (a, m) in list(rep.breakdown.items()):
        extra = (n_streams - 1)
        rep.add(phase, a * extra, m * extra)
    if decomposition:
        reps = N if kind in (DetectorKind.LORD, DetectorKind.SSD) else 1
        e2 = flops_epsilon(2, N)
        rep.add("qrd", reps * e2.RAD, reps * e2.RML)
        if p:
            e3 = flops_epsilon(3, N)
            rep.add("puncturing", reps * e3.RAD, reps * e3.RML)
    return rep
