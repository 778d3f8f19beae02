"""Closed-form BER approximations and the flop-count complexity model."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy import special

from .errors import PatternExplosion, UnsupportedOrder

PATTERN_CAP = 12


# --------------------------------------------------------------------------
# error-rate primitives

def q_function(x):
    """Gaussian tail probability ``Q(x)``."""
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@functools.lru_cache(maxsize=None)
def _axis_tables(order: int):
    """Per-axis PAM levels (unit symbol energy) and Gray bit tables."""
    if order == 2:
        m, base = 2, 1.0
    elif order in (4, 16, 64):
        m = int(round(math.sqrt(order)))
        base = 2.0 * (order - 1) / 3.0
    else:
        raise UnsupportedOrder(f"QAM order {order} not supported")
    levels = (2 * np.arange(m) - (m - 1)) / math.sqrt(base)
    nb = int(math.log2(m))
    gray = np.arange(m) ^ (np.arange(m) >> 1)
    bits = (gray[:, None] >> np.arange(nb - 1, -1, -1)) & 1
    edges = np.concatenate([[-np.inf], (levels[1:] + levels[:-1]) / 2, [np.inf]])
    return levels, bits, edges


def awgn_ber(snr, order: int):
    """Exact Gray-mapped bit error rate of square QAM at symbol SNR ``Es/N0``.

    Computed per axis by summing decision-region probabilities of every level
    pair whose labels differ in a bit.  For BPSK this is ``Q(sqrt(2 snr))``.
    """
    levels, bits, edges = _axis_tables(order)
    snr = np.asarray(snr, dtype=float)
    out = np.full(snr.shape, 0.5)
    pos = snr > 0
    if not np.any(pos):
        return out
    s = np.sqrt(1.0 / (2.0 * snr[pos]))[..., None, None]
    a = levels[:, None]
    # probability of landing in region j when level k was sent
    lo = (edges[:-1][None, :] - a)
    hi = (edges[1:][None, :] - a)
    prob = q_function(lo / s) - q_function(hi / s)
    diff = (bits[:, None, :] != bits[None, :, :]).astype(float)  # (k, j, bit)
    ber = np.einsum("...kj,kjb->...", prob, diff) / (len(levels) * bits.shape[1])
    out[pos] = ber
    return out


@functools.lru_cache(maxsize=None)
def _q_terms(order: int):
    """Write the AWGN BER as ``c0 + sum_k w_k Q(v_k sqrt(2 snr))`` with ``v_k > 0``."""
    levels, bits, edges = _axis_tables(order)
    diff = (bits[:, None, :] != bits[None, :, :]).sum(axis=-1).astype(float)
    norm = len(levels) * bits.shape[1]
    const = 0.0
    weights: dict = {}
    for k, a in enumerate(levels):
        for j in range(len(levels)):
            if not diff[k, j]:
                continue
            for edge, sign in ((edges[j], 1.0), (edges[j + 1], -1.0)):
                v = edge - a
                w = sign * diff[k, j] / norm
                if np.isinf(v):
                    const += w if v < 0 else 0.0
                elif v < 0:
                    # Q(-u) = 1 - Q(u)
                    const += w
                    key = round(-v, 12)
                    weights[key] = weights.get(key, 0.0) - w
                else:
                    key = round(v, 12)
                    weights[key] = weights.get(key, 0.0) + w
    v = np.array(sorted(weights))
    return const, v, np.array([weights[x] for x in v])


def _rayleigh_q_average(z: int, gbar):
    """Mean of ``Q(sqrt(2 g))`` with ``g`` the sum of ``z`` i.i.d. exponentials of mean ``gbar``."""
    mu = np.sqrt(gbar / (1.0 + gbar))
    lo, hi = (1.0 - mu) / 2.0, (1.0 + mu) / 2.0
    acc = np.zeros_like(mu)
    for k in range(z):
        acc = acc + math.comb(z - 1 + k, k) * hi ** k
    return lo ** z * acc


def g_avg_ber(z: int, mean_snr, order: int):
    """Average Gray ``L``-QAM BER over ``z``-fold Rayleigh diversity.

    The exact AWGN error rate is averaged over the chi-squared (``2z``
    degrees of freedom) density of the combined SNR whose per-branch mean is
    ``mean_snr``.  Each Q-term of the AWGN rate has a closed-form average, so
    the result is exact up to rounding.
    """
    if z < 1:
        raise ValueError("diversity order must be >= 1")
    const, v, w = _q_terms(order)
    gbar = np.maximum(np.asarray(mean_snr, dtype=float), 0.0)
    terms = _rayleigh_q_average(int(z), v ** 2 * gbar[..., None])
    out = np.clip(const + np.sum(w * terms, axis=-1), 0.0, 0.5)
    return float(out) if out.ndim == 0 else out


def beta(power: float, order: int) -> float:
    """Amplitude of a one-bit slicing error on a scaled ``L``-QAM.

    ``log2(L) - 1`` vanishes for BPSK; there the nearest-neighbour distance
    ``2 sqrt(p)`` is used, matching the ``4p`` variance term of the BPSK forms.
    """
    return 2.0 * math.sqrt(power) / max(math.log2(order) - 1.0, 1.0)


# --------------------------------------------------------------------------
# per-stream BER specification

@dataclass(frozen=True)
class BerSpec:
    """Inputs of the per-stream BER approximations.

    ``layers`` is the stream width; ``M``/``N`` the receive count and the full
    transmit width (so global layer ``n`` of a trailing stream has QR
    diversity ``M - n + 1``).  ``r_diag`` holds the realized diagonal of the
    stream's R (or punctured R) for the conditional forms.
    """

    kind: str = "PNC"
    layers: int = 2
    order: int = 2
    power: float = 1.0
    sigma2: float = 1.0
    power_prev: float = 0.0
    power_next: float = 0.0
    order_next: int = 2
    sigma_h_prev: float = 1.0
    sigma_h_next: float = 1.0
    ber_next: float = 0.0
    M: int | None = None
    N: int | None = None
    r_diag: tuple | None = None

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("noise variance must be positive")
        if min(self.power, self.power_prev, self.power_next) < 0:
            raise ValueError("powers must be >= 0")

    @property
    def effective_noise(self) -> float:
        """Noise plus lower-stream interference plus residual SIC error."""
        sic = 0.0
        if self.power_next > 0:
            sic = self.ber_next * self.sigma_h_next ** 2 * beta(self.power_next, self.order_next) ** 2
        return self.sigma2 + self.power_prev * self.sigma_h_prev ** 2 + sic

    @property
    def beta_sq(self) -> float:
        return beta(self.power, self.order) ** 2


@dataclass(frozen=True)
class ErrorPatternSet:
    layer: int
    patterns: np.ndarray


def error_patterns(n: int, N: int, punctured: bool = False) -> ErrorPatternSet:
    """All error-indicator vectors over layers ``n..N`` (1-based).

    Without puncturing there are ``2**(N - n + 1)``; under puncturing only the
    root layer propagates, so the set collapses to two patterns.
    """
    if punctured:
        return ErrorPatternSet(n, np.array([[0], [1]]))
    if N - n + 1 > PATTERN_CAP:
        raise PatternExplosion(f"{2 ** (N - n + 1)} error patterns exceed the cap")
    pats = np.array(list(itertools.product((0, 1), repeat=N - n + 1)), dtype=int)
    return ErrorPatternSet(n, pats)


def _layer_rates(spec: BerSpec, averaged: bool):
    """Return ``rate(layer_index, extra_noise, punctured)`` for the chosen model."""
    sig = spec.effective_noise
    S = spec.layers
    if averaged:
        M = spec.M or spec.N or S
        N = spec.N or S

        def rate(n, extra, punctured):
            g = N - S + n + 1  # 1-based global layer index
            if n == S - 1:
                z = M - N + 1
            elif punctured:
                z = M - N + 2
            else:
                z = M - g + 1
            return g_avg_ber(max(z, 1), spec.power / (sig + extra), spec.order)

        return rate

    if spec.r_diag is None or len(spec.r_diag) != S:
        raise ValueError("conditional forms need one diagonal value per layer")
    r2 = np.abs(np.asarray(spec.r_diag, dtype=float)) ** 2

    def rate(n, extra, punctured):
        return float(awgn_ber(r2[n] * spec.power / (sig + extra), spec.order))

    return rate


def _nc_layers(spec: BerSpec, averaged: bool, root_correct: bool = False) -> np.ndarray:
    S = spec.layers
    if S > PATTERN_CAP:
        raise PatternExplosion(f"NC recursion over {S} layers exceeds the cap of {PATTERN_CAP}")
    rate = _layer_rates(spec, averaged)
    out = np.zeros(S)
    out[S - 1] = rate(S - 1, 0.0, False)
    root_err = 0.0 if root_correct else out[S - 1]
    # distribution over error patterns of the layers already detected
    pats = {(0,): 1.0 - root_err, (1,): root_err}
    for n in range(S - 2, -1, -1):
        cache = {}
        nxt = {}
        total = 0.0
        for psi, prob in pats.items():
            w = sum(psi)
            if w not in cache:
                cache[w] = rate(n, spec.beta_sq * w, False)
            e = cache[w]
            total += e * prob
            nxt[(1,) + psi] = prob * e
            nxt[(0,) + psi] = prob * (1.0 - e)
        out[n] = total
        pats = nxt
    return out


def _pnc_layers(spec: BerSpec, averaged: bool, root_correct: bool = False) -> np.ndarray:
    S = spec.layers
    rate = _layer_rates(spec, averaged)
    out = np.zeros(S)
    out[S - 1] = rate(S - 1, 0.0, True)
    root_err = 0.0 if root_correct else out[S - 1]
    for n in range(S - 1):
        ok = rate(n, 0.0, True)
        bad = rate(n, spec.beta_sq, True) if root_err > 0 else 0.0
        out[n] = ok * (1.0 - root_err) + bad * root_err
    return out


def pnc_conditional_ber(spec: BerSpec) -> np.ndarray:
    """Per-layer PNC error rates on realized punctured diagonals."""
    return _pnc_layers(spec, averaged=False)


def nc_conditional_ber(spec: BerSpec) -> np.ndarray:
    """Per-layer NC error rates, recursing over all error patterns."""
    return _nc_layers(spec, averaged=False)


def conditional_ber(kind: str, spec: BerSpec) -> np.ndarray:
    """Per-layer conditional rates for NC/PNC/CD/PCD.

    The chase variants enumerate every root symbol, so the upper layers are
    evaluated with the root decision correct and the root layer itself is
    charged nothing, as in the printed chase expressions.
    """
    kind = kind.upper()
    if kind == "NC":
        return _nc_layers(spec, False)
    if kind == "PNC":
        return _pnc_layers(spec, False)
    if kind == "CD":
        return _chase_layers(_nc_layers(spec, False, root_correct=True))
    if kind == "PCD":
        return _chase_layers(_pnc_layers(spec, False, root_correct=True))
    raise ValueError(f"no closed form for {kind}")


def _chase_layers(layers):
    layers = layers.copy()
    layers[-1] = 0.0
    return layers


@dataclass(frozen=True)
class AveragedBer:
    kind: str
    as_printed: float
    per_layer: np.ndarray = field(repr=False)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_layer))

    @property
    def clamped(self) -> float:
        return float(min(max(self.mean, 0.0), 0.5))


def avg_ber_rayleigh(kind: str, spec: BerSpec) -> AveragedBer:
    """Rayleigh-averaged BER of NC/PNC/CD/PCD.

    ``as_printed`` is the per-layer mean for NC/PNC and the sum over non-root
    layers for CD/PCD (which can exceed one at low SNR).  For CD/PCD the
    non-root layers assume a correct root and the enumerated root layer
    itself is charged zero.  ``clamped`` is the per-layer mean limited to
    [0, 0.5].
    """
    kind = kind.upper()
    if kind == "NC":
        layers = _nc_layers(spec, True)
        return AveragedBer(kind, float(np.mean(layers)), layers)
    if kind == "PNC":
        layers = _pnc_layers(spec, True)
        return AveragedBer(kind, float(np.mean(layers)), layers)
    if kind == "CD":
        upper = _nc_layers(spec, True, root_correct=True)
    elif kind == "PCD":
        upper = _pnc_layers(spec, True, root_correct=True)
    else:
        raise ValueError(f"no closed form for {kind}")
    printed = float(np.sum(upper[:-1]))
    return AveragedBer(kind, printed, _chase_layers(upper))


# --------------------------------------------------------------------------
# complexity model

@dataclass(frozen=True)
class EpsilonCost:
    rad: Fraction
    rml: Fraction

    @property
    def RAD(self) -> int:
        return round(self.rad)

    @property
    def RML(self) -> int:
        return round(self.rml)

    @property
    def flops(self) -> int:
        return self.RAD + self.RML


def flops_epsilon(which: int, N: int) -> EpsilonCost:
    """Flop polynomials: 1 = product-phase saving, 2 = QRD, 3 = puncturing."""
    if N < 2:
        raise ValueError("N must be >= 2")
    F = Fraction
    if which == 1:
        return EpsilonCost(F(N * N - 3 * N + 2), F(2 * N * N - 6 * N + 4))
    if which == 2:
        return EpsilonCost(F(4 * N ** 3 - N * N - N), F(4 * N ** 3 + 3 * N * N))
    if which == 3:
        return EpsilonCost(F(2, 3) * (8 * N ** 3 - 15 * N * N + 4 * N - 12),
                           F(16, 3) * N ** 3 - 7 * N * N + F(8, 3) * N - 20)
    raise ValueError("which must be 1, 2 or 3")


def matvec_mults(N: int, punctured: bool) -> int:
    """Complex multiplications in ``R x`` (upper triangular) or ``Rp x``."""
    return 2 * N - 1 if punctured else N * (N + 1) // 2


def multiplication_saving(N: int) -> Fraction:
    return Fraction(matvec_mults(N, False) - matvec_mults(N, True), matvec_mults(N, False))


def backsub_cost(N: int, punctured: bool) -> tuple[int, int]:
    """(RAD, RML) of one back-substitution pass, slicing excluded.

    Counts interference products (complex multiply: 4 RML + 2 RAD), their
    subtraction (2 RAD each) and the real-diagonal scaling (2 RML per layer).
    """
    products = (N - 1) if punctured else N * (N - 1) // 2
    return 4 * products, 4 * products + 2 * N


@dataclass
class ComplexityReport:
    RAD: int = 0
    RML: int = 0
    breakdown: dict = field(default_factory=dict)

    @property
    def flops(self) -> int:
        return self.RAD + self.RML

    def add(self, phase: str, rad: int, rml: int) -> None:
        self.RAD += rad
        self.RML += rml
        prev = self.breakdown.get(phase, (0, 0))
        self.breakdown[phase] = (prev[0] + rad, prev[1] + rml)


@dataclass(frozen=True)
class SavingsRow:
    detectors: str
    decomposition: int
    puncturing: int
    savings: int


def savings_table(J: int, n_streams: int, N: int, n_symbols: int) -> list[SavingsRow]:
    """Per-detector-pair flop savings of puncturing over ``J`` frames."""
    if min(J, n_streams, N, n_symbols) < 1:
        raise ValueError("all sizes must be positive")
    e1 = flops_epsilon(1, N).flops
    e2 = flops_epsilon(2, N).flops
    e3 = flops_epsilon(3, N).flops
    base = J * n_streams * e1
    return [
        SavingsRow("NC->PNC", e2, e3, base),
        SavingsRow("CD->PCD", e2, e3, base * n_symbols),
        SavingsRow("LORD->SSD", N * e2, N * e3, base * N * n_symbols),
    ]
