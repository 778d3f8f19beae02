"""Scaled square QAM with per-axis reflected Gray labelling.

Layout: for an ``L``-point constellation with ``m = sqrt(L)`` levels per axis,
a symbol label is ``log2(L)`` bits; the first half selects the in-phase level
and the second half the quadrature level.  Level ``k`` (0 = most negative)
carries the Gray word ``k ^ (k >> 1)``.  BPSK is the one-axis special case
(real levels only).  The unit-energy base is scaled by ``sqrt(p)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, UnsupportedOrder

SUPPORTED_ORDERS = (2, 4, 16, 64)


def _gray(k):
    return k ^ (k >> 1)


def _gray_inverse(g):
    g = np.asarray(g)
    k = g.copy()
    shift = g >> 1
    while np.any(shift):
        k ^= shift
        shift >>= 1
    return k


@dataclass(frozen=True)
class Constellation:
    order: int
    power: float
    levels_per_axis: int = field(init=False)
    scale: float = field(init=False)
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order not in SUPPORTED_ORDERS:
            raise UnsupportedOrder(f"QAM order {self.order} not in {SUPPORTED_ORDERS}")
        if not self.power > 0:
            raise ValueError("constellation power must be positive")
        if self.order == 2:
            m, base_energy = 2, 1.0
        else:
            m = int(round(np.sqrt(self.order)))
            base_energy = 2.0 * (self.order - 1) / 3.0
        object.__setattr__(self, "levels_per_axis", m)
        object.__setattr__(self, "scale", float(np.sqrt(self.power / base_energy)))
        labels = np.arange(self.order)
        object.__setattr__(self, "points", self.symbols_from_labels(labels))

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    @property
    def is_bpsk(self) -> bool:
        return self.order == 2

    def _axis_bits(self) -> int:
        return self.bits_per_symbol if self.is_bpsk else self.bits_per_symbol // 2

    def _level(self, k):
        return (2 * np.asarray(k) - (self.levels_per_axis - 1)) * self.scale

    def symbols_from_labels(self, labels) -> np.ndarray:
        labels = np.asarray(labels, dtype=np.int64)
        ab = self._axis_bits()
        if self.is_bpsk:
            return self._level(_gray_inverse(labels)).astype(complex)
        gi = labels >> ab
        gq = labels & ((1 << ab) - 1)
        return self._level(_gray_inverse(gi)) + 1j * self._level(_gray_inverse(gq))

    def _axis_index(self, v):
        m = self.levels_per_axis
        # round half up: ties resolve toward the larger level
        k = np.floor((v / self.scale + (m - 1)) / 2.0 + 0.5)
        return np.clip(k, 0, m - 1).astype(np.int64)

    def axis_indices(self, v) -> tuple[np.ndarray, np.ndarray | None]:
        v = np.asarray(v)
        ki = self._axis_index(v.real)
        if self.is_bpsk:
            return ki, None
        return ki, self._axis_index(v.imag)

    def slice(self, v) -> np.ndarray:
        """Nearest constellation point, elementwise.

        Square QAM decouples per axis, so the argmin is a clipped rounding on
        each axis; ties go to the larger real part, then the larger imaginary part.
        """
        ki, kq = self.axis_indices(v)
        if kq is None:
            return self._level(ki).astype(complex)
        return self._level(ki) + 1j * self._level(kq)

    def labels(self, symbols) -> np.ndarray:
        ki, kq = self.axis_indices(symbols)
        if kq is None:
            return _gray(ki)
        return (_gray(ki) << self._axis_bits()) | _gray(kq)

    def modulate(self, bits) -> np.ndarray:
        """Map a bit array (last axis a multiple of log2(L)) to symbols."""
        bits = np.asarray(bits, dtype=np.int64)
        k = self.bits_per_symbol
        if bits.shape[-1] % k:
            raise LengthMismatch(f"{bits.shape[-1]} bits is not a multiple of {k}")
        words = bits.reshape(bits.shape[:-1] + (-1, k))
        weights = 1 << np.arange(k - 1, -1, -1)
        return self.symbols_from_labels(words @ weights)

    def demap(self, symbols) -> np.ndarray:
        """Hard bits of (already sliced or raw) symbols, MSB first per symbol."""
        lab = self.labels(symbols)
        k = self.bits_per_symbol
        shifts = np.arange(k - 1, -1, -1)
        bits = (lab[..., None] >> shifts) & 1
        return bits.reshape(lab.shape[:-1] + (-1,)) if lab.ndim else bits

    def mean_energy(self) -> float:
        return float(np.mean(np.abs(self.points) ** 2))


def build_qam(order: int, power: float = 1.0) -> Constellation:
    return Constellation(order, float(power))
