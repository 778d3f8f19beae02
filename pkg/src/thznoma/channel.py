"""THz channel generators and spatial-tuning geometry helpers."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InvalidArgument

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Arrays-of-subarrays on two parallel, broadside-aligned planes ``D`` apart.

    ``Mt x Nt`` transmit SAs and ``Mr x Nr`` receive SAs on square grids of
    pitch ``Delta``; each SA holds ``Q x Q`` elements at pitch ``delta``.
    """

    Mt: int = 2
    Nt: int = 2
    Mr: int = 2
    Nr: int = 2
    Q: int = 1
    delta: float = 1.5e-4
    Delta: float = 1e-2
    f: float = 1e12
    D: float = 5.0

    def __post_init__(self):
        for name in ("Mt", "Nt", "Mr", "Nr", "Q"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        for name in ("delta", "Delta", "f", "D"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be positive")

    @property
    def N(self) -> int:
        return self.Mt * self.Nt

    @property
    def M(self) -> int:
        return self.Mr * self.Nr

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f

    @property
    def side(self) -> int:
        """Largest per-axis SA count; the count that sets the tuned pitch."""
        return max(self.Mt, self.Nt, self.Mr, self.Nr)

    def tuned(self, z: int = 1) -> "ArrayGeometry":
        """Copy with the SA pitch set to the orthogonalizing separation."""
        return replace(self, Delta=optimal_sa_separation(self.D, self.wavelength, self.side, z))

    def sa_positions(self, rows: int, cols: int, height: float) -> np.ndarray:
        ix = (np.arange(rows) - (rows - 1) / 2.0) * self.Delta
        iy = (np.arange(cols) - (cols - 1) / 2.0) * self.Delta
        gx, gy = np.meshgrid(ix, iy, indexing="ij")
        return np.stack([gx.ravel(), gy.ravel(), np.full(rows * cols, height)], axis=1)

    def distances(self) -> np.ndarray:
        tx = self.sa_positions(self.Mt, self.Nt, 0.0)
        rx = self.sa_positions(self.Mr, self.Nr, self.D)
        return np.linalg.norm(rx[:, None, :] - tx[None, :, :], axis=-1)

    def swapped(self) -> "ArrayGeometry":
        return replace(self, Mt=self.Mr, Nt=self.Nr, Mr=self.Mt, Nr=self.Nt)


@dataclass(frozen=True)
class ChannelParams:
    K_abs: float = 0.0
    G_t: float = 1.0
    G_r: float = 1.0
    phi_t: float = 0.0
    theta_t: float = 0.0
    phi_r: float = 0.0
    theta_r: float = 0.0

    def __post_init__(self):
        if self.K_abs < 0:
            raise InvalidArgument("absorption coefficient must be >= 0")
        if not (self.G_t > 0 and self.G_r > 0):
            raise InvalidArgument("antenna gains must be positive")


@dataclass(frozen=True)
class MultipathParams:
    """S-V cluster/ray model.  Times in seconds, rates in 1/s, angles in rad.

    Ray angular offsets follow a zero-mean two-component Gaussian mixture:
    with probability ``mix_weight`` the std is ``spread1``, else ``spread2``.
    """

    n_clusters: int = 4
    mean_rays: float = 5.0
    cluster_decay: float = 25e-9
    ray_decay: float = 5e-9
    cluster_rate: float = 1 / 20e-9
    ray_rate: float = 1 / 2e-9
    mix_weight: float = 0.7
    spread1: float = math.radians(2.0)
    spread2: float = math.radians(8.0)

    def __post_init__(self):
        if self.n_clusters < 0 or self.mean_rays < 0:
            raise InvalidArgument("cluster and ray counts must be >= 0")
        if not (self.cluster_decay > 0 and self.ray_decay > 0):
            raise InvalidArgument("decay factors must be positive")
        if not (self.cluster_rate > 0 and self.ray_rate > 0):
            raise InvalidArgument("arrival rates must be positive")


@dataclass
class ChannelRealization:
    H: np.ndarray
    kind: str
    provenance: dict = field(default_factory=dict)
    sigma_h: float | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.H)):
            raise InvalidArgument("channel has non-finite entries")
        if self.sigma_h is not None and not self.sigma_h > 0:
            raise InvalidArgument("large-scale coefficient must be positive")


def los_path_gain(f, d, K_abs=0.0):
    """Free-space spreading, molecular absorption and propagation phase."""
    f = np.asarray(f, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(f <= 0) or np.any(d <= 0):
        raise InvalidArgument("frequency and distance must be positive")
    spread = SPEED_OF_LIGHT / (4 * np.pi * f * d)
    return spread * np.exp(-0.5 * K_abs * d) * np.exp(-2j * np.pi * f * d / SPEED_OF_LIGHT)


def element_coordinates(Q: int, delta: float) -> np.ndarray:
    """``(Q*Q, 3)`` element positions in the SA plane, row-major over (p, q)."""
    p, q = np.meshgrid(np.arange(Q), np.arange(Q), indexing="ij")
    return np.stack([p.ravel() * delta, q.ravel() * delta, np.zeros(Q * Q)], axis=1)


def steering_vector(phi, theta, Q: int, delta: float, wavelength: float, coords=None):
    if Q < 1:
        raise InvalidArgument("Q must be >= 1")
    if coords is None:
        coords = element_coordinates(Q, delta)
    coords = np.asarray(coords, dtype=float)
    k = 2 * np.pi / wavelength
    direction = np.array([np.cos(phi) * np.sin(theta), np.sin(phi) * np.sin(theta), np.cos(theta)])
    phase = k * coords @ direction
    return np.exp(1j * phase) / Q


def _steering_gain(geom: ArrayGeometry, phi_t, theta_t, phi_r, theta_r) -> complex:
    lam = geom.wavelength
    a_t = steering_vector(phi_t, theta_t, geom.Q, geom.delta, lam)
    a_r = steering_vector(phi_r, theta_r, geom.Q, geom.delta, lam)
    return complex(np.vdot(a_r, a_t))


def los_channel(geometry: ArrayGeometry, params: ChannelParams | None = None) -> ChannelRealization:
    params = params or ChannelParams()
    d = geometry.distances()
    alpha = los_path_gain(geometry.f, d, params.K_abs)
    s = _steering_gain(geometry, params.phi_t, params.theta_t, params.phi_r, params.theta_r)
    H = params.G_r * params.G_t * s * alpha
    return ChannelRealization(H, "los", {"geometry": asdict(geometry), "params": asdict(params)})


def _ray_offsets(mp: MultipathParams, rng, size):
    wide = rng.random(size) >= mp.mix_weight
    return rng.standard_normal(size) * np.where(wide, mp.spread2, mp.spread1)


def multipath_channel(geometry: ArrayGeometry, params: ChannelParams | None,
                      mp: MultipathParams, rng) -> ChannelRealization:
    """LoS term plus an S-V sum of steered, randomly faded rays."""
    params = params or ChannelParams()
    los = los_channel(geometry, params)
    if mp.n_clusters == 0:
        return ChannelRealization(los.H, "multipath", {**los.provenance, "multipath": asdict(mp)})

    d = geometry.distances()
    base_power = (SPEED_OF_LIGHT / (4 * np.pi * geometry.f * d)) ** 2 * np.exp(-params.K_abs * d)
    H_nlos = np.zeros_like(los.H)
    tau = 0.0
    for v in range(mp.n_clusters):
        if v > 0:
            tau += rng.exponential(1.0 / mp.cluster_rate)
        cl_phi_t, cl_phi_r = rng.uniform(-np.pi, np.pi, 2)
        cl_theta_t, cl_theta_r = rng.uniform(-np.pi / 2, np.pi / 2, 2)
        n_rays = rng.poisson(mp.mean_rays) + 1
        tau_bar = np.concatenate([[0.0], np.cumsum(rng.exponential(1.0 / mp.ray_rate, n_rays - 1))])
        offsets = _ray_offsets(mp, rng, (n_rays, 4))
        for u in range(n_rays):
            s = _steering_gain(geometry,
                               cl_phi_t + offsets[u, 0], cl_theta_t + offsets[u, 1],
                               cl_phi_r + offsets[u, 2], cl_theta_r + offsets[u, 3])
            power = base_power * np.exp(-tau / mp.cluster_decay - tau_bar[u] / mp.ray_decay)
            g = (rng.standard_normal(d.shape) + 1j * rng.standard_normal(d.shape)) * np.sqrt(power / 2)
            H_nlos += s * g
    H = los.H + params.G_r * params.G_t * H_nlos
    return ChannelRealization(H, "multipath", {**los.provenance, "multipath": asdict(mp)})


def nlos_mean_power(geometry: ArrayGeometry, params: ChannelParams | None,
                    mp: MultipathParams, d: float, tol: float = 1e-15) -> float:
    """Closed-form ``E|h_nlos|^2`` at distance ``d`` for unit steering gain.

    Clusters arrive as a Poisson process (rate ``cluster_rate``), rays within a
    cluster likewise, and each cluster holds ``1 + Poisson(mean_rays)`` rays.
    """
    params = params or ChannelParams()
    base = (SPEED_OF_LIGHT / (4 * np.pi * geometry.f * d)) ** 2 * math.exp(-params.K_abs * d)
    rho_c = mp.cluster_rate * mp.cluster_decay / (1 + mp.cluster_rate * mp.cluster_decay)
    clusters = sum(rho_c ** v for v in range(mp.n_clusters))
    rho_r = mp.ray_rate * mp.ray_decay / (1 + mp.ray_rate * mp.ray_decay)
    # sum_u P(1 + K >= u + 1) rho^u with K ~ Poisson(mean_rays)
    from scipy.stats import poisson

    rays, u = 0.0, 0
    while True:
        term = (poisson.sf(u - 1, mp.mean_rays) if u > 0 else 1.0) * rho_r ** u
        rays += term
        if term < tol and u > mp.mean_rays:
            break
        u += 1
    return (params.G_r * params.G_t) ** 2 * base * clusters * rays


def gaussian_channel(M: int, N: int, rng, size=()) -> ChannelRealization | np.ndarray:
    """i.i.d. CN(0, 1) channel; with ``size`` returns a raw stack of matrices."""
    if M < 1 or N < 1:
        raise InvalidArgument("dimensions must be >= 1")
    shape = tuple(np.atleast_1d(size)) + (M, N) if size != () else (M, N)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    if size != ():
        return H
    return ChannelRealization(H, "gaussian", {"M": M, "N": N})


def normalize_unit_gain(H: np.ndarray) -> np.ndarray:
    """Scale so that the mean squared entry magnitude is one (per matrix)."""
    H = np.asarray(H)
    rms = np.sqrt(np.mean(np.abs(H) ** 2, axis=(-2, -1), keepdims=True))
    return H / rms


def optimal_sa_separation(D: float, wavelength: float, M: int, z: int = 1) -> float:
    if z < 1 or z % 2 == 0:
        raise InvalidArgument(f"z must be a positive odd integer, got {z}")
    if not (D > 0 and wavelength > 0 and M >= 1):
        raise InvalidArgument("D, wavelength must be positive and M >= 1")
    return math.sqrt(z * D * wavelength / M)


def rayleigh_distance(Delta: float, M: int, wavelength: float) -> float:
    """``2 * aperture**2 / wavelength`` with aperture ``(M - 1) * Delta``."""
    if not (Delta > 0 and M >= 1 and wavelength > 0):
        raise InvalidArgument("positive inputs required")
    return 2.0 * ((M - 1) * Delta) ** 2 / wavelength


def load_absorption_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Two whitespace- or comma-separated columns: frequency_Hz, K_abs_per_m."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            a, b = line.replace(",", " ").split()[:2]
            rows.append((float(a), float(b)))
    arr = np.array(sorted(rows))
    return arr[:, 0], arr[:, 1]


def absorption_at(table, f: float) -> float:
    freqs, values = table
    return float(np.interp(f, freqs, values))
