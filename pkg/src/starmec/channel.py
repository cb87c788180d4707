"""STAR-RIS coefficients, Rician link generation, cascaded gains and rates.

Links are modelled on the RIS side only: device -> STAR-RIS -> BS, with the
BS treated as a single effective antenna so every cascaded gain is a complex
scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass
class StarCoefficients:
    beta_r: np.ndarray
    beta_t: np.ndarray
    phi_r: np.ndarray
    phi_t: np.ndarray

    @property
    def M(self) -> int:
        return len(self.beta_r)

    @classmethod
    def split(cls, beta_r, phi_r, phi_t) -> "StarCoefficients":
        """Build coefficients from reflection amplitudes; transmission takes the rest."""
        beta_r = np.clip(np.asarray(beta_r, dtype=float), 0.0, 1.0)
        return cls(beta_r, 1.0 - beta_r, wrap_phase(phi_r), wrap_phase(phi_t))

    @classmethod
    def initial(cls, M: int, beta_r: float = 0.5) -> "StarCoefficients":
        return cls.split(np.full(M, beta_r), np.zeros(M), np.zeros(M))

    def copy(self) -> "StarCoefficients":
        return StarCoefficients(self.beta_r.copy(), self.beta_t.copy(),
                                self.phi_r.copy(), self.phi_t.copy())


@dataclass
class ChannelRealization:
    """Link vectors for one slot.

    ``h_mb`` has shape (M,), ``h_km`` has shape (K, M). ``pathloss_mb`` and
    ``pathloss_km`` hold the large-scale power gains used to build them.
    """

    h_mb: np.ndarray
    h_km: np.ndarray
    rician_K: float
    pathloss_mb: float
    pathloss_km: np.ndarray


def wrap_phase(phi) -> np.ndarray:
    phi = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(phi >= TWO_PI, 0.0, phi)


def make_star_matrices(coeffs: StarCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal reflection and transmission matrices ``sqrt(beta) * exp(j phi)``."""
    for name in ("beta_r", "beta_t"):
        b = np.asarray(getattr(coeffs, name), dtype=float)
        if np.any(b < 0.0) or np.any(b > 1.0) or not np.all(np.isfinite(b)):
            raise ValueError(f"{name} must lie in [0, 1]")
    theta_r = np.diag(np.sqrt(coeffs.beta_r) * np.exp(1j * np.asarray(coeffs.phi_r, dtype=float)))
    theta_t = np.diag(np.sqrt(coeffs.beta_t) * np.exp(1j * np.asarray(coeffs.phi_t, dtype=float)))
    return theta_r, theta_t


def star_diagonals(coeffs: StarCoefficients) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal entries only; the simulator never needs the full matrices."""
    return (np.sqrt(coeffs.beta_r) * np.exp(1j * coeffs.phi_r),
            np.sqrt(coeffs.beta_t) * np.exp(1j * coeffs.phi_t))


def pathloss(distance, ref_gain: float = 1e-3, exponent: float = 2.2):
    """Large-scale power gain ``ref_gain * d ** -exponent`` (``ref_gain`` at 1 m)."""
    d = np.maximum(np.asarray(distance, dtype=float), 1.0)
    return ref_gain * d ** (-exponent)


def los_vector(src, dst, M: int, wavelength: float, spacing: float = 0.5) -> np.ndarray:
    """Unit-modulus LoS response of an M-element linear array at ``dst`` seen from ``src``.

    The array axis is the x axis; ``spacing`` is in wavelengths. The overall
    phase follows the propagation distance. ``src`` may hold several points
    (shape (K, 3)), giving one row per point.
    """
    src = np.asarray(src, dtype=float)
    diff = src - np.asarray(dst, dtype=float)
    d = np.linalg.norm(diff, axis=-1)
    cos_theta = np.divide(diff[..., 0], d, out=np.zeros_like(d), where=d > 0)
    m = np.arange(M)
    phase = d[..., None] / wavelength + m * spacing * cos_theta[..., None]
    return np.exp(-1j * TWO_PI * phase)


def draw_nlos(rng: np.random.Generator, M: int, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Circularly-symmetric complex Gaussian draws with unit variance."""
    scale = np.sqrt(0.5)
    mb = scale * (rng.standard_normal(M) + 1j * rng.standard_normal(M))
    km = scale * (rng.standard_normal((K, M)) + 1j * rng.standard_normal((K, M)))
    return mb, km


def rician_mix(los: np.ndarray, nlos: np.ndarray, rician_K: float, gain) -> np.ndarray:
    if rician_K < 0:
        raise ValueError("rician_K must be >= 0")
    if np.isinf(rician_K):
        w_los, w_nlos = 1.0, 0.0
    else:
        w_los = np.sqrt(rician_K / (1.0 + rician_K))
        w_nlos = np.sqrt(1.0 / (1.0 + rician_K))
    return np.sqrt(gain) * (w_los * los + w_nlos * nlos)


@dataclass
class Geometry:
    ris: np.ndarray       # (3,)
    bs: np.ndarray        # (3,)
    devices: np.ndarray   # (K, 3)


def compose_rician(geometry: Geometry, nlos: tuple[np.ndarray, np.ndarray], M: int,
                   rician_K: float, ref_gain: float = 1e-3, exponent: float = 2.2,
                   wavelength: float = 0.125, spacing: float = 0.5) -> ChannelRealization:
    """Combine geometry-driven LoS terms with given NLoS draws.

    Leading batch dimensions are allowed: ``ris`` of shape (..., 3),
    ``devices`` of shape (..., K, 3) and NLoS draws of shape (..., M) and
    (..., K, M).
    """
    nlos_mb, nlos_km = nlos
    ris = np.asarray(geometry.ris, dtype=float)
    bs = np.asarray(geometry.bs, dtype=float)
    devices = np.asarray(geometry.devices, dtype=float)
    if devices.ndim == 1:
        devices = devices[None, :]
    pl_mb = pathloss(np.linalg.norm(ris - bs, axis=-1), ref_gain, exponent)
    h_mb = rician_mix(los_vector(bs, ris, M, wavelength, spacing), nlos_mb, rician_K,
                      np.asarray(pl_mb)[..., None])
    ris_k = ris[..., None, :]
    pl_km = pathloss(np.linalg.norm(devices - ris_k, axis=-1), ref_gain, exponent)
    los_km = los_vector(devices, ris_k, M, wavelength, spacing)
    h_km = rician_mix(los_km, nlos_km, rician_K, pl_km[..., None])
    return ChannelRealization(h_mb, h_km, float(rician_K), pl_mb, pl_km)


def sample_rician(geometry: Geometry, rician_K: float, rng: np.random.Generator | int,
                  M: int, **kwargs) -> ChannelRealization:
    """Draw one channel realization for the given geometry.

    ``rng`` is a numpy Generator (advanced in place) or an integer seed.
    Remaining keyword arguments go to :func:`compose_rician`.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    K = len(np.atleast_2d(geometry.devices))
    return compose_rician(geometry, draw_nlos(rng, M, K), M, rician_K, **kwargs)


def cascaded_gain(h_mb: np.ndarray, theta, h_km: np.ndarray) -> complex:
    """Scalar gain ``h_mb^H Theta h_km``.

    ``theta`` may be the full diagonal matrix or just its diagonal.
    """
    h_mb = np.asarray(h_mb)
    h_km = np.asarray(h_km)
    theta = np.asarray(theta)
    diag = np.diagonal(theta) if theta.ndim == 2 else theta
    if not (h_mb.shape == h_km.shape == diag.shape and h_mb.ndim == 1):
        raise ValueError(f"dimension mismatch: {h_mb.shape}, {diag.shape}, {h_km.shape}")
    return complex(np.sum(np.conj(h_mb) * diag * h_km))


def device_gains(real: ChannelRealization, coeffs: StarCoefficients, regions: np.ndarray) -> np.ndarray:
    """Cascaded gains for all devices; ``regions`` holds 0 (reflection) or 1 (transmission).

    Works on batched realizations and coefficients (leading dimensions).
    """
    diag_r, diag_t = star_diagonals(coeffs)
    refl = (np.asarray(regions) == 0)[:, None]
    diag = np.where(refl, diag_r[..., None, :], diag_t[..., None, :])
    return np.sum(np.conj(real.h_mb)[..., None, :] * diag * real.h_km, axis=-1)


def sinr(k: int, gains, powers, noise_power: float, mode: str = "orthogonal",
         regions=None) -> float:
    """SINR of device ``k``.

    ``orthogonal``: ``p_k |h_k|^2 / noise``. ``sinr``: interference from the
    higher-indexed devices of the same region, in the order given.
    """
    return float(sinr_all(gains, powers, noise_power, mode, regions)[k])


def sinr_all(gains, powers, noise_power: float, mode: str = "orthogonal", regions=None) -> np.ndarray:
    rx = np.asarray(powers, dtype=float) * np.abs(np.asarray(gains)) ** 2
    if mode == "orthogonal":
        return rx / noise_power
    if mode != "sinr":
        raise ValueError(f"unknown interference mode {mode!r}")
    regions = np.zeros(len(rx), dtype=int) if regions is None else np.asarray(regions)
    interference = np.zeros_like(rx)
    for region in np.unique(regions):
        idx = np.flatnonzero(regions == region)
        part = rx[..., idx]
        tail = np.cumsum(part[..., ::-1], axis=-1)[..., ::-1]
        interference[..., idx] = tail - part
    return rx / (interference + noise_power)


def rate(sinr_value, bandwidth: float):
    """Shannon rate ``W log2(1 + sinr)`` in bits/s."""
    return bandwidth * np.log2(1.0 + np.asarray(sinr_value, dtype=float))
