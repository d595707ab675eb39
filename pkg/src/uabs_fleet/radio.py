"""Link budget, beam footprint and coverage/rate matrices.

All powers in dBm, gains in dB, distances in meters. Indices: ``g`` users,
``m`` macro base stations, ``u`` aerial base stations, ``j`` beams of a UABS.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .resources import ResourceGrid

N_BEAM_GRID = 9


@dataclass(frozen=True)
class PathLossCoeffs:
    intercept: float
    distance_slope: float
    frequency_slope: float
    height_slope: float = 0.0  # multiplies (h_ut - 1.5)


LOS_DEFAULT = PathLossCoeffs(28.0, 22.0, 20.0, 0.0)
NLOS_DEFAULT = PathLossCoeffs(13.54, 39.08, 20.0, -0.6)


@dataclass(frozen=True)
class LinkBudgetConfig:
    f_c: float = 30.0  # GHz
    p_tx: float = 14.0
    g_tx: float = 0.0
    g_rx: float = 23.0  # UABS in-beam receive gain
    g_rx_mbs: float = 15.0
    p_noise: float = -106.0
    sigma_los: float = 4.0
    sigma_nlos: float = 6.0
    sinr_th: float = 0.0
    los: PathLossCoeffs = LOS_DEFAULT
    nlos: PathLossCoeffs = NLOS_DEFAULT
    h_ut: float = 1.5
    los_d1: float = 18.0
    los_d2: float = 63.0
    aerial_los_floor: float = 0.9
    # UABS -> MBS wireless backhaul
    p_tx_backhaul: float = 30.0
    g_backhaul: float = 25.0  # per side

    def __post_init__(self):
        if self.sigma_los < 0 or self.sigma_nlos < 0:
            raise ValueError("shadowing deviations must be non-negative")
        if not self.f_c > 0:
            raise ValueError("carrier frequency must be positive")


def beam_gain(fov: float, n_beam: int) -> float:
    """Receive gain (dB) of one beam when the field of view is split in ``n_beam``."""
    if not 0 < fov <= 180:
        raise ValueError(f"field of view must be in (0, 180] degrees, got {fov}")
    if n_beam < 1:
        raise ValueError("n_beam must be >= 1")
    solid = 2 * math.pi * (1 - math.cos(math.radians(fov) / 2))
    beam = solid / n_beam
    return 10 * math.log10(41000 / (beam * 360 / (2 * math.pi)) ** 2)


def path_loss(d3d, is_los, cfg: LinkBudgetConfig):
    """Deterministic UMa-style path loss in dB.

    NLoS loss is floored at the LoS value for the same distance, as in the
    3GPP UMa model, so NLoS never beats LoS.
    """
    d = np.asarray(d3d, dtype=float)
    if (d <= 0).any():
        raise ValueError("degenerate geometry: zero link distance")
    logd = np.log10(d)
    logf = math.log10(cfg.f_c)
    dh = cfg.h_ut - 1.5

    def _pl(c: PathLossCoeffs):
        return c.intercept + c.distance_slope * logd + c.frequency_slope * logf + c.height_slope * dh

    pl_los = _pl(cfg.los)
    pl = np.where(is_los, pl_los, np.maximum(pl_los, _pl(cfg.nlos)))
    return float(pl) if pl.ndim == 0 else pl


def los_probability(d2d, cfg: LinkBudgetConfig, aerial: bool = False):
    d = np.maximum(np.asarray(d2d, dtype=float), 1e-9)
    e = np.exp(-d / cfg.los_d2)
    p = np.minimum(cfg.los_d1 / d, 1.0) * (1 - e) + e
    if aerial:
        p = np.maximum(p, cfg.aerial_los_floor)
    return p


def db2lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def sinr(p_rx: float, interferer_rx=(), p_noise: float = -106.0) -> float:
    """SINR in dB from received powers in dBm, summed in the linear domain."""
    interf = float(db2lin(np.asarray(list(interferer_rx), dtype=float)).sum()) if len(interferer_rx) else 0.0
    return float(lin2db(db2lin(p_rx) / (db2lin(p_noise) + interf)))


@dataclass(frozen=True)
class BeamGeometry:
    fov: float = 100.0
    altitude: float = 100.0
    n_beam: int = N_BEAM_GRID

    def __post_init__(self):
        if self.n_beam != N_BEAM_GRID:
            raise ValueError("the beam footprint is a 3x3 grid: n_beam must be 9")

    @property
    def footprint_side(self) -> float:
        return 2 * self.altitude * math.tan(math.radians(self.fov) / 2)

    @property
    def beam_radius(self) -> float:
        return self.footprint_side / 6

    @property
    def beam_centers(self) -> np.ndarray:
        """Offsets (9, 2) from the ground projection; beam j = 3*row + col, rows bottom to top."""
        s = self.footprint_side / 3
        return np.array([(dx * s, dy * s) for dy in (-1, 0, 1) for dx in (-1, 0, 1)])

    def beam_of(self, uabs_xy: np.ndarray, users_xy: np.ndarray) -> np.ndarray:
        """Beam index claiming each user, or -1. Shape (G, U)."""
        uabs_xy = np.asarray(uabs_xy, dtype=float).reshape(-1, 2)
        users_xy = np.asarray(users_xy, dtype=float).reshape(-1, 2)
        centers = uabs_xy[None, :, None, :] + self.beam_centers[None, None, :, :]
        d2 = ((users_xy[:, None, None, :] - centers) ** 2).sum(-1)  # (G, U, 9)
        inside = d2 <= self.beam_radius ** 2
        j = np.argmax(inside, axis=-1)
        return np.where(inside.any(-1), j, -1)


@dataclass
class CoverageMatrix:
    c_gm: np.ndarray      # (G, M) bool
    c_gu: np.ndarray      # (G, U) bool
    k: np.ndarray         # (G, U, n_beam) bool
    I_gmu: np.ndarray     # (G, M, U) bool, g in range of both m and u
    I_gum: np.ndarray     # (G, U, M) bool
    r_gm: np.ndarray      # (G, M) bits/s per RU
    r_gu: np.ndarray      # (G, U)
    r_um: np.ndarray      # (U, M) backhaul
    rI_gmu: np.ndarray    # (G, M, U) g->m under interference from users of u
    rI_gum: np.ndarray    # (G, U, M) g->u under interference from users of m
    sinr_gm: np.ndarray = field(default=None, repr=False)
    sinr_gu: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        """(G, U, M)."""
        return self.c_gu.shape[0], self.c_gu.shape[1], self.c_gm.shape[1]

    @property
    def n_beam(self) -> int:
        return self.k.shape[2]

    @classmethod
    def empty(cls, n_users: int, n_uabs: int, n_mbs: int = 1, n_beam: int = N_BEAM_GRID) -> "CoverageMatrix":
        G, U, M = n_users, n_uabs, n_mbs
        z = np.zeros
        return cls(z((G, M), bool), z((G, U), bool), z((G, U, n_beam), bool), z((G, M, U), bool),
                   z((G, U, M), bool), z((G, M)), z((G, U)), z((U, M)), z((G, M, U)), z((G, U, M)))


def _worst_interference(p_at_rx: np.ndarray, eligible: np.ndarray) -> np.ndarray:
    """Strongest eligible interferer power (mW) at one receiver, excluding each user itself.

    p_at_rx: (G,) linear received powers at the victim receiver.
    eligible: (G,) which users could transmit to the interfering BS.
    Returns (G,) worst single-interferer power seen by each user's link.
    """
    G = len(p_at_rx)
    vals = np.where(eligible, p_at_rx, 0.0)
    if G == 0:
        return vals
    order = np.argsort(-vals, kind="stable")
    best, second = vals[order[0]], (vals[order[1]] if G > 1 else 0.0)
    out = np.full(G, best)
    out[order[0]] = second
    return out


def compute_coverage(uabs_positions, user_positions, area, cfg: LinkBudgetConfig, geom: BeamGeometry,
                     seed: int, grid: ResourceGrid | None = None) -> CoverageMatrix:
    """Coverage, interference topology and per-RU rates for one timestep.

    LoS states and log-normal shadowing are drawn independently per link
    from ``seed``. Covered means SNR >= ``sinr_th`` (and, for a UABS, the
    user sits inside one of its beams). Interference-limited rates use the
    single strongest user that could be scheduled by the interfering BS.
    """
    grid = grid or ResourceGrid()
    uabs = np.asarray(uabs_positions, dtype=float).reshape(-1, 2)
    users = np.asarray(user_positions, dtype=float).reshape(-1, 2)
    mbs = np.array([area.mbs_position], dtype=float)
    G, U, M = len(users), len(uabs), len(mbs)
    rng = np.random.default_rng(seed)
    u_los = rng.random((G, M))
    u_los_a = rng.random((G, U))
    sh_m = rng.standard_normal((G, M))
    sh_u = rng.standard_normal((G, U))
    sh_bh = rng.standard_normal((U, M))

    noise = db2lin(cfg.p_noise)

    # user -> MBS
    d2_gm = np.linalg.norm(users[:, None, :] - mbs[None], axis=-1)
    d3_gm = np.sqrt(d2_gm ** 2 + (area.mbs_height - cfg.h_ut) ** 2)
    los_gm = u_los < los_probability(d2_gm, cfg)
    pl_gm = path_loss(d3_gm, los_gm, cfg) + np.where(los_gm, cfg.sigma_los, cfg.sigma_nlos) * sh_m
    p_gm = db2lin(cfg.p_tx + cfg.g_tx + cfg.g_rx_mbs - pl_gm)  # (G, M)

    # user -> UABS, gain only inside a beam
    beam = geom.beam_of(uabs, users)  # (G, U)
    in_beam = beam >= 0
    d2_gu = np.linalg.norm(users[:, None, :] - uabs[None], axis=-1)
    d3_gu = np.sqrt(d2_gu ** 2 + (geom.altitude - cfg.h_ut) ** 2)
    los_gu = u_los_a < los_probability(d2_gu, cfg, aerial=True)
    pl_gu = path_loss(d3_gu, los_gu, cfg) + np.where(los_gu, cfg.sigma_los, cfg.sigma_nlos) * sh_u
    g_rx_u = np.where(in_beam, cfg.g_rx, 0.0)
    p_gu = db2lin(cfg.p_tx + cfg.g_tx + g_rx_u - pl_gu)  # (G, U)

    snr_gm = p_gm / noise
    snr_gu = p_gu / noise
    th = db2lin(cfg.sinr_th)
    c_gm = snr_gm >= th
    c_gu = in_beam & (snr_gu >= th)
    k = np.zeros((G, U, geom.n_beam), dtype=bool)
    gi, ui = np.nonzero(c_gu)
    k[gi, ui, beam[gi, ui]] = True

    I_gmu = c_gm[:, :, None] & c_gu[:, None, :]
    I_gum = np.transpose(I_gmu, (0, 2, 1)).copy()

    r_gm = np.where(c_gm, grid.rate_per_ru(snr_gm), 0.0)
    r_gu = np.where(c_gu, grid.rate_per_ru(snr_gu), 0.0)

    rI_gmu = np.zeros((G, M, U))
    rI_gum = np.zeros((G, U, M))
    for m in range(M):
        for u in range(U):
            # victim m, interferers: users of u that m can hear
            p_int = _worst_interference(p_gm[:, m], I_gum[:, u, m])
            rI_gmu[:, m, u] = np.where(c_gm[:, m], grid.rate_per_ru(p_gm[:, m] / (noise + p_int)), 0.0)
            # victim u, interferers: users of m that u can hear
            p_int = _worst_interference(p_gu[:, u], I_gmu[:, m, u])
            rI_gum[:, u, m] = np.where(c_gu[:, u], grid.rate_per_ru(p_gu[:, u] / (noise + p_int)), 0.0)

    # backhaul: aerial LoS link with shadowing
    d2_um = np.linalg.norm(uabs[:, None, :] - mbs[None], axis=-1)
    d3_um = np.sqrt(d2_um ** 2 + (geom.altitude - area.mbs_height) ** 2)
    pl_um = path_loss(np.maximum(d3_um, 1e-3), True, cfg) + cfg.sigma_los * sh_bh
    snr_um = db2lin(cfg.p_tx_backhaul + 2 * cfg.g_backhaul - pl_um) / noise
    r_um = np.where(snr_um >= th, grid.rate_per_ru(snr_um), 0.0).reshape(U, M)

    return CoverageMatrix(c_gm, c_gu, k, I_gmu, I_gum, r_gm, r_gu, r_um, rI_gmu, rI_gum,
                          sinr_gm=lin2db(np.maximum(snr_gm, 1e-30)), sinr_gu=lin2db(np.maximum(snr_gu, 1e-30)))
