"""Network drops and multipath geometry for a 2D cell-free mmWave layout.

A drop places APs, UEs and point scatterers uniformly in a square area and
gives every ULA a random boresight. The channel geometry then lists, for each
(UE, AP) link, the direct path (when unblocked) and every single-bounce
scatterer path whose two legs are both in line of sight.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class PropagationModel:
    """UMi street-canyon LoS probability and close-in path loss constants."""

    los_near: float = 20.0
    los_decay: float = 39.0
    pl_ref_db: float = 32.4
    exponent_los: float = 2.1
    exponent_nlos: float = 3.19
    shadowing_los_db: float = 3.6
    shadowing_nlos_db: float = 4.4
    shadowing: bool = True

    def los_probability(self, distance_2d):
        d = np.asarray(distance_2d, dtype=float)
        with np.errstate(divide="ignore"):
            near = np.minimum(self.los_near / d, 1.0)
        decay = np.exp(-d / self.los_decay)
        return near * (1.0 - decay) + decay

    def path_loss_db(self, distance_3d, is_los, carrier_freq, shadow=0.0):
        d = np.asarray(distance_3d, dtype=float)
        if np.any(d <= 0):
            raise ValueError("path loss needs a strictly positive distance")
        n = np.where(is_los, self.exponent_los, self.exponent_nlos)
        f_ghz = carrier_freq / 1e9
        return self.pl_ref_db + 20.0 * np.log10(f_ghz) + 10.0 * n * np.log10(d) + shadow

    def path_loss_gain(self, distance_3d, is_los, carrier_freq, rng=None):
        is_los = np.asarray(is_los, dtype=bool)
        shadow = 0.0
        if self.shadowing:
            if rng is None:
                raise ValueError("shadowing enabled but no rng given")
            sigma = np.where(is_los, self.shadowing_los_db, self.shadowing_nlos_db)
            shape = np.broadcast_shapes(np.shape(distance_3d), np.shape(sigma))
            shadow = sigma * rng.standard_normal(shape)
        pl = self.path_loss_db(distance_3d, is_los, carrier_freq, shadow)
        return 10.0 ** (-pl / 10.0)


@dataclass(frozen=True)
class SimParams:
    """Every knob of one simulated system, defaulting to the 28 GHz setup."""

    area_side: float = 400.0
    M: int = 50
    K: int = 15
    N_s: int = 300
    N_AP: int = 32
    N_UE: int = 16
    n_AP: int = 8
    n_UE: int = 4
    nu_AP: int = 8
    nu_UE: int = 4
    carrier_freq: float = 28e9
    bandwidth: float = 500e6
    subcarrier_spacing: float = 480e3
    N_C: int = 1024
    cp_fraction: float = 0.07
    S: int = 14
    T_max: int = 20
    Q: int = 16
    P_BA: float = 10 ** 0.7
    noise_psd: float = -174.0
    noise_figure: float = 9.0
    ap_height: float = 10.0
    ue_height: float = 1.65
    scatterer_height: float = 1.65
    N_D: int = 1
    array_gain: bool = True
    seed: int = 0
    propagation: PropagationModel = field(default_factory=PropagationModel)

    def __post_init__(self):
        self.validate()

    def validate(self):
        counts = ("M", "K", "N_AP", "N_UE", "n_AP", "n_UE", "nu_AP", "nu_UE",
                  "N_C", "S", "T_max", "Q", "N_D")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.N_s < 0:
            raise ValueError("N_s must be non-negative")
        if not self.n_AP < self.N_AP:
            raise ValueError("need n_AP < N_AP")
        if not self.n_UE < self.N_UE:
            raise ValueError("need n_UE < N_UE")
        if self.nu_AP > self.N_AP or self.nu_UE > self.N_UE:
            raise ValueError("active fingers cannot exceed antenna count")
        # occupied subcarriers must fit the channel; 1024 x 480 kHz sits inside 500 MHz
        if self.N_C * self.subcarrier_spacing > self.bandwidth * (1 + 1e-12):
            raise ValueError("N_C * subcarrier_spacing exceeds the bandwidth")
        if self.P_BA < 0:
            raise ValueError("P_BA must be non-negative")

    @property
    def cp_duration(self):
        return self.cp_fraction / self.subcarrier_spacing

    @property
    def symbol_duration(self):
        """OFDM symbol length t0 including the cyclic prefix."""
        return 1.0 / self.subcarrier_spacing + self.cp_duration

    @property
    def beta(self):
        return self.P_BA / self.N_C

    @property
    def D(self):
        from .patterns import num_patterns

        return num_patterns(self.N_C, self.Q, self.n_AP)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


@dataclass
class ScenarioDrop:
    ap_positions: np.ndarray  # (M, 2)
    ue_positions: np.ndarray  # (K, 2)
    ap_orientations: np.ndarray  # (M,)
    ue_orientations: np.ndarray  # (K,)
    scatterer_positions: np.ndarray  # (N_s, 2)
    ap_height: float = 10.0
    ue_height: float = 1.65
    scatterer_height: float = 1.65

    @property
    def M(self):
        return len(self.ap_positions)

    @property
    def K(self):
        return len(self.ue_positions)

    def to_dict(self):
        return {
            "ap_positions": self.ap_positions.tolist(),
            "ue_positions": self.ue_positions.tolist(),
            "ap_orientations": self.ap_orientations.tolist(),
            "ue_orientations": self.ue_orientations.tolist(),
            "scatterer_positions": self.scatterer_positions.tolist(),
            "ap_height": self.ap_height,
            "ue_height": self.ue_height,
            "scatterer_height": self.scatterer_height,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            ap_positions=np.asarray(data["ap_positions"], dtype=float).reshape(-1, 2),
            ue_positions=np.asarray(data["ue_positions"], dtype=float).reshape(-1, 2),
            ap_orientations=np.asarray(data["ap_orientations"], dtype=float),
            ue_orientations=np.asarray(data["ue_orientations"], dtype=float),
            scatterer_positions=np.asarray(data["scatterer_positions"], dtype=float).reshape(-1, 2),
            ap_height=float(data["ap_height"]),
            ue_height=float(data["ue_height"]),
            scatterer_height=float(data["scatterer_height"]),
        )


@dataclass(frozen=True)
class ChannelPath:
    gain_var: float
    aoa: float
    aod: float
    delay: float


@dataclass
class LinkPaths:
    """Paths of one (UE, AP) link stored column-wise; index 0 is the direct path if present."""

    gain_var: np.ndarray
    aoa: np.ndarray
    aod: np.ndarray
    delay: np.ndarray
    has_direct: bool = False

    def __len__(self):
        return len(self.gain_var)

    @classmethod
    def empty(cls):
        z = np.zeros(0)
        return cls(z, z.copy(), z.copy(), z.copy(), False)

    @classmethod
    def from_paths(cls, paths, has_direct=False):
        paths = list(paths)
        if not paths:
            return cls.empty()
        cols = np.array([[p.gain_var, p.aoa, p.aod, p.delay] for p in paths], dtype=float)
        return cls(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], has_direct)

    def paths(self):
        return [ChannelPath(float(g), float(a), float(b), float(t))
                for g, a, b, t in zip(self.gain_var, self.aoa, self.aod, self.delay)]

    def to_dict(self):
        return {
            "gain_var": self.gain_var.tolist(),
            "aoa": self.aoa.tolist(),
            "aod": self.aod.tolist(),
            "delay": self.delay.tolist(),
            "has_direct": self.has_direct,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(*(np.asarray(data[key], dtype=float) for key in ("gain_var", "aoa", "aod", "delay")),
                   has_direct=bool(data.get("has_direct", False)))


@dataclass
class ChannelGeometry:
    links: list  # links[k][m] -> LinkPaths
    truncated: int = 0

    @property
    def K(self):
        return len(self.links)

    @property
    def M(self):
        return len(self.links[0]) if self.links else 0

    def link(self, k, m):
        return self.links[k][m]

    def path_counts(self):
        return np.array([[len(lp) for lp in row] for row in self.links], dtype=int)

    def to_dict(self):
        return {"truncated": self.truncated,
                "links": [[lp.to_dict() for lp in row] for row in self.links]}

    @classmethod
    def from_dict(cls, data):
        links = [[LinkPaths.from_dict(lp) for lp in row] for row in data["links"]]
        return cls(links, int(data.get("truncated", 0)))


def wrap_angle(angle):
    """Wrap to (-pi, pi]."""
    wrapped = np.mod(np.asarray(angle) + np.pi, 2 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def los_probability(distance_2d, model=None):
    return (model or PropagationModel()).los_probability(distance_2d)


def path_loss_gain(distance_3d, is_los, rng=None, carrier_freq=28e9, model=None):
    return (model or PropagationModel()).path_loss_gain(distance_3d, is_los, carrier_freq, rng)


def generate_drop(params, rng):
    side = params.area_side
    return ScenarioDrop(
        ap_positions=rng.uniform(0.0, side, size=(params.M, 2)),
        ue_positions=rng.uniform(0.0, side, size=(params.K, 2)),
        ap_orientations=rng.uniform(0.0, 2 * np.pi, size=params.M),
        ue_orientations=rng.uniform(0.0, 2 * np.pi, size=params.K),
        scatterer_positions=rng.uniform(0.0, side, size=(params.N_s, 2)),
        ap_height=params.ap_height,
        ue_height=params.ue_height,
        scatterer_height=params.scatterer_height,
    )


def _bearing(src, dst):
    diff = dst - src
    return np.arctan2(diff[..., 1], diff[..., 0])


def _dist(src, dst, dh):
    d2 = np.linalg.norm(dst - src, axis=-1)
    return d2, np.sqrt(d2 ** 2 + dh ** 2)


def build_channel_geometry(drop, params, rng, force_los=False):
    """Sample blockage, gains, angles and delays for every (UE, AP) link.

    ``force_los`` makes every direct link and every scatterer leg visible,
    which is only useful for tests.
    """
    model = params.propagation
    ap, ue, sc = drop.ap_positions, drop.ue_positions, drop.scatterer_positions
    K, M, Ns = len(ue), len(ap), len(sc)
    h_ap, h_ue, h_sc = drop.ap_height, drop.ue_height, drop.scatterer_height

    d2_ue_ap, d3_ue_ap = _dist(ue[:, None, :], ap[None, :, :], h_ap - h_ue)
    d2_ap_sc, d3_ap_sc = _dist(ap[:, None, :], sc[None, :, :], h_ap - h_sc)
    d2_ue_sc, d3_ue_sc = _dist(ue[:, None, :], sc[None, :, :], h_ue - h_sc)

    # blockage is sampled once per drop, in a fixed order so the rng stream is stable
    if force_los:
        direct = np.ones((K, M), dtype=bool)
        ap_sc = np.ones((M, Ns), dtype=bool)
        ue_sc = np.ones((K, Ns), dtype=bool)
    else:
        direct = rng.random((K, M)) < model.los_probability(d2_ue_ap)
        ap_sc = rng.random((M, Ns)) < model.los_probability(d2_ap_sc)
        ue_sc = rng.random((K, Ns)) < model.los_probability(d2_ue_sc)

    aod_direct = wrap_angle(_bearing(ap[None, :, :], ue[:, None, :]) - drop.ap_orientations[None, :])
    aoa_direct = wrap_angle(_bearing(ue[:, None, :], ap[None, :, :]) - drop.ue_orientations[:, None])
    aod_sc = wrap_angle(_bearing(ap[:, None, :], sc[None, :, :]) - drop.ap_orientations[:, None])  # (M, Ns)
    aoa_sc = wrap_angle(_bearing(ue[:, None, :], sc[None, :, :]) - drop.ue_orientations[:, None])  # (K, Ns)

    half = np.pi / 2
    tau_cp = params.cp_duration
    truncated = 0
    links = []
    for k in range(K):
        row = []
        for m in range(M):
            cand = np.flatnonzero(ap_sc[m] & ue_sc[k])
            dist = np.concatenate(([d3_ue_ap[k, m]], d3_ap_sc[m, cand] + d3_ue_sc[k, cand]))
            aod = np.concatenate(([aod_direct[k, m]], aod_sc[m, cand]))
            aoa = np.concatenate(([aoa_direct[k, m]], aoa_sc[k, cand]))
            is_los = np.zeros(len(dist), dtype=bool)
            is_los[0] = True
            exists = np.ones(len(dist), dtype=bool)
            exists[0] = direct[k, m]
            # gains drawn for every candidate so the rng stream does not depend on angle rejection
            gain = model.path_loss_gain(dist, is_los, params.carrier_freq, rng)
            keep = exists & (np.abs(aod) <= half) & (np.abs(aoa) <= half)
            if not keep.any():
                row.append(LinkPaths.empty())
                continue
            delay = dist / SPEED_OF_LIGHT
            excess = delay - delay[keep].min()
            late = keep & (excess > tau_cp)
            truncated += int(late.sum())
            keep &= ~late
            row.append(LinkPaths(gain[keep], aoa[keep], aod[keep], delay[keep], bool(keep[0])))
        links.append(row)
    if truncated:
        logger.debug("dropped %d paths beyond the cyclic prefix", truncated)
    return ChannelGeometry(links, truncated)


def build_single_path_geometry(drop, params, rng, on_grid=True):
    """One path per link with random grid-aligned angles (a separable test channel).

    The gain follows the LoS path loss of the AP-UE distance; the delay is the
    3D distance over the speed of light.
    """
    from .beamspace import grid_angles

    K, M = drop.K, drop.M
    _, d3 = _dist(drop.ue_positions[:, None, :], drop.ap_positions[None, :, :],
                  drop.ap_height - drop.ue_height)
    gain = params.propagation.path_loss_gain(d3, np.ones_like(d3, dtype=bool), params.carrier_freq, rng)
    if on_grid:
        aod = grid_angles(params.N_AP)[rng.integers(0, params.N_AP, size=(K, M))]
        aoa = grid_angles(params.N_UE)[rng.integers(0, params.N_UE, size=(K, M))]
    else:
        aod = rng.uniform(-np.pi / 2, np.pi / 2, size=(K, M))
        aoa = rng.uniform(-np.pi / 2, np.pi / 2, size=(K, M))
    links = [[LinkPaths(gain[k, m:m + 1], aoa[k, m:m + 1], aod[k, m:m + 1],
                        d3[k, m:m + 1] / SPEED_OF_LIGHT, True)
              for m in range(M)] for k in range(K)]
    return ChannelGeometry(links, 0)
