"""Parameter records for the satellite-terrestrial link model."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

SPEED_OF_LIGHT = 2.99792458e8

# Common link-level settings of the evaluation setup.
DEFAULT_B0 = 0.851
DEFAULT_M = 2.91
DEFAULT_OMEGA = 0.278
DEFAULT_THETA_MIN_DEG = 10.0
DEFAULT_FC_HZ = 2e9
DEFAULT_NOISE_DBM_HZ = -174.0
DEFAULT_RE_M = 6371e3
DEFAULT_RS_M = 6871e3
DEFAULT_PT_SAT_DBW = 30.0
DEFAULT_PT_GROUND_DBM = 33.0
DEFAULT_GT_GROUND_DBI = 38.5
DEFAULT_GT_SAT_DBI = 38.0
DEFAULT_GR_SAT_DBI = 37.8
DEFAULT_GR_GROUND_DBI = 39.7
DEFAULT_GBAR = 0.1
DEFAULT_LAMBDA_S = 6e-13
DEFAULT_LAMBDA_G = 1.6e-13


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


class Direction(str, Enum):
    DOWNLINK = "downlink"
    UPLINK = "uplink"


@dataclass(frozen=True)
class ChannelParams:
    """Gamma approximation of the shadowed-Rician power gain.

    ``alpha_raw``/``beta_raw`` come straight from the moment formula; the
    integer shape ``alpha`` and mean-preserving scale ``beta`` are what every
    downstream computation (analytic and sampled) uses.
    """

    b0: float
    m: float
    omega: float
    alpha_raw: float
    beta_raw: float
    alpha: int
    beta: float

    @property
    def mean(self) -> float:
        return self.alpha * self.beta

    @classmethod
    def from_shape(cls, alpha: int, mean: float) -> "ChannelParams":
        """Channel with a chosen integer shape, bypassing the moment formula."""
        if alpha < 1:
            raise ValueError("alpha must be >= 1")
        beta = mean / alpha
        return cls(b0=float("nan"), m=float("nan"), omega=float("nan"),
                   alpha_raw=float(alpha), beta_raw=beta, alpha=int(alpha), beta=beta)


def gamma_params(b0: float = DEFAULT_B0, m: float = DEFAULT_M,
                 omega: float = DEFAULT_OMEGA) -> ChannelParams:
    if b0 <= 0 or m <= 0 or omega < 0:
        raise ValueError("b0 and m must be positive, omega non-negative")
    mean = 2.0 * b0 + omega
    alpha_raw = m * (2.0 * b0 * omega) ** 2 / (4.0 * m * b0**2 + 4.0 * m * b0**2 * omega + omega**2)
    beta_raw = mean / alpha_raw if alpha_raw > 0 else math.inf
    alpha = max(1, int(round(alpha_raw)))
    return ChannelParams(b0=b0, m=m, omega=omega, alpha_raw=alpha_raw,
                         beta_raw=beta_raw, alpha=alpha, beta=mean / alpha)


@dataclass(frozen=True)
class GeometryParams:
    """Two concentric spheres, transmitter densities and visibility limits.

    Distances are meters and densities points per square meter. For the
    downlink the receiver is a ground node looking up at satellites; for the
    uplink the receiver is a satellite looking down at ground nodes.
    """

    re: float = DEFAULT_RE_M
    rs: float = DEFAULT_RS_M
    lambda_s: float = DEFAULT_LAMBDA_S
    lambda_g: float = DEFAULT_LAMBDA_G
    theta_min: float = math.radians(DEFAULT_THETA_MIN_DEG)
    phi_max: float | None = None
    direction: Direction = Direction.DOWNLINK

    def __post_init__(self):
        if not (self.rs > self.re > 0):
            raise ValueError("need rs > re > 0")
        if self.lambda_s < 0 or self.lambda_g < 0:
            raise ValueError("densities must be non-negative")
        if self.phi_max is None:
            object.__setattr__(self, "phi_max", math.acos(self.re / self.rs))
        object.__setattr__(self, "direction", Direction(self.direction))

    def with_direction(self, direction: Direction | str) -> "GeometryParams":
        return replace(self, direction=Direction(direction))

    def with_altitude(self, altitude_m: float) -> "GeometryParams":
        """Same setup with satellites at a new altitude (horizon zenith angle rescaled)."""
        rs = self.re + altitude_m
        return replace(self, rs=rs, phi_max=math.acos(self.re / rs))

    @property
    def d_min(self) -> float:
        return self.rs - self.re

    @property
    def d_max(self) -> float:
        if self.direction is Direction.DOWNLINK:
            s = self.re * math.sin(self.theta_min)
            return math.sqrt(s * s + self.rs**2 - self.re**2) - s
        return math.sqrt(self.re**2 + self.rs**2 - 2.0 * self.rs * self.re * math.cos(self.phi_max))

    @property
    def density(self) -> float:
        """Density of the transmitting process seen by the receiver."""
        return self.lambda_s if self.direction is Direction.DOWNLINK else self.lambda_g

    @property
    def kappa(self) -> float:
        """Ratio transmitter-sphere radius over receiver-sphere radius."""
        return self.rs / self.re if self.direction is Direction.DOWNLINK else self.re / self.rs

    @property
    def tx_radius(self) -> float:
        return self.rs if self.direction is Direction.DOWNLINK else self.re

    @property
    def rx_radius(self) -> float:
        return self.re if self.direction is Direction.DOWNLINK else self.rs

    def cap_area(self, d: float | None = None) -> float:
        """Area of the transmitter-sphere cap within distance ``d`` of the receiver."""
        d = self.d_max if d is None else d
        return math.pi * self.kappa * (d * d - self.d_min**2)

    def mean_visible(self) -> float:
        return self.density * self.cap_area()


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power, antenna gains and noise of one link direction (dB inputs)."""

    pt_dbw: float
    gt_dbi: float
    gr_dbi: float
    gbar: float = DEFAULT_GBAR
    fc_hz: float = DEFAULT_FC_HZ
    noise_dbm_hz: float = DEFAULT_NOISE_DBM_HZ
    bandwidth_hz: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.gbar <= 1.0:
            raise ValueError("interference mitigation factor must lie in [0, 1]")

    @property
    def effective_gain(self) -> float:
        lam = SPEED_OF_LIGHT / (4.0 * math.pi * self.fc_hz)
        return db_to_linear(self.gt_dbi) * db_to_linear(self.gr_dbi) * lam * lam

    @property
    def noise_watt(self) -> float:
        return dbm_to_watt(self.noise_dbm_hz) * self.bandwidth_hz

    @property
    def normalized_noise(self) -> float:
        """Noise over transmit power times effective gain, in m^-2."""
        return self.noise_watt / (db_to_linear(self.pt_dbw) * self.effective_gain)


def downlink_budget(**overrides) -> LinkBudget:
    kw = dict(pt_dbw=DEFAULT_PT_SAT_DBW, gt_dbi=DEFAULT_GT_SAT_DBI, gr_dbi=DEFAULT_GR_GROUND_DBI)
    kw.update(overrides)
    return LinkBudget(**kw)


def uplink_budget(**overrides) -> LinkBudget:
    kw = dict(pt_dbw=DEFAULT_PT_GROUND_DBM - 30.0, gt_dbi=DEFAULT_GT_GROUND_DBI,
              gr_dbi=DEFAULT_GR_SAT_DBI)
    kw.update(overrides)
    return LinkBudget(**kw)
