"""System configuration and the dimensions derived from it."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BadDimension, BadFineFactor, TooManyUsersPerRoot


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the uplink massive MIMO-OFDM pilot model.

    The defaults are the desk-scale setup used throughout the test suite:
    a 4x4 UPA, 24 pilot subcarriers and fine factor 2 on every axis.
    """

    M_rz: int = 4            # vertical antennas
    M_rx: int = 4            # horizontal antennas
    M_c: int = 512           # subcarriers
    M_p: int = 24            # pilot subcarriers
    M_g: int = 32            # cyclic prefix, samples
    delta_f: float = 30e3    # subcarrier spacing, Hz
    N_az: int = 2
    N_ax: int = 2
    N_ap: int = 2
    Q: int = 1               # ZC roots
    P_per_root: tuple = (12,)
    sigma_z2: float = 1e-3
    T: int = 10              # pilot symbols
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "P_per_root", tuple(int(p) for p in self.P_per_root))

    @property
    def T_s(self) -> float:
        """Sampling interval implied by the subcarrier spacing."""
        return 1.0 / (self.M_c * self.delta_f)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["P_per_root"] = list(self.P_per_root)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


def load_config(path, **overrides) -> SystemConfig:
    """Read a JSON config file; keyword overrides (e.g. from CLI flags) win."""
    with open(Path(path)) as fh:
        d = json.load(fh)
    d.update({k: v for k, v in overrides.items() if v is not None})
    return SystemConfig.from_dict(d)


@dataclass(frozen=True)
class DerivedDims:
    M_r: int
    N_z: int
    N_x: int
    N_r: int
    N_p: int
    M_f: int
    N_f: int
    K: int
    users_per_root_cap: int
    Q: int
    P_per_root: tuple = field(default=())

    @property
    def stacked_width(self) -> int:
        return self.Q * self.N_p


def derive_dims(cfg: SystemConfig) -> DerivedDims:
    M_f = math.ceil(cfg.M_p * cfg.M_g / cfg.M_c)
    N_z = cfg.N_az * cfg.M_rz
    N_x = cfg.N_ax * cfg.M_rx
    return DerivedDims(
        M_r=cfg.M_rz * cfg.M_rx,
        N_z=N_z,
        N_x=N_x,
        N_r=N_z * N_x,
        N_p=cfg.N_ap * cfg.M_p,
        M_f=M_f,
        N_f=cfg.N_ap * M_f,
        K=sum(cfg.P_per_root),
        users_per_root_cap=cfg.M_p // M_f,
        Q=cfg.Q,
        P_per_root=tuple(cfg.P_per_root),
    )


def _is_posint(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool) and v >= 1


def validate(cfg: SystemConfig) -> DerivedDims:
    """Check every config invariant and return the derived dimensions.

    Raises
    ------
    BadFineFactor
        A fine factor is not a positive integer.
    BadDimension
        A count is nonpositive, or the OFDM numerology is inconsistent.
    TooManyUsersPerRoot
        Some root carries more users than fit without delay-block wrap.
    """
    for name in ("N_az", "N_ax", "N_ap"):
        if not _is_posint(getattr(cfg, name)):
            raise BadFineFactor(f"{name}={getattr(cfg, name)!r} must be an integer >= 1")
    for name in ("M_rz", "M_rx", "M_c", "M_p", "M_g", "Q", "T"):
        if not _is_posint(getattr(cfg, name)):
            raise BadDimension(f"{name}={getattr(cfg, name)!r} must be an integer >= 1")
    if cfg.sigma_z2 < 0:
        raise BadDimension("sigma_z2 must be >= 0")
    if cfg.delta_f <= 0:
        raise BadDimension("delta_f must be > 0")
    if cfg.M_p > cfg.M_c:
        raise BadDimension("M_p must not exceed M_c")
    if cfg.M_g >= cfg.M_c:
        raise BadDimension("M_g must be smaller than M_c")
    if len(cfg.P_per_root) != cfg.Q:
        raise BadDimension(f"P_per_root has {len(cfg.P_per_root)} entries, expected Q={cfg.Q}")
    if any(p < 1 for p in cfg.P_per_root):
        raise BadDimension("every root needs at least one user")

    dims = derive_dims(cfg)
    for q, p in enumerate(cfg.P_per_root):
        if p > dims.users_per_root_cap:
            raise TooManyUsersPerRoot(
                f"root {q} has {p} users, at most {dims.users_per_root_cap} fit"
            )
    return dims


# Full-scale numerology (OFDM table), used for documentation and derivation checks.
FULL_SCALE_CONFIG = SystemConfig(
    M_rz=8, M_rx=16, M_c=2048, M_p=120, M_g=144, delta_f=30e3,
    N_az=2, N_ax=2, N_ap=2, Q=1, P_per_root=(12,), sigma_z2=1e-3, T=80,
)
