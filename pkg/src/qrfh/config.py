"""Simulation configuration: defaults, flat-file parsing, derived objects.

Config files are flat ``key = value`` lines (``#`` comments allowed); every
key must name a SimConfig field, unknown keys are rejected.  The default
profile is a desk-scale setup small enough for CI; ``full_scale()`` swaps in
the wideband 256-antenna system the compressor is designed for.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .channel import distinct_sample_delays, named_profile
from .errors import ConfigError
from .ofdm import RB_SIZE, OfdmGrid, UserAllocation

__all__ = ["SimConfig", "parse_config", "full_scale", "allocate_rbs_paper"]

COMPRESSORS = ("qr", "svd-baseline", "none")


def allocate_rbs_paper(n_users: int) -> tuple:
    """Reference unequal RB allocations (increasing-SNR user order)."""
    if n_users == 8:
        return tuple(range(26, 41, 2))
    if n_users == 12:
        return tuple(range(10, 33, 2))
    raise ConfigError(f"reference allocations exist for 8 or 12 users, not {n_users}")


@dataclass(frozen=True)
class SimConfig:
    """Everything a Monte-Carlo sweep needs; all fields overridable per key."""

    modulation_order: int = 64
    n_r: int = 64
    n_fft: int = 512
    cp_len: int = 36
    n_active: int = 432
    center_offset: int = 0
    subcarrier_spacing_hz: float = 30e3
    channel_profile: str = "tdla30-desk"
    rho: float = 0.7
    users: int = 4
    rb_allocation: tuple = (8, 8, 8, 8)
    l_u: object = "rank"          # positive int, or "rank"
    quantizer_bits: int = 15      # per real/imag component
    compressor: str = "qr"
    snr_db: tuple = (-4.0, -2.0, 0.0, 2.0, 4.0)
    snr_offset_db: float = 1.0    # per-user power step
    trials: int = 100
    seed: int = 12345

    def __post_init__(self):
        if self.compressor not in COMPRESSORS:
            raise ConfigError(f"compressor must be one of {COMPRESSORS}, "
                              f"got {self.compressor!r}")
        if self.users < 1 or len(self.rb_allocation) != self.users:
            raise ConfigError(
                f"rb_allocation lists {len(self.rb_allocation)} users, "
                f"config says {self.users}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if isinstance(self.l_u, str):
            if self.l_u != "rank":
                raise ConfigError(f"l_u must be a positive int or 'rank', got {self.l_u!r}")
        elif int(self.l_u) < 1:
            raise ConfigError(f"l_u must be >= 1, got {self.l_u}")
        total_rbs = sum(self.rb_allocation)
        if total_rbs * RB_SIZE > self.n_active:
            raise ConfigError(
                f"{total_rbs} RBs exceed the {self.n_active // RB_SIZE}-RB grid")

    # -- derived objects -----------------------------------------------------

    @property
    def sample_rate_hz(self) -> float:
        return self.n_fft * self.subcarrier_spacing_hz

    def grid(self) -> OfdmGrid:
        return OfdmGrid(n_fft=self.n_fft, cp_len=self.cp_len,
                        n_active=self.n_active, center_offset=self.center_offset)

    def profile(self):
        return named_profile(self.channel_profile)

    def allocations(self) -> tuple:
        """Users packed contiguously from RB 0, in listed order."""
        allocs, start = [], 0
        for uid, count in enumerate(self.rb_allocation):
            allocs.append(UserAllocation(user_id=uid, rb_start=start, rb_count=count))
            start += count
        return tuple(allocs)

    def channel_rank(self) -> int:
        """Distinct sample-delay count: per-user rank of a noiseless symbol."""
        return distinct_sample_delays(self.profile(), self.sample_rate_hz).size

    def resolved_l_u(self) -> int:
        return self.channel_rank() if self.l_u == "rank" else int(self.l_u)


def full_scale(cfg: SimConfig, users: int | None = None) -> SimConfig:
    """Swap the desk-scale dimensions for the full wideband system.

    ``users`` defaults to ``cfg.users`` when that is 8 or 12, else to 8
    (the desk default of 4 users has no reference allocation).
    """
    if users is None:
        users = cfg.users if cfg.users in (8, 12) else 8
    if users not in (8, 12):
        raise ConfigError("full-scale runs use the reference allocations: "
                          f"users must be 8 or 12, got {users}")
    return dataclasses.replace(
        cfg, n_r=256, n_fft=4096, cp_len=288, n_active=3276, users=users,
        channel_profile="tdla30", rb_allocation=allocate_rbs_paper(users))


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in ("rb_allocation", "snr_db"):
        parts = [p for p in raw.replace(",", " ").split() if p]
        if key == "rb_allocation":
            if raw == "paper":
                return "paper"
            return tuple(int(p) for p in parts)
        return tuple(float(p) for p in parts)
    if key == "l_u":
        return "rank" if raw == "rank" else int(raw)
    if key == "channel_profile" or key == "compressor":
        return raw
    default = _FIELDS[key].default
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config(path, overrides: dict | None = None,
                 full: bool = False) -> SimConfig:
    """Read a flat ``key = value`` config file into a SimConfig.

    Unknown keys raise ConfigError (naming the line).  ``rb_allocation``
    accepts a comma/space-separated RB-count list or the word ``paper``.
    ``full=True`` overlays the full wideband dimensions before the config
    is validated, so a file written for the full system (e.g. 8 users with
    the reference allocation) does not have to fit the desk-scale grid.
    """
    values: dict = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value', got {line!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"{path}:{ln}: unknown config key {key!r}")
            try:
                values[key] = _convert(key, val)
            except ValueError as exc:
                raise ConfigError(f"{path}:{ln}: bad value for {key}: {exc}") from exc
    if overrides:
        values.update(overrides)
    if full:
        values.setdefault("users", 8)
        values.update(n_r=256, n_fft=4096, cp_len=288, n_active=3276,
                      channel_profile="tdla30")
        values.setdefault("rb_allocation", "paper")
    if values.get("rb_allocation") == "paper":
        users = int(values.get("users", SimConfig.users))
        values["rb_allocation"] = allocate_rbs_paper(users)
    try:
        return SimConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
