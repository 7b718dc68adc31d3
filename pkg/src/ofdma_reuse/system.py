"""Scenario description: path loss, noise, gains and user populations.

Two base stations sit ``2 D`` apart on a line.  A user at distance ``x``
from its own station is ``2 D - x`` away from the other one.  Powers are in
watts and referenced to the total-band noise power ``sigma2 = N0 * B``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PathLossModel:
    """rho_dB(x) = offset_db + 10 s log10(x / 1 km)."""

    exponent: float = 2.0
    offset_db: float = 100.04

    def __post_init__(self):
        if not self.exponent >= 2:
            raise ValueError("path-loss exponent must be >= 2")

    @classmethod
    def free_space(cls):
        return cls(2.0, 100.04)

    @classmethod
    def okumura_hata(cls):
        return cls(3.0, 97.52)

    @classmethod
    def for_exponent(cls, s):
        models = {2: cls.free_space(), 3: cls.okumura_hata()}
        if s not in models:
            raise ValueError(f"no built-in path-loss model for exponent {s}")
        return models[s]


@dataclass(frozen=True)
class SystemParams:
    bandwidth_hz: float = 5e6
    noise_psd_dbm_hz: float = -170.0
    cell_radius_m: float = 500.0
    carrier_ghz: float = 2.4
    alpha: float = 0.5
    path_loss: PathLossModel = field(default_factory=PathLossModel)
    epsilon_m: float = 1.0
    # multiplies the gain towards the neighbouring station; 0 decouples the cells
    cross_gain_scale: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.bandwidth_hz > 0:
            raise ValueError("bandwidth_hz must be positive")
        if not 0.0 < self.epsilon_m < self.cell_radius_m:
            raise ValueError("need 0 < epsilon_m < cell_radius_m")
        if self.cross_gain_scale < 0:
            raise ValueError("cross_gain_scale must be non-negative")

    @property
    def noise_power(self) -> float:
        """sigma^2 in watts over the whole band."""
        return 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz

    @property
    def interference_share(self) -> float:
        return self.alpha

    @property
    def protected_share(self) -> float:
        return 0.5 * (1.0 - self.alpha)

    def with_alpha(self, alpha: float) -> "SystemParams":
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        d = dict(d)
        pl = d.pop("path_loss", None)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown system field(s): {sorted(unknown)}")
        if pl is not None:
            if isinstance(pl, dict):
                pl = PathLossModel(**pl)
            d["path_loss"] = pl
        return cls(**d)


def rho(x_m, model: PathLossModel):
    """Linear path gain at distance x (metres)."""
    x = np.asarray(x_m, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("distance must be positive")
    db = model.offset_db + 10.0 * model.exponent * np.log10(x / 1000.0)
    out = 10.0 ** (-db / 10.0)
    return out if out.ndim else float(out)


def _check_range(x, params):
    x = np.asarray(x, dtype=float)
    tol = 1e-9 * params.cell_radius_m
    if np.any(x < params.epsilon_m - tol) or np.any(x > params.cell_radius_m + tol):
        raise ValueError("user position outside [epsilon, D]")
    return x


def cross_gain(x_m, params: SystemParams):
    """Gain from the neighbouring station to a user at x."""
    x = _check_range(x_m, params)
    return params.cross_gain_scale * rho(2.0 * params.cell_radius_m - x, params.path_loss)


def g2(x_m, params: SystemParams):
    """Gain-to-noise ratio in the protected band."""
    x = _check_range(x_m, params)
    return rho(x, params.path_loss) / params.noise_power


def g1(x_m, q_bar, params: SystemParams):
    """Gain-to-interference-plus-noise ratio in the shared band.

    ``q_bar`` is the neighbour's shared-band power (W).
    """
    if np.any(np.asarray(q_bar) < 0):
        raise ValueError("q_bar must be non-negative")
    x = _check_range(x_m, params)
    return rho(x, params.path_loss) / (cross_gain(x, params) * q_bar + params.noise_power)


@dataclass(frozen=True)
class UserRecord:
    position_m: float
    rate_nats_s: float

    def __post_init__(self):
        if not self.rate_nats_s > 0:
            raise ValueError("user rate must be positive")
        if not self.position_m > 0:
            raise ValueError("user position must be positive")


@dataclass(frozen=True)
class CellScenario:
    """Users of one cell, ordered nearest first (stable on ties)."""

    users: tuple
    cell_id: str = "A"

    def __post_init__(self):
        users = tuple(sorted(self.users, key=lambda u: u.position_m))
        object.__setattr__(self, "users", users)
        if self.cell_id not in ("A", "B"):
            raise ValueError("cell_id must be 'A' or 'B'")

    @classmethod
    def from_arrays(cls, positions, rates, cell_id="A"):
        rates = np.broadcast_to(np.asarray(rates, dtype=float), np.shape(positions))
        return cls(tuple(UserRecord(float(x), float(r)) for x, r in zip(positions, rates)), cell_id)

    def __len__(self):
        return len(self.users)

    @property
    def positions(self) -> np.ndarray:
        return np.array([u.position_m for u in self.users], dtype=float)

    @property
    def rates(self) -> np.ndarray:
        return np.array([u.rate_nats_s for u in self.users], dtype=float)

    def normalized_rates(self, params: SystemParams) -> np.ndarray:
        """R_k = r_k / B in nats/s/Hz."""
        return self.rates / params.bandwidth_hz

    def validate(self, params: SystemParams):
        _check_range(self.positions, params)

    def subset(self, mask) -> "CellScenario":
        mask = np.asarray(mask, dtype=bool)
        return CellScenario(tuple(u for u, m in zip(self.users, mask) if m), self.cell_id)


def generate_scenario(k_per_cell: int, rate_per_user: float, seed: int,
                      params: SystemParams | None = None):
    """Two cells of i.i.d. uniform users on [epsilon, D] with a common rate."""
    if k_per_cell < 1:
        raise ValueError("k_per_cell must be >= 1")
    params = params or SystemParams()
    rng = np.random.default_rng(seed)
    lo, hi = params.epsilon_m, params.cell_radius_m
    cells = []
    for cid in ("A", "B"):
        x = np.sort(rng.uniform(lo, hi, size=k_per_cell))
        cells.append(CellScenario.from_arrays(np.clip(x, lo, hi), rate_per_user, cid))
    return tuple(cells)


def rate_per_user_nats(r_t_bps: float, k_per_cell: int) -> float:
    """Split a per-cell sum rate (bits/s) evenly, in nats/s."""
    return r_t_bps * math.log(2.0) / k_per_cell


# -- scenario files -------------------------------------------------------------


def scenario_to_dict(params: SystemParams, cells) -> dict:
    return {
        "system": params.to_dict(),
        "cells": [
            {"cell_id": c.cell_id,
             "users": [{"x_m": u.position_m, "r_nats_s": u.rate_nats_s} for u in c.users]}
            for c in cells
        ],
    }


def scenario_from_dict(doc: dict):
    if "system" not in doc or "cells" not in doc:
        raise ValueError("scenario needs 'system' and 'cells'")
    params = SystemParams.from_dict(doc["system"])
    cells = {}
    for c in doc["cells"]:
        cid = c["cell_id"]
        users = tuple(UserRecord(float(u["x_m"]), float(u["r_nats_s"])) for u in c["users"])
        cells[cid] = CellScenario(users, cid)
    if set(cells) != {"A", "B"}:
        raise ValueError("scenario must define cells 'A' and 'B'")
    for c in cells.values():
        c.validate(params)
    return params, (cells["A"], cells["B"])


def write_scenario(path, params: SystemParams, cells):
    Path(path).write_text(json.dumps(scenario_to_dict(params, cells), indent=2))


def read_scenario(path):
    return scenario_from_dict(json.loads(Path(path).read_text()))
