"""Strict JSON experiment configuration.

Every block is a flat mapping; unknown keys, wrong types and out-of-range
values raise :class:`InvalidArgumentError` before any computation starts.
Defaults reproduce the rigid-body experiment.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .systems import SystemSpec, linear_decay, rigid_body


@dataclass
class SystemBlock:
    kind: str = "rigid_body"
    inertia: list = field(default_factory=lambda: [1.0, 0.5, 1.0 / 3.0])
    control_matrix: Optional[list] = None  # identity when None
    state_dim: int = 1  # linear_decay only
    rate: float = 1.0  # linear_decay only


@dataclass
class SimulationBlock:
    dt: float = 0.01
    t_end: float = 10.0
    count: int = 114
    radius_range: list = field(default_factory=lambda: [0.5, 1.5])
    guard: float = 1e9


@dataclass
class DictionaryBlock:
    degree: int = 3
    include_constant: bool = False


@dataclass
class DiscoveryBlock:
    # "lambda" in JSON
    lam: float = 0.0
    rank_tolerance: float = 1e-6
    l1_weight: float = 0.1
    max_iters: int = 1000
    holdout_fraction: float = 0.2
    residual_tolerance: float = 1e-6
    involution_tolerance: float = 1e-3


@dataclass
class ActuationBlock:
    forcing: str = "multisine"
    count: int = 10
    t_end: float = 2.0
    derivatives: str = "analytic"


@dataclass
class ControlBlock:
    Q: list = field(default_factory=lambda: [[2.0, 0.0], [0.0, 2.0]])
    R: list = field(default_factory=lambda: [[1e-3, 0.0, 0.0], [0.0, 1e-3, 0.0], [0.0, 0.0, 1e-3]])
    horizon_steps: int = 10
    plant_dt: float = 0.01
    substeps: int = 10
    reference_state: list = field(default_factory=lambda: [0.0, 1.0, 0.0])
    input_bounds: Optional[list] = None
    prediction: str = "zoh"
    t_end: float = 10.0
    count: int = 114
    L_value: float = 0.5
    tolerance: float = 1e-2
    distance_tolerance: float = 0.05
    use_sparse: bool = True


@dataclass
class IoBlock:
    seed: int = 0
    jobs: int = 1
    data_dir: Optional[str] = None
    out_dir: Optional[str] = None


_BLOCKS = {
    "system": SystemBlock,
    "simulation": SimulationBlock,
    "dictionary": DictionaryBlock,
    "discovery": DiscoveryBlock,
    "actuation": ActuationBlock,
    "control": ControlBlock,
    "io": IoBlock,
}
_RENAME = {("discovery", "lambda"): "lam"}
_NUMBER = (int, float)


def _json_key(block, name):
    for (b, j), py in _RENAME.items():
        if b == block and py == name:
            return j
    return name


def _parse_block(name, cls, raw):
    if not isinstance(raw, dict):
        raise InvalidArgumentError(f"config block {name!r} must be an object")
    defaults = cls()
    kwargs = {}
    known = {_json_key(name, f.name): f.name for f in fields(cls)}
    for key, value in raw.items():
        if key not in known:
            raise InvalidArgumentError(
                f"unknown key {name}.{key}; expected one of {sorted(known)}"
            )
        attr = known[key]
        ref = getattr(defaults, attr)
        if isinstance(ref, bool):
            ok = isinstance(value, bool)
        elif isinstance(ref, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(ref, float):
            ok = isinstance(value, _NUMBER) and not isinstance(value, bool)
            value = float(value) if ok else value
        elif isinstance(ref, str):
            ok = isinstance(value, str)
        else:
            ok = value is None or isinstance(value, (list, str))
        if not ok:
            raise InvalidArgumentError(f"{name}.{key} has the wrong type ({type(value).__name__})")
        kwargs[attr] = value
    return cls(**kwargs)


@dataclass
class ExperimentConfig:
    system: SystemBlock = field(default_factory=SystemBlock)
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    dictionary: DictionaryBlock = field(default_factory=DictionaryBlock)
    discovery: DiscoveryBlock = field(default_factory=DiscoveryBlock)
    actuation: ActuationBlock = field(default_factory=ActuationBlock)
    control: ControlBlock = field(default_factory=ControlBlock)
    io: IoBlock = field(default_factory=IoBlock)

    @classmethod
    def from_dict(cls, obj):
        if not isinstance(obj, dict):
            raise InvalidArgumentError("config must be a JSON object")
        unknown = set(obj) - set(_BLOCKS)
        if unknown:
            raise InvalidArgumentError(f"unknown config block(s) {sorted(unknown)}; expected {sorted(_BLOCKS)}")
        cfg = cls(**{k: _parse_block(k, _BLOCKS[k], v) for k, v in obj.items()})
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(obj)

    def to_dict(self):
        out = {}
        for name in _BLOCKS:
            block = asdict(getattr(self, name))
            out[name] = {_json_key(name, k): v for k, v in block.items()}
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def copy(self):
        return copy.deepcopy(self)

    # -- validation ---------------------------------------------------------

    def validate(self):
        s, sim, dic, dis, act, ctl, io = (
            self.system, self.simulation, self.dictionary, self.discovery,
            self.actuation, self.control, self.io,
        )
        _require(s.kind in ("rigid_body", "linear_decay"), f"system.kind {s.kind!r} is not supported")
        if s.kind == "rigid_body":
            _require(len(s.inertia) == 3 and all(v > 0 for v in s.inertia),
                     "system.inertia needs three positive moments")
        _require(s.state_dim >= 1, "system.state_dim must be >= 1")
        _require(sim.dt > 0 and sim.t_end > 0, "simulation.dt and t_end must be positive")
        _require(sim.count >= 1, "simulation.count must be >= 1")
        _require(len(sim.radius_range) == 2 and 0 < sim.radius_range[0] <= sim.radius_range[1],
                 "simulation.radius_range must be [lo, hi] with 0 < lo <= hi")
        _require(dic.degree >= 1, "dictionary.degree must be >= 1")
        _require(0 < dis.rank_tolerance < 1, "discovery.rank_tolerance must lie in (0, 1)")
        _require(0 <= dis.holdout_fraction < 1, "discovery.holdout_fraction must lie in [0, 1)")
        _require(dis.l1_weight > 0 and dis.max_iters >= 1, "discovery.l1_weight and max_iters must be positive")
        _require(act.forcing in ("multisine", "none"), f"actuation.forcing {act.forcing!r} is not supported")
        _require(act.derivatives in ("analytic", "numerical"), "actuation.derivatives is analytic or numerical")
        _require(act.count >= 1 and act.t_end > 0, "actuation.count and t_end must be positive")
        _require(ctl.prediction in ("zoh", "shooting"), "control.prediction is zoh or shooting")
        _require(ctl.horizon_steps >= 1 and ctl.substeps >= 1, "control.horizon_steps and substeps must be >= 1")
        _require(ctl.plant_dt > 0 and ctl.t_end > 0, "control.plant_dt and t_end must be positive")
        _require(ctl.count >= 1 and ctl.L_value > 0, "control.count and L_value must be positive")
        _require(io.seed >= 0, "io.seed must be non-negative")
        _require(io.jobs >= 1, "io.jobs must be >= 1")
        try:
            self.system_spec()
            self.mpc_config()
        except (ValueError, TypeError) as exc:
            raise InvalidArgumentError(str(exc)) from None

    # -- builders -----------------------------------------------------------

    def system_spec(self) -> SystemSpec:
        s = self.system
        if s.kind == "rigid_body":
            B = None if s.control_matrix is None else np.asarray(s.control_matrix, dtype=float)
            return rigid_body(tuple(s.inertia), B)
        return linear_decay(s.state_dim, s.rate)

    def mpc_config(self):
        from .control import MpcConfig

        c = self.control
        return MpcConfig(
            Q=np.asarray(c.Q, dtype=float),
            R=np.asarray(c.R, dtype=float),
            reference_state=np.asarray(c.reference_state, dtype=float),
            horizon_steps=c.horizon_steps,
            plant_dt=c.plant_dt,
            substeps=c.substeps,
            input_bounds=None if c.input_bounds is None else np.asarray(c.input_bounds, dtype=float),
            prediction=c.prediction,
        )


def _require(cond, msg):
    if not cond:
        raise InvalidArgumentError(msg)
