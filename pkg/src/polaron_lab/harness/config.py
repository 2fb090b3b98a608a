"""Experiment configuration: TOML in, canonical dict and stable hash out."""
from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from ..coulomb import CoulombKernel
from ..crystal import NuclearDensity, SCFParams
from ..grid import GridError, LatticeSpec
from ..polaron import PolaronParams
from ..response import VARIANTS, ResponseParams
from .presets import get_preset

EXPERIMENTS = ("exp-crystal", "exp-fcrys-props", "exp-decoupling", "exp-localization", "exp-e1",
               "exp-binding", "exp-macrolimit", "exp-choquard")
SECTIONS = {"lattice", "nuclei", "physics", "scf", "response", "polaron", "params"}
TOP_LEVEL = {"preset", "experiment", "seed", "out", "description"} | SECTIONS


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "nuclei":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _build(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid [{section}]: {err}") from err


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    experiment: str
    lattice: LatticeSpec
    nuclei: NuclearDensity
    m: float = 1.0
    kernel: str = "bare"
    mu: float = 0.0
    scf: SCFParams = field(default_factory=SCFParams)
    response: ResponseParams = field(default_factory=ResponseParams)
    polaron: PolaronParams = field(default_factory=PolaronParams)
    params: dict = field(default_factory=dict)
    seed: int = 0
    preset: str | None = None
    description: str = ""
    out: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        extra = set(raw) - TOP_LEVEL
        if extra:
            raise ConfigError(f"unknown top-level keys: {', '.join(sorted(extra))}")
        data = raw
        if raw.get("preset"):
            try:
                data = _merge(get_preset(raw["preset"]), {k: v for k, v in raw.items() if k != "preset"})
            except KeyError as err:
                raise ConfigError(str(err)) from err
            data["preset"] = raw["preset"]
        exp = data.get("experiment")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; choose one of {', '.join(EXPERIMENTS)}")
        for sec in ("lattice", "nuclei"):
            if sec not in data:
                raise ConfigError(f"missing [{sec}] section")
        try:
            lattice = LatticeSpec(**data["lattice"])
            nuclei = NuclearDensity.from_dict(data["nuclei"])
        except (TypeError, ValueError, KeyError, GridError) as err:
            raise ConfigError(f"invalid lattice or nuclei: {err}") from err
        if any(len(s.center) != lattice.d for s in nuclei.sites):
            raise ConfigError("nuclear site centers must have one coordinate per dimension")
        phys = dict(data.get("physics", {}))
        extra = set(phys) - {"m", "kernel", "mu"}
        if extra:
            raise ConfigError(f"unknown keys in [physics]: {', '.join(sorted(extra))}")
        m = float(phys.get("m", 1.0))
        if m <= 0:
            raise ConfigError("mass must be positive")
        kernel, mu = phys.get("kernel", "bare"), float(phys.get("mu", 0.0))
        try:
            CoulombKernel(lattice, kernel, mu)
        except GridError as err:
            raise ConfigError(str(err)) from err
        response = _build(ResponseParams, data.get("response", {}), "response")
        if response.variant not in VARIANTS:
            raise ConfigError(f"unknown response variant {response.variant!r}")
        pol = dict(data.get("polaron", {}))
        polaron = _build(PolaronParams, {**pol, "response": response}, "polaron")
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        return cls(experiment=exp, lattice=lattice, nuclei=nuclei, m=m, kernel=kernel, mu=mu,
                   scf=_build(SCFParams, data.get("scf", {}), "scf"), response=response, polaron=polaron,
                   params=dict(data.get("params", {})), seed=seed, preset=data.get("preset"),
                   description=data.get("description", ""), out=data.get("out"))

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as err:
            raise ConfigError(f"malformed TOML: {err}") from err
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config: {err}") from err
        return cls.from_toml(text)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ExperimentConfig":
        return cls.from_dict(_merge({"preset": name}, overrides))

    def kernel_for(self, spec: LatticeSpec | None = None) -> CoulombKernel:
        return CoulombKernel(spec or self.lattice, self.kernel, self.mu)

    def to_dict(self, include_out: bool = False) -> dict:
        """Fully expanded, preset-free form; ``None`` values are omitted (TOML has no null)."""
        def clean(d):
            return {k: v for k, v in d.items() if v is not None}

        pol = dataclasses.asdict(self.polaron)
        pol.pop("response")
        out = {
            "experiment": self.experiment, "seed": self.seed,
            "lattice": self.lattice.to_dict(), "nuclei": self.nuclei.to_dict(),
            "physics": {"m": self.m, "kernel": self.kernel, "mu": self.mu},
            "scf": dataclasses.asdict(self.scf), "response": clean(dataclasses.asdict(self.response)),
            "polaron": clean(pol), "params": copy.deepcopy(self.params),
        }
        if include_out and self.out:
            out["out"] = self.out
        return out

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict(include_out=True))

    @property
    def config_hash(self) -> str:
        return canonical_hash(self.to_dict())

    def crystal_key(self) -> dict:
        """The inputs that determine the CrystalState."""
        return {"lattice": self.lattice.to_dict(), "nuclei": self.nuclei.to_dict(), "m": self.m,
                "scf": dataclasses.asdict(self.scf)}


def canonical_hash(data) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode()).hexdigest()
