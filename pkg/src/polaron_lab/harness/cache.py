"""On-disk cache of converged crystals, keyed by the hash of their inputs.

Only the converged unit-cell potential and densities are stored; everything
else is rebuilt deterministically, so a cache hit reproduces the original
CrystalState bit for bit.
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path

import numpy as np

from .. import __version__
from ..crystal import CrystalState, NuclearDensity, build_crystal, scf_solve
from .config import ExperimentConfig, canonical_hash

log = logging.getLogger(__name__)

CACHE_ENV = "POLARON_LAB_CACHE"
CACHE_FORMAT = 1


def cache_root() -> Path:
    env = os.environ.get(CACHE_ENV)
    return Path(env) if env else Path.home() / ".cache" / "polaron-lab"


def crystal_hash(config: ExperimentConfig) -> str:
    return canonical_hash({"key": config.crystal_key(), "format": CACHE_FORMAT, "version": __version__})


def _paths(root: Path, key: str) -> tuple[Path, Path]:
    return root / f"crystal-{key}.json", root / f"crystal-{key}.npz"


def save_crystal(crystal: CrystalState, key: str, root: Path) -> None:
    root.mkdir(parents=True, exist_ok=True)
    head, data = _paths(root, key)
    tmp = data.with_suffix(".tmp.npz")
    np.savez(tmp, v_cell=crystal.v_cell, rho_cell=crystal.rho_cell, mu_cell=crystal.mu_cell,
             energy_trace=np.asarray(crystal.energy_trace))
    tmp.replace(data)
    header = {"format": CACHE_FORMAT, "key": key, "Z": crystal.Z, "m": crystal.m,
              "spec": crystal.spec.to_dict(), "nuclei": crystal.nuclei, "scf_residual": crystal.scf_residual,
              "summary": crystal.summary()}
    head.write_text(json.dumps(header, sort_keys=True, indent=1))


def load_crystal(config: ExperimentConfig, key: str, root: Path) -> CrystalState | None:
    head, data = _paths(root, key)
    if not (head.exists() and data.exists()):
        return None
    try:
        header = json.loads(head.read_text())
        if header.get("format") != CACHE_FORMAT or header.get("key") != key:
            return None
        with np.load(data) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError, KeyError) as err:
        log.warning("ignoring unreadable cache entry %s: %s", key, err)
        return None
    return build_crystal(config.lattice, header["Z"], arrays["v_cell"], arrays["rho_cell"], arrays["mu_cell"],
                         config.m, config.scf.gap_tol, arrays["energy_trace"].tolist(),
                         nuclei=header["nuclei"], residual=header["scf_residual"])


def obtain_crystal(config: ExperimentConfig, use_cache: bool = True, root: Path | None = None
                   ) -> tuple[CrystalState, bool]:
    """Load the crystal for ``config`` from the cache or solve and store it; returns (crystal, hit)."""
    root = cache_root() if root is None else root
    key = crystal_hash(config)
    if use_cache:
        cached = load_crystal(config, key, root)
        if cached is not None:
            log.info("crystal cache hit %s", key[:12])
            return cached, True
    crystal = scf_solve(config.nuclei, config.lattice, config.scf, config.m)
    if use_cache:
        try:
            save_crystal(crystal, key, root)
        except OSError as err:
            log.warning("could not write crystal cache: %s", err)
    return crystal, False


def solve_for(config: ExperimentConfig, nuclei: NuclearDensity | None = None) -> CrystalState:
    return scf_solve(nuclei or config.nuclei, config.lattice, config.scf, config.m)
