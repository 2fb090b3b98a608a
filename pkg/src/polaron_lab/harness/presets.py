"""Shipped experiment presets.

Every preset is a plain dict in the config schema; a TOML file may name a preset
and override any of its sections.
"""
from __future__ import annotations

import copy

# one Gaussian nucleus per cell of length a = 2: occupied band narrower than the gap
_DEEPWELL_NUCLEI = {"Z": 1, "sites": [{"center": [1.0], "width": 0.1, "charge": 1.0}]}
# the same nucleus on a cell of length 0.5 (nearly free electrons), for the 48-point N = 2 runs
_SHORT_CELL_NUCLEI = {"Z": 1, "sites": [{"center": [0.25], "width": 0.03, "charge": 1.0}]}

_BASE = {
    "experiment": "exp-crystal",
    "seed": 0,
    "lattice": {"d": 1, "a": 2.0, "n_c": 16, "M": 16},
    "nuclei": _DEEPWELL_NUCLEI,
    "physics": {"m": 1.0, "kernel": "bare", "mu": 0.0},
    "scf": {"alpha": 0.5, "max_iter": 300, "tol": 1e-9, "gap_tol": 1e-6},
    "response": {"max_iter": 2000, "variant": "fw_corrective"},
    "polaron": {"outer_tol": 1e-9, "max_outer": 200, "init": "uper_bump", "residual_tol": 1e-6},
    "params": {},
}


def _preset(description: str, **sections) -> dict:
    out = copy.deepcopy(_BASE)
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(copy.deepcopy(value))
        else:
            out[key] = copy.deepcopy(value)
    out["description"] = description
    return out


PRESETS: dict[str, dict] = {
    "free": _preset(
        "Uniform jellium background: the bands touch, so the insulator check must fail.",
        nuclei={"Z": 1, "sites": []},
    ),
    "deepwell-1d": _preset(
        "One Gaussian nucleus per cell (a = 2) in one dimension; the workhorse preset. "
        "Trial states at lambda = 4a, 8a, 16a on a 64-cell supercell.",
        experiment="exp-e1",
        params={"lam_list": [8.0, 16.0, 32.0], "profile": "bump", "profile_width": 1.0, "trial_M": 64},
    ),
    "deepwell-3d-small": _preset(
        "Cubic crystal with one Gaussian well per cell, sampled at k = 0 on an 8^3 grid; "
        "single-particle runs only.",
        experiment="exp-e1",
        lattice={"d": 3, "a": 4.0, "n_c": 8, "M": 1},
        nuclei={"Z": 1, "sites": [{"center": [2.0, 2.0, 2.0], "width": 0.3, "charge": 1.0}]},
        params={"lam_list": []},
    ),
    "twobump-1d": _preset(
        "Deep-well crystal with two separated bumps at s = 2a, 4a, 8a, 16a; "
        "a Yukawa comparison run is recorded too.",
        experiment="exp-decoupling",
        lattice={"M": 64},
        params={"s_list": [4.0, 8.0, 16.0, 32.0], "bump_width": 0.6, "compare_yukawa_mu": 1.0},
    ),
    "deepwell-1d-n2": _preset(
        "Short-cell crystal (a = 0.5, 48 grid points) for the two-polaron solver; wedge shift 8a.",
        experiment="exp-binding",
        lattice={"a": 0.5, "n_c": 4, "M": 12},
        nuclei=_SHORT_CELL_NUCLEI,
        params={"N": 2, "wedge_shift": 4.0, "wedge_radius": 0.975},
    ),
    "deepwell-1d-props": _preset(
        "Deep-well crystal for the randomized property suites of F_crys.",
        experiment="exp-fcrys-props",
    ),
    "deepwell-1d-loc": _preset(
        "Long deep-well supercell (L = 72a) so that localization radii 2a, 4a, 8a, 16a fit.",
        experiment="exp-localization",
        lattice={"M": 72},
        params={"bump_width": 2.0, "R_list": [4.0, 8.0, 16.0, 32.0]},
    ),
    "deepwell-1d-wide": _preset(
        "Wide deep-well supercell (L = 64a) for the dielectric-constant fit at lambda = 4a, 8a, 16a.",
        experiment="exp-macrolimit",
        lattice={"M": 64},
        params={"lam_list": [8.0, 16.0, 32.0], "profile": "bump", "profile_width": 1.0},
    ),
    "pekar-1d": _preset(
        "Pekar (Choquard) minimization for a few scalar dielectric constants.",
        experiment="exp-choquard",
        params={"eps_list": [1.05, 2.0, 5.0]},
    ),
}


def preset_names() -> list[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(preset_names())}")
    return copy.deepcopy(PRESETS[name])
