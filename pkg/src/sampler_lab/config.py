"""Experiment configuration: JSON schema, per-experiment defaults, loading."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

EXPERIMENTS = ("levy", "sparsity", "kl_race", "spectrum", "ratio_sweep", "levy_proposal_control")
ALGORITHMS = ("DS", "RwM", "RwM-Levy", "MC3")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["experiment"],
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "master_seed": {"type": "integer", "minimum": 0},
        "replicates": _posint,
        "output_dir": {"type": "string"},
        "jobs": _posint,
        "save_traces": {"enum": ["none", "first", "all"]},
        "full_chains": {"type": "boolean"},
        "target": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_modes": _posint,
                "r": _pos,
                "d": _posint,
                "sigma_target": _pos,
            },
        },
        "sampler": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "algorithms": {
                    "type": "array",
                    "minItems": 1,
                    "uniqueItems": True,
                    "items": {"enum": list(ALGORITHMS)},
                },
                "samples": {"type": "integer", "minimum": 2},
                "chains": _posint,
                "ladder": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 1}},
                "ladder_ratio": {"type": "number", "exclusiveMinimum": 1},
                "proposal_sigma": _pos,
                "levy_mu": {"type": "number", "exclusiveMinimum": 1, "maximum": 3},
                "levy_lmin": _pos,
                "levy_lmax": _pos,
                "swap_policy": {"enum": ["random_pairs", "neighbors_only"]},
                "init": {
                    "oneOf": [
                        {"enum": ["mode", "origin"]},
                        {"type": "array", "items": _num, "minItems": 1},
                    ]
                },
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_bins": {"type": "integer", "minimum": 2},
                "n_windows": {"type": "integer", "minimum": 2},
                "n_blocks": {"type": "integer", "minimum": 2},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "r_values": {"type": "array", "minItems": 1, "items": _pos},
                "ratios": {"type": "array", "minItems": 1, "items": _pos},
                "checkpoints": {"type": "array", "minItems": 1, "items": _posint},
                "trend_max_r": _pos,
            },
        },
    },
}

_BASE = {
    "replicates": 20,
    "save_traces": "first",
    "full_chains": False,
    "target": {"n_modes": 15, "r": 9.0, "d": 2, "sigma_target": 3.0},
    "sampler": {
        "algorithms": ["DS", "RwM", "MC3"],
        "samples": 1024,
        "chains": 8,
        "ladder_ratio": 2.0,
        "proposal_sigma": 1.0,
        "levy_mu": 2.0,
        "levy_lmin": 0.1,
        "swap_policy": "random_pairs",
        "init": "mode",
    },
    "analysis": {"n_bins": 50, "n_windows": 10, "n_blocks": 10},
    "sweep": {
        "r_values": [1, 2, 3, 5, 7, 9, 12, 16, 24, 40],
        "ratios": [float(v) for v in np.logspace(-1, 2, 12)],
        "checkpoints": [2**k for k in range(1, 11)],
        "trend_max_r": 12,
    },
}

_PER_EXPERIMENT = {
    "levy": {},
    "sparsity": {"sampler": {"algorithms": ["DS", "RwM", "MC3", "RwM-Levy"]}},
    "levy_proposal_control": {"sampler": {"algorithms": ["RwM-Levy"]}},
    "kl_race": {},
    "spectrum": {"target": {"d": 1}, "sampler": {"chains": 2}},
    "ratio_sweep": {"target": {"d": 1}, "sampler": {"chains": 2}},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(doc: dict) -> None:
    errors = sorted(jsonschema.Draft7Validator(SCHEMA).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config field {where}: {e.message}")


@dataclass
class ExperimentConfig:
    """Fully resolved experiment description (defaults merged in)."""

    experiment: str
    master_seed: int
    replicates: int
    target: dict
    sampler: dict
    analysis: dict
    sweep: dict
    output_dir: str | None = None
    jobs: int | None = None
    save_traces: str = "first"
    full_chains: bool = False
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        validate(doc)
        exp = doc["experiment"]
        merged = _merge(_merge(_BASE, _PER_EXPERIMENT[exp]), doc)
        if "master_seed" not in merged:
            raise ConfigError("config field master_seed: a seed is required (no hidden entropy)")
        s = merged["sampler"]
        if "ladder" in doc.get("sampler", {}):
            ladder = [float(t) for t in s["ladder"]]
            if "chains" in doc.get("sampler", {}) and s["chains"] != len(ladder):
                raise ConfigError(f"config field sampler/ladder: {len(ladder)} temperatures but chains={s['chains']}")
            s["chains"] = len(ladder)
        else:
            ladder = [s["ladder_ratio"] ** i for i in range(s["chains"])]
        s["ladder"] = ladder
        if ladder[0] != 1.0 or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError("config field sampler/ladder: must start at 1 and strictly increase")
        if s["levy_lmin"] >= s.get("levy_lmax", np.inf):
            raise ConfigError("config field sampler/levy_lmin: must be below levy_lmax")
        if exp == "kl_race" and max(merged["sweep"]["checkpoints"]) > s["samples"]:
            raise ConfigError("config field sweep/checkpoints: checkpoint beyond sample count")
        return cls(
            experiment=exp,
            master_seed=int(merged["master_seed"]),
            replicates=int(merged["replicates"]),
            target=merged["target"],
            sampler=s,
            analysis=merged["analysis"],
            sweep=merged["sweep"],
            output_dir=merged.get("output_dir"),
            jobs=merged.get("jobs"),
            save_traces=merged["save_traces"],
            full_chains=bool(merged["full_chains"]),
            raw=copy.deepcopy(doc),
        )

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "master_seed": self.master_seed,
            "replicates": self.replicates,
            "target": self.target,
            "sampler": self.sampler,
            "analysis": self.analysis,
            "sweep": self.sweep,
            "save_traces": self.save_traces,
            "full_chains": self.full_chains,
        }


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None


def make_config(experiment: str, **overrides) -> ExperimentConfig:
    """Build a config programmatically; nested sections may be given as dicts."""
    doc = {"experiment": experiment}
    doc.update(overrides)
    return ExperimentConfig.from_dict(doc)
