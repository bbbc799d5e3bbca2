"""YAML config loading: sections ``problem``, ``lm``, ``study``.

The problem section names a toy from the zoo (``name`` plus its
parameters) or spells out a linear problem explicitly, with matrices as
row-major nested lists:

.. code-block:: yaml

    problem:
      state_dim: 1
      horizon: 1
      x_b: [0.0]
      B: [[1.0]]
      M: [[[1.0]]]     # one matrix per time step
      mu: [[0.0]]
      Q: [[[1.0]]]
      H: [[[1.0]]]
      R: [[[1.0]]]
      y: [[3.0]]

    lm:
      gamma: 1.0
      tau: 1.0e-3
      ensemble_sizes: [200]
      max_iterations: 2
      mode: tangent

    study:
      kind: tau-sweep
      sweep: [1.0e-1, 1.0e-2, 1.0e-3, 1.0e-4]
      replicates: 8
      p_order: 2
      seed: 1

Nonlinear operators cannot be written in a text file; nonlinear problems
are reached through the named zoo entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ValidationError
from .fourdvar import LMConfig
from .problem import AssimilationProblem, Operator, Trajectory, validate_problem
from .study import StudySpec
from .toys import make_toy_problem

__all__ = ["LoadedConfig", "load_config"]

_PROBLEM_FIELDS = {"state_dim", "horizon", "x_b", "B", "M", "mu", "Q", "H", "R", "y"}
_LM_FIELDS = {"gamma", "tau", "ensemble_sizes", "max_iterations", "mode", "initial_trajectory"}
_STUDY_FIELDS = {"kind", "sweep", "replicates", "p_order", "seed"}


@dataclass(frozen=True)
class LoadedConfig:
    problem: AssimilationProblem
    lm: LMConfig | None
    study: StudySpec | None


def _reject_unknown(section: dict, allowed: set[str], name: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {name} section: {sorted(unknown)}")


def _problem_from_section(section) -> AssimilationProblem:
    if not isinstance(section, dict):
        raise ValidationError("problem section must be a mapping")
    if "name" in section:
        params = {k: v for k, v in section.items() if k != "name"}
        return make_toy_problem(section["name"], **params)
    _reject_unknown(section, _PROBLEM_FIELDS, "problem")
    missing = _PROBLEM_FIELDS - set(section)
    if missing:
        raise ValidationError(f"problem section missing keys: {sorted(missing)}")
    horizon = int(section["horizon"])
    for key in ("M", "mu", "Q", "H", "R", "y"):
        if len(section[key]) != horizon:
            raise ValidationError(
                f"problem field {key} has {len(section[key])} entries, expected {horizon}"
            )
    problem = AssimilationProblem(
        state_dim=int(section["state_dim"]),
        horizon=horizon,
        background_mean=np.asarray(section["x_b"], dtype=float),
        background_cov=np.asarray(section["B"], dtype=float),
        model_ops=tuple(Operator.from_matrix(a) for a in section["M"]),
        forcings=tuple(np.asarray(v, dtype=float) for v in section["mu"]),
        model_noise_covs=tuple(np.asarray(a, dtype=float) for a in section["Q"]),
        obs_ops=tuple(Operator.from_matrix(a) for a in section["H"]),
        obs_noise_covs=tuple(np.asarray(a, dtype=float) for a in section["R"]),
        observations=tuple(np.asarray(v, dtype=float) for v in section["y"]),
    )
    return validate_problem(problem)


def _lm_from_section(section) -> LMConfig:
    if not isinstance(section, dict):
        raise ValidationError("lm section must be a mapping")
    _reject_unknown(section, _LM_FIELDS, "lm")
    if "gamma" not in section:
        raise ValidationError("lm section requires a gamma value")
    kwargs: dict = {"gamma": float(section["gamma"])}
    if "tau" in section:
        kwargs["tau"] = float(section["tau"])
    if "ensemble_sizes" in section:
        kwargs["ensemble_sizes"] = tuple(int(n) for n in section["ensemble_sizes"])
    if "max_iterations" in section:
        kwargs["max_iterations"] = int(section["max_iterations"])
    if "mode" in section:
        kwargs["mode"] = str(section["mode"])
    if "initial_trajectory" in section:
        kwargs["initial_trajectory"] = Trajectory(np.asarray(section["initial_trajectory"], dtype=float))
    return LMConfig(**kwargs)


def _study_from_section(section, problem, lm) -> StudySpec:
    if not isinstance(section, dict):
        raise ValidationError("study section must be a mapping")
    _reject_unknown(section, _STUDY_FIELDS, "study")
    for key in ("kind", "sweep", "replicates"):
        if key not in section:
            raise ValidationError(f"study section requires a {key} value")
    return StudySpec(
        kind=str(section["kind"]),
        sweep=tuple(float(v) for v in section["sweep"]),
        replicates=int(section["replicates"]),
        problem=problem,
        p_order=float(section.get("p_order", 2.0)),
        seed=int(section.get("seed", 0)),
        lm=lm,
    )


def load_config(path) -> LoadedConfig:
    """Parse a config file into problem/LM/study objects."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"config is not valid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping with a problem section")
    _reject_unknown(doc, {"problem", "lm", "study"}, "top-level")
    if "problem" not in doc:
        raise ValidationError("config requires a problem section")
    problem = _problem_from_section(doc["problem"])
    lm = _lm_from_section(doc["lm"]) if "lm" in doc else None
    study = _study_from_section(doc["study"], problem, lm) if "study" in doc else None
    return LoadedConfig(problem=problem, lm=lm, study=study)
