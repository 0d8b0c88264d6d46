"""YAML run configuration.

Sections only group keys for readability; every key outside ``propagation``
and ``run`` is a SimParams field::

    scenario: {area_side: 400, M: 50, K: 15, N_s: 300}
    arrays: {N_AP: 32, N_UE: 16, n_AP: 8, n_UE: 4, nu_AP: 8, nu_UE: 4}
    protocol: {Q: 16, T_max: 20, P_BA: 5.01}
    propagation: {shadowing: true}
    run: {n_drops: 100, T_values: [1, 5, 10, 20], estimators: [mco, sco]}
"""

from __future__ import annotations

import dataclasses

import yaml

from .harness import RunConfig
from .scenario import PropagationModel, SimParams

_PARAM_FIELDS = {f.name for f in dataclasses.fields(SimParams)} - {"propagation"}
_PROP_FIELDS = {f.name for f in dataclasses.fields(PropagationModel)}
_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)} - {"params"}


class ConfigError(ValueError):
    pass


def _split(data):
    params, prop, run = {}, {}, {}
    for section, body in (data or {}).items():
        if section == "propagation":
            prop.update(body or {})
        elif section == "run":
            run.update(body or {})
        elif isinstance(body, dict):
            params.update(body)
        else:
            params[section] = body
    for name, known, where in ((params, _PARAM_FIELDS, "parameter"),
                               (prop, _PROP_FIELDS, "propagation key"),
                               (run, _RUN_FIELDS, "run key")):
        unknown = set(name) - known
        if unknown:
            raise ConfigError(f"unknown {where}(s): {', '.join(sorted(unknown))}")
    return params, prop, run


def _coerce(value):
    return yaml.safe_load(value)


def apply_overrides(data, overrides):
    """Apply ``key=value`` strings; keys are ``field`` or ``section.field``."""
    data = {k: dict(v) if isinstance(v, dict) else v for k, v in (data or {}).items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        value = _coerce(value)
        if "." in key:
            section, name = key.split(".", 1)
        elif key in _RUN_FIELDS:
            section, name = "run", key
        elif key in _PROP_FIELDS:
            section, name = "propagation", key
        else:
            section, name = "params", key
        data.setdefault(section, {})[name] = value
    return data


def config_from_dict(data):
    params, prop, run = _split(data)
    try:
        propagation = PropagationModel(**prop)
        sim = SimParams(propagation=propagation, **params)
        for key in ("T_values", "estimators", "assignments", "N_D_values"):
            if key in run:
                run[key] = tuple(run[key])
        return RunConfig(params=sim, **run)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides=()):
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides))


def config_to_dict(config):
    params = dataclasses.asdict(config.params)
    prop = params.pop("propagation")
    run = {k: (list(v) if isinstance(v, tuple) else v)
           for k, v in dataclasses.asdict(config).items() if k != "params"}
    return {"params": params, "propagation": prop, "run": run}
