"""TOML instance and study files.

Instance file::

    schema = 1

    [instance]
    name = "toy"
    T = 4
    K = 20
    z = 1
    R = 10
    v = 0.5
    h = 1
    b = 5
    bounds = [[-40, 60], [-40, 60]]   # optional
    q_max = 40                        # optional

    [[location]]
    family = "poisson"
    pattern = "SIN1"                  # or: means = [...]
    scale = 10

    [[location]]
    family = "normal"
    means = [8, 9, 10, 11]
    cv = 0.1

An ``empirical`` location lists ``pmfs = [{min = 0, probs = [...]}, ...]``,
one per period.  A ``[patterns]`` table overrides pattern parameters.

Study file::

    schema = 1

    [study]
    preset = "four-period"            # or "ten-period"; optional
    n_instances = 60
    seed = 4
    # any other StudySpec field

    [heuristic]                       # optional HeuristicSettings fields
    rel_halfwidth = 0.001
"""
from __future__ import annotations

from pathlib import Path
from typing import Mapping

from .core import Instance
from .demand import DemandSpec, make_pattern
from .errors import ConfigurationError
from .experiments import HeuristicSettings, StudySpec, four_period_spec, ten_period_spec

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

SCHEMA_VERSION = 1
_INSTANCE_KEYS = {"name", "T", "K", "z", "R", "v", "h", "b", "bounds", "q_max",
                  "truncation_eps"}
_LOCATION_KEYS = {"family", "pattern", "scale", "means", "cv", "pmfs"}


def _check_schema(doc: Mapping, what: str) -> None:
    ver = doc.get("schema")
    if ver is None:
        raise ConfigurationError(f"{what}: missing 'schema' version")
    if ver != SCHEMA_VERSION:
        raise ConfigurationError(f"{what}: unsupported schema {ver} (expected {SCHEMA_VERSION})")


def _read(path_or_text) -> dict:
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str)
                                          and "\n" not in path_or_text
                                          and Path(path_or_text).exists()):
        text = Path(path_or_text).read_text()
    else:
        text = str(path_or_text)
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed TOML: {exc}") from exc


def instance_from_dict(doc: Mapping) -> Instance:
    _check_schema(doc, "instance file")
    body = dict(doc.get("instance", {}))
    unknown = set(body) - _INSTANCE_KEYS
    if unknown:
        raise ConfigurationError(f"unknown instance keys: {sorted(unknown)}")
    missing = {"T", "K", "z", "R", "v", "h", "b"} - set(body)
    if missing:
        raise ConfigurationError(f"instance is missing {sorted(missing)}")
    locs = doc.get("location", [])
    if len(locs) != 2:
        raise ConfigurationError("an instance needs exactly two [[location]] tables")
    overrides = doc.get("patterns")
    T = int(body["T"])
    demand = tuple(_location(loc, T, overrides) for loc in locs)
    bounds = body.get("bounds")
    if bounds is not None:
        bounds = tuple(tuple(int(x) for x in pair) for pair in bounds)
    kw = {k: float(body[k]) for k in ("K", "z", "R", "v", "h", "b")}
    return Instance(T=T, demand=demand, bounds=bounds,
                    q_max=None if body.get("q_max") is None else int(body["q_max"]),
                    truncation_eps=float(body.get("truncation_eps", 1e-5)),
                    name=str(body.get("name", "")), **kw)


def _location(loc: Mapping, T: int, overrides) -> DemandSpec:
    unknown = set(loc) - _LOCATION_KEYS
    if unknown:
        raise ConfigurationError(f"unknown location keys: {sorted(unknown)}")
    family = loc.get("family")
    if family is None:
        raise ConfigurationError("location needs a 'family'")
    cv = float(loc.get("cv", 0.0))
    if "pmfs" in loc:
        pmfs = tuple((int(p["min"]), tuple(p["probs"])) for p in loc["pmfs"])
        return DemandSpec(family, (), cv, pmfs)
    if "pattern" in loc:
        if "means" in loc:
            raise ConfigurationError("give either 'pattern' or 'means', not both")
        means = make_pattern(loc["pattern"], T, float(loc.get("scale", 10.0)), overrides)
        if family == "deterministic":
            means = [int(m + 0.5) for m in means]
    elif "means" in loc:
        means = loc["means"]
    else:
        raise ConfigurationError("location needs 'pattern', 'means' or 'pmfs'")
    return DemandSpec(family, tuple(means), cv)


def load_instance(source) -> Instance:
    """Instance from a TOML path or TOML text."""
    return instance_from_dict(_read(source))


_PRESETS = {"four-period": four_period_spec, "ten-period": ten_period_spec}


def study_from_dict(doc: Mapping) -> StudySpec:
    _check_schema(doc, "study file")
    body = dict(doc.get("study", {}))
    preset = body.pop("preset", None)
    if "patterns" in doc:
        body["pattern_config"] = dict(doc["patterns"])
    try:
        if "heuristic" in doc:
            body["heuristic"] = HeuristicSettings(**doc["heuristic"])
        if preset is None:
            return StudySpec.from_dict(body)
        if preset not in _PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; use one of {sorted(_PRESETS)}")
        base = _PRESETS[preset]()
        merged = base.to_dict()
        merged["heuristic"] = base.heuristic
        merged.update(body)
        if preset == "ten-period":
            if "name" not in body and "horizon" in body:
                merged["name"] = f"p{body['horizon']}"
            if "n_pattern_pairs" in body and "sampling" not in body:
                merged["sampling"] = "pairs"
        return StudySpec.from_dict(merged)
    except TypeError as exc:
        raise ConfigurationError(f"bad study settings: {exc}") from exc


def load_study(source) -> StudySpec:
    """Study spec from a TOML path or TOML text."""
    return study_from_dict(_read(source))
