"""Scenario files: a TOML document with a fixed key vocabulary.

Top-level keys: name, lambda, n_particles, cells, dt, t_end, thermostat,
momentum_projection, seed.  Sections: [restitution], [init], [schedule],
[probe], [sweep], [output].  Unknown keys are rejected with their dotted
location; missing required keys, type mismatches, and range violations
raise ScenarioError naming the key.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dsmc import SimConfig
from .ensemble import InitSpec, Maxwellian, Modulated, TwoTemperature
from .errors import ConfigError, ScenarioError
from .restitution import CappedPowerLaw, Constant, RestitutionModel, Viscoelastic

__all__ = ["Scenario", "parse_scenario", "parse_scenario_file", "serialize_scenario"]

_PROBE_KINDS = ("mu", "steady", "haff", "sweep")

_SCHEMA = {
    "": {"name", "lambda", "n_particles", "cells", "dt", "t_end",
         "thermostat", "momentum_projection", "seed"},
    "restitution": {"kind", "e0", "a", "gamma", "e_min"},
    "init": {"kind", "theta", "theta1", "theta2", "fraction", "epsilon", "k"},
    "schedule": {"moments_period", "modes"},
    "probe": {"kind", "delta", "replicas"},
    "sweep": {"lambdas"},
    "output": {"dir"},
}


@dataclass(frozen=True)
class Scenario:
    """Fully validated scenario: simulation config plus run plumbing."""

    name: str
    config: SimConfig
    init: InitSpec
    moments_period: float
    modes: tuple[tuple[int, int, int], ...] = ()
    probe_kind: str | None = None
    probe_delta: float = 0.1
    probe_replicas: int = 8
    sweep_lambdas: tuple[float, ...] = ()
    output_dir: str = "out"


def _fail(key: str, msg: str):
    raise ScenarioError(f"{key}: {msg}")


def _check_unknown(doc: dict) -> None:
    for key, val in doc.items():
        if isinstance(val, dict):
            if key not in _SCHEMA or key == "":
                _fail(key, "unknown section")
            for sub in val:
                if isinstance(val[sub], dict):
                    _fail(f"{key}.{sub}", "unexpected nested table")
                if sub not in _SCHEMA[key]:
                    _fail(f"{key}.{sub}", "unknown key")
        else:
            if key not in _SCHEMA[""]:
                _fail(key, "unknown key")


def _get(doc: dict, key: str, typ, default=..., section: str = ""):
    holder = doc.get(section, {}) if section else doc
    label = f"{section}.{key}" if section else key
    if key not in holder:
        if default is ...:
            _fail(label, "missing required key")
        return default
    val = holder[key]
    if typ is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if typ is not None and not isinstance(val, typ) or isinstance(val, bool) and typ is not bool:
        _fail(label, f"expected {getattr(typ, '__name__', typ)}, got {type(val).__name__}")
    return val


def _restitution(doc: dict) -> RestitutionModel:
    kind = _get(doc, "kind", str, section="restitution")
    try:
        if kind == "constant":
            return Constant(e0=_get(doc, "e0", float, section="restitution"))
        if kind == "viscoelastic":
            return Viscoelastic(a=_get(doc, "a", float, 1.0, section="restitution"))
        if kind == "capped":
            return CappedPowerLaw(a=_get(doc, "a", float, section="restitution"),
                                  gamma=_get(doc, "gamma", float, section="restitution"),
                                  e_min=_get(doc, "e_min", float, section="restitution"))
    except (ConfigError, ValueError) as exc:
        _fail("restitution", str(exc))
    _fail("restitution.kind", f"must be one of constant/viscoelastic/capped, got {kind!r}")


def _init_spec(doc: dict) -> InitSpec:
    if "init" not in doc:
        return Maxwellian(theta=1.0)
    kind = _get(doc, "kind", str, section="init")
    try:
        if kind == "maxwellian":
            return Maxwellian(theta=_get(doc, "theta", float, 1.0, section="init"))
        if kind == "two_temperature":
            return TwoTemperature(theta1=_get(doc, "theta1", float, section="init"),
                                  theta2=_get(doc, "theta2", float, section="init"),
                                  fraction=_get(doc, "fraction", float, 0.5, section="init"))
        if kind == "modulated":
            k = _int_triplet(_get(doc, "k", list, [1, 0, 0], section="init"), "init.k")
            return Modulated(theta=_get(doc, "theta", float, 1.0, section="init"),
                             epsilon=_get(doc, "epsilon", float, section="init"), k=k)
    except (ConfigError, ValueError) as exc:
        _fail("init", str(exc))
    _fail("init.kind", f"must be one of maxwellian/two_temperature/modulated, got {kind!r}")


def _int_triplet(val, label: str) -> tuple[int, int, int]:
    if (not isinstance(val, list) or len(val) != 3
            or any(isinstance(x, bool) or not isinstance(x, int) for x in val)):
        _fail(label, f"expected a list of 3 integers, got {val!r}")
    return tuple(int(x) for x in val)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    """Parse and validate a scenario document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"syntax: {exc}") from exc
    _check_unknown(doc)

    lam = _get(doc, "lambda", float)
    if not (0.0 <= lam <= 1.0):
        _fail("lambda", f"must lie in [0, 1], got {lam}")
    n_particles = _get(doc, "n_particles", int)
    if n_particles < 2:
        _fail("n_particles", f"must be >= 2, got {n_particles}")
    t_end = _get(doc, "t_end", float)
    if not (t_end > 0.0):
        _fail("t_end", f"must be positive, got {t_end}")
    dt = _get(doc, "dt", float, None)
    if dt is not None and not (dt > 0.0):
        _fail("dt", f"must be positive, got {dt}")
    cells = _int_triplet(_get(doc, "cells", list, [1, 1, 1]), "cells")
    if any(c < 1 for c in cells):
        _fail("cells", f"cell counts must be positive, got {cells}")
    seed = _get(doc, "seed", int, 0)
    if seed < 0:
        _fail("seed", f"must be nonnegative, got {seed}")
    thermostat = _get(doc, "thermostat", bool, True)
    momentum_projection = _get(doc, "momentum_projection", bool, True)
    model = _restitution(doc)
    init = _init_spec(doc)

    moments_period = _get(doc, "moments_period", float, t_end / 200.0, section="schedule")
    if not (moments_period > 0.0):
        _fail("schedule.moments_period", f"must be positive, got {moments_period}")
    raw_modes = _get(doc, "modes", list, [], section="schedule")
    modes = tuple(_int_triplet(m, f"schedule.modes[{i}]") for i, m in enumerate(raw_modes))
    for i, m in enumerate(modes):
        if all(c == 0 for c in m):
            _fail(f"schedule.modes[{i}]", "wave vector must be nonzero")

    probe_kind = _get(doc, "kind", str, None, section="probe")
    if probe_kind is not None and probe_kind not in _PROBE_KINDS:
        _fail("probe.kind", f"must be one of {'/'.join(_PROBE_KINDS)}, got {probe_kind!r}")
    probe_delta = _get(doc, "delta", float, 0.1, section="probe")
    if not (0.0 < probe_delta <= 0.2):
        _fail("probe.delta", f"must lie in (0, 0.2], got {probe_delta}")
    probe_replicas = _get(doc, "replicas", int, 8, section="probe")
    if probe_replicas < 2:
        _fail("probe.replicas", f"must be >= 2, got {probe_replicas}")

    raw_lams = _get(doc, "lambdas", list, [], section="sweep")
    sweep_lambdas = []
    for i, x in enumerate(raw_lams):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            _fail(f"sweep.lambdas[{i}]", f"expected a number, got {x!r}")
        x = float(x)
        if not (0.0 < x < 1.0):
            _fail(f"sweep.lambdas[{i}]", f"sweep lambdas must lie in (0, 1), got {x}")
        sweep_lambdas.append(x)
    if len(set(sweep_lambdas)) != len(sweep_lambdas):
        _fail("sweep.lambdas", "sweep lambdas must be distinct")
    if probe_kind == "sweep" and len(sweep_lambdas) < 4:
        _fail("sweep.lambdas", "a sweep probe needs at least 4 lambda values")

    output_dir = _get(doc, "dir", str, "out", section="output")
    scen_name = _get(doc, "name", str, name)

    try:
        config = SimConfig(lam=lam, model=model, n_particles=n_particles,
                           cell_counts=cells, dt=dt, thermostat_on=thermostat,
                           momentum_projection=momentum_projection, seed=seed,
                           t_end=t_end)
    except ConfigError as exc:
        raise ScenarioError(str(exc)) from exc
    return Scenario(name=scen_name, config=config, init=init,
                    moments_period=moments_period, modes=modes,
                    probe_kind=probe_kind, probe_delta=probe_delta,
                    probe_replicas=probe_replicas,
                    sweep_lambdas=tuple(sweep_lambdas), output_dir=output_dir)


def parse_scenario_file(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    import os.path
    return parse_scenario(text, name=os.path.splitext(os.path.basename(path))[0])


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ScenarioError(f"cannot serialize {value!r}")


def serialize_scenario(s: Scenario) -> str:
    """Emit a TOML document that parses back to an equal Scenario."""
    lines = [f"name = {_fmt(s.name)}",
             f"lambda = {_fmt(s.config.lam)}",
             f"n_particles = {_fmt(s.config.n_particles)}",
             f"cells = {_fmt(list(s.config.cell_counts))}"]
    if s.config.dt is not None:
        lines.append(f"dt = {_fmt(s.config.dt)}")
    lines += [f"t_end = {_fmt(s.config.t_end)}",
              f"thermostat = {_fmt(s.config.thermostat_on)}",
              f"momentum_projection = {_fmt(s.config.momentum_projection)}",
              f"seed = {_fmt(s.config.seed)}", ""]

    m = s.config.model
    lines.append("[restitution]")
    if isinstance(m, Constant):
        lines += [f'kind = "constant"', f"e0 = {_fmt(m.e0)}"]
    elif isinstance(m, Viscoelastic):
        lines += [f'kind = "viscoelastic"', f"a = {_fmt(m.a)}"]
    else:
        lines += [f'kind = "capped"', f"a = {_fmt(m.a)}",
                  f"gamma = {_fmt(m.gamma)}", f"e_min = {_fmt(m.e_min)}"]
    lines.append("")

    init = s.init
    lines.append("[init]")
    if isinstance(init, Maxwellian):
        lines += [f'kind = "maxwellian"', f"theta = {_fmt(init.theta)}"]
    elif isinstance(init, TwoTemperature):
        lines += [f'kind = "two_temperature"', f"theta1 = {_fmt(init.theta1)}",
                  f"theta2 = {_fmt(init.theta2)}", f"fraction = {_fmt(init.fraction)}"]
    else:
        lines += [f'kind = "modulated"', f"theta = {_fmt(init.theta)}",
                  f"epsilon = {_fmt(init.epsilon)}", f"k = {_fmt(list(init.k))}"]
    lines.append("")

    lines += ["[schedule]", f"moments_period = {_fmt(s.moments_period)}",
              f"modes = {_fmt([list(m) for m in s.modes])}", ""]
    if s.probe_kind is not None:
        lines += ["[probe]", f"kind = {_fmt(s.probe_kind)}",
                  f"delta = {_fmt(s.probe_delta)}",
                  f"replicas = {_fmt(s.probe_replicas)}", ""]
    if s.sweep_lambdas:
        lines += ["[sweep]", f"lambdas = {_fmt(list(s.sweep_lambdas))}", ""]
    lines += ["[output]", f"dir = {_fmt(s.output_dir)}", ""]
    return "\n".join(lines)
