"""INI-style experiment files.

A config holds one experiment. Sections::

    [experiment]   n, H, T0, horizon, rollout_rounds, seed, logging_cadence,
                   window, fpa_theorem
    [values]       distribution = uniform | pmf = p1, p2, ..., pH
    [mechanism]    kind = spa | fpa | vcg, multipliers = 1.0, 0.5
    [learner]      defaults shared by every bidder (see LearnerSpec)
    [bidder.I]     per-bidder overrides of [learner] keys and of pmf (0-based I)

Numbers accept underscores and exponents (``5_000_000`` or ``5e6``).
"""
from __future__ import annotations

import configparser
from pathlib import Path

from .engine import SimulationConfig
from .grid import ConfigurationError, ValueDistribution, ValueGrid
from .learners import LearnerSpec
from .mechanisms import Mechanism, MechanismKind

_EXPERIMENT_INTS = ("n", "H", "T0", "horizon", "rollout_rounds", "seed", "logging_cadence", "window")
_EXPERIMENT_DEFAULTS = {"rollout_rounds": 0, "seed": 0, "logging_cadence": 0, "window": 1000}
_REQUIRED = ("n", "H", "T0", "horizon")


def _number(text: str, key: str):
    s = text.strip().replace("_", "")
    try:
        return int(s)
    except ValueError:
        pass
    try:
        x = float(s)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {text!r}") from None
    # "5e6" reads as an integer count
    if "." not in s and x.is_integer():
        return int(x)
    return x


def _int(text: str, key: str) -> int:
    x = _number(text, key)
    if not isinstance(x, int):
        raise ConfigurationError(f"{key}: expected an integer, got {text!r}")
    return x


def _floats(text: str, key: str) -> list:
    return [float(_number(p, key)) for p in text.replace("\n", ",").split(",") if p.strip()]


def _bool(text: str, key: str) -> bool:
    s = text.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {text!r}")


def _learner_dict(section) -> dict:
    out = {}
    for key, val in section.items():
        if key == "pmf":
            continue
        out[key] = val.strip() if key in ("policy", "feedback") else _number(val, key)
    return out


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep "H" and "T0" case-sensitive
    return cp


def parse_config(text: str, overrides: dict | None = None) -> SimulationConfig:
    """Build a validated :class:`SimulationConfig` from INI text.

    ``overrides`` maps ``"section.key"`` to a string value and is applied
    before validation (the CLI's ``--set`` flag).
    """
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for dotted, val in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        if not section:
            raise ConfigurationError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(val))

    if not cp.has_section("experiment"):
        raise ConfigurationError("missing [experiment] section")
    ex = cp["experiment"]
    for key in ex:
        if key not in _EXPERIMENT_INTS and key != "fpa_theorem":
            raise ConfigurationError(f"unknown [experiment] key {key!r}")
    missing = [k for k in _REQUIRED if k not in ex]
    if missing:
        raise ConfigurationError(f"[experiment] is missing {', '.join(missing)}")
    e = dict(_EXPERIMENT_DEFAULTS)
    e.update({k: _int(ex[k], k) for k in _EXPERIMENT_INTS if k in ex})
    fpa_theorem = _bool(ex.get("fpa_theorem", "false"), "fpa_theorem")
    n = e["n"]
    grid = ValueGrid(e["H"])

    base_dist = ValueDistribution.uniform(grid)
    if cp.has_section("values"):
        vs = cp["values"]
        if "pmf" in vs:
            base_dist = ValueDistribution.from_pmf(grid, _floats(vs["pmf"], "pmf"))
        elif vs.get("distribution", "uniform").strip().lower() != "uniform":
            raise ConfigurationError("[values] distribution must be 'uniform' unless pmf is given")

    ms = cp["mechanism"] if cp.has_section("mechanism") else {}
    kind = MechanismKind.parse(ms.get("kind", "spa"))
    mults = tuple(_floats(ms["multipliers"], "multipliers")) if "multipliers" in ms else (1.0,)
    mech = Mechanism(kind, mults)

    base = _learner_dict(cp["learner"]) if cp.has_section("learner") else {}
    dists, learners = [], []
    for i in range(n):
        name = f"bidder.{i}"
        learner = dict(base)
        dist = base_dist
        if cp.has_section(name):
            learner.update(_learner_dict(cp[name]))
            if "pmf" in cp[name]:
                dist = ValueDistribution.from_pmf(grid, _floats(cp[name]["pmf"], "pmf"))
        dists.append(dist)
        learners.append(LearnerSpec.from_dict(learner))
    for section in cp.sections():
        if section.startswith("bidder."):
            idx = section.partition(".")[2]
            if not idx.isdigit() or int(idx) >= n:
                raise ConfigurationError(f"[{section}] does not name a bidder in 0..{n - 1}")
        elif section not in ("experiment", "values", "mechanism", "learner"):
            raise ConfigurationError(f"unknown section [{section}]")

    return SimulationConfig(n, grid, dists, mech, learners, e["T0"], e["horizon"], e["seed"],
                            logging_cadence=e["logging_cadence"], rollout_rounds=e["rollout_rounds"],
                            window=e["window"], fpa_theorem=fpa_theorem).validate()


def load_config(path, overrides: dict | None = None) -> SimulationConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


def dump_config(cfg: SimulationConfig) -> str:
    """Render ``cfg`` back to INI text that :func:`parse_config` reproduces."""
    cp = _parser()
    cp["experiment"] = {
        "n": str(cfg.n), "H": str(cfg.grid.H), "T0": str(cfg.T0), "horizon": str(cfg.horizon),
        "rollout_rounds": str(cfg.rollout_rounds), "seed": str(int(cfg.seed)),
        "logging_cadence": str(cfg.logging_cadence), "window": str(cfg.window),
        "fpa_theorem": "true" if cfg.fpa_theorem else "false",
    }
    cp["mechanism"] = {"kind": cfg.mechanism.kind.name.lower(),
                       "multipliers": ", ".join(repr(float(m)) for m in cfg.mechanism.multipliers)}
    for i, (dist, spec) in enumerate(zip(cfg.distributions, cfg.learners)):
        sec = {k: str(v) for k, v in spec.to_dict().items()}
        if not dist.is_uniform:
            sec["pmf"] = ", ".join(repr(float(p)) for p in dist.pmf)
        cp[f"bidder.{i}"] = sec
    lines = []
    for name in cp.sections():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {v}" for k, v in cp[name].items())
        lines.append("")
    return "\n".join(lines)
