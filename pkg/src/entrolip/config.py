"""Experiment configuration: parsing, validation and line-aware diagnostics.

Configs are YAML (JSON is accepted too, being a YAML subset). Unknown keys are
errors so that misspelled tolerance names never pass silently.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

CONFIG_VERSION = 1

EXPERIMENTS = ("verify-bounds", "gaussian-sharpness", "convergence", "cov-ineq", "pointwise", "commuting")

FAMILIES = {
    "gaussian": {"required": ("covariance",), "optional": ("mean",)},
    "perturbed": {"required": ("base_curvature", "amplitude", "frequency"), "optional": ()},
    "separable-perturbed": {
        "required": ("base_curvatures", "amplitudes", "frequencies"), "optional": (),
    },
    "quartic": {"required": (), "optional": ("dim",)},
}

TOLERANCE_DEFAULTS = {
    "marginal": 1e-9,
    "max_iter": 100_000,
    "slack": 1e-3,
    "sharpness": 0.02,
    "pointwise_slack": 1e-6,
    "cov_slack": 1e-8,
    "commuting_slack": 1e-2,
    "convergence_rate": None,
}

QUERY_MODES = ("interior", "grid", "random")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending field path and source line."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


@dataclass
class PotentialSpec:
    family: str
    params: dict


@dataclass
class QuerySpec:
    mode: str = "interior"
    fraction: float = 0.8
    box: Optional[list] = None
    count: int = 41
    stride: int = 1


@dataclass
class ExperimentConfig:
    experiment: str
    source: PotentialSpec
    target: Optional[PotentialSpec]
    epsilon_list: list
    resolution: int
    version: int = CONFIG_VERSION
    box_override: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=lambda: dict(TOLERANCE_DEFAULTS))
    queries: QuerySpec = field(default_factory=QuerySpec)
    output: dict = field(default_factory=dict)
    seed: int = 0
    commuting: Optional[dict] = None
    raw: dict = field(default_factory=dict, repr=False)


def _line_index(node, path=(), index=None):
    """Map key paths to 1-based source lines by walking the composed YAML tree."""
    if index is None:
        index = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            key_path = path + (str(key_node.value),)
            index[key_path] = key_node.start_mark.line + 1
            _line_index(value_node, key_path, index)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            item_path = path + (str(i),)
            index[item_path] = item.start_mark.line + 1
            _line_index(item, item_path, index)
    return index


class _Checker:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, message, path):
        line = None
        for k in range(len(path), 0, -1):
            if tuple(path[:k]) in self.lines:
                line = self.lines[tuple(path[:k])]
                break
        raise ConfigError(message, field=".".join(path) or None, line=line)

    def mapping(self, value, path, allowed, required=()):
        if not isinstance(value, dict):
            self.fail("expected a mapping", path)
        for key in value:
            if key not in allowed:
                self.fail(f"unknown key '{key}'", path + (str(key),))
        for key in required:
            if key not in value:
                self.fail(f"missing required key '{key}'", path)
        return value

    def number(self, value, path, positive=False, integer=False, minimum=None):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(f"expected a number, got {value!r}", path)
        if integer and int(value) != value:
            self.fail(f"expected an integer, got {value!r}", path)
        if positive and not value > 0:
            self.fail(f"must be positive, got {value!r}", path)
        if minimum is not None and value < minimum:
            self.fail(f"must be at least {minimum}, got {value!r}", path)
        return int(value) if integer else float(value)

    def numbers(self, value, path, shape=None):
        if not isinstance(value, list):
            self.fail("expected a list", path)
        out = []
        for i, item in enumerate(value):
            if isinstance(item, list):
                out.append(self.numbers(item, path + (str(i),)))
            else:
                out.append(self.number(item, path + (str(i),)))
        return out

    def box(self, value, path):
        rows = self.numbers(value, path)
        if not rows or not all(isinstance(r, list) and len(r) == 2 for r in rows):
            self.fail("expected a list of [lower, upper] pairs", path)
        if not all(lo < hi for lo, hi in rows):
            self.fail("every axis needs lower < upper", path)
        return rows


def _potential(chk, value, path):
    if not isinstance(value, dict):
        chk.fail("expected a mapping", path)
    if "family" not in value:
        chk.fail("missing required key 'family'", path)
    family = value["family"]
    if family not in FAMILIES:
        chk.fail(f"unknown family '{family}' (choose from {', '.join(FAMILIES)})", path + ("family",))
    spec = FAMILIES[family]
    allowed = {"family", *spec["required"], *spec["optional"]}
    chk.mapping(value, path, allowed=allowed, required=spec["required"])
    params = {}
    for key, raw in value.items():
        if key == "family":
            continue
        params[key] = chk.numbers(raw, path + (key,)) if isinstance(raw, list) else chk.number(raw, path + (key,))
    return PotentialSpec(family=family, params=params)


TOP_LEVEL = {
    "version", "experiment", "source", "target", "epsilon_list", "resolution", "box_override",
    "tolerances", "queries", "output", "seed", "commuting",
}


def parse_config(text):
    """Parse and validate config text, raising :class:`ConfigError` on any problem."""
    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"could not parse config: {exc}", line=mark.line + 1 if mark else None) from None
    if data is None:
        raise ConfigError("config is empty")
    chk = _Checker(_line_index(node))
    chk.mapping(data, (), TOP_LEVEL, required=("version", "experiment", "source"))

    version = chk.number(data["version"], ("version",), integer=True)
    if version != CONFIG_VERSION:
        chk.fail(f"unsupported version {version} (expected {CONFIG_VERSION})", ("version",))
    experiment = data["experiment"]
    if experiment not in EXPERIMENTS:
        chk.fail(f"unknown experiment '{experiment}' (choose from {', '.join(EXPERIMENTS)})",
                 ("experiment",))

    source = _potential(chk, data["source"], ("source",))
    target = _potential(chk, data["target"], ("target",)) if "target" in data else None
    needs_target = experiment not in ("cov-ineq", "commuting")
    if needs_target and target is None:
        chk.fail(f"experiment '{experiment}' needs a target potential", ())

    eps_raw = data.get("epsilon_list", [])
    if needs_target or "epsilon_list" in data:
        if not isinstance(eps_raw, list) or not eps_raw:
            chk.fail("epsilon_list must be a nonempty list", ("epsilon_list",))
    epsilons = []
    for i, e in enumerate(eps_raw):
        epsilons.append(chk.number(e, ("epsilon_list", str(i)), positive=True))
    if experiment == "convergence" and any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        chk.fail("epsilon_list must be strictly decreasing for a convergence study", ("epsilon_list",))

    resolution = chk.number(data.get("resolution", 512), ("resolution",), integer=True, minimum=2)

    box_override = {}
    if "box_override" in data:
        chk.mapping(data["box_override"], ("box_override",), {"source", "target"})
        for side, box in data["box_override"].items():
            box_override[side] = chk.box(box, ("box_override", side))

    tolerances = dict(TOLERANCE_DEFAULTS)
    if "tolerances" in data:
        chk.mapping(data["tolerances"], ("tolerances",), set(TOLERANCE_DEFAULTS))
        for key, raw in data["tolerances"].items():
            integer = key == "max_iter"
            tolerances[key] = chk.number(raw, ("tolerances", key), integer=integer,
                                         positive=key in ("marginal", "max_iter", "sharpness"),
                                         minimum=0)

    queries = QuerySpec()
    if "queries" in data:
        q = chk.mapping(data["queries"], ("queries",), {"mode", "fraction", "box", "count", "stride"})
        mode = q.get("mode", "interior")
        if mode not in QUERY_MODES:
            chk.fail(f"unknown query mode '{mode}' (choose from {', '.join(QUERY_MODES)})",
                     ("queries", "mode"))
        queries.mode = mode
        if "fraction" in q:
            queries.fraction = chk.number(q["fraction"], ("queries", "fraction"), positive=True)
            if queries.fraction > 1:
                chk.fail("fraction must be at most 1", ("queries", "fraction"))
        if "box" in q:
            queries.box = chk.box(q["box"], ("queries", "box"))
        if "count" in q:
            queries.count = chk.number(q["count"], ("queries", "count"), integer=True, minimum=1)
        if "stride" in q:
            queries.stride = chk.number(q["stride"], ("queries", "stride"), integer=True, minimum=1)
        if mode in ("grid", "random") and queries.box is None:
            chk.fail(f"query mode '{mode}' needs a box", ("queries",))

    output = {}
    if "output" in data:
        chk.mapping(data["output"], ("output",), {"report", "table"})
        for key, raw in data["output"].items():
            if not isinstance(raw, str) or not raw:
                chk.fail("expected a file path", ("output", key))
            output[key] = raw

    seed = chk.number(data.get("seed", 0), ("seed",), integer=True, minimum=0)

    commuting = None
    if "commuting" in data:
        chk.mapping(data["commuting"], ("commuting",), {"A", "B"}, required=("A", "B"))
        commuting = {k: chk.numbers(v, ("commuting", k)) for k, v in data["commuting"].items()}
    if experiment == "commuting" and commuting is None:
        if source.family != "gaussian" or target is None or target.family != "gaussian":
            chk.fail("commuting needs either a 'commuting' section with A and B, "
                     "or Gaussian source and target", ())

    return ExperimentConfig(
        experiment=experiment, source=source, target=target, epsilon_list=epsilons,
        resolution=resolution, version=version, box_override=box_override,
        tolerances=tolerances, queries=queries, output=output, seed=seed,
        commuting=commuting, raw=data,
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)
