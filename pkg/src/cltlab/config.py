"""Structured run configuration: JSON parsing, strict key validation, and
construction of process and experiment objects from declarative sections."""

from __future__ import annotations

import json
from typing import Callable, Optional

from .experiments import DEFAULT_N_GRID, ExperimentError, ExperimentPlan
from .processes import (
    DavydovChain,
    ExpandingMap,
    FunctionOfLinear,
    IIDBaseline,
    InnovationLaw,
    LinearProcess,
    ProcessError,
    ProcessSpec,
    davydov_schedule,
)


class ConfigError(ValueError):
    """Raised on any malformed, missing, or unknown configuration entry."""


TOP_KEYS = {"seed", "out", "budget", "tolerances", "process", "simulate", "rates",
            "conditions", "verify", "calibrate"}
PROCESS_KEYS = {
    "davydov": {"family", "p", "eps", "functional", "n_max", "schedule"},
    "linear": {"family", "coeffs", "innovation", "truncation"},
    "function_of_linear": {"family", "coeffs", "innovation", "truncation",
                           "h_rule", "gamma", "alpha", "centering_draws"},
    "expanding_map": {"family", "kind", "beta", "a", "breakpoints", "slopes",
                      "offsets", "observable", "burn_in"},
    "iid": {"family", "innovation"},
}
COEFF_KEYS = {
    "geometric": {"rule", "ratio", "scale"},
    "power": {"rule", "exponent", "scale"},
    "finite": {"rule", "values"},
}
INNOVATION_KEYS = {"kind", "q"}
SIMULATE_KEYS = {"n_grid", "replicates"}
RATES_KEYS = {"p", "r_list", "n_grid", "replicates", "target", "calibration"}
CONDITIONS_KEYS = {"ids", "p", "n_terms", "s", "alpha_decay", "q_moment",
                   "phi_decay", "mc", "outer"}
VERIFY_KEYS = {"checks", "cases", "perturb_kernel"}
CALIBRATE_KEYS = {"replicates", "r_list", "reps"}
TOLERANCE_KEYS = {"coboundary", "duality", "envelope_slack", "covariance_slack",
                  "smoothing_slack"}

DEFAULT_TOLERANCES = {
    "coboundary": 1e-8,
    "duality": 1e-8,
    "envelope_slack": 1e-9,
    "covariance_slack": 1e-9,
    "smoothing_slack": 1e-3,
}

DEFAULT_BUDGET = 2 * 10**9  # replicates x largest grid point


def _check_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown key '{where}.{key}'; allowed: {sorted(allowed)}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key '{where}.{key}'")
    return section[key]


def load_config(path: str) -> dict:
    """Parse and validate a JSON run configuration.

    Every key is checked against the schema; unknown or missing keys are hard
    errors so a config never silently falls back to defaults it did not name.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _check_keys(raw, TOP_KEYS, "config")
    seed = _require(raw, "seed", "config")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("'config.seed' must be a nonnegative integer")
    tol = dict(DEFAULT_TOLERANCES)
    if "tolerances" in raw:
        _check_keys(raw["tolerances"], TOLERANCE_KEYS, "tolerances")
        for key, val in raw["tolerances"].items():
            if not isinstance(val, (int, float)) or val <= 0:
                raise ConfigError(f"'tolerances.{key}' must be a positive number")
            tol[key] = float(val)
    raw = dict(raw)
    raw["tolerances"] = tol
    if "process" in raw:
        _validate_process(raw["process"])
    return raw


def _validate_process(section: dict) -> None:
    if not isinstance(section, dict):
        raise ConfigError("'process' must be an object")
    family = _require(section, "family", "process")
    if family not in PROCESS_KEYS:
        raise ConfigError(f"unknown 'process.family' {family!r}; allowed: {sorted(PROCESS_KEYS)}")
    _check_keys(section, PROCESS_KEYS[family], "process")
    if family == "davydov":
        _validate_davydov(section)
    if "coeffs" in section:
        _validate_coeffs(section["coeffs"])
    if "innovation" in section:
        _check_keys(section["innovation"], INNOVATION_KEYS, "process.innovation")


def _validate_davydov(section: dict) -> None:
    p = _require(section, "p", "process")
    eps = _require(section, "eps", "process")
    if not (2.0 < p <= 3.0):
        raise ConfigError("'process.p' must lie in (2, 3]")
    if not eps > 0:
        raise ConfigError("'process.eps' must be positive")
    schedule = section.get("schedule")
    if schedule is None:
        return
    # an explicit schedule pins the up-step probabilities the config expects;
    # it must satisfy the drift invariant and match the (p, eps) formula
    if not isinstance(schedule, list) or not schedule:
        raise ConfigError("'process.schedule' must be a nonempty list of probabilities")
    for i, a_n in enumerate(schedule):
        if i == 0:
            if abs(a_n - 0.5) > 1e-12:
                raise ConfigError("'process.schedule[0]' must equal 1/2")
        elif not (0.5 <= a_n < 1.0):
            raise ConfigError(
                f"'process.schedule[{i}]' = {a_n} violates the invariant 1/2 <= a_n < 1"
            )
    for i, a_n in enumerate(schedule):
        want = davydov_schedule(p, eps, i)
        if abs(a_n - want) > 1e-9:
            raise ConfigError(
                f"'process.schedule[{i}]' = {a_n} does not match the drift formula "
                f"value {want:.12g} for the given p and eps"
            )


def _validate_coeffs(section: dict) -> None:
    if not isinstance(section, dict):
        raise ConfigError("'process.coeffs' must be an object")
    rule = _require(section, "rule", "process.coeffs")
    if rule not in COEFF_KEYS:
        raise ConfigError(f"unknown 'process.coeffs.rule' {rule!r}; allowed: {sorted(COEFF_KEYS)}")
    _check_keys(section, COEFF_KEYS[rule], "process.coeffs")
    if rule == "geometric":
        ratio = _require(section, "ratio", "process.coeffs")
        if not (0.0 <= abs(ratio) < 1.0):
            raise ConfigError("'process.coeffs.ratio' must have modulus below 1")
    elif rule == "power":
        expo = _require(section, "exponent", "process.coeffs")
        if expo >= -1.0:
            raise ConfigError("'process.coeffs.exponent' must be below -1 for a summable tail")
    else:
        values = _require(section, "values", "process.coeffs")
        if not isinstance(values, dict) or not values:
            raise ConfigError("'process.coeffs.values' must map lag -> coefficient")
        for lag in values:
            try:
                int(lag)
            except ValueError:
                raise ConfigError(f"'process.coeffs.values' key {lag!r} is not an integer lag")


def build_coeff_rule(section: dict) -> Callable[[int], float]:
    """Coefficient rule a_j from its declarative form; the form is attached
    for round-trip serialization."""
    rule = section["rule"]
    if rule == "geometric":
        ratio = float(section["ratio"])
        scale = float(section.get("scale", 1.0))

        def fn(j: int) -> float:
            return scale * ratio**j if j >= 0 else 0.0

    elif rule == "power":
        expo = float(section["exponent"])
        scale = float(section.get("scale", 1.0))

        def fn(j: int) -> float:
            return scale * float(j) ** expo if j >= 1 else (scale if j == 0 else 0.0)

    else:
        table = {int(k): float(v) for k, v in section["values"].items()}

        def fn(j: int) -> float:
            return table.get(j, 0.0)

    fn.config = dict(section)  # type: ignore[attr-defined]
    return fn


def build_innovation(section: Optional[dict]) -> InnovationLaw:
    if section is None:
        return InnovationLaw("gaussian")
    try:
        return InnovationLaw(section["kind"], q=section.get("q"))
    except KeyError:
        raise ConfigError("missing required key 'process.innovation.kind'")
    except ProcessError as exc:
        raise ConfigError(f"'process.innovation': {exc}") from exc


def build_process(cfg: dict) -> ProcessSpec:
    """ProcessSpec from the validated 'process' section plus the global seed."""
    if "process" not in cfg:
        raise ConfigError("missing required key 'config.process'")
    section = cfg["process"]
    family = section["family"]
    seed = cfg["seed"]
    try:
        if family == "davydov":
            fam = DavydovChain(float(section["p"]), float(section["eps"]),
                               section.get("functional", "f1"), int(section.get("n_max", 400)))
            p_moment = float(section["p"])
        elif family == "linear":
            fam = LinearProcess(build_coeff_rule(_require(section, "coeffs", "process")),
                                build_innovation(section.get("innovation")),
                                int(section.get("truncation", 64)))
            p_moment = 3.0
        elif family == "function_of_linear":
            base = LinearProcess(build_coeff_rule(_require(section, "coeffs", "process")),
                                 build_innovation(section.get("innovation")),
                                 int(section.get("truncation", 64)))
            fam = FunctionOfLinear(base, section.get("h_rule", "identity"),
                                   float(section.get("gamma", 1.0)),
                                   float(section.get("alpha", 0.0)),
                                   int(section.get("centering_draws", 10**7)))
            p_moment = 3.0
        elif family == "expanding_map":
            fam = ExpandingMap(_require(section, "kind", "process"),
                               beta=float(section.get("beta", 2.0)),
                               a=float(section.get("a", 1.0)),
                               breakpoints=tuple(section.get("breakpoints", ())),
                               slopes=tuple(section.get("slopes", ())),
                               offsets=tuple(section.get("offsets", ())),
                               observable=section.get("observable", "identity"),
                               burn_in=int(section.get("burn_in", 1000)))
            p_moment = 3.0
        else:
            fam = IIDBaseline(build_innovation(section.get("innovation")))
            p_moment = 3.0
        return ProcessSpec(fam, seed=seed, p_moment=p_moment)
    except ProcessError as exc:
        raise ConfigError(f"'process': {exc}") from exc


def process_to_config(spec: ProcessSpec) -> dict:
    """Declarative form of a ProcessSpec; inverse of build_process for every
    family whose coefficient rule was built from a config."""
    fam = spec.family
    if isinstance(fam, DavydovChain):
        section = {"family": "davydov", "p": fam.p, "eps": fam.eps,
                   "functional": fam.functional, "n_max": fam.n_max}
    elif isinstance(fam, (LinearProcess, FunctionOfLinear)):
        base = fam if isinstance(fam, LinearProcess) else fam.base
        coeffs = getattr(base.coeff_rule, "config", None)
        if coeffs is None:
            raise ConfigError("coefficient rule was not built from a config; cannot serialize")
        section = {"family": "linear", "coeffs": coeffs, "truncation": base.truncation,
                   "innovation": {"kind": base.innovation.kind, "q": base.innovation.q}}
        if isinstance(fam, FunctionOfLinear):
            section.update(family="function_of_linear", h_rule=fam.h_rule, gamma=fam.gamma,
                           alpha=fam.alpha, centering_draws=fam.centering_draws)
    elif isinstance(fam, ExpandingMap):
        section = {"family": "expanding_map", "kind": fam.kind, "beta": fam.beta, "a": fam.a,
                   "breakpoints": list(fam.breakpoints), "slopes": list(fam.slopes),
                   "offsets": list(fam.offsets), "observable": fam.observable,
                   "burn_in": fam.burn_in}
        if callable(fam.observable):
            raise ConfigError("callable observable cannot be serialized")
    elif isinstance(fam, IIDBaseline):
        section = {"family": "iid",
                   "innovation": {"kind": fam.law.kind, "q": fam.law.q}}
    else:
        raise ConfigError(f"unsupported family: {type(fam).__name__}")
    return {"seed": spec.seed, "process": section}


def build_plan(cfg: dict) -> ExperimentPlan:
    """ExperimentPlan from the 'rates' section and the shared process."""
    if "rates" not in cfg:
        raise ConfigError("missing required key 'config.rates'")
    section = cfg["rates"]
    _check_keys(section, RATES_KEYS, "rates")
    spec = build_process(cfg)
    p = float(_require(section, "p", "rates"))
    r_list = tuple(float(r) for r in _require(section, "r_list", "rates"))
    if not r_list:
        raise ConfigError("'rates.r_list' must be nonempty")
    n_grid = tuple(int(n) for n in section.get("n_grid", DEFAULT_N_GRID))
    m = int(section.get("replicates", 10**4))
    try:
        return ExperimentPlan(spec, p, r_list, n_grid=n_grid, m=m,
                              target=section.get("target", "sigma2"),
                              seed=cfg["seed"],
                              calibration=bool(section.get("calibration", True)))
    except ExperimentError as exc:
        raise ConfigError(f"'rates': {exc}") from exc


def simulate_params(cfg: dict) -> tuple:
    if "simulate" not in cfg:
        raise ConfigError("missing required key 'config.simulate'")
    section = cfg["simulate"]
    _check_keys(section, SIMULATE_KEYS, "simulate")
    n_grid = tuple(int(n) for n in _require(section, "n_grid", "simulate"))
    m = int(_require(section, "replicates", "simulate"))
    if m < 100:
        raise ConfigError("'simulate.replicates' must be >= 100")
    if not n_grid or sorted(n_grid) != list(n_grid):
        raise ConfigError("'simulate.n_grid' must be a nondecreasing nonempty list")
    return n_grid, m


def canonical_json(cfg: dict) -> str:
    """Deterministic text form of a config used for content digests."""
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"))
