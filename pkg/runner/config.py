"""
Experiment configuration

Flat key=value files with dotted keys (map.a=0.01), parsed with
python-dotenv. Precedence, lowest first: SCHEMA defaults, the config file,
--set overrides, then the dedicated --seed/--out/--workers flags.
"""

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, Optional, Tuple

from dotenv import dotenv_values

from dynamics.errors import ConfigError
from dynamics.map_core import MapParams
from dynamics.orbit_engine import AnalysisConstants
from dynamics.parallel import resolve_workers
from srb.observables import observable_names

EXPERIMENTS = (
    "validate", "tail", "partition", "certify", "scan", "density",
    "stability", "correlations", "deviations", "clt", "entropy",
)
AUTO = "auto"


def _bool(raw: str) -> bool:
    value = raw.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _int(raw: str) -> int:
    return int(raw.strip())


def _float(raw: str) -> float:
    return float(raw.strip())


def _text(raw: str) -> str:
    value = raw.strip()
    if not value:
        raise ValueError("must not be empty")
    return value


def _auto(parse: Callable[[str], Any]) -> Callable[[str], Any]:
    def parser(raw: str):
        return None if raw.strip().lower() == AUTO else parse(raw)
    return parser


def _list(parse: Callable[[str], Any]) -> Callable[[str], Tuple]:
    def parser(raw: str):
        items = [item for item in raw.split(",") if item.strip()]
        if not items:
            raise ValueError("expected a comma-separated list")
        return tuple(parse(item) for item in items)
    return parser


# key -> (parser, default as written in a config file)
SCHEMA: Dict[str, Tuple[Callable[[str], Any], str]] = {
    "map.a": (_float, "0.0"),
    "map.s": (_float, "1.5"),
    "map.a_max": (_float, "0.5"),
    "consts.lambda_c": (_float, "1.2"),
    "consts.alpha": (_float, "0.05"),
    "consts.delta_big": (_int, "5"),
    "consts.theta": (_auto(_int), AUTO),
    "consts.epsilon_rec": (_auto(_float), AUTO),
    "consts.c_exp": (_auto(_float), AUTO),
    "run.seed": (_int, "0"),
    "run.sample_size": (_int, "10000"),
    "run.n_max": (_int, "500"),
    "run.grid_size": (_int, "64"),
    "run.n_part": (_int, "200"),
    "run.max_elements": (_int, "1000000"),
    "run.max_depth": (_auto(_int), AUTO),
    "run.distortion_every": (_int, "10"),
    "run.probes": (_int, "5"),
    "run.bound_span": (_int, "20"),
    "run.horizon": (_int, "1000"),
    "run.eps_fa": (_float, "0.1"),
    "run.coverage_bins": (_int, "64"),
    "run.require_c4": (_bool, "false"),
    "run.a_lo": (_float, "0.002"),
    "run.a_hi": (_float, "0.2"),
    "run.grid": (_int, "100"),
    "run.burn_in": (_int, "100"),
    "run.n_steps": (_int, "20000"),
    "run.bins": (_int, "1024"),
    "run.subdivisions": (_int, "32"),
    "run.tol": (_float, "1e-10"),
    "run.max_iter": (_int, "100000"),
    "run.steps": (_list(_float), "0.04,0.02,0.01"),
    "run.phi": (_text, "identity"),
    "run.psi": (_text, "identity"),
    "run.max_lag": (_int, "20"),
    "run.orbit_length": (_int, "2000"),
    "run.epsilon": (_float, "0.1"),
    "run.n_values": (_list(_int), "10,20,40,80,160,320"),
    "run.clt_n": (_int, "2000"),
    "run.blocks": (_int, "10"),
    "output_dir": (_text, "results"),
}

# smallest accepted value per integer run key
RUN_MINIMUMS: Dict[str, int] = {
    "seed": 0, "sample_size": 1, "n_max": 1, "grid_size": 16, "n_part": 1, "max_elements": 1,
    "distortion_every": 0, "probes": 2, "bound_span": 0, "horizon": 100, "coverage_bins": 1,
    "grid": 1, "burn_in": 0, "n_steps": 1, "bins": 16, "subdivisions": 8, "max_iter": 1,
    "max_lag": 0, "orbit_length": 1, "clt_n": 1000, "blocks": 2,
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    map: MapParams
    consts: AnalysisConstants
    run: Dict[str, Any]
    output_dir: Path
    workers: int = 1
    echo: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.run["seed"]


def _split_override(item: str) -> Tuple[str, str]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, value = item.split("=", 1)
    return key.strip(), value


def _read_file(path: Path) -> Dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigError(f"{path}: {key!r} has no value")
        raw[key] = value
    return raw


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


def _check_run(experiment: str, run: Dict[str, Any], params: MapParams, consts: AnalysisConstants):
    """Reject run values an experiment would only trip over after writing some of its files"""
    for key, minimum in RUN_MINIMUMS.items():
        _require(run[key] >= minimum, f"run.{key} must be >= {minimum}, got {run[key]}")
    _require(0 < run["eps_fa"] <= 1, f"run.eps_fa must be in (0, 1], got {run['eps_fa']}")
    _require(run["tol"] > 0, "run.tol must be positive")
    _require(run["epsilon"] > 0, "run.epsilon must be positive")
    _require(min(run["n_values"]) >= 1, f"run.n_values must all be >= 1, got {list(run['n_values'])}")
    _require(min(run["steps"]) > 0, f"run.steps must all be positive, got {list(run['steps'])}")
    _require(params.a + max(run["steps"]) < 2, "map.a + max(run.steps) must stay below 2")
    _require(0 <= run["a_lo"] <= run["a_hi"] < 2, "run.a_lo and run.a_hi must satisfy 0 <= a_lo <= a_hi < 2")
    _require(run["max_depth"] is None or run["max_depth"] >= consts.delta_big,
             f"run.max_depth must be >= consts.delta_big={consts.delta_big}, got {run['max_depth']}")
    _require(run["blocks"] <= run["sample_size"], "run.blocks must not exceed run.sample_size")
    for key in ("phi", "psi"):
        _require(run[key] in observable_names(),
                 f"run.{key}: unknown observable {run[key]!r}; choose from {', '.join(observable_names())}")

    if experiment == "tail":
        _require(run["sample_size"] >= 1000, "run.sample_size must be >= 1000 for tail")
        _require(run["n_max"] >= 50, "run.n_max must be >= 50 for tail")
    if experiment in ("density", "stability", "entropy"):
        _require(run["n_steps"] >= 10 * run["bins"], "run.n_steps must be >= 10 * run.bins")


def _echo_value(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    return value


def load_config(experiment: str, path: Optional[os.PathLike] = None, overrides: Iterable[str] = (),
                workers: Optional[int] = None, seed: Optional[int] = None,
                out: Optional[os.PathLike] = None) -> ExperimentConfig:
    """
    Merge defaults, file, overrides and flags, then validate everything

    Raises:
        ConfigError: unknown experiment or key, unparsable value, or a value
            the domain objects reject
    """
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")

    raw = {key: default for key, (_, default) in SCHEMA.items()}
    layers = []
    if path is not None:
        layers.append(_read_file(Path(path)))
    layers.append(dict(_split_override(item) for item in overrides))
    for layer in layers:
        unknown = sorted(set(layer) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        raw.update(layer)
    if seed is not None:
        raw["run.seed"] = str(seed)
    if out is not None:
        raw["output_dir"] = str(out)

    values: Dict[str, Any] = {}
    for key, (parse, _) in SCHEMA.items():
        try:
            values[key] = parse(raw[key])
        except ValueError as e:
            raise ConfigError(f"{key}: {e}") from e

    try:
        params = MapParams(a=values["map.a"], s=values["map.s"], a_max=values["map.a_max"])
        consts = AnalysisConstants.for_map(
            params,
            lambda_c=values["consts.lambda_c"],
            alpha=values["consts.alpha"],
            delta_big=values["consts.delta_big"],
            theta=values["consts.theta"],
            epsilon_rec=values["consts.epsilon_rec"],
            c_exp=values["consts.c_exp"],
        )
        workers = resolve_workers(workers)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    run = {key[len("run."):]: value for key, value in values.items() if key.startswith("run.")}
    _check_run(experiment, run, params, consts)

    echo = {key: _echo_value(value) for key, value in values.items()}
    echo["experiment"] = experiment
    echo["workers"] = workers
    # resolved constants, so an "auto" run can be replayed with explicit values
    echo["consts.resolved"] = {
        "beta": consts.beta,
        "theta": consts.theta,
        "epsilon_rec": consts.epsilon_rec,
        "c_exp": consts.c_exp,
    }
    return ExperimentConfig(
        experiment=experiment,
        map=params,
        consts=consts,
        run=run,
        output_dir=Path(values["output_dir"]),
        workers=workers,
        echo=echo,
    )
