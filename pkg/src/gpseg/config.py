"""Run configuration: line-oriented ``key = value`` text in fixed sections.

Example::

    [domain]
    dim = 1
    L = 3.141592653589793
    n = 199

    [params]
    lambda = -1
    mu = -1
    beta = 50

    [seed]
    k = 2

Default values (every tolerance the tool uses lives here):

    section   key               default
    params    schedule          (beta,)
    params    eps               0
    params    R                 inf
    params    variant           plain
    seed      amplitude         ray maximum of the energy
    seed      mix               (0, ..., 0, 1)
    seed      rng_seed          0
    seed      rho               10
    seed      samples           200
    solve     grad_tol          1e-9
    solve     max_descent_iters 5000
    solve     max_newton_iters  50
    solve     armijo_c          1e-4
    solve     armijo_shrink     0.5
    solve     deflation_power   2
    solve     deflation_shift   1
    solve     max_beta_ratio    2
    solve     descent           false
    analysis  morse             false
    analysis  morse_tol         1e-6  (relative to the largest Hessian eigenvalue)
    analysis  pohozaev          false
    analysis  cutoff_center     domain center
    analysis  cutoff_radius     a quarter of the shortest side
    analysis  nodal             false
    analysis  nodal_delta_rel   1e-3  (times max(u + v))
    analysis  decay_fit         false
    output    dir               run_output
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError
from .grid import Domain
from .model import SystemParams, Variant
from .solver import MinimaxSeed, SolveOptions

REQUIRED = object()


class ParseError(ConfigurationError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _float(s: str) -> float:
    x = float(s)
    if math.isnan(x):
        raise ValueError("nan")
    return x


def _int(s: str) -> int:
    return int(s)


def _bool(s: str) -> bool:
    t = s.lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError(s)


def _floats(s: str) -> tuple[float, ...]:
    return tuple(_float(p) for p in s.split(","))


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(p) for p in s.split(","))


def _variant(s: str) -> str:
    return Variant(s).value


SCHEMA: dict[str, dict[str, tuple]] = {
    "domain": {"dim": (_int, REQUIRED), "L": (_floats, REQUIRED), "n": (_ints, REQUIRED)},
    "params": {
        "lambda": (_float, REQUIRED),
        "mu": (_float, REQUIRED),
        "beta": (_float, None),
        "schedule": (_floats, None),
        "eps": (_float, 0.0),
        "R": (_float, math.inf),
        "variant": (_variant, "plain"),
    },
    "seed": {
        "k": (_int, REQUIRED),
        "amplitude": (_float, None),
        "mix": (_floats, None),
        "rng_seed": (_int, 0),
        "rho": (_float, 10.0),
        "samples": (_int, 200),
    },
    "solve": {
        "grad_tol": (_float, 1e-9),
        "max_descent_iters": (_int, 5000),
        "max_newton_iters": (_int, 50),
        "armijo_c": (_float, 1e-4),
        "armijo_shrink": (_float, 0.5),
        "deflation_power": (_float, 2.0),
        "deflation_shift": (_float, 1.0),
        "max_beta_ratio": (_float, 2.0),
        "descent": (_bool, False),
    },
    "analysis": {
        "morse": (_bool, False),
        "morse_tol": (_float, 1e-6),
        "pohozaev": (_bool, False),
        "cutoff_center": (_floats, None),
        "cutoff_radius": (_float, None),
        "nodal": (_bool, False),
        "nodal_delta_rel": (_float, 1e-3),
        "decay_fit": (_bool, False),
    },
    "output": {"dir": (str, "run_output")},
}


@dataclass(frozen=True)
class RunConfig:
    domain: Domain
    params: SystemParams
    schedule: tuple[float, ...]
    variant: str
    seed: MinimaxSeed
    rng_seed: int
    rho: float
    samples: int
    solve: SolveOptions
    descent: bool
    morse: bool
    morse_tol: float
    pohozaev: bool
    cutoff_center: tuple[float, ...] | None
    cutoff_radius: float | None
    nodal: bool
    nodal_delta_rel: float
    decay_fit: bool
    output_dir: str


def parse_config(text: str) -> RunConfig:
    values: dict[str, dict[str, object]] = {s: {} for s in SCHEMA}
    lines: dict[tuple[str, str], int] = {}
    section = None
    opened: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ParseError(f"unknown section [{section}]", lineno)
            if section in opened:
                raise ParseError(f"section [{section}] repeated (first on line {opened[section]})", lineno)
            opened[section] = lineno
            continue
        if section is None:
            raise ParseError("key outside of any section", lineno)
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        if key not in SCHEMA[section]:
            raise ParseError(f"unknown key {key!r} in [{section}]", lineno)
        if key in values[section]:
            raise ParseError(f"duplicate key {key!r} in [{section}] (first on line {lines[section, key]})", lineno)
        conv = SCHEMA[section][key][0]
        try:
            values[section][key] = conv(value)
        except ValueError:
            raise ParseError(f"bad value {value!r} for {key!r}", lineno) from None
        lines[section, key] = lineno

    def get(section, key):
        if key in values[section]:
            return values[section][key]
        default = SCHEMA[section][key][1]
        if default is REQUIRED:
            raise ParseError(f"missing required key {key!r} in [{section}]")
        return default

    def at(section, key):
        return lines.get((section, key))

    try:
        dim = get("domain", "dim")
        domain = Domain(dim, get("domain", "L"), get("domain", "n"))
    except ConfigurationError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(str(exc), at("domain", "dim")) from None

    beta, schedule = get("params", "beta"), get("params", "schedule")
    if schedule is None:
        if beta is None:
            raise ParseError("need 'beta' or 'schedule' in [params]")
        schedule = (beta,)
    if any(b1 <= b0 for b0, b1 in zip(schedule, schedule[1:])):
        raise ParseError("schedule must be strictly ascending", at("params", "schedule"))
    if beta is not None and beta != schedule[0]:
        raise ParseError("beta must equal the first schedule entry", at("params", "beta"))
    try:
        params = SystemParams(get("params", "lambda"), get("params", "mu"), schedule[0],
                              get("params", "eps"), get("params", "R"))
    except ConfigurationError as exc:
        raise ParseError(str(exc), at("params", "eps") or at("params", "R")) from None

    try:
        seed = MinimaxSeed(get("seed", "k"), get("seed", "amplitude"), get("seed", "mix"))
    except ConfigurationError as exc:
        raise ParseError(str(exc), at("seed", "k")) from None

    solve_keys = [k for k in SCHEMA["solve"] if k != "descent"]
    try:
        opts = SolveOptions(**{k: get("solve", k) for k in solve_keys})
    except ConfigurationError as exc:
        raise ParseError(str(exc)) from None

    for key in ("morse_tol", "nodal_delta_rel", "cutoff_radius"):
        val = get("analysis", key)
        if val is not None and not val > 0:
            raise ParseError(f"{key} must be positive", at("analysis", key))
    rho, samples = get("seed", "rho"), get("seed", "samples")
    if not rho > 0:
        raise ParseError("rho must be positive", at("seed", "rho"))
    if samples < 1:
        raise ParseError("samples must be >= 1", at("seed", "samples"))
    center = get("analysis", "cutoff_center")
    if center is not None and len(center) != domain.dim:
        raise ParseError("cutoff_center needs one coordinate per axis", at("analysis", "cutoff_center"))

    return RunConfig(
        domain=domain,
        params=params,
        schedule=tuple(schedule),
        variant=get("params", "variant"),
        seed=seed,
        rng_seed=get("seed", "rng_seed"),
        rho=rho,
        samples=samples,
        solve=opts,
        descent=get("solve", "descent"),
        morse=get("analysis", "morse"),
        morse_tol=get("analysis", "morse_tol"),
        pohozaev=get("analysis", "pohozaev"),
        cutoff_center=center,
        cutoff_radius=get("analysis", "cutoff_radius"),
        nodal=get("analysis", "nodal"),
        nodal_delta_rel=get("analysis", "nodal_delta_rel"),
        decay_fit=get("analysis", "decay_fit"),
        output_dir=get("output", "dir"),
    )
