"""Strict flat ``key = value`` experiment configs with dotted sections.

Example::

    experiment = verify-separation
    seed = 7
    plasma.n = 10, 20, 50
    plasma.ell = 2
    factor.kind = trivial
    minimize.restarts = 8

Lines starting with ``#`` are comments. Unknown keys, duplicated keys and
sections that do not apply to the chosen experiment are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from plasmalab.bathtub import BathtubProblem
from plasmalab.gibbs import ChainOptions
from plasmalab.ground_state import MinimizeOptions
from plasmalab.model import (
    CompositeFactor,
    CorrelationFactor,
    OneBodyPolynomial,
    PairPolynomial,
    PlasmaParams,
    Potential,
    TrivialFactor,
    truncate_potential,
)

EXPERIMENTS = ("minimize", "sample", "density", "bathtub", "verify-separation", "verify-theorem")


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    x = float(s.strip())
    if math.isnan(x):
        raise ValueError("NaN is not allowed")
    return x


def _str(s: str) -> str:
    return s.strip()


def _list(item):
    def parse(s: str):
        parts = [p for p in (q.strip() for q in s.split(",")) if p]
        return [item(p) for p in parts]

    return parse


def _complex(s: str) -> complex:
    return complex(s.strip().replace(" ", ""))


SCHEMA = {
    "experiment": _str,
    "seed": _int,
    "output_dir": _str,
    "threads": _int,
    "plasma.n": _list(_int),
    "plasma.ell": _list(_int),
    "plasma.epsilon": _float,
    "plasma.u.kind": _str,
    "plasma.u.s": _float,
    "plasma.u.axx": _float,
    "plasma.u.axy": _float,
    "plasma.u.ayy": _float,
    "plasma.u.file": _str,
    "plasma.u.cap": _float,
    "factor.kind": _str,
    "factor.roots": _list(_complex),
    "factor.leading": _complex,
    "factor.diff_power": _int,
    "factor.diff_sq_roots": _list(_complex),
    "factor.sum_roots": _list(_complex),
    "minimize.max_iterations": _int,
    "minimize.gradient_tolerance": _float,
    "minimize.restarts": _int,
    "minimize.relocation_moves": _bool,
    "minimize.slack": _float,
    "chain.n_steps": _int,
    "chain.burn_in": _int,
    "chain.thinning": _int,
    "chain.proposal_sigma": _float,
    "chain.n_chains": _int,
    "chain.adapt": _bool,
    "chain.init": _str,
    "density.bins": _int,
    "density.r_max": _float,
    "bathtub.potential": _str,
    "bathtub.s": _float,
    "bathtub.ell_eff": _float,
    "bathtub.max_density": _float,
    "bathtub.solver": _str,
    "bathtub.h": _float,
    "bathtub.half_width": _float,
    "bathtub.write_density": _bool,
    "theorem.s": _float,
}

SECTIONS = {
    "minimize": {"plasma", "factor", "minimize"},
    "sample": {"plasma", "factor", "minimize", "chain"},
    "density": {"plasma", "factor", "minimize", "chain", "density"},
    "bathtub": {"bathtub"},
    "verify-separation": {"plasma", "factor", "minimize"},
    "verify-theorem": {"plasma", "factor", "minimize", "chain", "density", "theorem"},
}

TOP_LEVEL = {"experiment", "seed", "output_dir", "threads"}


def parse_text(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = SCHEMA[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return values


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 0
    threads: int = 1

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def as_dict(self) -> dict:
        out = dict(self.values)
        out.update(experiment=self.experiment, seed=self.seed, output_dir=str(self.output_dir), threads=self.threads)
        return out

    # -- builders ---------------------------------------------------------

    def n_values(self) -> list[int]:
        return self.get("plasma.n", [10])

    def ell_values(self) -> list[int]:
        return self.get("plasma.ell", [2])

    def potential(self) -> Potential:
        kind = self.get("plasma.u.kind", "zero")
        if kind == "zero":
            v = Potential.zero()
        elif kind == "radial_power":
            v = Potential.radial_power(self.get("plasma.u.s", 2.0))
        elif kind == "quadratic":
            v = Potential.quadratic(
                self.get("plasma.u.axx", 1.0), self.get("plasma.u.axy", 0.0), self.get("plasma.u.ayy", 1.0)
            )
        elif kind == "custom_grid":
            v = load_grid_potential(self.get("plasma.u.file"))
        else:
            raise ConfigError(f"unknown potential kind {kind!r}")
        if "plasma.u.cap" in self.values:
            v = truncate_potential(v, self.values["plasma.u.cap"])
        return v

    def plasma(self, n: int | None = None, ell: int | None = None) -> PlasmaParams:
        return PlasmaParams(
            n=n if n is not None else self.n_values()[0],
            ell=ell if ell is not None else self.ell_values()[0],
            epsilon=self.get("plasma.epsilon", 0.0),
            u=self.potential(),
        )

    def factor(self) -> CorrelationFactor:
        kind = self.get("factor.kind", "trivial")
        roots = self.get("factor.roots", [])
        leading = self.get("factor.leading", 1.0)
        pair_kw = dict(
            diff_power=self.get("factor.diff_power", 1),
            diff_sq_roots=tuple(self.get("factor.diff_sq_roots", [])),
            sum_roots=tuple(self.get("factor.sum_roots", [])),
        )
        if kind == "trivial":
            return TrivialFactor()
        if kind == "one_body":
            return OneBodyPolynomial(tuple(roots), leading)
        if kind == "pair":
            return PairPolynomial(leading=leading, **pair_kw)
        if kind == "composite":
            return CompositeFactor(OneBodyPolynomial(tuple(roots)), PairPolynomial(leading=leading, **pair_kw))
        raise ConfigError(f"unknown factor kind {kind!r}")

    def minimize_options(self, seed: int) -> MinimizeOptions:
        return MinimizeOptions(
            max_iterations=self.get("minimize.max_iterations", 20000),
            gradient_tolerance=self.get("minimize.gradient_tolerance"),
            restarts=self.get("minimize.restarts", 8),
            relocation_moves=self.get("minimize.relocation_moves", True),
            seed=seed,
            threads=self.threads,
        )

    def chain_options(self, seed: int) -> ChainOptions:
        return ChainOptions(
            n_steps=self.get("chain.n_steps", 10000),
            burn_in=self.get("chain.burn_in"),
            thinning=self.get("chain.thinning", 1),
            proposal_sigma=self.get("chain.proposal_sigma"),
            seed=seed,
            n_chains=self.get("chain.n_chains", 1),
            adapt=self.get("chain.adapt", True),
            threads=self.threads,
        )

    def bathtub_problem(self) -> BathtubProblem:
        kind = self.get("bathtub.potential", "radial_power")
        if kind != "radial_power":
            raise ConfigError("bathtub.potential must be radial_power")
        m = self.bathtub_max_density()
        return BathtubProblem(
            Potential.radial_power(self.get("bathtub.s", 2.0)),
            m,
            half_width=self.get("bathtub.half_width"),
            h=self.get("bathtub.h"),
        )

    def bathtub_max_density(self) -> float:
        if "bathtub.max_density" in self.values:
            return self.values["bathtub.max_density"]
        return 1.0 / (math.pi * self.get("bathtub.ell_eff", 1.0))

    def validate(self) -> None:
        """Build every object the experiment will use; raise ConfigError on failure."""
        exp = self.experiment
        try:
            if exp in ("minimize", "sample", "density", "verify-separation", "verify-theorem"):
                ns, ells = self.n_values(), self.ell_values()
                if exp != "verify-separation" and (len(ns) != 1 or len(ells) != 1):
                    raise ConfigError(f"{exp} takes a single plasma.n and plasma.ell")
                if not ns or not ells:
                    raise ConfigError("plasma.n and plasma.ell must not be empty")
                for n in ns:
                    for ell in ells:
                        self.plasma(n, ell)
                f = self.factor()
                if not f.is_trivial and min(ns) < 2:
                    raise ConfigError("non-trivial correlation factors need n >= 2")
                self.minimize_options(0)
            if exp in ("sample", "density", "verify-theorem"):
                self.chain_options(0)
                if self.get("chain.init", "cold") not in ("cold", "hot"):
                    raise ConfigError("chain.init must be 'cold' or 'hot'")
            if exp in ("density", "verify-theorem"):
                if self.get("density.bins", 20) < 1 or not self.get("density.r_max", 1.0) > 0:
                    raise ConfigError("density.bins must be >= 1 and density.r_max > 0")
            if exp == "verify-theorem" and not self.get("theorem.s", 2.0) > 0:
                raise ConfigError("theorem.s must be positive")
            if exp == "bathtub":
                self.bathtub_problem()
                if self.get("bathtub.solver", "both") not in ("closed_form", "grid", "both"):
                    raise ConfigError("bathtub.solver must be closed_form, grid or both")
                if "bathtub.max_density" in self.values and "bathtub.ell_eff" in self.values:
                    raise ConfigError("give either bathtub.max_density or bathtub.ell_eff, not both")
            if not self.get("minimize.slack", 1e-2) >= 0:
                raise ConfigError("minimize.slack must be >= 0")
            if self.threads < 1:
                raise ConfigError("threads must be >= 1")
        except ConfigError:
            raise
        except (ValueError, TypeError, OSError) as exc:
            raise ConfigError(str(exc)) from None


def load_grid_potential(path) -> Potential:
    """Read ``x,y,value`` rows on a full tensor grid."""
    if path is None:
        raise ConfigError("plasma.u.file is required for custom_grid")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    xs = np.unique(data[:, 0])
    ys = np.unique(data[:, 1])
    if len(data) != len(xs) * len(ys):
        raise ConfigError(f"{path}: rows do not form a full tensor grid")
    values = np.full((len(xs), len(ys)), np.nan)
    values[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
    return Potential.custom_grid(xs, ys, values)


def build_config(
    experiment: str,
    values: dict,
    seed: int | None = None,
    output_dir=None,
    threads: int | None = None,
) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    declared = values.get("experiment")
    if declared is not None and declared != experiment:
        raise ConfigError(f"config declares experiment {declared!r} but {experiment!r} was requested")
    allowed = SECTIONS[experiment]
    for key in values:
        if key in TOP_LEVEL:
            continue
        section = key.split(".", 1)[0]
        if section not in allowed:
            raise ConfigError(f"key {key!r} does not apply to experiment {experiment!r}")
    cfg = ExperimentConfig(
        experiment=experiment,
        values={k: v for k, v in values.items() if k not in TOP_LEVEL},
        output_dir=Path(output_dir if output_dir is not None else values.get("output_dir", "out")),
        seed=seed if seed is not None else values.get("seed", 0),
        threads=threads if threads is not None else values.get("threads", 1),
    )
    cfg.validate()
    return cfg


def load_config(path, experiment: str | None = None, **overrides) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    values = parse_text(text, str(path))
    exp = experiment or values.get("experiment")
    if exp is None:
        raise ConfigError("no experiment given")
    return build_config(exp, values, **overrides)
