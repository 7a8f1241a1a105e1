"""Run configuration: JSON file -> validated RunConfig -> model objects."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

COMMANDS = (
    "eigen",
    "pressure",
    "equilibrium",
    "betascan",
    "markov-sim",
    "ergodicity",
    "clt",
    "convexity",
    "paths-demo",
)
ALPHABET_KINDS = ("finite", "real-line", "circle", "path-space")
FAMILIES = (
    "constant",
    "first-coordinate",
    "two-coordinate",
    "long-range",
    "node-function",
    "table",
    "combination",
)
NODE_FUNCS = ("identity", "square", "cos", "sin")

COMMAND_DEFAULTS = {
    "betascan": {"betas": [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0]},
    "markov-sim": {"n": 1000, "start": None},
    "ergodicity": {"starts": 3, "n_max": None, "fit_from": None},
    "clt": {"xi": None, "n": 1000, "samples": 10000, "lag_max": 50, "bins": 50},
    "convexity": {"g": {"family": "constant", "params": {"c": 0.0}}, "ts": [0.0, 0.25, 0.5, 0.75, 1.0]},
    "equilibrium": {"candidates": 10},
    "paths-demo": {"dim": 2, "segments": 4, "paths": 6, "J0": 1.0, "r": 0.5, "alpha": 1.0, "K": None, "samples": 400},
}


class ConfigError(ValueError):
    pass


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _positive(value, name: str) -> float:
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), f"{name} must be a number")
    _require(math.isfinite(value) and value > 0, f"{name} must be positive (got {value})")
    return float(value)


@dataclass
class RunConfig:
    alphabet: dict
    potential: dict | None = None
    depth: int | None = None
    anchor: int = 0
    eigen_tol: float = 1e-12
    residual_tol: float = 1e-8
    variational_tol: float = 1e-6
    seed: int = 0
    atom_cap: int = 4096
    max_iter: int = 100000
    commands: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        _require(isinstance(raw, dict), "config must be a JSON object")
        known = {"alphabet", "potential", "grid", "tolerances", "seed", "atom_cap", "max_iter", "commands"}
        extra = set(raw) - known
        _require(not extra, f"unknown config keys: {sorted(extra)}")
        _require("alphabet" in raw, "config needs an 'alphabet' section")
        grid = raw.get("grid", {}) or {}
        tol = raw.get("tolerances", {}) or {}
        _require(isinstance(grid, dict) and isinstance(tol, dict), "'grid' and 'tolerances' must be objects")
        cfg = cls(
            alphabet=dict(raw["alphabet"]),
            potential=raw.get("potential"),
            depth=grid.get("depth"),
            anchor=grid.get("anchor", 0),
            eigen_tol=tol.get("eigen", 1e-12),
            residual_tol=tol.get("residual", 1e-8),
            variational_tol=tol.get("variational", 1e-6),
            seed=raw.get("seed", 0),
            atom_cap=raw.get("atom_cap", 4096),
            max_iter=raw.get("max_iter", 100000),
            commands=dict(raw.get("commands", {}) or {}),
        )
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)

    def validate(self) -> None:
        self.eigen_tol = _positive(self.eigen_tol, "tolerances.eigen")
        self.residual_tol = _positive(self.residual_tol, "tolerances.residual")
        self.variational_tol = _positive(self.variational_tol, "tolerances.variational")
        _require(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed must be an unsigned 64-bit integer")
        _require(isinstance(self.atom_cap, int) and self.atom_cap >= 1, "atom_cap must be a positive integer")
        _require(isinstance(self.max_iter, int) and self.max_iter >= 1, "max_iter must be a positive integer")
        self._validate_alphabet()
        if self.potential is not None:
            _validate_potential(self.potential, "potential")
        unknown = set(self.commands) - set(COMMANDS)
        _require(not unknown, f"unknown command sections: {sorted(unknown)}")
        for name, params in self.commands.items():
            _require(isinstance(params, dict), f"commands.{name} must be an object")
            extra = set(params) - set(COMMAND_DEFAULTS.get(name, {}))
            _require(not extra, f"commands.{name} has unknown keys {sorted(extra)}")
        betas = self.params("betascan")["betas"]
        _require(all(isinstance(b, (int, float)) for b in betas), "betascan.betas must be numbers")
        _require(all(b <= c for b, c in zip(betas, betas[1:])), "betascan.betas must be ascending")
        ts = self.params("convexity")["ts"]
        _require(all(isinstance(t, (int, float)) and 0 <= t <= 1 for t in ts), "convexity.ts must lie in [0, 1]")
        _validate_potential(self.params("convexity")["g"], "commands.convexity.g")
        xi = self.params("clt")["xi"]
        if xi is not None:
            _validate_potential(xi, "commands.clt.xi")
        for key in ("n", "samples", "lag_max", "bins"):
            v = self.params("clt")[key]
            _require(isinstance(v, int) and v >= 1, f"clt.{key} must be a positive integer")
        _require(isinstance(self.params("markov-sim")["n"], int) and self.params("markov-sim")["n"] >= 1,
                 "markov-sim.n must be a positive integer")
        if self.alphabet["kind"] != "path-space":
            n = self.node_count()
            _require(isinstance(self.anchor, int) and 0 <= self.anchor < n, f"grid.anchor must be a node index below {n}")
            if self.depth is not None:
                _require(isinstance(self.depth, int) and self.depth >= 1, "grid.depth must be a positive integer")
                _require(n ** (self.depth + 1) <= 10**7, f"grid.depth {self.depth} exceeds the grid-size cap for {n} nodes")

    def _validate_alphabet(self) -> None:
        a = self.alphabet
        kind = a.get("kind")
        _require(kind in ALPHABET_KINDS, f"alphabet.kind must be one of {ALPHABET_KINDS}")
        if kind == "finite":
            size = a.get("size", len(a.get("weights") or []) or None)
            _require(isinstance(size, int) and size >= 1, "finite alphabet needs size >= 1 or a weights list")
            w = a.get("weights")
            if w is not None:
                _require(len(w) == size, "alphabet.weights must have one entry per node")
                _require(all(isinstance(x, (int, float)) and x >= 0 for x in w), "alphabet.weights must be nonnegative")
                _require(sum(w) > 0, "alphabet.weights must not all vanish")
            d = a.get("distances")
            if d is not None:
                _require(len(d) == size and all(len(r) == size for r in d), "alphabet.distances must be size x size")
        elif kind == "real-line":
            _require(isinstance(a.get("dim", 1), int) and a.get("dim", 1) >= 1, "alphabet.dim must be >= 1")
            _require(isinstance(a.get("order", 21), int) and a.get("order", 21) >= 1, "alphabet.order must be >= 1")
        elif kind == "circle":
            _require(isinstance(a.get("order", 64), int) and a.get("order", 64) >= 1, "alphabet.order must be >= 1")
        else:
            _require(isinstance(a.get("segments", 4), int) and a.get("segments", 4) >= 2, "alphabet.segments must be >= 2")

    def node_count(self) -> int:
        a = self.alphabet
        if a["kind"] == "finite":
            return a.get("size") or len(a["weights"])
        if a["kind"] == "real-line":
            return a.get("order", 21) ** a.get("dim", 1)
        return a.get("order", 64)

    def params(self, command: str) -> dict:
        out = dict(COMMAND_DEFAULTS.get(command, {}))
        out.update(self.commands.get(command, {}))
        return out

    def resolved(self) -> dict:
        d = asdict(self)
        d["commands"] = {c: self.params(c) for c in COMMANDS if c in COMMAND_DEFAULTS}
        return d


def _validate_potential(desc, where: str) -> None:
    _require(isinstance(desc, dict), f"{where} must be an object")
    fam = desc.get("family")
    _require(fam in FAMILIES, f"{where}.family must be one of {FAMILIES}")
    p = desc.get("params", {}) or {}
    _require(isinstance(p, dict), f"{where}.params must be an object")
    if fam == "constant":
        _require(isinstance(p.get("c", 0.0), (int, float)), f"{where}.params.c must be a number")
    elif fam == "first-coordinate":
        _require(isinstance(p.get("values"), list), f"{where}.params.values must be a list")
    elif fam == "two-coordinate":
        _require(isinstance(p.get("matrix"), list), f"{where}.params.matrix must be a nested list")
    elif fam == "long-range":
        _require(isinstance(p.get("J0"), (int, float)) and p["J0"] >= 0, f"{where}.params.J0 must be >= 0")
        _require(isinstance(p.get("r"), (int, float)) and 0 < p["r"] < 1, f"{where}.params.r must lie in (0, 1)")
    elif fam == "node-function":
        _require(p.get("func") in NODE_FUNCS, f"{where}.params.func must be one of {NODE_FUNCS}")
    elif fam == "table":
        _require(isinstance(p.get("values"), list), f"{where}.params.values must be a nested list")
    elif fam == "combination":
        terms = p.get("terms")
        _require(isinstance(terms, list) and terms, f"{where}.params.terms must be a non-empty list")
        for i, t in enumerate(terms):
            _require(isinstance(t, dict) and "potential" in t, f"{where}.params.terms[{i}] needs a potential")
            _validate_potential(t["potential"], f"{where}.params.terms[{i}].potential")


def build_measure(cfg: RunConfig):
    from . import alphabet as al

    a = cfg.alphabet
    kind = a["kind"]
    if kind == "finite":
        return al.finite_measure(a.get("weights"), size=a.get("size"), distances=a.get("distances"))
    if kind == "real-line":
        return al.gaussian_measure(a.get("dim", 1), a.get("order", 21))
    if kind == "circle":
        return al.circle_measure(a.get("order", 64))
    return al.path_measure(a.get("segments", 4), a.get("dim", 1), a.get("samples", 1000), cfg.seed)


def build_grid(cfg: RunConfig, measure=None):
    from .seqspace import Grid, default_depth

    measure = measure or build_measure(cfg)
    depth = cfg.depth or default_depth(measure.size)
    return Grid(measure, depth, cfg.anchor)


def build_potential(desc: dict, measure):
    import numpy as np

    from . import potential as pt

    p = desc.get("params", {}) or {}
    fam = desc["family"]
    alpha = p.get("alpha", 1.0)
    n = measure.size
    if fam == "constant":
        return pt.constant(p.get("c", 0.0))
    if fam == "first-coordinate":
        vals = np.asarray(p["values"], dtype=float)
        _require(vals.shape == (n,), f"first-coordinate values need {n} entries")
        return pt.first_coordinate(vals, alpha)
    if fam == "two-coordinate":
        mat = np.asarray(p["matrix"], dtype=float)
        _require(mat.shape == (n, n), f"two-coordinate matrix must be {n} x {n}")
        return pt.two_coordinate(mat, alpha)
    if fam == "long-range":
        coupling = p.get("coupling", "one")
        if isinstance(coupling, list):
            coupling = np.asarray(coupling, dtype=float)
            _require(coupling.shape == (n, n), f"long-range coupling must be {n} x {n}")
        return pt.long_range(p["J0"], p["r"], coupling, measure.alphabet, p.get("alpha"))
    if fam == "node-function":
        coef = float(p.get("coef", 1.0))
        func = {
            "identity": lambda a: float(np.sum(a)),
            "square": lambda a: float(np.sum(np.square(a))),
            "cos": lambda a: float(np.cos(a)),
            "sin": lambda a: float(np.sin(a)),
        }[p["func"]]
        return pt.node_function(measure.alphabet, lambda a: coef * func(a), p["func"], {"func": p["func"], "coef": coef}, alpha)
    if fam == "table":
        vals = np.asarray(p["values"], dtype=float)
        _require(all(s == n for s in vals.shape), f"table values must have every axis of length {n}")
        return pt.table(vals, alpha)
    terms = tuple((float(t.get("coef", 1.0)), build_potential(t["potential"], measure)) for t in p["terms"])
    return pt.LinearCombination(terms, float(p.get("constant", 0.0)))
