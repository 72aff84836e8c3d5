"""Experiment configuration: TOML in, validated dataclass out.

Floats are parsed as decimals so symbol coefficients stay exact.  The
canonical serialization is sorted JSON with decimals written as strings;
its SHA-256 is the config hash recorded in run manifests.

Schema (all tables optional except [model])::

    seed = 0
    beta = 1.0

    [model]
    d = 1
    h0 = { "1" = 1.0, "2" = 0.5 }      # p -> radial coefficient or nested list matrix
    V = [ { i = [1], j = [0], re = 0.1, im = 0.0 } ]

    [sweep]
    eps = [0.25, 0.125]                # or k_min / k_max for eps = 2^-k
    k_min = 2
    k_max = 8
    moments = [0, 2, 4, 6]

    [grid]
    spacing = 0.2

    [tolerances]
    truncation = 1e-10
    identity = 1e-8

    [recovery]
    center = [0.3, 0.0]                # re, im pairs per mode
    s = 0.5
    eps = [0.5, 0.25]

    [lattice]
    delta = 1.0
    M = [1, 2, 3]
    sigma = 0.5

    [free_energy]
    beta_state = 0.5

    [output]
    dir = "out"
    prefix = "run"
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np
import tomli

from .errors import ClassSViolation, ConfigError
from .symbols import PolySymbol, SymbolClassS

_TOP = {"seed", "beta", "model", "sweep", "grid", "tolerances", "recovery", "lattice", "free_energy", "output", "invariants"}


def _num(x, where: str) -> Decimal:
    if isinstance(x, bool) or not isinstance(x, (int, Decimal)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    return Decimal(x)


def _pos(x, where: str) -> Decimal:
    v = _num(x, where)
    if not v > 0:
        raise ConfigError(f"{where}: must be positive, got {x}")
    return v


def _canon(obj):
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    return obj


def _decode(obj):
    """Inverse of _canon for numeric strings."""
    if isinstance(obj, str):
        try:
            return Decimal(obj)
        except ArithmeticError:
            return obj
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


@dataclass
class ExperimentConfig:
    d: int = 1
    h0: dict = field(default_factory=lambda: {1: Decimal(1)})
    V: list = field(default_factory=list)
    beta: Decimal = Decimal(1)
    eps_list: list = field(default_factory=lambda: [Decimal(2) ** -k for k in range(2, 9)])
    moments: list = field(default_factory=list)
    spacing: Decimal | None = None
    tol_truncation: Decimal = Decimal("1e-10")
    tol_identity: Decimal = Decimal("1e-8")
    recovery_center: list = field(default_factory=lambda: [Decimal("0.3")])
    recovery_s: Decimal = Decimal("0.5")
    recovery_eps: list = field(default_factory=lambda: [Decimal(2) ** -k for k in range(1, 6)])
    delta: Decimal = Decimal(1)
    M_list: list = field(default_factory=lambda: [1, 2, 3])
    sigma: Decimal = Decimal("0.5")
    beta_state: Decimal | None = None
    output_dir: str = "out"
    prefix: str = "run"
    seed: int = 0
    n_random: int = 50

    # construction ----------------------------------------------------------

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        try:
            raw = tomli.loads(text, parse_float=Decimal)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_toml(text)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _TOP
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        cfg = cls()
        cfg.seed = int(raw.get("seed", 0))
        cfg.beta = _pos(raw.get("beta", Decimal(1)), "beta")

        model = raw.get("model")
        if not isinstance(model, dict):
            raise ConfigError("[model] table is required")
        cfg.d = int(model.get("d", 1))
        if cfg.d < 1:
            raise ConfigError("model.d must be >= 1")
        h0 = model.get("h0", {"1": Decimal(1)})
        if not isinstance(h0, dict) or not h0:
            raise ConfigError("model.h0 must be a non-empty table p -> coefficient")
        try:
            cfg.h0 = {int(k): v for k, v in h0.items()}
        except ValueError as exc:
            raise ConfigError(f"model.h0 keys must be integers: {exc}") from exc
        cfg.V = list(model.get("V", []))

        sweep = raw.get("sweep", {})
        if "eps" in sweep:
            cfg.eps_list = [_pos(e, "sweep.eps") for e in sweep["eps"]]
        elif "k_min" in sweep or "k_max" in sweep:
            k0, k1 = int(sweep.get("k_min", 2)), int(sweep.get("k_max", 8))
            cfg.eps_list = [Decimal(2) ** -k for k in range(k0, k1 + 1)]
        cfg.moments = [int(k) for k in sweep.get("moments", [])]

        grid = raw.get("grid", {})
        if "spacing" in grid:
            cfg.spacing = _pos(grid["spacing"], "grid.spacing")

        tol = raw.get("tolerances", {})
        cfg.tol_truncation = _pos(tol.get("truncation", cfg.tol_truncation), "tolerances.truncation")
        cfg.tol_identity = _pos(tol.get("identity", cfg.tol_identity), "tolerances.identity")

        rec = raw.get("recovery", {})
        cfg.recovery_center = [Decimal("0.3")] + [Decimal(0)] * (cfg.d - 1)
        if "center" in rec:
            c = [_num(x, "recovery.center") for x in rec["center"]]
            cfg.recovery_center = c
        cfg.recovery_s = _pos(rec.get("s", cfg.recovery_s), "recovery.s")
        if "eps" in rec:
            cfg.recovery_eps = [_pos(e, "recovery.eps") for e in rec["eps"]]

        lat = raw.get("lattice", {})
        cfg.delta = _num(lat.get("delta", cfg.delta), "lattice.delta")
        if cfg.delta < 0:
            raise ConfigError("lattice.delta must be nonnegative")
        cfg.M_list = [int(m) for m in lat.get("M", cfg.M_list)]
        cfg.sigma = _pos(lat.get("sigma", cfg.sigma), "lattice.sigma")

        fe = raw.get("free_energy", {})
        if "beta_state" in fe:
            cfg.beta_state = _pos(fe["beta_state"], "free_energy.beta_state")

        inv = raw.get("invariants", {})
        cfg.n_random = int(inv.get("n_random", cfg.n_random))

        out = raw.get("output", {})
        cfg.output_dir = str(out.get("dir", cfg.output_dir))
        cfg.prefix = str(out.get("prefix", cfg.prefix))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError("sweep eps values must be strictly decreasing")
        if any(b >= a for a, b in zip(self.recovery_eps, self.recovery_eps[1:])):
            raise ConfigError("recovery eps values must be strictly decreasing")
        if len(self.recovery_center) not in (self.d, 2 * self.d):
            raise ConfigError(f"recovery.center needs {2 * self.d} numbers (re, im per mode)")
        if any(m < 0 for m in self.M_list):
            raise ConfigError("lattice M values must be nonnegative")
        if self.n_random < 1:
            raise ConfigError("invariants.n_random must be >= 1")
        try:
            self.symbol()
        except (ClassSViolation, ValueError, TypeError) as exc:
            raise ConfigError(f"model is not a valid class-S symbol: {exc}") from exc

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        raw = {
            "seed": self.seed,
            "beta": self.beta,
            "model": {"d": self.d, "h0": {str(k): v for k, v in self.h0.items()}, "V": self.V},
            "sweep": {"eps": self.eps_list, "moments": self.moments},
            "tolerances": {"truncation": self.tol_truncation, "identity": self.tol_identity},
            "recovery": {"center": self.recovery_center, "s": self.recovery_s, "eps": self.recovery_eps},
            "lattice": {"delta": self.delta, "M": self.M_list, "sigma": self.sigma},
            "invariants": {"n_random": self.n_random},
            "output": {"dir": self.output_dir, "prefix": self.prefix},
        }
        if self.spacing is not None:
            raw["grid"] = {"spacing": self.spacing}
        if self.beta_state is not None:
            raw["free_energy"] = {"beta_state": self.beta_state}
        return raw

    def canonical_json(self) -> str:
        return json.dumps(_canon(self.to_dict()), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_canonical_json(cls, text: str) -> "ExperimentConfig":
        raw = json.loads(text)
        output = raw.pop("output", {})
        raw = _decode(raw)
        raw["output"] = output
        raw["seed"] = int(raw["seed"])
        raw["model"]["d"] = int(raw["model"]["d"])
        raw["lattice"]["M"] = [int(m) for m in raw["lattice"]["M"]]
        raw["sweep"]["moments"] = [int(k) for k in raw["sweep"]["moments"]]
        raw["invariants"]["n_random"] = int(raw["invariants"]["n_random"])
        for rec in raw["model"]["V"]:
            rec["i"] = [int(x) for x in rec["i"]]
            rec["j"] = [int(x) for x in rec["j"]]
        return cls.from_dict(raw)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    # derived objects -------------------------------------------------------

    def symbol(self) -> SymbolClassS:
        h0 = {}
        for p, c in self.h0.items():
            if isinstance(c, list):
                h0[p] = np.array([[complex(float(x), 0.0) if not isinstance(x, list) else complex(float(x[0]), float(x[1])) for x in row] for row in c])
            else:
                h0[p] = Fraction(_num(c, f"model.h0.{p}"))
        V = PolySymbol.from_literals(self.d, self.V) if self.V else None
        return SymbolClassS(self.d, h0, V)

    def floats(self, values) -> list[float]:
        return [float(v) for v in values]

    def center(self) -> np.ndarray:
        c = [float(x) for x in self.recovery_center]
        if len(c) == self.d:
            return np.array(c, dtype=complex)
        return np.array(c[0::2], dtype=float) + 1j * np.array(c[1::2], dtype=float)
