"""Experiment configuration: JSON document -> validated dataclasses."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .lattice import Interaction, interaction_from_dict, interaction_to_dict
from .ldp import PATHS
from .states import StateSpec, default_decoupling, state_from_dict, state_to_dict

KINDS = ("rate", "scgf", "duality", "bounds", "decoupling", "selftest")
CAP_CEILING = 2**16
DEFAULT_CAP = 2**12
BOUND_QUANTITIES = ("defect", "interchange", "overlap")


@dataclass(frozen=True)
class Grid:
    min: float
    max: float
    step: float

    @property
    def values(self) -> np.ndarray:
        count = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return self.min + self.step * np.arange(count)


@dataclass(frozen=True)
class BlockParams:
    m_list: tuple = (2, 3, 4)
    g_rule: str | int = "state-default"

    def g(self, m: int, state: StateSpec | None) -> int:
        if isinstance(self.g_rule, int):
            return self.g_rule
        if self.g_rule == "sqrt":
            return math.ceil(math.sqrt(m))
        if state is None:
            return 0
        return int(default_decoupling(state).g(m))


@dataclass
class ExperimentConfig:
    kind: str
    interaction: Interaction | None = None
    phi: Interaction | None = None
    state: StateSpec | None = None
    n_list: tuple = ()
    x_grid: Grid = Grid(-1.0, 1.0, 0.02)
    alpha_grid: Grid = Grid(-3.0, 3.0, 0.05)
    epsilon: tuple = (0.05,)
    epsilon_sweep: tuple = (0.1, 0.05, 0.02)
    blocks: BlockParams = BlockParams()
    quantities: tuple = BOUND_QUANTITIES
    beta: float = 1.0
    alpha_probe: float = 1.0
    x: float = 0.0
    eps_outer: float = 0.4
    eps_inner: float = 0.2
    scgf_kind: str = "f"
    path: str = "auto"
    duality_tol: float = 0.05
    trials: int = 100
    slack: float = 1e-9
    c_override: float | None = None
    seed: int = 0
    cap: int = DEFAULT_CAP
    out_dir: str = "ldp_lab_out"
    suites: tuple = ()
    source: dict = field(default_factory=dict, repr=False)

    def resolved(self) -> dict:
        """Every field with defaults filled in, as plain JSON data."""
        return {
            "kind": self.kind,
            "interaction": None if self.interaction is None else interaction_to_dict(self.interaction),
            "phi": None if self.phi is None else interaction_to_dict(self.phi),
            "state": None if self.state is None else state_to_dict(self.state),
            "n_list": list(self.n_list),
            "x_grid": asdict(self.x_grid),
            "alpha_grid": asdict(self.alpha_grid),
            "epsilon": list(self.epsilon),
            "epsilon_sweep": list(self.epsilon_sweep),
            "blocks": {"m_list": list(self.blocks.m_list), "g_rule": self.blocks.g_rule},
            "quantities": list(self.quantities),
            "beta": self.beta, "alpha_probe": self.alpha_probe, "x": self.x,
            "eps_outer": self.eps_outer, "eps_inner": self.eps_inner,
            "scgf_kind": self.scgf_kind, "path": self.path,
            "duality_tol": self.duality_tol, "trials": self.trials, "slack": self.slack,
            "c_override": self.c_override, "seed": self.seed, "cap": self.cap,
            "out_dir": self.out_dir, "suites": list(self.suites),
        }


_TOP_KEYS = {
    "kind", "interaction", "phi", "state", "n_list", "x_grid", "alpha_grid", "epsilon",
    "epsilon_sweep", "blocks", "quantities", "beta", "alpha_probe", "x", "eps_outer",
    "eps_inner", "scgf_kind", "path", "duality_tol", "trials", "slack", "c_override",
    "seed", "cap", "out_dir", "suites",
}


def _fail(path: str, msg: str):
    raise InvalidArgumentError(f"{path}: {msg}")


def _check_number(v, path: str, positive: bool = False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(path, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        _fail(path, f"must be > 0, got {v!r}")
    return float(v)


def _number(doc, key, where, default=None, positive=False):
    if key not in doc:
        return default
    return _check_number(doc[key], f"{where}{key}", positive)


def _integer(doc, key, where, default=None, minimum=None):
    if key not in doc:
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        _fail(f"{where}{key}", f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        _fail(f"{where}{key}", f"must be >= {minimum}, got {v}")
    return v


def _grid(doc, key, default: Grid) -> Grid:
    if key not in doc:
        return default
    raw = doc[key]
    if not isinstance(raw, dict):
        _fail(key, "expected an object {min, max, step}")
    unknown = set(raw) - {"min", "max", "step"}
    if unknown:
        _fail(f"{key}.{sorted(unknown)[0]}", "unknown key")
    for k in ("min", "max", "step"):
        if k not in raw:
            _fail(f"{key}.{k}", "missing")
    lo, hi = _number(raw, "min", f"{key}."), _number(raw, "max", f"{key}.")
    step = _number(raw, "step", f"{key}.")
    if step <= 0:
        _fail(f"{key}.step", f"must be > 0, got {raw['step']!r}")
    if hi < lo:
        _fail(f"{key}.max", f"must be >= {key}.min")
    return Grid(lo, hi, step)


def _number_list(doc, key, default, positive=False) -> tuple:
    if key not in doc:
        return default
    raw = doc[key]
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        raw = [raw]
    if not isinstance(raw, list) or not raw:
        _fail(key, "expected a non-empty list of numbers")
    return tuple(_check_number(v, f"{key}[{i}]", positive) for i, v in enumerate(raw))


def _n_list(raw, where="n_list") -> tuple:
    if not isinstance(raw, list) or not raw:
        _fail(where, "expected a non-empty list of integers")
    for i, v in enumerate(raw):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            _fail(f"{where}[{i}]", f"expected a positive integer, got {v!r}")
    if any(b <= a for a, b in zip(raw, raw[1:])):
        _fail(where, "must be strictly ascending")
    return tuple(raw)


def _blocks(doc) -> BlockParams:
    if "blocks" not in doc:
        return BlockParams()
    raw = doc["blocks"]
    if not isinstance(raw, dict):
        _fail("blocks", "expected an object")
    unknown = set(raw) - {"m_list", "g_rule"}
    if unknown:
        _fail(f"blocks.{sorted(unknown)[0]}", "unknown key")
    m_list = _n_list(raw.get("m_list", [2, 3, 4]), "blocks.m_list")
    rule = raw.get("g_rule", "state-default")
    if isinstance(rule, bool) or not (rule in ("state-default", "sqrt")
                                      or (isinstance(rule, int) and rule >= 0)):
        _fail("blocks.g_rule", f"expected 'state-default', 'sqrt' or an integer >= 0, got {rule!r}")
    return BlockParams(m_list, rule)


def _choice(doc, key, options, default):
    v = doc.get(key, default)
    if v not in options:
        _fail(key, f"expected one of {list(options)}, got {v!r}")
    return v


def parse_config(document, kind: str | None = None) -> ExperimentConfig:
    """Validate a JSON text or parsed dict; ``kind`` overrides a missing 'kind'."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        _fail("<root>", "expected a JSON object")
    doc = document
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        _fail(unknown[0], "unknown key")
    doc_kind = doc.get("kind", kind)
    if kind is not None and doc_kind != kind:
        _fail("kind", f"config declares {doc_kind!r} but {kind!r} was requested")
    if doc_kind not in KINDS:
        _fail("kind", f"expected one of {list(KINDS)}, got {doc_kind!r}")

    psi = interaction_from_dict(doc["interaction"]) if doc.get("interaction") is not None else None
    phi = interaction_from_dict(doc["phi"], "phi") if doc.get("phi") is not None else None
    state = state_from_dict(doc["state"]) if doc.get("state") is not None else None
    if doc_kind != "selftest" and psi is None and doc_kind != "decoupling":
        _fail("interaction", f"required for kind {doc_kind!r}")
    if doc_kind in ("rate", "decoupling") and state is None:
        _fail("state", f"required for kind {doc_kind!r}")
    n_list = _n_list(doc["n_list"]) if "n_list" in doc else ()
    if doc_kind != "selftest" and not n_list:
        _fail("n_list", f"required for kind {doc_kind!r}")

    cap = _integer(doc, "cap", "", DEFAULT_CAP, minimum=2)
    if cap > CAP_CEILING:
        _fail("cap", f"{cap} exceeds the hard ceiling {CAP_CEILING}")
    quantities = doc.get("quantities", list(BOUND_QUANTITIES))
    if not isinstance(quantities, list) or any(q not in BOUND_QUANTITIES for q in quantities):
        _fail("quantities", f"expected a list drawn from {list(BOUND_QUANTITIES)}")
    suites = doc.get("suites", [])
    if not isinstance(suites, list) or any(not isinstance(s, str) for s in suites):
        _fail("suites", "expected a list of suite names")
    from .selftest import SUITES
    for i, s in enumerate(suites):
        if s not in SUITES:
            _fail(f"suites[{i}]", f"unknown suite {s!r}; known: {sorted(SUITES)}")
    out_dir = doc.get("out_dir", "ldp_lab_out")
    if not isinstance(out_dir, str) or not out_dir:
        _fail("out_dir", "expected a non-empty path string")

    eps_outer = _number(doc, "eps_outer", "", 0.4, positive=True)
    eps_inner = _number(doc, "eps_inner", "", 0.2, positive=True)
    if eps_outer <= eps_inner:
        _fail("eps_outer", "must exceed eps_inner")
    scgf_kind = _choice(doc, "scgf_kind", ("f", "P"), "f")
    if scgf_kind == "f" and doc_kind in ("scgf", "duality") and state is None:
        _fail("state", "required when scgf_kind is 'f'")

    return ExperimentConfig(
        kind=doc_kind, interaction=psi, phi=phi, state=state, n_list=n_list,
        x_grid=_grid(doc, "x_grid", ExperimentConfig.x_grid),
        alpha_grid=_grid(doc, "alpha_grid", ExperimentConfig.alpha_grid),
        epsilon=_number_list(doc, "epsilon", (0.05,), positive=True),
        epsilon_sweep=_number_list(doc, "epsilon_sweep", (0.1, 0.05, 0.02), positive=True),
        blocks=_blocks(doc), quantities=tuple(quantities),
        beta=_number(doc, "beta", "", 1.0),
        alpha_probe=_number(doc, "alpha_probe", "", 1.0, positive=True),
        x=_number(doc, "x", "", 0.0), eps_outer=eps_outer, eps_inner=eps_inner,
        scgf_kind=scgf_kind, path=_choice(doc, "path", PATHS, "auto"),
        duality_tol=_number(doc, "duality_tol", "", 0.05, positive=True),
        trials=_integer(doc, "trials", "", 100, minimum=1),
        slack=_number(doc, "slack", "", 1e-9),
        c_override=_number(doc, "c_override", "", None),
        seed=_integer(doc, "seed", "", 0, minimum=0), cap=cap, out_dir=out_dir,
        suites=tuple(suites), source=dict(doc),
    )


def load_config(path, kind: str | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), kind)
