"""``ldp-lab`` command line: config-driven experiments with embedded assertions.

Exit status: 0 when every assertion passes, 1 on assertion failures (a JSON
failure list is printed and written to ``failures.json``), 2 on invalid
configuration, 3 on resource errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bounds import decomposition_defect_norm, exp_interchange_norm, projection_overlap_sweep
from .config import KINDS, ExperimentConfig, parse_config
from .errors import InvalidArgumentError, LdpLabError, ResourceError, UnsupportedRegimeError
from .lattice import interaction_norm
from .ldp import (
    CONVEXITY_TOL,
    NORMALIZATION_TOL,
    SUPPORT_TOL,
    ball_mass,
    concavity_defects,
    duality_check,
    free_energy_curve,
    measures_for,
    midpoint_convexity_defect,
    rate_curve_from_measures,
    scgf_from_measures,
)
from .reports import dict_rows_csv, jsonable, versions, write_csv, write_json
from .states import DecouplingParams, decoupling_check, default_decoupling

MONOTONE_TOL = 1e-12


@dataclass
class RunResult:
    kind: str
    out_dir: Path
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    def check(self, ok: bool, name: str, **detail) -> bool:
        if not ok:
            self.failures.append({"check": name, **detail})
        return bool(ok)


def _non_increasing(values) -> bool:
    vals = [v for v in values if not (isinstance(v, float) and math.isnan(v))]
    return all(b <= a + MONOTONE_TOL for a, b in zip(vals, vals[1:]))


def _eps_tag(eps: float) -> str:
    return repr(float(eps))


# -- experiments ------------------------------------------------------------------

def _check_measures(cfg: ExperimentConfig, res: RunResult, measures) -> None:
    norm = interaction_norm(cfg.interaction)
    for n, mu in zip(cfg.n_list, measures):
        total = float(mu.weights.sum())
        res.check(abs(total - 1) <= NORMALIZATION_TOL, "measure_normalization", n=n, total=total)
        res.check(mu.support_ok(norm), "measure_support", n=n, norm=norm,
                  min_position=float(mu.positions.min()), max_position=float(mu.positions.max()))


def _rate_table(res: RunResult, curve, name: str) -> None:
    header = ["x"] + [f"s_n{n}" for n in curve.n_list]
    rows = ([x, *curve.values[:, i]] for i, x in enumerate(curve.x_grid))
    res.files.append(write_csv(res.out_dir / name, header, rows))


def run_rate(cfg: ExperimentConfig, res: RunResult) -> None:
    x = cfg.x_grid.values
    measures = measures_for(cfg.state, cfg.interaction, list(cfg.n_list), cfg.path, cfg.cap)
    _check_measures(cfg, res, measures)
    eps_all = sorted(set(cfg.epsilon) | set(cfg.epsilon_sweep), reverse=True)
    curves = {e: rate_curve_from_measures(measures, cfg.n_list, x, e) for e in eps_all}
    for e, curve in curves.items():
        _rate_table(res, curve, f"rate_eps{_eps_tag(e)}.csv")
        finite = curve.values[np.isfinite(curve.values)]
        res.check(bool(np.all(finite <= 0)), "rate_nonpositive", eps=e)
        for n, mu, row in zip(curve.n_list, measures, curve.values):
            mass = np.array([ball_mass(mu, xx, e) for xx in x])
            res.check(bool(np.all((mass > 0) == np.isfinite(row))), "rate_inf_encoding",
                      n=n, eps=e)
    for wide, narrow in zip(eps_all, eps_all[1:]):
        # Shrinking the ball can only lose mass.
        with np.errstate(invalid="ignore"):  # -inf - -inf
            diff = curves[narrow].values - curves[wide].values
        bad = np.where(np.isnan(diff), False, diff > MONOTONE_TOL)
        res.check(not bad.any(), "rate_monotone_in_eps", eps_wide=wide, eps_narrow=narrow)
    main = curves[cfg.epsilon[0]]
    conc = concavity_defects(main)
    rows = [(n, d) for n, d in zip(conc["n"], conc["defect"])]
    res.files.append(write_csv(res.out_dir / "concavity.csv", ["n", "defect"], rows))
    res.summary["concavity"] = conc
    res.summary["eps"] = cfg.epsilon[0]
    res.summary["extrapolated"] = {"x": x, "s": main.extrapolated}


def _scgf_table(res: RunResult, curve, name: str) -> None:
    label = "P" if curve.kind == "P" else "f"
    header = ["alpha"] + [f"{label}_n{n}" for n in curve.n_list]
    rows = ([a, *curve.values[:, i]] for i, a in enumerate(curve.alpha_grid))
    res.files.append(write_csv(res.out_dir / name, header, rows))


def _check_convexity(res: RunResult, curve) -> None:
    defects = []
    for n, row in zip(curve.n_list, curve.values):
        d = midpoint_convexity_defect(row)
        defects.append(d)
        res.check(d <= CONVEXITY_TOL, "scgf_convexity", n=n, defect=d, tol=CONVEXITY_TOL)
    res.summary["convexity_defect"] = defects


def _scgf(cfg: ExperimentConfig, measures=None):
    alpha = cfg.alpha_grid.values
    if cfg.scgf_kind == "f" and measures is not None:
        return scgf_from_measures(measures, cfg.n_list, alpha)
    return free_energy_curve(cfg.state, cfg.interaction, list(cfg.n_list), alpha,
                             cfg.scgf_kind, cfg.phi, cfg.path, cfg.cap)


def run_scgf(cfg: ExperimentConfig, res: RunResult) -> None:
    curve = _scgf(cfg)
    _scgf_table(res, curve, "scgf.csv")
    _check_convexity(res, curve)
    res.summary["log_norm"] = curve.log_norm


def run_duality(cfg: ExperimentConfig, res: RunResult) -> None:
    state = cfg.state
    if state is None:
        from .states import GibbsFiniteVolume, Tracial
        state = (Tracial(cfg.interaction.site_dim) if cfg.phi is None
                 else GibbsFiniteVolume(cfg.phi, cfg.cap))
    measures = measures_for(state, cfg.interaction, list(cfg.n_list), cfg.path, cfg.cap)
    _check_measures(cfg, res, measures)
    eps = cfg.epsilon[0]
    rate = rate_curve_from_measures(measures, cfg.n_list, cfg.x_grid.values, eps)
    scgf = _scgf(cfg, measures)
    _rate_table(res, rate, f"rate_eps{_eps_tag(eps)}.csv")
    _scgf_table(res, scgf, "scgf.csv")
    _check_convexity(res, scgf)
    rep = duality_check(rate, scgf)
    header_a = ["alpha"] + [f"gap_n{n}" for n in rep.n_list]
    res.files.append(write_csv(res.out_dir / "duality_alpha.csv", header_a,
                               ([a, *rep.alpha_gaps[:, i]] for i, a in enumerate(rep.alpha_grid))))
    header_x = ["x"] + [f"gap_n{n}" for n in rep.n_list]
    res.files.append(write_csv(res.out_dir / "duality_x.csv", header_x,
                               ([x, *rep.x_gaps[:, i]] for i, x in enumerate(rep.x_grid))))
    res.summary.update({"eps": eps, "n_list": rep.n_list, "max_alpha_gap": rep.max_alpha_gap,
                        "max_x_gap": rep.max_x_gap})
    res.check(rep.max_alpha_gap[-1] <= cfg.duality_tol, "duality_alpha_gap",
              n=rep.n_list[-1], gap=rep.max_alpha_gap[-1], tol=cfg.duality_tol)
    res.check(rep.max_x_gap[-1] <= cfg.duality_tol, "duality_x_gap",
              n=rep.n_list[-1], gap=rep.max_x_gap[-1], tol=cfg.duality_tol)
    res.check(rep.decreasing, "duality_gap_decreasing", gaps=rep.max_alpha_gap)


def run_bounds(cfg: ExperimentConfig, res: RunResult) -> None:
    psi, rows = cfg.interaction, []
    by_n: dict = {}
    for n in cfg.n_list:
        for m in cfg.blocks.m_list:
            g = cfg.blocks.g(m, cfg.state)
            if n < 2 * (m + 2 * g):
                continue
            entry = by_n.setdefault(n, {"defect": [], "interchange": []})
            if "defect" in cfg.quantities:
                lemma, cor = decomposition_defect_norm(psi, n, m, g, cfg.cap)
                rows += [lemma.as_row(), cor.as_row()]
                entry["defect"].append(lemma.measured)
                res.check(lemma.passed, "defect_lemma_bound", n=n, m=m,
                          measured=lemma.measured, bound=lemma.bound)
                res.check(cor.passed, "defect_corollary_bound", n=n, m=m,
                          measured=cor.measured, bound=cor.bound)
            if "interchange" in cfg.quantities:
                rep = exp_interchange_norm(psi, n, m, g, cfg.beta, cfg.cap)
                rows.append(rep.as_row())
                entry["interchange"].append(rep.measured)
                res.check(rep.measured >= -1e-12, "interchange_nonnegative", n=n, m=m,
                          measured=rep.measured)
                if rep.passed is not None:
                    res.check(rep.passed, "interchange_bound", n=n, m=m,
                              measured=rep.measured, bound=rep.bound)
    for n, entry in by_n.items():
        for q in ("defect", "interchange"):
            if len(entry[q]) > 1:
                res.check(_non_increasing(entry[q]), f"{q}_non_increasing_in_m", n=n,
                          m_list=list(cfg.blocks.m_list), values=entry[q])
    res.summary["by_n"] = by_n
    if "overlap" in cfg.quantities:
        sweeps = {}
        for m in cfg.blocks.m_list:
            g = cfg.blocks.g(m, cfg.state)
            ns = [n for n in cfg.n_list if n >= 2 * (m + 2 * g)]
            if not ns:
                continue
            sw = projection_overlap_sweep(psi, ns, m, g, cfg.x, cfg.eps_outer, cfg.eps_inner,
                                          cfg.alpha_probe, cfg.cap)
            values = [r.measured for r in sw["reports"]]
            rows += [r.as_row() for r in sw["reports"]]
            sweeps[m] = {"n": ns, "value": values, "decay_rate": sw["decay_rate"]}
            res.check(all(v < 0 for v in values), "overlap_negative", m=m, n=ns, values=values)
            res.check(_non_increasing(values), "overlap_non_increasing_in_n", m=m, n=ns,
                      values=values)
        res.summary["overlap"] = sweeps
    res.files.append(dict_rows_csv(res.out_dir / "bounds.csv", rows))


def run_decoupling(cfg: ExperimentConfig, res: RunResult) -> None:
    state = cfg.state
    if cfg.c_override is not None:
        params = DecouplingParams(lambda m: cfg.blocks.g(m, state),
                                  lambda m, c=cfg.c_override: c, f"c={cfg.c_override}")
    elif cfg.blocks.g_rule == "state-default":
        params = default_decoupling(state)
    else:
        base = default_decoupling(state)
        params = DecouplingParams(lambda m: cfg.blocks.g(m, state), base.c, base.label)
    rows, violations = [], []
    for n in cfg.n_list:
        for m in cfg.blocks.m_list:
            g = int(params.g(m))
            if n - m - 2 * g < 1:
                continue
            rep = decoupling_check(state, params, m, n, cfg.trials, cfg.seed, cfg.slack, cfg.cap)
            rows.append((n, m, rep.g, rep.c, rep.trials, rep.seed, len(rep.violations),
                         rep.max_abs_log_ratio))
            violations += [{"n": n, "m": m, **v} for v in rep.violations]
            res.check(rep.passed, "decoupling_inequality", n=n, m=m, g=rep.g, c=rep.c,
                      violations=len(rep.violations))
    res.files.append(write_csv(res.out_dir / "decoupling.csv",
                               ["n", "m", "g", "c", "trials", "seed", "violations",
                                "max_abs_log_ratio"], rows))
    res.summary["violations"] = violations
    res.summary["params"] = params.label


def run_selftest(cfg: ExperimentConfig, res: RunResult) -> None:
    from .selftest import SUITES
    names = list(cfg.suites) or list(SUITES)
    rows = []
    for name in names:
        suite = SUITES[name](cfg.seed)
        rows.append((name, suite.checks, len(suite.failures), "PASS" if suite.passed else "FAIL"))
        for detail in suite.failures:
            res.check(False, f"selftest_{name}", detail=detail)
    res.files.append(write_csv(res.out_dir / "selftest.csv",
                               ["suite", "checks", "failures", "status"], rows))
    res.summary["suites"] = [{"suite": r[0], "checks": r[1], "failures": r[2], "status": r[3]}
                             for r in rows]


RUNNERS = {"rate": run_rate, "scgf": run_scgf, "duality": run_duality,
           "bounds": run_bounds, "decoupling": run_decoupling, "selftest": run_selftest}


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> RunResult:
    """Run one experiment, write its CSV tables and ``report.json``."""
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = RunResult(cfg.kind, out)
    started = time.time()
    RUNNERS[cfg.kind](cfg, res)
    report = {
        "kind": cfg.kind,
        "passed": res.passed,
        "failures": res.failures,
        "summary": res.summary,
        "files": [p.name for p in res.files],
        "metadata": {
            "seed": cfg.seed,
            "x_grid": cfg.resolved()["x_grid"],
            "alpha_grid": cfg.resolved()["alpha_grid"],
            "epsilon": list(cfg.epsilon),
            "tolerances": {"normalization": NORMALIZATION_TOL, "support": SUPPORT_TOL,
                           "convexity": CONVEXITY_TOL, "duality": cfg.duality_tol,
                           "monotone": MONOTONE_TOL, "decoupling_slack": cfg.slack},
            "versions": versions(),
            "config": cfg.resolved(),
            "elapsed_seconds": time.time() - started,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        },
    }
    res.files.append(write_json(out / "report.json", report))
    if not res.passed:
        write_json(out / "failures.json", res.failures)
    return res


# -- command line -------------------------------------------------------------------

def _n_list_arg(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ldp-lab", description=__doc__.splitlines()[0])
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", type=Path, help="experiment JSON (optional for selftest)")
    p.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
    p.add_argument("--seed", type=int)
    p.add_argument("--cap", type=int, help="dimension cap override")
    p.add_argument("--n-list", type=_n_list_arg, help="comma-separated n values")
    return p


def load_document(args) -> dict:
    if args.config is None:
        if args.kind != "selftest":
            raise InvalidArgumentError("--config is required for this experiment")
        doc = {"kind": "selftest"}
    else:
        try:
            doc = json.loads(args.config.read_text())
        except OSError as exc:
            raise InvalidArgumentError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InvalidArgumentError("<root>: expected a JSON object")
    for key, value in (("seed", args.seed), ("cap", args.cap), ("n_list", args.n_list)):
        if value is not None:
            doc[key] = value
    if args.out is not None:
        doc["out_dir"] = str(args.out)
    return doc


def _print_result(res: RunResult) -> None:
    if res.kind == "selftest":
        print(f"{'suite':<14}{'checks':>8}{'failures':>10}  status")
        for row in res.summary["suites"]:
            print(f"{row['suite']:<14}{row['checks']:>8}{row['failures']:>10}  {row['status']}")
    for path in res.files:
        print(f"wrote {path}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(load_document(args), args.kind)
        res = run_experiment(cfg)
    except ResourceError as exc:
        print(json.dumps({"status": "resource_error", "message": str(exc), "n": exc.n,
                          "dimension": exc.dimension, "cap": exc.cap}), file=sys.stderr)
        return 3
    except (InvalidArgumentError, UnsupportedRegimeError) as exc:
        print(json.dumps({"status": "config_error", "message": str(exc)}), file=sys.stderr)
        return 2
    except LdpLabError as exc:
        print(json.dumps({"status": "error", "message": str(exc)}), file=sys.stderr)
        return 2
    _print_result(res)
    if not res.passed:
        print(json.dumps(jsonable({"status": "fail", "failures": res.failures}), default=str))
        return 1
    print(json.dumps({"status": "pass", "kind": res.kind}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
