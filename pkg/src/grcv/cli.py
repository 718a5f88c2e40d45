"""Command-line front end.

Subcommands::

    grcv run          --data FILE [--method gr-cv|in-cv|grid] ...
    grcv sweep-folds  --data FILE --T-list 2,3,4,5 ...
    grcv diagnose     --data FILE [--samples 100] ...

Every flag can also be set through an environment variable named
``GRCV_<FLAG>`` (upper case, dashes as underscores), e.g. ``GRCV_SEED=7``.
Command-line values win over the environment.

Exit codes: 0 success, 1 solver or diagnostic failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sparse

from .baselines import GridSpec, grid_search, inexact_cv
from .dataset import DEFAULT_SEED, Dataset, SplitSpec, load_libsvm
from .grm import GrmOptions, MethodResult, gr_cv, prepare_instance
from .mpec import (
    active_gradient_matrix,
    active_sets,
    check_index_relations,
    feasible_point,
    positive_linear_dependence,
)

__all__ = ["RunConfig", "ConfigError", "build_parser", "cmd_run", "cmd_sweep_folds", "cmd_diagnose", "main"]

log = logging.getLogger("grcv")

ENV_PREFIX = "GRCV_"
METHODS = ("gr-cv", "in-cv", "grid")
COLUMNS = ("Dataset", "Method", "E_t(%)", "E_C(%)", "Vio", "k", "it")
SWEEP_COLUMNS = ("Dataset", "T", "Method", "E_t(%)", "E_C(%)", "Vio", "k", "it")

# (l1, l2) used when --l1/--l2 are omitted and the file stem matches
KNOWN_SIZES = {
    "heart": (189, 81),
    "breast": (240, 172),
    "colon-cancer": (36, 26),
    "ionosphere": (246, 105),
    "australian": (270, 420),
    "diabetes": (270, 498),
    "splice": (300, 700),
    "fourclass": (300, 562),
    "w1a": (240, 260),
    "w2a": (300, 500),
    "a1a": (300, 200),
    "german.number": (207, 793),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data: str
    l1: int | None = None
    l2: int | None = None
    T: int = 3
    seed: int = DEFAULT_SEED
    method: str = "gr-cv"
    t0: float = 1.0
    sigma: float = 0.01
    tmin: float = 1e-8
    tol: float = 1e-4
    grid: tuple = GridSpec().C_values
    rescale: bool = True
    scale_features: bool = False
    out: str | None = None
    format: str = "csv"
    T_list: tuple = (2, 3, 4, 5)
    samples: int = 100
    eps: float = 1e-6
    inject_fault: bool = False
    extra: dict = field(default_factory=dict)

    def validate(self):
        if self.T < 2:
            raise ConfigError("T must be ≥ 2")
        if any(T < 2 for T in self.T_list):
            raise ConfigError("T must be ≥ 2")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.samples < 1:
            raise ConfigError("samples must be positive")
        try:
            GrmOptions(t0=self.t0, sigma=self.sigma, t_min=self.tmin)
            GridSpec(tuple(self.grid))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    @property
    def dataset_name(self) -> str:
        name = Path(self.data).name
        for suffix in (".txt", ".libsvm", "_scale", ".scale"):
            name = name.removesuffix(suffix)
        return name


# ----------------------------------------------------------------------------
# argument parsing


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _bool(text: str) -> bool:
    return text.strip().lower() in ("1", "true", "yes", "on")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--data", help="LIBSVM file (or a name looked up in $GRCV_DATA_DIR)")
    sp.add_argument("--l1", type=int, help="number of cross-validation points")
    sp.add_argument("--l2", type=int, help="number of hold-out test points")
    sp.add_argument("--folds", "-T", dest="T", type=int, default=3, help="number of folds (default 3)")
    sp.add_argument("--seed", type=int, default=DEFAULT_SEED, help="split seed")
    sp.add_argument("--scale-features", action="store_true", help="map each feature to [-1, 1]")
    sp.add_argument("--out", help="write the report here instead of stdout")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--verbose", "-v", action="store_true")


def _add_method(sp: argparse.ArgumentParser):
    sp.add_argument("--t0", type=float, default=1.0)
    sp.add_argument("--sigma", type=float, default=0.01)
    sp.add_argument("--tmin", type=float, default=1e-8)
    sp.add_argument("--tol", type=float, default=1e-4, help="In-CV relaxation value")
    sp.add_argument("--grid", type=_floats, default=GridSpec().C_values, help="comma-separated C values")
    sp.add_argument("--no-rescale", dest="rescale", action="store_false", help="skip the T/(T-1) rescale of C")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="grcv", description="Bilevel cross-validation for the l1-loss linear SVC.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one method and print its summary row")
    _add_common(run)
    _add_method(run)
    run.add_argument("--method", choices=METHODS, default="gr-cv")

    sweep = sub.add_parser("sweep-folds", help="run all methods for several fold counts")
    _add_common(sweep)
    _add_method(sweep)
    sweep.add_argument("--T-list", dest="T_list", type=_ints, default=(2, 3, 4, 5))

    diag = sub.add_parser("diagnose", help="constraint-qualification checks on random feasible points")
    _add_common(diag)
    diag.add_argument("--samples", type=int, default=100)
    diag.add_argument("--eps", type=float, default=1e-6)
    diag.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    _apply_env_defaults(ap, sub)
    return ap


def _apply_env_defaults(ap, sub):
    """Replace parser defaults by ``GRCV_*`` environment values."""
    for sp in sub.choices.values():
        for action in sp._actions:
            if not action.option_strings or action.dest == "help":
                continue
            long = next((o for o in action.option_strings if o.startswith("--")), None)
            if long is None:
                continue
            key = ENV_PREFIX + long[2:].upper().replace("-", "_")
            if key not in os.environ:
                continue
            raw = os.environ[key]
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                on = _bool(raw)
                value = on if isinstance(action, argparse._StoreTrueAction) else not on
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ConfigError(f"{key}={raw!r}: {exc}") from exc
            else:
                value = raw
            sp.set_defaults(**{action.dest: value})


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(data=ns.data or "")
    for name in ("l1", "l2", "T", "seed", "method", "t0", "sigma", "tmin", "tol", "grid", "rescale",
                 "scale_features", "out", "format", "T_list", "samples", "eps", "inject_fault"):
        if hasattr(ns, name):
            setattr(cfg, name, getattr(ns, name))
    cfg.grid = tuple(cfg.grid)
    cfg.validate()
    if not cfg.data:
        raise ConfigError("--data is required")
    return cfg


# ----------------------------------------------------------------------------
# helpers


def _resolve_data(name: str) -> Path:
    path = Path(name)
    if path.is_file():
        return path
    root = os.environ.get(ENV_PREFIX + "DATA_DIR")
    if root:
        for cand in (Path(root) / name, Path(root) / f"{name}.txt", Path(root) / f"{name}_scale"):
            if cand.is_file():
                return cand
    raise ConfigError(f"data file not found: {name}")


def load_dataset(cfg: RunConfig) -> Dataset:
    path = _resolve_data(cfg.data)
    try:
        ds = load_libsvm(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return ds.scaled() if cfg.scale_features else ds


def split_for(cfg: RunConfig, ds: Dataset, T: int | None = None) -> SplitSpec:
    """Split sizes: explicit flags, else the reference sizes for a known name, else 70/30."""
    l1, l2 = cfg.l1, cfg.l2
    if l1 is None and l2 is None:
        known = KNOWN_SIZES.get(cfg.dataset_name)
        if known and sum(known) <= len(ds):
            l1, l2 = known
    if l1 is None:
        l1 = (len(ds) - l2) if l2 is not None else int(round(0.7 * len(ds)))
    if l2 is None:
        l2 = len(ds) - l1
    spec = SplitSpec(l1, l2, cfg.T if T is None else T, cfg.seed)
    try:
        spec.validate(len(ds))
    except ValueError as exc:
        raise ConfigError(str(exc).replace(">=", "≥")) from exc
    return spec


def run_method(cfg: RunConfig, ds: Dataset, spec: SplitSpec, method: str, instance=None) -> MethodResult:
    grm_opts = GrmOptions(t0=cfg.t0, sigma=cfg.sigma, t_min=cfg.tmin)
    if method == "gr-cv":
        return gr_cv(ds, spec, grm_opts, rescale=cfg.rescale, instance=instance)
    if method == "in-cv":
        return inexact_cv(ds, spec, cfg.tol, grm_opts, rescale=cfg.rescale, instance=instance)
    return grid_search(ds, spec, GridSpec(tuple(cfg.grid)), instance=instance)


def _failed(res: MethodResult) -> bool:
    trace = res.extra.get("trace")
    stages = trace["stages"] if trace else [{"status": res.extra.get("status", "converged")}]
    return any(s["status"] == "numerical_failure" for s in stages)


def render(rows: list[dict], columns, fmt: str, details: list | None = None) -> str:
    if fmt == "json":
        doc = {"rows": rows}
        if details is not None:
            doc["details"] = details
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def emit(cfg: RunConfig, text: str):
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------------------
# commands


def cmd_run(cfg: RunConfig) -> int:
    ds = load_dataset(cfg)
    spec = split_for(cfg, ds)
    res = run_method(cfg, ds, spec, cfg.method)
    emit(cfg, render([res.row(cfg.dataset_name)], COLUMNS, cfg.format, [res.to_dict()]))
    return 1 if _failed(res) else 0


def cmd_sweep_folds(cfg: RunConfig, T_list=None) -> int:
    ds = load_dataset(cfg)
    rows, details, code = [], [], 0
    for T in T_list or cfg.T_list:
        spec = split_for(cfg, ds, T)
        inst = prepare_instance(ds, spec)
        for method in METHODS:
            res = run_method(cfg, ds, spec, method, instance=inst)
            rows.append({"T": T, **res.row(cfg.dataset_name)})
            details.append({"T": T, "method": res.method, "C_hat": res.C_hat, "C_final": res.C_final})
            code = max(code, 1 if _failed(res) else 0)
    emit(cfg, render(rows, SWEEP_COLUMNS, cfg.format, details))
    return code


def diagnose_points(cfg: RunConfig, ds: Dataset) -> dict:
    """Sample random feasible points and tally MFCQ and index-set checks."""
    spec = split_for(cfg, ds)
    p = prepare_instance(ds, spec).problem
    rng = np.random.default_rng(cfg.seed)
    Cs = 10.0 ** rng.uniform(-2.0, 2.0, size=cfg.samples)
    tally = {"points": 0, "unclassified": 0, "independent": 0, "dependent": 0,
             "coverage_failures": 0, "relation_failures": 0}
    failed_relations: dict[str, int] = {}
    for C in Cs:
        v = feasible_point(p, float(C)).v
        tally["points"] += 1
        acts = active_sets(p, v, cfg.eps)
        if acts.unclassified:
            tally["unclassified"] += 1
            continue
        sizes = acts.sizes()
        if sizes["IH1"] + sizes["IG1"] + sizes["IGH1"] != p.nu:
            tally["coverage_failures"] += 1
        Gamma = active_gradient_matrix(p, v, cfg.eps)
        if cfg.inject_fault and Gamma.shape[0]:
            # test hook: a row and its negative are always positively dependent
            Gamma = sparse.vstack([Gamma, -Gamma[0]], format="csr")
        verdict = positive_linear_dependence(Gamma)
        tally["independent" if verdict.independent else "dependent"] += 1
        bad = [k for k, (ok, _, _) in check_index_relations(p, v, cfg.eps).items() if not ok]
        if bad:
            tally["relation_failures"] += 1
            for k in bad:
                failed_relations[k] = failed_relations.get(k, 0) + 1
    tally["failed_relations"] = failed_relations
    tally["passed"] = (
        tally["dependent"] == 0
        and tally["coverage_failures"] == 0
        and tally["relation_failures"] == 0
        and tally["unclassified"] == 0
    )
    return tally


def cmd_diagnose(cfg: RunConfig) -> int:
    ds = load_dataset(cfg)
    tally = diagnose_points(cfg, ds)
    if cfg.format == "json":
        text = json.dumps(tally, indent=2) + "\n"
    else:
        keys = ("points", "unclassified", "independent", "dependent", "coverage_failures", "relation_failures", "passed")
        text = render([{k: tally[k] for k in keys}], keys, "csv")
    emit(cfg, text)
    return 0 if tally["passed"] else 1


COMMANDS = {"run": cmd_run, "sweep-folds": cmd_sweep_folds, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(ns)
        return COMMANDS[ns.command](cfg)
    except ConfigError as exc:
        print(f"grcv: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"grcv: solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
