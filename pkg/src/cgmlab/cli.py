"""Command line front end: `cgmlab <command> --config run.yaml [--out DIR]`.

Commands: energy, neck-report, index-bound.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 infeasible subdivision.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import minkowski
from .conformal_gauss import build_cgm, energies
from .cylinder_analysis import DIAG_SCHEMA, diagnose
from .errors import CGMError, ConfigError, FeasibilityError, UmbilicCircleError
from .immersion import (FIXTURES, build_fixture, energy_identity, gauss_curvature_integral, neck_member,
                        neck_window)
from .index import index_lower_bound, interval_area

log = logging.getLogger("cgmlab")

COMMANDS = ("energy", "neck-report", "index-bound")
MIN_GRID = 8


@dataclass
class RunConfig:
    command: str
    fixture: str = "round_sphere"
    params: dict = field(default_factory=dict)
    n_t: int = 128
    n_theta: int = 128
    family: list = field(default_factory=lambda: [0.2, 0.1, 0.05])
    eps: Optional[float] = None  # neck member for index-bound
    J: int = 1
    lam: Optional[float] = None
    tau_group: float = minkowski.TAU_GROUP
    tau_null: float = minkowski.TAU_NULL
    certificate_tol: float = 1e-6
    out: str = "."


def _positive_int(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return value


def load_config(path, command: str, out: Optional[str] = None) -> RunConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return parse_config(raw, command, out)


def parse_config(raw: dict, command: str, out: Optional[str] = None) -> RunConfig:
    known = {"command", "fixture", "grid", "family", "neck", "index", "tolerances", "output"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {list(COMMANDS)}")
    if raw.get("command", command) != command:
        raise ConfigError(f"config is for command {raw['command']!r}, not {command!r}")
    cfg = RunConfig(command=command)

    fx = raw.get("fixture")
    if isinstance(fx, str):
        cfg.fixture = fx
    elif isinstance(fx, dict):
        cfg.fixture = fx.get("name", cfg.fixture)
        cfg.params = dict(fx.get("params") or {})
    elif fx is not None:
        raise ConfigError("fixture must be a name or a mapping with name/params")
    if cfg.fixture not in FIXTURES:
        raise ConfigError(f"unknown fixture {cfg.fixture!r}; choose from {sorted(FIXTURES)}")

    grid = raw.get("grid") or {}
    if not isinstance(grid, dict):
        raise ConfigError("grid must be a mapping with n_t and n_theta")
    cfg.n_t = _positive_int(grid.get("n_t", cfg.n_t), "grid.n_t")
    cfg.n_theta = _positive_int(grid.get("n_theta", cfg.n_t), "grid.n_theta")
    if min(cfg.n_t, cfg.n_theta) < MIN_GRID:
        raise ConfigError(f"grid sizes must be at least {MIN_GRID}")

    if "family" in raw:
        fam = raw["family"]
        if not isinstance(fam, list) or not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in fam):
            raise ConfigError("family must be a list of numbers")
        cfg.family = [float(e) for e in fam]
    if command == "neck-report":
        if not cfg.family:
            raise ConfigError("neck-report needs a nonempty family sweep")
        if any(e <= 0 for e in cfg.family) or any(b >= a for a, b in zip(cfg.family, cfg.family[1:])):
            raise ConfigError("family values must be positive and strictly decreasing")

    neck = raw.get("neck") or {}
    if not isinstance(neck, dict):
        raise ConfigError("neck must be a mapping")
    if "eps" in neck:
        cfg.eps = float(neck["eps"])
        if not cfg.eps > 0:
            raise ConfigError("neck.eps must be positive")

    idx = raw.get("index") or {}
    if not isinstance(idx, dict):
        raise ConfigError("index must be a mapping")
    cfg.J = _positive_int(idx.get("J", cfg.J), "index.J")
    if cfg.J < 1:
        raise ConfigError("index.J must be at least 1")
    if idx.get("lambda") is not None:
        cfg.lam = float(idx["lambda"])
        if not cfg.lam > 0:
            raise ConfigError("index.lambda must be positive")

    tol = raw.get("tolerances") or {}
    if not isinstance(tol, dict):
        raise ConfigError("tolerances must be a mapping")
    for key, attr in (("tau_group", "tau_group"), ("tau_null", "tau_null"), ("certificate", "certificate_tol")):
        if key in tol:
            v = float(tol[key])
            if not v > 0:
                raise ConfigError(f"tolerances.{key} must be positive")
            setattr(cfg, attr, v)

    output = raw.get("output") or {}
    cfg.out = out or (output.get("dir") if isinstance(output, dict) else None) or "."
    return cfg


def _fixture(cfg: RunConfig):
    try:
        return build_fixture(cfg.fixture, **cfg.params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for fixture {cfg.fixture!r}: {exc}") from exc


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _monotone_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def cmd_energy(cfg: RunConfig) -> dict:
    imm = _fixture(cfg)
    grid = imm.grid(cfg.n_t, cfg.n_theta)
    ident = energy_identity(imm, grid)
    en = energies(build_cgm(imm, grid))
    report = {"command": "energy", "fixture": cfg.fixture, "params": cfg.params,
              "grid": [cfg.n_t, cfg.n_theta], "W": ident.W, "E": ident.E, "chi": ident.chi,
              "identity_defect": ident.defect, "A_Y": en.area, "D_Y": en.dirichlet}
    _write_json(Path(cfg.out) / "energy.json", report)
    return report


def cmd_neck_report(cfg: RunConfig) -> dict:
    members = []
    csv_path = Path(cfg.out) / "neck_report.csv"
    with open(csv_path, "w") as fh:
        fh.write(f"# schema={DIAG_SCHEMA}\n")
        fh.write("eps,t,alpha,beta,gamma,delta,Ystar_1,Ystar_2,Ystar_3,Ystar_4,Ystar_5\n")
        for eps in cfg.family:
            imm = neck_member(eps)
            grid = imm.grid(cfg.n_t, cfg.n_theta)
            F = build_cgm(imm, grid)
            window = neck_window(eps)
            diag = diagnose(F, window)
            for i in range(len(diag.t)):
                vals = (diag.t[i], diag.alpha[i], diag.beta[i], diag.gamma[i], diag.delta[i], *diag.Ystar[i])
                fh.write(",".join([repr(float(eps))] + [repr(float(v)) for v in vals]) + "\n")
            summary = diag.summary()
            summary.update({"eps": eps, "window": list(window), "ell_member": diagnose(F, with_osc=False).ell,
                            "gauss_curvature_window": gauss_curvature_integral(imm, grid, window)})
            members.append(summary)
    fits = [m["line_fit"] for m in members]
    trend = {
        "alpha_over_beta_decreasing": _monotone_decreasing([m["sup_alpha_over_beta"] for m in members]),
        "line_fit_residual_decreasing": (None if None in fits else
                                         _monotone_decreasing([f["residual"] for f in fits])),
        "null_ratio_decreasing": None if None in fits else _monotone_decreasing([f["null_ratio"] for f in fits]),
        "causal_classes": [None if f is None else f["causal_class"] for f in fits],
        "gauss_curvature_decreasing": _monotone_decreasing([abs(m["gauss_curvature_window"]) for m in members]),
    }
    report = {"command": "neck-report", "grid": [cfg.n_t, cfg.n_theta], "family": cfg.family,
              "members": members, "trend": trend, "csv": csv_path.name}
    _write_json(Path(cfg.out) / "neck_report.json", report)
    return report


def cmd_index_bound(cfg: RunConfig) -> dict:
    eps = cfg.eps if cfg.eps is not None else min(cfg.family)
    imm = neck_member(eps)
    F = build_cgm(imm, imm.grid(cfg.n_t, cfg.n_theta))
    whole = (F.grid.t0, F.grid.t1)
    lam = cfg.lam if cfg.lam is not None else interval_area(F, whole) / 1.5
    try:
        bound = index_lower_bound(F, lam, cfg.J)
    except FeasibilityError as exc:
        _write_json(Path(cfg.out) / "index_bound.json",
                    {"command": "index-bound", "eps": eps, "J": cfg.J, "lambda": lam,
                     "error": str(exc), "max_feasible_J": exc.max_feasible})
        raise
    report = {"command": "index-bound", "eps": eps, "grid": [cfg.n_t, cfg.n_theta]} | bound.to_dict()
    _write_json(Path(cfg.out) / "index_bound.json", report)
    return report


HANDLERS = {"energy": cmd_energy, "neck-report": cmd_neck_report, "index-bound": cmd_index_bound}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cgmlab", description="Conformal Gauss map laboratory for Willmore surfaces")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.command, args.out)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        report = HANDLERS[cfg.command](cfg)
    except UmbilicCircleError as exc:
        print(f"error (code {exc.code}): {exc}. Hint: perturb the chart with "
              "umbilic_circle_perturbation to remove umbilic circles.", file=sys.stderr)
        return exc.code
    except FeasibilityError as exc:
        print(f"error (code {exc.code}): {exc}", file=sys.stderr)
        return exc.code
    except CGMError as exc:
        print(f"error (code {exc.code}): {exc}", file=sys.stderr)
        return exc.code
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"error (code 3): numerical failure: {exc}", file=sys.stderr)
        return 3
    log.info("wrote %s report to %s", cfg.command, cfg.out)
    print(json.dumps({"command": cfg.command, "out": str(cfg.out), "status": "ok"}, sort_keys=True))
    return 0 if report is not None else 3


if __name__ == "__main__":
    sys.exit(main())
