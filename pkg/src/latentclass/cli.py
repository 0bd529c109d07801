"""Command-line front end: fit, predict, validate, demo, print-config.

Exit codes: 0 ok, 1 runtime or numerical failure, 2 usage or validation error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
import warnings
import zlib
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .core_gp import GpParams, MeanBasis, NumericalError
from .design import DatasetError, LabelledDesign, read_dataset, write_dataset
from .inference import Chain, MhConfig, chain_diagnostics, default_priors, map_estimate, mh_run
from .prediction import (
    BoundaryError,
    boundary_1d,
    boundary_contour_2d,
    class_probability,
    grid_axes,
    grid_points,
    loo_misclassification,
    transform_inputs,
)
from .sampler import DegenerateSampleError, latent_ensemble
from .testbed import DEMOS

log = logging.getLogger("latentclass")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: str = ""
    demo: str = ""
    basis: str = ""  # empty: demo default, else linear
    transform_at: str = ""  # 1d approximate boundary; empty disables
    prior_shape: float = 3.0
    beta_sd: float = 3.0
    intercept_sd: float = 0.1
    iterations: int = 20_000
    burn_in: int = 5_000
    thin: int = 5
    adapt_window: int = 100
    likelihood_replicates: int = 64
    grid_res: int = 101
    ensemble: int = 200
    loo_resamples: int = 200
    seed: int | None = None
    threads: int = 1
    out: str = "out"

    def validate(self):
        if bool(self.data) == bool(self.demo):
            raise UsageError("set exactly one of --data / --demo")
        if self.seed is None:
            raise UsageError("--seed is required")
        if self.demo and self.demo not in DEMOS:
            raise UsageError(f"unknown demo {self.demo!r}; valid names: {', '.join(DEMOS)}")
        if self.basis and self.basis not in ("constant", "linear"):
            raise UsageError("basis must be constant or linear")
        for name in ("iterations", "thin", "grid_res", "ensemble", "loo_resamples", "threads",
                     "likelihood_replicates"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.grid_res < 2:
            raise UsageError("grid_res must be >= 2")
        if not 0 <= self.burn_in < self.iterations:
            raise UsageError("burn_in must be in [0, iterations)")

    def dumps(self, include_out: bool = True) -> str:
        """Flat ``key = value`` text; artifacts omit ``out`` so they do not depend on location."""
        lines = []
        for f in fields(self):
            if f.name == "out" and not include_out:
                continue
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "RunConfig":
        cfg = cls()
        types = {f.name: f.type for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"config line {lineno}: expected key = value")
            key, val = (p.strip() for p in line.split("=", 1))
            if key not in types:
                raise UsageError(f"config line {lineno}: unknown key {key!r}")
            setattr(cfg, key, _coerce(types[key], val, key))
        return cfg


def _coerce(typ, val: str, key: str):
    try:
        if "int" in str(typ):
            return None if val == "" and "None" in str(typ) else int(val)
        if "float" in str(typ):
            return float(val)
    except ValueError:
        raise UsageError(f"bad value for {key}: {val!r}") from None
    return val


def substream(seed: int, name: str) -> int:
    """Named, independent 64-bit sub-seed derived from the run seed."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, np.uint64)[0])


DEMO_SETTINGS = {
    "step_1d": {"basis": "linear", "transform_at": "7.0"},
    "halfplane_2d": {"basis": "linear"},
    "santner_ring": {"basis": "constant"},
    "kndy_stand_in": {"basis": "linear"},
}


def resolve(cfg: RunConfig) -> RunConfig:
    cfg = dataclasses.replace(cfg)
    if cfg.demo:
        for k, v in DEMO_SETTINGS[cfg.demo].items():
            if not getattr(cfg, k):
                setattr(cfg, k, v)
    if not cfg.basis:
        cfg.basis = "linear"
    return cfg


def load_design(cfg: RunConfig):
    """Original-unit design and its synthetic problem (``None`` for datasets)."""
    if cfg.demo:
        problem, design = DEMOS[cfg.demo](cfg.seed)
        return design, problem
    return read_dataset(Path(cfg.data)), None


def model_design(cfg: RunConfig, design: LabelledDesign):
    """Design actually modelled, and the shift applied to its inputs."""
    if cfg.transform_at:
        if design.dim != 1:
            raise UsageError("transform_at is supported for 1d designs only")
        tdesign, rec = transform_inputs(design, float(cfg.transform_at))
        return tdesign, float(rec.shift[0])
    return design, 0.0


def _priors(cfg, design):
    return default_priors(design, MeanBasis(cfg.basis), intercept_tight=bool(cfg.transform_at),
                          shape=cfg.prior_shape, beta_sd=cfg.beta_sd, intercept_sd=cfg.intercept_sd)


def _mh_config(cfg):
    return MhConfig(n_iterations=cfg.iterations, burn_in=cfg.burn_in, thin=cfg.thin,
                    adapt_window=cfg.adapt_window, likelihood_replicates=cfg.likelihood_replicates,
                    seed=substream(cfg.seed, "fit"))


def _json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _fmt(x) -> float:
    return float(f"{x:.12g}")


def cmd_fit(cfg: RunConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    design, _ = load_design(cfg)
    if design.n < 2:
        raise UsageError("need at least 2 data points")
    if design.single_class:
        warnings.warn("single-class data: fitting anyway, no boundary exists", stacklevel=2)
    mdesign, shift = model_design(cfg, design)
    priors = _priors(cfg, mdesign)
    chain = mh_run(mdesign, priors, _mh_config(cfg))
    theta = map_estimate(chain)
    (out / "run_config.txt").write_text(cfg.dumps(include_out=False))
    write_dataset(design, out / "design.csv")
    chain.to_csv(out / "chain.csv")
    diag = chain_diagnostics(chain)
    _json({k: ({kk: _fmt(vv) for kk, vv in v.items()} if isinstance(v, dict) else _fmt(v))
           for k, v in diag.items()}, out / "diagnostics.json")
    record = {
        "basis": cfg.basis,
        "beta": [float(b) for b in theta.beta],
        "sigma2": theta.sigma2,
        "delta": theta.delta,
        "log_posterior": float(chain.log_posterior.max()),
        "transform_shift": shift,
        "acceptance_rate": chain.acceptance_rate,
    }
    _json(record, out / "map.json")
    log.info("fit: %d draws, acceptance %.3f, MAP %s", len(chain), chain.acceptance_rate, theta)
    return {"chain": chain, "map": theta, "design": design, "model_design": mdesign, "shift": shift}


def _load_fit(cfg: RunConfig):
    out = Path(cfg.out)
    needed = ["design.csv", "map.json"]
    missing = [n for n in needed if not (out / n).exists()]
    if missing:
        raise UsageError(f"fit artifacts missing in {out}: {', '.join(missing)}")
    design = read_dataset(out / "design.csv")
    rec = json.loads((out / "map.json").read_text())
    theta = GpParams(rec["beta"], rec["sigma2"], rec["delta"])
    mdesign, shift = model_design(cfg, design)
    if shift != rec.get("transform_shift", 0.0):
        raise UsageError("transform_at differs from the one used at fit time")
    return design, mdesign, shift, theta


def cmd_predict(cfg: RunConfig) -> dict:
    design, mdesign, shift, theta = _load_fit(cfg)
    out = Path(cfg.out)
    ens = latent_ensemble(mdesign, theta, cfg.ensemble, substream(cfg.seed, "ensemble"))
    axes = grid_axes(mdesign, cfg.grid_res)
    G = grid_points(axes)
    pred = class_probability(G, mdesign, ens)
    pred.points = pred.points + shift
    pred.to_csv(out / "grid.csv")
    if design.dim == 1:
        bnd = boundary_1d(mdesign, ens)
        bnd.root += shift
        bnd.credible_interval = tuple(v + shift for v in bnd.credible_interval)
    elif design.dim == 2:
        P = pred.p_region1.reshape(cfg.grid_res, cfg.grid_res)
        bnd = boundary_contour_2d(axes[0], axes[1], P)
    else:
        bnd = None
    if bnd is not None:
        bnd.to_csv(out / "boundary.csv")
    return {"predictions": pred, "boundary": bnd, "ensemble": ens, "axes": axes}


def cmd_validate(cfg: RunConfig) -> dict:
    design, mdesign, _, theta = _load_fit(cfg)
    if design.n < 3:
        raise UsageError("validation needs at least 3 points")
    report = loo_misclassification(mdesign, cfg.loo_resamples, substream(cfg.seed, "loo"),
                                   params=theta, threads=cfg.threads)
    report.to_csv(design, Path(cfg.out) / "misclassification.csv")
    top = report.top_points(2)
    print(f"max-rate points: {' '.join(str(int(i)) for i in top)} "
          f"(rates {' '.join(f'{report.per_point_rate[i]:.3f}' for i in top)})")
    return {"report": report}


def _demo_checks(name, problem, design, fit, pred, bnd, loo) -> list[tuple[str, bool, str]]:
    checks = []
    rates = loo.per_point_rate
    if name == "step_1d":
        lo, hi = bnd.credible_interval
        checks.append(("boundary root in (6, 8)", 6 < bnd.root < 8, f"root={bnd.root:.4f}"))
        checks.append(("credible interval within [5.5, 8.5] and contains root",
                       5.5 <= lo <= bnd.root <= hi <= 8.5, f"interval=[{lo:.4f}, {hi:.4f}]"))
        x = design.points[:, 0]
        flank = {int(np.argmax(np.where(x <= 6, x, -np.inf))), int(np.argmin(np.where(x >= 8, x, np.inf)))}
        top = set(int(i) for i in loo.top_points(2))
        checks.append(("two largest LOO rates flank the gap", top == flank, f"top={sorted(top)}"))
    truth = problem.labels(pred.points)
    correct = pred.predicted_labels() == truth
    if name == "halfplane_2d":
        mask = np.abs(pred.points[:, 0] - 3.0) > 0.5
        acc = float(correct[mask].mean())
        checks.append(("grid accuracy >= 0.90 where |x1-3| > 0.5", acc >= 0.9, f"accuracy={acc:.4f}"))
    elif name == "santner_ring":
        acc = float(correct.mean())
        checks.append(("grid accuracy vs ring rule >= 0.80", acc >= 0.8, f"accuracy={acc:.4f}"))
        ann, rest = rates[design.labels > 0].mean(), rates[design.labels < 0].mean()
        checks.append(("annulus points misclassified more often", ann > rest,
                       f"annulus={ann:.4f} other={rest:.4f}"))
        b0 = float(fit["map"].beta[0])
        checks.append(("fitted constant mean negative", b0 < 0, f"beta0={b0:.4f}"))
    elif name == "kndy_stand_in":
        acc = float(correct.mean())
        checks.append(("grid accuracy vs surrogate rule (informational)", True, f"accuracy={acc:.4f}"))
    return checks


def cmd_demo(cfg: RunConfig) -> dict:
    name = cfg.demo
    fit = cmd_fit(cfg)
    pr = cmd_predict(cfg)
    va = cmd_validate(cfg)
    problem = DEMOS[name](cfg.seed)[0]
    checks = _demo_checks(name, problem, fit["design"], fit, pr["predictions"], pr["boundary"], va["report"])
    theta = fit["map"]
    lines = [
        f"demo: {name}",
        f"problem: {problem.description}",
        f"points: {fit['design'].n} (region 1: {int((fit['design'].labels < 0).sum())}, "
        f"region 2: {int((fit['design'].labels > 0).sum())})",
        f"MAP: beta={[round(float(b), 6) for b in theta.beta]} sigma2={theta.sigma2:.6g} "
        f"delta={theta.delta:.6g}",
        f"acceptance rate: {fit['chain'].acceptance_rate:.4f}",
        "",
        "checks:",
    ]
    for label, ok, detail in checks:
        lines.append(f"  [{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    lines += ["", "resolved config:", cfg.dumps(include_out=False)]
    text = "\n".join(lines)
    (Path(cfg.out) / "report.txt").write_text(text)
    print(text)
    return {"fit": fit, "predict": pr, "validate": va, "checks": checks}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--data", help="dataset CSV with columns x1..xd,region")
    common.add_argument("--demo", help=f"built-in problem: {', '.join(DEMOS)}")
    common.add_argument("--basis", choices=["constant", "linear"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--grid-res", dest="grid_res", type=int)
    common.add_argument("--ensemble", type=int)
    common.add_argument("--out")
    common.add_argument("--iterations", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--thin", type=int)
    common.add_argument("--resamples", dest="loo_resamples", type=int)
    common.add_argument("--transform-at", dest="transform_at")

    p = argparse.ArgumentParser(prog="latentclass", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("fit", "predict", "validate"):
        sub.add_parser(name, parents=[common])
    d = sub.add_parser("demo", parents=[common])
    d.add_argument("name", nargs="?", help="demo name")
    sub.add_parser("print-config", parents=[common])
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.loads(Path(args.config).read_text()) if args.config else RunConfig()
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            setattr(cfg, f.name, v)
    if args.command == "demo" and getattr(args, "name", None):
        cfg.demo = args.name
    return cfg


def _setup_logging(out: str):
    Path(out).mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(Path(out) / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("latentclass")
    root.handlers[:] = [handler]
    root.setLevel(logging.INFO)
    return handler


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = None
    try:
        cfg = config_from_args(args)
        if args.command == "print-config":
            print(cfg.dumps(), end="")
            return EXIT_OK
        cfg.validate()
        cfg = resolve(cfg)
        handler = _setup_logging(cfg.out)
        t0 = time.time()
        {"fit": cmd_fit, "predict": cmd_predict, "validate": cmd_validate, "demo": cmd_demo}[args.command](cfg)
        log.info("%s finished in %.1f s", args.command, time.time() - t0)
        return EXIT_OK
    except (UsageError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, DegenerateSampleError, BoundaryError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        if handler is not None:
            handler.close()
            logging.getLogger("latentclass").removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
