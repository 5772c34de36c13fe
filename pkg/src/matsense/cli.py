"""Command-line front end: experiment configuration and orchestration.

Subcommands::

    matsense generate --spec spec.json [--out DIR] [--seed N]
    matsense run      --spec spec.json [--out DIR] [--seed N]
    matsense plot     --csv a.csv b.csv --svg out.svg
    matsense verify   --spec spec.json [--out DIR] [--seed N]

``--spec`` may be omitted, in which case the built-in desk-scale experiment
is used (``--paper-scale`` switches the built-in to the full-size protocol).
The output directory is resolved as ``--out`` > ``MATSENSE_OUT`` env var >
the spec's ``output_dir``.  Exit codes: 0 success, 1 usage or config error,
2 numerical failure, 3 verification failure.
"""

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import figures, linalg, metrics, regularizers, solvers
from .errors import NumericalError
from .measurements import (
    ENSEMBLES,
    MeasurementSet,
    estimate_rip,
    gen_ground_truth,
    gen_measurements,
    load_measurements,
    rip_relax_check,
    save_measurements,
)
from .network import DeepNet, end_to_end, reg_R, save_net, trace_hessian
from .solvers import TrainConfig

RUN_MODES = ("vanilla", "label_noise")

RIP_MARGIN = 0.05


@dataclass
class ExperimentSpec:
    depth: int
    dims: List[int]
    n: int
    rank: int
    ensemble: str
    seed: int
    output_dir: str
    train: Dict[str, TrainConfig]
    baselines: Dict[str, bool] = field(
        default_factory=lambda: {"nuclear": True, "frobenius": True}
    )
    rip: Dict = field(default_factory=lambda: {"ranks": [1, 2], "probes": 200})

    def __post_init__(self):
        if self.depth != len(self.dims) - 1:
            raise ValueError(
                f"depth {self.depth} inconsistent with dims of length {len(self.dims)}"
            )
        if self.depth < 2:
            raise ValueError("depth must be at least 2")
        floor = min(self.dims[0], self.dims[-1])
        if any(d < floor for d in self.dims[1:-1]):
            raise ValueError("intermediate widths must be at least min(d0, dL)")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if self.rank < 1 or self.rank > min(self.dims[0], self.dims[-1]):
            raise ValueError(f"rank {self.rank} out of range")
        if self.n < 1:
            raise ValueError("n must be positive")
        unknown = set(self.train) - set(RUN_MODES)
        if unknown:
            raise ValueError(f"unknown training modes {sorted(unknown)}")
        unknown = set(self.baselines) - {"nuclear", "frobenius"}
        if unknown:
            raise ValueError(f"unknown baseline flags {sorted(unknown)}")
        unknown = set(self.rip) - {"ranks", "probes"}
        if unknown:
            raise ValueError(f"unknown rip keys {sorted(unknown)}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = {mode: asdict(cfg) for mode, cfg in self.train.items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        known = {
            "depth", "dims", "n", "rank", "ensemble", "seed",
            "output_dir", "train", "baselines", "rip",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown spec keys {sorted(unknown)}")
        missing = {"depth", "dims", "n", "rank", "ensemble", "seed",
                   "output_dir", "train"} - set(data)
        if missing:
            raise ValueError(f"missing spec keys {sorted(missing)}")
        train = {}
        for mode, cfg in data["train"].items():
            if not isinstance(cfg, dict):
                raise ValueError(f"train.{mode} must be an object")
            unknown = set(cfg) - {f.name for f in
                                  TrainConfig.__dataclass_fields__.values()}
            if unknown:
                raise ValueError(f"unknown train.{mode} keys {sorted(unknown)}")
            train[mode] = TrainConfig(**cfg)
        kwargs = dict(data)
        kwargs["train"] = train
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        return cls.from_dict(json.loads(text))


def default_spec(paper_scale=False, output_dir="out") -> ExperimentSpec:
    """Built-in experiment: desk scale by default, full protocol on request.

    Desk scale (d=20, n=120, r=2, L=3) runs in minutes and still shows the
    nuclear-norm convergence of label-noise SGD; the full-size protocol uses
    d=60, n=600, r=3.  Step count and init scale are empirically calibrated,
    not part of the published protocol.
    """
    d = 60 if paper_scale else 20
    n = 600 if paper_scale else 120
    rank = 3 if paper_scale else 2
    steps = 200_000
    common = dict(steps=steps, batch=50, lr=0.01, init_std=0.3, log_every=500)
    return ExperimentSpec(
        depth=3,
        dims=[d, d, d, d],
        n=n,
        rank=rank,
        ensemble="gaussian",
        seed=0,
        output_dir=output_dir,
        train={
            "vanilla": TrainConfig(noise_std=0.0, seed=1, **common),
            "label_noise": TrainConfig(noise_std=1.0, seed=2, **common),
        },
    )


def _measurement_path(out_dir: Path) -> Path:
    return out_dir / "measurements.bin"


def build_measurements(spec: ExperimentSpec) -> MeasurementSet:
    truth = gen_ground_truth(spec.dims[0], spec.rank, seed=spec.seed)
    if spec.dims[-1] != spec.dims[0]:
        raise ValueError("ground-truth generation assumes square end-to-end shape")
    return gen_measurements(
        spec.ensemble, spec.n, spec.dims[0], spec.dims[-1], truth, seed=spec.seed + 1
    )


def cmd_generate(spec: ExperimentSpec, out_dir: Path) -> dict:
    """Write the measurement container and print a short summary."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ms = build_measurements(spec)
    path = _measurement_path(out_dir)
    save_measurements(ms, path)
    summary = {
        "path": str(path),
        "dims": spec.dims,
        "n": ms.n,
        "ensemble": ms.ensemble,
        "truth_nuclear_norm": linalg.nuclear_norm(ms.ground_truth),
        "truth_frobenius_norm": linalg.frobenius_norm(ms.ground_truth),
    }
    print(
        f"wrote {path}: n={ms.n} {ms.ensemble} measurements of "
        f"{ms.d_out}x{ms.d_in}; ||M*||_* = {summary['truth_nuclear_norm']:.4f}, "
        f"||M*||_F = {summary['truth_frobenius_norm']:.4f}"
    )
    return summary


def cmd_run(spec: ExperimentSpec, out_dir: Path) -> dict:
    """Train both modes, compute baselines and RIP estimates, write artifacts.

    Produces one CSV per training mode, a checkpoint of each final net, and
    ``run.json`` with the config echo, RIP estimates, baseline values, and
    the evaluation report of the label-noise solution.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    ms_path = _measurement_path(out_dir)
    if ms_path.exists():
        ms = load_measurements(ms_path)
    else:
        ms = build_measurements(spec)
        save_measurements(ms, ms_path)

    sidecar = {"spec": spec.to_dict(), "rip": {}, "baselines": {}, "modes": {}}

    rip_estimates = {}
    for rank in spec.rip.get("ranks", []):
        est = estimate_rip(ms, rank, spec.rip.get("probes", 200), seed=spec.seed + 2)
        rip_estimates[rank] = est
        sidecar["rip"][str(rank)] = asdict(est)

    nuclear_baseline = None
    if spec.baselines.get("nuclear", False):
        m_nuc = solvers.solve_min_nuclear(ms)
        nuclear_baseline = linalg.nuclear_norm(m_nuc)
        sidecar["baselines"]["nuclear_objective"] = nuclear_baseline
        if ms.ground_truth is not None:
            sidecar["baselines"]["nuclear_pop_loss"] = metrics.population_loss(
                m_nuc, ms.ground_truth
            )
    if spec.baselines.get("frobenius", False):
        m_frob = solvers.solve_min_frobenius(ms)
        sidecar["baselines"]["frobenius_nuclear_norm"] = linalg.nuclear_norm(m_frob)
        if ms.ground_truth is not None:
            sidecar["baselines"]["frobenius_pop_loss"] = metrics.population_loss(
                m_frob, ms.ground_truth
            )

    logs = {}
    for mode in RUN_MODES:
        if mode not in spec.train:
            continue
        cfg = spec.train[mode]
        net0 = solvers.init_net(spec.dims, cfg.init_std, seed=cfg.seed)
        log = solvers.train(net0, ms, cfg, mode)
        logs[mode] = log
        csv_path = out_dir / f"{mode}.csv"
        log.write_csv(csv_path)
        save_net(log.final_net, out_dir / f"net_{mode}.bin")
        final = log.records[-1]
        sidecar["modes"][mode] = {
            "csv": str(csv_path),
            "final_step": final.step,
            "final_train_loss": final.train_loss,
            "final_test_loss": final.test_loss,
            "final_nuclear_norm": final.nuclear_norm,
            "final_paper_trace": final.paper_trace,
        }
        print(
            f"{mode}: step {final.step} train {final.train_loss:.3e} "
            f"test {final.test_loss:.3e} nuclear {final.nuclear_norm:.4f} "
            f"trace {final.paper_trace:.4f}"
        )

    if "label_noise" in logs and ms.ground_truth is not None:
        e_final = end_to_end(logs["label_noise"].final_net)
        pop = metrics.population_loss(e_final, ms.ground_truth)
        delta2 = rip_estimates.get(2)
        bound = math.nan
        notes = "no rank-2 isometry estimate requested"
        if delta2 is not None and delta2.delta_hat + RIP_MARGIN < 1.0:
            bound = metrics.recovery_bound(
                delta2.delta_hat + RIP_MARGIN, ms.ground_truth
            )
            notes = (
                f"bound uses empirical rank-2 isometry estimate "
                f"{delta2.delta_hat:.4f} + margin {RIP_MARGIN}"
            )
        elif delta2 is not None:
            notes = (
                f"rank-2 isometry estimate {delta2.delta_hat:.4f} + margin "
                f"exceeds 1; bound undefined at this sample size"
            )
        report = metrics.EvalReport(
            pop_loss=pop,
            recovery_bound=bound,
            nuclear_ratio=metrics.nuclear_ratio(e_final, nuclear_baseline),
            notes=notes,
        )
        sidecar["eval"] = report.to_dict()

    with open(out_dir / "run.json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    return sidecar


def cmd_plot(csv_paths, svg_path) -> Path:
    """Render RunLog CSVs into one four-panel SVG."""
    runs = {}
    for path in csv_paths:
        records = solvers.read_run_csv(path)
        runs[Path(path).stem] = records
    svg = figures.render_runs(runs)
    svg_path = Path(svg_path)
    svg_path.parent.mkdir(parents=True, exist_ok=True)
    svg_path.write_text(svg)
    return svg_path


def _check(name, passed, **details) -> dict:
    entry = {"name": name, "passed": bool(passed)}
    entry.update(details)
    return entry


def cmd_verify(spec: ExperimentSpec, out_dir: Path) -> dict:
    """Desk-scale checks of the theory: each check runs on its canonical
    problem size, seeded from the spec, and the report is written to
    ``verify.json``.  Returns the report; overall failure is flagged there.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed + 100)
    checks = []

    # Parseval ensemble: orthonormal basis scaled by sqrt(d0*dL) is an exact
    # isometry, so the relaxed-isometry gap must vanish.
    d0 = dl = 6
    basis = np.sqrt(d0 * dl) * np.eye(d0 * dl).reshape(d0 * dl, dl, d0)
    truth = gen_ground_truth(d0, 2, seed=spec.seed)
    labels = np.einsum("nij,ij->n", basis, truth)
    ms_basis = MeasurementSet(basis, labels, truth, "gaussian", spec.seed)
    m_test = rng.standard_normal((dl, d0))
    res = rip_relax_check(ms_basis, m_test, 0.0)
    checks.append(
        _check(
            "riprelax_orthonormal_basis",
            res["lhs"] <= 1e-9 * float(np.sum(m_test**2)),
            lhs=res["lhs"],
            tolerance=1e-9 * float(np.sum(m_test**2)),
        )
    )

    # Sandwich and relaxed-isometry checks at the canonical well-conditioned
    # size n = 50 (d0 + dL), d0 = dL = 10.
    d = 10
    n_rip = 50 * (d + d)
    truth = gen_ground_truth(d, 3, seed=spec.seed)
    ms_rip = gen_measurements(spec.ensemble, n_rip, d, d, truth, seed=spec.seed + 1)
    delta1 = estimate_rip(ms_rip, 1, 200, seed=spec.seed + 2).delta_hat + RIP_MARGIN
    delta2 = estimate_rip(ms_rip, 2, 200, seed=spec.seed + 3).delta_hat + RIP_MARGIN

    fails = 0
    trials = 100
    for _ in range(trials):
        net = solvers.init_net([d, d, d], 0.5, seed=int(rng.integers(2**31)))
        tr = trace_hessian(net, ms_rip).paper_trace
        r = reg_R(net)
        if not (1 - delta1) * r <= tr <= (1 + delta1) * r:
            fails += 1
    checks.append(
        _check(
            "rip_sandwich",
            fails <= 1,
            failures=fails,
            trials=trials,
            delta=delta1,
        )
    )

    fails = 0
    for _ in range(trials):
        left = rng.standard_normal((d, 3))
        right = rng.standard_normal((3, d))
        if not rip_relax_check(ms_rip, left @ right, delta2)["ok"]:
            fails += 1
    checks.append(
        _check(
            "rip_relax",
            fails <= 1,
            failures=fails,
            trials=trials,
            delta=delta2,
        )
    )

    # Recovery bound for the convex stand-in of the minimum-sharpness
    # interpolant.  Needs an underdetermined system (n < d0*dL) so the
    # nuclear baseline's Gram matrix is positive definite.
    n_rec = 4 * (d + d)
    truth_rec = gen_ground_truth(d, 1, seed=spec.seed + 6)
    ms_rec = gen_measurements(
        spec.ensemble, n_rec, d, d, truth_rec, seed=spec.seed + 7
    )
    delta_rec = estimate_rip(ms_rec, 2, 200, seed=spec.seed + 8).delta_hat + RIP_MARGIN
    if delta_rec < 1.0:
        m_nuc = solvers.solve_min_nuclear(ms_rec, tol=1e-7)
        pop = metrics.population_loss(m_nuc, truth_rec)
        bound = metrics.recovery_bound(delta_rec, truth_rec)
        checks.append(
            _check("recovery_bound", pop <= bound, pop_loss=pop,
                   bound=bound, delta=delta_rec)
        )
    else:
        checks.append(
            _check("recovery_bound", False, delta=delta_rec,
                   reason="isometry estimate too large for a finite bound")
        )

    # Monte-Carlo check of the expected error of the least-squares interpolant.
    d0 = dl = 8
    n_lb = 32
    trials_lb = 200
    truth_lb = gen_ground_truth(d0, 2, seed=spec.seed + 4)
    expected = metrics.frobenius_lowerbound_expect(n_lb, d0, dl, truth_lb)
    total = 0.0
    for t in range(trials_lb):
        ms_lb = gen_measurements(
            "gaussian", n_lb, d0, dl, truth_lb, seed=spec.seed + 1000 + t
        )
        total += metrics.population_loss(solvers.solve_min_frobenius(ms_lb), truth_lb)
    measured = total / trials_lb
    rel = abs(measured - expected) / expected
    checks.append(
        _check(
            "frobenius_lower_bound_mc",
            rel <= 0.05,
            measured=measured,
            expected=expected,
            rel_error=rel,
        )
    )

    # Closed-form cross-checks at the spec's own dimensions.
    target = rng.standard_normal((spec.dims[-1], spec.dims[0]))
    fact = regularizers.factorize_min_R(target, spec.depth, spec.dims, seed=spec.seed)
    rel = abs(fact.achieved_value - fact.formula_value) / max(1.0, fact.formula_value)
    checks.append(
        _check(
            "closed_form_surrogate",
            rel <= 1e-8,
            achieved=fact.achieved_value,
            formula=fact.formula_value,
            rel_error=rel,
        )
    )

    d2_dims = (spec.dims[0], max(spec.dims[0], spec.dims[-1]), spec.dims[-1])
    truth_d2 = gen_ground_truth(spec.dims[0], min(2, spec.dims[0]), seed=spec.seed)
    ms_d2 = gen_measurements(
        spec.ensemble, 4 * (spec.dims[0] + spec.dims[-1]),
        spec.dims[0], spec.dims[-1], truth_d2, seed=spec.seed + 5,
    )
    fact2 = regularizers.factorize_min_trace_depth2(target, ms_d2, d2_dims)
    rel = abs(fact2.achieved_value - fact2.formula_value) / max(1.0, fact2.formula_value)
    checks.append(
        _check(
            "closed_form_depth2",
            rel <= 1e-8,
            achieved=fact2.achieved_value,
            formula=fact2.formula_value,
            rel_error=rel,
        )
    )

    passed = all(c["passed"] for c in checks)
    report = {"passed": passed, "checks": checks}
    with open(out_dir / "verify.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}")
    return report


def _load_spec(args) -> ExperimentSpec:
    if args.spec is not None:
        spec = ExperimentSpec.from_json(Path(args.spec).read_text())
        if args.paper_scale:
            raise ValueError("--paper-scale only applies to the built-in spec")
    else:
        spec = default_spec(paper_scale=args.paper_scale)
    if args.seed is not None:
        spec.seed = args.seed
    return spec


def _out_dir(args, spec) -> Path:
    if args.out is not None:
        return Path(args.out)
    env = os.environ.get("MATSENSE_OUT")
    if env:
        return Path(env)
    return Path(spec.output_dir)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="matsense", description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "run", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--spec", help="experiment spec JSON (default: built-in)")
        p.add_argument("--out", help="output directory (overrides spec)")
        p.add_argument("--seed", type=int, help="override the spec seed")
        p.add_argument("--paper-scale", action="store_true",
                       help="use the full-size built-in experiment")
    p = sub.add_parser("plot")
    p.add_argument("--csv", nargs="+", required=True, help="RunLog CSV paths")
    p.add_argument("--svg", required=True, help="output SVG path")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            path = cmd_plot(args.csv, args.svg)
            print(f"wrote {path}")
            return 0
        spec = _load_spec(args)
        out_dir = _out_dir(args, spec)
        if args.command == "generate":
            cmd_generate(spec, out_dir)
            return 0
        if args.command == "run":
            cmd_run(spec, out_dir)
            return 0
        report = cmd_verify(spec, out_dir)
        return 0 if report["passed"] else 3
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
