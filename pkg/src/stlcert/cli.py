"""Command-line front end: certify, validate, simulate.

Configuration comes from an optional TOML file with flag overrides; every
output embeds the effective configuration so a run can be reproduced exactly.
Exit codes: 0 certified/validated, 1 usage or configuration error,
2 infeasible certificate, 3 falsified at the tested bound.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import svg
from .certifier import CertifierError, ClassKappaInf, certify
from .dynamics import (
    Box,
    DisturbanceSignal,
    estimate_lipschitz,
    integrate,
    sample_disturbance,
)
from .models import (
    ModelBundle,
    get_model,
    linear_model,
    make_affine_predicate,
    make_ball_predicate,
    make_quadratic_predicate,
)
from .spec_lang import (
    SpecParseError,
    Until,
    decompose,
    horizon,
    parse_spec,
    robustness,
)
from .validation import adversarial_integrate, run_trials

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_FALSIFIED = 3


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "single-integrator"
    spec_text: Optional[str] = None
    out_dir: str = "out"
    dt: Optional[float] = None
    seed: int = 0
    # certifier
    alpha_overrides: dict[str, str] = field(default_factory=dict)
    grid: Optional[tuple[int, ...]] = None
    init_grid: Optional[tuple[int, ...]] = None
    l_f: Optional[float] = None
    l_rho: Optional[float] = None
    refine: Optional[bool] = None
    lipschitz_pairs: int = 2000
    # validation
    trials: int = 1000
    delta: Optional[float] = None
    distribution: str = "uniform-ball"
    constant_per_run: bool = False
    certificate: Optional[str] = None
    # simulate
    adversarial: bool = False
    sim_T: Optional[float] = None
    # external linear model
    linear: Optional[dict] = None

    def echo(self) -> dict:
        return {
            "model": self.model,
            "spec": self.spec_text,
            "out": self.out_dir,
            "dt": self.dt,
            "seed": self.seed,
            "alpha_overrides": dict(sorted(self.alpha_overrides.items())),
            "grid": list(self.grid) if self.grid else None,
            "init_grid": list(self.init_grid) if self.init_grid else None,
            "l_f": self.l_f,
            "l_rho": self.l_rho,
            "refine": self.refine,
            "trials": self.trials,
            "delta": self.delta,
            "distribution": self.distribution,
            "constant_per_run": self.constant_per_run,
            "adversarial": self.adversarial,
        }


def _parse_counts(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    run = doc.get("run", {})
    cfg.model = run.get("model", cfg.model)
    cfg.spec_text = run.get("spec", cfg.spec_text)
    cfg.out_dir = run.get("out", cfg.out_dir)
    cert = doc.get("certifier", {})
    cfg.dt = cert.get("dt", cfg.dt)
    cfg.l_f = cert.get("l_f", cfg.l_f)
    cfg.l_rho = cert.get("l_rho", cfg.l_rho)
    if "points_per_axis" in cert:
        v = cert["points_per_axis"]
        cfg.grid = tuple(v) if isinstance(v, list) else (int(v),)
    if "init_points_per_axis" in cert:
        v = cert["init_points_per_axis"]
        cfg.init_grid = tuple(v) if isinstance(v, list) else (int(v),)
    cfg.refine = cert.get("refine", cfg.refine)
    cfg.alpha_overrides.update(
        {k: str(v) for k, v in cert.get("alpha", {}).items()}
    )
    val = doc.get("validation", {})
    cfg.trials = val.get("trials", cfg.trials)
    cfg.seed = val.get("seed", cfg.seed)
    cfg.delta = val.get("delta", cfg.delta)
    cfg.distribution = val.get("distribution", cfg.distribution)
    cfg.constant_per_run = val.get("constant_per_run", cfg.constant_per_run)
    cfg.linear = doc.get("model", {}).get("linear", cfg.linear)
    return cfg


def _build_linear_bundle(cfg: RunConfig) -> ModelBundle:
    spec_l = cfg.linear or {}
    if "a" not in spec_l or "domain" not in spec_l:
        raise ConfigError("linear model needs 'a' matrix and 'domain' in [model.linear]")
    dom = np.asarray(spec_l["domain"], dtype=float)
    domain = Box(dom[:, 0], dom[:, 1])
    preds = {}
    for p in spec_l.get("predicates", []):
        kind, name = p.get("kind"), p.get("name")
        if kind == "ball":
            preds[name] = make_ball_predicate(name, p["center"], float(p["radius"]))
        elif kind == "affine":
            preds[name] = make_affine_predicate(name, p["a"], float(p["b"]))
        elif kind == "quadratic":
            preds[name] = make_quadratic_predicate(name, p["p"], p["q"], float(p["c"]))
        else:
            raise ConfigError(f"unknown predicate kind {kind!r}")
    spec_text = spec_l.get("spec") or cfg.spec_text
    if spec_text is None:
        raise ConfigError("linear model needs a specification")
    x0 = np.asarray(spec_l.get("x0", np.zeros(domain.dim)), dtype=float)
    return linear_model(spec_l["a"], domain, preds, spec_text, x0)


def resolve_bundle(cfg: RunConfig) -> ModelBundle:
    bundle = _build_linear_bundle(cfg) if cfg.model == "linear" else get_model(cfg.model)
    config = bundle.config
    if cfg.dt is not None:
        config.dt = cfg.dt
    if cfg.l_f is not None:
        config.l_f = cfg.l_f
    if cfg.l_rho is not None:
        config.l_rho = cfg.l_rho
    if cfg.grid is not None:
        config.points_per_axis = cfg.grid if len(cfg.grid) > 1 else cfg.grid[0]
    if cfg.init_grid is not None:
        config.init_points_per_axis = (
            cfg.init_grid if len(cfg.init_grid) > 1 else cfg.init_grid[0]
        )
    if cfg.refine is not None:
        config.refine = cfg.refine
    for name, text in cfg.alpha_overrides.items():
        base = name[1:] if name.startswith("!") else name
        if base not in bundle.registry:
            raise ConfigError(f"alpha override references unknown predicate {name!r}")
        config.alpha_map[name] = ClassKappaInf.parse(text)
    return bundle


def _out_path(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, content: str):
    path.write_text(content)
    print(f"wrote {path}")


def _with_meta(svg_text: str, cfg: RunConfig) -> str:
    # embed the effective configuration; deterministic across reruns
    meta = json.dumps(cfg.echo(), sort_keys=True)
    return f"<!-- config: {meta} -->\n{svg_text}"


def cmd_certify(cfg: RunConfig) -> int:
    bundle = resolve_bundle(cfg)
    spec_text = cfg.spec_text or bundle.spec_text
    spec = parse_spec(spec_text, bundle.registry)
    report = certify(spec, bundle.system, bundle.config, bundle.init_region)
    try:
        l_hat = estimate_lipschitz(
            bundle.system, bundle.system.domain, num_pairs=cfg.lipschitz_pairs, seed=cfg.seed
        )
    except ValueError:
        l_hat = None  # degenerate domain; nothing to sample
    doc = report.to_json_dict()
    doc["config"].update({"model": cfg.model, "spec": spec_text, "seed": cfg.seed})
    warnings = list(report.diagnostics.get("warnings", []))
    warnings.extend(bundle.notes)
    if l_hat is not None:
        doc["lipschitz_estimate"] = l_hat
        if l_hat > bundle.config.l_f:
            warnings.append(
                f"sampled Lipschitz estimate {l_hat:.3g} (sampling-based, not a "
                f"certificate) exceeds the declared l_f={bundle.config.l_f:g}; "
                "the deviation-route bound rests on the declared value"
            )
    doc["warnings"] = warnings
    out = _out_path(cfg)
    _write(out / "certificate.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")

    print(f"model: {cfg.model}    spec: {spec_text}")
    print(f"{'subspecification':<28} {'method':<10} {'bound':>14} {'binding':>10}")
    for r in report.per_subspec:
        print(
            f"{r.subspec:<28} {r.method:<10} {r.bound:>14.6g} "
            f"{(r.binding_predicate or '-'):>10}"
        )
    print(f"composite bound delta_T = {report.delta_T:.6g}   region: {report.region}")
    for w in warnings:
        print(f"warning: {w}")
    print(f"runtime: {report.diagnostics['runtime_s']:.2f}s")
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def _load_certificate_delta(cfg: RunConfig) -> Optional[float]:
    path = Path(cfg.certificate) if cfg.certificate else _out_path(cfg) / "certificate.json"
    if not path.exists():
        return None
    doc = json.loads(path.read_text())
    if not doc.get("feasible", False):
        raise ConfigError(f"certificate at {path} is infeasible; pass an explicit delta")
    return float(doc["delta_T"])


def cmd_validate(cfg: RunConfig) -> int:
    if cfg.trials < 1:
        raise ConfigError("trials must be at least 1")
    bundle = resolve_bundle(cfg)
    spec_text = cfg.spec_text or bundle.spec_text
    spec = parse_spec(spec_text, bundle.registry)
    delta = cfg.delta if cfg.delta is not None else _load_certificate_delta(cfg)
    if delta is None:
        raise ConfigError("no certificate found and no --delta override given")
    dt = cfg.dt if cfg.dt is not None else bundle.config.dt
    stats = run_trials(
        bundle.system,
        spec,
        bundle.x0,
        delta,
        cfg.trials,
        distribution=cfg.distribution,
        dt=dt,
        seed=cfg.seed,
        constant_per_run=cfg.constant_per_run,
    )
    out = _out_path(cfg)
    _write(out / "trials.csv", stats.to_csv())
    summary = {"config": {**cfg.echo(), "delta_used": delta}, **stats.summary_dict()}
    _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _write(
        out / "robustness_hist.svg",
        _with_meta(
            svg.histogram_svg(
                stats.robustness_values,
                title=f"robustness over {stats.num_trials} trials, delta={delta:.6g}",
            ),
            cfg,
        ),
    )
    # Fig-style trace for a flagged trial: the first violating one, else the
    # worst-robustness one.  Rebuilt exactly as run_trials built it.
    flagged = next(
        (i for i, r in enumerate(stats.robustness_values) if r < 0),
        int(np.argmin(stats.robustness_values)),
    )
    dist = sample_disturbance(
        bundle.system.n, delta, horizon(spec), dt, cfg.distribution, seed=cfg.seed + flagged
    )
    if cfg.constant_per_run:
        dist = DisturbanceSignal(
            dt=dt, samples=np.tile(dist.samples[0], (dist.num_steps, 1)), bound=delta
        )
    traj = integrate(bundle.system, bundle.x0, horizon(spec), dt, dist)
    _write(out / "trajectory.csv", traj.to_csv())
    _write(
        out / "trajectory.svg",
        _with_meta(
            svg.states_vs_time_svg(
                traj.times,
                traj.states,
                title=f"trial {flagged} (rho={stats.robustness_values[flagged]:.4g})",
            ),
            cfg,
        ),
    )
    print(
        f"trials={stats.num_trials} violations={stats.num_violations} "
        f"min_rho={stats.min_robustness:.6g} fairness={stats.fairness_violations} "
        f"near_boundary={stats.near_boundary}"
    )
    return EXIT_OK if stats.num_violations == 0 else EXIT_FALSIFIED


def cmd_simulate(cfg: RunConfig) -> int:
    bundle = resolve_bundle(cfg)
    spec_text = cfg.spec_text or bundle.spec_text
    spec = parse_spec(spec_text, bundle.registry)
    T = horizon(spec)
    if cfg.sim_T is not None:
        if cfg.sim_T < T:
            raise ConfigError(
                f"simulation horizon {cfg.sim_T:g} is shorter than the specification "
                f"window {T:g}"
            )
        T = cfg.sim_T
    dt = cfg.dt if cfg.dt is not None else bundle.config.dt
    delta = cfg.delta if cfg.delta is not None else 0.0
    nominal = integrate(bundle.system, bundle.x0, T, dt)
    leaf = decompose(spec)[0]
    clause = leaf.right if isinstance(leaf, Until) else leaf.clause
    if cfg.adversarial and delta > 0:
        disturbed = adversarial_integrate(
            bundle.system,
            clause,
            delta,
            bundle.x0,
            T,
            dt,
            bundle.config.alpha_map,
            require_feasible_start=False,
        ).trajectory
    else:
        dist = sample_disturbance(bundle.system.n, delta, T, dt, cfg.distribution, seed=cfg.seed)
        disturbed = integrate(bundle.system, bundle.x0, T, dt, dist)
    rho_nom = robustness(spec, nominal, 0.0)
    rho_dist = robustness(spec, disturbed, 0.0) if disturbed.covers(T) else float("-inf")
    out = _out_path(cfg)
    _write(out / "nominal.csv", nominal.to_csv())
    _write(out / "disturbed.csv", disturbed.to_csv())
    if bundle.system.n == 2:
        overlay = svg.trajectory_overlay_svg(
            [
                ("nominal", nominal.states[:, 0], nominal.states[:, 1]),
                ("disturbed", disturbed.states[:, 0], disturbed.states[:, 1]),
            ],
            circles=bundle.plot_circles,
            title=f"{cfg.model}: nominal vs disturbed (delta={delta:g})",
        )
    else:
        both = np.hstack([nominal.states, disturbed.states[: len(nominal.states)]])
        labels = [f"x{i + 1}" for i in range(bundle.system.n)] + [
            f"x{i + 1}'" for i in range(bundle.system.n)
        ]
        overlay = svg.states_vs_time_svg(
            nominal.times, both, title=f"{cfg.model} (delta={delta:g})", state_labels=labels
        )
    _write(out / "overlay.svg", _with_meta(overlay, cfg))
    print(f"rho nominal   = {rho_nom:.6g}")
    print(f"rho disturbed = {rho_dist:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stlcert")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML configuration file")
        p.add_argument("--model", help="bundled model name or 'linear'")
        p.add_argument("--spec", help="specification text override")
        p.add_argument("--out", help="output directory")
        p.add_argument("--dt", type=float, help="integration step")
        p.add_argument("--seed", type=int, help="base random seed")

    p = sub.add_parser("certify", help="compute the disturbance-bound certificate")
    common(p)
    p.add_argument("--alpha", action="append", default=[], metavar="NAME=FAMILY:GAIN")
    p.add_argument("--grid", help="comma-separated points per axis")
    p.add_argument("--init-grid", help="comma-separated initial-region points per axis")
    p.add_argument("--l-f", type=float, dest="l_f")
    p.add_argument("--l-rho", type=float, dest="l_rho")
    p.add_argument("--no-refine", action="store_true")
    p.add_argument("--lipschitz-pairs", type=int, default=2000)

    p = sub.add_parser("validate", help="randomized trials against a bound")
    common(p)
    p.add_argument("--delta", type=float, help="bound override")
    p.add_argument("--trials", type=int)
    p.add_argument("--distribution", choices=["uniform-ball", "truncated-gaussian", "fixed-magnitude"])
    p.add_argument("--constant-per-run", action="store_true")
    p.add_argument("--certificate", help="path to certificate.json")

    p = sub.add_parser("simulate", help="one nominal and one disturbed run")
    common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--adversarial", action="store_true")
    p.add_argument("--distribution", choices=["uniform-ball", "truncated-gaussian", "fixed-magnitude"])
    p.add_argument("--T", type=float, dest="sim_T", help="simulation horizon")
    return parser


def _merge_args(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.model:
        cfg.model = args.model
    if args.spec:
        cfg.spec_text = args.spec
    if args.out:
        cfg.out_dir = args.out
    if args.dt is not None:
        cfg.dt = args.dt
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "delta", None) is not None:
        cfg.delta = args.delta
    if getattr(args, "trials", None) is not None:
        cfg.trials = args.trials
    if getattr(args, "distribution", None):
        cfg.distribution = args.distribution
    if getattr(args, "constant_per_run", False):
        cfg.constant_per_run = True
    if getattr(args, "certificate", None):
        cfg.certificate = args.certificate
    if getattr(args, "adversarial", False):
        cfg.adversarial = True
    if getattr(args, "sim_T", None) is not None:
        cfg.sim_T = args.sim_T
    if getattr(args, "l_f", None) is not None:
        cfg.l_f = args.l_f
    if getattr(args, "l_rho", None) is not None:
        cfg.l_rho = args.l_rho
    if getattr(args, "grid", None):
        cfg.grid = _parse_counts(args.grid)
    if getattr(args, "init_grid", None):
        cfg.init_grid = _parse_counts(args.init_grid)
    if getattr(args, "no_refine", False):
        cfg.refine = False
    if getattr(args, "lipschitz_pairs", None) is not None:
        cfg.lipschitz_pairs = args.lipschitz_pairs
    for item in getattr(args, "alpha", []):
        name, _, value = item.partition("=")
        if not value:
            raise ConfigError(f"bad --alpha {item!r}; expected NAME=FAMILY:GAIN")
        cfg.alpha_overrides[name.strip()] = value.strip()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_args(load_config(args.config), args)
        if args.command == "certify":
            return cmd_certify(cfg)
        if args.command == "validate":
            return cmd_validate(cfg)
        return cmd_simulate(cfg)
    except (ConfigError, SpecParseError, CertifierError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
