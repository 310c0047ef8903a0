"""Batch front end: construct, diagnose, regularize, certify.

Every command reads the packaged defaults, overlays an optional config
file, then applies command-line flags, and is deterministic given those
inputs.  Outputs are plain CSV series and JSON summaries; no plotting.
"""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .arm2dof import Arm2DOF, ArmParams, ControlBounds
from .errors import (EXIT_CODES, EXIT_OK, EXIT_PARTIAL_REGULARIZATION,
                     EXIT_VIOLATIONS_REMAIN, MissingCostates, SingArcError,
                     exit_code_for)
from .integrate import (IntegratorConfig, hamiltonian_trace,
                        integrate_extremal, resimulate, save_trajectory)
from .liegeom import alpha_coefficients, b_set_certificate, frame_rank
from .pmp import costate_on_surface, in_Rk
from .regularize import (LABEL_VIOLATION, Tolerances, detect_singular_arcs,
                         ingest, pmp_audit, regularize_u1, switching_series)


@dataclass(frozen=True)
class RunConfig:
    """Validated bundle of everything a command needs."""

    params: ArmParams
    bounds: ControlBounds
    x0: tuple[float, float, float, float]
    lambda0: tuple[float, float, float, float] | None
    lambda2: float
    lambda4: float
    u2: float
    integrator: IntegratorConfig
    tolerances: Tolerances
    box_low: tuple[float, ...]
    box_high: tuple[float, ...]
    samples: int
    seed: int

    def system(self) -> Arm2DOF:
        return Arm2DOF(self.params)

    def initial_costate(self, sys_) -> np.ndarray:
        if self.lambda0 is not None:
            return np.asarray(self.lambda0, dtype=float)
        return costate_on_surface(sys_, np.asarray(self.x0), self.lambda2,
                                  self.lambda4)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def load_config(path: str | None = None,
                overrides: dict | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    with resources.files("singarc").joinpath("configs/default.cfg") \
            .open() as fh:
        parser.read_file(fh)
    if path is not None:
        if not parser.read(path):
            raise FileNotFoundError(f"config file not found: {path}")
    overrides = overrides or {}

    model = parser["model"]
    params = ArmParams(
        link_length=_floats(model["link_length"]),
        com_position=_floats(model["com_position"]),
        mass=_floats(model["mass"]),
        inertia_z=_floats(model["inertia_z"]),
    )
    bounds = ControlBounds(lower=_floats(parser["bounds"]["lower"]),
                           upper=_floats(parser["bounds"]["upper"]))
    initial = parser["initial"]
    x0 = _floats(initial["x0"])
    if len(x0) != 4:
        raise ValueError("x0 needs exactly four components")
    lambda0 = _floats(initial["lambda0"]) if "lambda0" in initial else None
    integ = parser["integrator"]
    integrator = IntegratorConfig(
        step=overrides.get("step") or integ.getfloat("step"),
        horizon=integ.getfloat("horizon"),
        interp=integ.get("interp"),
        rk_exclusion=integ.getfloat("rk_exclusion"),
    )
    tols = parser["tolerances"]
    tolerances = Tolerances(
        phi_band=overrides.get("tol_phi"),
        rel_band=tols.getfloat("rel_band"),
        min_samples=tols.getint("min_samples"),
        gap_samples=tols.getint("gap_samples"),
        law_exclusion=tols.getfloat("law_exclusion"),
        u_tol=tols.getfloat("u_tol"),
        law_tol=tols.getfloat("law_tol"),
    )
    sampling = parser["sampling"]
    return RunConfig(
        params=params,
        bounds=bounds,
        x0=x0,
        lambda0=lambda0,
        lambda2=initial.getfloat("lambda2"),
        lambda4=initial.getfloat("lambda4"),
        u2=initial.getfloat("u2"),
        integrator=integrator,
        tolerances=tolerances,
        box_low=_floats(sampling["box_low"]),
        box_high=_floats(sampling["box_high"]),
        samples=overrides.get("samples") or sampling.getint("samples"),
        seed=sampling.getint("seed") if overrides.get("seed") is None
        else overrides["seed"],
    )


def _g(v: float) -> str:
    return "%.17g" % v


def cmd_construct(cfg: RunConfig, out: str) -> int:
    sys_ = cfg.system()
    lam0 = cfg.initial_costate(sys_)
    traj = integrate_extremal(sys_, np.asarray(cfg.x0), lam0,
                              cfg.integrator, c=cfg.u2, bounds=cfg.bounds)
    save_trajectory(traj, out)
    phi, phi_dot = switching_series(sys_, traj)
    lam_max = float(np.linalg.norm(traj.lam, axis=1).max())
    H = hamiltonian_trace(sys_, traj)
    print(f"samples: {len(traj)}")
    print("endpoint:", " ".join(_g(v) for v in traj.x[-1]))
    print(f"max|phi1|: {np.abs(phi[:, 0]).max():.3e} "
          f"({np.abs(phi[:, 0]).max() / lam_max:.3e} of max||lambda||)")
    print(f"max|phi1'|: {np.abs(phi_dot[:, 0]).max():.3e}")
    print(f"H variation: {H.max() - H.min():.3e}")
    print(f"wrote {out}")
    abort = traj.meta.get("abort")
    if abort:
        print(f"aborted early: {abort}")
        by_name = {cls.__name__: code for cls, code in EXIT_CODES.items()}
        return by_name.get(abort["flag"], 1)
    return EXIT_OK


def cmd_diagnose(traj_path: str, cfg: RunConfig, out: str) -> int:
    sys_ = cfg.system()
    traj = ingest(traj_path)
    if traj.lam is None:
        resim = resimulate(
            sys_, traj.x[0], traj,
            IntegratorConfig(step=cfg.integrator.step,
                             horizon=traj.horizon, interp="linear"))
        drift = float(np.linalg.norm(resim.x[-1] - traj.x[-1]))
        summary = {
            "costates": False,
            "notice": "MissingCostates: only resimulation diagnostics "
                      "are available for this file",
            "samples": len(traj),
            "resim_endpoint_drift": drift,
        }
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK
    phi, phi_dot = switching_series(sys_, traj)
    H = hamiltonian_trace(sys_, traj)
    member = np.asarray(in_Rk(traj.x.T), dtype=bool)
    norms = np.linalg.norm(traj.lam, axis=1)
    safe = np.abs(traj.lam[:, 3]) > 1e-9 * np.maximum(1.0, norms)
    ratio = np.where(safe, traj.lam[:, 1] /
                     np.where(safe, traj.lam[:, 3], 1.0), np.nan)
    audit = pmp_audit(sys_, traj, cfg.bounds, cfg.tolerances)
    with open(out, "w") as fh:
        fh.write("t,phi1,phi1_dot,phi2,phi2_dot,H,in_rk,lam_ratio,"
                 "label_u1,label_u2\n")
        for i in range(len(traj)):
            fh.write(",".join([
                _g(traj.t[i]), _g(phi[i, 0]), _g(phi_dot[i, 0]),
                _g(phi[i, 1]), _g(phi_dot[i, 1]), _g(H[i]),
                str(int(member[i])), _g(ratio[i]),
                audit.labels[i, 0], audit.labels[i, 1]]) + "\n")
    labels, counts = np.unique(audit.labels, return_counts=True)
    summary = {
        "costates": True,
        "samples": len(traj),
        "max_abs_phi1": float(np.abs(phi[:, 0]).max()),
        "max_abs_phi1_dot": float(np.abs(phi_dot[:, 0]).max()),
        "H_variation": float(H.max() - H.min()),
        "in_rk_fraction": float(member.mean()),
        "classification": {str(l): int(c) for l, c in zip(labels, counts)},
        "lambda_degenerate_rows": [int(i) for i in audit.lambda_degenerate],
        "series": out,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_regularize(traj_path: str, cfg: RunConfig, out: str) -> int:
    sys_ = cfg.system()
    traj = ingest(traj_path)
    if traj.lam is None:
        raise MissingCostates("regularization requires costate columns")
    intervals = [iv for iv in detect_singular_arcs(sys_, traj, cfg.bounds,
                                                   cfg.tolerances)
                 if iv.channel == 1]
    fixed, report = regularize_u1(sys_, traj, intervals, cfg.bounds,
                                  cfg.tolerances)
    save_trajectory(fixed, out)
    with open(out + ".report.json", "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    audit = pmp_audit(sys_, fixed, cfg.bounds, cfg.tolerances)
    violations = audit.count(LABEL_VIOLATION)
    print(f"intervals: {len(intervals)}")
    print(f"endpoint error: {report.endpoint_error:.6e} relative "
          f"({report.endpoint_error_abs:.6e} absolute)")
    print(f"violations after regularization: {violations}")
    print(f"wrote {out}")
    if "partial" in report.flags:
        return EXIT_PARTIAL_REGULARIZATION
    if violations > 0:
        return EXIT_VIOLATIONS_REMAIN
    return EXIT_OK


def cmd_certify(cfg: RunConfig, out: str | None) -> int:
    sys_ = cfg.system()
    rng = np.random.default_rng(cfg.seed)
    lo = np.asarray(cfg.box_low)
    hi = np.asarray(cfg.box_high)
    states = rng.uniform(lo, hi, size=(cfg.samples, lo.size))
    batch = states.T
    ranks = np.asarray(frame_rank(sys_, batch))
    alpha = alpha_coefficients(sys_, batch)
    alpha_first = np.abs(np.asarray(alpha.values)[:, :, 0]).max()
    report = {
        "samples": cfg.samples,
        "seed": cfg.seed,
        "min_frame_rank": float(ranks.min()),
        "max_abs_alpha_ij1": float(alpha_first),
        "b_set": {},
    }
    for c in (cfg.bounds.lower[0], cfg.bounds.upper[0]):
        ok, _ = b_set_certificate(sys_, batch, c)
        ok = np.asarray(ok, dtype=bool)
        fails = np.flatnonzero(~ok)
        vel = np.abs(states[fails, 2] + states[fails, 3]) if fails.size \
            else np.empty(0)
        report["b_set"][f"c={c:g}"] = {
            "pass_rate": float(ok.mean()),
            "failures": int(fails.size),
            "max_failure_velocity_sum": float(vel.max()) if vel.size else None,
        }
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text)
            fh.write("\n")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="config file overlaying the packaged defaults")
    common.add_argument("--out", metavar="PATH",
                        help="output file for the command's artifact")
    common.add_argument("--samples", type=int, metavar="N",
                        help="sample count for certify sweeps")
    common.add_argument("--seed", type=int, metavar="N",
                        help="RNG seed for certify sweeps")
    common.add_argument("--step", type=float, metavar="S",
                        help="integrator step override")
    common.add_argument("--tol-phi", type=float, metavar="E",
                        dest="tol_phi",
                        help="absolute switching-function band override")
    top = argparse.ArgumentParser(
        prog="singular-arc",
        description="Singular-arc construction and regularization for the "
                    "torque-limited 2-DOF arm")
    sub = top.add_subparsers(dest="command", required=True)
    sub.add_parser("construct", parents=[common],
                   help="integrate the reference singular extremal")
    p = sub.add_parser("diagnose", parents=[common],
                       help="switching/PMP diagnostics for a trajectory file")
    p.add_argument("trajectory", help="trajectory CSV")
    p = sub.add_parser("regularize", parents=[common],
                       help="detect singular arcs and rewrite u1")
    p.add_argument("trajectory", help="trajectory CSV")
    sub.add_parser("certify", parents=[common],
                   help="sampled independence certificates")
    return top


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    overrides = {"step": args.step, "samples": args.samples,
                 "seed": args.seed, "tol_phi": args.tol_phi}
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "construct":
            return cmd_construct(cfg, args.out or "extremal.csv")
        if args.command == "diagnose":
            return cmd_diagnose(args.trajectory, cfg, args.out
                                or "diagnose.csv")
        if args.command == "regularize":
            return cmd_regularize(args.trajectory, cfg, args.out
                                  or "regularized.csv")
        return cmd_certify(cfg, args.out)
    except SingArcError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
