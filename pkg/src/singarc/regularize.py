"""Singular-arc detection and control regularization on recorded runs.

Collocation exports carry ripple on singular intervals: the transcription
pins the control only weakly where the switching function vanishes.  The
repair here never smooths or filters.  Inside a detected interval the
control is replaced by the closed-form law evaluated on the recorded
(x, lambda); outside, by the bound the switching sign selects; anything
the law cannot cover is left alone and reported.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arm2dof import ControlBounds, FullyActuatedSystem
from .errors import (CostateDegenerate, DegenerateSystem, MissingCostates,
                     RkViolation)
from .integrate import IntegratorConfig, Trajectory, resimulate
from .liegeom import word_field
from .pmp import LAMBDA4_RTOL, singular_u1

LABEL_UPPER = "upper-bang"
LABEL_LOWER = "lower-bang"
LABEL_SINGULAR = "singular"
LABEL_VIOLATION = "violation"


@dataclass(frozen=True)
class Tolerances:
    """Bands for detection and audit.

    phi_band overrides the relative rule when set; otherwise the band is
    rel_band * max_t ||lambda|| * max_t ||g||, which tracks the scale of the
    ingested costates.  law_exclusion is the operative admissibility band
    for evaluating the closed form (see IntegratorConfig.rk_exclusion for
    why it is tighter than the diagnostic 1e-3).
    """

    phi_band: float | None = None
    rel_band: float = 1e-3
    min_samples: int = 10
    gap_samples: int = 3
    law_exclusion: float = 1e-6
    u_tol: float = 1e-6
    law_tol: float = 1e-6

    def __post_init__(self):
        if self.phi_band is not None and self.phi_band <= 0.0:
            raise ValueError("phi_band must be positive when given")
        if self.rel_band <= 0.0 or self.min_samples < 1 or self.gap_samples < 0:
            raise ValueError("detection tolerances out of range")


@dataclass(frozen=True)
class SingularInterval:
    """One maximal run of band-satisfying samples on a single channel."""

    channel: int
    start: int
    stop: int
    t_start: float
    t_end: float
    max_abs_phi: float
    max_abs_phi_dot: float
    u2_bang_value: float

    def __post_init__(self):
        if not (self.stop > self.start and self.t_end > self.t_start):
            raise ValueError("interval must have positive length")
        if self.channel < 1:
            raise ValueError("channels are 1-based")

    @property
    def indices(self) -> slice:
        return slice(self.start, self.stop + 1)


@dataclass(frozen=True)
class RegularizationReport:
    intervals: tuple[SingularInterval, ...]
    max_deviation: tuple[float, ...]
    endpoint_error: float
    endpoint_error_abs: float
    pmp_consistency: dict
    skipped_samples: tuple[int, ...] = ()
    flags: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "intervals": [
                {k: getattr(iv, k) for k in (
                    "channel", "start", "stop", "t_start", "t_end",
                    "max_abs_phi", "max_abs_phi_dot", "u2_bang_value")}
                for iv in self.intervals],
            "max_deviation": list(self.max_deviation),
            "endpoint_error": self.endpoint_error,
            "endpoint_error_abs": self.endpoint_error_abs,
            "pmp_consistency": self.pmp_consistency,
            "skipped_samples": list(self.skipped_samples),
            "flags": list(self.flags),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class AuditResult:
    """Per-sample, per-channel classification plus degenerate-costate rows."""

    labels: np.ndarray
    lambda_degenerate: tuple[int, ...] = ()

    def count(self, label: str, channel: int | None = None) -> int:
        block = self.labels if channel is None else self.labels[:, channel - 1]
        return int(np.count_nonzero(block == label))


def ingest(path: str) -> Trajectory:
    """Read an external trajectory export and normalize its metadata."""
    from .integrate import load_trajectory

    traj = load_trajectory(path)
    meta = dict(traj.meta)
    meta.setdefault("source", "ingested")
    flags = list(meta.get("flags", []))
    if traj.lam is None and "no-costates" not in flags:
        flags.append("no-costates")
    meta["flags"] = flags
    return Trajectory(t=traj.t, x=traj.x, u=traj.u, lam=traj.lam, meta=meta)


def switching_series(sys: FullyActuatedSystem, traj: Trajectory):
    """phi and phi' for every channel at every sample, vectorized."""
    if traj.lam is None:
        raise MissingCostates("switching series needs costates")
    comps = [traj.x[:, i] for i in range(traj.x.shape[1])]
    _, L = sys.dyn(comps)
    lam = traj.lam
    n = sys.n
    lam_v = [lam[:, n + r] for r in range(n)]
    phi = np.stack(
        [sum(lam_v[r] * L[r][k] for r in range(n)) for k in range(n)], axis=1)
    phi_dot = np.empty_like(phi)
    for k in range(n):
        fgk = word_field(sys, f"fg{k + 1}")(comps)
        phi_dot[:, k] = sum(lam[:, i] * fgk[i] for i in range(2 * n))
    return phi, phi_dot


def _band_value(sys, traj, tol: Tolerances) -> float:
    if tol.phi_band is not None:
        return tol.phi_band
    comps = [traj.x[:, i] for i in range(traj.x.shape[1])]
    _, L = sys.dyn(comps)
    n = sys.n
    g_norm = max(
        float(np.sqrt(sum(np.asarray(L[r][k]) ** 2 for r in range(n))).max())
        for k in range(n))
    lam_norm = float(np.linalg.norm(traj.lam, axis=1).max())
    return tol.rel_band * lam_norm * g_norm


def _mask_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Maximal inclusive (start, stop) runs of True."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    stops = np.concatenate((breaks, [idx.size - 1]))
    return [(int(idx[a]), int(idx[b])) for a, b in zip(starts, stops)]


def _merge_runs(runs: list[tuple[int, int]], gap: int) -> list[tuple[int, int]]:
    if not runs:
        return []
    merged = [runs[0]]
    for start, stop in runs[1:]:
        last_start, last_stop = merged[-1]
        if start - last_stop - 1 <= gap:
            merged[-1] = (last_start, stop)
        else:
            merged.append((start, stop))
    return merged


def detect_singular_arcs(sys: FullyActuatedSystem, traj: Trajectory,
                         bounds: ControlBounds | None = None,
                         tol: Tolerances | None = None
                         ) -> list[SingularInterval]:
    """Maximal intervals where a switching function and its rate vanish.

    Short excursions out of the band (collocation ripple) are bridged when
    they span at most gap_samples; the reported diagnostics are honest
    maxima over the merged interval, bridged samples included.
    """
    if traj.lam is None:
        raise MissingCostates("detection needs costates")
    if bounds is None:
        bounds = ControlBounds()
    if tol is None:
        tol = Tolerances()
    phi, phi_dot = switching_series(sys, traj)
    band = _band_value(sys, traj, tol)
    intervals: list[SingularInterval] = []
    for k in range(sys.n):
        mask = (np.abs(phi[:, k]) <= band) & (np.abs(phi_dot[:, k]) <= band)
        runs = _merge_runs(_mask_runs(mask), tol.gap_samples)
        for start, stop in runs:
            if stop - start + 1 < tol.min_samples:
                continue
            window = slice(start, stop + 1)
            u2_med = float(np.median(traj.u[window, 1]))
            intervals.append(SingularInterval(
                channel=k + 1,
                start=start,
                stop=stop,
                t_start=float(traj.t[start]),
                t_end=float(traj.t[stop]),
                max_abs_phi=float(np.abs(phi[window, k]).max()),
                max_abs_phi_dot=float(np.abs(phi_dot[window, k]).max()),
                u2_bang_value=bounds.nearest(1, u2_med),
            ))
    intervals.sort(key=lambda iv: (iv.start, iv.channel))
    return intervals


def costate_ratio_trace(traj: Trajectory) -> np.ndarray:
    """lambda2/lambda4 per sample, the law's only costate dependence."""
    if traj.lam is None:
        raise MissingCostates("ratio trace needs costates")
    lam = traj.lam
    norms = np.linalg.norm(lam, axis=1)
    floor = LAMBDA4_RTOL * np.maximum(1.0, norms)
    bad = np.abs(lam[:, 3]) <= floor
    if bad.any():
        raise CostateDegenerate(
            f"lambda4 below tolerance at sample {int(np.flatnonzero(bad)[0])}")
    return lam[:, 1] / lam[:, 3]


def regularize_u1(sys: FullyActuatedSystem, traj: Trajectory,
                  intervals: Sequence[SingularInterval],
                  bounds: ControlBounds | None = None,
                  tol: Tolerances | None = None,
                  resim_config: IntegratorConfig | None = None,
                  ) -> tuple[Trajectory, RegularizationReport]:
    """Rewrite channel 1: closed form inside intervals, bang outside.

    The closed form is never clamped.  A sample where it exits the bounds
    or leaves the admissible set keeps its recorded value, is excluded from
    the rewrite, and shows up in skipped_samples with a partial flag; the
    theory stops applying there, so silent repair would be a lie.
    """
    if traj.lam is None:
        raise MissingCostates("regularization needs costates")
    for iv in intervals:
        if iv.channel != 1:
            raise ValueError("only channel-1 intervals can be regularized")
    if bounds is None:
        bounds = ControlBounds()
    if tol is None:
        tol = Tolerances()
    if resim_config is None:
        resim_config = IntegratorConfig(step=1e-4, horizon=float(traj.t[-1]),
                                        interp="linear")

    phi, _ = switching_series(sys, traj)
    n_samples = len(traj)
    new_u = np.array(traj.u)
    inside = np.zeros(n_samples, dtype=bool)
    skipped: list[int] = []
    flags: list[str] = []
    deviations: list[float] = []
    lo1, hi1 = bounds.lower[0], bounds.upper[0]

    for iv in intervals:
        inside[iv.indices] = True
        dev = 0.0
        for i in range(iv.start, iv.stop + 1):
            try:
                u1 = singular_u1(sys, traj.x[i], traj.lam[i],
                                 iv.u2_bang_value, exclusion=tol.law_exclusion)
            except (RkViolation, CostateDegenerate, DegenerateSystem):
                skipped.append(i)
                continue
            if not (lo1 <= u1 <= hi1):
                skipped.append(i)
                continue
            dev = max(dev, abs(u1 - traj.u[i, 0]))
            new_u[i, 0] = u1
        deviations.append(dev)

    outside = ~inside
    phi1 = phi[:, 0]
    sel_upper = outside & (phi1 > 0.0)
    sel_lower = outside & (phi1 < 0.0)
    new_u[sel_upper, 0] = hi1
    new_u[sel_lower, 0] = lo1
    left_alone = outside & (phi1 == 0.0)
    if left_alone.any():
        flags.append("ambiguous-sign-samples")

    if skipped:
        flags.append("partial")

    meta = dict(traj.meta)
    meta["source"] = "regularized"
    meta["flags"] = sorted(set(meta.get("flags", [])) | set(flags))
    out = Trajectory(t=traj.t, x=traj.x, u=new_u, lam=traj.lam, meta=meta)

    resim = resimulate(sys, traj.x[0], out, resim_config)
    target = traj.x[-1]
    err_abs = float(np.linalg.norm(resim.x[-1] - target))
    err_rel = err_abs / max(float(np.linalg.norm(target)), 1e-30)

    agree = {}
    for k, name in ((0, "u1"), (1, "u2")):
        mask = outside if k == 0 else np.ones(n_samples, dtype=bool)
        total = int(np.count_nonzero(mask))
        if total == 0:
            agree[name] = {"agree": 0, "total": 0, "fraction": 1.0}
            continue
        want = np.where(phi[mask, k] > 0.0, bounds.upper[k], bounds.lower[k])
        ok = np.abs(traj.u[mask, k] - want) <= tol.u_tol
        agree[name] = {"agree": int(np.count_nonzero(ok)), "total": total,
                       "fraction": float(np.count_nonzero(ok)) / total}

    report = RegularizationReport(
        intervals=tuple(intervals),
        max_deviation=tuple(deviations),
        endpoint_error=err_rel,
        endpoint_error_abs=err_abs,
        pmp_consistency=agree,
        skipped_samples=tuple(skipped),
        flags=tuple(flags),
    )
    return out, report


def pmp_audit(sys: FullyActuatedSystem, traj: Trajectory,
              bounds: ControlBounds | None = None,
              tol: Tolerances | None = None) -> AuditResult:
    """Classify every (sample, channel) against the maximum principle.

    Sign rule: positive switching function demands the upper bound,
    negative the lower.  In the singular band, channel 1 must match the
    closed-form law; a law that is undefined at a sample (outside the
    admissible set) leaves the singular label unverified rather than
    inventing a violation.  Zero costate rows prove nothing and are flagged
    as violations.
    """
    if traj.lam is None:
        raise MissingCostates("audit needs costates")
    if bounds is None:
        bounds = ControlBounds()
    if tol is None:
        tol = Tolerances()
    phi, phi_dot = switching_series(sys, traj)
    band = _band_value(sys, traj, tol)
    n_samples = len(traj)
    n = sys.n
    labels = np.full((n_samples, n), LABEL_VIOLATION, dtype="<U10")
    lam_norms = np.linalg.norm(traj.lam, axis=1)
    degenerate = lam_norms <= 0.0

    for i in range(n_samples):
        if degenerate[i]:
            continue
        for k in range(n):
            u = traj.u[i, k]
            if phi[i, k] > band:
                if abs(u - bounds.upper[k]) <= tol.u_tol:
                    labels[i, k] = LABEL_UPPER
            elif phi[i, k] < -band:
                if abs(u - bounds.lower[k]) <= tol.u_tol:
                    labels[i, k] = LABEL_LOWER
            else:
                if k == 0 and abs(phi_dot[i, k]) <= band:
                    try:
                        want = singular_u1(sys, traj.x[i], traj.lam[i],
                                           bounds.nearest(1, traj.u[i, 1]),
                                           exclusion=tol.law_exclusion)
                    except (RkViolation, CostateDegenerate, DegenerateSystem):
                        labels[i, k] = LABEL_SINGULAR
                        continue
                    if abs(u - want) <= tol.law_tol:
                        labels[i, k] = LABEL_SINGULAR
                elif abs(u - bounds.upper[k]) <= tol.u_tol:
                    # transversal crossing: a bound is still legitimate
                    labels[i, k] = LABEL_UPPER
                elif abs(u - bounds.lower[k]) <= tol.u_tol:
                    labels[i, k] = LABEL_LOWER
                elif k != 0 and abs(phi_dot[i, k]) <= band:
                    labels[i, k] = LABEL_SINGULAR
    return AuditResult(labels=labels,
                       lambda_degenerate=tuple(np.flatnonzero(degenerate)))
