"""Simulation-versus-reference comparison of ensemble CSV files.

The reference is linearly interpolated onto the simulation times that lie
inside both files' time ranges.  For every observable we report the maximum
absolute deviation, per-point z-scores ``dev / sqrt(err_sim^2 + err_ref^2)``
and the fraction of points with ``|z| > 3``.

A comparison passes when every magnetization point has ``|z| <= z_max``
(points with zero combined error must agree to ``atol``) and the minimum of
``xi2`` is within ``xi2_rel_tol`` of the reference minimum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .results import OBSERVABLES, read_records_csv

MAGNETIZATION = ("Mx", "My", "Mz")


class CompareError(ValueError):
    """Files cannot be compared (e.g. disjoint time ranges)."""


@dataclass
class ObservableComparison:
    name: str
    max_deviation: float
    z: np.ndarray
    frac_above_3: float
    max_abs_z: float


@dataclass
class CompareReport:
    times: np.ndarray
    observables: dict[str, ObservableComparison]
    xi2_min_sim: float
    xi2_min_ref: float
    xi2_rel_dev: float
    magnetization_ok: bool
    xi2_ok: bool
    thresholds: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.magnetization_ok and self.xi2_ok

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_points": int(len(self.times)),
            "t_range": [float(self.times[0]), float(self.times[-1])],
            "magnetization_ok": self.magnetization_ok,
            "xi2_ok": self.xi2_ok,
            "xi2_min_sim": self.xi2_min_sim,
            "xi2_min_ref": self.xi2_min_ref,
            "xi2_rel_dev": self.xi2_rel_dev,
            "thresholds": self.thresholds,
            "observables": {
                k: {"max_deviation": v.max_deviation, "max_abs_z": v.max_abs_z,
                    "frac_abs_z_gt_3": v.frac_above_3}
                for k, v in self.observables.items()},
        }

    def to_text(self) -> str:
        lines = [f"{'observable':<10} {'max|dev|':>12} {'max|z|':>9} {'|z|>3':>7}"]
        for k, v in self.observables.items():
            lines.append(f"{k:<10} {v.max_deviation:12.4e} {v.max_abs_z:9.2f} "
                         f"{v.frac_above_3:7.1%}")
        lines.append(f"xi2 min: sim {self.xi2_min_sim:.6g}  ref {self.xi2_min_ref:.6g}  "
                     f"rel dev {self.xi2_rel_dev:.2%}")
        lines.append(f"magnetization {'ok' if self.magnetization_ok else 'FAIL'}, "
                     f"xi2 minimum {'ok' if self.xi2_ok else 'FAIL'}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines)


def _z_scores(dev, err, atol):
    z = np.zeros_like(dev)
    nz = err > 0
    z[nz] = dev[nz] / err[nz]
    # exact-vs-exact points: a deviation beyond atol counts as infinitely significant
    z[~nz & (np.abs(dev) > atol)] = np.inf
    return z


def compare_tables(sim: dict, ref: dict, z_max: float = 3.0, xi2_rel_tol: float = 0.10,
                   atol: float = 1e-6, t_max: float | None = None) -> CompareReport:
    ts, tr = sim["t"], ref["t"]
    if len(ts) == 0 or len(tr) == 0:
        raise CompareError("empty table")
    if np.any(np.diff(tr) <= 0):
        raise CompareError("reference times must be strictly increasing")
    lo, hi = max(ts[0], tr[0]), min(ts[-1], tr[-1])
    if t_max is not None:
        hi = min(hi, t_max)
    eps = 1e-9 * max(1.0, abs(hi))
    sel = (ts >= lo - eps) & (ts <= hi + eps)
    if hi < lo - eps or not sel.any():
        raise CompareError(f"no overlapping times: sim [{ts[0]}, {ts[-1]}], "
                           f"reference [{tr[0]}, {tr[-1]}]")
    t = ts[sel]
    interp = lambda col: np.interp(t, tr, ref[col])

    obs = {}
    for name in OBSERVABLES:
        dev = sim[name][sel] - interp(name)
        err = np.hypot(sim[name + "_err"][sel], interp(name + "_err"))
        finite = np.isfinite(dev)
        z = _z_scores(np.where(finite, dev, 0.0), err, atol)
        az = np.abs(z[finite])
        obs[name] = ObservableComparison(
            name, float(np.max(np.abs(dev[finite]), initial=0.0)), z,
            float(np.mean(az > 3.0)) if az.size else 0.0,
            float(np.max(az, initial=0.0)))
    mag_ok = all(obs[m].max_abs_z <= z_max for m in MAGNETIZATION)

    rsel = (tr >= lo - eps) & (tr <= hi + eps)
    xs = np.nanmin(sim["xi2"][sel]) if np.isfinite(sim["xi2"][sel]).any() else np.nan
    xr = np.nanmin(ref["xi2"][rsel]) if np.isfinite(ref["xi2"][rsel]).any() else np.nan
    rel = abs(xs - xr) / abs(xr) if np.isfinite(xs) and np.isfinite(xr) and xr != 0 else np.nan
    xi_ok = bool(np.isfinite(rel) and rel <= xi2_rel_tol)
    return CompareReport(t, obs, float(xs), float(xr), float(rel), bool(mag_ok), xi_ok,
                         {"z_max": z_max, "xi2_rel_tol": xi2_rel_tol, "atol": atol})


def run_compare(sim_csv, ref_csv, **kwargs) -> CompareReport:
    """Compare two ensemble CSV files; keyword arguments as :func:`compare_tables`."""
    return compare_tables(read_records_csv(sim_csv), read_records_csv(ref_csv), **kwargs)
