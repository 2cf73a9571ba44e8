"""Weighted least-squares fitting of stack parameters to a measured
dispersion curve, with identifiability diagnostics.

Free parameters address the stack template by name:

* ``c_ge`` — germanium fraction, coupled to the film's Young's modulus and
  density through the linear mixing rules (requires a coupling binding),
* ``layer<i>.thickness``, ``layer<i>.young_modulus``,
  ``layer<i>.poisson_ratio``, ``layer<i>.density`` — direct layer fields
  in SI units.

The minimizer is a damped Gauss-Newton (Levenberg-style) iteration with
central finite-difference Jacobians and box bounds enforced by clamping.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .dispersion import DispersionCurve, dispersion_curve
from .errors import FitError
from .materials import (
    E_GE,
    E_SI,
    RHO_GE,
    RHO_SI,
    IsotropicMaterial,
    LayerStack,
    mix_density,
    mix_young_modulus,
)

WELL_DETERMINED = "well-determined"
WEAKLY_DETERMINED = "weakly-determined"
FIXED = "fixed"

_LAYER_FIELD = re.compile(
    r"^layer(\d+)\.(thickness|young_modulus|poisson_ratio|density)$"
)

DEFAULT_SENSITIVITY_FLOOR = 1e-3
# Relative-scaled Jacobian condition number above which the smallest singular
# direction is treated as unconstrained.  Thick-oxide stacks condition near
# ~7 while the no-oxide thin-film case sits near ~90, so 30 separates them
# with margin on both sides.
DEFAULT_CONDITION_LIMIT = 30.0


@dataclass(frozen=True)
class FreeParam:
    """One fitted parameter with bounds and an optional log transform."""

    name: str
    initial: float
    lower: float
    upper: float
    transform: str = "linear"

    def __post_init__(self):
        if self.transform not in ("linear", "log"):
            raise FitError(f"{self.name}: transform must be 'linear' or 'log'")
        if not self.lower < self.upper:
            raise FitError(f"{self.name}: bounds must satisfy lower < upper")
        if not self.lower <= self.initial <= self.upper:
            raise FitError(
                f"{self.name}: initial {self.initial} outside [{self.lower}, {self.upper}]"
            )
        if self.transform == "log" and self.lower <= 0:
            raise FitError(f"{self.name}: log transform requires a positive lower bound")


@dataclass(frozen=True)
class SiGeCoupling:
    """Binds (young_modulus, density) of one layer to the 'c_ge' parameter."""

    layer_index: int = 0
    e_si: float = E_SI
    e_ge: float = E_GE
    rho_si: float = RHO_SI
    rho_ge: float = RHO_GE


def apply_coupling(
    c_ge: float,
    endpoints: tuple[float, float, float, float] = (E_SI, E_GE, RHO_SI, RHO_GE),
) -> tuple[float, float]:
    """(Young's modulus, density) of the film at the given germanium fraction."""
    e_si, e_ge, rho_si, rho_ge = endpoints
    return (
        mix_young_modulus(c_ge, e_si, e_ge),
        mix_density(c_ge, rho_si, rho_ge),
    )


@dataclass(frozen=True)
class FitProblem:
    """Template stack, free-parameter list, and the measured curve to match."""

    template: LayerStack
    free: tuple[FreeParam, ...]
    measured: DispersionCurve
    coupling: SiGeCoupling | None = None
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "free", tuple(self.free))
        names = [p.name for p in self.free]
        if len(set(names)) != len(names):
            raise FitError(f"duplicate free parameter names in {names}")
        for p in self.free:
            self._check_name(p.name)
        if len(self.measured) == 0:
            raise FitError("measured curve is empty")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != len(self.measured):
                raise FitError("weights must match the measured curve length")
            if any(x <= 0 for x in w):
                raise FitError("weights must be positive")
            object.__setattr__(self, "weights", w)

    def _check_name(self, name: str) -> None:
        if name == "c_ge":
            if self.coupling is None:
                raise FitError("'c_ge' requires a SiGeCoupling binding")
            if not 0 <= self.coupling.layer_index < len(self.template.layers):
                raise FitError(
                    f"coupling layer index {self.coupling.layer_index} out of range"
                )
            return
        m = _LAYER_FIELD.match(name)
        if not m:
            raise FitError(f"unknown parameter name {name!r}")
        idx = int(m.group(1))
        if not 0 <= idx < len(self.template.layers):
            raise FitError(f"{name!r}: layer index out of range")
        if m.group(2) != "thickness" and not isinstance(
            self.template.layers[idx].material, IsotropicMaterial
        ):
            raise FitError(f"{name!r}: material fields are fittable on isotropic layers only")

    @property
    def sigmas(self) -> np.ndarray:
        """Per-point velocity sigmas implied by weights (w = 1/sigma^2)."""
        if self.weights is not None:
            return 1.0 / np.sqrt(np.asarray(self.weights))
        if self.measured.sigmas is not None:
            return np.asarray(self.measured.sigmas)
        return np.ones(len(self.measured))

    def realize(self, params: Mapping[str, float]) -> LayerStack:
        """Stack with the named parameter values applied to the template."""
        unknown = set(params) - {p.name for p in self.free}
        if unknown:
            raise FitError(f"unknown parameter(s) {sorted(unknown)}")
        stack = self.template
        if "c_ge" in params:
            cpl = self.coupling
            e, rho = apply_coupling(
                params["c_ge"], (cpl.e_si, cpl.e_ge, cpl.rho_si, cpl.rho_ge)
            )
            layer = stack.layers[cpl.layer_index]
            mat = replace(layer.material, young_modulus=e, density=rho)
            stack = stack.with_layer(cpl.layer_index, replace(layer, material=mat))
        for name, value in params.items():
            m = _LAYER_FIELD.match(name)
            if not m:
                continue
            idx, attr = int(m.group(1)), m.group(2)
            layer = stack.layers[idx]
            if attr == "thickness":
                stack = stack.with_layer(idx, replace(layer, thickness=value))
            else:
                mat = replace(layer.material, **{attr: value})
                stack = stack.with_layer(idx, replace(layer, material=mat))
        return stack


def residuals(problem: FitProblem, params: Mapping[str, float]) -> np.ndarray:
    """Weighted velocity residuals (model - measured)/sigma at the measured points."""
    for p in problem.free:
        if p.name in params and not p.lower <= params[p.name] <= p.upper:
            raise FitError(
                f"{p.name} = {params[p.name]} outside bounds [{p.lower}, {p.upper}]"
            )
    stack = problem.realize(params)
    model = dispersion_curve(
        stack, problem.measured.frequencies, hints=problem.measured.velocities
    )
    dv = np.asarray(model.velocities) - np.asarray(problem.measured.velocities)
    return dv / problem.sigmas


@dataclass(frozen=True)
class IdentifiabilityReport:
    """Per-parameter conditioning diagnostics of the weighted Jacobian."""

    flags: dict[str, str]
    sensitivities: dict[str, float]
    condition_number: float
    singular_values: tuple[float, ...]
    recommendation: str


@dataclass(frozen=True, eq=False)
class FitResult:
    """Estimates with covariance, convergence record, and identifiability flags."""

    estimates: dict[str, float]
    covariance: np.ndarray
    residual_rms: float  # m/s, unweighted
    n_iterations: int
    identifiability: dict[str, str]
    converged: bool
    message: str
    bound_hits: tuple[str, ...] = ()

    def sigma(self, name: str) -> float:
        """1-sigma uncertainty of one estimate from the covariance diagonal."""
        idx = list(self.estimates).index(name)
        return math.sqrt(max(self.covariance[idx, idx], 0.0))


def _to_internal(p: FreeParam, value: float) -> float:
    return math.log(value) if p.transform == "log" else value


def _from_internal(p: FreeParam, z: float) -> float:
    v = math.exp(z) if p.transform == "log" else float(z)
    return min(max(v, p.lower), p.upper)


def _values(free: tuple[FreeParam, ...], z: np.ndarray) -> dict[str, float]:
    return {p.name: _from_internal(p, z[i]) for i, p in enumerate(free)}


def _jacobian(
    problem: FitProblem,
    z: np.ndarray,
    rel_step: float,
) -> np.ndarray:
    """Central finite-difference Jacobian of the residual vector w.r.t. z."""
    free = problem.free
    n = len(free)
    cols = []
    for j in range(n):
        p = free[j]
        if p.transform == "log":
            h = rel_step
        else:
            span = p.upper - p.lower
            h = rel_step * max(abs(z[j]), 1e-3 * span)
        zp = z.copy()
        zm = z.copy()
        zp[j] += h
        zm[j] -= h
        vp = _values(free, zp)
        vm = _values(free, zm)
        denom = _to_internal(p, vp[p.name]) - _to_internal(p, vm[p.name])
        if denom == 0:
            cols.append(np.zeros(len(problem.measured)))
            continue
        rp = residuals(problem, vp)
        rm = residuals(problem, vm)
        cols.append((rp - rm) / denom)
    return np.column_stack(cols)


def _jacobian_original_units(
    problem: FitProblem, values: dict[str, float], rel_step: float
) -> np.ndarray:
    """Jacobian w.r.t. the parameters in their original units."""
    free = problem.free
    cols = []
    for p in free:
        theta = values[p.name]
        span = p.upper - p.lower
        h = rel_step * max(abs(theta), 1e-3 * span)
        up = dict(values)
        dn = dict(values)
        up[p.name] = min(theta + h, p.upper)
        dn[p.name] = max(theta - h, p.lower)
        denom = up[p.name] - dn[p.name]
        if denom == 0:
            cols.append(np.zeros(len(problem.measured)))
            continue
        cols.append((residuals(problem, up) - residuals(problem, dn)) / denom)
    return np.column_stack(cols)


def identifiability_report(
    problem: FitProblem,
    params: Mapping[str, float],
    *,
    sensitivity_floor: float = DEFAULT_SENSITIVITY_FLOOR,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
    rel_step: float = 1e-4,
) -> IdentifiabilityReport:
    """SVD-based flags for parameters the measured curve barely constrains.

    Columns of the weighted Jacobian are scaled to relative parameter
    changes before the SVD, so sensitivities compare fractional effects.
    A parameter is weakly determined when its relative sensitivity falls
    below ``sensitivity_floor``, or when the condition number exceeds
    ``condition_limit``: the near-null singular direction then marks one
    unconstrained parameter combination, and the least sensitive of its
    participants is flagged (repeatedly, until the remainder conditions).
    """
    values = {p.name: float(params[p.name]) for p in problem.free}
    jac = _jacobian_original_units(problem, values, rel_step)
    scales = np.array(
        [max(abs(values[p.name]), 1e-3 * (p.upper - p.lower)) for p in problem.free]
    )
    jt = jac * scales
    sens = np.linalg.norm(jt, axis=0)
    top = sens.max() if sens.size else 0.0
    rel = sens / top if top > 0 else np.zeros_like(sens)
    svals = np.linalg.svd(jt, compute_uv=False)
    cond = float("inf") if svals[-1] == 0 else float(svals[0] / svals[-1])

    n = len(problem.free)
    flags = {p.name: WELL_DETERMINED for p in problem.free}
    active = [j for j in range(n)]
    for j, p in enumerate(problem.free):
        if rel[j] < sensitivity_floor:
            flags[p.name] = WEAKLY_DETERMINED
            active.remove(j)
    while len(active) >= 2:
        _, s_act, vt_act = np.linalg.svd(jt[:, active], full_matrices=False)
        cond_act = float("inf") if s_act[-1] == 0 else float(s_act[0] / s_act[-1])
        if cond_act <= condition_limit:
            break
        part = np.abs(vt_act[-1])
        cands = [
            active[pos]
            for pos in range(len(active))
            if part[pos] ** 2 > 1.0 / (2.0 * len(active))
        ] or list(active)
        drop = min(cands, key=lambda j: sens[j])
        flags[problem.free[drop].name] = WEAKLY_DETERMINED
        active.remove(drop)
    weak_names = [k for k, v in flags.items() if v == WEAKLY_DETERMINED]
    if weak_names:
        rec = (
            "fix weakly-determined parameter(s) "
            + ", ".join(weak_names)
            + " and refit the remainder"
        )
    else:
        rec = "all free parameters are well determined"
    return IdentifiabilityReport(
        flags=flags,
        sensitivities={p.name: float(rel[j]) for j, p in enumerate(problem.free)},
        condition_number=cond,
        singular_values=tuple(float(s) for s in svals),
        recommendation=rec,
    )


def fit_parameters(
    problem: FitProblem,
    *,
    max_iter: int = 200,
    rel_step: float = 1e-4,
    step_tol: float = 1e-6,
    cost_tol: float = 1e-10,
    sensitivity_floor: float = DEFAULT_SENSITIVITY_FLOOR,
    condition_limit: float = DEFAULT_CONDITION_LIMIT,
) -> FitResult:
    """Damped Gauss-Newton minimization of the weighted residuals.

    Damping adapts by factors of 10; bounds are enforced by clamping, and
    parameters pinned at a bound are reported in ``bound_hits``.
    Convergence requires a relative step below ``step_tol`` or a relative
    cost change below ``cost_tol``.
    """
    free = problem.free
    n = len(free)
    if len(problem.measured) < n:
        raise FitError(
            f"{len(problem.measured)} measured points cannot constrain {n} parameters"
        )
    z = np.array([_to_internal(p, p.initial) for p in free])
    r = residuals(problem, _values(free, z))
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    message = "iteration cap reached"
    it = 0
    for it in range(1, max_iter + 1):
        jac = _jacobian(problem, z, rel_step)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        accepted = False
        for _ in range(30):
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                delta = np.linalg.solve(damped, -jtr)
            except np.linalg.LinAlgError:
                lam = min(lam * 10.0, 1e12)
                continue
            z_new = z + delta
            vals_new = _values(free, z_new)
            # re-internalize after clamping so bound hits stay consistent
            z_new = np.array([_to_internal(p, vals_new[p.name]) for p in free])
            r_new = residuals(problem, vals_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                lam = max(lam / 10.0, 1e-12)
                break
            lam = min(lam * 10.0, 1e12)
        if not accepted:
            # no strictly lower point found: accept as converged when the
            # residual is orthogonal to the Jacobian columns (at the minimum)
            col_norm = np.linalg.norm(jac, axis=0) * max(np.linalg.norm(r), 1e-300)
            g_rel = float((np.abs(jtr) / np.maximum(col_norm, 1e-300)).max())
            converged = g_rel < 1e-4
            message = (
                "converged (residual orthogonal to Jacobian)"
                if converged
                else "damping saturated without improvement"
            )
            break
        step = np.abs(z_new - z) / np.maximum(np.abs(z_new), 1.0)
        rel_drop = (cost - cost_new) / max(cost, 1e-300)
        z, r, cost = z_new, r_new, cost_new
        if step.max() < step_tol:
            converged = True
            message = f"converged (relative step < {step_tol:g})"
            break
        if rel_drop < cost_tol:
            converged = True
            message = f"converged (relative cost change < {cost_tol:g})"
            break

    values = _values(free, z)
    bound_hits = tuple(
        p.name
        for p in free
        if values[p.name] in (p.lower, p.upper)
    )
    jac_orig = _jacobian_original_units(problem, values, rel_step)
    jtj = jac_orig.T @ jac_orig
    covariance = np.linalg.pinv(jtj)
    covariance = 0.5 * (covariance + covariance.T)
    sig = problem.sigmas
    rms = float(np.sqrt(np.mean((r * sig) ** 2)))
    report = identifiability_report(
        problem,
        values,
        sensitivity_floor=sensitivity_floor,
        condition_limit=condition_limit,
        rel_step=rel_step,
    )
    flags = dict(report.flags)
    for name in bound_hits:
        flags[name] = FIXED
    return FitResult(
        estimates=values,
        covariance=covariance,
        residual_rms=rms,
        n_iterations=it,
        identifiability=flags,
        converged=converged,
        message=message,
        bound_hits=bound_hits,
    )


class DispersionFitter:
    """Estimator-style front end: fit(f, v) then predict(f).

    Parameters mirror FitProblem; after ``fit`` the instance exposes
    ``result_`` (the FitResult) and ``problem_``.
    """

    def __init__(
        self,
        template: LayerStack,
        free: tuple[FreeParam, ...],
        coupling: SiGeCoupling | None = None,
        max_iter: int = 200,
    ):
        self.template = template
        self.free = tuple(free)
        self.coupling = coupling
        self.max_iter = max_iter

    def get_params(self, deep: bool = True) -> dict:
        return {
            "template": self.template,
            "free": self.free,
            "coupling": self.coupling,
            "max_iter": self.max_iter,
        }

    def set_params(self, **params) -> "DispersionFitter":
        for key, value in params.items():
            if key not in self.get_params():
                raise FitError(f"unknown estimator parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, frequencies, velocities, sigma=None) -> "DispersionFitter":
        freqs = tuple(float(f) for f in frequencies)
        vels = tuple(float(v) for v in velocities)
        sigmas = None if sigma is None else tuple(float(s) for s in sigma)
        measured = DispersionCurve(frequencies=freqs, velocities=vels, sigmas=sigmas)
        self.problem_ = FitProblem(
            template=self.template,
            free=self.free,
            measured=measured,
            coupling=self.coupling,
        )
        self.result_ = fit_parameters(self.problem_, max_iter=self.max_iter)
        return self

    def predict(self, frequencies) -> np.ndarray:
        if not hasattr(self, "result_"):
            raise FitError("fit must be called before predict")
        stack = self.problem_.realize(self.result_.estimates)
        curve = dispersion_curve(stack, tuple(float(f) for f in frequencies))
        return np.asarray(curve.velocities)


# --- reporting -------------------------------------------------------------------


def format_fit_report(problem: FitProblem, result: FitResult) -> str:
    """Human-readable fit report: inputs, estimates, covariance, residual table."""
    lines = ["fit report", "=" * 10, "", "inputs"]
    lines.append(f"  measured points: {len(problem.measured)}")
    lo, hi = problem.measured.band
    lines.append(f"  frequency band: {lo / 1e6:.6g} .. {hi / 1e6:.6g} MHz")
    lines.append(f"  layers in template: {len(problem.template.layers)}")
    for p in problem.free:
        lines.append(
            f"  free: {p.name} start {p.initial:.6g} bounds [{p.lower:.6g}, {p.upper:.6g}]"
        )
    lines += ["", "estimates (+- 1 sigma)"]
    for name, value in result.estimates.items():
        lines.append(
            f"  {name} = {value:.8g} +- {result.sigma(name):.3g}"
            f"  [{result.identifiability.get(name, '?')}]"
        )
    lines += ["", f"residual rms: {result.residual_rms:.6g} m/s"]
    lines.append(f"iterations: {result.n_iterations}")
    lines.append(f"status: {result.message}")
    lines += ["", "covariance"]
    names = list(result.estimates)
    lines.append("  " + " ".join(f"{n:>18s}" for n in names))
    for i, name in enumerate(names):
        row = " ".join(f"{result.covariance[i, j]:18.6e}" for j in range(len(names)))
        lines.append(f"  {row}  {name}")
    lines += ["", "residuals"]
    lines.append("  freq_mhz   measured_m_s      model_m_s     delta_m_s")
    dv = residuals(problem, result.estimates) * problem.sigmas
    for i, (f, v) in enumerate(
        zip(problem.measured.frequencies, problem.measured.velocities)
    ):
        lines.append(f"  {f / 1e6:8.3f} {v:14.4f} {v + dv[i]:14.4f} {dv[i]:13.4f}")
    weak = [n for n, f in result.identifiability.items() if f != WELL_DETERMINED]
    if weak:
        lines += ["", f"warning: parameter(s) {', '.join(weak)} are not well determined"]
    return "\n".join(lines) + "\n"


def write_estimates_csv(result: FitResult, path: str | Path) -> None:
    lines = ["parameter,estimate,sigma,flag"]
    for name, value in result.estimates.items():
        lines.append(
            f"{name},{value!r},{result.sigma(name)!r},{result.identifiability.get(name, '')}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
