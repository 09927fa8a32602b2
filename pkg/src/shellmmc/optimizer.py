"""Method-of-moving-asymptotes driver for the compliance problem.

One volume constraint, box bounds, scaled design variables. The separable
MMA subproblem is solved through its dual: with a single constraint the
dual is one-dimensional and concave, so a bisection on the multiplier is
exact, deterministic and derivative-free.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .components import ComponentSet
from .errors import ConfigError, ShellMmcError
from .vtkio import atomic_write_text

DESIGN_FORMAT = "shellmmc design 1"


@dataclass
class MmaOptions:
    move_limit: float = 0.2       # absolute, in scaled units
    asy_init: float = 0.5
    asy_incr: float = 1.2
    asy_decr: float = 0.7
    asy_min: float = 0.01         # asymptote clamps, x range units
    asy_max: float = 10.0
    albefa: float = 0.1
    raa0: float = 1e-5
    lam_max: float = 1e12


@dataclass
class OptimizerOptions:
    tolerance: float = 1e-4
    max_iterations: int = 300
    mma: MmaOptions = field(default_factory=MmaOptions)
    checkpoint_every: int = 10
    feasibility_slack: float = 1e-6


@dataclass
class OptimizationState:
    """Mutable loop state in scaled variables."""

    x: np.ndarray
    iteration: int = 0
    x_old1: np.ndarray = None
    x_old2: np.ndarray = None
    low: np.ndarray = None
    upp: np.ndarray = None
    C_history: list = field(default_factory=list)
    V_history: list = field(default_factory=list)
    delta_history: list = field(default_factory=list)


def _pq(df, ux2, xl2, range_inv, raa0):
    plus = np.maximum(df, 0.0)
    minus = np.maximum(-df, 0.0)
    reg = 0.001 * (plus + minus) + raa0 * range_inv
    return (plus + reg) * ux2, (minus + reg) * xl2


def mma_update(x, xmin, xmax, df0, g, dg, state, opts):
    """One MMA step for minimize f s.t. g <= 0, xmin <= x <= xmax.

    Returns the new point; asymptotes are kept on ``state``.
    """
    n = len(x)
    xrange = np.maximum(xmax - xmin, 1e-12)
    if state.x_old2 is None or state.low is None:
        low = x - opts.asy_init * xrange
        upp = x + opts.asy_init * xrange
    else:
        z = (x - state.x_old1) * (state.x_old1 - state.x_old2)
        factor = np.ones(n)
        factor[z > 0] = opts.asy_incr
        factor[z < 0] = opts.asy_decr
        low = x - factor * (state.x_old1 - state.low)
        upp = x + factor * (state.upp - state.x_old1)
        low = np.clip(low, x - opts.asy_max * xrange, x - opts.asy_min * xrange)
        upp = np.clip(upp, x + opts.asy_min * xrange, x + opts.asy_max * xrange)
    state.low, state.upp = low, upp

    alfa = np.maximum.reduce(
        [xmin, low + opts.albefa * (x - low), x - opts.move_limit]
    )
    beta = np.minimum.reduce(
        [xmax, upp - opts.albefa * (upp - x), x + opts.move_limit]
    )

    ux2 = (upp - x) ** 2
    xl2 = (x - low) ** 2
    range_inv = 1.0 / xrange
    p0, q0 = _pq(df0, ux2, xl2, range_inv, opts.raa0)
    if g > 0 and not np.any(dg):
        raise ShellMmcError(
            "infeasible MMA subproblem: constraint violated with zero gradient"
        )
    p1, q1 = _pq(dg, ux2, xl2, range_inv, opts.raa0)
    # r1 makes the approximated constraint exact at x
    r1 = g - float((p1 / (upp - x)).sum() + (q1 / (x - low)).sum())

    def x_of(lam):
        sp = np.sqrt(p0 + lam * p1)
        sq = np.sqrt(q0 + lam * q1)
        return np.clip((sp * low + sq * upp) / (sp + sq), alfa, beta)

    def g_tilde(lam):
        xs = x_of(lam)
        return r1 + float((p1 / (upp - xs)).sum() + (q1 / (xs - low)).sum())

    if g_tilde(0.0) <= 0.0:
        return x_of(0.0)
    hi = 1.0
    while g_tilde(hi) > 0.0 and hi < opts.lam_max:
        hi *= 10.0
    if g_tilde(hi) > 0.0:
        # constraint unreachable inside the move limits; least-violating point
        return x_of(hi)
    lo = 0.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if g_tilde(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return x_of(hi)


def converged(state, tol, max_iterations):
    """(stop, reason): scaled design change below tol, or iteration cap."""
    if state.iteration >= max_iterations:
        return True, "max-iterations"
    if state.delta_history and state.delta_history[-1] < tol:
        return True, "tolerance"
    return False, ""


# The quadratic thickness profile stays positive over the whole component
# span iff t3 >= (sqrt(t1) - sqrt(t2))^2 / 4; floors alone do not guarantee
# this, so updates are projected back onto the feasible set.
PROFILE_SAFETY = 1.02


def project_profile_feasibility(D, counts):
    D = np.asarray(D, dtype=float).copy()
    pos = 0
    for n in counts:
        for i in range(n):
            base = pos + 7 * i
            t1, t2, t3 = D[base + 4], D[base + 5], D[base + 6]
            need = PROFILE_SAFETY * 0.25 * (np.sqrt(t1) - np.sqrt(t2)) ** 2
            if t3 < need:
                D[base + 6] = need
        pos += 7 * n
    return D


# ---------------------------------------------------------------------------
# design / checkpoint files


def write_design(path, x):
    lines = [DESIGN_FORMAT, str(len(x))]
    lines += [repr(float(v)) for v in x]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_design(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    if not lines or lines[0] != DESIGN_FORMAT:
        raise ConfigError(f"{path}: not a '{DESIGN_FORMAT}' file")
    n = int(lines[1])
    vals = [float(v) for v in lines[2 : 2 + n] if v]
    if len(vals) != n:
        raise ConfigError(f"{path}: expected {n} variables, found {len(vals)}")
    return np.asarray(vals)


def _state_path(checkpoint_path):
    return checkpoint_path + ".state.json"


def write_checkpoint(path, state):
    write_design(path, state.x)
    payload = {
        "iteration": state.iteration,
        "x": state.x.tolist(),
        "x_old1": None if state.x_old1 is None else state.x_old1.tolist(),
        "x_old2": None if state.x_old2 is None else state.x_old2.tolist(),
        "low": None if state.low is None else state.low.tolist(),
        "upp": None if state.upp is None else state.upp.tolist(),
        "C_history": state.C_history,
        "V_history": state.V_history,
        "delta_history": state.delta_history,
    }
    atomic_write_text(_state_path(path), json.dumps(payload))


def read_checkpoint(path):
    sp = _state_path(path)
    if os.path.exists(sp):
        with open(sp) as fh:
            d = json.load(fh)
        arr = lambda v: None if v is None else np.asarray(v, dtype=float)
        state = OptimizationState(
            x=np.asarray(d["x"], dtype=float),
            iteration=int(d["iteration"]),
            x_old1=arr(d["x_old1"]),
            x_old2=arr(d["x_old2"]),
            low=arr(d["low"]),
            upp=arr(d["upp"]),
            C_history=list(d["C_history"]),
            V_history=list(d["V_history"]),
            delta_history=list(d["delta_history"]),
        )
        return state
    return OptimizationState(x=read_design(path))


# ---------------------------------------------------------------------------
# the loop


@dataclass
class OptimizationResult:
    design: ComponentSet
    status: str  # "tolerance" | "max-iterations"
    iterations: int
    compliance: float
    volume: float
    history_rows: list
    state: OptimizationState


def history_header(with_band_stats):
    head = "iter,compliance,volume_fraction,max_scaled_delta"
    if with_band_stats:
        head += ",kept_elements,kept_dofs,active_components,fallback_flag"
    return head


def optimize(
    model,
    design0,
    options=None,
    out_dir=None,
    resume_state=None,
    on_iteration=None,
):
    """Run the evaluate / sensitivities / MMA loop until convergence.

    Writes ``history.csv`` and periodic ``checkpoint.txt`` files into
    ``out_dir`` when given. Returns the final design and history.
    """
    options = options or OptimizerOptions()
    counts = design0.counts
    space = model.design_space(counts)
    scales = space.scales
    xmin = space.lower / scales
    xmax = space.upper / scales

    if resume_state is not None:
        state = resume_state
        if state.x.shape != (space.n_variables,):
            raise ConfigError(
                f"resume state has {state.x.size} variables, "
                f"the configured layout needs {space.n_variables}"
            )
    else:
        x0 = design0.flatten() / scales
        if (x0 < xmin - 1e-12).any() or (x0 > xmax + 1e-12).any():
            raise ConfigError("initial design violates its box bounds")
        state = OptimizationState(x=np.clip(x0, xmin, xmax))

    rows = []
    band_stats = model.dof_removal
    history_path = os.path.join(out_dir, "history.csv") if out_dir else None

    def flush_history():
        if history_path is None:
            return
        text = history_header(band_stats) + "\n" + "".join(r + "\n" for r in rows)
        atomic_write_text(history_path, text)

    while True:
        design = ComponentSet.from_flat(state.x * scales, counts)
        res = model.evaluate(design, with_gradients=True)

        stop, reason = converged(state, options.tolerance, options.max_iterations)
        if stop and (
            reason == "max-iterations"
            or res.volume <= model.volume_bound + options.feasibility_slack
        ):
            status = reason
            final = res
            break

        df0 = res.dC * scales
        g = res.volume - model.volume_bound
        dg = res.dV * scales
        xnew = mma_update(state.x, xmin, xmax, df0, g, dg, state, options.mma)
        xnew = project_profile_feasibility(xnew * scales, counts) / scales
        delta = float(np.abs(xnew - state.x).max())

        state.iteration += 1
        state.C_history.append(res.compliance)
        state.V_history.append(res.volume)
        state.delta_history.append(delta)
        row = f"{state.iteration},{res.compliance!r},{res.volume!r},{delta!r}"
        if band_stats:
            band = res.band
            row += (
                f",{len(band.kept_elements)},{band.n_kept_dofs},"
                f"{len(band.active_components)},{int(band.fallback)}"
            )
        rows.append(row)
        flush_history()
        if on_iteration is not None:
            on_iteration(state, res)

        state.x_old2 = state.x_old1
        state.x_old1 = state.x
        state.x = xnew

        if out_dir and options.checkpoint_every > 0:
            if state.iteration % options.checkpoint_every == 0:
                write_checkpoint(os.path.join(out_dir, "checkpoint.txt"), state)

    final_design = ComponentSet.from_flat(state.x * scales, counts)
    if out_dir:
        write_design(os.path.join(out_dir, "design.txt"), state.x)
        flush_history()
    return OptimizationResult(
        final_design,
        status,
        state.iteration,
        final.compliance,
        final.volume,
        rows,
        state,
    )
