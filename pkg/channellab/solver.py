import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import integrate, linalg

from channellab import exceptions
from channellab import radial
from channellab.helpers import formatting
from channellab.models import (
    EvolutionProbe,
    GridPolicy,
    OuterEnergy,
    ProbeConfig,
    RadialField,
    RadialGrid,
    WaveState,
)

logger = logging.getLogger(__name__)

PLATEAU_THRESHOLD = 0.2
SNAPSHOT_DENSITY = 4

Forcing = Callable[[float], Union[np.ndarray, RadialField]]


class RadialWaveOperator:
    """-Delta_N + V in flux form on a uniform grid with an origin node.

    Unknowns are the nodes below r_max; the last node carries the boundary trace. With the
    node weights ``weights`` the operator is symmetric, so its spectrum comes from a
    symmetric tridiagonal matrix.
    """

    def __init__(self, grid: RadialGrid, potential: Optional[RadialField], N: int):
        if grid.policy != GridPolicy.UNIFORM or not grid.has_origin:
            raise exceptions.ChannelLabError(
                "The wave solver needs a uniform grid starting at the origin.", "grid", grid.describe()
            )
        h = grid.spacing
        r = grid.nodes
        midpoints = 0.5 * (r[:-1] + r[1:])
        self.N = N
        self.h = h
        self.flux = midpoints ** (N - 1) / h
        weights = r[:-1] ** (N - 1) * h
        # even extension: the origin row reduces to 2N (u1 - u0) / h^2
        weights[0] = (h / 2.0) ** (N - 1) * h / (2.0 * N)
        self.weights = weights
        if potential is None:
            self.V = np.zeros(grid.count - 1)
        else:
            if not potential.grid.matches(grid):
                potential = radial.resample(potential, grid)
            self.V = np.array(potential.values[:-1], dtype=float)
        if not np.all(np.isfinite(self.V)):
            raise exceptions.ChannelLabError("Potential is not finite on the solver grid.", "non-finite")

    def apply(self, u: np.ndarray, boundary: float = 0.0) -> np.ndarray:
        flux = self.flux * np.diff(np.append(u, boundary))
        stiffness = -flux
        stiffness[1:] += flux[:-1]
        return stiffness / self.weights + self.V * u

    def tridiagonal(self):
        left = np.concatenate(([0.0], self.flux[:-1]))
        diagonal = (left + self.flux) / self.weights + self.V
        off = -self.flux[:-1] / np.sqrt(self.weights[:-1] * self.weights[1:])
        return diagonal, off

    def spectrum_bounds(self):
        """(smallest, largest) eigenvalue of the discrete operator."""
        diagonal, off = self.tridiagonal()
        n = diagonal.size
        low = linalg.eigvalsh_tridiagonal(diagonal, off, select="i", select_range=(0, 0))[0]
        high = linalg.eigvalsh_tridiagonal(diagonal, off, select="i", select_range=(n - 1, n - 1))[0]
        return float(low), float(high)

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.weights * a * b))


def _probe_radii(probes) -> List[float]:
    if probes is None:
        return [0.0]
    if isinstance(probes, ProbeConfig):
        return list(probes.radii)
    return [float(r) for r in probes]


def _forcing_values(forcing: Optional[Forcing], t: float, count: int) -> np.ndarray:
    if forcing is None:
        return np.zeros(count - 1)
    value = forcing(t)
    if isinstance(value, RadialField):
        value = value.values
    return np.asarray(value, dtype=float)[: count - 1]


def time_step(operator: RadialWaveOperator, cfl: float, t_max: float, lambda_max: float):
    """Step and step count: cfl * min(dr, 2 / sqrt(lambda_max)), shrunk to divide t_max."""
    if not 0 < cfl <= 1:
        raise exceptions.ChannelLabError("CFL number must lie in (0, 1].", "cfl", {"cfl": cfl})
    limit = operator.h if lambda_max <= 0 else min(operator.h, 2.0 / math.sqrt(lambda_max))
    dt = cfl * limit
    steps = max(int(math.ceil(t_max / dt - 1e-9)), 1)
    return t_max / steps, steps


def exterior_energy_at(state: WaveState, R: float, t_center: float = 0.0, N: Optional[int] = None) -> float:
    """Energy of the state outside the cone radius R + |t - t_center|, up to r_max.

    Args:
        :state (WaveState): Solution at time ``state.t``.
        :R (float): Cone radius at ``t_center``.
        :t_center (float): Tip time of the cone.
        :N (int): Dimension. Required.

    Returns:
        :float: Integral of (v^2 + u'^2) r^(N-1) over the exterior.
    """
    if N is None:
        raise exceptions.ChannelLabError("Dimension is required for exterior energies.", "dimension")
    grid = state.grid
    lo = R + abs(state.t - t_center)
    if lo > grid.r_max:
        raise exceptions.ChannelLabError(
            "The exterior cone left the grid.", "grid", {"r": lo, "r_max": grid.r_max}
        )
    if lo == grid.r_max:
        return 0.0
    density = state.v.values ** 2 + state.u.derivative_values() ** 2
    field = radial.field_from_samples(grid, density)
    return radial.integrate_radial(field, N, lo=lo, hi=grid.r_max)


def _exterior_energies(
        grid: RadialGrid, u: np.ndarray, v: np.ndarray, radii: Sequence[float], elapsed: float, N: int
) -> np.ndarray:
    state = WaveState(
        t=elapsed, u=radial.field_from_samples(grid, u), v=radial.field_from_samples(grid, v)
    )
    return np.array([exterior_energy_at(state, R, 0.0, N) for R in radii])


def evolve(
        initial: WaveState,
        potential: Optional[RadialField],
        N: int,
        t_max: float,
        cfl: float = 0.9,
        probes: Union[ProbeConfig, Sequence[float], None] = None,
        forcing: Optional[Forcing] = None,
        boundary: Optional[Callable[[float], float]] = None,
        direction: int = 1,
        snapshot_stride: int = SNAPSHOT_DENSITY,
        keep_snapshots: bool = False,
) -> EvolutionProbe:
    """Leapfrog evolution of u_tt - Delta_N u + V u = f from ``initial``.

    Probe energies (and snapshots when ``keep_snapshots``) are recorded every
    ``snapshot_stride`` steps and at the final time. ``direction = -1`` runs backwards in time
    from ``initial.t``, which is also the tip of the probe cones.

    Args:
        :initial (WaveState): Data (u0, u1) on a uniform grid with an origin node.
        :potential (RadialField): V, or None for the free wave.
        :N (int): Dimension.
        :t_max (float): Length of the run.
        :cfl (float): Courant number in (0, 1].
        :probes: Probe radii (or a ProbeConfig).
        :forcing: Callable t -> f(t) on the grid nodes, sampled at half steps.
        :boundary: Callable t -> u(t, r_max); homogeneous Dirichlet when None.
        :direction (int): +1 forward, -1 backward.

    Returns:
        :EvolutionProbe: Energies, conserved invariant, optional snapshots and step data.
    """
    if direction not in (1, -1):
        raise exceptions.ChannelLabError("Direction must be +1 or -1.", "config", {"direction": direction})
    grid = initial.grid
    radii = _probe_radii(probes)
    operator = RadialWaveOperator(grid, potential, N)
    margin = max(radii) + t_max + 2 * grid.spacing
    if grid.r_max < margin - 1e-12:
        raise exceptions.ChannelLabError(
            "r_max = %g is inside the causal margin %g." % (grid.r_max, margin),
            "causal-margin",
            {"r_max": grid.r_max, "required": margin},
        )
    lambda_min, lambda_max = operator.spectrum_bounds()
    dt, steps = time_step(operator, cfl, t_max, lambda_max)
    if lambda_min < 0:
        logger.info("operator has a negative eigenvalue %.6g (growth rate %.6g)", lambda_min, math.sqrt(-lambda_min))
    logger.debug("evolving %d steps of %.6g (lambda_max %.6g)", steps, dt, lambda_max)

    t0 = initial.t
    count = grid.count
    u = np.array(initial.u.values[:-1], dtype=float)
    v = direction * np.array(initial.v.values[:-1], dtype=float)

    def clock(tau):
        return t0 + direction * tau

    def trace(tau):
        return 0.0 if boundary is None else float(boundary(clock(tau)))

    def full(values, tau):
        return np.append(values, trace(tau))

    times, energies, conserved = [], [], []
    snapshot_times, snapshots_u, snapshots_v = [], [], []

    def record(step, invariant):
        tau = step * dt
        u_full, v_full = full(u, tau), np.append(direction * v, 0.0)
        times.append(clock(tau))
        energies.append(_exterior_energies(grid, u_full, v_full, radii, tau, N))
        conserved.append(invariant)
        if keep_snapshots:
            snapshot_times.append(clock(tau))
            snapshots_u.append(u_full)
            snapshots_v.append(v_full)

    acceleration = operator.apply(u, trace(0.0))
    record(0, math.nan)
    for step in range(steps):
        tau = step * dt
        source = _forcing_values(forcing, clock(tau + dt / 2), count)
        v_half = v - 0.5 * dt * (acceleration - source)
        u_next = u + dt * v_half
        acceleration = operator.apply(u_next, trace(tau + dt))
        invariant = operator.dot(v_half, v_half) + operator.dot(u, acceleration)
        v = v_half - 0.5 * dt * (acceleration - source)
        u = u_next
        if step == 0:
            conserved[0] = invariant
        if (step + 1) % snapshot_stride == 0 or step + 1 == steps:
            if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
                raise exceptions.ChannelLabError(
                    "Non-finite state at t = %g." % clock(tau + dt),
                    "instability",
                    {"t": clock(tau + dt), "step": step + 1, "dt": dt, "lambda_min": lambda_min},
                )
            record(step + 1, invariant)

    return EvolutionProbe(
        grid=grid,
        times=np.array(times),
        radii=radii,
        energies=np.array(energies),
        conserved=np.array(conserved),
        snapshot_times=snapshot_times,
        snapshots_u=snapshots_u,
        snapshots_v=snapshots_v,
        dt=dt,
        direction=direction,
        t_center=t0,
        lambda_max=lambda_max,
        lambda_min=lambda_min,
    )


def conserved_drift(probe: EvolutionProbe) -> float:
    """Relative spread of the leapfrog invariant over the run."""
    series = probe.conserved
    scale = float(np.max(np.abs(series)))
    if scale == 0:
        return 0.0
    return float((np.max(series) - np.min(series)) / scale)


def _plateau(series: np.ndarray):
    window = series[-max(len(series) // 4, 1):]
    mean = float(np.mean(window))
    if mean <= 0:
        return 0.0, 0.0
    return mean, float((np.max(window) - np.min(window)) / mean)


def estimate_outer_energy(
        probe: EvolutionProbe,
        R: float = 0.0,
        backward: Optional[EvolutionProbe] = None,
        threshold: float = PLATEAU_THRESHOLD,
) -> OuterEnergy:
    """Outer energy as the plateau average over the last quarter of each direction's series.

    Without ``backward`` the run is taken to be even or odd in time, so both directions
    radiate the same energy.
    """
    E_plus, quality_plus = _plateau(probe.energy_series(R))
    if backward is None:
        E_minus, quality_minus = E_plus, quality_plus
    else:
        E_minus, quality_minus = _plateau(backward.energy_series(R))
    if probe.direction == -1:
        E_plus, E_minus = E_minus, E_plus
    quality = max(quality_plus, quality_minus)
    flagged = quality > threshold
    if flagged:
        logger.warning("no plateau at R = %g: relative spread %.3g over the last quarter", R, quality)
    return OuterEnergy(E_minus=E_minus, E_plus=E_plus, plateau_quality=quality, flagged=flagged)


def sup_exterior_energy(probe: EvolutionProbe, R: float) -> float:
    """Sup over recorded times of the exterior energy at R."""
    return float(np.max(probe.energy_series(R)))


def strichartz_pairs(N: int) -> Dict[str, tuple]:
    return {
        "energy": (1.0, 2.0),
        "exterior": (2.0, 2.0 * N / (N - 3)),
        "multisoliton": (2.0 * (N + 1) / (N - 2), 2.0 * (N + 1) / (N - 2)),
    }


def spacetime_cone_norm(
        probe: EvolutionProbe,
        p: float,
        q: float,
        R: float,
        N: int,
        t_center: Optional[float] = None,
        weight: Optional[RadialField] = None,
) -> float:
    """L^p_t L^q_r norm of u (or weight * u) over r > R + |t - t_center|.

    Args:
        :probe (EvolutionProbe): Run recorded with snapshots.
        :p (float): Time exponent.
        :q (float): Space exponent.
        :R (float): Cone radius.
        :N (int): Dimension.
        :t_center (float): Cone tip; the probe's own centre by default.
        :weight (RadialField): Optional multiplier, e.g. a potential for L1 L2 bounds.

    Returns:
        :float: The norm, time integral by Simpson's rule over the snapshot times.
    """
    if p < 1 or q < 1:
        raise exceptions.ChannelLabError("Exponents must be at least 1.", "config", {"p": p, "q": q})
    times = np.asarray(probe.snapshot_times, dtype=float)
    if times.size < 2:
        raise exceptions.ChannelLabError("Space-time norms need recorded snapshots.", "undersampled")
    gaps = np.abs(np.diff(times))
    if np.max(gaps) > SNAPSHOT_DENSITY * probe.dt * (1 + 1e-9):
        raise exceptions.ChannelLabError(
            "Snapshots are %.3g apart, more than %d time steps." % (np.max(gaps), SNAPSHOT_DENSITY),
            "undersampled",
            {"gap": float(np.max(gaps)), "dt": probe.dt},
        )
    grid = probe.grid
    center = probe.t_center if t_center is None else t_center
    multiplier = np.ones(grid.count)
    if weight is not None:
        if not weight.grid.matches(grid):
            weight = radial.resample(weight, grid)
        multiplier = weight.values
    slices = np.zeros(times.size)
    for index, t in enumerate(times):
        lo = R + abs(t - center)
        if lo >= grid.r_max:
            continue
        density = np.abs(multiplier * probe.snapshots_u[index]) ** q
        field = radial.field_from_samples(grid, density)
        slices[index] = max(radial.integrate_radial(field, N, lo=lo, hi=grid.r_max), 0.0) ** (1.0 / q)
    order = np.argsort(times)
    total = integrate.simpson(slices[order] ** p, x=times[order])
    return float(max(total, 0.0) ** (1.0 / p))


def write_probe_csv(probe: EvolutionProbe, path: Union[str, Path]) -> Path:
    """Columns t, R, E_ext, E_conserved; one row per recorded time and probe radius."""
    rows = []
    for i, t in enumerate(probe.times):
        for j, R in enumerate(probe.radii):
            rows.append([float(t), R, float(probe.energies[i, j]), float(probe.conserved[i])])
    return formatting.write_csv(path, ["t", "R", "E_ext", "E_conserved"], rows)


def write_snapshots(probe: EvolutionProbe, directory: Union[str, Path]) -> List[Path]:
    """One (r, u, v) CSV per snapshot."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    r = probe.grid.nodes
    for index, t in enumerate(probe.snapshot_times):
        rows = np.column_stack((r, probe.snapshots_u[index], probe.snapshots_v[index])).tolist()
        path = directory / ("snapshot_%04d.csv" % index)
        formatting.write_csv(path, ["r", "u", "v"], rows)
        logger.debug("wrote snapshot t = %g to %s", t, path)
        paths.append(path)
    return paths
