"""Experiment drivers: seeded ensembles, channel ratios, drift, resonant diagnostics and the worker pool."""

import functools
import logging
import math
import os
from concurrent import futures
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from channellab import exceptions, ground_state, ladder, norms, radial, solver
from channellab.helpers import formatting, timefuncs
from channellab.models import (
    BumpDatum,
    ChannelRecord,
    ChannelReport,
    EvolutionProbe,
    ExperimentConfig,
    GridPolicy,
    NonradiativeMember,
    PotentialSpec,
    PotentialVariant,
    Provenance,
    RadialField,
    RadialGrid,
    ScalingKind,
    Space,
    SpanBasis,
    WaveState,
    ZVariant,
)

logger = logging.getLogger(__name__)

WORKERS_ENV = "CHANNEL_LAB_WORKERS"
DICTIONARY_SIZE = 5
DEGENERATE_DENOMINATOR = 1e-10
DEGENERATE_NUMERATOR = 1e-8
CORE_RADIUS = 0.25
NONRADIATIVE_RADII = (0.5, 1.0, 2.0)
CLOSED_FORM_TOLERANCE = 1e-2
CLOSED_FORM_SAMPLES = 10
Y_TIME_SAMPLES = 16
Y_LATTICE_MIN = 0.1

TOLERANCES = {
    "gram_condition": norms.GRAM_CONDITION_LIMIT,
    "degenerate_denominator": DEGENERATE_DENOMINATOR,
    "degenerate_numerator": DEGENERATE_NUMERATOR,
    "ladder_residual": ladder.LADDER_TOLERANCE,
    "closed_form": CLOSED_FORM_TOLERANCE,
}


# Ensembles


def _bump(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    values = np.zeros_like(x)
    slopes = np.zeros_like(x)
    inside = np.abs(x) < 1
    y = x[inside]
    q = 1.0 - y * y
    values[inside] = np.exp(1.0 - 1.0 / q)
    slopes[inside] = values[inside] * (-2.0 * y / q ** 2)
    return values, slopes


def bump_dictionary(support: Tuple[float, float]) -> List[Tuple[float, float]]:
    """(center, half-width) of the fixed dictionary of smooth bumps inside [a, b]."""
    a, b = support
    centers = [a + (b - a) * (j + 1) / (DICTIONARY_SIZE + 1) for j in range(DICTIONARY_SIZE)]
    return [(c, min(c - a, b - c)) for c in centers]


def _bump_field(terms, support, grid: RadialGrid, factor: float, label: str) -> RadialField:
    if not terms:
        return RadialField.zeros(grid)
    dictionary = bump_dictionary(support)
    r = grid.nodes
    values = np.zeros(grid.count)
    slopes = np.zeros(grid.count)
    for index, coefficient in terms:
        center, width = dictionary[index]
        v, s = _bump((r - center) / width)
        values += coefficient * v
        slopes += coefficient * s / width
    return RadialField(grid=grid, values=factor * values, derivative=factor * slopes, label=label)


def realize_datum(datum: BumpDatum, grid: RadialGrid, N: int) -> WaveState:
    """Samples a datum on a grid with exact derivatives."""
    if datum.kind == "kernel":
        slots = []
        for slot, terms in ((0, datum.u0_terms), (1, datum.u1_terms)):
            if not terms:
                slots.append(RadialField.zeros(grid))
                continue
            kind = ScalingKind.H1_CRITICAL if slot == 0 else ScalingKind.L2_CRITICAL
            member = ground_state.lambda_w_field(N, grid, datum.lam, kind)
            slots.append(member.scale(datum.scale * terms[0][1]))
        return WaveState(t=0.0, u=slots[0], v=slots[1])
    if datum.support[1] > grid.r_max:
        raise exceptions.ChannelLabError(
            "Ensemble support %s leaves the grid." % (datum.support,), "grid", {"r_max": grid.r_max}
        )
    u = _bump_field(datum.u0_terms, datum.support, grid, datum.scale, "u0_%d" % datum.index)
    v = _bump_field(datum.u1_terms, datum.support, grid, datum.scale, "u1_%d" % datum.index)
    return WaveState(t=0.0, u=u, v=v)


def _draw(seed: int, index: int, support, slots: Sequence[int]) -> BumpDatum:
    rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
    terms = {0: [], 1: []}
    for slot in slots:
        count = int(rng.integers(1, DICTIONARY_SIZE + 1))
        chosen = sorted(int(j) for j in rng.choice(DICTIONARY_SIZE, size=count, replace=False))
        terms[slot] = [(j, float(rng.standard_normal())) for j in chosen]
    return BumpDatum(index=index, seed=seed, support=tuple(support), u0_terms=terms[0], u1_terms=terms[1])


def _normalized(datum: BumpDatum, grid: RadialGrid, N: int) -> BumpDatum:
    state = realize_datum(datum, grid, N)
    size = norms.energy_norm(state.u, state.v, N)
    if not size > 0:
        raise exceptions.ChannelLabError("Drawn datum has zero energy norm.", "degenerate", {"index": datum.index})
    return datum.model_copy(update={"scale": datum.scale / size})


def draw_ensemble(
        seed: int,
        count: int,
        support: Tuple[float, float],
        parity_slot: Optional[int],
        grid: RadialGrid,
        N: int,
        include_kernel: bool = False,
        lam: float = 1.0,
) -> List[BumpDatum]:
    """Seeded, unit-normalized data; datum i depends only on (seed, i).

    ``parity_slot`` confines the data to u0 (0) or u1 (1); None fills both slots. With
    ``include_kernel`` a nonempty ensemble is followed by the kernel direction LW in that slot.
    """
    a, b = support
    if not 0 <= a < b or b > grid.r_max:
        raise exceptions.ChannelLabError(
            "Ensemble support %s must lie in [0, r_max]." % (support,), "grid", {"r_max": grid.r_max}
        )
    slots = (0, 1) if parity_slot is None else (parity_slot,)
    data = [_normalized(_draw(seed, index, support, slots), grid, N) for index in range(count)]
    if include_kernel and count:
        slot = 0 if parity_slot is None else parity_slot
        kernel = BumpDatum(
            index=count,
            seed=seed,
            kind="kernel",
            support=tuple(support),
            u0_terms=[(0, 1.0)] if slot == 0 else [],
            u1_terms=[(0, 1.0)] if slot == 1 else [],
            lam=lam,
        )
        data.append(_normalized(kernel, grid, N))
    logger.info("drew %d data (seed %d, slots %s)", len(data), seed, list(slots))
    return data


def generate_ensemble(
        seed: int,
        count: int,
        support: Tuple[float, float],
        parity_slot: Optional[int],
        grid: RadialGrid,
        N: int,
) -> List[WaveState]:
    """Realized ensemble states on ``grid``."""
    return [realize_datum(datum, grid, N) for datum in draw_ensemble(seed, count, support, parity_slot, grid, N)]


def _kernel_trace(datum: BumpDatum, state: WaveState) -> Optional[Callable[[float], float]]:
    if datum.kind != "kernel":
        return None
    u_end, v_end = float(state.u.values[-1]), float(state.v.values[-1])
    return lambda t: u_end + t * v_end


def _ratio(numerator: Optional[float], denominator: Optional[float]) -> Optional[float]:
    if numerator is None or denominator is None or denominator < DEGENERATE_DENOMINATOR:
        return None
    return numerator / denominator


# Context


def potential_spec(config: ExperimentConfig) -> PotentialSpec:
    potential = config.potential
    N = config.dimension
    if potential.kind == "multisoliton":
        return PotentialSpec(N=N, variant=PotentialVariant.MULTISOLITON, lambdas=list(potential.lambdas))
    if potential.kind == "wavemap":
        return PotentialSpec(N=N, variant=PotentialVariant.GENERAL, wavemap=potential.wavemap)
    if potential.kind == "free":
        return PotentialSpec(N=N, variant=PotentialVariant.FREE, lam=potential.lam)
    return PotentialSpec(N=N, variant=PotentialVariant.SINGLE, lam=potential.lam)


class ExperimentContext:
    """Grids, potential, bases and the ladder shared by every item of one config."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.N = config.dimension
        self.profile = config.profile
        self.solver_grid = radial.make_grid(0.0, config.grid.r_max, config.grid.points)
        self.analysis_grid = radial.make_grid(
            config.grid.graded_r_min, config.grid.graded_r_max, config.grid.graded_points, GridPolicy.GRADED_LOG
        )
        self.spec = potential_spec(config)
        self.scales = self.spec.scales
        self.potential = ground_state.assemble_potential(self.spec, self.solver_grid)
        self.gamma, self.geometry = ground_state.separation_gamma(self.scales, config.norm.gamma_exponent)
        self._family = None
        self._bases: Dict[Space, SpanBasis] = {}

    @property
    def family(self):
        if self._family is None:
            self._family = ladder.regularize_T0(ladder.build_ladder(self.N, self.analysis_grid))
        return self._family

    @property
    def probe_radii(self) -> List[float]:
        return sorted(set([0.0] + list(self.config.probes.radii)))

    def basis(self, space: Union[Space, str]) -> SpanBasis:
        space = Space(space)
        if space not in self._bases:
            kind = self.config.potential.kind
            if kind == "free":
                basis = SpanBasis(fields=[], space=space, N=self.N)
            elif kind == "wavemap":
                params = self.config.potential.wavemap
                member = ground_state.wavemap_generator(params.k, params.lam, self.analysis_grid)
                basis = norms.drop_divergent(SpanBasis(fields=[member], space=space, N=self.N, labels=["LU"]))
            elif kind == "multisoliton":
                basis = norms.multisoliton_basis(self.N, self.analysis_grid, self.scales, space)
            else:
                basis = norms.ground_state_basis(self.N, self.analysis_grid, self.scales, space)
            self._bases[space] = basis
        return self._bases[space]

    def evolve(
            self,
            state: WaveState,
            boundary=None,
            direction: int = 1,
            keep_snapshots: bool = False,
            radii: Optional[Sequence[float]] = None,
            potential: Optional[RadialField] = None,
    ) -> EvolutionProbe:
        timing = self.config.time
        return solver.evolve(
            state,
            self.potential if potential is None else potential,
            self.N,
            timing.t_max,
            cfl=timing.cfl,
            probes=self.probe_radii if radii is None else radii,
            boundary=boundary,
            direction=direction,
            snapshot_stride=timing.snapshot_stride,
            keep_snapshots=keep_snapshots,
        )

    def data(self, parity_slot: Optional[int]) -> List[BumpDatum]:
        ensemble = self.config.ensemble
        return draw_ensemble(
            ensemble.seed,
            ensemble.count,
            ensemble.support,
            parity_slot,
            self.solver_grid,
            self.N,
            include_kernel=ensemble.include_kernel and self.config.potential.kind != "free",
            lam=self.scales[0],
        )

    def channel_slot(self) -> Optional[int]:
        ensemble = self.config.ensemble
        if not ensemble.parity:
            return None
        return self.profile.sigma if ensemble.slot is None else ensemble.slot

    # channel and wavemap ratios

    def channel_record(self, datum: BumpDatum, probe_dir: Optional[Path] = None) -> ChannelRecord:
        config = self.config
        N = self.N
        sigma = self.profile.sigma
        state = realize_datum(datum, self.solver_grid, N)
        boundary = _kernel_trace(datum, state)
        forward = self.evolve(state, boundary, 1)
        backward = None if config.ensemble.parity else self.evolve(state, boundary, -1)
        outer = solver.estimate_outer_energy(forward, 0.0, backward, config.probes.plateau_threshold)

        pair_state = realize_datum(datum, self.analysis_grid, N)
        pair = (pair_state.u, pair_state.v)
        main_space = Space.H1_R if sigma == 0 else Space.L2_R
        other_space = Space.L2_R if sigma == 0 else Space.H1_R
        main = norms.project_onto_span(pair, self.basis(main_space))
        other = norms.project_onto_span(pair, self.basis(other_space))
        main_remainder = main.remainder[sigma]
        other_remainder = other.remainder[1 - sigma]
        proj_norm = norms.norm(main_remainder, main_space, N)
        z_target = other_remainder if sigma == 0 else radial.differentiate(other_remainder)
        z_profile = norms.z_norm_profile(
            z_target, config.norm.alpha, N, config.norm.z_variant, lambdas=self.scales
        )
        z_value = z_profile.sup
        multi = config.potential.kind == "multisoliton"
        literal = norms.l2_norm(main_remainder, N) if multi and sigma == 0 else None

        data_norm = norms.energy_norm(state.u, state.v, N)
        denominator = math.sqrt(max(outer.total, 0.0))
        if multi:
            denominator += self.gamma * data_norm
        numerator = proj_norm + z_value
        flags = []
        ratio = None
        if denominator < DEGENERATE_DENOMINATOR or numerator < DEGENERATE_NUMERATOR:
            flags.append("degenerate")
        else:
            ratio = numerator / denominator
        if outer.flagged:
            flags.append("plateau")
        if probe_dir is not None:
            solver.write_probe_csv(forward, Path(probe_dir) / ("probe_%04d.csv" % datum.index))
            if backward is not None:
                solver.write_probe_csv(backward, Path(probe_dir) / ("probe_%04d_minus.csv" % datum.index))
        logger.info("datum %d (%s): E_out %.6g, ratio %s", datum.index, datum.kind, outer.total, ratio)
        return ChannelRecord(
            index=datum.index,
            seed=datum.seed,
            E_out_minus=outer.E_minus,
            E_out_plus=outer.E_plus,
            proj_norm=proj_norm,
            z_norm=z_value,
            ratio=ratio,
            plateau_quality=outer.plateau_quality,
            flags=flags,
            condition_numbers=[main.condition_number, other.condition_number],
            proj_norm_literal=literal,
            z_k_min=z_profile.k_min,
            z_k_max=z_profile.k_max,
        )

    # nonradiative family

    def _to_solver(self, field: RadialField) -> RadialField:
        if not np.any(field.values):
            return RadialField.zeros(self.solver_grid, label=field.label)
        return radial.resample(radial.regularize_core(field, CORE_RADIUS), self.solver_grid)

    def nonradiative_item(self, member: NonradiativeMember, probe_dir: Optional[Path] = None) -> Dict[str, Any]:
        family = self.family
        k, sigma = member.k, member.sigma
        N = self.N
        u0 = self._to_solver(ladder.eval_nonradiative_profile(family, k, sigma, 0.0))
        u1 = self._to_solver(ladder.eval_nonradiative_velocity(family, k, sigma, 0.0))
        r_max = self.solver_grid.r_max
        edge = [float(radial.evaluate(T, np.array([r_max]))[0]) for T in family.T_inf]

        def trace(t):
            return sum(
                edge[k - i] * t ** (2 * i + sigma) / math.factorial(2 * i + sigma) for i in range(k + 1)
            )

        radii = sorted(set(NONRADIATIVE_RADII) | set(self.probe_radii))
        probe = self.evolve(
            WaveState(t=0.0, u=u0, v=u1),
            trace,
            keep_snapshots=True,
            radii=radii,
            potential=ground_state.potential_field(N, self.solver_grid),
        )
        series = probe.energy_series(1.0)
        initial, final = float(series[0]), float(series[-1])
        tail = series[len(series) // 2:]
        monotone = bool(np.all(np.diff(tail) <= 1e-12 * max(initial, 1e-300)))
        decay = final / initial if initial > 0 else 0.0

        error = 0.0
        picks = np.unique(np.linspace(0, len(probe.snapshot_times) - 1, CLOSED_FORM_SAMPLES).astype(int))
        nodes = self.solver_grid.nodes
        for index in picks:
            t = probe.snapshot_times[index]
            mask = (nodes >= 1.0 + abs(t)) & (nodes < r_max)
            if not np.any(mask):
                continue
            exact = radial.evaluate(ladder.eval_nonradiative_profile(family, k, sigma, t), nodes[mask])
            scale = max(float(np.max(np.abs(exact))), 1e-300)
            error = max(error, float(np.max(np.abs(probe.snapshots_u[index][mask] - exact))) / scale)

        flags = []
        if error > CLOSED_FORM_TOLERANCE:
            logger.warning("%s departs from its closed form by %.3g", member.label, error)
            flags.append("closed-form")
        if not member.finite_energy:
            flags.append("infinite-energy")
        if probe_dir is not None:
            solver.write_probe_csv(probe, Path(probe_dir) / ("probe_%s.csv" % member.label))
        return {
            "k": k,
            "sigma": sigma,
            "label": member.label,
            "finite_energy": member.finite_energy,
            "initial_energy": initial,
            "final_energy": final,
            "decay_ratio": decay,
            "monotone": monotone,
            "closed_form_error": error,
            "residual": ladder.nonradiative_residual(family, k, sigma, 1.0),
            "flags": flags,
        }

    def members(self) -> List[NonradiativeMember]:
        family = ladder.nonradiative_family(self.N)
        level, sigma = self.config.level, self.config.sigma
        if level is None:
            return [m for m in family if sigma is None or m.sigma == sigma]
        sigma = 0 if sigma is None else sigma
        chosen = [m for m in family if m.k == level and m.sigma == sigma]
        if not chosen:
            raise exceptions.ChannelLabError(
                "(k=%d, sigma=%d) is not a non-radiative family member for N=%d." % (level, sigma, self.N),
                "level-range",
                {"k": level, "sigma": sigma},
            )
        return chosen

    # kernel drift

    def drift_item(self, j: int, which: str) -> Dict[str, Any]:
        N = self.N
        lam = self.scales[j]
        grid = self.solver_grid
        if which == "phi":
            u0 = RadialField.zeros(grid)
            u1 = ground_state.lambda_w_field(N, grid, lam, ScalingKind.L2_CRITICAL)
        else:
            u0 = ground_state.lambda_w_field(N, grid, lam, ScalingKind.H1_CRITICAL)
            u1 = RadialField.zeros(grid)
        u_end, v_end = float(u0.values[-1]), float(u1.values[-1])
        probe = self.evolve(WaveState(t=0.0, u=u0, v=u1), lambda t: u_end + t * v_end, keep_snapshots=True)
        worst = 0.0
        for index, t in enumerate(probe.snapshot_times):
            du = probe.snapshots_u[index] - (u0.values + t * u1.values)
            dv = probe.snapshots_v[index] - u1.values
            difference = WaveState(
                t=t, u=radial.field_from_samples(grid, du), v=radial.field_from_samples(grid, dv)
            )
            value = math.sqrt(max(solver.exterior_energy_at(difference, 0.0, 0.0, N), 0.0))
            worst = max(worst, value)
        size = norms.energy_norm(u0, u1, N)
        logger.info("drift of %s_%d at lambda %g: %.6g", which, j, lam, worst)
        return {"j": j, "lambda": lam, "kind": which, "drift": worst, "relative": worst / size, "gamma": self.gamma}

    # resonant diagnostics

    def _y_norm(self, probe: EvolutionProbe, density: int) -> float:
        family = self.family
        cache: Dict[float, SpanBasis] = {}

        def factory(rho):
            if rho not in cache:
                cache[rho] = norms.exterior_basis(family, rho, sigma=0)
            return cache[rho]

        top = self.config.ensemble.support[1] + self.config.time.t_max
        decades = math.log10(top / Y_LATTICE_MIN)
        lattice = list(np.geomspace(Y_LATTICE_MIN, top, max(int(math.ceil(decades * density)), 2)))
        count = len(probe.snapshot_times)
        picks = sorted(set(np.linspace(0, count - 1, min(Y_TIME_SAMPLES, count)).astype(int)))
        thinned = probe.model_copy(
            update={
                "snapshot_times": [probe.snapshot_times[i] for i in picks],
                "snapshots_u": [probe.snapshots_u[i] for i in picks],
                "snapshots_v": [probe.snapshots_v[i] for i in picks],
            }
        )
        return norms.tilde_y_norm(thinned, factory, lattice)

    def resonant_item(self, datum: BumpDatum, probe_dir: Optional[Path] = None) -> Tuple[ChannelRecord, Dict[str, Any]]:
        config = self.config
        N = self.N
        zero_mod_four = N % 4 == 0
        state = realize_datum(datum, self.solver_grid, N)
        probe = self.evolve(state, _kernel_trace(datum, state), keep_snapshots=zero_mod_four)
        outer = solver.estimate_outer_energy(probe, 0.0, None, config.probes.plateau_threshold)

        pair = realize_datum(datum, self.analysis_grid, N)
        l2 = norms.ground_state_basis(N, self.analysis_grid, (1.0,), Space.L2_R)
        h1 = norms.ground_state_basis(N, self.analysis_grid, (1.0,), Space.H1_R)
        u1_perp = norms.project_onto_span(pair.v, l2).remainder
        u0_perp = norms.project_onto_span(pair.u, h1).remainder
        z4_profile = norms.z_norm_profile(u1_perp, -4.0, N, ZVariant.PLAIN)
        z4 = z4_profile.sup
        z2 = norms.z_norm(norms.averaging_transform(u1_perp), -2.0, N, ZVariant.PLAIN)
        z3_profile = norms.z_norm_profile(radial.differentiate(u0_perp), -3.0, N, ZVariant.PLAIN)
        z3 = z3_profile.sup

        y_value = y_refined = None
        if zero_mod_four:
            y_value = self._y_norm(probe, config.norm.lattice_density)
            y_refined = self._y_norm(probe, 2 * config.norm.lattice_density)
        root_energy = math.sqrt(max(outer.total, 0.0))
        other_profile = z4_profile if zero_mod_four else z3_profile
        other_part = other_profile.sup
        chains = {
            "index": datum.index,
            "kind": datum.kind,
            "y_norm": y_value,
            "y_refined": y_refined,
            "y_lattice_change": _ratio(
                None if y_value is None else abs(y_refined - y_value), y_value
            ),
            "averaged_z2": z2,
            "z4": z4,
            "gradient_z3": z3,
            "averaged_over_y": _ratio(z2, y_value) if zero_mod_four and N >= 12 else None,
            "z4_over_averaged_plus_y": _ratio(z4, None if y_value is None else z2 + y_value),
            "other_part_over_root_energy": _ratio(other_part, root_energy),
        }
        flags = []
        if other_part < DEGENERATE_NUMERATOR or root_energy < DEGENERATE_DENOMINATOR:
            flags.append("degenerate")
        if outer.flagged:
            flags.append("plateau")
        if probe_dir is not None:
            solver.write_probe_csv(probe, Path(probe_dir) / ("probe_%04d.csv" % datum.index))
        record = ChannelRecord(
            index=datum.index,
            seed=datum.seed,
            E_out_minus=outer.E_minus,
            E_out_plus=outer.E_plus,
            proj_norm=0.0 if y_value is None else y_value,
            z_norm=other_part,
            ratio=None if "degenerate" in flags else chains["other_part_over_root_energy"],
            plateau_quality=outer.plateau_quality,
            flags=flags,
            z_k_min=other_profile.k_min,
            z_k_max=other_profile.k_max,
        )
        return record, chains


@functools.lru_cache(maxsize=4)
def _context(config_json: str) -> ExperimentContext:
    return ExperimentContext(ExperimentConfig.model_validate_json(config_json))


def context_for(config: ExperimentConfig) -> ExperimentContext:
    return _context(config.model_dump_json(by_alias=True))


# Workers (module level so the process pool can pickle them)


def _channel_worker(job):
    config_json, datum, probe_dir = job
    return _context(config_json).channel_record(datum, probe_dir)


def _nonradiative_worker(job):
    config_json, member, probe_dir = job
    return _context(config_json).nonradiative_item(member, probe_dir)


def _drift_worker(job):
    config_json, j, which = job
    return _context(config_json).drift_item(j, which)


def _resonant_worker(job):
    config_json, datum, probe_dir = job
    return _context(config_json).resonant_item(datum, probe_dir)


def resolve_workers(requested: Optional[int] = None) -> int:
    """Worker count: the request (default all cores), capped by CHANNEL_LAB_WORKERS."""
    workers = requested if requested else (os.cpu_count() or 1)
    cap = os.environ.get(WORKERS_ENV)
    if cap:
        try:
            workers = min(workers, max(int(cap), 1))
        except ValueError:
            logger.warning("ignoring %s=%r: not an integer", WORKERS_ENV, cap)
    return max(int(workers), 1)


def _map(worker, jobs: List[Any], workers: int) -> List[Any]:
    if workers <= 1 or len(jobs) <= 1:
        return [worker(job) for job in jobs]
    with futures.ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as executor:
        return list(executor.map(worker, jobs))


# Runner


def _summary_of(records: Sequence[ChannelRecord]) -> Dict[str, Any]:
    included = [r.ratio for r in records if not r.excluded and r.ratio is not None]
    k_mins = [r.z_k_min for r in records if r.z_k_min is not None]
    k_maxs = [r.z_k_max for r in records if r.z_k_max is not None]
    return {
        "count": len(records),
        "included": len(included),
        "excluded": len(records) - len(included),
        "max_ratio": max(included) if included else None,
        "median_ratio": float(np.median(included)) if included else None,
        "k_min": min(k_mins) if k_mins else None,
        "k_max": max(k_maxs) if k_maxs else None,
    }


class ExperimentRunner:
    """Runs one configured experiment and writes ``report.json`` and ``records.csv``."""

    def __init__(self, config: ExperimentConfig, out_dir: Union[str, Path], workers: Optional[int] = None):
        self.config = config
        self.out_dir = Path(out_dir)
        self.workers = resolve_workers(workers)
        self.config_json = config.model_dump_json(by_alias=True)
        self.context = _context(self.config_json)

    @property
    def probe_dir(self) -> Path:
        return self.out_dir / "probes"

    def run(self) -> ChannelReport:
        start = timefuncs.start_clock()
        handlers = {
            "ladder": self._ladder,
            "nonradiative": self._nonradiative,
            "channel": self._channel,
            "wavemap": self._wavemap,
            "drift": self._drift,
            "resonant": self._resonant,
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        logger.info("running %s for N = %d with %d workers", self.config.experiment, self.config.dimension, self.workers)
        records, summary = handlers[self.config.experiment]()
        summary = dict(summary)
        summary.setdefault("dimension", self.config.dimension)
        context = self.context
        provenance = Provenance(
            config_hash=formatting.config_hash(self.config.model_dump(mode="json", by_alias=True)),
            grid={"solver": context.solver_grid.describe(), "analysis": context.analysis_grid.describe()},
            tolerances=dict(TOLERANCES),
            created_at=timefuncs.utc_stamp(),
            duration_seconds=timefuncs.elapsed_seconds(start),
        )
        return ChannelReport(
            experiment=self.config.experiment, records=records, summary=summary, provenance=provenance
        )

    def write(self, report: ChannelReport) -> Dict[str, Path]:
        paths = {"report": formatting.write_json(self.out_dir / "report.json", report.model_dump())}
        if report.experiment in ("channel", "wavemap", "resonant"):
            paths["records"] = formatting.write_csv(
                self.out_dir / "records.csv", ChannelRecord.CSV_HEADER, [r.csv_row() for r in report.records]
            )
        return paths

    def _ratio_summary(self, records) -> Dict[str, Any]:
        context = self.context
        summary = _summary_of(records)
        summary.update(
            {
                "gamma": context.gamma,
                "R_plus": context.geometry.R_plus,
                "R_minus": context.geometry.R_minus,
                "alpha": self.config.norm.alpha,
                "z_variant": ZVariant(self.config.norm.z_variant).value,
                "slot": context.channel_slot(),
            }
        )
        return summary

    def _ladder(self):
        family = self.context.family
        written = ladder.export_ladder(family, self.out_dir / "ladder")
        summary = {
            "top": family.top,
            "residuals": family.residuals,
            "exponents": family.exponents,
            "sup_norms": family.sup_norms,
            "e1_fitted": family.e1_fitted,
            "decomposition_residuals": family.decomposition_residuals,
            "files": sorted(str(path) for path in written.values()),
        }
        return [], summary

    def _nonradiative(self):
        self.probe_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(self.config_json, member, self.probe_dir) for member in self.context.members()]
        items = _map(_nonradiative_worker, jobs, self.workers)
        return [], {"members": items}

    def _channel(self):
        if self.config.potential.kind == "wavemap":
            raise exceptions.ChannelLabError("Use the wavemap experiment for wave-map potentials.", "config")
        return self._ratios()

    def _wavemap(self):
        if self.config.potential.kind != "wavemap":
            raise exceptions.ChannelLabError("The wavemap experiment needs a wave-map potential.", "config")
        return self._ratios()

    def _ratios(self):
        self.probe_dir.mkdir(parents=True, exist_ok=True)
        data = self.context.data(self.context.channel_slot())
        jobs = [(self.config_json, datum, self.probe_dir) for datum in data]
        records = _map(_channel_worker, jobs, self.workers)
        return records, self._ratio_summary(records)

    def _drift_pass(self, config: ExperimentConfig) -> List[Dict[str, Any]]:
        config_json = config.model_dump_json(by_alias=True)
        count = len(config.potential.scales)
        jobs = [(config_json, j, which) for j in range(count) for which in ("phi", "psi")]
        return _map(_drift_worker, jobs, self.workers)

    def _drift(self):
        config = self.config
        if config.potential.kind != "multisoliton":
            raise exceptions.ChannelLabError("Drift needs a multisoliton potential.", "config")
        items = self._drift_pass(config)
        gamma = self.context.gamma
        lambdas = list(config.potential.lambdas)
        # each adjacent ratio shrinks by 2**(-1/e), so gamma halves
        stretched = [lam * 2.0 ** (-j / config.norm.gamma_exponent) for j, lam in enumerate(lambdas)]
        halved = config.with_overrides(
            potential=dict(config.potential.model_dump(mode="json", by_alias=True), lambdas=stretched)
        )
        refined = self._drift_pass(halved)
        halved_gamma = _context(halved.model_dump_json(by_alias=True)).gamma
        worst = max(item["relative"] for item in items)
        worst_refined = max(item["relative"] for item in refined)
        summary = {
            "gamma": gamma,
            "items": items,
            "max_relative_drift": worst,
            "drift_over_gamma": _ratio(worst, gamma),
            "refined_gamma": halved_gamma,
            "refined_items": refined,
            "refined_max_relative_drift": worst_refined,
            "refined_drift_over_gamma": _ratio(worst_refined, halved_gamma),
        }
        return [], summary

    def _resonant(self):
        config = self.config
        N = config.dimension
        slot = 1 if N % 4 == 0 else 0
        if config.ensemble.slot is not None and config.ensemble.slot != slot:
            raise exceptions.ChannelLabError(
                "Resonant diagnostics for N = %d use data in slot %d." % (N, slot), "parity", {"slot": slot}
            )
        self.probe_dir.mkdir(parents=True, exist_ok=True)
        data = self.context.data(slot)
        jobs = [(self.config_json, datum, self.probe_dir) for datum in data]
        results = _map(_resonant_worker, jobs, self.workers)
        records = [record for record, _ in results]
        summary = _summary_of(records)
        summary.update({"slot": slot, "chains": [chains for _, chains in results]})
        return records, summary


def run_config(
        config: ExperimentConfig, out_dir: Union[str, Path], workers: Optional[int] = None
) -> Tuple[ChannelReport, Dict[str, Path]]:
    """Runs ``config`` and writes its outputs under ``out_dir``."""
    runner = ExperimentRunner(config, out_dir, workers)
    report = runner.run()
    return report, runner.write(report)


def channel_experiment(config: ExperimentConfig, out_dir: Union[str, Path], workers: Optional[int] = None) -> ChannelReport:
    """Measures the exterior energy ratio over the configured ensemble."""
    return run_config(config.with_overrides(experiment="channel"), out_dir, workers)[0]


def nonradiative_experiment(
        config: ExperimentConfig, k: int, sigma: int, out_dir: Union[str, Path], workers: Optional[int] = None
) -> ChannelReport:
    """Evolves the non-radiative member ``(k, sigma)`` and compares it with its closed form."""
    overrides = {"experiment": "nonradiative", "level": k, "sigma": sigma}
    return run_config(config.with_overrides(**overrides), out_dir, workers)[0]


def drift_experiment(config: ExperimentConfig, out_dir: Union[str, Path], workers: Optional[int] = None) -> ChannelReport:
    return run_config(config.with_overrides(experiment="drift"), out_dir, workers)[0]


def resonant_diagnostic(config: ExperimentConfig, out_dir: Union[str, Path], workers: Optional[int] = None) -> ChannelReport:
    return run_config(config.with_overrides(experiment="resonant"), out_dir, workers)[0]
