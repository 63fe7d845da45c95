import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from channellab import exceptions
from channellab import ground_state
from channellab import radial
from channellab.models import (
    CutoffProfile,
    DimensionProfile,
    EvolutionProbe,
    GridPolicy,
    LadderFamily,
    PowerTail,
    Projection,
    RadialField,
    RadialGrid,
    ScalingKind,
    ShellProfile,
    Space,
    SpanBasis,
    TailEnd,
    ZVariant,
)

logger = logging.getLogger(__name__)

GRAM_CONDITION_LIMIT = 1e12
SHELL_MARGIN = 40
MIN_SHELL_DECADES = 8.0
DESCENT_TOLERANCE = 1e-6
MAX_DESCENT_SWEEPS = 200

FieldOrPair = Union[RadialField, Tuple[RadialField, RadialField]]


def bracket(x):
    """<x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.square(x))


# Exterior inner products


def inner_product(f: RadialField, g: RadialField, space: Union[Space, str], N: int, R: float = 0.0) -> float:
    """Exterior inner product on (R, inf): f'g' for H1_R, fg for L2_R, both against r^(N-1) dr.

    Args:
        :f (RadialField): First field.
        :g (RadialField): Second field, on the same grid.
        :space (Space): ``H1_R`` or ``L2_R``.
        :N (int): Dimension.
        :R (float): Cut radius.

    Returns:
        :float: The inner product, tails closed analytically.
    """
    if Space(space) == Space.H1_R:
        f, g = radial.differentiate(f), radial.differentiate(g)
    return radial.integrate_radial(f.multiply(g), N, lo=R)


def norm(f: RadialField, space: Union[Space, str], N: int, R: float = 0.0) -> float:
    return math.sqrt(max(inner_product(f, f, space, N, R), 0.0))


def l2_norm(f: RadialField, N: int, R: float = 0.0) -> float:
    return norm(f, Space.L2_R, N, R)


def h1_norm(f: RadialField, N: int, R: float = 0.0) -> float:
    return norm(f, Space.H1_R, N, R)


def energy_norm(u0: RadialField, u1: RadialField, N: int, R: float = 0.0) -> float:
    """Norm of (u0, u1) in H1_R x L2_R."""
    return math.hypot(h1_norm(u0, N, R), l2_norm(u1, N, R))


# Dyadic shells and the Z family


def _shell_edges(f: RadialField, variant: ZVariant, R: float) -> Tuple[np.ndarray, int, int]:
    grid = f.grid
    lowest = float(grid.nodes[grid.first_positive])
    top = grid.r_max
    below = f.zero_tail is not None or grid.has_origin or grid.policy == GridPolicy.GRADED_LOG
    above = f.inf_tail is not None or f.is_compact
    if not (below and above) and math.log10(top / lowest) < MIN_SHELL_DECADES:
        raise exceptions.ChannelLabError(
            "Too few dyadic shells: the grid spans %.2f decades and tails are missing."
            % math.log10(top / lowest),
            "undersampled",
            {"label": f.label},
        )
    k_min = math.floor(math.log2(lowest)) - SHELL_MARGIN if below else math.ceil(math.log2(lowest))
    if f.inf_tail is not None:
        k_max = math.ceil(math.log2(top)) + SHELL_MARGIN
    elif f.is_compact:
        k_max = math.ceil(math.log2(top)) - 1
    else:
        k_max = math.floor(math.log2(top)) - 1
    if variant == ZVariant.BASED and R > 0:
        # shells 2^k with 2^k >= R
        k_min = max(k_min, math.ceil(math.log2(R)))
        k_max = max(k_max, k_min)
    ks = np.arange(k_min, k_max + 2)
    edges = np.ldexp(1.0, ks)
    return edges, k_min, k_max


def _shell_weights(
        radii: np.ndarray, alpha: float, N: int, variant: ZVariant, R: float, lambdas: Sequence[float]
) -> np.ndarray:
    if variant == ZVariant.COMPAT:
        distance = np.min([bracket(radii / lam) for lam in lambdas], axis=0)
        return radii ** (-3.0 - alpha) / distance
    power = radii ** (-N / 2.0 - alpha)
    if variant == ZVariant.PLAIN:
        return power / bracket(np.log(radii))
    if variant == ZVariant.BASED:
        return power / bracket(np.log(radii / bracket(R)))
    distance = np.min([bracket(np.log(radii / lam)) for lam in lambdas], axis=0)
    return power / distance


def _z_setup(f, alpha, N, variant, R, lambdas):
    variant = ZVariant(variant)
    lambdas = [1.0] if not lambdas else [float(lam) for lam in lambdas]
    edges, k_min, k_max = _shell_edges(f, variant, R)
    weights = _shell_weights(edges[:-1], alpha, N, variant, R, lambdas)
    return variant, edges, k_min, k_max, weights


def z_norm_profile(
        f: RadialField,
        alpha: float,
        N: int,
        variant: Union[ZVariant, str] = ZVariant.PLAIN,
        R: float = 0.0,
        lambdas: Optional[Sequence[float]] = None,
) -> ShellProfile:
    """Weighted L2 mass of f on every dyadic shell [rho, 2 rho].

    Shells reach 40 octaves past the grid wherever a tail (or compact support) describes f;
    ``based`` shells start at the first power of two at or above R.
    """
    variant, edges, k_min, k_max, weights = _z_setup(f, alpha, N, variant, R, lambdas)
    masses = radial.shell_integrals(f.multiply(f), N, edges)
    values = weights * np.sqrt(np.maximum(masses, 0.0))
    logger.debug("Z profile of %s: shells 2^%d..2^%d, variant %s", f.label or "field", k_min, k_max, variant.value)
    return ShellProfile(radii=edges[:-1].tolist(), values=values.tolist(), k_min=k_min, k_max=k_max)


def z_norm(
        f: RadialField,
        alpha: float,
        N: int,
        variant: Union[ZVariant, str] = ZVariant.PLAIN,
        R: float = 0.0,
        lambdas: Optional[Sequence[float]] = None,
) -> float:
    return z_norm_profile(f, alpha, N, variant, R, lambdas).sup


# Projections


def _match_grid(target: RadialField, grid: RadialGrid) -> RadialField:
    if target.grid.matches(grid):
        return target
    logger.debug("resampling %s onto the basis grid", target.label or "field")
    return radial.resample(target, grid)


def gram_matrix(basis: SpanBasis) -> np.ndarray:
    size = len(basis.fields)
    gram = np.zeros((size, size))
    for i in range(size):
        for j in range(i, size):
            gram[i, j] = gram[j, i] = inner_product(basis.fields[i], basis.fields[j], basis.space, basis.N, basis.R)
    return gram


def project_onto_span(f: FieldOrPair, basis: SpanBasis) -> Projection:
    """Orthogonal projection onto the complement of ``basis`` in its exterior space.

    Pair inputs project u0 for H1_R bases and u1 for L2_R bases; the other slot passes
    through untouched.
    """
    pair = isinstance(f, tuple)
    slot = 0 if basis.space == Space.H1_R else 1
    target = f[slot] if pair else f
    if not basis.fields:
        return Projection(
            coefficients=np.zeros(0), remainder=f, condition_number=1.0, labels=[], space=basis.space
        )
    target = _match_grid(target, basis.fields[0].grid)
    gram = gram_matrix(basis)
    diagonal = np.diag(gram)
    if np.any(diagonal <= 0):
        raise exceptions.ChannelLabError(
            "Basis member with vanishing norm.", "gram-condition", {"labels": basis.labels}
        )
    scale = 1.0 / np.sqrt(diagonal)
    normalized = gram * np.outer(scale, scale)
    condition = float(np.linalg.cond(normalized))
    if not condition <= GRAM_CONDITION_LIMIT:
        raise exceptions.ChannelLabError(
            "Gram matrix condition number %.3g exceeds %.0e." % (condition, GRAM_CONDITION_LIMIT),
            "gram-condition",
            {"condition_number": condition, "labels": basis.labels},
        )
    rhs = np.array([inner_product(target, b, basis.space, basis.N, basis.R) for b in basis.fields]) * scale
    try:
        solution = linalg.cho_solve(linalg.cho_factor(normalized), rhs)
    except linalg.LinAlgError as error:
        raise exceptions.ChannelLabError(
            "Gram matrix is not positive definite.", "gram-condition", {"condition_number": condition}
        ) from error
    coefficients = solution * scale
    remainder = target
    for c, member in zip(coefficients, basis.fields):
        remainder = remainder - member.scale(c)
    remainder = remainder.relabel("perp(%s)" % target.label if target.label else "perp")
    if pair:
        remainder = (remainder, f[1]) if slot == 0 else (f[0], remainder)
    return Projection(
        coefficients=coefficients,
        remainder=remainder,
        condition_number=condition,
        labels=list(basis.labels),
        space=basis.space,
    )


def projected_norm(f: FieldOrPair, basis: SpanBasis) -> float:
    """Norm of the projected remainder in the basis space on (R, inf)."""
    projection = project_onto_span(f, basis)
    remainder = projection.remainder
    if isinstance(remainder, tuple):
        remainder = remainder[0 if basis.space == Space.H1_R else 1]
    return norm(remainder, basis.space, basis.N, basis.R)


# Bases


def _space_for(sigma: int) -> Space:
    return Space.H1_R if sigma == 0 else Space.L2_R


def drop_divergent(basis: SpanBasis) -> SpanBasis:
    """Removes members with infinite norm on (R, inf) and records their labels in ``excluded``."""
    kept, labels, excluded = [], [], list(basis.excluded)
    for member, label in zip(basis.fields, basis.labels):
        try:
            value = inner_product(member, member, basis.space, basis.N, basis.R)
        except exceptions.ChannelLabError as error:
            if error.code not in ("divergent-tail", "integrability"):
                raise
            logger.warning("dropping %s from the %s basis: %s", label, basis.space.value, error.error_message)
            excluded.append(label)
            continue
        if not math.isfinite(value):
            excluded.append(label)
            continue
        kept.append(member)
        labels.append(label)
    return SpanBasis(fields=kept, space=basis.space, R=basis.R, N=basis.N, labels=labels, excluded=excluded)


def ground_state_basis(
        N: int,
        grid: RadialGrid,
        lambdas: Sequence[float] = (1.0,),
        space: Union[Space, str] = Space.H1_R,
        R: float = 0.0,
) -> SpanBasis:
    """Span of the rescaled generators: LW_(lambda) in H1_R, LW_[lambda] in L2_R."""
    space = Space(space)
    kind = ScalingKind.H1_CRITICAL if space == Space.H1_R else ScalingKind.L2_CRITICAL
    fields = [ground_state.lambda_w_field(N, grid, lam, kind) for lam in lambdas]
    labels = ["LW(%g)" % lam for lam in lambdas]
    return drop_divergent(SpanBasis(fields=fields, space=space, R=R, N=N, labels=labels))


def multisoliton_basis(
        N: int, grid: RadialGrid, lambdas: Sequence[float], space: Union[Space, str] = Space.H1_R
) -> SpanBasis:
    """Multisoliton span {LW_lambda_j}; scales must be strictly decreasing."""
    ground_state.separation_gamma(lambdas)
    return ground_state_basis(N, grid, lambdas, space)


def power_basis(N: int, grid: RadialGrid, R: float, sigma: Optional[int] = None) -> SpanBasis:
    """{r^-(N-2k)}: 1 <= k <= N/4 in H1_R (sigma 0) or 1 <= k <= (N-2)/4 in L2_R (sigma 1)."""
    profile = DimensionProfile.build_profile(N)
    sigma = profile.sigma if sigma is None else sigma
    if R <= 0:
        raise exceptions.ChannelLabError("Power spans need a positive cut radius.", "basis", {"R": R})
    top = N // 4 if sigma == 0 else (N - 2) // 4
    fields = [radial.power_field(grid, -(N - 2 * k), label="r^-%d" % (N - 2 * k)) for k in range(1, top + 1)]
    return drop_divergent(SpanBasis(fields=fields, space=_space_for(sigma), R=R, N=N))


def cutoff_field(field: RadialField, cutoff: Optional[CutoffProfile] = None, scale: float = 1.0) -> RadialField:
    """chi(r / scale) * field, compactly supported."""
    cutoff = cutoff or CutoffProfile()
    r = field.grid.nodes
    chi = cutoff.evaluate(r, scale)
    values = chi * field.values
    derivative = chi * field.derivative_values() + cutoff.derivative(r, scale) * field.values
    return RadialField(
        grid=field.grid,
        values=values,
        derivative=derivative,
        zero_tail=field.zero_tail,
        label="chi%s" % field.label,
    )


def exterior_basis(family: LadderFamily, R: float, sigma: Optional[int] = None) -> SpanBasis:
    """Basis of the exterior projection at cut radius R.

    R = 0 gives {LW}. Otherwise {T_k^inf} for k up to (N-6)/2 (sigma 0) or (N-8)/2 (sigma 1),
    joined for R in (0, 1) by the cut-off {chi T_k^0} over the same range.
    """
    N = family.N
    profile = DimensionProfile.build_profile(N)
    sigma = profile.sigma if sigma is None else sigma
    space = _space_for(sigma)
    if R == 0:
        return ground_state_basis(N, family.grid, (1.0,), space)
    top = profile.ladder_top_even if sigma == 0 else profile.ladder_top_odd
    fields = [family.T_inf[k] for k in range(top + 1)]
    labels = ["T%d_inf" % k for k in range(top + 1)]
    if R < 1:
        fields += [cutoff_field(family.T_zero[k]) for k in range(top + 1)]
        labels += ["chiT%d_0" % k for k in range(top + 1)]
    return drop_divergent(SpanBasis(fields=fields, space=space, R=R, N=N, labels=labels))


def rescaled_exterior_basis(family: LadderFamily, mu: float, R: float, sigma: Optional[int] = None) -> SpanBasis:
    """Exterior basis rescaled to scale mu, cut at mu * R."""
    base = exterior_basis(family, R, sigma)
    kind = ScalingKind.H1_CRITICAL if base.space == Space.H1_R else ScalingKind.L2_CRITICAL
    fields = [ground_state.rescale(member, mu, kind, family.N) for member in base.fields]
    labels = ["%s(%g)" % (label, mu) for label in base.labels]
    return SpanBasis(
        fields=fields, space=base.space, R=mu * R, N=family.N, labels=labels, excluded=list(base.excluded)
    )


def alternating_norm(
        u: Tuple[RadialField, RadialField], N: int, R: float, grid: Optional[RadialGrid] = None
) -> float:
    """|pi_0^perp u0|_{H1_R} when N = 0 mod 4, |pi_1^perp u1|_{L2_R} when N = 2 mod 4.

    The power span is built on ``grid`` (default: the grid of u), which must not carry an origin node.
    """
    basis = power_basis(N, grid or u[0].grid, R)
    return projected_norm(u, basis)


# Averaging operator


def averaging_transform(f: RadialField, direction: str = "forward") -> RadialField:
    """Forward: int_r^inf rho f(rho) drho. Inverse: -f'(r) / r."""
    if direction == "forward":
        return _average(f)
    if direction == "inverse":
        return _unaverage(f)
    raise exceptions.ChannelLabError("Unknown averaging direction %r." % direction, "grid")


def _average(f: RadialField) -> RadialField:
    tail = f.inf_tail
    if (tail is not None and tail.exponent >= -2) or (tail is None and not f.is_compact):
        raise exceptions.ChannelLabError(
            "Averaging needs decay faster than r^-2 at infinity.", "divergent-tail", {"label": f.label}
        )
    grid = f.grid
    values = radial.cumulative_radial(f, 2, "reverse")
    inf_tail = None
    if tail is not None:
        inf_tail = PowerTail.from_terms(TailEnd.INFINITY, [(e + 2, -c / (e + 2)) for e, c in tail.terms])
    zero_tail = None
    if f.zero_tail is not None and all(e != -2 for e, _ in f.zero_tail.terms):
        index = grid.first_positive
        r1 = float(grid.nodes[index])
        constant = float(values[index]) + sum(c * r1 ** (e + 2) / (e + 2) for e, c in f.zero_tail.terms)
        terms = [(0.0, constant)] + [(e + 2, -c / (e + 2)) for e, c in f.zero_tail.terms]
        zero_tail = PowerTail.from_terms(TailEnd.ORIGIN, terms)
    return RadialField(
        grid=grid,
        values=values,
        derivative=-grid.nodes * f.values,
        zero_tail=zero_tail,
        inf_tail=inf_tail,
        label="A(%s)" % f.label if f.label else "",
    )


def _unaverage(f: RadialField) -> RadialField:
    grid = f.grid
    r = grid.nodes
    slope = f.derivative_values()
    values = np.empty(grid.count)
    positive = r > 0
    values[positive] = -slope[positive] / r[positive]
    if grid.has_origin:
        values[0] = -2.0 * (f.values[1] - f.values[0]) / r[1] ** 2

    def _tail(tail, end):
        if tail is None:
            return None
        return PowerTail.from_terms(end, [(e - 2, -c * e) for e, c in tail.terms if e != 0])

    return RadialField(
        grid=grid,
        values=values,
        zero_tail=_tail(f.zero_tail, TailEnd.ORIGIN),
        inf_tail=_tail(f.inf_tail, TailEnd.INFINITY),
        label="Ainv(%s)" % f.label if f.label else "",
    )


# Distances to spans


class _ShellForms:
    """Per-shell quadratic forms of |u - sum c_i b_i|^2, weighted for the Z sup."""

    def __init__(self, u: RadialField, basis: Sequence[RadialField], edges: np.ndarray, weights: np.ndarray, N: int):
        self.weights = weights
        self.uu = radial.shell_integrals(u.multiply(u), N, edges)
        size = len(basis)
        self.ub = np.zeros((edges.size - 1, size))
        self.bb = np.zeros((edges.size - 1, size, size))
        for i, b in enumerate(basis):
            self.ub[:, i] = radial.shell_integrals(u.multiply(b), N, edges)
            for j in range(i, size):
                column = radial.shell_integrals(b.multiply(basis[j]), N, edges)
                self.bb[:, i, j] = self.bb[:, j, i] = column

    def objective(self, c: np.ndarray) -> float:
        masses = self.uu - 2.0 * self.ub @ c + np.einsum("sij,i,j->s", self.bb, c, c)
        return float(np.max(self.weights * np.sqrt(np.maximum(masses, 0.0))))

    def least_squares_seed(self) -> np.ndarray:
        w2 = self.weights ** 2
        matrix = np.einsum("s,sij->ij", w2, self.bb)
        rhs = w2 @ self.ub
        return np.linalg.lstsq(matrix, rhs, rcond=None)[0]


def span_distance_Z(
        u: RadialField,
        basis: Sequence[RadialField],
        alpha: float,
        R: float,
        N: int,
        variant: Union[ZVariant, str] = ZVariant.BASED,
        lambdas: Optional[Sequence[float]] = None,
) -> float:
    """Upper bound for inf over the span of |u - v| in Z_{alpha,R}.

    Starts from the shell-weighted least-squares fit and refines one coefficient at a time
    until a sweep lowers the value by less than a relative 1e-6.
    """
    variant, edges, _, _, weights = _z_setup(u, alpha, N, variant, R, lambdas)
    basis = [_match_grid(b, u.grid) for b in basis]
    forms = _ShellForms(u, basis, edges, weights, N)
    zero = forms.objective(np.zeros(len(basis)))
    if not basis or zero == 0:
        return zero
    c = forms.least_squares_seed()
    best = forms.objective(c)
    if best > zero:
        c, best = np.zeros(len(basis)), zero
    for _ in range(MAX_DESCENT_SWEEPS):
        previous = best
        for i in range(len(basis)):
            def along(x, i=i):
                trial = c.copy()
                trial[i] = x
                return forms.objective(trial)

            step = max(abs(c[i]), 1.0) * 0.1
            result = optimize.minimize_scalar(along, bracket=(c[i], c[i] + step), method="brent", tol=1e-12)
            if result.fun < best:
                c[i], best = result.x, float(result.fun)
        if best == 0 or previous - best <= DESCENT_TOLERANCE * previous:
            return best
    logger.warning(
        "Z-distance descent stopped after %d sweeps; returning the best value %.6g as an upper bound.",
        MAX_DESCENT_SWEEPS,
        best,
    )
    return best


# Hardy comparison and space-time sups


def hardy_check(f: RadialField, lambdas: Sequence[float], N: int) -> Dict[str, object]:
    """Compares |grad f| in Z_{-N/2,lambda} with |f|_H1 and measures the pointwise constant."""
    gradient = radial.differentiate(f)
    z_value = z_norm(gradient, -N / 2.0, N, ZVariant.MULTI, lambdas=lambdas)
    h1 = h1_norm(f, N)
    r = f.grid.nodes
    positive = r > 0
    distance = np.min([np.abs(np.log(r[positive] / lam)) for lam in lambdas], axis=0)
    ratio = np.abs(f.values[positive]) * r[positive] ** ((N - 2) / 2.0) / (1.0 + distance)
    pointwise = float(np.max(ratio) / z_value) if z_value > 0 else 0.0
    return {
        "z_gradient": z_value,
        "h1": h1,
        "bound_holds": bool(z_value <= h1 * (1 + 1e-9)),
        "pointwise_constant": pointwise,
    }


def tilde_y_norm(
        probe: EvolutionProbe, basis_factory: Callable[[float], SpanBasis], lattice: Sequence[float]
) -> float:
    """Sup of projected exterior norms of the snapshots over lattice radii rho > |t - t_center|.

    Lattice radii whose basis is too ill-conditioned to project onto are skipped with a warning.
    """
    best = 0.0
    skipped = set()
    for index, t in enumerate(probe.snapshot_times):
        state = probe.snapshot_state(index)
        elapsed = abs(t - probe.t_center)
        u = None
        for rho in lattice:
            if rho <= elapsed or rho in skipped:
                continue
            basis = basis_factory(rho)
            if u is None and basis.fields:
                u = _match_grid(state.u, basis.fields[0].grid)
            try:
                value = projected_norm(state.u if u is None else u, basis)
            except exceptions.ChannelLabError as error:
                if error.code != "gram-condition":
                    raise
                logger.warning("skipping rho = %g in the tilde-Y sup: %s", rho, error.error_message)
                skipped.add(rho)
                continue
            if value > best:
                best = value
                logger.debug("new tilde-Y maximum %.6g at t = %g, rho = %g", value, t, rho)
    return best
