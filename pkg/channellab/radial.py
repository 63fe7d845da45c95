import logging
import math
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from channellab import exceptions
from channellab.models import GridPolicy, PowerLawFit, PowerTail, RadialField, RadialGrid, TailEnd

logger = logging.getLogger(__name__)

GRADED_FLOOR = 1e-8


def make_grid(
        r_min: float,
        r_max: float,
        count: int,
        policy: Union[GridPolicy, str] = GridPolicy.UNIFORM,
        origin: bool = False,
        anchor: Optional[float] = 1.0,
) -> RadialGrid:
    """Builds a radial grid.

    Args:
        :r_min (float): Lower end of the grid, 0 allowed.
        :r_max (float): Upper end of the grid.
        :count (int): Total number of nodes, including the origin node when requested.
        :policy (GridPolicy): uniform or graded-log.
        :origin (bool, optional): Graded grids only; prepend a node at r = 0.
        :anchor (float, optional): Graded grids only; radius that must be a node when it
            falls strictly inside the grid. The top node stays at r_max.

    Returns:
        :RadialGrid: The grid.
    """
    policy = GridPolicy(policy)
    if not (math.isfinite(r_min) and math.isfinite(r_max)):
        raise exceptions.ChannelLabError("Grid bounds must be finite.", "grid", {"r_min": r_min, "r_max": r_max})
    if not 0 <= r_min < r_max:
        raise exceptions.ChannelLabError("Grid bounds must satisfy 0 <= r_min < r_max.", "grid")
    if count < 16:
        raise exceptions.ChannelLabError("A radial grid needs at least 16 nodes.", "grid", {"count": count})

    if policy == GridPolicy.UNIFORM:
        nodes = np.linspace(r_min, r_max, count)
        nodes[-1] = r_max
        return RadialGrid(nodes=nodes, policy=policy)

    geometric = count - 1 if origin else count
    lo = max(r_min, r_max * GRADED_FLOOR)
    s_lo, s_hi = math.log(lo), math.log(r_max)
    step = (s_hi - s_lo) / (geometric - 1)
    s = s_lo + step * np.arange(geometric)
    anchored = None
    if anchor is not None and lo < anchor < r_max:
        s_anchor = math.log(anchor)
        # rounding down keeps the bottom node at or below the requested r_min
        above = int(math.floor((s_hi - s_anchor) / step + 1e-9))
        if 1 <= above < geometric - 1:
            fitted_step = (s_hi - s_anchor) / above
            s = s_hi - fitted_step * np.arange(geometric)[::-1]
            anchored = geometric - 1 - above
    nodes = np.exp(s)
    nodes[-1] = r_max
    if anchored is None:
        nodes[0] = lo
    else:
        nodes[anchored] = anchor
    if origin:
        nodes = np.concatenate(([0.0], nodes))
    logger.debug("graded grid: %d nodes on [%g, %g], anchor node %s", nodes.size, nodes[0], r_max, anchored)
    return RadialGrid(nodes=nodes, policy=policy)


def field_from_samples(grid: RadialGrid, values, derivative=None, zero_tail=None, inf_tail=None, label="") -> RadialField:
    return RadialField(
        grid=grid, values=values, derivative=derivative, zero_tail=zero_tail, inf_tail=inf_tail, label=label
    )


def power_field(grid: RadialGrid, exponent: float, coefficient: float = 1.0, label: str = "") -> RadialField:
    """c * r**e with its exact derivative and tails at both ends."""
    if grid.has_origin and exponent < 0:
        raise exceptions.ChannelLabError("r**%g is singular at the origin node." % exponent, "singular-origin")
    r = grid.nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        values = coefficient * r ** exponent
        derivative = coefficient * exponent * r ** (exponent - 1) if exponent != 0 else np.zeros_like(r)
    if grid.has_origin and exponent < 1 and exponent != 0:
        derivative[0] = 0.0
    return RadialField(
        grid=grid,
        values=values,
        derivative=derivative,
        zero_tail=PowerTail.monomial(TailEnd.ORIGIN, exponent, coefficient),
        inf_tail=PowerTail.monomial(TailEnd.INFINITY, exponent, coefficient),
        label=label or "r^%g" % exponent,
    )


def _coordinates(grid: RadialGrid):
    """Interpolation coordinate on the nodes that are handled by splines.

    Geometric parts use s = log r; uniform grids use r itself. Returns (offset, x) where
    ``offset`` is the index of the first spline node.
    """
    if grid.policy == GridPolicy.GRADED_LOG:
        offset = grid.first_positive
        return offset, np.log(grid.nodes[offset:])
    return 0, grid.nodes


def _measure_weights(grid: RadialGrid, N: int, offset: int) -> np.ndarray:
    r = grid.nodes[offset:]
    if grid.policy == GridPolicy.GRADED_LOG:
        return r ** N
    return r ** (N - 1)


def _monomial_integral(exponent: float, coefficient: float, N: int, a: float, b: float) -> float:
    """Integral of c * r**(e + N - 1) over [a, b], b possibly infinite."""
    p = exponent + N
    if p == 0:
        if a <= 0 or math.isinf(b):
            raise exceptions.ChannelLabError("Logarithmically divergent tail integral.", "divergent-tail")
        return coefficient * math.log(b / a)
    if math.isinf(b):
        if p >= 0:
            raise exceptions.ChannelLabError(
                "Tail r^%g makes the integral to infinity diverge (e + N = %g)." % (exponent, p),
                "divergent-tail",
                {"exponent": exponent, "N": N},
            )
        return -coefficient * a ** p / p
    if a == 0 and p <= 0:
        raise exceptions.ChannelLabError(
            "Tail r^%g is not integrable at the origin (e + N = %g)." % (exponent, p), "integrability",
            {"exponent": exponent, "N": N},
        )
    return coefficient * (b ** p - a ** p) / p


def _inner_closure(f: RadialField, N: int, a: float, b: float) -> float:
    """Integral over [a, b] below the first spline node of a graded grid."""
    if b <= a:
        return 0.0
    grid = f.grid
    if f.zero_tail is not None:
        return sum(_monomial_integral(e, c, N, a, b) for e, c in f.zero_tail.terms)
    if grid.has_origin:
        f0, f1, r1 = f.values[0], f.values[1], grid.nodes[1]
        slope = (f1 - f0) / r1
        return f0 * (b ** N - a ** N) / N + slope * (b ** (N + 1) - a ** (N + 1)) / (N + 1)
    v0, v1 = f.values[0], f.values[1]
    r0, r1 = grid.nodes[0], grid.nodes[1]
    if v0 != 0 and v0 * v1 > 0:
        p = math.log(v1 / v0) / math.log(r1 / r0)
        return _monomial_integral(p, v0 / r0 ** p, N, a, b)
    return v0 * (b ** N - a ** N) / N


def _outer_closure(f: RadialField, N: int, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    if f.inf_tail is not None:
        return sum(_monomial_integral(e, c, N, a, b) for e, c in f.inf_tail.terms)
    if f.is_compact:
        return 0.0
    raise exceptions.ChannelLabError(
        "Field has no tail at infinity and does not vanish at r_max.", "divergent-tail", {"label": f.label}
    )


def integrate_radial(f: RadialField, N: int, lo: float = 0.0, hi: float = math.inf) -> float:
    """Integral of f(r) r^(N-1) dr over [lo, hi] with analytic closures beyond the grid.

    Args:
        :f (RadialField): Integrand.
        :N (int): Dimension.
        :lo (float): Lower limit. On graded grids the part below the first node is closed
            with the zero tail (or a local power law).
        :hi (float): Upper limit, ``math.inf`` allowed when the tail at infinity decays fast enough.

    Returns:
        :float: The integral.
    """
    grid = f.grid
    if not lo < hi:
        raise exceptions.ChannelLabError("Integration limits must satisfy lo < hi.", "grid", {"lo": lo, "hi": hi})
    offset, x = _coordinates(grid)
    spline_lo, spline_hi = grid.nodes[offset], grid.r_max
    if lo < spline_lo:
        if grid.policy == GridPolicy.UNIFORM and lo < spline_lo * (1 - 1e-12) - 1e-300:
            raise exceptions.ChannelLabError("Lower limit lies below the grid support.", "grid", {"lo": lo})
    total = 0.0
    if lo < spline_lo:
        total += _inner_closure(f, N, lo, min(spline_lo, hi))
    a, b = max(lo, spline_lo), min(hi, spline_hi)
    if a < b:
        nodes = grid.nodes[offset:]
        start = max(int(np.searchsorted(nodes, a, side="right")) - 4, 0)
        stop = min(int(np.searchsorted(nodes, b, side="left")) + 4, nodes.size)
        y = f.values[offset:] * _measure_weights(grid, N, offset)
        spline = CubicSpline(x[start:stop], y[start:stop])
        to_x = np.log if grid.policy == GridPolicy.GRADED_LOG else (lambda value: value)
        total += float(spline.integrate(to_x(a), to_x(b)))
    if hi > spline_hi:
        total += _outer_closure(f, N, max(lo, spline_hi), hi)
    return float(total)


def shell_integrals(f: RadialField, N: int, edges: Sequence[float]) -> np.ndarray:
    """Integrals of f r^(N-1) between consecutive radii in ``edges``, off-grid parts from tails."""
    grid = f.grid
    offset, x = _coordinates(grid)
    y = f.values[offset:] * _measure_weights(grid, N, offset)
    antiderivative = CubicSpline(x, y).antiderivative()
    first, last = grid.nodes[offset], grid.r_max
    to_x = np.log if grid.policy == GridPolicy.GRADED_LOG else (lambda value: value)
    top = float(antiderivative(to_x(last)))

    near = grid.nodes[1] if grid.policy == GridPolicy.UNIFORM and grid.has_origin else 0.0

    def primitive(radius):
        if radius < near:
            # constant integrand inside the first cell
            inner = float(f.values[0]) * (near ** N - radius ** N) / N
            return float(antiderivative(near)) - inner
        if radius < first:
            if grid.policy == GridPolicy.UNIFORM or (f.zero_tail is None and not grid.has_origin and radius <= 0):
                raise exceptions.ChannelLabError(
                    "Shell below the grid and no description of the field there.", "undersampled", {"r": radius}
                )
            return -_inner_closure(f, N, radius, first)
        if radius <= last:
            return float(antiderivative(to_x(radius)))
        if f.inf_tail is None and not f.is_compact:
            raise exceptions.ChannelLabError(
                "Shell beyond the grid and no tail at infinity.", "undersampled", {"r": radius}
            )
        return top + _outer_closure(f, N, last, radius)

    values = np.array([primitive(float(edge)) for edge in edges])
    return np.diff(values)


def cumulative_radial(f: RadialField, N: int, direction: str = "forward") -> np.ndarray:
    """Cumulative integrals of f r^(N-1) evaluated at every node.

    ``forward`` integrates from the origin, ``reverse`` from infinity (closed with the tail)
    and ``anchor`` from the node at r = 1, negative below it. Each direction is accumulated
    from its own starting end.
    """
    grid = f.grid
    offset, x = _coordinates(grid)
    y = f.values[offset:] * _measure_weights(grid, N, offset)
    result = np.zeros(grid.count)
    if direction == "forward":
        part = CubicSpline(x, y).antiderivative()(x)
        if grid.policy == GridPolicy.GRADED_LOG:
            part = part + _inner_closure(f, N, 0.0, grid.nodes[offset])
        result[offset:] = part
    elif direction == "reverse":
        flipped = -x[::-1]
        part = CubicSpline(flipped, y[::-1]).antiderivative()(flipped)[::-1]
        part = part + _outer_closure(f, N, grid.r_max, math.inf)
        result[offset:] = part
        if offset:
            result[0] = part[0] + _inner_closure(f, N, 0.0, grid.nodes[offset])
    elif direction == "anchor":
        index = grid.anchor_index(1.0) - offset
        above = CubicSpline(x[index:], y[index:]).antiderivative()(x[index:])
        flipped = -x[: index + 1][::-1]
        below = CubicSpline(flipped, y[: index + 1][::-1]).antiderivative()(flipped)[::-1]
        result[offset + index:] = above
        result[offset:offset + index + 1] = -below
        if offset:
            result[0] = result[offset] - _inner_closure(f, N, 0.0, grid.nodes[offset])
    else:
        raise exceptions.ChannelLabError("Unknown cumulative direction %r." % direction, "grid")
    return result


def _fitted_tail(values: np.ndarray, grid: RadialGrid, end: TailEnd) -> Optional[PowerTail]:
    try:
        fit = fit_power_law(field_from_samples(grid, values), end, 0.5)
    except exceptions.ChannelLabError:
        return None
    return PowerTail.monomial(end, round(fit.exponent, 6), fit.coefficient)


def differentiate(f: RadialField) -> RadialField:
    """First derivative with analytically differentiated tails.

    Constant tail terms differentiate to nothing; when a whole tail vanishes that way the
    derivative tail is fitted from the samples instead.
    """
    if f.grid.count < 3:
        raise exceptions.ChannelLabError("Differentiation needs at least 3 nodes.", "grid")
    values = f.derivative_values()
    tails = {}
    for end, tail in ((TailEnd.ORIGIN, f.zero_tail), (TailEnd.INFINITY, f.inf_tail)):
        if tail is None:
            tails[end] = None
            continue
        derived = tail.derivative()
        if derived is None and end == TailEnd.INFINITY and values[-1] != 0:
            derived = _fitted_tail(values, f.grid, end)
        tails[end] = derived
    return RadialField(
        grid=f.grid,
        values=values,
        zero_tail=tails[TailEnd.ORIGIN],
        inf_tail=tails[TailEnd.INFINITY],
        label="d(%s)" % f.label if f.label else "",
    )


def _first_derivative(y: np.ndarray, h: float, order: int) -> np.ndarray:
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2 * h)
    if order == 4 and y.size >= 6:
        d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
        d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
        d[-2] = -(-3 * y[-1] - 10 * y[-2] + 18 * y[-3] - 6 * y[-4] + y[-5]) / (12 * h)
        d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
        d[-1] = -(-25 * y[-1] + 48 * y[-2] - 36 * y[-3] + 16 * y[-4] - 3 * y[-5]) / (12 * h)
    else:
        d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * h)
        d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h)
    return d


def _second_derivative(y: np.ndarray, h: float, order: int) -> np.ndarray:
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - 2 * y[1:-1] + y[:-2]) / h ** 2
    if order == 4 and y.size >= 6:
        d[2:-2] = (-y[:-4] + 16 * y[1:-3] - 30 * y[2:-2] + 16 * y[3:-1] - y[4:]) / (12 * h ** 2)
        d[1] = (10 * y[0] - 15 * y[1] - 4 * y[2] + 14 * y[3] - 6 * y[4] + y[5]) / (12 * h ** 2)
        d[-2] = (10 * y[-1] - 15 * y[-2] - 4 * y[-3] + 14 * y[-4] - 6 * y[-5] + y[-6]) / (12 * h ** 2)
        d[0] = (45 * y[0] - 154 * y[1] + 214 * y[2] - 156 * y[3] + 61 * y[4] - 10 * y[5]) / (12 * h ** 2)
        d[-1] = (45 * y[-1] - 154 * y[-2] + 214 * y[-3] - 156 * y[-4] + 61 * y[-5] - 10 * y[-6]) / (12 * h ** 2)
    else:
        d[0] = (2 * y[0] - 5 * y[1] + 4 * y[2] - y[3]) / h ** 2
        d[-1] = (2 * y[-1] - 5 * y[-2] + 4 * y[-3] - y[-4]) / h ** 2
    return d


def _log_laplacian(f: RadialField, N: int, order: int, offset: int) -> np.ndarray:
    r = f.grid.nodes[offset:]
    h = math.log(r[-1] / r[0]) / (r.size - 1)
    if f.derivative is not None:
        # flux form: the flux r^(N-1) f' is smooth even where f itself is singular
        flux = r ** (N - 1) * f.derivative[offset:]
        return _first_derivative(flux, h, order) / r ** N
    values = f.values[offset:]
    return (_second_derivative(values, h, order) + (N - 2) * _first_derivative(values, h, order)) / r ** 2


def _uniform_laplacian(f: RadialField, N: int, order: int) -> np.ndarray:
    grid = f.grid
    r, h, y = grid.nodes, grid.spacing, f.values
    if grid.has_origin and order == 4:
        extended = np.concatenate((y[2:0:-1], y))
        first = _first_derivative(extended, h, 4)[2:]
        second = _second_derivative(extended, h, 4)[2:]
    else:
        first = _first_derivative(y, h, order)
        second = _second_derivative(y, h, order)
    result = np.empty_like(y)
    start = 1 if grid.has_origin else 0
    result[start:] = second[start:] + (N - 1) * first[start:] / r[start:]
    if grid.has_origin:
        if order == 4:
            result[0] = N * (-2 * y[2] + 32 * y[1] - 30 * y[0]) / (12 * h ** 2)
        else:
            result[0] = 2 * N * (y[1] - y[0]) / h ** 2
    return result


def radial_laplacian(f: RadialField, N: int, order: int = 2) -> RadialField:
    """Discrete radial Laplacian f'' + (N-1)/r f'.

    Geometric grids work in s = log r, in flux form when an exact derivative is attached.
    At an origin node the regular limit N f''(0) is taken from the even extension.
    """
    grid = f.grid
    if order not in (2, 4):
        raise exceptions.ChannelLabError("Laplacian order must be 2 or 4.", "grid", {"order": order})
    if grid.count < 3:
        raise exceptions.ChannelLabError("The Laplacian needs at least 3 nodes.", "grid")
    if grid.has_origin and f.zero_tail is not None and f.zero_tail.exponent < 0:
        raise exceptions.ChannelLabError(
            "Field is singular at the origin node (exponent %g)." % f.zero_tail.exponent,
            "singular-origin",
            {"label": f.label},
        )
    if grid.policy == GridPolicy.UNIFORM:
        values = _uniform_laplacian(f, N, order)
    else:
        offset = grid.first_positive
        values = np.empty(grid.count)
        values[offset:] = _log_laplacian(f, N, order, offset)
        if offset:
            values[0] = 2 * N * (f.values[1] - f.values[0]) / grid.nodes[1] ** 2
    return RadialField(
        grid=grid,
        values=values,
        zero_tail=f.zero_tail.laplacian(N) if f.zero_tail is not None else None,
        inf_tail=f.inf_tail.laplacian(N) if f.inf_tail is not None else None,
        label="lap(%s)" % f.label if f.label else "",
    )


def fit_power_law(f: RadialField, end: Union[TailEnd, str], decades: float = 1.0) -> PowerLawFit:
    """Least-squares line through log|f| against log r over the end decades of the grid."""
    end = TailEnd(end)
    grid = f.grid
    offset = grid.first_positive
    r = grid.nodes[offset:]
    values = f.values[offset:]
    span = math.log10(r[-1] / r[0])
    if span < decades * (1 - 1e-9):
        raise exceptions.ChannelLabError(
            "Grid spans %.3g decades, fit needs %.3g." % (span, decades), "fit-window",
            {"span": span, "decades": decades},
        )
    if end == TailEnd.INFINITY:
        mask = r >= r[-1] * 10 ** (-decades) * (1 - 1e-12)
    else:
        mask = r <= r[0] * 10 ** decades * (1 + 1e-12)
    window = values[mask]
    if window.size < 3:
        raise exceptions.ChannelLabError("Fit window holds fewer than 3 nodes.", "fit-window")
    if np.any(window == 0) or (np.any(window > 0) and np.any(window < 0)):
        raise exceptions.ChannelLabError(
            "Field vanishes or changes sign in the %s fit window." % end.value, "fit-window", {"label": f.label}
        )
    log_r, log_v = np.log(r[mask]), np.log(np.abs(window))
    slope, intercept = np.polyfit(log_r, log_v, 1)
    residual = float(np.sqrt(np.mean((log_v - (slope * log_r + intercept)) ** 2)))
    return PowerLawFit(
        exponent=float(slope), coefficient=float(np.sign(window[0]) * math.exp(intercept)), residual=residual
    )


class _Interpolant:
    """Spline through samples in the grid's natural coordinate, with r-derivatives."""

    def __init__(self, grid: RadialGrid, values: np.ndarray, method: str = "cubic"):
        if method not in ("cubic", "pchip"):
            raise exceptions.ChannelLabError("Unknown interpolation method %r." % method, "grid")
        self.grid = grid
        self.log = grid.policy == GridPolicy.GRADED_LOG
        self.offset, x = _coordinates(grid)
        spline_type = CubicSpline if method == "cubic" else PchipInterpolator
        self.spline = spline_type(x, values[self.offset:])
        self.values = values

    def __call__(self, r: np.ndarray, nu: int = 0) -> np.ndarray:
        if not self.log:
            return self.spline(r, nu)
        s = np.log(r)
        if nu == 0:
            return self.spline(s)
        g_s = self.spline(s, 1)
        if nu == 1:
            return g_s / r
        return (self.spline(s, 2) - g_s) / r ** 2


def _evaluate_samples(f: RadialField, samples: np.ndarray, tails, r, method: str) -> np.ndarray:
    grid = f.grid
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r)
    zero_tail, inf_tail = tails
    offset = grid.first_positive if grid.policy == GridPolicy.GRADED_LOG else 0
    first = grid.nodes[offset]
    inside = (r >= first) & (r <= grid.r_max)
    if np.any(inside):
        out[inside] = _Interpolant(grid, samples, method)(r[inside])
    above = r > grid.r_max
    if np.any(above):
        if inf_tail is not None:
            out[above] = inf_tail.evaluate(r[above])
        elif samples[-1] == 0:
            out[above] = 0.0
        else:
            raise exceptions.ChannelLabError(
                "Cannot evaluate beyond r_max without a tail at infinity.", "grid", {"label": f.label}
            )
    below = r < first
    if np.any(below):
        if zero_tail is not None and np.all(r[below] > 0):
            out[below] = zero_tail.evaluate(r[below])
        elif offset:
            r1 = grid.nodes[1]
            out[below] = samples[0] + (samples[1] - samples[0]) * r[below] / r1
        elif zero_tail is not None and zero_tail.exponent >= 0:
            out[below] = zero_tail.evaluate(np.maximum(r[below], 1e-300))
        elif grid.policy == GridPolicy.GRADED_LOG:
            out[below] = samples[0]
        else:
            raise exceptions.ChannelLabError("Cannot evaluate below the grid support.", "grid", {"label": f.label})
    return out


def evaluate(f: RadialField, r, derivative: bool = False, method: str = "cubic") -> np.ndarray:
    """Values (or first derivative) of f at arbitrary radii; tails cover off-grid radii."""
    if not derivative:
        return _evaluate_samples(f, f.values, (f.zero_tail, f.inf_tail), r, method)
    if f.derivative is not None:
        tails = (
            f.zero_tail.derivative() if f.zero_tail is not None else None,
            f.inf_tail.derivative() if f.inf_tail is not None else None,
        )
        return _evaluate_samples(f, f.derivative, tails, r, method)
    derived = differentiate(f)
    return _evaluate_samples(derived, derived.values, (derived.zero_tail, derived.inf_tail), r, method)


def resample(f: RadialField, grid: RadialGrid, method: str = "cubic") -> RadialField:
    """Interpolates f onto another grid, carrying tails and the exact derivative."""
    if grid.has_origin and f.zero_tail is not None and f.zero_tail.exponent < 0:
        raise exceptions.ChannelLabError(
            "Cannot place a field singular at the origin on a grid with an origin node.", "singular-origin",
            {"label": f.label},
        )
    values = evaluate(f, grid.nodes, method=method)
    derivative = evaluate(f, grid.nodes, derivative=True, method=method) if f.derivative is not None else None
    return RadialField(
        grid=grid, values=values, derivative=derivative, zero_tail=f.zero_tail, inf_tail=f.inf_tail, label=f.label
    )


def regularize_core(f: RadialField, r_core: float) -> RadialField:
    """Replaces f on r < r_core by the even quartic a + b r^2 + c r^4 matching f, f', f''."""
    grid = f.grid
    if not grid.r_min < r_core < grid.r_max:
        raise exceptions.ChannelLabError("Core radius must lie inside the grid.", "grid", {"r_core": r_core})
    point = np.array([r_core])
    f0 = float(_Interpolant(grid, f.values)(point)[0])
    if f.derivative is not None:
        slope_spline = _Interpolant(grid, f.derivative)
        f1 = float(slope_spline(point)[0])
        f2 = float(slope_spline(point, 1)[0])
    else:
        spline = _Interpolant(grid, f.values)
        f1 = float(spline(point, 1)[0])
        f2 = float(spline(point, 2)[0])
    x = r_core
    c = (f2 - f1 / x) / (8 * x * x)
    b = f1 / (2 * x) - 2 * c * x * x
    a = f0 - b * x * x - c * x ** 4
    r = grid.nodes
    inner = r < r_core
    values = np.array(f.values)
    derivative = np.array(f.derivative_values())
    values[inner] = a + b * r[inner] ** 2 + c * r[inner] ** 4
    derivative[inner] = 2 * b * r[inner] + 4 * c * r[inner] ** 3
    logger.debug("regularized %s below r = %g (a=%g, b=%g, c=%g)", f.label or "field", r_core, a, b, c)
    return RadialField(
        grid=grid,
        values=values,
        derivative=derivative,
        zero_tail=PowerTail.from_terms(TailEnd.ORIGIN, [(0.0, a), (2.0, b), (4.0, c)]),
        inf_tail=f.inf_tail,
        label=f.label,
    )


def gradient(f: RadialField) -> np.ndarray:
    """Derivative samples: the exact derivative when attached, finite differences otherwise."""
    return f.derivative_values()
