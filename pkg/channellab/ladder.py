import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from channellab import exceptions
from channellab import ground_state
from channellab import radial
from channellab.helpers import formatting
from channellab.models import (
    DimensionProfile,
    GreensMode,
    LadderFamily,
    NonradiativeMember,
    PowerTail,
    RadialField,
    RadialGrid,
    TailEnd,
)

logger = logging.getLogger(__name__)

LADDER_TOLERANCE = 1e-3
EXPONENT_TOLERANCE = 0.1


def apply_operator(f: RadialField, V: RadialField, N: int, order: int = 2) -> RadialField:
    """(-Delta + V) f."""
    return V.multiply(f) - radial.radial_laplacian(f, N, order)


def relative_residual(residual: RadialField, reference: RadialField, N: int) -> float:
    """Weighted L^2 ratio ||residual|| / ||reference|| over interior nodes.

    Interior means one decade away from both grid ends on graded grids and the inner nine
    tenths on uniform ones; the weight is the radial measure r^(N-1) dr.
    """
    grid = residual.grid
    r = grid.nodes
    if grid.is_log:
        mask = (r >= 10.0 * grid.r_min) & (r <= grid.r_max / 10.0)
        weight = r ** N
    else:
        mask = (r > 0) & (r <= 0.9 * grid.r_max)
        weight = r ** (N - 1)
    mask[:2] = False
    mask[-2:] = False
    denominator = math.sqrt(float(np.sum(weight[mask] * reference.values[mask] ** 2)))
    if denominator == 0:
        return 0.0
    return math.sqrt(float(np.sum(weight[mask] * residual.values[mask] ** 2))) / denominator


def _regularized_constant(cumulative: float, product: Optional[PowerTail], r_end: float) -> float:
    # strip the power-law growth of a cumulative integral at the grid end
    if product is None:
        return cumulative
    return cumulative - sum(c * r_end ** e / e for e, c in product.terms if e != 0)


def _green_tail(
        end: TailEnd,
        f: RadialField,
        N: int,
        base: Tuple[RadialField, RadialField],
        A: np.ndarray,
        B: np.ndarray,
        mode: GreensMode,
) -> Optional[PowerTail]:
    gamma, lw = base
    tail = f.zero_tail if end == TailEnd.ORIGIN else f.inf_tail
    gamma_tail = gamma.zero_tail if end == TailEnd.ORIGIN else gamma.inf_tail
    lw_tail = lw.zero_tail if end == TailEnd.ORIGIN else lw.inf_tail
    if tail is None and not (end == TailEnd.INFINITY and f.is_compact):
        return None
    grid = f.grid
    index = grid.first_positive if end == TailEnd.ORIGIN else -1
    r_end = float(grid.nodes[index])

    def shifted_product(a):
        # integrand r^(N-1) a f integrates to sum c r^(e+N) / (e+N)
        if tail is None or a is None:
            return None
        product = PowerTail.product(a, tail)
        return product.shifted(float(N)) if product is not None else None

    A_reg = _regularized_constant(float(A[index]), shifted_product(lw_tail), r_end)
    B_reg = _regularized_constant(float(B[index]), shifted_product(gamma_tail), r_end)
    if (mode == GreensMode.AT_ORIGIN) == (end == TailEnd.ORIGIN):
        # the integral of Lambda W f starts at this end, so no homogeneous Gamma part survives
        A_reg = 0.0
    terms = []
    if tail is not None:
        for e, c in tail.terms:
            if (e + 2) * (e + N) != 0:
                terms.append((e + 2.0, -c / ((e + 2.0) * (e + N))))
    if gamma_tail is not None and A_reg:
        terms.extend((e, A_reg * c) for e, c in gamma_tail.terms)
    if lw_tail is not None and B_reg:
        terms.extend((e, -B_reg * c) for e, c in lw_tail.terms)
    return PowerTail.from_terms(end, terms)


def apply_greens(
        f: RadialField,
        mode: Union[GreensMode, str],
        N: int,
        base: Tuple[RadialField, RadialField],
) -> RadialField:
    """Right inverse of -Delta + V by variation of parameters.

    at-origin:   S0 f = Gamma int_0^r rho^(N-1) LW f - LW int_1^r rho^(N-1) Gamma f
    at-infinity: Sinf f = -Gamma int_r^inf rho^(N-1) LW f - LW int_1^r rho^(N-1) Gamma f

    Args:
        :f (RadialField): Source on a graded-log grid with a node at r = 1.
        :mode (GreensMode): Which end the Lambda W integral starts from.
        :N (int): Dimension.
        :base (tuple): (Gamma, Lambda W) on the same grid.

    Returns:
        :RadialField: S f with exact derivative Gamma' A - (Lambda W)' B and tails.
    """
    mode = GreensMode(mode)
    gamma, lw = base
    if mode == GreensMode.AT_ORIGIN and f.zero_tail is not None and f.zero_tail.exponent <= -N:
        raise exceptions.ChannelLabError(
            "Source ~ r^%g is not integrable against the origin weight." % f.zero_tail.exponent,
            "integrability",
            {"mode": mode.value, "exponent": f.zero_tail.exponent},
        )
    if mode == GreensMode.AT_INFINITY and not f.is_compact:
        if f.inf_tail is None or f.inf_tail.exponent >= -2:
            raise exceptions.ChannelLabError(
                "Source must decay faster than r^-2 for the Green operator at infinity.",
                "integrability",
                {"mode": mode.value, "exponent": None if f.inf_tail is None else f.inf_tail.exponent},
            )
    lw_f = lw.multiply(f)
    if mode == GreensMode.AT_ORIGIN:
        A = radial.cumulative_radial(lw_f, N, "forward")
    else:
        A = -radial.cumulative_radial(lw_f, N, "reverse")
    B = radial.cumulative_radial(gamma.multiply(f), N, "anchor")
    values = gamma.values * A - lw.values * B
    derivative = gamma.derivative_values() * A - lw.derivative_values() * B
    label = "S0" if mode == GreensMode.AT_ORIGIN else "Sinf"
    return RadialField(
        grid=f.grid,
        values=values,
        derivative=derivative,
        zero_tail=_green_tail(TailEnd.ORIGIN, f, N, base, A, B, mode),
        inf_tail=_green_tail(TailEnd.INFINITY, f, N, base, A, B, mode),
        label="%s(%s)" % (label, f.label) if f.label else label,
    )


def expected_exponents(N: int, k: int) -> Dict[str, Tuple[float, float]]:
    """(origin, infinity) exponents of T_k^0 and T_k^inf."""
    zero = (float(-N + 2 + 2 * k), float(2 * k))
    inf = (float(-N + 2), float(-N + 2 + 2 * k)) if k else (0.0, float(-N + 2))
    return {"zero": zero, "inf": inf}


def _fitted(field: RadialField, end: TailEnd) -> Optional[float]:
    try:
        return radial.fit_power_law(field, end, 1.0).exponent
    except exceptions.ChannelLabError:
        return None


def build_ladder(
        N: int,
        grid: RadialGrid,
        gamma: Optional[RadialField] = None,
        tolerance: float = LADDER_TOLERANCE,
) -> LadderFamily:
    """Both ladders T_k^inf = -Sinf T_(k-1)^inf and T_k^0 = -S0 T_(k-1)^0 for k <= (N-6)/2.

    One extra level T_(K+1)^inf is kept as ``T_aux``; the regularized top member needs it.
    """
    profile = DimensionProfile.build_profile(N)
    top = profile.ladder_top_even
    if gamma is None:
        gamma = ground_state.build_gamma(N, grid)
    lw = ground_state.lambda_w_field(N, grid)
    V = ground_state.potential_field(N, grid)
    base = (gamma, lw)

    T_inf, T_zero = [lw.relabel("T0_inf")], [gamma.relabel("T0_zero")]
    residuals: Dict[str, List[float]] = {"inf": [], "zero": []}
    for k in range(1, top + 2):
        T_inf.append(apply_greens(T_inf[-1], GreensMode.AT_INFINITY, N, base).scale(-1.0).relabel("T%d_inf" % k))
        if k <= top:
            T_zero.append(apply_greens(T_zero[-1], GreensMode.AT_ORIGIN, N, base).scale(-1.0).relabel("T%d_zero" % k))
    aux = T_inf.pop()

    for name, family in (("inf", T_inf), ("zero", T_zero)):
        for k in range(1, len(family)):
            residual = apply_operator(family[k], V, N) + family[k - 1]
            value = relative_residual(residual, family[k - 1], N)
            residuals[name].append(value)
            logger.debug("ladder N=%d %s level %d: residual %.3g", N, name, k, value)
            if value > tolerance:
                raise exceptions.ChannelLabError(
                    "Ladder recursion residual %.3g at level %d (%s)." % (value, k, name),
                    "ladder-residual",
                    {"level": k, "family": name, "residual": value},
                )

    exponents: Dict[str, List[Tuple[float, float]]] = {"inf": [], "zero": []}
    for name, family in (("inf", T_inf), ("zero", T_zero)):
        for k, field in enumerate(family):
            fitted = (_fitted(field, TailEnd.ORIGIN), _fitted(field, TailEnd.INFINITY))
            exponents[name].append(fitted)
            expected = expected_exponents(N, k)[name]
            for got, want in zip(fitted, expected):
                if got is not None and abs(got - want) > EXPONENT_TOLERANCE:
                    logger.warning(
                        "T%d_%s fitted exponent %.4g differs from %.4g", k, name, got, want
                    )
    sup_norms = {
        "inf": [field.sup_norm() for field in T_inf],
        "zero": [field.sup_norm() for field in T_zero],
    }

    e1_fitted = None
    if len(T_inf) > 1:
        try:
            c_gamma = radial.fit_power_law(gamma, TailEnd.ORIGIN, 1.0).coefficient
            c_first = radial.fit_power_law(T_inf[1], TailEnd.ORIGIN, 1.0).coefficient
            e1_fitted = c_gamma / c_first
        except exceptions.ChannelLabError:
            e1_fitted = None

    logger.info("built resonance ladder for N=%d with %d levels", N, top + 1)
    return LadderFamily(
        N=N,
        grid=grid,
        T_inf=T_inf,
        T_zero=T_zero,
        T_aux=aux,
        residuals=residuals,
        exponents=exponents,
        sup_norms=sup_norms,
        e1_fitted=e1_fitted,
    )


def _all_inf(family: LadderFamily) -> List[RadialField]:
    return list(family.T_inf) + ([family.T_aux] if family.T_aux is not None else [])


def _with_quadratic_core(field: RadialField) -> RadialField:
    index = field.grid.first_positive
    r0 = float(field.grid.nodes[index])
    tail = PowerTail.monomial(TailEnd.ORIGIN, 2.0, float(field.values[index]) / r0 ** 2)
    return field.with_tails(zero_tail=tail, inf_tail=field.inf_tail)


def regularize_T0(family: LadderFamily, tolerance: float = LADDER_TOLERANCE) -> LadderFamily:
    """Coefficients e_i^k and the regularized members T~_k = T_k^0 - sum_i e_i^k T_i^inf.

    Base case e_1^0 = 1 / int rho^(N-1) (Lambda W)^2 and e_0^0 = e_1^0 int_0^1 rho^(N-1) Gamma Lambda W;
    then with c_k = sum_i e_i^k int_0^inf rho^(N-1) Lambda W T_i^inf and
    J_k = int_0^1 rho^(N-1) Gamma T~_k:

        e_0^(k+1) = -c_k e_0^0 - J_k,  e_1^(k+1) = e_0^k - c_k e_1^0,  e_i^(k+1) = e_(i-1)^k,
        T~_(k+1) = -S0 T~_k + J_k Lambda W - c_k T~_0.
    """
    N = family.N
    grid = family.grid
    gamma, lw = family.T_zero[0], family.T_inf[0]
    base = (gamma, lw)
    V = ground_state.potential_field(N, grid)
    T_inf = _all_inf(family)
    top = family.top

    mass = radial.integrate_radial(lw.multiply(lw), N)
    e10 = 1.0 / mass
    e00 = e10 * radial.integrate_radial(gamma.multiply(lw), N, 0.0, 1.0)
    if not (math.isfinite(e10) and math.isfinite(e00)):
        raise exceptions.ChannelLabError("Non-finite regularization coefficients.", "divergent-tail")

    lw_sq = radial.cumulative_radial(lw.multiply(lw), N, "forward")
    gamma_lw = radial.cumulative_radial(gamma.multiply(lw), N, "forward")
    values = (gamma.values * lw_sq - lw.values * gamma_lw) / mass
    derivative = (gamma.derivative_values() * lw_sq - lw.derivative_values() * gamma_lw) / mass
    combined = gamma - lw.scale(e00) - T_inf[1].scale(e10) if len(T_inf) > 1 else gamma
    T_reg = [
        _with_quadratic_core(
            RadialField(grid=grid, values=values, derivative=derivative, inf_tail=combined.inf_tail, label="Treg0")
        )
    ]
    e_coeffs = [[e00, e10]]

    projections = []
    for i in range(min(top + 1, len(T_inf))):
        projections.append(radial.integrate_radial(lw.multiply(T_inf[i]), N))

    regularized_residuals = []
    for k in range(top):
        current = e_coeffs[k]
        c_k = sum(e * projections[i] for i, e in enumerate(current))
        J_k = radial.integrate_radial(gamma.multiply(T_reg[k]), N, 0.0, 1.0)
        following = [-c_k * e00 - J_k, current[0] - c_k * e10] + list(current[1:])
        e_coeffs.append(following)
        step = apply_greens(T_reg[k], GreensMode.AT_ORIGIN, N, base).scale(-1.0)
        nxt = _with_quadratic_core((step + lw.scale(J_k) - T_reg[0].scale(c_k)).relabel("Treg%d" % (k + 1)))
        T_reg.append(nxt)
        residual = apply_operator(nxt, V, N) + T_reg[k] + lw.scale(c_k * e10)
        regularized_residuals.append(relative_residual(residual, T_reg[k], N))
        if regularized_residuals[-1] > tolerance:
            raise exceptions.ChannelLabError(
                "Regularized ladder residual %.3g at level %d." % (regularized_residuals[-1], k + 1),
                "ladder-residual",
                {"level": k + 1, "family": "regularized"},
            )

    decomposition = []
    r = grid.nodes
    window = (r >= 0.1) & (r <= 10.0)
    for k, field in enumerate(T_reg):
        direct = family.T_zero[k].values.copy()
        for i, e in enumerate(e_coeffs[k]):
            direct = direct - e * T_inf[i].values
        scale = max(float(np.max(np.abs(field.values[window]))), 1e-300)
        decomposition.append(float(np.max(np.abs(direct[window] - field.values[window])) / scale))

    residuals = dict(family.residuals)
    residuals["regularized"] = regularized_residuals
    logger.debug("regularization N=%d: e_1^0=%.8g e_0^0=%.8g", N, e10, e00)
    return family.model_copy(
        update={
            "e_coeffs": e_coeffs,
            "T_zero_reg": T_reg,
            "residuals": residuals,
            "decomposition_residuals": decomposition,
        }
    )


def nonradiative_family(N: int) -> List[NonradiativeMember]:
    """Every (k, sigma) with a polynomial-in-time non-radiative solution, flagged by energy finiteness."""
    profile = DimensionProfile.build_profile(N)
    members = []
    for k in range(profile.ladder_top_even + 1):
        members.append(NonradiativeMember(k=k, sigma=0, finite_energy=4 * k < N - 2))
    for k in range(profile.ladder_top_odd + 1):
        members.append(NonradiativeMember(k=k, sigma=1, finite_energy=4 * k < N - 4))
    return members


def _check_member(family: LadderFamily, k: int, sigma: int):
    profile = DimensionProfile.build_profile(family.N)
    top = profile.ladder_top_even if sigma == 0 else profile.ladder_top_odd
    if sigma not in (0, 1) or not 0 <= k <= top:
        raise exceptions.ChannelLabError(
            "(k=%d, sigma=%d) is not a non-radiative family member for N=%d." % (k, sigma, family.N),
            "level-range",
            {"k": k, "sigma": sigma, "top": top},
        )


def eval_nonradiative_profile(family: LadderFamily, k: int, sigma: int, t: float) -> RadialField:
    """S_k(t) = sum_i T_(k-i)^inf t^(2i+sigma) / (2i+sigma)!."""
    _check_member(family, k, sigma)
    result = None
    for i in range(k + 1):
        n = 2 * i + sigma
        term = family.T_inf[k - i].scale(t ** n / math.factorial(n))
        result = term if result is None else result + term
    return result.relabel("S%d_sigma%d" % (k, sigma))


def eval_nonradiative_velocity(family: LadderFamily, k: int, sigma: int, t: float) -> RadialField:
    """Time derivative of S_k(t)."""
    _check_member(family, k, sigma)
    result = None
    for i in range(k + 1):
        n = 2 * i + sigma
        if n == 0:
            continue
        term = family.T_inf[k - i].scale(t ** (n - 1) / math.factorial(n - 1))
        result = term if result is None else result + term
    if result is None:
        return RadialField.zeros(family.grid, label="dS%d_sigma%d" % (k, sigma))
    return result.relabel("dS%d_sigma%d" % (k, sigma))


def nonradiative_residual(family: LadderFamily, k: int, sigma: int, t: float) -> float:
    """Relative discrete residual of (d_tt - Delta + V) S_k at time t."""
    _check_member(family, k, sigma)
    N = family.N
    V = ground_state.potential_field(N, family.grid)
    acceleration = None
    for i in range(k + 1):
        n = 2 * i + sigma
        if n < 2:
            continue
        term = family.T_inf[k - i].scale(t ** (n - 2) / math.factorial(n - 2))
        acceleration = term if acceleration is None else acceleration + term
    profile = eval_nonradiative_profile(family, k, sigma, t)
    residual = apply_operator(profile, V, N)
    if acceleration is not None:
        residual = residual + acceleration
    reference = acceleration if acceleration is not None else profile
    return relative_residual(residual, reference, N)


def export_ladder(family: LadderFamily, directory: Union[str, Path]) -> Dict[str, Path]:
    """Writes ``ladder_N<N>.txt`` (columns r, T_k^inf, T_k^0, T~_k) and a JSON sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    columns = [family.grid.nodes]
    names = ["r"]
    for prefix, fields in (("Tinf", family.T_inf), ("Tzero", family.T_zero), ("Treg", family.T_zero_reg)):
        for k, field in enumerate(fields):
            columns.append(field.values)
            names.append("%s%d" % (prefix, k))
    table_path = directory / ("ladder_N%d.txt" % family.N)
    formatting.write_table(table_path, names, np.column_stack(columns))

    sidecar = {
        "N": family.N,
        "grid": family.grid.describe(),
        "columns": names,
        "exponents": {
            name: [list(pair) for pair in pairs] for name, pairs in family.exponents.items()
        },
        "expected_exponents": [expected_exponents(family.N, k) for k in range(family.top + 1)],
        "residuals": family.residuals,
        "sup_norms": family.sup_norms,
        "e_coeffs": family.e_coeffs,
        "e1_fitted": family.e1_fitted,
        "decomposition_residuals": family.decomposition_residuals,
        "truncation": (
            "the top regularized member sums e_i^K T_i^inf up to i = K+1 and uses the auxiliary "
            "level T_(K+1)^inf, which is not part of the exported T_inf columns"
        ),
    }
    sidecar_path = directory / ("ladder_N%d.json" % family.N)
    formatting.write_json(sidecar_path, sidecar)
    return {"table": table_path, "sidecar": sidecar_path}
