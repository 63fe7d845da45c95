import enum
import json
import math
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from typing_extensions import Literal

from channellab import exceptions

MIN_GRID_NODES = 16
MAX_TAIL_TERMS = 8
# relative size below which merged tail coefficients count as cancelled
TAIL_CANCELLATION = 1e-13


class GridPolicy(str, enum.Enum):
    UNIFORM = "uniform"
    GRADED_LOG = "graded-log"


class TailEnd(str, enum.Enum):
    ORIGIN = "origin"
    INFINITY = "infinity"


class Space(str, enum.Enum):
    H1_R = "H1_R"
    L2_R = "L2_R"


class ScalingKind(str, enum.Enum):
    H1_CRITICAL = "H1-critical"
    L2_CRITICAL = "L2-critical"
    POTENTIAL = "potential"


class ZVariant(str, enum.Enum):
    PLAIN = "plain"
    BASED = "based"
    MULTI = "multi"
    COMPAT = "compat"


class GreensMode(str, enum.Enum):
    AT_ORIGIN = "at-origin"
    AT_INFINITY = "at-infinity"


class PotentialVariant(str, enum.Enum):
    SINGLE = "single"
    MULTISOLITON = "multisoliton"
    GENERAL = "general"
    FREE = "free"


class DimensionProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int
    sigma: int
    ladder_top_even: int
    ladder_top_odd: int
    power_span_count: int

    @model_validator(mode="after")
    def _check_counts(self):
        if self.N % 2 or self.N < 8:
            raise exceptions.ChannelLabError(
                "Dimension must be an even integer of at least 8.", "dimension", {"N": self.N}
            )
        expected = DimensionProfile._counts(self.N)
        actual = (self.sigma, self.ladder_top_even, self.ladder_top_odd, self.power_span_count)
        if actual != expected:
            raise exceptions.ChannelLabError(
                "Dimension profile counts are inconsistent with N.", "dimension", {"N": self.N}
            )
        return self

    @staticmethod
    def _counts(N: int) -> Tuple[int, int, int, int]:
        sigma = (N % 4) // 2
        span = N // 4 if sigma == 0 else (N - 2) // 4
        return sigma, (N - 6) // 2, (N - 8) // 2, span

    # return the profile of an even dimension
    @staticmethod
    def build_profile(N: int) -> "DimensionProfile":
        if not isinstance(N, (int, np.integer)) or N % 2 or N < 8:
            raise exceptions.ChannelLabError(
                "Dimension must be an even integer of at least 8.", "dimension", {"N": N}
            )
        sigma, top_even, top_odd, span = DimensionProfile._counts(int(N))
        return DimensionProfile(
            N=int(N),
            sigma=sigma,
            ladder_top_even=top_even,
            ladder_top_odd=top_odd,
            power_span_count=span,
        )


class PowerTail(BaseModel):
    """Asymptotic expansion sum(c * r**e) of a radial function at one end of its grid.

    Terms are kept ordered by dominance at that end, so ``terms[0]`` is the leading
    behaviour: the most negative exponent at the origin, the largest one at infinity.
    """

    model_config = ConfigDict(frozen=True)

    end: TailEnd
    terms: Tuple[Tuple[float, float], ...]

    @model_validator(mode="after")
    def _order_terms(self):
        if not self.terms:
            raise exceptions.ChannelLabError("A power tail needs at least one term.", "tail")
        for exponent, coefficient in self.terms:
            if not (math.isfinite(exponent) and math.isfinite(coefficient)):
                raise exceptions.ChannelLabError("Tail terms must be finite.", "tail", self.terms)
        ordered = tuple(sorted(self.terms, key=self._dominance))
        object.__setattr__(self, "terms", ordered)
        return self

    def _dominance(self, term):
        return term[0] if self.end == TailEnd.ORIGIN else -term[0]

    @property
    def exponent(self) -> float:
        return self.terms[0][0]

    @property
    def coefficient(self) -> float:
        return self.terms[0][1]

    @staticmethod
    def monomial(end: TailEnd, exponent: float, coefficient: float) -> Optional["PowerTail"]:
        if coefficient == 0:
            return None
        return PowerTail(end=TailEnd(end), terms=((float(exponent), float(coefficient)),))

    @staticmethod
    def from_terms(end: TailEnd, terms) -> Optional["PowerTail"]:
        merged: Dict[float, List[float]] = {}
        for exponent, coefficient in terms:
            key = round(float(exponent), 12)
            entry = merged.setdefault(key, [0.0, 0.0])
            entry[0] += float(coefficient)
            entry[1] = max(entry[1], abs(float(coefficient)))
        kept = [
            (exponent, total)
            for exponent, (total, scale) in merged.items()
            if total != 0 and abs(total) > TAIL_CANCELLATION * scale
        ]
        if not kept:
            # full cancellation: keep the rounding residue so the sum still has a tail
            kept = [(exponent, total) for exponent, (total, _) in merged.items() if total != 0]
        if not kept:
            return None
        tail = PowerTail(end=TailEnd(end), terms=tuple(kept))
        if len(tail.terms) > MAX_TAIL_TERMS:
            tail = PowerTail(end=tail.end, terms=tail.terms[:MAX_TAIL_TERMS])
        return tail

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        return sum(c * r ** e for e, c in self.terms)

    def scaled(self, factor: float) -> Optional["PowerTail"]:
        return PowerTail.from_terms(self.end, [(e, c * factor) for e, c in self.terms])

    def derivative(self) -> Optional["PowerTail"]:
        return PowerTail.from_terms(self.end, [(e - 1.0, c * e) for e, c in self.terms if e != 0])

    def laplacian(self, N: int) -> Optional["PowerTail"]:
        return PowerTail.from_terms(
            self.end, [(e - 2.0, c * e * (e + N - 2)) for e, c in self.terms if e * (e + N - 2) != 0]
        )

    def rescaled(self, lam: float, power: float) -> Optional["PowerTail"]:
        # lam**-power * f(r / lam)
        return PowerTail.from_terms(self.end, [(e, c * lam ** (-power - e)) for e, c in self.terms])

    def shifted(self, shift: float, factor: float = 1.0) -> Optional["PowerTail"]:
        return PowerTail.from_terms(self.end, [(e + shift, c * factor) for e, c in self.terms])

    @staticmethod
    def combine(a: Optional["PowerTail"], b: Optional["PowerTail"], end: TailEnd) -> Optional["PowerTail"]:
        terms = list(a.terms if a else ()) + list(b.terms if b else ())
        return PowerTail.from_terms(end, terms)

    @staticmethod
    def product(a: "PowerTail", b: "PowerTail") -> Optional["PowerTail"]:
        return PowerTail.from_terms(
            a.end, [(ea + eb, ca * cb) for ea, ca in a.terms for eb, cb in b.terms]
        )


class RadialGrid(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    nodes: np.ndarray
    policy: GridPolicy

    @field_validator("nodes", mode="before")
    @classmethod
    def _as_array(cls, nodes):
        array = np.array(nodes, dtype=float)
        if array.ndim != 1:
            raise exceptions.ChannelLabError("Grid nodes must be one-dimensional.", "grid")
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def _check_nodes(self):
        nodes = self.nodes
        if nodes.size < MIN_GRID_NODES:
            raise exceptions.ChannelLabError(
                "A radial grid needs at least %d nodes." % MIN_GRID_NODES, "grid", {"count": int(nodes.size)}
            )
        if not np.all(np.isfinite(nodes)):
            raise exceptions.ChannelLabError("Grid nodes must be finite.", "grid")
        if nodes[0] < 0:
            raise exceptions.ChannelLabError("Grid nodes must be nonnegative.", "grid")
        if np.any(np.diff(nodes) <= 0):
            raise exceptions.ChannelLabError("Grid nodes must be strictly increasing.", "grid")
        if self.policy == GridPolicy.UNIFORM:
            steps = np.diff(nodes)
            if np.max(np.abs(steps - steps.mean())) > 1e-9 * steps.mean():
                raise exceptions.ChannelLabError("Uniform grid spacing is not constant.", "grid")
        return self

    @property
    def count(self) -> int:
        return int(self.nodes.size)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def has_origin(self) -> bool:
        return self.nodes[0] == 0.0

    @property
    def is_log(self) -> bool:
        """True when the grid is geometric all the way down (no node at the origin)."""
        return self.policy == GridPolicy.GRADED_LOG and not self.has_origin

    @property
    def spacing(self) -> float:
        return float((self.nodes[-1] - self.nodes[0]) / (self.nodes.size - 1))

    @property
    def first_positive(self) -> int:
        return 1 if self.has_origin else 0

    def anchor_index(self, anchor: float = 1.0) -> int:
        index = int(np.argmin(np.abs(self.nodes - anchor)))
        if abs(self.nodes[index] - anchor) > 1e-12 * max(1.0, anchor):
            raise exceptions.ChannelLabError(
                "Grid has no node at r = %g." % anchor, "grid", {"anchor": anchor}
            )
        return index

    def matches(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.policy == other.policy
            and self.nodes.shape == other.nodes.shape
            and bool(np.array_equal(self.nodes, other.nodes))
        )

    def describe(self) -> Dict[str, Any]:
        return {"policy": self.policy.value, "count": self.count, "r_min": self.r_min, "r_max": self.r_max}


def _frozen_array(values, expected: int, name: str) -> np.ndarray:
    array = np.array(values, dtype=float)
    if array.shape != (expected,):
        raise exceptions.ChannelLabError(
            "%s length %s does not match the grid (%d nodes)." % (name, array.shape, expected), "grid"
        )
    if not np.all(np.isfinite(array)):
        raise exceptions.ChannelLabError("%s contain non-finite samples." % name, "non-finite")
    array.setflags(write=False)
    return array


class RadialField(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: RadialGrid
    values: np.ndarray
    zero_tail: Optional[PowerTail] = None
    inf_tail: Optional[PowerTail] = None
    derivative: Optional[np.ndarray] = None
    label: str = ""

    @model_validator(mode="before")
    @classmethod
    def _coerce_arrays(cls, data):
        if isinstance(data, dict) and "grid" in data and isinstance(data["grid"], RadialGrid):
            count = data["grid"].count
            data = dict(data)
            data["values"] = _frozen_array(data.get("values"), count, "Field values")
            if data.get("derivative") is not None:
                data["derivative"] = _frozen_array(data["derivative"], count, "Field derivative")
        return data

    @model_validator(mode="after")
    def _check_tail_ends(self):
        if self.zero_tail is not None and self.zero_tail.end != TailEnd.ORIGIN:
            raise exceptions.ChannelLabError("zero_tail must describe the origin end.", "tail")
        if self.inf_tail is not None and self.inf_tail.end != TailEnd.INFINITY:
            raise exceptions.ChannelLabError("inf_tail must describe the infinity end.", "tail")
        return self

    @staticmethod
    def zeros(grid: RadialGrid, label: str = "zero") -> "RadialField":
        return RadialField(grid=grid, values=np.zeros(grid.count), derivative=np.zeros(grid.count), label=label)

    @property
    def is_compact(self) -> bool:
        """No tail at infinity and an exactly vanishing last sample."""
        return self.inf_tail is None and self.values[-1] == 0.0

    def derivative_values(self) -> np.ndarray:
        """Exact derivative when known, second-order finite differences otherwise."""
        if self.derivative is not None:
            return self.derivative
        grid = self.grid
        if grid.is_log:
            return np.gradient(self.values, np.log(grid.nodes), edge_order=2) / grid.nodes
        return np.gradient(self.values, grid.nodes, edge_order=2)

    def with_tails(self, zero_tail=None, inf_tail=None, label: Optional[str] = None) -> "RadialField":
        return RadialField(
            grid=self.grid,
            values=self.values,
            zero_tail=zero_tail,
            inf_tail=inf_tail,
            derivative=self.derivative,
            label=self.label if label is None else label,
        )

    def relabel(self, label: str) -> "RadialField":
        return self.model_copy(update={"label": label})

    def _check_grid(self, other: "RadialField"):
        if not self.grid.matches(other.grid):
            raise exceptions.ChannelLabError("Fields live on different grids.", "grid")

    def _combine(self, other: "RadialField", sign: float) -> "RadialField":
        self._check_grid(other)
        derivative = None
        if self.derivative is not None or other.derivative is not None:
            derivative = self.derivative_values() + sign * other.derivative_values()
        other_zero = other.zero_tail.scaled(sign) if other.zero_tail else None
        other_inf = other.inf_tail.scaled(sign) if other.inf_tail else None
        zero_tail = _sum_tail(self.zero_tail, other_zero, None, None, TailEnd.ORIGIN)
        inf_tail = _sum_tail(self.inf_tail, other_inf, self.is_compact, other.is_compact, TailEnd.INFINITY)
        return RadialField(
            grid=self.grid,
            values=self.values + sign * other.values,
            zero_tail=zero_tail,
            inf_tail=inf_tail,
            derivative=derivative,
        )

    def scale(self, factor: float) -> "RadialField":
        factor = float(factor)
        return RadialField(
            grid=self.grid,
            values=self.values * factor,
            zero_tail=self.zero_tail.scaled(factor) if self.zero_tail and factor else None,
            inf_tail=self.inf_tail.scaled(factor) if self.inf_tail and factor else None,
            derivative=None if self.derivative is None else self.derivative * factor,
            label=self.label,
        )

    def multiply(self, other: "RadialField") -> "RadialField":
        """Pointwise product with tails multiplied term by term."""
        self._check_grid(other)
        derivative = None
        if self.derivative is not None or other.derivative is not None:
            derivative = self.derivative_values() * other.values + self.values * other.derivative_values()
        zero_tail = None
        if self.zero_tail is not None and other.zero_tail is not None:
            zero_tail = PowerTail.product(self.zero_tail, other.zero_tail)
        inf_tail = None
        if self.inf_tail is not None and other.inf_tail is not None:
            inf_tail = PowerTail.product(self.inf_tail, other.inf_tail)
        return RadialField(
            grid=self.grid,
            values=self.values * other.values,
            zero_tail=zero_tail,
            inf_tail=inf_tail,
            derivative=derivative,
        )

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self.scale(-1.0)

    def __mul__(self, other):
        if isinstance(other, RadialField):
            return self.multiply(other)
        return self.scale(other)

    __rmul__ = __mul__

    def __truediv__(self, factor):
        return self.scale(1.0 / factor)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def verify_tails(self, decades: float = 1.0, tolerance: float = 0.1) -> Dict[str, float]:
        """Compare stored tail exponents with log-log slopes fitted on the end decades.

        Returns the fitted slopes; raises when a stored exponent is off by more than ``tolerance``.
        """
        from channellab.radial import fit_power_law

        fitted = {}
        for end, tail in ((TailEnd.ORIGIN, self.zero_tail), (TailEnd.INFINITY, self.inf_tail)):
            if tail is None:
                continue
            fit = fit_power_law(self, end, decades)
            fitted[end.value] = fit.exponent
            if abs(fit.exponent - tail.exponent) > tolerance:
                raise exceptions.ChannelLabError(
                    "Stored %s tail exponent %.4g disagrees with fitted slope %.4g."
                    % (end.value, tail.exponent, fit.exponent),
                    "tail",
                    {"end": end.value, "stored": tail.exponent, "fitted": fit.exponent, "label": self.label},
                )
        return fitted


def _sum_tail(a, b, a_compact, b_compact, end):
    if a is None and b is None:
        return None
    if end == TailEnd.INFINITY:
        # an untailed summand only drops out when it vanishes beyond the grid
        if (a is None and not a_compact) or (b is None and not b_compact):
            return None
    elif a is None or b is None:
        return None
    return PowerTail.combine(a, b, end)


class PowerLawFit(BaseModel):
    exponent: float
    coefficient: float
    residual: float


class MultisolitonGeometry(BaseModel):
    """Separation data of descending scales; ``ratio`` is sup lambda_{j+1}/lambda_j."""

    ratio: float
    gamma: float
    gamma_exponent: int = 1
    R_plus: List[float] = []
    R_minus: List[float] = []

    @model_validator(mode="after")
    def _check_radii(self):
        if not 0.0 <= self.ratio < 1.0:
            raise exceptions.ChannelLabError("Separation ratio must lie in [0, 1).", "non-monotone")
        bound = self.ratio ** 0.25
        for plus, minus in zip(self.R_plus, self.R_minus):
            if minus > bound * plus * (1 + 1e-12):
                raise exceptions.ChannelLabError(
                    "Inner radius exceeds gamma**(1/4) times the outer radius.", "geometry",
                    {"R_plus": plus, "R_minus": minus},
                )
        return self


class WaveMapParameters(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    k: int = Field(3, ge=1)
    ell: int = 0
    lam: float = Field(1.0, alias="lambda", gt=0)
    ell_convention: Literal["pi", "k"] = "pi"

    @property
    def dimension(self) -> int:
        return 2 * self.k + 2

    @property
    def offset(self) -> float:
        return self.ell * (math.pi if self.ell_convention == "pi" else self.k)


class PhiSeries(BaseModel):
    """Coefficients phi_j of phi(r, u) = sum phi_j r**((j-1)(N/2-1)-2) u**j."""

    model_config = ConfigDict(frozen=True)

    N: int
    coefficients: Dict[int, float]
    wavemap_k: Optional[int] = None

    @field_validator("coefficients")
    @classmethod
    def _check_coefficients(cls, coefficients):
        if any(int(j) < 2 for j in coefficients):
            raise exceptions.ChannelLabError("Series coefficients start at j = 2.", "series", coefficients)
        nonzero = sorted((int(j), float(c)) for j, c in coefficients.items() if c != 0)
        if len(nonzero) >= 8:
            for tau in (1.0, 10.0):
                sizes = np.array([abs(c) * tau ** j for j, c in nonzero])
                settled = sizes[-max(2, len(sizes) // 4):]
                if sizes[-1] > 1e-8 * sizes.max() or np.any(np.diff(settled) > 0):
                    raise exceptions.ChannelLabError(
                        "Stored coefficients are not super-exponentially small (tau = %g)." % tau,
                        "series-divergence",
                    )
        return {int(j): float(c) for j, c in coefficients.items()}

    def exponent(self, j: int) -> float:
        return (j - 1) * (self.N / 2.0 - 1.0) - 2.0

    @property
    def orders(self) -> List[int]:
        return sorted(j for j, c in self.coefficients.items() if c != 0)

    # return the Taylor coefficients of the wave-map nonlinearity in dimension 2k + 2
    @staticmethod
    def from_wavemap(k: int, terms: int = 40) -> "PhiSeries":
        coefficients = {}
        for m in range(1, terms + 1):
            coefficients[2 * m + 1] = k * k * (-1) ** (m + 1) * 2.0 ** (2 * m) / math.factorial(2 * m + 1)
        return PhiSeries(N=2 * k + 2, coefficients=coefficients, wavemap_k=k)


class PotentialSpec(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    N: int
    variant: PotentialVariant
    lam: float = Field(1.0, gt=0)
    lambdas: Optional[List[float]] = None
    wavemap: Optional[WaveMapParameters] = None
    series: Optional[PhiSeries] = None
    static_origin_value: Optional[float] = None

    @model_validator(mode="after")
    def _check_variant(self):
        if self.variant == PotentialVariant.MULTISOLITON:
            lambdas = self.lambdas or []
            if not lambdas or any(l <= 0 for l in lambdas) or any(
                b >= a for a, b in zip(lambdas, lambdas[1:])
            ):
                raise exceptions.ChannelLabError(
                    "Multisoliton scales must be positive and strictly decreasing.", "non-monotone",
                    {"lambdas": lambdas},
                )
        if self.variant == PotentialVariant.GENERAL:
            if self.wavemap is None and self.series is None:
                raise exceptions.ChannelLabError(
                    "A general potential needs a nonlinearity (series or wave-map parameters).", "static-solution"
                )
            if self.wavemap is not None and self.wavemap.dimension != self.N:
                raise exceptions.ChannelLabError(
                    "Wave-map degree k requires N = 2k + 2.", "dimension", {"N": self.N, "k": self.wavemap.k}
                )
        return self

    @property
    def scales(self) -> List[float]:
        if self.variant == PotentialVariant.MULTISOLITON:
            return list(self.lambdas)
        if self.variant == PotentialVariant.GENERAL and self.wavemap is not None:
            return [self.wavemap.lam]
        return [self.lam]


class LadderFamily(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    N: int
    grid: RadialGrid
    T_inf: List[RadialField]
    T_zero: List[RadialField]
    T_aux: Optional[RadialField] = None
    e_coeffs: List[List[float]] = []
    T_zero_reg: List[RadialField] = []
    residuals: Dict[str, List[float]] = {}
    exponents: Dict[str, List[Tuple[float, float]]] = {}
    sup_norms: Dict[str, List[float]] = {}
    e1_fitted: Optional[float] = None
    decomposition_residuals: List[float] = []

    @property
    def top(self) -> int:
        return (self.N - 6) // 2

    @property
    def regularized(self) -> bool:
        return bool(self.T_zero_reg)


class NonradiativeMember(BaseModel):
    model_config = ConfigDict(frozen=True)

    k: int
    sigma: Literal[0, 1]
    finite_energy: bool = True

    @property
    def label(self) -> str:
        return "S%d_sigma%d" % (self.k, self.sigma)


class SpanBasis(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    fields: List[RadialField]
    space: Space
    R: float = Field(0.0, ge=0)
    N: int
    labels: List[str] = []
    excluded: List[str] = []

    @model_validator(mode="after")
    def _check_members(self):
        if self.labels and len(self.labels) != len(self.fields):
            raise exceptions.ChannelLabError("One label per basis member is required.", "basis")
        if not self.labels:
            self.labels = [f.label or "b%d" % i for i, f in enumerate(self.fields)]
        for field in self.fields[1:]:
            field._check_grid(self.fields[0])
        return self


class Projection(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray
    remainder: Union[RadialField, Tuple[RadialField, RadialField]]
    condition_number: float
    labels: List[str] = []
    space: Space


class CutoffProfile(BaseModel):
    """Smooth radial cutoff: 1 up to ``inner``, 0 from ``outer`` on, quintic smoothstep between."""

    model_config = ConfigDict(frozen=True)

    inner: float = 10.0
    outer: float = 11.0

    def _position(self, r, scale):
        x = (np.asarray(r, dtype=float) / scale - self.inner) / (self.outer - self.inner)
        return np.clip(x, 0.0, 1.0)

    def evaluate(self, r, scale: float = 1.0):
        x = self._position(r, scale)
        return 1.0 - x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)

    def derivative(self, r, scale: float = 1.0):
        x = self._position(r, scale)
        return -30.0 * x * x * (1.0 - x) ** 2 / ((self.outer - self.inner) * scale)

    def second_derivative(self, r, scale: float = 1.0):
        x = self._position(r, scale)
        return -60.0 * x * (1.0 - x) * (1.0 - 2.0 * x) / ((self.outer - self.inner) * scale) ** 2


class WaveState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float = 0.0
    u: RadialField
    v: RadialField

    @model_validator(mode="after")
    def _check_grids(self):
        self.u._check_grid(self.v)
        return self

    @property
    def grid(self) -> RadialGrid:
        return self.u.grid


class EvolutionProbe(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    grid: RadialGrid
    times: np.ndarray
    radii: List[float]
    energies: np.ndarray
    conserved: Optional[np.ndarray] = None
    snapshot_times: List[float] = []
    snapshots_u: List[np.ndarray] = []
    snapshots_v: List[np.ndarray] = []
    dt: float
    direction: int = 1
    t_center: float = 0.0
    lambda_max: float
    lambda_min: float

    def energy_series(self, R: float) -> np.ndarray:
        for index, radius in enumerate(self.radii):
            if abs(radius - R) <= 1e-12 * max(1.0, R):
                return self.energies[:, index]
        raise exceptions.ChannelLabError("Radius %g was not probed." % R, "probe", {"radii": self.radii})

    def snapshot_state(self, index: int) -> WaveState:
        from channellab.radial import field_from_samples

        return WaveState(
            t=self.snapshot_times[index],
            u=field_from_samples(self.grid, self.snapshots_u[index]),
            v=field_from_samples(self.grid, self.snapshots_v[index]),
        )

    @property
    def unstable_rate(self) -> float:
        return math.sqrt(-self.lambda_min) if self.lambda_min < 0 else 0.0


class OuterEnergy(BaseModel):
    E_minus: float
    E_plus: float
    plateau_quality: float
    flagged: bool = False

    @property
    def total(self) -> float:
        return self.E_minus + self.E_plus


class ShellProfile(BaseModel):
    radii: List[float]
    values: List[float]
    k_min: int
    k_max: int

    @property
    def sup(self) -> float:
        return max(self.values) if self.values else 0.0

    @property
    def argmax(self) -> Optional[float]:
        if not self.values:
            return None
        return self.radii[int(np.argmax(self.values))]


class Provenance(BaseModel):
    config_hash: str
    grid: Dict[str, Any]
    tolerances: Dict[str, float]
    created_at: str
    duration_seconds: float = 0.0
    measure: str = "surface measure of the unit sphere omitted from all integrals"


class BumpDatum(BaseModel):
    """One ensemble datum: weighted bumps from the fixed dictionary in each slot, or the kernel direction.

    ``u0_terms`` and ``u1_terms`` hold (dictionary index, coefficient) pairs; ``scale`` is the
    factor that made the datum unit-normalized on the solver grid.
    """

    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    seed: int
    kind: Literal["bumps", "kernel"] = "bumps"
    support: Tuple[float, float] = (0.5, 3.0)
    u0_terms: List[Tuple[int, float]] = []
    u1_terms: List[Tuple[int, float]] = []
    scale: float = 1.0
    lam: float = Field(1.0, gt=0)

    @property
    def slots(self) -> List[int]:
        return [slot for slot, terms in ((0, self.u0_terms), (1, self.u1_terms)) if terms]


class ChannelRecord(BaseModel):
    index: int
    seed: int
    E_out_minus: float
    E_out_plus: float
    proj_norm: float
    z_norm: float
    ratio: Optional[float]
    plateau_quality: float
    flags: List[str] = []
    condition_numbers: List[float] = []
    proj_norm_literal: Optional[float] = None
    z_k_min: Optional[int] = None
    z_k_max: Optional[int] = None

    CSV_HEADER: ClassVar[List[str]] = ["index", "seed", "E_out_minus", "E_out_plus", "proj_norm", "z_norm", "ratio",
                  "plateau_quality", "flags"]

    @property
    def excluded(self) -> bool:
        return bool(self.flags)

    def csv_row(self) -> List[Any]:
        return [
            self.index,
            self.seed,
            repr(self.E_out_minus),
            repr(self.E_out_plus),
            repr(self.proj_norm),
            repr(self.z_norm),
            "" if self.ratio is None else repr(self.ratio),
            repr(self.plateau_quality),
            ";".join(self.flags),
        ]


class ChannelReport(BaseModel):
    experiment: str
    records: List[ChannelRecord] = []
    summary: Dict[str, Any] = {}
    provenance: Optional[Provenance] = None


# Configuration

ExperimentName = Literal["ladder", "nonradiative", "channel", "drift", "resonant", "wavemap"]


class PotentialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: Literal["single", "multisoliton", "wavemap", "free"] = "single"
    lam: float = Field(1.0, alias="lambda", gt=0)
    lambdas: Optional[List[float]] = None
    wavemap: Optional[WaveMapParameters] = None

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "multisoliton":
            lambdas = self.lambdas or []
            if len(lambdas) < 1 or any(l <= 0 for l in lambdas) or any(b >= a for a, b in zip(lambdas, lambdas[1:])):
                raise ValueError("lambdas must be positive and strictly decreasing")
        if self.kind == "wavemap" and self.wavemap is None:
            self.wavemap = WaveMapParameters()
        return self

    @property
    def scales(self) -> List[float]:
        if self.kind == "multisoliton":
            return list(self.lambdas)
        if self.kind == "wavemap":
            return [self.wavemap.lam]
        return [self.lam]


class GridConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r_max: float = Field(30.0, gt=0)
    points: int = Field(1501, ge=MIN_GRID_NODES)
    graded_points: int = Field(2001, ge=MIN_GRID_NODES)
    graded_r_min: float = Field(1e-3, gt=0)
    graded_r_max: float = Field(1e3, gt=0)

    @property
    def spacing(self) -> float:
        return self.r_max / (self.points - 1)


class TimeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_max: float = Field(10.0, gt=0)
    cfl: float = Field(0.9, gt=0, le=1)
    snapshot_stride: int = Field(4, ge=1)


class EnsembleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(0, ge=0)
    seed: int = 0
    support: Tuple[float, float] = (0.5, 3.0)
    amplitude: Literal["normal"] = "normal"
    parity: bool = True
    slot: Optional[int] = None
    include_kernel: bool = True

    @field_validator("support")
    @classmethod
    def _check_support(cls, support):
        a, b = support
        if not 0 <= a < b:
            raise ValueError("support must satisfy 0 <= a < b")
        return support


class NormConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    alpha: float = -3.0
    z_variant: ZVariant = ZVariant.MULTI
    gamma_exponent: Literal[1, 2] = 1
    lattice_density: int = Field(16, ge=2)


class ProbeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    radii: List[float] = [0.0]
    plateau_threshold: float = Field(0.2, gt=0)

    @field_validator("radii")
    @classmethod
    def _check_radii(cls, radii):
        if not radii or any(r < 0 for r in radii):
            raise ValueError("probe radii must be a nonempty list of nonnegative radii")
        return radii


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    dimension: int = 8
    potential: PotentialConfig = PotentialConfig()
    grid: GridConfig = GridConfig()
    time: TimeConfig = TimeConfig()
    ensemble: EnsembleConfig = EnsembleConfig()
    norm: NormConfig = NormConfig()
    probes: ProbeConfig = ProbeConfig()
    experiment: ExperimentName
    level: Optional[int] = None
    sigma: Optional[int] = None

    @field_validator("dimension")
    @classmethod
    def _check_dimension(cls, dimension):
        if dimension % 2 or dimension < 8:
            raise ValueError("dimension must be an even integer of at least 8")
        return dimension

    @model_validator(mode="after")
    def _check_consistency(self):
        margin = max(self.probes.radii) + self.time.t_max + 2 * self.grid.spacing
        if self.grid.r_max < margin:
            raise ValueError(
                "causal margin violated: r_max = %g but probes need at least %g" % (self.grid.r_max, margin)
            )
        if self.experiment in ("channel", "wavemap", "resonant"):
            reach = self.ensemble.support[1] + self.time.t_max + 2 * self.grid.spacing
            if reach > self.grid.r_max:
                raise ValueError("ensemble support plus t_max must stay inside r_max (needs %g)" % reach)
        sigma = (self.dimension % 4) // 2
        if self.ensemble.parity and self.ensemble.slot is not None and self.ensemble.slot != sigma:
            raise ValueError("parity mode puts data in slot %d for this dimension" % sigma)
        if self.potential.kind == "wavemap" and self.potential.wavemap.dimension != self.dimension:
            raise ValueError("wave-map degree k requires dimension 2k + 2")
        if self.sigma is not None and self.sigma not in (0, 1):
            raise ValueError("sigma must be 0 or 1")
        return self

    @property
    def profile(self) -> DimensionProfile:
        return DimensionProfile.build_profile(self.dimension)

    # return a config from a JSON file
    @staticmethod
    def build_config(path) -> "ExperimentConfig":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as error:
            raise exceptions.ChannelLabError("Could not read config %s: %s" % (path, error), "config")
        return ExperimentConfig.from_payload(payload)

    @staticmethod
    def from_payload(payload: Dict[str, Any]) -> "ExperimentConfig":
        try:
            return ExperimentConfig.model_validate(payload)
        except ValidationError as error:
            raise config_error(error)

    def with_overrides(self, **updates) -> "ExperimentConfig":
        payload = self.model_dump(mode="json", by_alias=True)
        for key, value in updates.items():
            if value is None:
                continue
            if key == "seed":
                payload["ensemble"]["seed"] = value
            else:
                payload[key] = value
        return ExperimentConfig.from_payload(payload)


def config_error(error: ValidationError) -> exceptions.ChannelLabError:
    problems = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append({"field": path, "message": item["msg"]})
    message = "; ".join("%s: %s" % (p["field"], p["message"]) for p in problems)
    return exceptions.ChannelLabError("Invalid config: " + message, "config", problems)
