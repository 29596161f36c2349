"""
Blab Compactness - Seeded families of dilatations and empirical compactness diagnostics

A family is sampled from a constraint, every member is solved, and the
resulting maps are probed for equicontinuity, a uniformly Cauchy chain,
and whether the limit candidate stays in the class.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .admissibility import MembershipReport, SetConstraint, membership_ae
from .dirichlet import BoundaryData, DirichletSolution, solve_dirichlet
from .errors import BlabError, GridError, PreconditionError, SequenceError, SupportError
from .fields import (
    DEFAULT_ZERO_TOLERANCE,
    ComplexField,
    DilatationField,
    MapField,
    chordal_distance_array,
    dilatation_ratio,
    support_radius,
    wirtinger_derivatives,
)
from .solver import SolutionReport, SolverConfig, solve_principal, tail_report

logger = logging.getLogger(__name__)

MAX_FAILURE_FRACTION = 0.2
MIN_CHAIN = 3
LIMIT_STENCIL = 3
LIMIT_TOLERANCE = 5e-2
LIMIT_FRACTION = 5e-2


class SamplingMode(Enum):
    BOUNDARY_EXTREMAL = "boundary-extremal"
    UNIFORM_IN_DISK = "uniform-in-disk"
    OSCILLATING_PHASE = "oscillating-phase"


@dataclass(frozen=True, eq=False)
class FamilySampler:
    constraint: SetConstraint
    mode: SamplingMode
    seed: int
    count: int
    phase_scale: float = 8.0

    def __post_init__(self):
        if self.count < 1:
            raise PreconditionError(f"Family needs at least one member, got {self.count}")
        if not 0 <= self.seed < 2 ** 64:
            raise PreconditionError(f"Seed must fit in 64 unsigned bits, got {self.seed}")
        object.__setattr__(self, "mode", SamplingMode(self.mode))


def _member_rng(seed: int, index: int) -> np.random.Generator:
    # counter-based stream keyed by (seed, index); draws follow node order
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def sample_dilatation(sampler: FamilySampler, index: int) -> DilatationField:
    """Member `index` of the family; depends only on (seed, index) and the constraint"""
    if not 0 <= index < sampler.count:
        raise PreconditionError(f"Index {index} outside the family of {sampler.count}")
    constraint = sampler.constraint
    spec = constraint.spec
    c = constraint.center.values
    rho = constraint.radius.values
    shape = rho.shape

    if sampler.mode is SamplingMode.BOUNDARY_EXTREMAL:
        theta = _member_rng(sampler.seed, index).uniform(0.0, 2.0 * math.pi, size=shape)
        values = c + rho * np.exp(1j * theta)
    elif sampler.mode is SamplingMode.UNIFORM_IN_DISK:
        rng = _member_rng(sampler.seed, index)
        theta = rng.uniform(0.0, 2.0 * math.pi, size=shape)
        radius = rho * np.sqrt(rng.uniform(0.0, 1.0, size=shape))
        values = c + radius * np.exp(1j * theta)
    else:
        theta = index * sampler.phase_scale * np.abs(spec.nodes())
        values = c + rho * np.exp(1j * theta)

    values = np.where((c == 0) & (rho == 0), 0.0, values)
    radius = constraint.support_radius if constraint.support_radius is not None else support_radius(values, spec)
    return DilatationField.from_values(spec, values, radius)


@dataclass(frozen=True)
class PlaneProblem:
    """Principal solutions on the whole plane"""


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    phi: BoundaryData
    z0: complex = 0j


Problem = Union[PlaneProblem, DirichletProblem]


@dataclass(frozen=True, eq=False)
class SequenceMember:
    index: int
    mu: DilatationField
    map: Optional[MapField] = None
    report: Optional[SolutionReport] = None
    dirichlet: Optional[DirichletSolution] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True, eq=False)
class SequenceResult:
    members: Tuple[SequenceMember, ...]

    @property
    def failures(self) -> int:
        return sum(1 for m in self.members if not m.ok)

    @property
    def solved(self) -> List[SequenceMember]:
        return [m for m in self.members if m.ok]

    @property
    def maps(self) -> List[MapField]:
        return [m.map for m in self.solved]


def _solve_member(task) -> SequenceMember:
    sampler, index, config, problem = task
    mu = sample_dilatation(sampler, index)
    try:
        if isinstance(problem, DirichletProblem):
            solution = solve_dirichlet(mu, problem.phi, problem.z0, config)
            return SequenceMember(index=index, mu=mu, map=solution.f, dirichlet=solution)
        f, report = solve_principal(mu, config)
        return SequenceMember(index=index, mu=mu, map=f, report=report)
    except BlabError as exc:
        logger.warning("Member %d failed: %s", index, exc)
        return SequenceMember(index=index, mu=mu, error=str(exc))


def run_sequence(
    sampler: FamilySampler, config: SolverConfig, problem: Optional[Problem] = None, jobs: int = 1
) -> SequenceResult:
    """Solves every member in index order; results do not depend on the worker count"""
    problem = problem or PlaneProblem()
    tasks = [(sampler, index, config, problem) for index in range(sampler.count)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            members = tuple(pool.map(_solve_member, tasks))
    else:
        members = tuple(_solve_member(task) for task in tasks)
    result = SequenceResult(members)
    logger.info("Solved %d of %d members", sampler.count - result.failures, sampler.count)
    if result.failures > MAX_FAILURE_FRACTION * sampler.count:
        raise SequenceError(f"{result.failures} of {sampler.count} members failed")
    return result


def _compact_mask(f: MapField, center: complex, radius: float) -> np.ndarray:
    extent = np.array([center + radius, center - radius, center + 1j * radius, center - 1j * radius])
    if not f.spec.contains(extent).all():
        raise SupportError(f"Compact disk B({center}, {radius}) leaves the grid")
    return (np.abs(f.spec.nodes() - center) <= radius) & np.isfinite(f.values)


def _shifted(values: np.ndarray, di: int, dj: int) -> Tuple[np.ndarray, np.ndarray]:
    n0, n1 = values.shape
    a = values[max(0, -di):n0 - max(0, di), max(0, -dj):n1 - max(0, dj)]
    b = values[max(0, di):n0 - max(0, -di), max(0, dj):n1 - max(0, -dj)]
    return a, b


def _pair_moduli(f: MapField, mask: np.ndarray, max_cells: float) -> List[Tuple[float, float]]:
    """(offset length, largest chordal distance) for every node offset up to max_cells"""
    h = f.spec.spacing
    reach = int(math.floor(max_cells))
    values = np.where(mask, f.values, np.nan)
    out = []
    for di in range(0, reach + 1):
        for dj in range(-reach, reach + 1):
            if di == 0 and dj <= 0:
                continue
            length = math.hypot(di, dj)
            if length > max_cells:
                continue
            a, b = _shifted(values, di, dj)
            distance = chordal_distance_array(a, b)
            finite = np.isfinite(distance)
            out.append((length * h, float(distance[finite].max()) if finite.any() else 0.0))
    return out


@dataclass(frozen=True, eq=False)
class EquicontinuityReport:
    deltas: np.ndarray
    per_map: np.ndarray
    omega: np.ndarray
    omega_at_zero: float

    def rows(self):
        return [(float(d), float(w)) for d, w in zip(self.deltas, self.omega)]


def equicontinuity_modulus(
    maps: Sequence[MapField], center: complex, radius: float, deltas: Sequence[float]
) -> EquicontinuityReport:
    """omega(delta) = sup over the family and node pairs within delta of the chordal distance"""
    if not maps:
        raise PreconditionError("Equicontinuity needs at least one map")
    deltas = np.sort(np.asarray(deltas, dtype=np.float64))
    if deltas.size == 0 or deltas[0] <= 0:
        raise PreconditionError("Scales must be positive")
    per_map = np.zeros((len(maps), deltas.size))
    for k, f in enumerate(maps):
        mask = _compact_mask(f, center, radius)
        pairs = _pair_moduli(f, mask, deltas[-1] / f.spec.spacing + 1e-9)
        for j, delta in enumerate(deltas):
            within = [w for length, w in pairs if length <= delta * (1 + 1e-12)]
            per_map[k, j] = max(within, default=0.0)
    omega = np.maximum.accumulate(per_map.max(axis=0))
    if deltas.size >= 2 and deltas[1] > deltas[0]:
        slope = (omega[1] - omega[0]) / (deltas[1] - deltas[0])
        at_zero = float(np.clip(omega[0] - slope * deltas[0], 0.0, omega[0]))
    else:
        at_zero = float(omega[0])
    return EquicontinuityReport(deltas=deltas, per_map=per_map, omega=omega, omega_at_zero=at_zero)


def sup_chordal_distance(f: MapField, g: MapField, center: complex, radius: float) -> float:
    if f.spec != g.spec:
        raise GridError("Maps live on different grids")
    mask = _compact_mask(f, center, radius) & _compact_mask(g, center, radius)
    if not mask.any():
        return 0.0
    return float(chordal_distance_array(f.values[mask], g.values[mask]).max())


@dataclass(frozen=True, eq=False)
class ConvergenceReport:
    distances: np.ndarray
    chain: Tuple[int, ...]
    gaps: Tuple[float, ...]
    plateau_tol: float
    converged: bool

    @property
    def limit_index(self) -> int:
        return self.chain[-1]


def uniform_cauchy_check(
    maps: Sequence[MapField], center: complex, radius: float, plateau_tol: Optional[float] = None
) -> ConvergenceReport:
    """Greedy chain whose consecutive sup-chordal gaps at least halve

    Each step takes the nearest later member within half the previous gap,
    ties going to the lowest index. The chain is convergent when it has at
    least three members and its final gap is below the plateau tolerance.
    """
    n = len(maps)
    if n < MIN_CHAIN:
        raise PreconditionError(f"Cauchy check needs at least {MIN_CHAIN} maps, got {n}")
    distances = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            distances[i, j] = distances[j, i] = sup_chordal_distance(maps[i], maps[j], center, radius)

    chain = [0]
    gaps = []
    bound = math.inf
    while True:
        last = chain[-1]
        candidates = [j for j in range(last + 1, n) if distances[last, j] <= bound]
        if not candidates:
            break
        best = min(candidates, key=lambda j: (distances[last, j], j))
        gaps.append(float(distances[last, best]))
        chain.append(best)
        bound = 0.5 * gaps[-1]

    tol = maps[0].spec.spacing if plateau_tol is None else plateau_tol
    converged = len(chain) >= MIN_CHAIN and gaps[-1] <= tol
    logger.info("Cauchy chain %s, converged=%s", chain, converged)
    return ConvergenceReport(
        distances=distances, chain=tuple(chain), gaps=tuple(gaps), plateau_tol=float(tol), converged=converged
    )


def limit_dilatation(f: MapField) -> Tuple[np.ndarray, np.ndarray]:
    """Dilatation of a map from 3 x 3 averaged derivatives, and the nodes where it is defined

    Nodes within two cells of a missing sample or of the grid edge, and
    nodes where f_z is negligible, are left out.
    """
    f_z, f_zbar = wirtinger_derivatives(f)
    missing = ~(np.isfinite(f_z.values) & np.isfinite(f_zbar.values))

    def averaged(values: np.ndarray) -> np.ndarray:
        values = np.nan_to_num(values)
        return ndimage.uniform_filter(values.real, LIMIT_STENCIL) + 1j * ndimage.uniform_filter(
            values.imag, LIMIT_STENCIL
        )

    a, b = averaged(f_z.values), averaged(f_zbar.values)
    reach = LIMIT_STENCIL // 2 + 1
    defined = ~ndimage.binary_dilation(missing, np.ones((2 * reach + 1, 2 * reach + 1), dtype=bool))
    defined[:reach, :] = defined[-reach:, :] = False
    defined[:, :reach] = defined[:, -reach:] = False
    if not defined.any():
        return np.zeros(a.shape, dtype=np.complex128), defined
    scale = float(np.abs(a[defined]).max())
    tolerance = DEFAULT_ZERO_TOLERANCE * scale if scale > 0 else np.finfo(float).tiny
    defined &= np.abs(a) > tolerance
    return dilatation_ratio(a, b, tolerance), defined


def limit_membership(
    limit: Union[MapField, DilatationField], constraint: SetConstraint, tolerance: float = LIMIT_TOLERANCE
) -> MembershipReport:
    """mu of the limit in M(z) almost everywhere

    A coefficient field is checked directly. For a map the dilatation is
    recovered from its derivatives and checked where the constraint is
    constant over the difference stencil; the tolerance and the allowed
    violating fraction absorb the discretization error.
    """
    if isinstance(limit, DilatationField):
        return membership_ae(limit, constraint)
    if limit.spec != constraint.spec:
        raise GridError("Limit map and constraint live on different grids")
    mu, checked = limit_dilatation(limit)
    c = constraint.center.values
    rho = constraint.radius.values
    window = 2 * (LIMIT_STENCIL // 2 + 1) + 1
    for part in (rho, c.real, c.imag):
        checked &= ndimage.maximum_filter(part, window) == ndimage.minimum_filter(part, window)
    if not checked.any():
        raise PreconditionError("No node where the dilatation of the limit can be checked")
    excess = np.abs(mu - c) - rho
    violating = excess > tolerance
    # support and exterior are scored separately
    nontrivial = (rho > 0) | (c != 0)
    fractions = [float(violating[part].mean()) for part in (checked & nontrivial, checked & ~nontrivial) if part.any()]
    logger.debug("Limit dilatation checked on %d nodes, %d violating", int(checked.sum()), int(violating[checked].sum()))
    return MembershipReport(
        violating_fraction=max(fractions),
        max_excess=float(max(0.0, excess[checked].max())),
        allowed_fraction=LIMIT_FRACTION,
    )


@dataclass(frozen=True, slots=True)
class TailLimitReport:
    limit_tail: float
    member_tail: float
    verdict: bool


def hydrodynamic_limit_check(chain_maps: Sequence[MapField], r_supp: float) -> TailLimitReport:
    """Limit candidate (last map) keeps a tail no worse than twice the members'"""
    if not chain_maps:
        raise PreconditionError("Empty chain")
    tails = [tail_report(f, r_supp).tail_sup for f in chain_maps]
    member = max(tails[:-1], default=tails[-1])
    return TailLimitReport(limit_tail=tails[-1], member_tail=member, verdict=tails[-1] <= 2.0 * member + 1e-12)


@dataclass(frozen=True, slots=True)
class BoundaryLimitReport:
    limit_residual: float
    member_residual: float
    verdict: bool


def boundary_limit_check(chain: Sequence[DirichletSolution]) -> BoundaryLimitReport:
    """Limit candidate of a Dirichlet chain keeps the boundary residual of its members"""
    if not chain:
        raise PreconditionError("Empty chain")
    residuals = [s.boundary_residual for s in chain]
    member = max(residuals[:-1], default=residuals[-1])
    return BoundaryLimitReport(
        limit_residual=residuals[-1], member_residual=member, verdict=residuals[-1] <= 2.0 * member + 1e-12
    )


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    sequence: SequenceResult
    equicontinuity: EquicontinuityReport
    convergence: ConvergenceReport
    membership: MembershipReport
    tail: Optional[TailLimitReport] = None
    boundary: Optional[BoundaryLimitReport] = None
    settings: dict = field(default_factory=dict)

    @property
    def verdict(self) -> bool:
        checks = [self.convergence.converged, self.membership.verdict]
        if self.tail is not None:
            checks.append(self.tail.verdict)
        if self.boundary is not None:
            checks.append(self.boundary.verdict)
        return all(checks)


def _limit_candidate(member: SequenceMember) -> Union[MapField, DilatationField]:
    """Field whose dilatation stands for the limit's"""
    solution = member.dirichlet
    if solution is None:
        return member.map
    if solution.G is None:
        # constant data: f carries no dilatation
        return member.mu
    # f = F o G has the dilatation of G wherever F' does not vanish
    spec = solution.G.spec
    inside = np.abs(spec.nodes()) < 1.0
    return MapField(ComplexField(spec, np.where(inside, solution.G.values, np.nan)))


def run_experiment(
    sampler: FamilySampler,
    config: SolverConfig,
    compact: Tuple[complex, float],
    deltas: Sequence[float],
    problem: Optional[Problem] = None,
    jobs: int = 1,
) -> ExperimentResult:
    """Sequence, equicontinuity, Cauchy chain and limit checks in one pass"""
    center, radius = compact
    sequence = run_sequence(sampler, config, problem, jobs)
    solved = sequence.solved
    maps = [m.map for m in solved]
    equicontinuity = equicontinuity_modulus(maps, center, radius, deltas)
    convergence = uniform_cauchy_check(maps, center, radius)
    limit = solved[convergence.limit_index]
    membership = limit_membership(_limit_candidate(limit), sampler.constraint)
    chain_members = [solved[i] for i in convergence.chain]

    tail = boundary = None
    if isinstance(problem, DirichletProblem):
        boundary = boundary_limit_check([m.dirichlet for m in chain_members])
    else:
        r_supp = max(m.report.support_radius for m in chain_members)
        try:
            tail = hydrodynamic_limit_check([m.map for m in chain_members], r_supp)
        except PreconditionError as exc:
            logger.warning("Skipping the tail check: %s", exc)
    return ExperimentResult(
        sequence=sequence,
        equicontinuity=equicontinuity,
        convergence=convergence,
        membership=membership,
        tail=tail,
        boundary=boundary,
        settings={"seed": sampler.seed, "count": sampler.count, "mode": sampler.mode.value},
    )
