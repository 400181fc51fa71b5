"""Local-realistic membership test for behaviors via linear programming.

A behavior admits a local hidden-variable model iff it is a convex mixture
of deterministic local strategies, i.e. the system {A x = b, x >= 0} is
feasible, where column j of A is the behavior of the j-th joint
deterministic assignment of outcomes to all settings and b stacks the
observed probabilities.  Feasibility is decided by a phase-one program
(minimize the total constraint shortfall) whose dual solution, when the
optimum is positive, is a Farkas certificate: a Bell functional violated by
the input behavior.
"""

from __future__ import annotations

import functools
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog, nnls

from .quantum import Behavior, Scenario

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
VARIABLE_CAP = 5_000_000
BRUTE_FORCE_CAP = 100_000
_NNLS_RESIDUAL_TOL = 1e-7


class ScenarioTooLargeError(ValueError):
    """The joint-strategy count exceeds the configured variable cap."""


class CertificateError(RuntimeError):
    """An extracted Farkas certificate failed re-verification."""


def n_strategies(scenario: Scenario) -> int:
    return scenario.d ** sum(scenario.m)


@functools.lru_cache(maxsize=32)
def _strategy_matrix(scenario: Scenario) -> sp.csc_matrix:
    """0/1 matrix with one column per joint deterministic strategy.

    Column index is party-major over per-party strategy indices; a party
    strategy is a base-d word over its settings (setting 0 most
    significant).  Row index is setting-tuple-major, outcome-tuple-minor.
    """
    d = scenario.d
    sizes = [d**mi for mi in scenario.m]
    v = int(np.prod(sizes))
    # per-party lookup: outcome of strategy s at setting k
    lookup = [
        np.array(list(itertools.product(range(d), repeat=mi)), dtype=np.int64)
        for mi in scenario.m
    ]
    rem = np.arange(v)
    party_strategy = []
    for size in sizes[::-1]:
        party_strategy.append(rem % size)
        rem //= size
    party_strategy = party_strategy[::-1]
    row_blocks = []
    n_out = scenario.n_outcome_tuples
    for si, st in enumerate(scenario.setting_tuples()):
        out = np.zeros(v, dtype=np.int64)
        for p in range(scenario.n_parties):
            out = out * d + lookup[p][party_strategy[p], st[p]]
        row_blocks.append(si * n_out + out)
    rows = np.concatenate(row_blocks)
    cols = np.tile(np.arange(v), scenario.n_setting_tuples)
    shape = (scenario.n_setting_tuples * n_out, v)
    return sp.csc_matrix((np.ones(len(rows)), (rows, cols)), shape=shape)


@functools.lru_cache(maxsize=32)
def _phase_one_pieces(scenario: Scenario):
    a = _strategy_matrix(scenario)
    m, v = a.shape
    a_eq = sp.hstack([a, sp.eye(m)], format="csc")
    cost = np.concatenate([np.zeros(v), np.ones(m)])
    return a, a_eq, cost


@dataclass(frozen=True)
class LPProblem:
    """Feasibility system {A x = b, x >= 0} for one behavior."""

    scenario: Scenario
    a_matrix: sp.csc_matrix = field(repr=False)
    rhs: np.ndarray = field(repr=False)

    @property
    def n_variables(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]


def build_lp(behavior: Behavior, variable_cap: int = VARIABLE_CAP) -> LPProblem:
    """Encode the local-model existence question for ``behavior``."""
    v = n_strategies(behavior.scenario)
    if v > variable_cap:
        raise ScenarioTooLargeError(
            f"{v} joint strategies exceed the variable cap {variable_cap}"
        )
    a = _strategy_matrix(behavior.scenario)
    return LPProblem(behavior.scenario, a, behavior.table.ravel().copy())


class Verdict(Enum):
    LOCAL = "local"
    NONLOCAL = "nonlocal"
    BORDERLINE = "borderline"


@dataclass(frozen=True)
class BellFunctional:
    """Linear functional on behaviors with its exact local bound.

    ``coefficients`` is aligned with the behavior table layout (one entry
    per (setting tuple, outcome tuple) pair).
    """

    scenario: Scenario
    coefficients: np.ndarray = field(repr=False)
    local_bound: float

    def value_on(self, behavior: Behavior) -> float:
        if behavior.scenario != self.scenario:
            raise ValueError("behavior scenario does not match the functional")
        return float(self.coefficients @ behavior.table.ravel())

    def coefficient(self, settings: tuple[int, ...], outcomes: tuple[int, ...]) -> float:
        sc = self.scenario
        row = 0
        for mi, ki in zip(sc.m, settings):
            row = row * mi + ki
        col = 0
        for oi in outcomes:
            col = col * sc.d + oi
        return float(self.coefficients[row * sc.n_outcome_tuples + col])

    def as_dict(self) -> dict:
        sc = self.scenario
        out = {}
        i = 0
        for st in sc.setting_tuples():
            for ot in sc.outcome_tuples():
                out[(st, ot)] = float(self.coefficients[i])
                i += 1
        return out


@dataclass(frozen=True)
class FeasibilityResult:
    verdict: Verdict
    certificate: BellFunctional | None
    slack: float


def check_local_model(problem: LPProblem, tol: float = DEFAULT_TOL) -> FeasibilityResult:
    """Phase-one feasibility verdict with Farkas certificate on violation.

    LOCAL when the phase-one optimum is <= tol, BORDERLINE in (tol, 10 tol]
    or on solver failure, NONLOCAL above.  Borderline instances are meant to
    be counted separately by callers and never enter violation counts.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a, a_eq, cost = _phase_one_pieces(problem.scenario)
    res = linprog(cost, A_eq=a_eq, b_eq=problem.rhs, method="highs")
    if res.status != 0:
        log.warning("phase-one solver returned status %s: %s", res.status, res.message)
        return FeasibilityResult(Verdict.BORDERLINE, None, float("nan"))
    slack = float(res.fun)
    if slack <= tol:
        return FeasibilityResult(Verdict.LOCAL, None, slack)
    if slack <= 10 * tol:
        return FeasibilityResult(Verdict.BORDERLINE, None, slack)
    marginals = res.eqlin.marginals
    if marginals is None:
        res = linprog(cost, A_eq=a_eq, b_eq=problem.rhs, method="highs", options={"presolve": False})
        marginals = res.eqlin.marginals
    y = np.asarray(marginals, dtype=float)
    value = float(y @ problem.rhs)
    if value < 0:
        y = -y
        value = -value
    bound = float((a.T @ y).max())
    if value <= bound + tol:
        raise CertificateError(
            f"dual vector fails certificate verification (value {value:.3e}, bound {bound:.3e})"
        )
    functional = BellFunctional(problem.scenario, y, bound)
    return FeasibilityResult(Verdict.NONLOCAL, functional, slack)


def extract_inequality(result: FeasibilityResult) -> BellFunctional:
    """Return the violated Bell functional carried by a nonlocal verdict."""
    if result.verdict is not Verdict.NONLOCAL:
        raise ValueError("certificates exist only for nonlocal verdicts")
    if result.certificate is None:
        raise CertificateError("nonlocal verdict without certificate")
    return result.certificate


@functools.lru_cache(maxsize=16)
def _vertex_matrix(scenario: Scenario) -> np.ndarray:
    """Deterministic-strategy behaviors as columns, built by direct enumeration.

    Independent of the sparse construction in ``_strategy_matrix``: iterates
    python-level over per-party assignments and fills probability-1 entries.
    """
    d = scenario.d
    per_party = [list(itertools.product(range(d), repeat=mi)) for mi in scenario.m]
    setting_tuples = list(scenario.setting_tuples())
    n_out = scenario.n_outcome_tuples
    n_rows = scenario.n_setting_tuples * n_out
    columns = []
    for joint in itertools.product(*per_party):
        col = np.zeros(n_rows)
        for si, st in enumerate(setting_tuples):
            out_index = 0
            for p, assignment in enumerate(joint):
                out_index = out_index * d + assignment[st[p]]
            col[si * n_out + out_index] = 1.0
        columns.append(col)
    return np.column_stack(columns)


def brute_force_local(behavior: Behavior, max_strategies: int = BRUTE_FORCE_CAP) -> bool:
    """Convex-hull membership by explicit vertex enumeration (oracle path).

    Solves the nonnegative least-squares projection onto the deterministic
    vertices with an appended normalization row and accepts when the
    residual vanishes numerically.
    """
    v = n_strategies(behavior.scenario)
    if v > max_strategies:
        raise ScenarioTooLargeError(f"{v} strategies exceed the brute-force cap {max_strategies}")
    vertices = _vertex_matrix(behavior.scenario)
    a_aug = np.vstack([vertices, np.ones((1, vertices.shape[1]))])
    b_aug = np.concatenate([behavior.table.ravel(), [1.0]])
    _, residual = nnls(a_aug, b_aug)
    return residual <= _NNLS_RESIDUAL_TOL


def dump_lp(problem: LPProblem, path) -> None:
    """Write the feasibility system in a dense plain-text standard form.

    Line 1: ``V M``; line 2: objective coefficients (feasibility, all zero);
    then M constraint rows of V coefficients each; final line: the RHS.
    """
    a = problem.a_matrix.toarray()
    m, v = a.shape
    with open(path, "w") as fh:
        fh.write(f"{v} {m}\n")
        fh.write(" ".join("0" for _ in range(v)) + "\n")
        for row in a:
            fh.write(" ".join(str(int(x)) for x in row) + "\n")
        fh.write(" ".join(repr(float(x)) for x in problem.rhs) + "\n")
