"""Named Bell functionals with detection efficiency and their critical points.

Covers the probability-normalized CHSH dressed with detector efficiencies
(local bound 3), the projected three-party functional I_C with a single
non-trivial setting on the first party (local bound 1, binning model), and
two three-party expressions in the two-setting three-outcome scenario
written without the third outcome (local bound 0): the facet ``iabc1`` and
the Mermin-type ``iabc2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .quantum import (
    Behavior,
    BlochVector,
    MeasurementFrame,
    PureState,
    binned_behavior,
    ideal_behavior,
)

CHSH_LOCAL_BOUND = 3.0
IC_LOCAL_BOUND = 1.0

_PAULI = np.array(
    [
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

_SIGNS = np.array([1.0, -1.0])
_CHSH_SIGNS = np.array([[1.0, 1.0], [1.0, -1.0]])  # sign of the (j,k) term in B1C1+B2C1+B1C2-B2C2


@dataclass(frozen=True)
class ChshEtaTerms:
    """Components of the efficiency-dressed probability CHSH.

    ``q`` is the two-detector quantum value (local bound 3), the one-silent
    strategies are pinned at 2 and the both-silent strategy at 3.
    """

    q: float
    m_a: float = 2.0
    m_b: float = 2.0
    x: float = 3.0

    def value(self, eta_a: float, eta_b: float) -> float:
        return (
            eta_a * (1 - eta_b) * self.m_a
            + eta_b * (1 - eta_a) * self.m_b
            + eta_a * eta_b * self.q
            + (1 - eta_a) * (1 - eta_b) * self.x
        )


def chsh_eta_value(q: float, eta_a: float, eta_b: float) -> float:
    """Efficiency-dressed CHSH value; violation iff the result exceeds 3."""
    if not (0.0 <= eta_a <= 1.0 and 0.0 <= eta_b <= 1.0):
        raise ValueError("efficiencies must lie in [0, 1]")
    return ChshEtaTerms(q).value(eta_a, eta_b)


def chsh_symmetric_critical(q: float, tol: float = 1e-12) -> float:
    """Root of chsh_eta_value(q, eta, eta) = 3 in (0, 1], by bisection."""
    if q <= CHSH_LOCAL_BOUND:
        raise ValueError(f"no violation at any efficiency for q = {q} <= 3")
    lo, hi = 1e-6, 1.0
    f = lambda eta: chsh_eta_value(q, eta, eta) - CHSH_LOCAL_BOUND
    if f(hi) <= 0:
        raise ValueError("no violation at perfect detection")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# projected three-party functional I_C (binning model)


def _correlation_tensors(state: PureState) -> dict:
    """Bloch vectors and correlation tensors of a three-qubit pure state."""
    psi = state.as_tensor()
    t = {}
    # singles
    t[(0,)] = np.real(np.einsum("aim,ijk,mjk->a", _PAULI, psi, psi.conj()))
    t[(1,)] = np.real(np.einsum("ajm,ijk,imk->a", _PAULI, psi, psi.conj()))
    t[(2,)] = np.real(np.einsum("akm,ijk,ijm->a", _PAULI, psi, psi.conj()))
    # pairs
    t[(0, 1)] = np.real(np.einsum("ail,bjm,ijk,lmk->ab", _PAULI, _PAULI, psi, psi.conj()))
    t[(0, 2)] = np.real(np.einsum("ail,bkm,ijk,ljm->ab", _PAULI, _PAULI, psi, psi.conj()))
    t[(1, 2)] = np.real(np.einsum("ajl,bkm,ijk,ilm->ab", _PAULI, _PAULI, psi, psi.conj()))
    # triple
    t[(0, 1, 2)] = np.real(
        np.einsum("ail,bjm,ckn,ijk,lmn->abc", _PAULI, _PAULI, _PAULI, psi, psi.conj())
    )
    return t


def _ic_fast(tensors: dict, a1, bs, cs, eta: float) -> float:
    """I_C expectation from correlation tensors with binned observables.

    The binned observable of a party is eta * n.sigma + (eta - 1) * identity.
    """
    e = eta
    em = eta - 1.0
    r_a, r_b, r_c = tensors[(0,)], tensors[(1,)], tensors[(2,)]
    t_ab, t_ac, t_bc = tensors[(0, 1)], tensors[(0, 2)], tensors[(1, 2)]
    t3 = tensors[(0, 1, 2)]
    mean_a = e * (a1 @ r_a) + em
    chsh_bc = 0.0
    chsh_abc = 0.0
    for j in range(2):
        for k in range(2):
            s = _CHSH_SIGNS[j, k]
            b, c = bs[j], cs[k]
            pair = e * e * (b @ t_bc @ c) + e * em * (b @ r_b + c @ r_c) + em * em
            triple = (
                e**3 * np.einsum("abc,a,b,c->", t3, a1, b, c)
                + e * e * em * ((a1 @ t_ab @ b) + (a1 @ t_ac @ c) + (b @ t_bc @ c))
                + e * em * em * (a1 @ r_a + b @ r_b + c @ r_c)
                + em**3
            )
            chsh_bc += s * pair
            chsh_abc += s * triple
    return -mean_a + 0.5 * (chsh_bc + chsh_abc)


def ic_value(behavior: Behavior) -> float:
    """Evaluate I_C = -A1 + (1+A1)/2 [B1C1 + B2C1 + B1C2 - B2C2] on a behavior.

    The first party's setting 0 plays the role of the single non-trivial
    setting A1; its other settings never enter the expression.
    """
    sc = behavior.scenario
    if sc.n_parties != 3 or sc.d != 2 or sc.m[1] != 2 or sc.m[2] != 2:
        raise ValueError("I_C needs a three-party, two-outcome behavior with 2 settings for parties B and C")
    grid = behavior.table.reshape(tuple(sc.m) + (2, 2, 2))
    p_a = grid[0, 0, 0]  # settings (0,0,0)
    mean_a = float(np.einsum("abc,a->", p_a, _SIGNS))
    value = -mean_a
    for j in range(2):
        for k in range(2):
            s = _CHSH_SIGNS[j, k]
            p = grid[0, j, k]
            pair = float(np.einsum("abc,b,c->", p, _SIGNS, _SIGNS))
            triple = float(np.einsum("abc,a,b,c->", p, _SIGNS, _SIGNS, _SIGNS))
            value += 0.5 * s * (pair + triple)
    return value


def eval_ic(state: PureState, observables, eta: float) -> float:
    """I_C expectation for binning-model observables at symmetric efficiency eta.

    ``observables`` lists one pair of Bloch directions per party; the first
    direction of the first party is the non-trivial setting A1.
    """
    if state.n_parties != 3:
        raise ValueError("I_C is a three-party functional")
    frame = MeasurementFrame(tuple(tuple(pair) for pair in observables))
    if frame.n_parties != 3 or frame.settings_per_party != (2, 2, 2):
        raise ValueError("expected one pair of directions per party")
    behavior = binned_behavior(state, frame, (eta, eta, eta))
    return ic_value(behavior)


def _angles_to_dirs(angles: np.ndarray) -> list[np.ndarray]:
    out = []
    for i in range(0, len(angles), 2):
        th, ph = angles[i], angles[i + 1]
        out.append(np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)]))
    return out


def optimize_ic(state: PureState, eta: float, rng: np.random.Generator, n_starts: int = 64,
                warm_starts=()) -> tuple[float, MeasurementFrame, np.ndarray]:
    """Maximize I_C over the five relevant directions by multi-start local search."""
    tensors = _correlation_tensors(state)

    def negative(angles):
        dirs = _angles_to_dirs(angles)
        return -_ic_fast(tensors, dirs[0], dirs[1:3], dirs[3:5], eta)

    best_val, best_angles = -np.inf, None
    starts = [np.asarray(w, dtype=float) for w in warm_starts]
    while len(starts) < n_starts + len(warm_starts):
        starts.append(np.concatenate([[math.acos(rng.uniform(-1, 1)), rng.uniform(0, 2 * math.pi)]
                                      for _ in range(5)]))
    for x0 in starts:
        res = minimize(negative, x0, method="L-BFGS-B")
        if -res.fun > best_val:
            best_val, best_angles = -res.fun, res.x
    dirs = _angles_to_dirs(best_angles)
    frame = MeasurementFrame(
        (
            (BlochVector.from_array(dirs[0]), BlochVector(0, 0, 1)),
            tuple(BlochVector.from_array(v) for v in dirs[1:3]),
            tuple(BlochVector.from_array(v) for v in dirs[3:5]),
        )
    )
    return best_val, frame, best_angles


def ic_critical_search(state: PureState, eta_grid, n_starts: int = 64, seed: int = 0) -> float:
    """Smallest grid efficiency whose settings-optimized I_C exceeds 1 + 1e-9.

    The optimized value grows monotonically with eta, so the grid is probed
    by bisection; each probe warm-starts from the best frame found so far.
    """
    grid = np.sort(np.asarray(list(eta_grid), dtype=float))
    if grid.size == 0 or grid[0] <= 0 or grid[-1] > 1:
        raise ValueError("eta grid must lie within (0, 1]")
    rng = np.random.default_rng(seed)
    warm: list[np.ndarray] = []

    def violates(eta: float) -> bool:
        nonlocal warm
        val, _, angles = optimize_ic(state, eta, rng, n_starts=n_starts, warm_starts=warm)
        if val > IC_LOCAL_BOUND + 1e-9:
            warm = [angles]
            return True
        return False

    lo, hi = 0, grid.size - 1
    if not violates(grid[hi]):
        raise ValueError("no violation found anywhere on the grid")
    if violates(grid[lo]):
        return float(grid[lo])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if violates(grid[mid]):
            hi = mid
        else:
            lo = mid
    return float(grid[hi])


# --------------------------------------------------------------------------
# three-party expressions in the two-setting, three-outcome scenario


def _sym_positions(base: tuple[int, int, int]) -> list[tuple[int, int, int]]:
    seen = []
    for perm in {base, (base[1], base[2], base[0]), (base[2], base[0], base[1]),
                 (base[0], base[2], base[1]), (base[1], base[0], base[2]), (base[2], base[1], base[0])}:
        seen.append(perm)
    return sorted(set(seen))


@dataclass(frozen=True)
class CgThreePartyExpression:
    """Three-party Bell expression without the third outcome.

    ``e_coeffs`` weights the full correlators E_xyz, ``o_coeffs`` the
    detected-triple masses O_xyz and ``o_pair_coeffs`` the (AB, AC, BC)
    two-party masses summed over their setting pairs.
    """

    name: str
    e_coeffs: np.ndarray = field(repr=False)
    o_coeffs: np.ndarray = field(repr=False)
    o_pair_coeffs: np.ndarray = field(repr=False)
    local_bound: float = 0.0


def _coeff_cube(entries: dict) -> np.ndarray:
    cube = np.zeros((2, 2, 2))
    for pos, val in entries.items():
        cube[pos] = val
    return cube


def iabc1() -> CgThreePartyExpression:
    """Facet expression: 3E000 - sym[E001] - 3 sym[E011] + E111
    - O000 + 2 sym[O001] - sym[O011] + 2 O111 - (O_AB + O_AC + O_BC)."""
    e = {(0, 0, 0): 3.0, (1, 1, 1): 1.0}
    o = {(0, 0, 0): -1.0, (1, 1, 1): 2.0}
    for pos in _sym_positions((0, 0, 1)):
        e[pos] = -1.0
        o[pos] = 2.0
    for pos in _sym_positions((0, 1, 1)):
        e[pos] = -3.0
        o[pos] = -1.0
    return CgThreePartyExpression("iabc1", _coeff_cube(e), _coeff_cube(o), -np.ones(3))


def iabc2() -> CgThreePartyExpression:
    """Mermin-type expression: E000 - sym[E011] + O111 + sym[O001]
    - (O_AB + O_AC + O_BC)/2."""
    e = {(0, 0, 0): 1.0}
    o = {(1, 1, 1): 1.0}
    for pos in _sym_positions((0, 1, 1)):
        e[pos] = -1.0
    for pos in _sym_positions((0, 0, 1)):
        o[pos] = 1.0
    return CgThreePartyExpression("iabc2", _coeff_cube(e), _coeff_cube(o), -0.5 * np.ones(3))


def mermin_cg() -> CgThreePartyExpression:
    """Alias for the Mermin-type expression ``iabc2``."""
    return iabc2()


def eval_cg3(behavior: Behavior, expr: CgThreePartyExpression) -> float:
    """Evaluate a three-party expression on a (3-outcome, 2-setting) behavior.

    E_xyz and O_xyz run over detected outcomes only; the pair masses are
    marginals over one party's full outcome alphabet, averaged over that
    party's settings via the no-signaling property.
    """
    sc = behavior.scenario
    if sc.n_parties != 3 or sc.d != 3 or sc.m != (2, 2, 2):
        raise ValueError("expected a three-party, two-setting, three-outcome behavior")
    grid = behavior.table.reshape(2, 2, 2, 3, 3, 3)
    det = grid[:, :, :, ::2, ::2, ::2]  # detected outcomes (+1, -1) per party
    signs = _SIGNS
    e_xyz = np.einsum("xyzabc,a,b,c->xyz", det, signs, signs, signs)
    o_xyz = np.einsum("xyzabc->xyz", det)
    pair_ab = np.einsum("xyzabc->xy", grid[:, :, :, ::2, ::2, :]) / 2  # average over z
    pair_ac = np.einsum("xyzabc->xz", grid[:, :, :, ::2, :, ::2]) / 2
    pair_bc = np.einsum("xyzabc->yz", grid[:, :, :, :, ::2, ::2]) / 2
    o_pairs = np.array([pair_ab.sum(), pair_ac.sum(), pair_bc.sum()])
    return float(
        (expr.e_coeffs * e_xyz).sum()
        + (expr.o_coeffs * o_xyz).sum()
        + expr.o_pair_coeffs @ o_pairs
    )


def cg3_eta_critical(i222: float, j222: float, k22: float) -> float:
    """Critical symmetric efficiency K / (I + J) of an eta-scaled expression.

    The quantum value scales as eta^3 (I + J) - eta^2 K, whose positive root
    is K / (I + J); a ratio above 1 means no violation at any efficiency.
    """
    if i222 + j222 <= 0 or k22 <= 0:
        raise ValueError("need positive correlator and pair-mass totals")
    ratio = k22 / (i222 + j222)
    if ratio > 1.0:
        raise ValueError(f"critical efficiency {ratio} exceeds 1: no violation at any eta")
    return ratio


@dataclass(frozen=True)
class RotatedGhzTerms:
    """Perfect-detection quantum inputs of the two three-party expressions."""

    e_xyz: np.ndarray = field(repr=False)
    o_xyz: np.ndarray = field(repr=False)
    o_pairs: np.ndarray = field(repr=False)
    i222: float
    j222: float
    k22: float
    i222_tilde: float
    j222_tilde: float
    k22_tilde: float


def rotated_ghz_quantum_terms(phi: float) -> RotatedGhzTerms:
    """Quantum values on the phase-rotated GHZ state with x/y observables.

    Setting 0 measures sigma_x and setting 1 measures sigma_y for every
    party; all quantities are evaluated at perfect detection.
    """
    from .quantum import ghz_rotated

    x, y = BlochVector(1, 0, 0), BlochVector(0, 1, 0)
    frame = MeasurementFrame(((x, y), (x, y), (x, y)))
    beh = ideal_behavior(ghz_rotated(phi), frame)
    grid = beh.table.reshape(2, 2, 2, 2, 2, 2)
    e_xyz = np.einsum("xyzabc,a,b,c->xyz", grid, _SIGNS, _SIGNS, _SIGNS)
    o_xyz = np.einsum("xyzabc->xyz", grid)
    o_pairs = np.array(
        [
            grid.sum(axis=5).mean(axis=2).sum(),  # O_AB, z-averaged marginal
            grid.sum(axis=4).mean(axis=1).sum(),  # O_AC
            grid.sum(axis=3).mean(axis=0).sum(),  # O_BC
        ]
    )
    expr1, expr2 = iabc1(), iabc2()
    i222 = float((expr1.e_coeffs * e_xyz).sum())
    j222 = float((expr1.o_coeffs * o_xyz).sum())
    k22 = float(o_pairs.sum())
    i_t = float((expr2.e_coeffs * e_xyz).sum())
    j_t = float((expr2.o_coeffs * o_xyz).sum())
    k_t = k22 / 2
    return RotatedGhzTerms(e_xyz, o_xyz, o_pairs, i222, j222, k22, i_t, j_t, k_t)
