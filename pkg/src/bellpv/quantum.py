"""Few-qubit states, Haar-random measurement directions and behavior tables.

A *behavior* is the full table of conditional outcome probabilities
P(outcomes | settings) generated by a pure state, a frame of projective
measurement directions and a detection model.  Two detection models are
supported: a three-outcome model where a no-click event is recorded as the
extra symbol 0, and a binning model where the no-click event is merged into
the -1 outcome through a two-element POVM.

Outcome ordering is fixed package-wide: (+1, -1) for two outcomes and
(+1, 0, -1) for three outcomes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

UNIT_TOL = 1e-12
PROB_CLAMP = 1e-12
TABLE_TOL = 1e-9


class BehaviorError(ValueError):
    """A probability table failed normalization, positivity or no-signaling."""


@dataclass(frozen=True)
class BlochVector:
    """Unit direction on the Bloch sphere defining a projective setting."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = self.x * self.x + self.y * self.y + self.z * self.z
        if abs(norm - 1.0) > 1e-10:
            raise ValueError(f"Bloch vector must be unit length, got |v|^2 = {norm!r}")

    @classmethod
    def from_array(cls, v) -> "BlochVector":
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(*(v / n))

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "BlochVector":
        return cls(math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class PureState:
    """Pure state of ``n_parties`` qubits, stored as a complex amplitude vector."""

    amplitudes: np.ndarray
    n_parties: int

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amps)
        if self.n_parties not in (2, 3):
            raise ValueError("only 2- and 3-party states are supported")
        if amps.shape != (2**self.n_parties,):
            raise ValueError(f"expected {2**self.n_parties} amplitudes, got {amps.shape}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValueError(f"state must be normalized, got <psi|psi> = {norm!r}")

    def as_tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.n_parties)


def singlet() -> PureState:
    """(|01> - |10>)/sqrt(2)."""
    amps = np.zeros(4, dtype=complex)
    amps[1] = 1 / math.sqrt(2)
    amps[2] = -1 / math.sqrt(2)
    return PureState(amps, 2)


def ghz3() -> PureState:
    """(|000> + |111>)/sqrt(2)."""
    amps = np.zeros(8, dtype=complex)
    amps[0] = amps[7] = 1 / math.sqrt(2)
    return PureState(amps, 3)


def w3() -> PureState:
    """(|100> + |010> + |001>)/sqrt(3)."""
    amps = np.zeros(8, dtype=complex)
    amps[1] = amps[2] = amps[4] = 1 / math.sqrt(3)
    return PureState(amps, 3)


def ghz_rotated(phi: float) -> PureState:
    """Phase-rotated GHZ state (|000> + e^{-i phi}|111>)/sqrt(2).

    Phase convention: with every party measuring x (setting 0) and y
    (setting 1), the all-x correlator is cos(phi) and correlators with an
    odd number of y's carry a minus sign at small positive phi.
    """
    amps = np.zeros(8, dtype=complex)
    amps[0] = 1 / math.sqrt(2)
    amps[7] = np.exp(-1j * phi) / math.sqrt(2)
    return PureState(amps, 3)


_NAMED_STATES = {"singlet": singlet, "ghz3": ghz3, "w3": w3}


def parse_state(spec: str) -> PureState:
    """Resolve a state given by name (singlet, ghz3, w3, ghz-rot:<phi>)
    or as a comma-separated list of complex amplitudes."""
    spec = spec.strip()
    if spec in _NAMED_STATES:
        return _NAMED_STATES[spec]()
    if spec.startswith("ghz-rot:"):
        return ghz_rotated(float(spec.split(":", 1)[1]))
    if "," in spec:
        amps = np.array([complex(tok) for tok in spec.split(",")], dtype=complex)
        n = int(round(math.log2(len(amps))))
        if 2**n != len(amps):
            raise ValueError(f"amplitude list length {len(amps)} is not a power of two")
        norm = math.sqrt(float(np.vdot(amps, amps).real))
        return PureState(amps / norm, n)
    raise ValueError(f"unknown state {spec!r}")


@dataclass(frozen=True)
class MeasurementFrame:
    """Per-party lists of measurement directions (m_i settings for party i)."""

    settings: tuple[tuple[BlochVector, ...], ...]

    def __post_init__(self):
        if not self.settings or any(len(per_party) < 1 for per_party in self.settings):
            raise ValueError("every party needs at least one setting")

    @property
    def n_parties(self) -> int:
        return len(self.settings)

    @property
    def settings_per_party(self) -> tuple[int, ...]:
        return tuple(len(per_party) for per_party in self.settings)

    @classmethod
    def sample(cls, rng: np.random.Generator, n_parties: int, m) -> "MeasurementFrame":
        """Draw all directions Haar-uniformly; ``m`` is an int or per-party list."""
        ms = (m,) * n_parties if isinstance(m, int) else tuple(m)
        return cls(tuple(tuple(sample_direction(rng) for _ in range(mi)) for mi in ms))


class DetectionKind(Enum):
    THREE_OUTCOME = "three-outcome"
    BINNING = "binning"


@dataclass(frozen=True)
class DetectionModel:
    """Detection model with one efficiency per party."""

    kind: DetectionKind
    etas: tuple[float, ...]

    def __post_init__(self):
        if any(not (0.0 <= e <= 1.0) for e in self.etas):
            raise ValueError(f"efficiencies must lie in [0, 1], got {self.etas}")

    @classmethod
    def symmetric(cls, kind: DetectionKind, eta: float, n_parties: int) -> "DetectionModel":
        return cls(kind, (eta,) * n_parties)


@dataclass(frozen=True)
class Scenario:
    """Bell scenario shape: party count, settings per party, outcomes per setting."""

    n_parties: int
    m: tuple[int, ...]
    d: int

    def __post_init__(self):
        if len(self.m) != self.n_parties:
            raise ValueError("settings tuple length must equal the party count")
        if self.d not in (2, 3):
            raise ValueError("only 2- and 3-outcome scenarios are supported")

    @property
    def n_setting_tuples(self) -> int:
        return int(np.prod(self.m))

    @property
    def n_outcome_tuples(self) -> int:
        return self.d**self.n_parties

    def setting_tuples(self):
        return itertools.product(*[range(mi) for mi in self.m])

    def outcome_tuples(self):
        return itertools.product(range(self.d), repeat=self.n_parties)


def outcome_symbols(d: int) -> tuple[int, ...]:
    """Outcome labels in table order: (+1, -1) for d=2, (+1, 0, -1) for d=3."""
    return (1, -1) if d == 2 else (1, 0, -1)


@dataclass(frozen=True)
class Behavior:
    """Conditional probability table P(outcomes | settings).

    ``table`` has shape (number of setting tuples, d**N).  Rows follow
    row-major order over per-party setting indices, columns base-d order
    over per-party outcome indices, both with party 0 most significant.
    """

    scenario: Scenario
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        tab = np.array(self.table, dtype=float)
        expected = (self.scenario.n_setting_tuples, self.scenario.n_outcome_tuples)
        if tab.shape != expected:
            raise BehaviorError(f"table shape {tab.shape} does not match scenario {expected}")
        if tab.min() < -PROB_CLAMP:
            raise BehaviorError(f"negative probability {tab.min():.3e} below clamp threshold")
        np.clip(tab, 0.0, None, out=tab)
        object.__setattr__(self, "table", tab)
        sums = tab.sum(axis=1)
        if np.abs(sums - 1.0).max() > TABLE_TOL:
            raise BehaviorError(f"rows must sum to 1, worst deviation {np.abs(sums-1).max():.3e}")
        dev = self._no_signaling_deviation()
        if dev > TABLE_TOL:
            raise BehaviorError(f"no-signaling violated by {dev:.3e}")

    def _grid(self) -> np.ndarray:
        sc = self.scenario
        return self.table.reshape(tuple(sc.m) + (sc.d,) * sc.n_parties)

    def _no_signaling_deviation(self) -> float:
        # for each party: the marginal on the others must not depend on its setting
        sc = self.scenario
        grid = self._grid()
        worst = 0.0
        for p in range(sc.n_parties):
            marg = grid.sum(axis=sc.n_parties + p)
            worst = max(worst, float(np.abs(marg - marg.mean(axis=p, keepdims=True)).max()))
        return worst

    def prob(self, settings: tuple[int, ...], outcomes: tuple[int, ...]) -> float:
        """Probability of an outcome tuple (as table indices) given setting indices."""
        sc = self.scenario
        row = 0
        for mi, ki in zip(sc.m, settings):
            row = row * mi + ki
        col = 0
        for oi in outcomes:
            col = col * sc.d + oi
        return float(self.table[row, col])


def sample_direction(rng: np.random.Generator) -> BlochVector:
    """Haar-uniform direction: cos(theta) uniform on [-1, 1], phi uniform on [0, 2pi)."""
    z = rng.uniform(-1.0, 1.0)
    phi = rng.uniform(0.0, 2.0 * np.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return BlochVector(s * math.cos(phi), s * math.sin(phi), z)


def _measurement_rows(direction: BlochVector) -> np.ndarray:
    """2x2 matrix whose rows are <h0| and <h1| for the +1/-1 eigenvectors of n.sigma."""
    theta = math.acos(min(1.0, max(-1.0, direction.z)))
    phi = math.atan2(direction.y, direction.x)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    e = np.exp(-1j * phi)
    return np.array([[c, s * e], [s, -c * e]], dtype=complex)


def _party_rows(frame: MeasurementFrame) -> list[np.ndarray]:
    return [np.stack([_measurement_rows(n) for n in per_party]) for per_party in frame.settings]


def ideal_behavior(state: PureState, frame: MeasurementFrame) -> Behavior:
    """Behavior under perfect detection: P = |<h^{a_1} ... h^{a_N}|psi>|^2."""
    if frame.n_parties != state.n_parties:
        raise ValueError(f"frame has {frame.n_parties} parties, state has {state.n_parties}")
    rows = _party_rows(frame)
    psi = state.as_tensor()
    if state.n_parties == 2:
        amp = np.einsum("xai,ybj,ij->xyab", rows[0], rows[1], psi)
    else:
        amp = np.einsum("xai,ybj,zck,ijk->xyzabc", rows[0], rows[1], rows[2], psi)
    n = state.n_parties
    table = np.abs(amp) ** 2
    sc = Scenario(n, frame.settings_per_party, 2)
    return Behavior(sc, table.reshape(sc.n_setting_tuples, sc.n_outcome_tuples))


def apply_three_outcome(ideal: Behavior, etas) -> Behavior:
    """Dress an ideal two-outcome behavior with independent detector failures.

    A party whose detector stays silent records the extra outcome 0; the
    detected parties' outcomes follow the ideal marginal on that subset.
    """
    etas = tuple(float(e) for e in etas)
    sc = ideal.scenario
    if sc.d != 2:
        raise ValueError("expected a two-outcome ideal behavior")
    if len(etas) != sc.n_parties:
        raise ValueError("one efficiency per party required")
    if any(not (0.0 <= e <= 1.0) for e in etas):
        raise ValueError(f"efficiencies must lie in [0, 1], got {etas}")
    n = sc.n_parties
    grid = ideal._grid()
    out = np.zeros(tuple(sc.m) + (3,) * n)
    set_ix = [range(mi) for mi in sc.m]
    for detected in itertools.product([True, False], repeat=n):
        weight = math.prod(etas[i] if det else 1.0 - etas[i] for i, det in enumerate(detected))
        if weight == 0.0:
            continue
        marg = grid
        for i in reversed(range(n)):
            if not detected[i]:
                marg = marg.sum(axis=n + i)
        # detected outcomes: ideal index 0 -> slot 0 (+1), 1 -> slot 2 (-1); silent -> slot 1
        slots = [[0, 2] if det else [1] for det in detected]
        shape = tuple(sc.m) + tuple(2 if det else 1 for det in detected)
        out[np.ix_(*set_ix, *slots)] += weight * marg.reshape(shape)
    sc3 = Scenario(n, sc.m, 3)
    return Behavior(sc3, out.reshape(sc3.n_setting_tuples, sc3.n_outcome_tuples))


def binned_behavior(state: PureState, frame: MeasurementFrame, etas) -> Behavior:
    """Behavior under the binning model.

    Each party uses the two-element POVM E+ = eta |h0><h0|, E- = 1 - E+, so a
    no-click event is silently recorded as -1.
    """
    etas = tuple(float(e) for e in etas)
    if frame.n_parties != state.n_parties:
        raise ValueError(f"frame has {frame.n_parties} parties, state has {state.n_parties}")
    if len(etas) != state.n_parties:
        raise ValueError("one efficiency per party required")
    if any(not (0.0 <= e <= 1.0) for e in etas):
        raise ValueError(f"efficiencies must lie in [0, 1], got {etas}")
    povms = []
    for per_party, eta in zip(frame.settings, etas):
        elems = np.empty((len(per_party), 2, 2, 2), dtype=complex)
        for k, direction in enumerate(per_party):
            h0 = _measurement_rows(direction)[0]
            e_plus = eta * np.outer(h0.conj(), h0)
            elems[k, 0] = e_plus
            elems[k, 1] = np.eye(2) - e_plus
        povms.append(elems)
    psi = state.as_tensor()
    if state.n_parties == 2:
        table = np.einsum("ij,xaik,ybjl,kl->xyab", psi.conj(), povms[0], povms[1], psi)
    else:
        table = np.einsum(
            "ijk,xail,ybjm,zckn,lmn->xyzabc", psi.conj(), povms[0], povms[1], povms[2], psi
        )
    if np.abs(table.imag).max() > 1e-10:
        raise BehaviorError("POVM probabilities acquired an imaginary part")
    sc = Scenario(state.n_parties, frame.settings_per_party, 2)
    return Behavior(sc, table.real.reshape(sc.n_setting_tuples, sc.n_outcome_tuples))


def behavior_for_model(state: PureState, frame: MeasurementFrame, model: DetectionModel) -> Behavior:
    """Dispatch on the detection model; frames and state are shared between models."""
    if model.kind is DetectionKind.BINNING:
        return binned_behavior(state, frame, model.etas)
    return apply_three_outcome(ideal_behavior(state, frame), model.etas)


def chsh_optimal_frame() -> MeasurementFrame:
    """Two-setting frame maximizing the singlet's CHSH correlator at 2*sqrt(2)."""
    s = 1 / math.sqrt(2)
    return MeasurementFrame(
        (
            (BlochVector(0, 0, 1), BlochVector(1, 0, 0)),
            (BlochVector(-s, 0, -s), BlochVector(s, 0, -s)),
        )
    )
