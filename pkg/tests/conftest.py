import numpy as np
import pytest

from bellpv.inequalities import IC_LOCAL_BOUND, optimize_ic
from bellpv.quantum import ghz3


@pytest.fixture(scope="session")
def ghz_near_critical_frame():
    """Frame violating I_C for the GHZ state at eta = 0.68, just above 2/3."""
    eta = 0.68
    value, frame, _ = optimize_ic(ghz3(), eta, np.random.default_rng(2024), n_starts=48)
    assert value > IC_LOCAL_BOUND + 1e-6
    return frame, eta
