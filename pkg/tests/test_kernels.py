import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gflcoi import _accel
from gflcoi.kernels import interface_powers, interface_powers_loops, interface_powers_numpy
from gflcoi.network import HybridInterfaceMatrix


def random_inputs(rng, ng, nf):
    def cplx(*shape):
        return rng.normal(size=shape) + 1j * rng.normal(size=shape)

    return (rng.uniform(0.9, 1.1, ng), rng.uniform(-np.pi, np.pi, ng), rng.uniform(0.1, 1, nf),
            rng.uniform(-np.pi, np.pi, nf), cplx(ng, ng), cplx(ng, nf), cplx(nf, nf))


@pytest.mark.parametrize("ng, nf", [(1, 0), (1, 1), (2, 1), (3, 4), (12, 7)])
def test_backends_agree(rng, ng, nf):
    args = random_inputs(rng, ng, nf)
    for a, b in zip(interface_powers_numpy(*args), interface_powers_loops(*args)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_totals_match_phasor_power(rng):
    e, delta, i, theta, yeq, teq, zeq = random_inputs(rng, 4, 3)
    hyb = HybridInterfaceMatrix(yeq, teq, zeq)
    eg = e * np.exp(1j * delta)
    i_f = i * np.exp(1j * theta)
    i_g, u_f = hyb.solve(eg, i_f)
    parts = interface_powers(e, delta, i, theta, yeq, teq, zeq)
    np.testing.assert_allclose(parts[0] + parts[1] + parts[2], (eg * np.conj(i_g)).real, atol=1e-12)
    np.testing.assert_allclose(parts[3] + parts[4] + parts[5], (u_f * np.conj(i_f)).real, atol=1e-12)


def test_default_backend_follows_numba():
    expected = interface_powers_loops if _accel.HAVE_NUMBA else interface_powers_numpy
    assert interface_powers is expected
    assert _accel.backend() == ("numba" if _accel.HAVE_NUMBA else "numpy")


def test_plain_njit_fallback_is_transparent():
    def f(x):
        return x + 1

    if not _accel.HAVE_NUMBA:
        assert _accel.njit(f) is f
        assert _accel.njit(cache=True)(f) is f


SNIPPET = """
import json
from gflcoi import caseio
from gflcoi._accel import backend
from gflcoi.kernels import interface_powers, interface_powers_numpy
from gflcoi.sim import SimConfig, simulate_coi
case = caseio.parse_case(caseio.bundled_case_path("wecc9_gfl")).model
dist = caseio.to_disturbance(case, caseio.DisturbanceEntry(bus=9, g_pu=0.2))
res = simulate_coi(case.to_system(), dist, SimConfig(0.004, 2.0))
print(json.dumps({"backend": backend(), "numpy": interface_powers is interface_powers_numpy,
                  "omega": res["omega_coi"].tolist()}))
"""


def run_with_flag(flag):
    env = dict(os.environ, GFLCOI_PURE_NUMPY=flag)
    out = subprocess.run([sys.executable, "-c", SNIPPET], env=env, capture_output=True,
                         text=True, check=True)
    return json.loads(out.stdout)


def test_env_flag_selects_numpy_and_results_match():
    pure = run_with_flag("1")
    assert pure["backend"] == "numpy" and pure["numpy"]
    default = run_with_flag("0")
    np.testing.assert_allclose(default["omega"], pure["omega"], rtol=0, atol=1e-12)
