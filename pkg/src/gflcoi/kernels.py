"""Interface power kernels.

Every simulator evaluates the local and tie power components of all SG EMF
phasors and GFL current phasors once per right-hand-side call.  Two
implementations are provided: explicit loops compiled with numba, and a
vectorized numpy twin.  ``interface_powers`` points at the loop version when
numba is available, otherwise at the numpy one.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit


def interface_powers_numpy(e, delta, i, theta, yeq, teq, zeq):
    """Return (p_g_loc, p_g_tie_g, p_g_tie_f, p_f_loc, p_f_tie_f, p_f_tie_g)."""
    g, b = yeq.real, yeq.imag
    v, w = teq.real, teq.imag
    r, x = zeq.real, zeq.imag

    dgg = delta[:, None] - delta[None, :]
    eg = e[:, None] * e[None, :]
    tie_gg = eg * (g * np.cos(dgg) + b * np.sin(dgg))
    p_g_loc = np.diag(tie_gg).copy()
    p_g_tie_g = tie_gg.sum(axis=1) - p_g_loc

    dff = theta[:, None] - theta[None, :]
    ii = i[:, None] * i[None, :]
    tie_ff = ii * (r * np.cos(dff) + x * np.sin(dff))
    p_f_loc = np.diag(tie_ff).copy()
    p_f_tie_f = tie_ff.sum(axis=1) - p_f_loc

    phi = delta[:, None] - theta[None, :]
    ei = e[:, None] * i[None, :]
    c, s = np.cos(phi), np.sin(phi)
    p_g_tie_f = (ei * (v * c + w * s)).sum(axis=1)
    p_f_tie_g = (ei * (-v * c + w * s)).sum(axis=0)
    return p_g_loc, p_g_tie_g, p_g_tie_f, p_f_loc, p_f_tie_f, p_f_tie_g


@njit(cache=True)
def interface_powers_loops(e, delta, i, theta, yeq, teq, zeq):
    ng = e.shape[0]
    nf = i.shape[0]
    p_g_loc = np.zeros(ng)
    p_g_tie_g = np.zeros(ng)
    p_g_tie_f = np.zeros(ng)
    p_f_loc = np.zeros(nf)
    p_f_tie_f = np.zeros(nf)
    p_f_tie_g = np.zeros(nf)
    for a in range(ng):
        p_g_loc[a] = e[a] * e[a] * yeq[a, a].real
        for b in range(ng):
            if b != a:
                d = delta[a] - delta[b]
                y = yeq[a, b]
                p_g_tie_g[a] += e[a] * e[b] * (y.real * np.cos(d) + y.imag * np.sin(d))
        for k in range(nf):
            d = delta[a] - theta[k]
            t = teq[a, k]
            c = np.cos(d)
            s = np.sin(d)
            p_g_tie_f[a] += e[a] * i[k] * (t.real * c + t.imag * s)
            p_f_tie_g[k] += e[a] * i[k] * (-t.real * c + t.imag * s)
    for k in range(nf):
        p_f_loc[k] = i[k] * i[k] * zeq[k, k].real
        for m in range(nf):
            if m != k:
                d = theta[k] - theta[m]
                z = zeq[k, m]
                p_f_tie_f[k] += i[k] * i[m] * (z.real * np.cos(d) + z.imag * np.sin(d))
    return p_g_loc, p_g_tie_g, p_g_tie_f, p_f_loc, p_f_tie_f, p_f_tie_g


interface_powers = interface_powers_loops if HAVE_NUMBA else interface_powers_numpy
