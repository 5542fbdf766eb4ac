"""Independent reference implementations used only by the tests.

Everything here is written out longhand from the model equations without
importing the package's kernels, so agreement is evidence rather than
tautology.
"""

import math

import numpy as np

# -- microgrid, straight-line transcription ------------------------------------

NP, NS, Q_AH, C2B, R1B, R2B = 400.0, 100.0, 1.21, 15000.0, 0.0198, 0.2331
L_C, C1_C, C2_C, R1_C, R2_C, R3_C = 1.0, 1000.0, 1000.0, 10000.0, 10000.0, 0.005
NPV, CPV, ALPHA, AS, HCONV = 100.0, 4580.0, 0.7, 0.8, 13.39
L1B, L2B, CBUS, R1BUS, R2BUS = 1.0, 1.0, 100.0, 0.0001, 0.0001


def voc_cubic(s):
    return 3.0 + 4.0 * s - 6.0 * s * s + 3.2 * s * s * s


def microgrid_rhs(x, u, d, i_pv):
    """dx/dt for the 12-state microgrid with the panel current supplied."""
    soc, q2, ilsd, vbat, vc2sd, tpv, ilsu, vpv, vc2su, il1, il2, vbus = x
    dsd, dsu, dload = u
    g, tinf, io, iloss = d
    ibat = NP / R1B * (voc_cubic(soc) + q2 / C2B - vbat / NS)
    return np.array([
        -ibat / (NP * Q_AH * 3600.0),
        -ibat / NP - q2 / (R2B * C2B),
        (dsd * vbat - R3_C * ilsd - vc2sd) / L_C,
        (ibat - dsd * ilsd - vbat / R1_C) / C1_C,
        (ilsd - il2 - vc2sd / R2_C) / C2_C,
        (ALPHA * AS * g - HCONV * AS * (tpv - tinf) - vpv * i_pv) / CPV,
        (vpv - R3_C * ilsu - dsu * vc2su) / L_C,
        (NPV * i_pv - ilsu - vpv / R1_C) / C1_C,
        (dsu * ilsu - il1 - vc2su / R2_C) / C2_C,
        (vc2su - vbus - R1BUS * il1) / L1B,
        (vc2sd - vbus - R2BUS * il2) / L2B,
        (il1 + il2 - iloss - dload * io) / CBUS,
    ])


def microgrid_euler(x, u, d, i_pv, dt=1e-3):
    return np.asarray(x, dtype=float) + dt * microgrid_rhs(x, u, d, i_pv)


# -- single-diode panel, plain bisection ---------------------------------------

K_B, Q_E = 1.380649e-23, 1.602176634e-19


def diode_bisect(v, t_c, g, isc=8.21, voc=32.9, ipv=8.214, ki=0.0032, kv=-0.123, ns=54,
                 a=1.3, rs=0.221, rp=415.405, gn=1000.0, tn=298.15):
    t = t_c + 273.15
    dtk = t - tn
    vt = a * ns * K_B * t / Q_E
    iph = (ipv + ki * dtk) * g / gn
    i0 = (isc + ki * dtk) / (math.exp((voc + kv * dtk) / vt) - 1.0)

    def f(i):
        return iph - i0 * (math.exp((v + rs * i) / vt) - 1.0) - (v + rs * i) / rp - i

    lo, hi = -50.0, 50.0
    assert f(lo) > 0 > f(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- waterfall network in input/output form ------------------------------------

W12, W21, W32, B1, B2 = 1.0, -9.7182e-6, -1.1106e-6, 2.2213e-4, 2.7766e-5


def narma_next(y1, y2, y3, u1, u2, u3):
    """y_k from y_{k-1..k-3}, u_{k-1..k-3}."""
    phi1 = W12 * y1 + B1
    phi2 = W21 * u2 / (1.0 + math.exp(-0.5 * y1 + 10.0))
    phi3 = W32 * y3 + B2
    return phi1 + phi2 + phi3


def narma_run(y_hist, u_hist, u_future):
    """Outputs driven by ``u_future``; histories are newest first."""
    y = list(y_hist)
    u = list(u_hist)
    out = []
    for uk in [None] + list(u_future):
        if uk is not None:
            y.insert(0, out[-1])
            u.insert(0, uk)
        out.append(narma_next(y[0], y[1], y[2], u[0], u[1], u[2]))
    return np.array(out)


# -- coupling by hand -----------------------------------------------------------

def couplings_by_hand(v_bus, d_load, t_rack, cop=3.5, r_dc=3.7, h0=0.02, gamma=0.005, t_ref=20.0):
    i_o = v_bus / r_dc
    u_dc = cop * d_load * v_bus * i_o / 1000.0
    i_loss = v_bus * h0 * (1.0 + gamma * (t_rack - t_ref))
    return u_dc, i_o, i_loss


# -- fourth-order Runge-Kutta, for stiffness diagnostics only --------------------

def rk4(f, x, h):
    k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


# -- random test matrices ----------------------------------------------------------

def random_matrix(rng, n, radius):
    A = rng.standard_normal((n, n))
    return A * radius / np.max(np.abs(np.linalg.eigvals(A)))


def uncontrollable_pair(rng, n, m, k):
    """Pair with a k-dimensional uncontrollable part, hidden by a state
    permutation and scaling (exact in floating point up to one rounding)."""
    A11 = rng.standard_normal((n - k, n - k))
    A12 = rng.standard_normal((n - k, k))
    A22 = rng.standard_normal((k, k))
    A = np.block([[A11, A12], [np.zeros((k, n - k)), A22]])
    B = np.vstack([rng.standard_normal((n - k, m)), np.zeros((k, m))])
    T = np.eye(n)[rng.permutation(n)] * 2.0 ** rng.integers(-3, 4, n)[:, None]
    return T @ A @ np.linalg.inv(T), T @ B
