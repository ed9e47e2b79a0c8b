"""Compiled state-vector kernels for the driven Rydberg Ising Hamiltonian.

Basis index ``a`` encodes atom ``q`` in bit ``q``. The Hamiltonian is
``sum_q omega_q(t) X_q + diag(static) - delta(t) * popcount``.
"""

import numpy as np
from numba import njit

# Yoshida triple-jump weights lifting a symmetric 2nd-order step to 4th order
_CBRT2 = 2.0 ** (1.0 / 3.0)
W1 = 1.0 / (2.0 - _CBRT2)
W0 = -_CBRT2 / (2.0 - _CBRT2)


@njit(cache=True)
def _rotate_x(psi, thetas):
    # exp(-i theta_q X_q) on every qubit
    dim = psi.shape[0]
    for q in range(thetas.shape[0]):
        c = np.cos(thetas[q])
        s = np.sin(thetas[q])
        stride = 1 << q
        for base in range(0, dim, 2 * stride):
            for k in range(base, base + stride):
                a0 = psi[k]
                a1 = psi[k + stride]
                psi[k] = c * a0 - 1j * s * a1
                psi[k + stride] = c * a1 - 1j * s * a0


@njit(cache=True)
def _phase(psi, static_phase, popcount, shift, zpow):
    # multiply by static_phase * exp(i * shift * popcount)
    for k in range(zpow.shape[0]):
        zpow[k] = np.exp(1j * shift * k)
    for a in range(psi.shape[0]):
        psi[a] *= static_phase[a] * zpow[popcount[a]]


@njit(cache=True)
def evolve_split(psi, static, popcount, n_qubits, h, omegas, deltas, scale):
    """Fourth-order composed Strang splitting with exact diagonal and X flows.

    ``omegas``/``deltas`` hold the drive at the midpoint of each of the
    ``3 * n_steps`` sub-steps (weights W1, W0, W1 per step of length ``h``).
    The scheme is unitary for any interaction strength.
    """
    tau1 = W1 * h
    tau0 = W0 * h
    ph_edge = np.exp(-1j * (0.5 * tau1) * static)
    ph_mid = np.exp(-1j * (0.5 * (tau1 + tau0)) * static)
    ph_join = np.exp(-1j * tau1 * static)
    zpow = np.empty(n_qubits + 1, dtype=np.complex128)
    thetas = np.empty(n_qubits, dtype=np.float64)
    m = omegas.shape[0]
    taus = np.empty(3, dtype=np.float64)
    taus[0] = tau1
    taus[1] = tau0
    taus[2] = tau1
    _phase(psi, ph_edge, popcount, 0.5 * tau1 * deltas[0], zpow)
    for j in range(m):
        tj = taus[j % 3]
        for q in range(n_qubits):
            thetas[q] = tj * omegas[j] * scale[q]
        _rotate_x(psi, thetas)
        if j == m - 1:
            _phase(psi, ph_edge, popcount, 0.5 * tj * deltas[j], zpow)
        else:
            tn = taus[(j + 1) % 3]
            shift = 0.5 * (tj * deltas[j] + tn * deltas[j + 1])
            if j % 3 == 2:
                _phase(psi, ph_join, popcount, shift, zpow)
            else:
                _phase(psi, ph_mid, popcount, shift, zpow)
    return psi


@njit(cache=True)
def _apply_h(psi, out, static, popcount, omega_scaled, delta):
    dim = psi.shape[0]
    for a in range(dim):
        out[a] = (static[a] - delta * popcount[a]) * psi[a]
    for q in range(omega_scaled.shape[0]):
        stride = 1 << q
        w = omega_scaled[q]
        for a in range(dim):
            out[a] += w * psi[a ^ stride]


@njit(cache=True)
def evolve_rk4(psi, static, popcount, h, omegas, deltas, scale):
    """Classical RK4 on ``i dpsi/dt = H psi``; drive sampled at ``t, t + h/2, t + h``.

    ``omegas``/``deltas`` have length ``2 * n_steps + 1`` (half-step grid).
    Conditionally stable: needs ``h * ||H||`` below about 2.8.
    """
    dim = psi.shape[0]
    n_steps = (omegas.shape[0] - 1) // 2
    k1 = np.empty(dim, dtype=np.complex128)
    k2 = np.empty(dim, dtype=np.complex128)
    k3 = np.empty(dim, dtype=np.complex128)
    k4 = np.empty(dim, dtype=np.complex128)
    tmp = np.empty(dim, dtype=np.complex128)
    for s in range(n_steps):
        i0 = 2 * s
        _apply_h(psi, k1, static, popcount, omegas[i0] * scale, deltas[i0])
        for a in range(dim):
            tmp[a] = psi[a] - 0.5j * h * k1[a]
        _apply_h(tmp, k2, static, popcount, omegas[i0 + 1] * scale, deltas[i0 + 1])
        for a in range(dim):
            tmp[a] = psi[a] - 0.5j * h * k2[a]
        _apply_h(tmp, k3, static, popcount, omegas[i0 + 1] * scale, deltas[i0 + 1])
        for a in range(dim):
            tmp[a] = psi[a] - 1j * h * k3[a]
        _apply_h(tmp, k4, static, popcount, omegas[i0 + 2] * scale, deltas[i0 + 2])
        for a in range(dim):
            psi[a] = psi[a] - 1j * h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
    return psi
