"""Independent 2x2 complex-matrix reference implementations.

Everything here works on raw density matrices with numpy, never touching the
package's Bloch-coordinate code paths, so tests can cross-check the fast
implementations against direct operator arithmetic.
"""

import numpy as np

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID = np.eye(2, dtype=complex)
SM = np.array([[0, 0], [1, 0]], dtype=complex)          # |g><e|

PLUS = np.array([1, 1], dtype=complex) / np.sqrt(2)
MINUS = np.array([1, -1], dtype=complex) / np.sqrt(2)
P_PLUS = np.outer(PLUS, PLUS.conj())
P_MINUS = np.outer(MINUS, MINUS.conj())
S_MP = np.outer(MINUS, PLUS.conj())                     # |-><+|
S_PM = np.outer(PLUS, MINUS.conj())                     # |+><-|


def rho_from_bloch(w, x, y, z):
    return 0.5 * (w * ID + x * SX + y * SY + z * SZ)


def bloch_from_rho(rho):
    return (float(np.trace(rho).real), float(np.trace(SX @ rho).real),
            float(np.trace(SY @ rho).real), float(np.trace(SZ @ rho).real))


def dissipator(c, rho):
    cd = c.conj().T
    return c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)


def lab_liouvillian(rho, omega, gamma=1.0):
    h = 0.5 * omega * SX
    return -1j * (h @ rho - rho @ h) + gamma * dissipator(SM, rho)


def secular_liouvillian(rho, gamma=1.0):
    return 0.25 * gamma * (dissipator(S_MP, rho) + dissipator(SX, rho)
                           + dissipator(S_PM, rho))


def jump(c, rho):
    return c @ rho @ c.conj().T


def said_nojump_rhs(rho, eta, lo_sign=+1, gamma=1.0):
    pi_lo = P_PLUS if lo_sign > 0 else P_MINUS
    sub = jump(S_MP, rho) + 4.0 * jump(pi_lo, rho) + jump(S_PM, rho)
    return secular_liouvillian(rho, gamma) - 0.25 * gamma * eta * sub


def steady_state_lab_numeric(omega, gamma=1.0):
    """Null vector of the 3x3 Bloch drift system, solved numerically."""
    a = np.array([[-0.5 * gamma, 0.0, 0.0],
                  [0.0, -0.5 * gamma, -omega],
                  [0.0, omega, -gamma]])
    b = np.array([0.0, 0.0, gamma])
    return np.linalg.solve(a, b)


def rk4(rhs, rho0, t_final, dt):
    rho = rho0.astype(complex)
    n = int(round(t_final / dt))
    for _ in range(n):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho
