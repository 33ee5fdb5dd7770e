"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``."""
import numpy as np

BACKEND = "python"

_TIME_BLOCK = 64


def _moments_from_states(psi):
    rho = psi[..., :, None] * psi[..., None, :].conj()
    re, im = rho.real, rho.imag
    return rho.sum(axis=0), (re * re).sum(axis=0), (im * im).sum(axis=0), (re * im).sum(axis=0)


def fixed_spectrum_moments(coeffs, energies, theta):
    coeffs = np.asarray(coeffs, dtype=complex)
    energies = np.asarray(energies, dtype=float)
    theta = np.asarray(theta, dtype=float)
    n, d = theta.shape[1], coeffs.size
    out = [np.zeros((n, d, d), dtype=complex)] + [np.zeros((n, d, d)) for _ in range(3)]
    for k0 in range(0, n, _TIME_BLOCK):
        ph = energies[None, None, :] * theta[:, k0:k0 + _TIME_BLOCK, None]
        psi = coeffs * (np.cos(ph) - 1j * np.sin(ph))
        for acc, part in zip(out, _moments_from_states(psi)):
            acc[k0:k0 + _TIME_BLOCK] = part
    return tuple(out)


def state_moments(states):
    states = np.asarray(states, dtype=complex)
    n, d = states.shape[1], states.shape[2]
    out = [np.zeros((n, d, d), dtype=complex)] + [np.zeros((n, d, d)) for _ in range(3)]
    for k0 in range(0, n, _TIME_BLOCK):
        for acc, part in zip(out, _moments_from_states(states[:, k0:k0 + _TIME_BLOCK])):
            acc[k0:k0 + _TIME_BLOCK] = part
    return tuple(out)


def rk4_double_commutator(rho0, h, alpha, hbar, dt, n_steps, record_every):
    h = np.asarray(h, dtype=complex)
    rho = np.array(rho0, dtype=complex)
    pref = -1j / hbar
    a2 = alpha * alpha

    def rhs(r):
        c = h @ r - r @ h
        return pref * c - a2 * (h @ c - c @ h)

    series = [rho.copy()]
    worst = 0.0
    for step in range(1, n_steps + 1):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        herm = rho.conj().T
        dev = np.abs(rho.real - herm.real) + np.abs(rho.imag - herm.imag)
        worst = max(worst, float(dev.max()))
        rho = 0.5 * (rho + herm)
        if step % record_every == 0:
            series.append(rho.copy())
    return np.array(series), 0.5 * worst
