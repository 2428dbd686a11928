"""Per-port power algebra: port impedance matrices and their eigensystems.

The total real power fed into an N-port network, P = Re(i^H Z i)/2,
splits exactly into per-port contributions P_n = Re(i^H T_n i)/2 with

    T_n = (e_n e_n^T Z + Z^H e_n e_n^T) / 2,      sum_n T_n = Re(Z).

Each T_n is Hermitian, indefinite, and rank 2: it has one positive and
one negative eigenvalue (plus N-2 zeros) with closed-form eigenpairs,
which is what makes the transmit-power constraints of the operating
point optimization tractable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _entries(z) -> np.ndarray:
    m = getattr(z, "entries", z)
    return np.asarray(m, dtype=complex)


def port_impedance_matrices(z) -> list[np.ndarray]:
    """All N port impedance matrices of a (loaded) impedance matrix.

    Accepts an ImpedanceMatrix, LoadedImpedanceMatrix or a plain complex
    symmetric array.  Returns Hermitian matrices T_n with
    sum_n T_n == Re(Z) exactly up to rounding.
    """
    m = _entries(z)
    n = m.shape[0]
    out = []
    for k in range(n):
        t = np.zeros((n, n), dtype=complex)
        row = m[k, :]
        t[k, :] += 0.5 * row
        t[:, k] += 0.5 * row.conj()
        out.append(t)
    return out


def port_power(i: np.ndarray, t: np.ndarray) -> float:
    """Real power fed through one port: Re(i^H T_n i) / 2."""
    i = np.asarray(i, dtype=complex)
    return 0.5 * float(np.real(np.vdot(i, t @ i)))


@dataclass(frozen=True)
class PimEigensystem:
    """Closed-form eigensystem of a port impedance matrix.

    ``lam_plus``/``lam_minus`` are the magnitudes of the positive and
    negative eigenvalues (both nonnegative); ``v_plus``/``v_minus`` the
    corresponding unnormalized eigenvectors.  ``rank_one`` marks the
    degenerate uncoupled-port case where the negative eigenvalue
    vanishes and ``v_minus`` is zero.
    """

    port: int
    lam_plus: float
    lam_minus: float
    v_plus: np.ndarray
    v_minus: np.ndarray
    rank_one: bool


def _eigensystem_from_row(port: int, r_n: float, s: np.ndarray) -> PimEigensystem:
    s_sq = float(np.real(np.vdot(s, s)))
    root = np.hypot(np.sqrt(s_sq), r_n)
    lam_plus = 0.5 * (root + r_n)
    lam_minus = 0.5 * (root - r_n)
    n = s.shape[0]
    e_n = np.zeros(n, dtype=complex)
    e_n[port] = 1.0
    w = s.conj()
    v_plus = 2.0 * lam_plus * e_n + w
    v_minus = 2.0 * lam_minus * e_n - w
    rank_one = lam_minus <= 1e-30 * max(lam_plus, 1e-300)
    if rank_one:
        v_minus = np.zeros(n, dtype=complex)
    return PimEigensystem(port, lam_plus, lam_minus, v_plus, v_minus, rank_one)


def pim_eigensystem(z, port: int) -> PimEigensystem:
    """Eigensystem of T_port without forming or diagonalizing it.

    With S^2 the total squared coupling magnitude of the port and R its
    input resistance, the nonzero eigenvalues are

        +lam_plus, -lam_minus,   lam_pm = (sqrt(S^2 + R^2) +- R) / 2

    with eigenvectors 2 lam_pm e_n +- conj(s), where s is the off-
    diagonal part of row n.
    """
    m = _entries(z)
    n = m.shape[0]
    if not 0 <= port < n:
        raise IndexError(f"port {port} out of range for {n}-port matrix")
    s = m[port, :].copy()
    r_n = float(s[port].real)
    s[port] = 0.0
    return _eigensystem_from_row(port, r_n, s)


def pim_split(t: np.ndarray, port: int | None = None):
    """Split a port impedance matrix into its PSD parts, T = T_plus - T_minus.

    Both parts are Hermitian PSD and rank one, built from the closed-form
    eigenpairs; ``trace(T_plus) - trace(T_minus)`` equals the port input
    resistance.  For an uncoupled port T_minus is zero.
    """
    t = np.asarray(t, dtype=complex)
    n = t.shape[0]
    if port is None:
        port = int(np.argmax(np.abs(t).sum(axis=1)))
    row = 2.0 * t[port, :].copy()
    r_n = float(row[port].real) / 2.0
    row[port] = 0.0
    eig = _eigensystem_from_row(port, r_n, row)
    t_plus = _rank_one(eig.lam_plus, eig.v_plus)
    t_minus = _rank_one(eig.lam_minus, eig.v_minus)
    return t_plus, t_minus


def _rank_one(lam: float, v: np.ndarray) -> np.ndarray:
    norm_sq = float(np.real(np.vdot(v, v)))
    if norm_sq == 0.0 or lam == 0.0:
        return np.zeros((v.shape[0], v.shape[0]), dtype=complex)
    return (lam / norm_sq) * np.outer(v, v.conj())
