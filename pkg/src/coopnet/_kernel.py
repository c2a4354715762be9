"""Compiled inner loop for the clamped explicit-Euler cooperation dynamics."""
from __future__ import annotations

import numpy as np
from numba import njit

RUNNING = 0
CONVERGED = 1
FAULT = 2


@njit(cache=True)
def advance(E, H, m, mu, tau, b, s, nsteps, tol):
    """Apply up to ``nsteps`` synchronous Euler steps to ``E`` in place.

    Returns ``(steps, status, clamps, first_increase, fault_i, fault_j, last_dmax)``.
    ``first_increase`` is the 1-based step (within this call) at which some entry
    first grew, or 0 if none did.  Each pair ``(i, j), (j, i)`` is read and written
    once per step and the row sums are taken beforehand, so updating in place is
    equivalent to a fully synchronous step.  After a fault the faulting step is
    partially applied; callers replay from a copy.
    """
    n = E.shape[0]
    A = 1.0 - H
    G = (s * 2.0 * b * tau * m) * H
    w0 = tau + mu * mu
    G0 = G / (w0 * np.sqrt(w0))
    S = np.empty(n)
    clamps = 0
    first_up = 0
    dmax = 0.0
    for step in range(nsteps):
        # per-row outgoing cost effort, fixed summation order
        for i in range(n):
            acc = 0.0
            for k in range(n):
                if k != i:
                    acc += A[i, k] * E[i, k]
            S[i] = 2.0 * s * acc
        dmax = 0.0
        up = False
        for i in range(n):
            si = S[i]
            for j in range(i + 1, n):
                eij = E[i, j]
                eji = E[j, i]
                a = A[i, j]
                sj = S[j]
                if eij == 0.0 and eji == 0.0:
                    g = G0[i, j]
                    if g <= a * si and g <= a * sj:
                        # both stay pinned at zero
                        if g < a * si:
                            clamps += 1
                        if g < a * sj:
                            clamps += 1
                        continue
                else:
                    x = eij + eji - mu
                    w = tau + x * x
                    g = G[i, j] / (w * np.sqrt(w))
                dij = g - a * si
                dji = g - a * sj
                if not (np.isfinite(dij) and np.isfinite(dji)):
                    if np.isfinite(dij):
                        return step, FAULT, clamps, first_up, j, i, dmax
                    return step, FAULT, clamps, first_up, i, j, dmax
                nij = eij + dij
                nji = eji + dji
                if nij < 0.0:
                    nij = 0.0
                    clamps += 1
                if nji < 0.0:
                    nji = 0.0
                    clamps += 1
                if nij > eij or nji > eji:
                    up = True
                d = max(abs(nij - eij), abs(nji - eji))
                if d > dmax:
                    dmax = d
                E[i, j] = nij
                E[j, i] = nji
        if up and first_up == 0:
            first_up = step + 1
        if dmax <= tol:
            return step + 1, CONVERGED, clamps, first_up, -1, -1, dmax
    return nsteps, RUNNING, clamps, first_up, -1, -1, dmax


def run(E: np.ndarray, H: np.ndarray, m, mu, tau, b, s, nsteps: int, tol):
    return advance(E, H, float(m), float(mu), float(tau), float(b), float(s), int(nsteps), float(tol))
