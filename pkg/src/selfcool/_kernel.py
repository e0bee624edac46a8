"""Compiled inner loop of the time-domain simulator."""

import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def step_block(state, phi, b_in, chol, noise, n_steps, record_every, phase,
               u0, shift, force0, b_lin, out, out_pos):
    """Advance ``state`` by ``n_steps`` exact-discretisation steps in place.

    The nonlinear remainder of the Lorentzian force is held constant over a
    step and enters through ``b_in``.  Every ``record_every``-th position is
    written to ``out`` starting at ``out_pos``.  Returns
    ``(out_pos, phase, ok)``; ``ok`` is False once a non-finite value shows up.
    """
    n = state.shape[0]
    k = chol.shape[1]
    tmp = np.empty(n)
    inv0 = 1.0 / (1.0 + u0 * u0)
    for i in range(n_steps):
        x = state[0]
        cx = shift * x
        du = u0 - cx
        remainder = force0 * cx * (2.0 * u0 - cx) * inv0 / (1.0 + du * du) - b_lin * x
        for r in range(n):
            acc = b_in[r] * remainder
            for c in range(n):
                acc += phi[r, c] * state[c]
            for c in range(k):
                acc += chol[r, c] * noise[i, c]
            tmp[r] = acc
        for r in range(n):
            state[r] = tmp[r]
        if not np.isfinite(state[0]) or not np.isfinite(state[1]):
            return out_pos, phase, False
        phase += 1
        if phase == record_every:
            phase = 0
            if out_pos < out.shape[0]:
                out[out_pos] = state[0]
                out_pos += 1
    return out_pos, phase, True
