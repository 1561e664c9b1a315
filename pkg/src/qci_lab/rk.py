"""Dormand-Prince 5(4) embedded Runge-Kutta pair with PI step-size control.

The stepper works on arrays of any shape whose leading axis is the state
dimension, so a batch of independent trajectories can share one step
sequence (the error norm is the worst trajectory's).
"""

from __future__ import annotations

import math

import numpy as np

C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
B5 = A[6] + (0.0,)
B4 = (5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40)
E = tuple(b5 - b4 for b5, b4 in zip(B5, B4))

# PI controller constants (Gustafsson / Hairer's DOPRI5 choice)
BETA = 0.04
EXPO = 0.2 - 0.75 * BETA
SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0


class DormandPrince:
    """Adaptive stepper for ``y' = rhs(y)`` (autonomous).

    ``tol`` is used as both absolute and relative tolerance.  ``valid`` is an
    optional predicate on a state; a step landing on an invalid state is
    rejected like a failed error test.
    """

    def __init__(self, rhs, tol, valid=None, max_step=math.inf, h_min=1e-14):
        self.rhs = rhs
        self.tol = float(tol)
        self.valid = valid
        self.max_step = max_step
        self.h_min = h_min

    def step(self, y, h, k1=None):
        """One step of size ``h``; returns ``(y_new, err_vector, k_last)``."""
        if k1 is None:
            k1 = self.rhs(y)
        ks = [k1]
        for i in range(1, 7):
            yi = y + h * sum(a * k for a, k in zip(A[i], ks) if a != 0.0)
            ks.append(self.rhs(yi))
        y_new = y + h * sum(b * k for b, k in zip(B5, ks) if b != 0.0)
        err = h * sum(e * k for e, k in zip(E, ks) if e != 0.0)
        return y_new, err, ks[-1]

    def error_norm(self, y, y_new, err):
        scale = self.tol + self.tol * np.maximum(np.abs(y), np.abs(y_new))
        ratio = (err / scale) ** 2
        if ratio.ndim > 1:
            per = np.sqrt(ratio.reshape(ratio.shape[0], -1).mean(axis=0))
            return float(per.max())
        return float(math.sqrt(ratio.mean()))

    def initial_step(self, y, k1):
        d0 = float(np.sqrt(np.mean((y / (self.tol + self.tol * np.abs(y))) ** 2)))
        d1 = float(np.sqrt(np.mean((k1 / (self.tol + self.tol * np.abs(y))) ** 2)))
        h = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
        return min(h, self.max_step, 0.1)

    def run(self, y0, s_max, h0=None):
        """Yield ``(s, y, h, k)`` after every accepted step up to ``s_max``.

        ``k`` is ``rhs(y)`` (first-same-as-last).  When the step size
        underflows, iteration stops and ``self.underflow`` is set.
        """
        self.underflow = False
        y = np.asarray(y0, dtype=float)
        k = self.rhs(y)
        s = 0.0
        h = h0 if h0 is not None else self.initial_step(y, k)
        err_old = 1e-4
        yield s, y, 0.0, k
        while s < s_max:
            h = min(h, self.max_step, s_max - s)
            last = s + h >= s_max
            with np.errstate(all="ignore"):
                y_new, err_vec, k_new = self.step(y, h, k)
                err = self.error_norm(y, y_new, err_vec)
            ok = np.isfinite(err) and err <= 1.0
            if ok and self.valid is not None and not self.valid(y_new):
                ok = False
                err = 1e6
            if ok:
                s = s_max if last else s + h
                y, k = y_new, k_new
                fac = (err ** EXPO) / (err_old ** BETA) / SAFETY if err > 0 else 1 / FAC_MAX
                fac = min(1 / FAC_MIN, max(1 / FAC_MAX, fac))
                err_old = max(err, 1e-4)
                yield s, y, h, k
                h = h / fac
            else:
                if not np.isfinite(err):
                    h *= 0.25
                else:
                    h *= max(FAC_MIN, SAFETY * err ** -EXPO) if err < 1e6 else 0.25
                if h < self.h_min * max(1.0, abs(s)):
                    self.underflow = True
                    return
