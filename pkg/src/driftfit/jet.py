"""Truncated Taylor jets with dual-number coefficients.

A :class:`Jet` holds the Taylor coefficients of f(x + h) in powers of ``h``
up to a fixed order. Each coefficient also carries its gradient with respect
to ``p`` parameters (forward-mode dual numbers), so one pass of jet
arithmetic yields exact parameter derivatives as well.

Storage is an array ``c`` of shape ``(order + 1, 1 + p, *batch)``; ``c[k, 0]``
is the k-th Taylor coefficient and ``c[k, 1:]`` its parameter gradient.
Arithmetic broadcasts over the trailing batch axes.
"""

from __future__ import annotations

import numpy as np


class JetOrderError(ValueError):
    pass


# -- dual number helpers on arrays of shape (1 + p, *batch) -------------------


def _dmul(u, v):
    out = np.empty(np.broadcast_shapes(u.shape, v.shape))
    out[0] = u[0] * v[0]
    out[1:] = u[0] * v[1:] + u[1:] * v[0]
    return out


def _ddiv(u, v):
    out = np.empty(np.broadcast_shapes(u.shape, v.shape))
    out[0] = u[0] / v[0]
    out[1:] = (u[1:] * v[0] - u[0] * v[1:]) / (v[0] * v[0])
    return out


def _dfunc(u, f0, f1):
    """Apply a scalar function with value f0(u0) and derivative f1(u0)."""
    out = np.empty(u.shape)
    out[0] = f0(u[0])
    out[1:] = f1(u[0]) * u[1:]
    return out


class Jet:
    __array_priority__ = 1000

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.ndim < 2:
            raise ValueError("jet coefficients need shape (order+1, 1+p, ...)")
        self.c = c

    # -- construction --

    @classmethod
    def variable(cls, x, order: int, n_params: int = 0) -> "Jet":
        """The jet of y -> y at ``x``: coefficients (x, 1, 0, ...)."""
        x = np.asarray(x, dtype=float)
        c = np.zeros((order + 1, 1 + n_params) + x.shape)
        c[0, 0] = x
        if order >= 1:
            c[1, 0] = 1.0
        return cls(c)

    @classmethod
    def constant(cls, value, order: int, n_params: int = 0, grad_index: int | None = None,
                 batch_ndim: int = 0) -> "Jet":
        """A constant; with ``grad_index`` it is the parameter of that index."""
        v = np.asarray(value, dtype=float)
        v = v.reshape((1,) * (batch_ndim - v.ndim) + v.shape)
        c = np.zeros((order + 1, 1 + n_params) + v.shape)
        c[0, 0] = v
        if grad_index is not None:
            c[0, 1 + grad_index] = 1.0
        return cls(c)

    # -- accessors --

    @property
    def order(self) -> int:
        return self.c.shape[0] - 1

    @property
    def n_params(self) -> int:
        return self.c.shape[1] - 1

    @property
    def value(self):
        return self.c[0, 0]

    @property
    def grad(self):
        return self.c[0, 1:]

    def derivative(self) -> "Jet":
        """Jet of f' (one order lower)."""
        if self.order < 1:
            raise JetOrderError("cannot differentiate an order-0 jet")
        k = np.arange(1, self.order + 1, dtype=float).reshape((-1,) + (1,) * (self.c.ndim - 1))
        return Jet(self.c[1:] * k)

    def truncate(self, order: int) -> "Jet":
        return Jet(self.c[: order + 1])

    def __repr__(self) -> str:
        return f"Jet(order={self.order}, value={self.value!r})"

    # -- arithmetic --

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        v = np.asarray(other, dtype=float)
        nb = self.c.ndim - 2
        if v.ndim > nb:
            raise ValueError("operand has more batch dimensions than the jet")
        v = v.reshape((1,) * (nb - v.ndim) + v.shape)
        c = np.zeros((self.order + 1, 1 + self.n_params) + v.shape)
        c[0, 0] = v
        return Jet(c)

    @staticmethod
    def _align(a: "Jet", b: "Jet"):
        n = min(a.order, b.order)
        return a.c[: n + 1], b.c[: n + 1]

    def __add__(self, other):
        a, b = self._align(self, self._coerce(other))
        return Jet(a + b)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        a, b = self._align(self, self._coerce(other))
        return Jet(a - b)

    def __rsub__(self, other):
        a, b = self._align(self._coerce(other), self)
        return Jet(a - b)

    def __mul__(self, other):
        if not isinstance(other, Jet) and np.ndim(other) == 0:
            return Jet(self.c * float(other))
        a, b = self._align(self, self._coerce(other))
        n = a.shape[0]
        shape = (n,) + np.broadcast_shapes(a.shape[1:], b.shape[1:])
        out = np.zeros(shape)
        for k in range(n):
            for i in range(k + 1):
                out[k] += _dmul(a[i], b[k - i])
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet) and np.ndim(other) == 0:
            return Jet(self.c / float(other))
        return _divide(self, self._coerce(other))

    def __rtruediv__(self, other):
        return _divide(self._coerce(other), self)

    def __pow__(self, power):
        if isinstance(power, (int, np.integer)) and power >= 0:
            out = self._coerce(1.0)
            base = self
            p = int(power)
            while p:
                if p & 1:
                    out = out * base
                base = base * base
                p >>= 1
            return out
        return exp(log(self) * float(power))


def _divide(a: Jet, b: Jet) -> Jet:
    ac, bc = Jet._align(a, b)
    n = ac.shape[0]
    shape = (n,) + np.broadcast_shapes(ac.shape[1:], bc.shape[1:])
    q = np.zeros(shape)
    for k in range(n):
        acc = np.broadcast_to(ac[k], shape[1:]).copy()
        for i in range(1, k + 1):
            acc -= _dmul(bc[i], q[k - i])
        q[k] = _ddiv(acc, bc[0])
    return Jet(q)


# -- elementary functions (jets or plain numbers) ----------------------------


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    a = x.c
    e = np.zeros_like(a)
    e[0] = _dfunc(a[0], np.exp, np.exp)
    for k in range(1, a.shape[0]):
        for j in range(1, k + 1):
            e[k] += j * _dmul(a[j], e[k - j])
        e[k] /= k
    return Jet(e)


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    a = x.c
    out = np.zeros_like(a)
    out[0] = _dfunc(a[0], np.log, lambda u: 1.0 / u)
    for k in range(1, a.shape[0]):
        acc = a[k].copy()
        for j in range(1, k):
            acc -= (j / k) * _dmul(out[j], a[k - j])
        out[k] = _ddiv(acc, a[0])
    return Jet(out)


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    return exp(log(x) * 0.5)


def _sincos(x: Jet):
    a = x.c
    s = np.zeros_like(a)
    c = np.zeros_like(a)
    s[0] = _dfunc(a[0], np.sin, np.cos)
    c[0] = _dfunc(a[0], np.cos, lambda u: -np.sin(u))
    for k in range(1, a.shape[0]):
        for j in range(1, k + 1):
            s[k] += j * _dmul(a[j], c[k - j])
            c[k] -= j * _dmul(a[j], s[k - j])
        s[k] /= k
        c[k] /= k
    return Jet(s), Jet(c)


def sin(x):
    return _sincos(x)[0] if isinstance(x, Jet) else np.sin(x)


def cos(x):
    return _sincos(x)[1] if isinstance(x, Jet) else np.cos(x)


def tanh(x):
    if not isinstance(x, Jet):
        return np.tanh(x)
    e2 = exp(x * 2.0)
    return (e2 - 1.0) / (e2 + 1.0)


# -- generator iteration ------------------------------------------------------


def generator_iterates(drift_bar, diffusion, x, order: int, n_params: int = 0, params=None):
    """Values of A^k g at ``x`` for k = 1..order, where g(y) = y - x and
    A f = drift_bar f' + 0.5 diffusion^2 f''.

    ``drift_bar(params, y)`` and ``diffusion(y)`` are evaluated on jets.
    Returns an array of shape (order, 1 + n_params, *x.shape) with dual
    values (value and parameter gradient) of each iterate.
    """
    if order < 1:
        raise JetOrderError("generator order must be >= 1")
    x = np.asarray(x, dtype=float)
    n = 2 * order
    y = Jet.variable(x, n, n_params)
    if params is None:
        params = ()
    th = tuple(Jet.constant(p, n, n_params, grad_index=i if n_params else None,
                            batch_ndim=x.ndim)
               for i, p in enumerate(params))
    b = y._coerce(0.0) + drift_bar(th, y)
    a = y._coerce(0.0) + diffusion(y)
    half_a2 = a * a * 0.5
    f = y - x
    out = np.empty((order, 1 + n_params) + x.shape)
    for k in range(order):
        if f.order < 2:
            raise JetOrderError("insufficient jet order for another generator step")
        d1 = f.derivative()
        d2 = d1.derivative()
        f = b * d1 + half_a2 * d2
        out[k] = f.c[0]
    return out
