"""Positive reals stored by their natural logarithm.

The constant chains behind the certificates routinely leave the double range
(rates near 1e-2500, constants near 1e+2500, and worse for diffusions), so
every constant is carried as ``ln x`` in a private mpmath context.  The
context is separate from ``mpmath.mp`` so that nothing here touches global
precision state.
"""

from __future__ import annotations

import math
from functools import total_ordering

import mpmath

ctx = mpmath.MPContext()
ctx.dps = 50

# Below this log the neglected relative terms are < e^-10000, far beneath the
# working precision, so asymptotic forms are exact to the last digit.
_TINY_LOG = -10_000
_DOUBLE_LOG_MAX = 709.78
_DOUBLE_LOG_MIN = -745.0


def mpf(x):
    return ctx.mpf(x)


def exp_or_zero(log_x):
    """``exp(log_x)``, returning zero when the result is negligible."""
    log_x = ctx.mpf(log_x)
    if log_x < _TINY_LOG:
        return ctx.zero
    return ctx.exp(log_x)


def logaddexp(a, b):
    a, b = ctx.mpf(a), ctx.mpf(b)
    if a < b:
        a, b = b, a
    return a + ctx.log1p(exp_or_zero(b - a))


def logsubexp(a, b):
    """``ln(e^a - e^b)`` for ``a > b``."""
    a, b = ctx.mpf(a), ctx.mpf(b)
    if not a > b:
        raise ValueError("logsubexp needs a > b")
    d = b - a
    if d < _TINY_LOG:
        return a
    return a + ctx.log(-ctx.expm1(d))


def log_expm1(log_x):
    """``ln(e^x - 1)`` where ``x = exp(log_x)``."""
    log_x = ctx.mpf(log_x)
    if log_x < _TINY_LOG:
        return log_x
    x = ctx.exp(log_x)
    if x > 50:
        return x + ctx.log1p(-ctx.exp(-x))
    return ctx.log(ctx.expm1(x))


def log_one_minus_exp_neg(log_x):
    """``ln(1 - e^{-x})`` where ``x = exp(log_x)``."""
    log_x = ctx.mpf(log_x)
    if log_x < _TINY_LOG:
        return log_x
    return ctx.log(-ctx.expm1(-ctx.exp(log_x)))


def log_neg_log1m(log_x):
    """``ln(-ln(1 - x))`` where ``x = exp(log_x)`` lies in (0, 1)."""
    log_x = ctx.mpf(log_x)
    if log_x < _TINY_LOG:
        return log_x
    return ctx.log(-ctx.log1p(-ctx.exp(log_x)))


def log_one_minus_pow(log_x, q):
    """``ln(1 - (1 - x)^q)`` where ``x = exp(log_x)`` lies in (0, 1]."""
    log_x = ctx.mpf(log_x)
    q = ctx.mpf(q)
    if log_x < _TINY_LOG:
        return log_x + ctx.log(q)
    x = ctx.exp(log_x)
    if x >= 1:
        return ctx.zero
    return ctx.log(-ctx.expm1(q * ctx.log1p(-x)))


@total_ordering
class LogReal:
    """A positive real number represented by its logarithm."""

    __slots__ = ("log",)

    def __init__(self, log):
        log = ctx.mpf(log)
        if not ctx.isfinite(log):
            raise OverflowError(f"non-finite log value {log}")
        object.__setattr__(self, "log", log)

    def __setattr__(self, name, value):
        raise AttributeError("LogReal is immutable")

    @classmethod
    def of(cls, x) -> LogReal:
        x = ctx.mpf(x)
        if not x > 0:
            raise ValueError(f"LogReal needs a positive value, got {x}")
        return cls(ctx.log(x))

    @classmethod
    def coerce(cls, x) -> LogReal:
        return x if isinstance(x, LogReal) else cls.of(x)

    @property
    def value(self):
        """The linear value as an mpmath number (may be astronomically large or small)."""
        return ctx.exp(self.log)

    def __float__(self) -> float:
        if self.log > _DOUBLE_LOG_MAX:
            return math.inf
        if self.log < _DOUBLE_LOG_MIN:
            return 0.0
        return float(ctx.exp(self.log))

    def __mul__(self, other):
        other = LogReal.coerce(other)
        return LogReal(self.log + other.log)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = LogReal.coerce(other)
        return LogReal(self.log - other.log)

    def __rtruediv__(self, other):
        return LogReal.coerce(other) / self

    def __pow__(self, exponent):
        return LogReal(self.log * ctx.mpf(exponent))

    def __add__(self, other):
        other = LogReal.coerce(other)
        return LogReal(logaddexp(self.log, other.log))

    __radd__ = __add__

    def __sub__(self, other):
        other = LogReal.coerce(other)
        return LogReal(logsubexp(self.log, other.log))

    def __rsub__(self, other):
        return LogReal.coerce(other) - self

    def sqrt(self) -> LogReal:
        return LogReal(self.log / 2)

    def __eq__(self, other):
        if isinstance(other, LogReal):
            return self.log == other.log
        try:
            return other > 0 and self.log == ctx.log(ctx.mpf(other))
        except TypeError:
            return NotImplemented

    def __lt__(self, other):
        if isinstance(other, LogReal):
            return self.log < other.log
        other = ctx.mpf(other)
        if other <= 0:
            return False
        return self.log < ctx.log(other)

    def __hash__(self):
        return hash(self.log)

    def __repr__(self):
        return f"LogReal({format_log(self.log)})"


def format_log(log_x) -> str:
    """Render ``exp(log_x)`` in scientific notation without materializing it."""
    log_x = ctx.mpf(log_x)
    log10 = log_x / ctx.log(10)
    if abs(log10) > 1e15:
        return f"exp({ctx.nstr(log_x, 17)})"
    exponent = int(ctx.floor(log10))
    mantissa = ctx.power(10, log10 - exponent)
    if mantissa >= 10:
        mantissa /= 10
        exponent += 1
    return f"{ctx.nstr(mantissa, 17, strip_zeros=False)}e{exponent:+d}"


def to_jsonable(x: LogReal) -> tuple[object, object]:
    """(value, log_value) pair: floats where doubles can hold them, strings otherwise."""
    value = float(x)
    if value == 0.0 or math.isinf(value):
        value = format_log(x.log)
    log_value = float(x.log) if abs(x.log) < 1e300 else ctx.nstr(x.log, 17)
    return value, log_value
