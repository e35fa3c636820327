"""Closed real intervals with outward rounding, and boxes over named variables.

Every operation rounds the lower endpoint toward -inf and the upper endpoint
toward +inf, so the exact real result set is always contained in the
returned interval. Transcendental functions are widened by two ulps because
the platform libm is not guaranteed to be correctly rounded.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

INF = math.inf
_nextafter = math.nextafter

PI_LO = 3.141592653589793
PI_HI = 3.1415926535897936
TWO_PI_LO = 2.0 * PI_LO
TWO_PI_HI = 6.283185307179587


class IntervalError(ValueError):
    """Base class for interval-level failures."""


class DomainError(IntervalError):
    """The argument interval lies entirely outside a function's domain."""


class ShapeError(IntervalError):
    """Operands do not range over the same variables."""


class CannotSplit(IntervalError):
    """Every dimension of the box is degenerate."""


def down(x: float) -> float:
    return _nextafter(x, -INF)


def up(x: float) -> float:
    return _nextafter(x, INF)


def _down2(x: float) -> float:
    return _nextafter(_nextafter(x, -INF), -INF)


def _up2(x: float) -> float:
    return _nextafter(_nextafter(x, INF), INF)


def _sum_lo(a: float, b: float) -> float:
    s = a + b
    if s - a == b and s - b == a:  # exact
        return s
    return _nextafter(s, -INF)


def _sum_hi(a: float, b: float) -> float:
    s = a + b
    if s - a == b and s - b == a:
        return s
    return _nextafter(s, INF)


def _plo(x: float, y: float) -> float:
    """Lower bound of x*y; 0*inf counts as 0 (the zero endpoint is attained)."""
    if x == 0.0 or y == 0.0:
        return 0.0
    p = x * y
    if x.is_integer() and y.is_integer() and -9007199254740992.0 < p < 9007199254740992.0:
        return p
    if x == 1.0 or x == -1.0 or y == 1.0 or y == -1.0:
        return p
    return _nextafter(p, -INF)


def _phi(x: float, y: float) -> float:
    if x == 0.0 or y == 0.0:
        return 0.0
    p = x * y
    if x.is_integer() and y.is_integer() and -9007199254740992.0 < p < 9007199254740992.0:
        return p
    if x == 1.0 or x == -1.0 or y == 1.0 or y == -1.0:
        return p
    return _nextafter(p, INF)


_new = object.__new__


class Interval:
    """Closed interval ``[lo, hi]`` with ``lo <= hi``.

    The empty set is the distinct sentinel :data:`EMPTY`; an inverted pair is
    never constructed.
    """

    __slots__ = ("lo", "hi")
    is_empty = False

    def __init__(self, lo: float, hi: float | None = None):
        if hi is None:
            hi = lo
        lo = float(lo)
        hi = float(hi)
        if not lo <= hi:
            raise IntervalError(f"invalid interval [{lo}, {hi}]")
        if lo == INF or hi == -INF:
            raise IntervalError(f"degenerate infinite interval [{lo}, {hi}]")
        self.lo = lo
        self.hi = hi

    # -- construction ---------------------------------------------------
    @staticmethod
    def point(x: float) -> Interval:
        return Interval(x, x)

    @staticmethod
    def from_rational(q: Fraction | int | float) -> Interval:
        """Tightest float interval containing the exact rational ``q``."""
        if isinstance(q, float):
            return Interval(q, q)
        q = Fraction(q)
        f = float(q)
        if Fraction(f) == q:
            return Interval(f, f)
        if Fraction(f) < q:
            return Interval(f, up(f))
        return Interval(down(f), f)

    @staticmethod
    def entire() -> Interval:
        return Interval(-INF, INF)

    # -- queries --------------------------------------------------------
    def width(self) -> float:
        return self.hi - self.lo

    def mid(self) -> float:
        lo, hi = self.lo, self.hi
        if lo == -INF and hi == INF:
            return 0.0
        if lo == -INF:
            return hi - 1.0 - abs(hi)
        if hi == INF:
            return lo + 1.0 + abs(lo)
        m = 0.5 * (lo + hi)
        if not lo <= m <= hi:  # overflow in lo + hi
            m = 0.5 * lo + 0.5 * hi
        return m

    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def is_subset(self, other: Interval) -> bool:
        if other.is_empty:
            return False
        return other.lo <= self.lo and self.hi <= other.hi

    def is_point(self) -> bool:
        return self.lo == self.hi

    def intersect(self, other: Interval) -> Interval:
        if other.is_empty:
            return EMPTY
        lo = self.lo if self.lo >= other.lo else other.lo
        hi = self.hi if self.hi <= other.hi else other.hi
        if lo > hi:
            return EMPTY
        if lo == self.lo and hi == self.hi:
            return self
        return Interval(lo, hi)

    def hull(self, other: Interval) -> Interval:
        if other.is_empty:
            return self
        return Interval(min(self.lo, other.lo), max(self.hi, other.hi))

    def inflate(self, eps: float) -> Interval:
        return Interval(down(self.lo - eps), up(self.hi + eps))

    # -- arithmetic -----------------------------------------------------
    def __add__(self, other):
        if other.__class__ is not Interval:
            other = _coerce(other)
            if other.is_empty:
                return EMPTY
        r = _new(Interval)
        r.lo = _sum_lo(self.lo, other.lo)
        r.hi = _sum_hi(self.hi, other.hi)
        return r

    __radd__ = __add__

    def __sub__(self, other):
        if other.__class__ is not Interval:
            other = _coerce(other)
            if other.is_empty:
                return EMPTY
        r = _new(Interval)
        r.lo = _sum_lo(self.lo, -other.hi)
        r.hi = _sum_hi(self.hi, -other.lo)
        return r

    def __rsub__(self, other):
        return _coerce(other) - self

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __mul__(self, other):
        if other.__class__ is not Interval:
            other = _coerce(other)
            if other.is_empty:
                return EMPTY
        a, b, c, d = self.lo, self.hi, other.lo, other.hi
        # pick the endpoint pairs giving the extremes by sign case
        if a >= 0.0:
            if c >= 0.0:
                lo, hi = _plo(a, c), _phi(b, d)
            elif d <= 0.0:
                lo, hi = _plo(b, c), _phi(a, d)
            else:
                lo, hi = _plo(b, c), _phi(b, d)
        elif b <= 0.0:
            if c >= 0.0:
                lo, hi = _plo(a, d), _phi(b, c)
            elif d <= 0.0:
                lo, hi = _plo(b, d), _phi(a, c)
            else:
                lo, hi = _plo(a, d), _phi(a, c)
        else:
            if c >= 0.0:
                lo, hi = _plo(a, d), _phi(b, d)
            elif d <= 0.0:
                lo, hi = _plo(b, c), _phi(a, c)
            else:
                lo = min(_plo(a, d), _plo(b, c))
                hi = max(_phi(a, c), _phi(b, d))
        r = _new(Interval)
        r.lo = lo
        r.hi = hi
        return r

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Interval):
            other = _coerce(other)
        if other.is_empty:
            return EMPTY
        return _div(self, other)

    def __rtruediv__(self, other):
        return _div(_coerce(other), self)

    def __pow__(self, n):
        return ipow(self, n)

    def __eq__(self, other):
        if not isinstance(other, Interval):
            return NotImplemented
        if other.is_empty:
            return False
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self):
        return hash((self.lo, self.hi))

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"

    def __iter__(self):
        yield self.lo
        yield self.hi


class _EmptyInterval(Interval):
    """The empty set. Absorbing for arithmetic, identity for hull."""

    __slots__ = ()
    is_empty = True

    def __init__(self):
        object.__setattr__(self, "lo", math.nan)
        object.__setattr__(self, "hi", math.nan)

    def width(self):
        return -INF

    def mid(self):
        raise IntervalError("midpoint of the empty interval")

    def mag(self):
        return 0.0

    def contains(self, x):
        return False

    def is_subset(self, other):
        return True

    def is_point(self):
        return False

    def intersect(self, other):
        return self

    def hull(self, other):
        return other

    def inflate(self, eps):
        return self

    def __add__(self, other):
        return self

    __radd__ = __sub__ = __rsub__ = __mul__ = __rmul__ = __add__
    __truediv__ = __rtruediv__ = __add__

    def __neg__(self):
        return self

    def __pow__(self, n):
        return self

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return 0

    def __repr__(self):
        return "EMPTY"


EMPTY: Interval = _EmptyInterval()


def _coerce(x) -> Interval:
    if isinstance(x, Interval):
        return x
    if isinstance(x, (int, Fraction)):
        return Interval.from_rational(x)
    return Interval(float(x), float(x))


def _div(a: Interval, b: Interval) -> Interval:
    if a.is_empty or b.is_empty:
        return EMPTY
    c, d = b.lo, b.hi
    if c == 0.0 and d == 0.0:
        raise DomainError("division by the zero interval")
    if c > 0.0 or d < 0.0:
        q = (a.lo / c, a.lo / d, a.hi / c, a.hi / d)
        lo, hi = min(q), max(q)
        return Interval(down(lo) if lo != -INF else lo, up(hi) if hi != INF else hi)
    # 0 is an endpoint or interior point of b: divide by the valid part(s)
    parts = []
    if d > 0.0:
        parts.append(_div_pos(a, c if c > 0.0 else 0.0, d))
    if c < 0.0:
        # a / [c, 0] == (-a) / [0, -c]
        parts.append(_div_pos(-a, 0.0, -c))
    out = parts[0]
    for p in parts[1:]:
        out = out.hull(p)
    return out


def _div_pos(a: Interval, c: float, d: float) -> Interval:
    """a / [c, d] with 0 <= c < d, c possibly zero."""
    if c > 0.0:
        return _div(a, Interval(c, d))
    if a.lo >= 0.0:
        if a.lo == 0.0:
            return Interval(0.0, INF) if a.hi > 0.0 else Interval(0.0, 0.0)
        return Interval(down(a.lo / d), INF)
    if a.hi <= 0.0:
        if a.hi == 0.0:
            return Interval(-INF, 0.0)
        return Interval(-INF, up(a.hi / d))
    return Interval(-INF, INF)


# -- elementary functions ---------------------------------------------------

def ipow(x: Interval, n) -> Interval:
    """x ** n for integer n (exact enclosure) or real n (x must be positive)."""
    if x.is_empty:
        return EMPTY
    if isinstance(n, Interval):
        if n.is_point() and float(n.lo).is_integer():
            n = int(n.lo)
        else:
            return iexp(n * ilog(x))
    if isinstance(n, Fraction):
        if n.denominator == 1:
            n = int(n)
        else:
            return iexp(Interval.from_rational(n) * ilog(x))
    if isinstance(n, float):
        if n.is_integer():
            n = int(n)
        else:
            return iexp(Interval(n) * ilog(x))
    if n == 0:
        return Interval(1.0, 1.0)
    if n == 1:
        return x
    if n < 0:
        return _div(Interval(1.0, 1.0), ipow(x, -n))
    lo, hi = x.lo, x.hi
    if n % 2 == 0:
        if lo >= 0.0:
            return Interval(_pow_down(lo, n), _pow_up(hi, n))
        if hi <= 0.0:
            return Interval(_pow_down(-hi, n), _pow_up(-lo, n))
        return Interval(0.0, _pow_up(max(-lo, hi), n))
    return Interval(_signed_pow_down(lo, n), _signed_pow_up(hi, n))


def _pow_down(a: float, n: int) -> float:
    try:
        v = math.pow(a, n)
    except OverflowError:
        return float.fromhex("0x1.fffffffffffffp+1023")
    return max(0.0, _down2(v)) if v != INF else float.fromhex("0x1.fffffffffffffp+1023")


def _pow_up(a: float, n: int) -> float:
    try:
        v = math.pow(a, n)
    except OverflowError:
        return INF
    return _up2(v) if v != INF else INF


def _signed_pow_down(a: float, n: int) -> float:
    return _pow_down(a, n) if a >= 0.0 else -_pow_up(-a, n)


def _signed_pow_up(a: float, n: int) -> float:
    return _pow_up(a, n) if a >= 0.0 else -_pow_down(-a, n)


def isqr(x: Interval) -> Interval:
    return ipow(x, 2)


def iexp(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    lo = 0.0 if x.lo == -INF else max(0.0, _down2(_safe_exp(x.lo)))
    hi = _up2(_safe_exp(x.hi)) if x.hi != INF else INF
    return Interval(lo, hi)


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return INF


def ilog(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    if x.hi <= 0.0:
        raise DomainError(f"log of non-positive interval {x!r}")
    lo = -INF if x.lo <= 0.0 else _down2(math.log(x.lo))
    hi = INF if x.hi == INF else _up2(math.log(x.hi))
    return Interval(lo, hi)


def isqrt(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    if x.hi < 0.0:
        raise DomainError(f"sqrt of negative interval {x!r}")
    lo = 0.0 if x.lo <= 0.0 else max(0.0, down(math.sqrt(x.lo)))
    hi = INF if x.hi == INF else up(math.sqrt(x.hi))
    return Interval(lo, hi)


def itanh(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    lo = -1.0 if x.lo == -INF else max(-1.0, _down2(math.tanh(x.lo)))
    hi = 1.0 if x.hi == INF else min(1.0, _up2(math.tanh(x.hi)))
    return Interval(lo, hi)


def iatanh(x: Interval) -> Interval:
    """Inverse of tanh restricted to (-1, 1); used by backward propagation."""
    if x.is_empty:
        return EMPTY
    lo, hi = max(x.lo, -1.0), min(x.hi, 1.0)
    if lo > hi or lo >= 1.0 or hi <= -1.0:
        return EMPTY
    a = -INF if lo <= -1.0 else _down2(math.atanh(lo))
    b = INF if hi >= 1.0 else _up2(math.atanh(hi))
    return Interval(a, b)


def _contains_phase(x: Interval, phase: float) -> bool:
    """Whether ``phase + 2k*pi`` may lie in ``x`` for some integer k.

    Conservative: answers True whenever rounding could hide a hit.
    """
    k_lo = math.floor((x.lo - phase) / TWO_PI_HI) - 1
    k_hi = math.ceil((x.hi - phase) / TWO_PI_LO) + 1
    for k in range(int(k_lo), int(k_hi) + 1):
        if k >= 0:
            c_lo = phase + k * TWO_PI_LO
            c_hi = phase + k * TWO_PI_HI
        else:
            c_lo = phase + k * TWO_PI_HI
            c_hi = phase + k * TWO_PI_LO
        if up(c_hi) >= x.lo and down(c_lo) <= x.hi:
            return True
    return False


def isin(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    if x.lo == -INF or x.hi == INF or x.width() >= TWO_PI_LO:
        return Interval(-1.0, 1.0)
    a, b = math.sin(x.lo), math.sin(x.hi)
    lo = max(-1.0, _down2(min(a, b)))
    hi = min(1.0, _up2(max(a, b)))
    if _contains_phase(x, 0.5 * PI_LO):
        hi = 1.0
    if _contains_phase(x, -0.5 * PI_LO):
        lo = -1.0
    return Interval(lo, hi)


def icos(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    if x.lo == -INF or x.hi == INF or x.width() >= TWO_PI_LO:
        return Interval(-1.0, 1.0)
    a, b = math.cos(x.lo), math.cos(x.hi)
    lo = max(-1.0, _down2(min(a, b)))
    hi = min(1.0, _up2(max(a, b)))
    if _contains_phase(x, 0.0):
        hi = 1.0
    if _contains_phase(x, PI_LO):
        lo = -1.0
    return Interval(lo, hi)


def iabs(x: Interval) -> Interval:
    if x.is_empty:
        return EMPTY
    if x.lo >= 0.0:
        return x
    if x.hi <= 0.0:
        return -x
    return Interval(0.0, max(-x.lo, x.hi))


def imin(x: Interval, y: Interval) -> Interval:
    if x.is_empty or y.is_empty:
        return EMPTY
    return Interval(min(x.lo, y.lo), min(x.hi, y.hi))


def imax(x: Interval, y: Interval) -> Interval:
    if x.is_empty or y.is_empty:
        return EMPTY
    return Interval(max(x.lo, y.lo), max(x.hi, y.hi))


def hull(a: Interval, b: Interval) -> Interval:
    return a.hull(b)


def intersect(a: Interval, b: Interval) -> Interval:
    return a.intersect(b)


def width(a: Interval) -> float:
    return a.width()


def midpoint(a: Interval) -> float:
    return a.mid()


# -- boxes ------------------------------------------------------------------

class Box(Mapping[str, Interval]):
    """Cartesian product of intervals over an ordered set of variable names.

    Boxes are immutable; :meth:`replace` returns an updated copy. A box with
    any empty component is itself empty.
    """

    __slots__ = ("_d",)

    def __init__(self, items: Mapping[str, Interval] | Iterable[tuple[str, Interval]] = ()):
        d = dict(items)
        for k, v in d.items():
            if not isinstance(v, Interval):
                d[k] = _as_interval(v)
        self._d = d

    def __getitem__(self, name: str) -> Interval:
        return self._d[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._d)

    def __len__(self) -> int:
        return len(self._d)

    def __repr__(self):
        inner = ", ".join(f"{k}: {v!r}" for k, v in self._d.items())
        return f"Box({{{inner}}})"

    def __eq__(self, other):
        if not isinstance(other, Box):
            return NotImplemented
        return self._d == other._d

    def __hash__(self):
        return hash(tuple(self._d.items()))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._d)

    def as_dict(self) -> dict[str, Interval]:
        return dict(self._d)

    def is_empty(self) -> bool:
        return any(v.is_empty for v in self._d.values())

    def width(self) -> float:
        if not self._d:
            return 0.0
        return max(v.width() for v in self._d.values())

    def midpoint(self) -> dict[str, float]:
        return {k: v.mid() for k, v in self._d.items()}

    def replace(self, **updates: Interval) -> Box:
        d = dict(self._d)
        d.update(updates)
        return Box(d)

    def with_(self, name: str, value: Interval) -> Box:
        d = dict(self._d)
        d[name] = value
        return Box(d)

    def contains_point(self, point: Mapping[str, float]) -> bool:
        return all(self._d[k].contains(point[k]) for k in self._d)

    def is_subset(self, other: Box) -> bool:
        _check_same(self, other)
        return all(v.is_subset(other._d[k]) for k, v in self._d.items())

    def intersect(self, other: Box) -> Box:
        _check_same(self, other)
        return Box((k, v.intersect(other._d[k])) for k, v in self._d.items())

    def hull(self, other: Box) -> Box:
        _check_same(self, other)
        return Box((k, v.hull(other._d[k])) for k, v in self._d.items())

    def split_dimension(self) -> str:
        """Widest dimension; ties broken by variable-name order."""
        best, best_w = None, -1.0
        for name in sorted(self._d):
            w = self._d[name].width()
            if w > best_w:
                best, best_w = name, w
        if best is None or best_w <= 0.0:
            raise CannotSplit("all dimensions are degenerate")
        return best

    def bisect(self, policy=None) -> tuple[Box, Box]:
        """Split at the midpoint of the dimension chosen by ``policy``.

        ``policy`` maps a box to a variable name; the default is
        :meth:`split_dimension`.
        """
        if self.is_empty():
            raise CannotSplit("cannot split an empty box")
        name = policy(self) if policy is not None else self.split_dimension()
        iv = self._d[name]
        if iv.width() <= 0.0:
            raise CannotSplit(f"dimension {name} is degenerate")
        m = iv.mid()
        if not iv.lo < m < iv.hi:
            raise CannotSplit(f"dimension {name} cannot be split further")
        return self.with_(name, Interval(iv.lo, m)), self.with_(name, Interval(m, iv.hi))


def _as_interval(v) -> Interval:
    if isinstance(v, Interval):
        return v
    if isinstance(v, tuple) and len(v) == 2:
        return Interval(*v)
    return _coerce(v)


def _check_same(a: Box, b: Box) -> None:
    if a._d.keys() != b._d.keys():
        raise ShapeError(f"variable sets differ: {sorted(a._d)} vs {sorted(b._d)}")


def box_hull(a: Box, b: Box) -> Box:
    return a.hull(b)


def box_intersect(a: Box, b: Box) -> Box:
    return a.intersect(b)
