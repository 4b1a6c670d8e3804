from decimal import Context, Decimal, ROUND_HALF_EVEN
from fractions import Fraction
from numbers import Integral, Rational
from typing import List, Sequence, Union
import math

import numpy as np

Number = Union[int, float, Fraction]

SIGNIFICANT_DIGITS = 12


def crop(s: str, n=100, suffix='..') -> str:
    margin = len(suffix)
    if len(s) <= n + margin:
        return s
    return s[:n] + suffix

################################################################################
# Numbers
################################################################################


def is_exact(value) -> bool:
    """Return True for python ints and fractions, but not for floats.
    Numpy integers count as exact.
    """
    return isinstance(value, (Integral, Rational)) and not isinstance(value, bool)


def is_exact_array(values) -> bool:
    values = np.asarray(values)
    if values.dtype != object:
        return np.issubdtype(values.dtype, np.integer)

    return all(is_exact(v) for v in values.flat)


def as_rational(value: Number, tol=1e-12) -> Fraction:
    """Convert a number to a Fraction.
    Floats are snapped to a nearby fraction with a small denominator when one
    exists within `tol` (relative), otherwise their exact binary value is used.
    """
    if isinstance(value, Integral):
        return Fraction(int(value))
    if is_exact(value):
        return Fraction(value)

    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f'Cannot convert {value} to a fraction')

    candidate = Fraction(value).limit_denominator(10**6)
    if abs(float(candidate) - value) <= tol * max(1., abs(value)):
        return candidate

    return Fraction(value)


def is_integral(value: Number, tol=1e-9) -> bool:
    if is_exact(value):
        return Fraction(value).denominator == 1

    return abs(value - round(value)) <= tol


def is_fractional(value: Number, tol=1e-9) -> bool:
    """Return True if value lies strictly inside (0, 1), up to `tol`.
    """
    if is_exact(value):
        return 0 < value < 1

    return tol < value < 1 - tol


def fractional_indices(x: Sequence[Number], tol=1e-9) -> List[int]:
    return [i for i, v in enumerate(x) if is_fractional(v, tol)]


def snap(x: Sequence[float], tol=1e-9) -> np.ndarray:
    """Round entries within `tol` of 0 or 1 onto 0 or 1.
    """
    x = np.array(x, dtype=float)
    x[np.abs(x) <= tol] = 0.
    x[np.abs(x - 1) <= tol] = 1.
    return x


def format_number(value: Number, digits=None) -> str:
    """Format a number with `digits` significant digits, rounding half to even.
    Integral values are printed without a decimal point. The decimal separator
    is always `.`.

    Examples
    --------
    ```
    format_number(Fraction(1, 3)) # '0.333333333333'
    format_number(2.0)            # '2'
    ```
    """
    if digits is None:
        digits = SIGNIFICANT_DIGITS

    if isinstance(value, float) and not math.isfinite(value):
        return str(value)

    context = Context(prec=digits, rounding=ROUND_HALF_EVEN)
    if is_exact(value):
        value = Fraction(value)
        d = context.divide(Decimal(value.numerator), Decimal(value.denominator))
    else:
        d = context.create_decimal(float(value))

    if d == d.to_integral_value():
        return str(int(d))

    return format(d.normalize(), 'f')


def round_number(value: Number, digits=None) -> Union[int, float]:
    """Similar to format_number, but return a json-compatible number.
    """
    text = format_number(value, digits)
    try:
        return int(text)
    except ValueError:
        return float(text)
