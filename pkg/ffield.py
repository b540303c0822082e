"""
Finite Field Module
Prime-field arithmetic carrying secrets, shares and their sums
Every element is stored in canonical form, so equality is structural
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

import config


class FieldError(ValueError):
    """Base class for field arithmetic errors"""


class NotPrimeError(FieldError):
    """Modulus failed the primality test"""


class ModulusMismatchError(FieldError):
    """Operands belong to different fields"""


class ZeroInverseError(FieldError, ZeroDivisionError):
    """Zero has no multiplicative inverse"""


# Witnesses that make Miller-Rabin deterministic below 2^64
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


@lru_cache(maxsize=64)
def is_prime(q):
    """
    Deterministic Miller-Rabin primality test

    Args:
        q: Integer to test, exact for q < 2^64

    Returns:
        bool: True if q is prime
    """
    if q < 2:
        return False
    for p in _MR_BASES:
        if q % p == 0:
            return q == p

    # q - 1 = d * 2^r with d odd
    d, r = q - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1

    for a in _MR_BASES:
        x = pow(a, d, q)
        if x in (1, q - 1):
            continue
        for _ in range(r - 1):
            x = pow(x, 2, q)
            if x == q - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldModulus:
    """Prime q defining GF(q)"""

    q: int

    def __post_init__(self):
        if self.q < 3:
            raise NotPrimeError(f"modulus must be a prime >= 3, got {self.q}")
        if not is_prime(self.q):
            raise NotPrimeError(f"modulus {self.q} is not prime")

    def element(self, value):
        """Reduce any integer into this field"""
        return FieldElement(int(value) % self.q, self)

    def zero(self):
        return FieldElement(0, self)

    def one(self):
        return FieldElement(1, self)

    def random(self, rng):
        """
        Draw a uniformly random element

        Args:
            rng: numpy Generator (or anything with a compatible integers())
        """
        return FieldElement(int(rng.integers(0, self.q, dtype=np.uint64)), self)


@lru_cache(maxsize=16)
def get_modulus(q=config.FIELD_MODULUS):
    """Get a (cached) FieldModulus for q"""
    return FieldModulus(int(q))


@dataclass(frozen=True)
class FieldElement:
    """Residue modulo a prime; value is always the canonical representative"""

    value: int
    modulus: FieldModulus

    def __post_init__(self):
        if not 0 <= self.value < self.modulus.q:
            raise FieldError(f"{self.value} is not canonical modulo {self.modulus.q}")

    def __add__(self, other):
        return f_add(self, other)

    def __sub__(self, other):
        return f_sub(self, other)

    def __mul__(self, other):
        return f_mul(self, other)

    def __truediv__(self, other):
        return f_div(self, other)

    def __neg__(self):
        return f_neg(self)

    def __pow__(self, exponent):
        return f_pow(self, exponent)

    def __int__(self):
        return self.value

    def __bool__(self):
        return self.value != 0

    def __repr__(self):
        return f"F{self.modulus.q}({self.value})"


def _check_same(a, b):
    if a.modulus.q != b.modulus.q:
        raise ModulusMismatchError(
            f"cannot combine elements of GF({a.modulus.q}) and GF({b.modulus.q})"
        )


def f_add(a, b):
    _check_same(a, b)
    return FieldElement((a.value + b.value) % a.modulus.q, a.modulus)


def f_sub(a, b):
    _check_same(a, b)
    return FieldElement((a.value - b.value) % a.modulus.q, a.modulus)


def f_mul(a, b):
    _check_same(a, b)
    return FieldElement((a.value * b.value) % a.modulus.q, a.modulus)


def f_neg(a):
    return FieldElement((-a.value) % a.modulus.q, a.modulus)


def f_pow(a, exponent):
    if exponent < 0:
        return f_pow(f_inv(a), -exponent)
    return FieldElement(pow(a.value, exponent, a.modulus.q), a.modulus)


def f_inv(a):
    """
    Multiplicative inverse by Fermat's little theorem: a^(q-2)

    Raises:
        ZeroInverseError: a is zero
    """
    if a.value == 0:
        raise ZeroInverseError(f"zero has no inverse in GF({a.modulus.q})")
    return FieldElement(pow(a.value, a.modulus.q - 2, a.modulus.q), a.modulus)


def f_div(a, b):
    return f_mul(a, f_inv(b))


def f_sum(elements, field):
    """Field sum of an iterable of elements (zero when empty)"""
    total = field.zero()
    for element in elements:
        total = f_add(total, element)
    return total
