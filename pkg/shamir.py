"""
Shamir Secret Sharing Module
Polynomial sharing, point-wise share summation and threshold reconstruction

Mathematical principles:
- A node's secret is the constant term of a random degree-k polynomial
- Shares are evaluations at nonzero public points, one point per node id
- Evaluations are additive, so point-wise sums lie on the sum polynomial
- Any k+1 sums at distinct points recover the sum of secrets at x = 0
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import groupby

from ffield import FieldElement, f_add, f_inv, f_mul, f_sub, f_sum


class ShamirError(ValueError):
    """Base class for secret-sharing errors"""


class DegreeError(ShamirError):
    pass


class ZeroPointError(ShamirError):
    pass


class DuplicatePointError(ShamirError):
    pass


class PointMismatchError(ShamirError):
    pass


class InsufficientSharesError(ShamirError):
    """Fewer than k+1 usable (mask-consistent) shares"""


# Canonical share encoding: 8-byte little-endian point, 8-byte little-endian value
_SHARE_STRUCT = struct.Struct("<QQ")


@dataclass(frozen=True)
class PublicPoint:
    """Nonzero evaluation point assigned to one node"""

    x: FieldElement
    owner_node: int

    def __post_init__(self):
        if self.x.value == 0:
            raise ZeroPointError(f"node {self.owner_node} maps to x = 0")


def public_point(node_id, field):
    """
    Public point of a node: x = node id mod q (ids are 1-based)

    Args:
        node_id: Node identifier (positive integer)
        field: FieldModulus

    Returns:
        PublicPoint
    """
    return PublicPoint(field.element(node_id), int(node_id))


@dataclass(frozen=True)
class SecretPolynomial:
    """P(x) = c_0 + c_1 x + ... + c_k x^k with c_0 the secret"""

    coefficients: tuple

    @property
    def degree(self):
        return len(self.coefficients) - 1

    @property
    def field(self):
        return self.coefficients[0].modulus

    def constant_term(self):
        return self.coefficients[0]


@dataclass(frozen=True)
class Share:
    """One evaluation of a polynomial at a public point"""

    point: PublicPoint
    value: FieldElement

    def to_bytes(self):
        return _SHARE_STRUCT.pack(self.point.x.value, self.value.value)

    @classmethod
    def from_bytes(cls, data, field):
        x, value = _SHARE_STRUCT.unpack(data)
        return cls(public_point(x, field), field.element(value))


@dataclass(frozen=True)
class SumShare:
    """Point-wise sum of shares plus the set of nodes it covers"""

    point: PublicPoint
    value: FieldElement
    participant_mask: frozenset

    def __post_init__(self):
        if not self.participant_mask:
            raise ShamirError("participant mask must be non-empty")

    def to_bytes(self):
        """Share encoding followed by a length-prefixed little-endian id bitmask"""
        bits = 0
        for node in self.participant_mask:
            bits |= 1 << int(node)
        mask_bytes = bits.to_bytes((bits.bit_length() + 7) // 8, "little")
        return (
            _SHARE_STRUCT.pack(self.point.x.value, self.value.value)
            + struct.pack("<H", len(mask_bytes))
            + mask_bytes
        )

    @classmethod
    def from_bytes(cls, data, field):
        x, value = _SHARE_STRUCT.unpack_from(data, 0)
        offset = _SHARE_STRUCT.size
        (mask_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        if len(data) != offset + mask_len:
            raise ShamirError(f"sum share encoding has {len(data)} bytes, expected {offset + mask_len}")
        bits = int.from_bytes(data[offset:], "little")
        mask = frozenset(i for i in range(bits.bit_length()) if bits >> i & 1)
        return cls(public_point(x, field), field.element(value), mask)


def make_polynomial(secret, degree, rng):
    """
    Build a random polynomial hiding the secret in its constant term

    Args:
        secret: FieldElement
        degree: k, 1 <= k < q - 1
        rng: numpy Generator; c_1..c_k are drawn uniformly from [0, q)

    Returns:
        SecretPolynomial
    """
    field = secret.modulus
    if not 1 <= degree < field.q - 1:
        raise DegreeError(f"degree must be in [1, {field.q - 2}], got {degree}")
    coefficients = [secret] + [field.random(rng) for _ in range(degree)]
    return SecretPolynomial(tuple(coefficients))


def add_polynomials(polynomials):
    """Coefficient-wise sum of polynomials of equal degree"""
    columns = zip(*(p.coefficients for p in polynomials))
    return SecretPolynomial(tuple(f_sum(column, column[0].modulus) for column in columns))


def evaluate(poly, x):
    """Horner evaluation of poly at x"""
    result = poly.coefficients[-1]
    for c in reversed(poly.coefficients[:-1]):
        result = f_add(f_mul(result, x), c)
    return result


def make_shares(poly, points):
    """
    Evaluate a polynomial at every public point

    Args:
        poly: SecretPolynomial
        points: list of PublicPoint, distinct and nonzero

    Returns:
        list of Share, in the order of points
    """
    seen = set()
    for point in points:
        if point.x.value == 0:
            raise ZeroPointError("cannot share at x = 0")
        if point.x.value in seen:
            raise DuplicatePointError(f"duplicate public point x = {point.x.value}")
        seen.add(point.x.value)
    return [Share(point, evaluate(poly, point.x)) for point in points]


def sum_shares(shares, masks):
    """
    Locally sum shares received at one point

    Args:
        shares: list of Share, all at the same point
        masks: list of single-node masks (one per share, pairwise disjoint)

    Returns:
        SumShare whose mask is the union of the input masks
    """
    if not shares:
        raise ShamirError("nothing to sum")
    if len(masks) != len(shares):
        raise ShamirError(f"{len(shares)} shares but {len(masks)} masks")

    point = shares[0].point
    union = set(masks[0])
    for share, mask in zip(shares[1:], masks[1:]):
        if share.point.x != point.x:
            raise PointMismatchError(
                f"share at x = {share.point.x.value} cannot join sum at x = {point.x.value}"
            )
        if union & set(mask):
            raise ShamirError(f"overlapping contributor masks {sorted(union & set(mask))}")
        union |= set(mask)
    total = f_sum((s.value for s in shares), point.x.modulus)
    return SumShare(point, total, frozenset(union))


def _distinct_by_point(entries):
    """Sort by point and reject two different values claiming the same point"""
    ordered = sorted(set(entries), key=lambda e: e.point.x.value)
    for a, b in zip(ordered, ordered[1:]):
        if a.point.x == b.point.x:
            raise DuplicatePointError(f"two entries at x = {a.point.x.value}")
    return ordered


def lagrange_interpolate_at_zero(shares, k):
    """
    Value at x = 0 of the degree-<=k polynomial through k+1 shares

    The k+1 entries with the lowest point values are used.

    Args:
        shares: Share or SumShare entries with distinct nonzero points
        k: Polynomial degree

    Returns:
        FieldElement
    """
    ordered = _distinct_by_point(shares)
    if len(ordered) < k + 1:
        raise InsufficientSharesError(f"need {k + 1} shares, got {len(ordered)}")
    chosen = ordered[: k + 1]

    field = chosen[0].value.modulus
    result = field.zero()
    for j, entry_j in enumerate(chosen):
        x_j = entry_j.point.x
        basis = field.one()
        for m, entry_m in enumerate(chosen):
            if m == j:
                continue
            x_m = entry_m.point.x
            basis = f_mul(basis, f_mul(x_m, f_inv(f_sub(x_m, x_j))))
        result = f_add(result, f_mul(entry_j.value, basis))
    return result


def reconstruct_aggregate(sums, k):
    """
    Recover the aggregate from mask-consistent sum shares

    Selection rule: among contributor sets held by at least k+1 sums, the
    largest set wins; ties go to the set whose lowest k+1 points are smallest.

    Args:
        sums: list of SumShare
        k: Polynomial degree

    Returns:
        tuple: (aggregate FieldElement, participant mask frozenset)
    """
    candidates = []
    by_mask = sorted(sums, key=lambda s: sorted(s.participant_mask))
    for mask, group in groupby(by_mask, key=lambda s: s.participant_mask):
        group = _distinct_by_point(list(group))
        if len(group) >= k + 1:
            low_points = tuple(s.point.x.value for s in group[: k + 1])
            candidates.append((-len(mask), low_points, mask, group))

    if not candidates:
        raise InsufficientSharesError(
            f"no {k + 1} sums share a contributor set ({len(sums)} sums available)"
        )
    _, _, mask, group = min(candidates, key=lambda c: (c[0], c[1]))
    return lagrange_interpolate_at_zero(group, k), mask
