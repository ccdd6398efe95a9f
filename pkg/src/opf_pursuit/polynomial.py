"""Closed-form real roots of cubics and global minimization of quartics on intervals."""

from __future__ import annotations

import math

from .errors import UnboundedSubproblemError

_TWO_PI_3 = 2.0 * math.pi / 3.0


def _cbrt(v: float) -> float:
    return math.copysign(abs(v) ** (1.0 / 3.0), v)


def _newton(a: float, b: float, c: float, d: float, r: float, steps: int = 4) -> float:
    """Polish ``r`` with Newton steps on the cubic, stopping once a step stops helping."""
    f = ((a * r + b) * r + c) * r + d
    for _ in range(steps):
        df = (3.0 * a * r + 2.0 * b) * r + c
        if df == 0.0 or f == 0.0:
            break
        cand = r - f / df
        fc = ((a * cand + b) * cand + c) * cand + d
        if not abs(fc) < abs(f):
            break
        r, f = cand, fc
    return r


def _quadratic_roots(a: float, b: float, c: float) -> list[float]:
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    if disc == 0.0:
        return [-b / (2.0 * a)]
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    r1 = q / a
    r2 = c / q if q != 0.0 else -b / a - r1
    return [r1, r2]


def _backward_error(a, b, c, d, r) -> float:
    """``|p(r)|`` relative to the sum of the term magnitudes."""
    ar = abs(r)
    terms = ((abs(a) * ar + abs(b)) * ar + abs(c)) * ar + abs(d)
    val = abs(((a * r + b) * r + c) * r + d)
    return val / terms if terms > 0.0 else 0.0


def _collapse(roots: list[float], a, b, c, d) -> list[float]:
    """Sort and merge roots closer than 1e-7 (relative), keeping the better-fitting one."""
    roots = sorted(roots)
    out: list[float] = []
    for r in roots:
        if out and abs(r - out[-1]) <= 1e-7 * max(1.0, abs(r)):
            if _backward_error(a, b, c, d, r) < _backward_error(a, b, c, d, out[-1]):
                out[-1] = r
            continue
        out.append(r)
    return out


def _depressed(B: float, C: float, D: float) -> list[float]:
    """Real roots of the monic cubic ``u^3 + B u^2 + C u + D`` with coefficients of order one."""
    shift = B / 3.0
    # u = w - B/3 gives w^3 + p w + q
    p = C - B * B / 3.0
    q = 2.0 * B * B * B / 27.0 - B * C / 3.0 + D
    disc = (q * q) / 4.0 + (p * p * p) / 27.0
    if p == 0.0 and q == 0.0:
        return [-shift]
    if disc < 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = max(-1.0, min(1.0, 3.0 * q / (p * m)))
        phi = math.acos(arg) / 3.0
        return [m * math.cos(phi - k * _TWO_PI_3) - shift for k in range(3)]
    s = math.sqrt(disc)
    u = _cbrt(-q / 2.0 + s)
    v = _cbrt(-q / 2.0 - s)
    roots = [u + v - shift]
    if disc == 0.0 and p != 0.0:
        roots.append(-0.5 * (u + v) - shift)
    return roots


def cubic_roots(a: float, b: float, c: float, d: float) -> list[float]:
    """Distinct real roots of ``a x^3 + b x^2 + c x + d``, sorted ascending.

    Three real roots use the trigonometric form, a single real root uses
    Cardano's formula, after rescaling ``x`` so the monic coefficients are of
    order one. Each root is then Newton-polished. ``a == 0`` degrades to the
    quadratic or linear case; when ``a`` is negligible against the other
    coefficients the quadratic part's roots are added as candidates, since the
    scaled cubic resolves them poorly. Roots closer than ``1e-7`` (relative)
    are merged.
    """
    if a == 0.0 and b == 0.0 and c == 0.0 and d == 0.0:
        raise ValueError("zero polynomial has no isolated roots")
    m = max(abs(a), abs(b), abs(c), abs(d))
    a, b, c, d = a / m, b / m, c / m, d / m
    if a == 0.0:
        return _collapse(_quadratic_roots(b, c, d), a, b, c, d)
    if d == 0.0:
        return _collapse([0.0] + _quadratic_roots(a, b, c), a, b, c, d)

    cands = []
    if abs(a) < 1e-8:
        cands += _quadratic_roots(b, c, d)
    # x = s u balances the monic coefficients; s is infinite only when a is
    # so small that the far root is not representable
    B, C, D = b / a, c / a, d / a
    s = max(abs(B), math.sqrt(abs(C)), _cbrt(abs(D)))
    if math.isfinite(s):
        cands += [s * u for u in _depressed(B / s, C / (s * s), D / (s * s * s))]
    roots = []
    for r in cands:
        r = _newton(a, b, c, d, r)
        if math.isfinite(r) and _backward_error(a, b, c, d, r) <= 1e-10:
            roots.append(r)
    return _collapse(roots, a, b, c, d)


def polyval(coeffs, t: float) -> float:
    """Evaluate ``sum(coeffs[k] * t**k)`` (ascending order) by Horner's rule."""
    acc = 0.0
    for ck in reversed(coeffs):
        acc = acc * t + ck
    return acc


def _degree(coeffs) -> int:
    for k in range(len(coeffs) - 1, -1, -1):
        if coeffs[k] != 0.0:
            return k
    return -1


def minimize_univariate(coeffs, lo: float = -math.inf, hi: float = math.inf, label: str = "coordinate"):
    """Global minimizer of a polynomial of degree <= 4 on ``[lo, hi]``.

    ``coeffs`` are in ascending order (``coeffs[k]`` multiplies ``t**k``).
    Candidates are the real stationary points inside the interval plus the
    finite endpoints. Among equal values the candidate closest to 0 wins.
    Returns ``(argmin, value)``.
    """
    coeffs = [float(c) for c in coeffs] + [0.0] * (5 - len(coeffs))
    if len(coeffs) > 5:
        raise ValueError("degree must be <= 4")
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}] for {label}")
    if lo == hi:
        return lo, polyval(coeffs, lo)

    deg = _degree(coeffs)
    lead = coeffs[deg] if deg >= 0 else 0.0
    if deg >= 1:
        # behaviour at +inf is sign(lead); at -inf it is sign(lead) * (-1)^deg
        if hi == math.inf and lead < 0.0:
            raise UnboundedSubproblemError(f"{label}: restriction unbounded below as t -> +inf")
        if lo == -math.inf and (lead < 0.0) == (deg % 2 == 0):
            raise UnboundedSubproblemError(f"{label}: restriction unbounded below as t -> -inf")

    cands = [v for v in (lo, hi) if math.isfinite(v)]
    if deg >= 2:
        c1, c2, c3, c4 = coeffs[1:5]
        for r in cubic_roots(4.0 * c4, 3.0 * c3, 2.0 * c2, c1):
            if lo <= r <= hi:
                cands.append(r)
    elif deg <= 0 and lo <= 0.0 <= hi:
        cands.append(0.0)
    if not cands:
        # constant on an unbounded interval excluding 0
        cands.append(lo if math.isfinite(lo) else hi)

    best_t, best_v = None, math.inf
    for t in cands:
        v = polyval(coeffs, t)
        if v < best_v or (v == best_v and abs(t) < abs(best_t)):
            best_t, best_v = t, v
    return best_t, best_v
