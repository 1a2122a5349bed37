"""Zonotope and InterZono abstract domains.

All tensors are float64 and may carry arbitrary leading batch dimensions:
a zonotope over ``n`` variables stores ``center`` with shape ``(..., n)`` and
``generators`` with shape ``(..., N, n)``, where row ``i`` is the coefficient
vector of noise symbol ``i``.

Main-domain zonotopes index their rows by a run-wide :class:`NoisePool`, so
two zonotopes produced in the same run can be combined by zero-padding the
shorter generator matrix. Support zonotopes are never combined with one
another symbol-wise, so they use their own local symbols.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Union

import torch
from torch import Tensor

DTYPE = torch.float64
INVERSION_TOL = 1e-9
DEGENERATE_WIDTH = 1e-12
GRID_POINTS = 64

# Upper bound on the spectral norm of the Hessian of sigmoid(x) * tanh(y):
# max row sum of |H| is max|sigmoid'| * max|tanh'| + max|tanh''| ~= 1.0198.
_SIGMOID_TANH_HESSIAN = 1.05


class InvertedBounds(ArithmeticError):
    """Intersection of main and support bounds is empty beyond tolerance."""


class NoisePool:
    """Monotone allocator of noise-symbol indices for one propagation run."""

    def __init__(self, size: int = 0):
        self.size = size

    def allocate(self, n: int) -> int:
        start = self.size
        self.size += n
        return start

    def __repr__(self) -> str:
        return f"NoisePool(size={self.size})"


@dataclass(frozen=True)
class IntervalBounds:
    lower: Tensor
    upper: Tensor

    @property
    def width(self) -> Tensor:
        return self.upper - self.lower

    @property
    def mid(self) -> Tensor:
        return (self.upper + self.lower) / 2

    def contains(self, x: Tensor, slack: float = 1e-9) -> Tensor:
        return (x >= self.lower - slack) & (x <= self.upper + slack)


@dataclass(frozen=True)
class Zonotope:
    center: Tensor
    generators: Tensor

    def __post_init__(self):
        c, g = self.center, self.generators
        if g.dim() != c.dim() + 1:
            raise ValueError(f"generators must have one more dim than center, got {tuple(g.shape)} vs {tuple(c.shape)}")
        if g.shape[-1] != c.shape[-1]:
            raise ValueError(f"generator rows have length {g.shape[-1]}, center has length {c.shape[-1]}")
        if g.shape[:-2] != c.shape[:-1]:
            raise ValueError(f"batch shapes differ: {tuple(g.shape[:-2])} vs {tuple(c.shape[:-1])}")

    @property
    def n(self) -> int:
        return self.center.shape[-1]

    @property
    def noise_count(self) -> int:
        return self.generators.shape[-2]

    @property
    def batch_shape(self) -> torch.Size:
        return self.center.shape[:-1]

    @classmethod
    def point(cls, x: Tensor) -> "Zonotope":
        x = torch.as_tensor(x, dtype=DTYPE)
        return cls(x, x.new_zeros(*x.shape[:-1], 0, x.shape[-1]))

    @classmethod
    def from_box(cls, lower: Tensor, upper: Tensor) -> "Zonotope":
        """Axis-aligned box over local symbols 0..n-1."""
        return box_transform(IntervalBounds(lower, upper))

    @cached_property
    def bounds(self) -> "IntervalBounds":
        radius = self.generators.abs().sum(dim=-2)
        return IntervalBounds(self.center - radius, self.center + radius)

    def __getitem__(self, idx) -> "Zonotope":
        """Select variables along the last axis."""
        out = Zonotope(self.center[..., idx], self.generators[..., idx])
        _slice_cached_bounds(self, out, idx)
        return out

    def sample(self, eps: Tensor) -> Tensor:
        """Evaluate at noise assignments ``eps`` of shape ``(S, *batch, N)``."""
        return self.center + torch.einsum("s...i,...ij->s...j", eps, self.generators)


@dataclass(frozen=True)
class InterZono:
    main: Zonotope
    support: Zonotope

    def __post_init__(self):
        if self.main.n != self.support.n:
            raise ValueError(f"main has {self.main.n} variables, support has {self.support.n}")

    @property
    def n(self) -> int:
        return self.main.n

    @property
    def batch_shape(self) -> torch.Size:
        return self.main.batch_shape

    @cached_property
    def bounds(self) -> "IntervalBounds":
        return intersect_bounds(self.main.bounds, self.support.bounds)

    def __getitem__(self, idx) -> "InterZono":
        out = InterZono(self.main[idx], self.support[idx])
        _slice_cached_bounds(self, out, idx)
        return out


def _slice_cached_bounds(src, dst, idx) -> None:
    if "bounds" in src.__dict__:
        b = src.__dict__["bounds"]
        dst.__dict__["bounds"] = IntervalBounds(b.lower[..., idx], b.upper[..., idx])


@dataclass(frozen=True)
class ChordRelaxation:
    slope: Tensor
    upper_offset: Tensor
    lower_offset: Tensor


Abstract = Union[Zonotope, InterZono]


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class Activation:
    name: str
    fn: Callable[[Tensor], Tensor]
    deriv: Callable[[Tensor], Tensor]
    # points where the derivative equals a given chord slope
    interior: Callable[[Tensor], list]


def _tanh_deriv(x: Tensor) -> Tensor:
    t = torch.tanh(x)
    return 1 - t * t


def _sigmoid_deriv(x: Tensor) -> Tensor:
    s = torch.sigmoid(x)
    return s * (1 - s)


def _tanh_interior(k: Tensor) -> list:
    # tanh'(x) = k  <=>  x = +-artanh(s), s = sqrt(1 - k); written to stay finite as k -> 0
    valid = (k > 0) & (k < 1)
    kk = torch.where(valid, k, torch.full_like(k, 0.5))
    s = torch.sqrt(1 - kk)
    x = torch.log1p(s) - 0.5 * torch.log(kk)
    nan = torch.full_like(k, float("nan"))
    x = torch.where(valid, x, nan)
    return [x, -x]


def _sigmoid_interior(k: Tensor) -> list:
    valid = (k > 0) & (k < 0.25)
    kk = torch.where(valid, k, torch.full_like(k, 0.125))
    q = torch.sqrt(1 - 4 * kk)
    x = 2 * torch.log1p(q) - torch.log(4 * kk)
    x = torch.where(valid, x, torch.full_like(k, float("nan")))
    return [x, -x]


ACTIVATIONS = {
    "tanh": Activation("tanh", torch.tanh, _tanh_deriv, _tanh_interior),
    "sigmoid": Activation("sigmoid", torch.sigmoid, _sigmoid_deriv, _sigmoid_interior),
    "identity": Activation("identity", lambda x: x, torch.ones_like, lambda k: []),
}


def get_activation(f: Union[str, Activation, None]) -> Activation:
    if f is None:
        return ACTIVATIONS["identity"]
    if isinstance(f, Activation):
        return f
    try:
        return ACTIVATIONS[f]
    except KeyError:
        raise ValueError(f"unknown activation {f!r}; expected one of {sorted(ACTIVATIONS)}") from None


# ---------------------------------------------------------------------------
# helpers


def _pad_rows(g: Tensor, rows: int) -> Tensor:
    missing = rows - g.shape[-2]
    if missing <= 0:
        return g
    return torch.cat([g, g.new_zeros(*g.shape[:-2], missing, g.shape[-1])], dim=-2)


def _align(g1: Tensor, g2: Tensor) -> tuple:
    rows = max(g1.shape[-2], g2.shape[-2])
    return _pad_rows(g1, rows), _pad_rows(g2, rows)


def _append_fresh(g: Tensor, half: Tensor, pool: Optional[NoisePool]) -> Tensor:
    """Attach one fresh symbol per coordinate with the given half-widths."""
    n = half.shape[-1]
    start = pool.allocate(n) if pool is not None else g.shape[-2]
    if start < g.shape[-2]:
        raise ValueError(f"noise pool (size {start}) is behind a generator matrix with {g.shape[-2]} rows")
    g = _pad_rows(g, start)
    return torch.cat([g, torch.diag_embed(half)], dim=-2)


def _tracking(*ts: Tensor) -> bool:
    return torch.is_grad_enabled() and any(t.requires_grad for t in ts)


def _max_first(a: Tensor, b: Tensor) -> Tensor:
    # ties resolve to the first argument so subgradients are deterministic;
    # values are identical either way, so skip the select when not differentiating
    if _tracking(a, b):
        return torch.where(a >= b, a, b)
    return torch.maximum(a, b)


def _min_first(a: Tensor, b: Tensor) -> Tensor:
    if _tracking(a, b):
        return torch.where(a <= b, a, b)
    return torch.minimum(a, b)


def intersect_bounds(a: IntervalBounds, b: IntervalBounds) -> IntervalBounds:
    lower = _max_first(a.lower, b.lower)
    upper = _min_first(a.upper, b.upper)
    gap = lower - upper
    worst = float(gap.detach().max()) if gap.numel() else 0.0
    if worst > INVERSION_TOL:
        raise InvertedBounds(f"intersection inverted by {worst:.3e} (tolerance {INVERSION_TOL:g})")
    if worst > 0:
        inverted = gap > 0
        mid = (lower + upper) / 2
        lower = torch.where(inverted, mid, lower)
        upper = torch.where(inverted, mid, upper)
    return IntervalBounds(lower, upper)


# ---------------------------------------------------------------------------
# zonotope transformers


def concretize(z: Zonotope) -> IntervalBounds:
    return z.bounds


def affine(z: Zonotope, W: Tensor, b: Optional[Tensor] = None) -> Zonotope:
    """Exact image of ``z`` under ``x -> W x + b``."""
    if W.dim() != 2 or W.shape[1] != z.n:
        raise ValueError(f"weight of shape {tuple(W.shape)} does not act on {z.n} variables")
    center = z.center @ W.T
    if b is not None:
        if b.shape != (W.shape[0],):
            raise ValueError(f"bias of shape {tuple(b.shape)} does not match {W.shape[0]} outputs")
        center = center + b
    return Zonotope(center, z.generators @ W.T)


def concat(parts: Sequence[Zonotope]) -> Zonotope:
    """Stack variables of zonotopes that share one symbol pool."""
    rows = max(p.noise_count for p in parts)
    center = torch.cat([p.center for p in parts], dim=-1)
    return Zonotope(center, torch.cat([_pad_rows(p.generators, rows) for p in parts], dim=-1))


def block_concat(parts: Sequence[Zonotope]) -> Zonotope:
    """Stack variables of zonotopes over disjoint local symbols."""
    total_rows = sum(p.noise_count for p in parts)
    blocks, offset = [], 0
    for p in parts:
        g = p.generators
        before = g.new_zeros(*g.shape[:-2], offset, g.shape[-1])
        after = g.new_zeros(*g.shape[:-2], total_rows - offset - p.noise_count, g.shape[-1])
        blocks.append(torch.cat([before, g, after], dim=-2))
        offset += p.noise_count
    z = Zonotope(torch.cat([p.center for p in parts], dim=-1), torch.cat(blocks, dim=-1))
    _stack_cached_bounds(z, parts)
    return z


def _stack_cached_bounds(z: Zonotope, parts) -> None:
    if all("bounds" in p.__dict__ for p in parts):
        z.__dict__["bounds"] = IntervalBounds(
            torch.cat([p.bounds.lower for p in parts], dim=-1),
            torch.cat([p.bounds.upper for p in parts], dim=-1),
        )


def scale_shift(z: Zonotope, scale, shift=0.0) -> Zonotope:
    """Elementwise ``scale * x + shift``; exact."""
    scale = torch.as_tensor(scale, dtype=DTYPE)
    return Zonotope(z.center * scale + shift, z.generators * scale.unsqueeze(-2) if scale.dim() else z.generators * scale)


def add(a: Zonotope, b: Zonotope) -> Zonotope:
    ga, gb = _align(a.generators, b.generators)
    return Zonotope(a.center + b.center, ga + gb)


def _chord(lo: Tensor, hi: Tensor, act: Activation):
    """Chord relaxation plus the endpoint values ``f(lo)``, ``f(hi)``."""
    ends = torch.stack([lo, hi])
    f_ends = act.fn(ends)
    width = hi - lo
    degenerate = width < DEGENERATE_WIDTH
    any_degenerate = bool(degenerate.any())
    if any_degenerate:
        width = torch.where(degenerate, torch.ones_like(width), width)
    slope = (f_ends[1] - f_ends[0]) / width
    if any_degenerate:
        mid = (lo + hi) / 2
        slope = torch.where(degenerate, act.deriv(mid), slope)

    gap = f_ends - slope * ends
    upper = gap.max(dim=0).values
    lower = gap.min(dim=0).values
    interior = act.interior(slope.detach())
    if interior:
        # stationary points of f(x) - k x; detached because the gap is flat there
        x = torch.stack(interior)
        ok = torch.isfinite(x) & (x >= lo) & (x <= hi)
        x = torch.where(ok, x, lo)
        gap = act.fn(x) - slope * x
        upper = torch.maximum(upper, torch.where(ok, gap, upper).max(dim=0).values)
        lower = torch.minimum(lower, torch.where(ok, gap, lower).min(dim=0).values)
    if any_degenerate:
        tangent = act.fn(mid) - slope * mid
        upper = torch.where(degenerate, tangent, upper)
        lower = torch.where(degenerate, tangent, lower)
    return ChordRelaxation(slope, upper, lower), f_ends[0], f_ends[1]


def chord_relaxation(bounds: IntervalBounds, f="tanh") -> ChordRelaxation:
    """Parallel lines of chord slope enclosing ``f`` on each interval."""
    return _chord(bounds.lower, bounds.upper, get_activation(f))[0]


def _parallelogram(z: Zonotope, r: ChordRelaxation, pool: Optional[NoisePool]) -> Zonotope:
    k = r.slope
    center = z.center * k + (r.upper_offset + r.lower_offset) / 2
    half = (r.upper_offset - r.lower_offset) / 2
    out = Zonotope(center, _append_fresh(z.generators * k.unsqueeze(-2), half, pool))
    if "bounds" in z.__dict__:
        # radius of the scaled generators is |k| times the input radius
        radius = k.abs() * (z.bounds.upper - z.bounds.lower) / 2 + half
        out.__dict__["bounds"] = IntervalBounds(center - radius, center + radius)
    return out


def elementwise_zono(z: Zonotope, bounds: IntervalBounds, f="tanh", pool: Optional[NoisePool] = None) -> Zonotope:
    """Parallelogram-style transformer for a monotone S-shaped activation.

    ``bounds`` must enclose every coordinate of ``z``; callers pass refined
    bounds when they have them. Adds exactly ``n`` fresh symbols.
    """
    return _parallelogram(z, chord_relaxation(bounds, f), pool)


def box_transform(bounds: IntervalBounds, f=None) -> Zonotope:
    """Box of the monotone image ``[f(l), f(u)]`` on ``n`` local symbols."""
    if f is None:
        lo, hi = bounds.lower, bounds.upper
    else:
        act = get_activation(f)
        lo, hi = act.fn(bounds.lower), act.fn(bounds.upper)
    half = (hi - lo) * 0.5
    z = Zonotope(lo + half, torch.diag_embed(half))
    # the interval hull of a box is the box itself; skip recomputing it
    z.__dict__["bounds"] = IntervalBounds(lo, hi)
    return z


def _planes(bx: IntervalBounds, by: IntervalBounds, grid: int):
    lx, ux, ly, uy = bx.lower, bx.upper, by.lower, by.upper
    sx = torch.sigmoid(torch.stack([lx, ux]))  # (2, ..., n)
    ty = torch.tanh(torch.stack([ly, uy]))
    # corner means of separable partials factor into products of means
    a = (sx * (1 - sx)).mean(dim=0) * ty.mean(dim=0)
    b = sx.mean(dim=0) * (1 - ty * ty).mean(dim=0)

    t = torch.linspace(0.0, 1.0, grid, dtype=DTYPE)
    gx = lx.unsqueeze(-1) + (ux - lx).unsqueeze(-1) * t  # (..., n, grid)
    gy = ly.unsqueeze(-1) + (uy - ly).unsqueeze(-1) * t
    gap = (
        torch.sigmoid(gx).unsqueeze(-1) * torch.tanh(gy).unsqueeze(-2)
        - (a.unsqueeze(-1) * gx).unsqueeze(-1)
        - (b.unsqueeze(-1) * gy).unsqueeze(-2)
    ).flatten(-2)
    xs, ys = torch.stack([lx, ux]), torch.stack([ly, uy])
    corner_gap = (sx.unsqueeze(1) * ty.unsqueeze(0) - (a * xs).unsqueeze(1) - (b * ys).unsqueeze(0)).flatten(0, 1)
    gap = torch.cat([gap, corner_gap.movedim(0, -1)], dim=-1)

    hx = (ux - lx) / (grid - 1)
    hy = (uy - ly) / (grid - 1)
    slack = 0.5 * _SIGMOID_TANH_HESSIAN * (hx * hx + hy * hy) / 4
    gamma_upper = gap.max(dim=-1).values + slack
    gamma_lower = gap.min(dim=-1).values - slack
    return (a, b, gamma_upper, gamma_lower), sx, ty


def sigmoid_tanh_planes(bx: IntervalBounds, by: IntervalBounds, grid: int = GRID_POINTS):
    """Bounding planes ``a x + b y + gamma`` for ``sigmoid(x) * tanh(y)`` over a box.

    Returns ``(a, b, gamma_upper, gamma_lower)``. The slopes average the
    partial derivatives over the four corners. The offsets come from a
    ``grid x grid`` search plus the exact corners, widened by the worst-case
    grid miss implied by the Hessian bound, so they are sound.
    """
    return _planes(bx, by, grid)[0]


def _plane_zono(zx: Zonotope, zy: Zonotope, planes, pool: Optional[NoisePool]) -> Zonotope:
    a, b, gu, gl = planes
    gxs, gys = _align(zx.generators, zy.generators)
    center = a * zx.center + b * zy.center + (gu + gl) / 2
    gens = gxs * a.unsqueeze(-2) + gys * b.unsqueeze(-2)
    return Zonotope(center, _append_fresh(gens, (gu - gl) / 2, pool))


def sigmoid_tanh_zono(
    zx: Zonotope,
    zy: Zonotope,
    bx: Optional[IntervalBounds] = None,
    by: Optional[IntervalBounds] = None,
    pool: Optional[NoisePool] = None,
) -> Zonotope:
    """Joint plane transformer for ``sigmoid(x) * tanh(y)`` on main domains."""
    if zx.n != zy.n:
        raise ValueError(f"length mismatch: {zx.n} vs {zy.n}")
    bx = concretize(zx) if bx is None else bx
    by = concretize(zy) if by is None else by
    return _plane_zono(zx, zy, sigmoid_tanh_planes(bx, by), pool)


def hadamard_zono(zx: Zonotope, zy: Zonotope, pool: Optional[NoisePool] = None) -> Zonotope:
    """Product of two zonotopes over a shared symbol pool.

    Diagonal terms ``x_i y_i eps_i^2`` live in ``[0, x_i y_i]`` and are
    centred; cross terms are bounded by ``sum_{i != j} |x_i| |y_j|``.
    """
    if zx.n != zy.n:
        raise ValueError(f"length mismatch: {zx.n} vs {zy.n}")
    X, Y = _align(zx.generators, zy.generators)
    x0, y0 = zx.center, zy.center
    diag = (X * Y).sum(dim=-2)
    abs_diag = (X * Y).abs().sum(dim=-2)
    cross = X.abs().sum(dim=-2) * Y.abs().sum(dim=-2) - abs_diag
    center = x0 * y0 + diag / 2
    gens = X * y0.unsqueeze(-2) + Y * x0.unsqueeze(-2)
    half = abs_diag / 2 + cross.clamp_min(0)
    return Zonotope(center, _append_fresh(gens, half, pool))


def consolidate(z: Zonotope, cap: int, pool: NoisePool) -> Zonotope:
    """Fold the smallest generator rows into a fresh axis-aligned box.

    Keeps at most ``cap - n`` of the original rows nonzero. Sound but looser.
    """
    nonzero = (z.generators.abs().sum(dim=-1) > 0).reshape(-1, z.noise_count).any(dim=0)
    if int(nonzero.sum()) <= cap:
        return z
    keep = max(cap - z.n, 0)
    norms = z.generators.abs().sum(dim=-1).reshape(-1, z.noise_count).amax(dim=0)
    order = torch.argsort(norms, descending=True, stable=True)
    drop = torch.ones(z.noise_count, dtype=torch.bool)
    drop[order[:keep]] = False
    dropped = z.generators * drop.to(DTYPE).unsqueeze(-1)
    half = dropped.abs().sum(dim=-2)
    gens = z.generators * (~drop).to(DTYPE).unsqueeze(-1)
    return Zonotope(z.center, _append_fresh(gens, half, pool))


# ---------------------------------------------------------------------------
# InterZono transformers


def lift_to_interzono(z: Zonotope) -> InterZono:
    return InterZono(z, box_transform(concretize(z)))


def interzono_concretize(d: InterZono) -> IntervalBounds:
    return d.bounds


def interzono_affine(d: InterZono, W: Tensor, b: Optional[Tensor] = None) -> InterZono:
    return InterZono(affine(d.main, W, b), affine(d.support, W, b))


def interzono_concat(parts: Sequence[InterZono]) -> InterZono:
    main = concat([p.main for p in parts])
    _stack_cached_bounds(main, [p.main for p in parts])
    return InterZono(main, block_concat([p.support for p in parts]))


def interzono_scale_shift(d: InterZono, scale, shift=0.0) -> InterZono:
    out = InterZono(scale_shift(d.main, scale, shift), scale_shift(d.support, scale, shift))
    if "bounds" in d.__dict__:
        # monotone elementwise map commutes with the intersection
        scale = torch.as_tensor(scale, dtype=DTYPE)
        lo, hi = d.bounds.lower * scale + shift, d.bounds.upper * scale + shift
        out.__dict__["bounds"] = IntervalBounds(torch.minimum(lo, hi), torch.maximum(lo, hi))
    return out


def interzono_add(d1: InterZono, d2: InterZono) -> InterZono:
    """Sum: exact on the main domain, interval sum of refined bounds on support."""
    b1, b2 = interzono_concretize(d1), interzono_concretize(d2)
    support = box_transform(IntervalBounds(b1.lower + b2.lower, b1.upper + b2.upper))
    return InterZono(add(d1.main, d2.main), support)


def elementwise_interzono(d: InterZono, f="tanh", pool: Optional[NoisePool] = None) -> InterZono:
    bounds = interzono_concretize(d)
    relax, f_lo, f_hi = _chord(bounds.lower, bounds.upper, get_activation(f))
    return InterZono(_parallelogram(d.main, relax, pool), box_transform(IntervalBounds(f_lo, f_hi)))


def sigma_tanh_product_interzono(dx: InterZono, dy: InterZono, pool: Optional[NoisePool] = None) -> InterZono:
    if dx.n != dy.n:
        raise ValueError(f"length mismatch: {dx.n} vs {dy.n}")
    bx, by = interzono_concretize(dx), interzono_concretize(dy)
    planes, sx, ty = _planes(bx, by, GRID_POINTS)
    main = _plane_zono(dx.main, dy.main, planes, pool)
    (sl, su), (tl, tu) = sx, ty
    lower = _min_first(sl * tl, su * tl)
    upper = _max_first(sl * tu, su * tu)
    return InterZono(main, box_transform(IntervalBounds(lower, upper)))


def interval_product(bx: IntervalBounds, by: IntervalBounds) -> IntervalBounds:
    corners = torch.stack([bx.lower * by.lower, bx.lower * by.upper, bx.upper * by.lower, bx.upper * by.upper])
    # min/max over dim return the first extremal index, which fixes the subgradient on ties
    return IntervalBounds(corners.min(dim=0).values, corners.max(dim=0).values)


def hadamard_generic(dx: InterZono, dy: InterZono, pool: Optional[NoisePool] = None) -> InterZono:
    if dx.n != dy.n:
        raise ValueError(f"length mismatch: {dx.n} vs {dy.n}")
    main = hadamard_zono(dx.main, dy.main, pool)
    support = box_transform(interval_product(interzono_concretize(dx), interzono_concretize(dy)))
    return InterZono(main, support)


# ---------------------------------------------------------------------------
# dispatch over both domains, used by the cell propagation code


def bounds_of(v: Abstract) -> IntervalBounds:
    return interzono_concretize(v) if isinstance(v, InterZono) else concretize(v)


def apply_affine(v: Abstract, W: Tensor, b: Optional[Tensor] = None) -> Abstract:
    return interzono_affine(v, W, b) if isinstance(v, InterZono) else affine(v, W, b)


def apply_concat(parts: Sequence[Abstract]) -> Abstract:
    if all(isinstance(p, InterZono) for p in parts):
        return interzono_concat(parts)
    if any(isinstance(p, InterZono) for p in parts):
        raise TypeError("cannot mix Zonotope and InterZono operands")
    return concat(parts)


def apply_scale_shift(v: Abstract, scale, shift=0.0) -> Abstract:
    return interzono_scale_shift(v, scale, shift) if isinstance(v, InterZono) else scale_shift(v, scale, shift)


def apply_add(a: Abstract, b: Abstract) -> Abstract:
    if isinstance(a, InterZono) != isinstance(b, InterZono):
        raise TypeError("cannot mix Zonotope and InterZono operands")
    return interzono_add(a, b) if isinstance(a, InterZono) else add(a, b)


def apply_activation(v: Abstract, f, pool: Optional[NoisePool] = None) -> Abstract:
    if isinstance(v, InterZono):
        return elementwise_interzono(v, f, pool)
    return elementwise_zono(v, concretize(v), f, pool)


def apply_sigmoid_tanh(vx: Abstract, vy: Abstract, pool: Optional[NoisePool] = None) -> Abstract:
    if isinstance(vx, InterZono) != isinstance(vy, InterZono):
        raise TypeError("cannot mix Zonotope and InterZono operands")
    if isinstance(vx, InterZono):
        return sigma_tanh_product_interzono(vx, vy, pool)
    return sigmoid_tanh_zono(vx, vy, pool=pool)


def apply_hadamard(vx: Abstract, vy: Abstract, pool: Optional[NoisePool] = None) -> Abstract:
    if isinstance(vx, InterZono) != isinstance(vy, InterZono):
        raise TypeError("cannot mix Zonotope and InterZono operands")
    if isinstance(vx, InterZono):
        return hadamard_generic(vx, vy, pool)
    return hadamard_zono(vx, vy, pool)


def main_of(v: Abstract) -> Zonotope:
    return v.main if isinstance(v, InterZono) else v
