"""Boundary conditions, spin layers, disagreement edges and spin-flip maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import Region

KINDS = ("plus", "minus", "free", "alt", "explicit")


@dataclass(frozen=True)
class Boundary:
    """Boundary condition of one layer.

    ``alt`` is +1 on even and -1 on odd vertices when ``sign`` is +1 (and the
    negation otherwise).  ``free`` pins the spins off the closure to +1 but
    leaves the boundary vertices of the closure unconstrained.  ``explicit``
    carries a value for every vertex of the closure; only the boundary ones
    are used.
    """

    kind: str
    sign: int = 1
    values: tuple | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.sign not in (1, -1):
            raise ValueError("boundary sign must be +1 or -1")
        if self.kind == "explicit" and self.values is None:
            raise ValueError("explicit boundary needs values")

    @classmethod
    def parse(cls, text: str) -> Boundary:
        key = text.strip().lower()
        table = {
            "+": cls("plus"), "plus": cls("plus"),
            "-": cls("minus"), "minus": cls("minus"),
            "f": cls("free"), "free": cls("free"),
            "alt": cls("alt"), "±": cls("alt"), "+-": cls("alt"), "alt+": cls("alt"),
            "alt-": cls("alt", -1), "∓": cls("alt", -1), "-+": cls("alt", -1),
        }
        if key not in table:
            raise ValueError(f"cannot parse boundary {text!r}")
        return table[key]

    @property
    def is_free(self) -> bool:
        return self.kind == "free"

    @property
    def is_plus(self) -> bool:
        return self.kind == "plus"

    def values_on(self, region: Region) -> np.ndarray:
        """Spin values on the closure implied by the condition (1 on free boundary sites)."""
        n = region.n_sites
        if self.kind in ("plus", "free"):
            return np.ones(n, dtype=np.int8)
        if self.kind == "minus":
            return -np.ones(n, dtype=np.int8)
        if self.kind == "alt":
            return (self.sign * region.stagger).astype(np.int8)
        vals = np.asarray(self.values, dtype=np.int8)
        if vals.shape != (n,) or not np.all(np.abs(vals) == 1):
            raise ValueError("explicit boundary values must be ±1 on every site of the closure")
        return vals

    def free_mask(self, region: Region) -> np.ndarray:
        """Sites whose spin is not fixed by the condition."""
        if self.kind == "free":
            return np.ones(region.n_sites, dtype=bool)
        return region.interior.copy()

    def __str__(self):
        if self.kind == "alt":
            return "alt" if self.sign == 1 else "alt-"
        return {"plus": "+", "minus": "-", "free": "f", "explicit": "explicit"}[self.kind]


PLUS = Boundary("plus")
MINUS = Boundary("minus")
FREE = Boundary("free")
ALT = Boundary("alt")


def _constant_sign(b: Boundary):
    return {"plus": 1, "minus": -1}.get(b.kind)


def boundary_product(b1: Boundary, b2: Boundary, region: Region | None = None) -> Boundary:
    """Boundary condition of the pointwise product of two layers."""
    if b1.is_free or b2.is_free:
        other = b2 if b1.is_free else b1
        if other.kind in ("free", "plus"):
            return FREE
        raise ValueError(f"product of free with {other} boundary is not a boundary condition")
    c1, c2 = _constant_sign(b1), _constant_sign(b2)
    if c1 is not None and c2 is not None:
        return PLUS if c1 * c2 == 1 else MINUS
    if c1 is not None and b2.kind == "alt":
        return Boundary("alt", c1 * b2.sign)
    if c2 is not None and b1.kind == "alt":
        return Boundary("alt", c2 * b1.sign)
    if b1.kind == "alt" and b2.kind == "alt":
        return PLUS if b1.sign * b2.sign == 1 else MINUS
    if region is None:
        raise ValueError("product with explicit boundary needs the region")
    return Boundary("explicit", 1, tuple(int(v) for v in b1.values_on(region) * b2.values_on(region)))


def flip_odd_boundary(b: Boundary, region: Region | None = None) -> Boundary:
    """Boundary condition after flipping every odd spin."""
    if b.is_free:
        raise ValueError("flipping odd spins does not preserve a free boundary")
    c = _constant_sign(b)
    if c is not None:
        return Boundary("alt", c)
    if b.kind == "alt":
        return PLUS if b.sign == 1 else MINUS
    if region is None:
        raise ValueError("explicit boundary needs the region")
    return Boundary("explicit", 1, tuple(int(v) for v in b.values_on(region) * region.stagger))


@dataclass
class SpinPair:
    """Two ±1 layers on the closure of ``region`` with their boundary conditions."""

    region: Region
    s: np.ndarray
    t: np.ndarray
    bc_s: Boundary = PLUS
    bc_t: Boundary = PLUS

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.int8)
        self.t = np.asarray(self.t, dtype=np.int8)
        for layer, bc, name in ((self.s, self.bc_s, "first"), (self.t, self.bc_t, "second")):
            if layer.shape != (self.region.n_sites,) or not np.all(np.abs(layer) == 1):
                raise ValueError(f"{name} layer must be ±1 on every site of the closure")
            if not consistent(layer, bc, self.region):
                raise ValueError(f"{name} layer disagrees with its boundary condition")

    @classmethod
    def from_boundary(cls, region: Region, bc_s: Boundary, bc_t: Boundary) -> SpinPair:
        return cls(region, bc_s.values_on(region), bc_t.values_on(region), bc_s, bc_t)


def consistent(layer: np.ndarray, bc: Boundary, region: Region) -> bool:
    fixed = ~bc.free_mask(region)
    return bool(np.all(layer[fixed] == bc.values_on(region)[fixed]))


def disagreement_edges(s: np.ndarray, region: Region) -> np.ndarray:
    """Indicator over the edges of the closure of {xy : s_x != s_y}."""
    s = np.asarray(s)
    return s[..., region.edge_u] != s[..., region.edge_v]


def spin_flip(s: np.ndarray, region: Region, sites) -> np.ndarray:
    """Negate the spins on ``sites`` (vertex tuples or closure indices)."""
    out = np.array(s, copy=True)
    idx = [region.index[tuple(x)] if not np.isscalar(x) else int(x) for x in sites]
    out[..., idx] = -out[..., idx]
    return out


def flip_odd(s: np.ndarray, region: Region) -> np.ndarray:
    return np.asarray(s) * region.stagger


MODES = {
    "keep": (0, 1, 2),
    "product-second": (0, 2, 1),
    "product-first-swap": (2, 0, 1),
}


def change_of_variables(pair: SpinPair, mode: str):
    """Re-express the pair and report how the coupling roles are permuted.

    ``product-second`` maps (τ, τ') to (τ, ττ') and sends the roles (J, J', U)
    to (J, U, J'); ``product-first-swap`` maps it to (ττ', τ) with roles
    (U, J, J').  The permutation lists, for each new slot, which old slot it
    takes its coupling from.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    region = pair.region
    if mode == "keep":
        return pair, MODES[mode]
    prod_bc = boundary_product(pair.bc_s, pair.bc_t, region)
    prod = (pair.s * pair.t).astype(np.int8)
    if mode == "product-second":
        new = SpinPair(region, pair.s, prod, pair.bc_s, prod_bc)
    else:
        new = SpinPair(region, prod, pair.s, prod_bc, pair.bc_s)
    return new, MODES[mode]


def compose(p, q):
    """Permutation of applying ``p`` and then ``q`` (both as slot-source lists)."""
    return tuple(p[i] for i in q)
