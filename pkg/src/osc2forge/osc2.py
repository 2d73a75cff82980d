"""Ambient second-order geometry: nonlinear connection, adapted frame,
linear-connection coefficient blocks and the nine covariant derivatives.

Coefficient arrays are numpy object arrays of Expr. Index convention
throughout: the first axis is the upper index, then lower indices in
display order, the derivative index last.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import CoordSpace, Expr, ZERO


class GeometryError(Exception):
    pass


# ---------------------------------------------------------------------------
# object-array helpers

def earray(*shape: int) -> np.ndarray:
    arr = np.empty(shape, dtype=object)
    arr[...] = ZERO
    return arr


def asarray(nested) -> np.ndarray:
    arr = np.array(nested, dtype=object)
    return arr


def emap(f: Callable[[Expr], Expr], arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = f(arr[idx])
    return out


def esub(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    for idx in np.ndindex(a.shape):
        out[idx] = ex.sub(a[idx], b[idx])
    return out


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Object-matrix product with symbolic entries."""
    n, k = a.shape
    k2, p = b.shape
    if k != k2:
        raise GeometryError(f"shape mismatch {a.shape} x {b.shape}")
    out = earray(n, p)
    for i in range(n):
        for j in range(p):
            acc = ZERO
            for s in range(k):
                acc = ex.add(acc, ex.mul(a[i, s], b[s, j]))
            out[i, j] = acc
    return out


def det_sym(a: np.ndarray) -> Expr:
    """Determinant by Laplace expansion; fine at chart dimensions."""
    n = a.shape[0]
    if n == 1:
        return a[0, 0]
    acc = ZERO
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        term = ex.mul(a[0, j], det_sym(minor))
        acc = ex.add(acc, term) if j % 2 == 0 else ex.sub(acc, term)
    return acc


def inv_sym(a: np.ndarray) -> np.ndarray:
    """Symbolic inverse via adjugate over determinant."""
    n = a.shape[0]
    d = det_sym(a)
    out = earray(n, n)
    if n == 1:
        out[0, 0] = ex.div(ex.ONE, d)
        return out
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(a, j, axis=0), i, axis=1)
            cof = det_sym(minor)
            if (i + j) % 2 == 1:
                cof = ex.neg(cof)
            out[i, j] = ex.div(cof, d)
    return out


def identity_sym(n: int) -> np.ndarray:
    out = earray(n, n)
    for i in range(n):
        out[i, i] = ex.ONE
    return out


# ---------------------------------------------------------------------------
# adapted frame

class AdaptedFrame:
    """The three derivation families of a nonlinear connection.

    Works over any chart whose coordinates split into (position, first lift,
    second lift); the same machinery serves the ambient chart and the
    submanifold chart with its induced connection.
    """

    H, V1, V2 = 0, 1, 2

    def __init__(self, space: CoordSpace, N1: np.ndarray, N2: np.ndarray):
        self.space = space
        self.N1 = N1
        self.N2 = N2

    def apply(self, family: int, d: int, e: Expr) -> Expr:
        """Apply one frame derivation; ``d`` is 0-based."""
        sp = self.space
        dim = sp.dim
        if family == self.H:
            out = ex.differentiate(e, sp.names[d])
            for b in range(dim):
                out = ex.sub(out, ex.mul(self.N1[b, d], ex.differentiate(e, sp.names[dim + b])))
                out = ex.sub(out, ex.mul(self.N2[b, d], ex.differentiate(e, sp.names[2 * dim + b])))
            return out
        if family == self.V1:
            out = ex.differentiate(e, sp.names[dim + d])
            for b in range(dim):
                out = ex.sub(out, ex.mul(self.N1[b, d], ex.differentiate(e, sp.names[2 * dim + b])))
            return out
        if family == self.V2:
            return ex.differentiate(e, sp.names[2 * dim + d])
        raise GeometryError(f"bad family {family}")

    def natural_to_adapted(self, c0: Sequence[Expr], c1: Sequence[Expr],
                           c2: Sequence[Expr], M1: np.ndarray, M2: np.ndarray):
        """Re-express natural vector components in the adapted frame.

        Uses the dual cobasis pairing: w0 = c0, w1 = c1 + M1 c0,
        w2 = c2 + M1 c1 + M2 c0.
        """
        dim = self.space.dim
        w0 = list(c0)
        w1 = [ZERO] * dim
        w2 = [ZERO] * dim
        for a in range(dim):
            acc1, acc2 = c1[a], c2[a]
            for b in range(dim):
                acc1 = ex.add(acc1, ex.mul(M1[a, b], c0[b]))
                acc2 = ex.add(acc2, ex.add(ex.mul(M1[a, b], c1[b]), ex.mul(M2[a, b], c0[b])))
            w1[a] = acc1
            w2[a] = acc2
        return w0, w1, w2


# ---------------------------------------------------------------------------
# nonlinear connection

def dual_to_primal(M1: np.ndarray, M2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Primal coefficients pinned by duality with the adapted cobasis.

    N1 = M1 and N2 = M2 - M1 N1, so the pairing of (dq, dw1 + M1 dq,
    dw2 + M1 dw1 + M2 dq) with the frame built from N1, N2 is the identity.
    """
    if M1.shape != M2.shape or M1.shape[0] != M1.shape[1]:
        raise GeometryError(f"dual coefficient shapes {M1.shape}, {M2.shape}")
    N1 = M1.copy()
    N2 = esub(M2, matmul(M1, N1))
    return N1, N2


@dataclass(frozen=True)
class NLConnection:
    space: CoordSpace
    M1: np.ndarray
    M2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray

    @classmethod
    def from_dual(cls, space: CoordSpace, M1: np.ndarray, M2: np.ndarray) -> "NLConnection":
        N1, N2 = dual_to_primal(M1, M2)
        return cls(space, M1, M2, N1, N2)

    def frame(self) -> AdaptedFrame:
        return AdaptedFrame(self.space, self.N1, self.N2)

    def pairing_residual(self) -> np.ndarray:
        """Cobasis-against-basis pairing minus the 3dim identity, as Expr."""
        dim = self.space.dim
        ident = identity_sym(dim)
        zero = earray(dim, dim)
        # rows: cobasis forms in the natural co-frame; columns: frame fields
        cob = np.block([[ident, zero, zero],
                        [self.M1, ident, zero],
                        [self.M2, self.M1, ident]])
        bas = np.block([[ident, zero, zero],
                        [emap(ex.neg, self.N1), ident, zero],
                        [emap(ex.neg, self.N2), emap(ex.neg, self.N1), ident]])
        return esub(matmul(cob, bas), identity_sym(3 * dim))


# ---------------------------------------------------------------------------
# linear connection and metric

@dataclass(frozen=True)
class DConnection:
    """Nine coefficient blocks, indexed [i][upper][lower][derivative]."""

    L: np.ndarray   # shape (3, n, n, n)
    C1: np.ndarray
    C2: np.ndarray

    def block(self, family: int) -> np.ndarray:
        return (self.L, self.C1, self.C2)[family]

    @classmethod
    def zero(cls, n: int) -> "DConnection":
        return cls(earray(3, n, n, n), earray(3, n, n, n), earray(3, n, n, n))


@dataclass(frozen=True)
class AmbientGeometry:
    n: int
    space: CoordSpace
    g: np.ndarray
    nl: NLConnection
    conn: DConnection

    def __post_init__(self):
        n = self.n
        if self.g.shape != (n, n):
            raise GeometryError(f"metric shape {self.g.shape}, expected {(n, n)}")
        for a in range(n):
            for b in range(a + 1, n):
                if self.g[a, b] is not self.g[b, a]:
                    raise GeometryError(f"metric not symmetric at ({a + 1},{b + 1})")
        for blk in (self.conn.L, self.conn.C1, self.conn.C2):
            if blk.shape != (3, n, n, n):
                raise GeometryError(f"connection block shape {blk.shape}")

    def frame(self) -> AdaptedFrame:
        return self.nl.frame()


# ---------------------------------------------------------------------------
# d-tensors and covariant derivatives

AMBIENT, TANGENT, NORMAL = "ambient", "tangent", "normal"


@dataclass(frozen=True)
class Slot:
    kind: str
    upper: bool


@dataclass(frozen=True)
class DTensor:
    space: CoordSpace
    slots: tuple[Slot, ...]
    comps: np.ndarray

    def __post_init__(self):
        if len(self.slots) != self.comps.ndim:
            raise GeometryError("slot count does not match component rank")

    @property
    def rank(self) -> int:
        return len(self.slots)


def covariant_derivative(T: DTensor, frame: AdaptedFrame, family: int,
                         coeffs: Mapping[str, np.ndarray],
                         new_slot_kind: str) -> DTensor:
    """One covariant derivative family applied to a d-tensor.

    ``coeffs[kind]`` has shape (dim_kind, dim_kind, deriv_dim). The leading
    term is the adapted-frame derivative of each component; every upper slot
    contributes +coef, every lower slot -coef, and the derivative index is
    appended as a new lower slot of ``new_slot_kind``.
    """
    deriv_dim = frame.space.dim
    new_shape = T.comps.shape + (deriv_dim,)
    out = np.empty(new_shape, dtype=object)
    for idx in np.ndindex(T.comps.shape):
        for d in range(deriv_dim):
            acc = frame.apply(family, d, T.comps[idx])
            for s, slot in enumerate(T.slots):
                coef = coeffs[slot.kind]
                k = idx[s]
                for c in range(coef.shape[0]):
                    swapped = idx[:s] + (c,) + idx[s + 1:]
                    if slot.upper:
                        acc = ex.add(acc, ex.mul(coef[k, c, d], T.comps[swapped]))
                    else:
                        acc = ex.sub(acc, ex.mul(coef[c, k, d], T.comps[swapped]))
            out[idx + (d,)] = acc
    return DTensor(T.space, T.slots + (Slot(new_slot_kind, False),), out)


def cov_deriv_ambient(geom: AmbientGeometry, T: DTensor, i: int, kind: str) -> DTensor:
    """h/v1/v2 covariant derivative of an ambient d-tensor, connection set i."""
    if i not in (0, 1, 2):
        raise GeometryError(f"bad connection index {i}")
    families = {"h": AdaptedFrame.H, "v1": AdaptedFrame.V1, "v2": AdaptedFrame.V2}
    if kind not in families:
        raise GeometryError(f"bad derivative kind {kind!r}")
    if any(slot.kind != AMBIENT for slot in T.slots):
        raise GeometryError("ambient derivative applied to non-ambient slots")
    if T.space is not geom.space and T.space != geom.space:
        raise GeometryError("tensor lives on a different chart")
    family = families[kind]
    coeffs = {AMBIENT: geom.conn.block(family)[i]}
    return covariant_derivative(T, geom.frame(), family, coeffs, AMBIENT)


def metric_compatibility_residuals(geom: AmbientGeometry) -> list[tuple[str, np.ndarray]]:
    """Entries of the nine covariant derivatives of g; zero iff metrical."""
    gT = DTensor(geom.space, (Slot(AMBIENT, False), Slot(AMBIENT, False)), geom.g)
    out = []
    for i in (0, 1, 2):
        for kind in ("h", "v1", "v2"):
            dgT = cov_deriv_ambient(geom, gT, i, kind)
            out.append((f"{kind}[{i}]", dgT.comps))
    return out
