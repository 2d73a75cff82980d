"""Second-order prolongation of an embedding and the moving frame along it."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .expr import CoordSpace, Expr, ZERO, ONE
from .osc2 import (GeometryError, earray, emap, inv_sym)


class FrameError(GeometryError):
    pass


def prolong_components(space: CoordSpace, comps: Sequence[Expr]):
    """Second-order lift of a smooth map given by position components.

    Works for any image dimension: embeddings of a submanifold chart and
    coordinate changes of the full chart share the same lift rule
        lift1 = (d comps/d q^a) w1^a
        lift2 = (1/2)(d lift1/d q^a) w1^a + (d lift1/d w1^a) w2^a.
    """
    dim = space.dim
    q = space.group(0)
    w1 = space.group(1)
    w2 = space.group(2)
    lift1 = []
    for c in comps:
        acc = ZERO
        for a in range(dim):
            acc = ex.add(acc, ex.mul(ex.differentiate(c, q[a]), ex.var(w1[a])))
        lift1.append(acc)
    lift2 = []
    for c1 in lift1:
        acc = ZERO
        for a in range(dim):
            acc = ex.add(acc, ex.mul(ex.num(0.5), ex.mul(ex.differentiate(c1, q[a]), ex.var(w1[a]))))
            acc = ex.add(acc, ex.mul(ex.differentiate(c1, w1[a]), ex.var(w2[a])))
        lift2.append(acc)
    return list(comps), lift1, lift2


@dataclass(frozen=True)
class ProlongedEmbedding:
    m: int
    n: int
    space: CoordSpace          # submanifold chart (u, v1, v2)
    x: np.ndarray              # (n,) position components over u only
    y1: np.ndarray             # (n,) first lift
    y2: np.ndarray             # (n,) second lift

    def substitution(self, base_space: CoordSpace) -> dict[str, Expr]:
        """Mapping that restricts ambient-chart expressions to the submanifold."""
        sub: dict[str, Expr] = {}
        for a in range(self.n):
            sub[base_space.group(0)[a]] = self.x[a]
            sub[base_space.group(1)[a]] = self.y1[a]
            sub[base_space.group(2)[a]] = self.y2[a]
        return sub


def prolong_embedding(x_comps: Sequence[Expr], m: int, n: int,
                      space: CoordSpace | None = None) -> ProlongedEmbedding:
    if not 1 <= m < n:
        raise FrameError(f"require 1 <= m < n, got m={m}, n={n}")
    if len(x_comps) != n:
        raise FrameError(f"embedding has {len(x_comps)} components, expected {n}")
    space = space or CoordSpace.submanifold(m)
    u_names = set(space.group(0))
    for a, c in enumerate(x_comps):
        extra = ex.free_vars(c) - u_names
        if extra:
            raise FrameError(f"embedding component {a + 1} depends on {sorted(extra)}")
    x, y1, y2 = prolong_components(space, list(x_comps))
    return ProlongedEmbedding(m, n, space, np.array(x, dtype=object),
                              np.array(y1, dtype=object), np.array(y2, dtype=object))


def chain_identity_residuals(emb: ProlongedEmbedding) -> list[Expr]:
    """Differences between lift partials that must coincide identically."""
    sp = emb.space
    res = []
    for a in range(emb.n):
        for al in range(emb.m):
            dxu = ex.differentiate(emb.x[a], sp.group(0)[al])
            dy1v1 = ex.differentiate(emb.y1[a], sp.group(1)[al])
            dy2v2 = ex.differentiate(emb.y2[a], sp.group(2)[al])
            dy1u = ex.differentiate(emb.y1[a], sp.group(0)[al])
            dy2v1 = ex.differentiate(emb.y2[a], sp.group(1)[al])
            res.append(ex.sub(dxu, dy1v1))
            res.append(ex.sub(dxu, dy2v2))
            res.append(ex.sub(dy1u, dy2v1))
    return res


# ---------------------------------------------------------------------------
# moving frame

@dataclass(frozen=True)
class MovingFrame:
    emb: ProlongedEmbedding
    g_r: np.ndarray            # restricted ambient metric (n, n)
    B: np.ndarray              # (n, m) tangent frame
    Bsec: np.ndarray           # (n, m, m) second partials
    B0: np.ndarray             # (n, m) Bsec contracted with v1
    Bthird: np.ndarray         # (n, m, m, m)
    Bn: np.ndarray             # (n, n-m) normal frame
    Bd: np.ndarray             # (m, n) dual tangent frame
    Bnd: np.ndarray            # (n-m, n) dual normal frame
    gsub: np.ndarray           # (m, m) induced metric
    gsub_inv: np.ndarray
    chosen_dirs: tuple[int, ...]
    pivot_norm_sq: tuple[Expr, ...]   # Gram-Schmidt denominators, for degeneracy checks

    @property
    def m(self) -> int:
        return self.emb.m

    @property
    def n(self) -> int:
        return self.emb.n

    def rotate_normals(self, A: np.ndarray) -> "MovingFrame":
        """Replace Bn by Bn A for a constant orthogonal matrix A."""
        k = self.n - self.m
        if A.shape != (k, k):
            raise FrameError(f"rotation shape {A.shape}, expected {(k, k)}")
        Bn = earray(self.n, k)
        for a in range(self.n):
            for al in range(k):
                acc = ZERO
                for be in range(k):
                    acc = ex.add(acc, ex.mul(ex.num(float(A[be, al])), self.Bn[a, be]))
                Bn[a, al] = acc
        Bnd = _dual_normal(self.g_r, Bn)
        return replace(self, Bn=Bn, Bnd=Bnd)


def tangent_frame(emb: ProlongedEmbedding):
    """First through third u-partials of the embedding plus the v1 contraction."""
    m, n, sp = emb.m, emb.n, emb.space
    u = sp.group(0)
    B = earray(n, m)
    Bsec = earray(n, m, m)
    Bthird = earray(n, m, m, m)
    B0 = earray(n, m)
    for a in range(n):
        for al in range(m):
            B[a, al] = ex.differentiate(emb.x[a], u[al])
            for be in range(m):
                Bsec[a, al, be] = ex.differentiate(B[a, al], u[be])
                for ga in range(m):
                    Bthird[a, al, be, ga] = ex.differentiate(Bsec[a, al, be], u[ga])
    for a in range(n):
        for be in range(m):
            acc = ZERO
            for ga in range(m):
                acc = ex.add(acc, ex.mul(Bsec[a, be, ga], sp.lift1(ga + 1)))
            B0[a, be] = acc
    return B, Bsec, B0, Bthird


def _g_dot(g: np.ndarray, v: np.ndarray, w: np.ndarray) -> Expr:
    n = g.shape[0]
    acc = ZERO
    for a in range(n):
        for b in range(n):
            acc = ex.add(acc, ex.mul(g[a, b], ex.mul(v[a], w[b])))
    return acc


def _eval_vector(vec: np.ndarray, point: Mapping[str, float]) -> np.ndarray:
    fn = ex.compile_exprs(list(vec))
    return np.array(fn(point), dtype=float)


def _eval_matrix(mat: np.ndarray, point: Mapping[str, float]) -> np.ndarray:
    fn = ex.compile_exprs(list(mat.ravel()))
    return np.array(fn(point), dtype=float).reshape(mat.shape)


def _pivot_directions(Bnum: np.ndarray, gnum: np.ndarray, n: int, m: int) -> tuple[int, ...]:
    """Greedy selection of coordinate directions with the largest residual
    against the tangent span at the chart base point; ties take the lowest
    index so the choice is deterministic."""
    frame_cols = []
    for al in range(m):
        w = Bnum[:, al].copy()
        for t in frame_cols:
            w = w - (t @ gnum @ w) * t
        nw = float(np.sqrt(w @ gnum @ w))
        if nw < 1e-10:
            raise FrameError("tangent frame degenerate at the chart base point")
        frame_cols.append(w / nw)
    chosen: list[int] = []
    for _ in range(n - m):
        best_j, best_score = -1, -1.0
        for j in range(n):
            if j in chosen:
                continue
            w = np.zeros(n)
            w[j] = 1.0
            for t in frame_cols:
                w = w - (t @ gnum @ w) * t
            score = float(np.sqrt(max(w @ gnum @ w, 0.0)))
            if score > best_score + 1e-15:
                best_j, best_score = j, score
        if best_score < 1e-8:
            raise FrameError("no coordinate direction transversal to the tangent space "
                             "at the chart base point")
        w = np.zeros(n)
        w[best_j] = 1.0
        for t in frame_cols:
            w = w - (t @ gnum @ w) * t
        frame_cols.append(w / best_score)
        chosen.append(best_j)
    return tuple(chosen)


def _dual_normal(g_r: np.ndarray, Bn: np.ndarray) -> np.ndarray:
    n, k = Bn.shape
    Bnd = earray(k, n)
    for al in range(k):
        for a in range(n):
            acc = ZERO
            for b in range(n):
                acc = ex.add(acc, ex.mul(g_r[a, b], Bn[b, al]))
            Bnd[al, a] = acc
    return Bnd


def build_moving_frame(emb: ProlongedEmbedding, g_r: np.ndarray,
                       base_point: Mapping[str, float]) -> MovingFrame:
    """Construct the full frame: tangent partials, unit normals obtained by
    metric Gram-Schmidt over pivoted coordinate directions, and both duals.

    The pivot directions are fixed once at the chart base point and reused on
    the whole chart; the first numerically nonzero component of each normal is
    forced positive there to pin the orientation.
    """
    m, n = emb.m, emb.n
    B, Bsec, B0, Bthird = tangent_frame(emb)

    gsub = earray(m, m)
    for al in range(m):
        for be in range(m):
            gsub[al, be] = _g_dot(g_r, B[:, al], B[:, be])
    gsub_inv = inv_sym(gsub)

    Bnum = _eval_matrix(B, base_point)
    gnum = _eval_matrix(g_r, base_point)
    chosen = _pivot_directions(Bnum, gnum, n, m)

    normals: list[np.ndarray] = []
    norm_sq: list[Expr] = []
    for j in chosen:
        e = earray(n)
        e[j] = ONE
        # remove the tangent projection: w = e - B gsub^{-1} (B^T g e)
        coeff = earray(m)
        for be in range(m):
            acc = ZERO
            for al in range(m):
                acc = ex.add(acc, ex.mul(gsub_inv[be, al], _g_dot(g_r, B[:, al], e)))
            coeff[be] = acc
        w = earray(n)
        for a in range(n):
            acc = e[a]
            for be in range(m):
                acc = ex.sub(acc, ex.mul(B[a, be], coeff[be]))
            w[a] = acc
        for prev in normals:
            proj = _g_dot(g_r, w, prev)
            for a in range(n):
                w[a] = ex.sub(w[a], ex.mul(proj, prev[a]))
        ns = _g_dot(g_r, w, w)
        norm_sq.append(ns)
        unit = np.array([ex.div(w[a], ex.sqrt(ns)) for a in range(n)], dtype=object)
        vals = _eval_vector(unit, base_point)
        lead = next((v for v in vals if abs(v) > 1e-8), 0.0)
        if lead < 0.0:
            unit = emap(ex.neg, unit.reshape(-1, 1))[:, 0]
        normals.append(unit)

    Bn = earray(n, n - m)
    for al, vec in enumerate(normals):
        for a in range(n):
            Bn[a, al] = vec[a]

    # dual tangent frame realizes the index-raising rule through gsub^{-1}
    Bd = earray(m, n)
    lowered = earray(n, m)
    for a in range(n):
        for be in range(m):
            acc = ZERO
            for b in range(n):
                acc = ex.add(acc, ex.mul(g_r[a, b], B[b, be]))
            lowered[a, be] = acc
    for al in range(m):
        for a in range(n):
            acc = ZERO
            for be in range(m):
                acc = ex.add(acc, ex.mul(gsub_inv[al, be], lowered[a, be]))
            Bd[al, a] = acc

    Bnd = _dual_normal(g_r, Bn)
    return MovingFrame(emb, g_r, B, Bsec, B0, Bthird, Bn, Bd, Bnd,
                       gsub, gsub_inv, chosen, tuple(norm_sq))


# ---------------------------------------------------------------------------
# residual expression sets used by the verification layer

def orthonormality_residuals(fr: MovingFrame) -> list[Expr]:
    """g(B, Bn) = 0 and g(Bn, Bn) = identity."""
    res = []
    k = fr.n - fr.m
    for al in range(fr.m):
        for be in range(k):
            res.append(_g_dot(fr.g_r, fr.B[:, al], fr.Bn[:, be]))
    for al in range(k):
        for be in range(k):
            target = ONE if al == be else ZERO
            res.append(ex.sub(_g_dot(fr.g_r, fr.Bn[:, al], fr.Bn[:, be]), target))
    return res


def duality_residuals(fr: MovingFrame) -> list[Expr]:
    """The four pairing blocks of the frame against its dual."""
    res = []
    m, n, k = fr.m, fr.n, fr.n - fr.m
    for be in range(m):
        for al in range(m):
            acc = ZERO
            for a in range(n):
                acc = ex.add(acc, ex.mul(fr.B[a, be], fr.Bd[al, a]))
            res.append(ex.sub(acc, ONE if al == be else ZERO))
    for be in range(m):
        for al in range(k):
            acc = ZERO
            for a in range(n):
                acc = ex.add(acc, ex.mul(fr.B[a, be], fr.Bnd[al, a]))
            res.append(acc)
    for be in range(k):
        for al in range(m):
            acc = ZERO
            for a in range(n):
                acc = ex.add(acc, ex.mul(fr.Bd[al, a], fr.Bn[a, be]))
            res.append(acc)
    for be in range(k):
        for al in range(k):
            acc = ZERO
            for a in range(n):
                acc = ex.add(acc, ex.mul(fr.Bnd[al, a], fr.Bn[a, be]))
            res.append(ex.sub(acc, ONE if al == be else ZERO))
    return res


def completeness_residuals(fr: MovingFrame) -> list[Expr]:
    """B^a_al B^al_b + Bn^a_al Bn^al_b = delta^a_b."""
    res = []
    m, n, k = fr.m, fr.n, fr.n - fr.m
    for a in range(n):
        for b in range(n):
            acc = ZERO
            for al in range(m):
                acc = ex.add(acc, ex.mul(fr.B[a, al], fr.Bd[al, b]))
            for al in range(k):
                acc = ex.add(acc, ex.mul(fr.Bn[a, al], fr.Bnd[al, b]))
            res.append(ex.sub(acc, ONE if a == b else ZERO))
    return res


def raising_residuals(fr: MovingFrame) -> list[Expr]:
    """gsub Bd = g B on the tangent side, Bnd = g Bn on the normal side."""
    res = []
    m, n, k = fr.m, fr.n, fr.n - fr.m
    for al in range(m):
        for a in range(n):
            lhs = ZERO
            for be in range(m):
                lhs = ex.add(lhs, ex.mul(fr.gsub[al, be], fr.Bd[be, a]))
            rhs = ZERO
            for b in range(n):
                rhs = ex.add(rhs, ex.mul(fr.g_r[a, b], fr.B[b, al]))
            res.append(ex.sub(lhs, rhs))
    for al in range(k):
        for a in range(n):
            rhs = ZERO
            for b in range(n):
                rhs = ex.add(rhs, ex.mul(fr.g_r[a, b], fr.Bn[b, al]))
            res.append(ex.sub(fr.Bnd[al, a], rhs))
    return res


def differential_rule_residuals(emb: ProlongedEmbedding) -> list[Expr]:
    """Jacobian entries of the prolongation against the frame arrays.

    The lift pullback of (dx, dy1, dy2) must reproduce the chain pattern:
    dy1 = B0 du + B dv1 and dy2 = (d y2/d u) du + B0 dv1 + B dv2.
    """
    B, _, B0, _ = tangent_frame(emb)
    sp = emb.space
    res = []
    for a in range(emb.n):
        for al in range(emb.m):
            res.append(ex.sub(ex.differentiate(emb.x[a], sp.group(0)[al]), B[a, al]))
            res.append(ex.sub(ex.differentiate(emb.y1[a], sp.group(0)[al]), B0[a, al]))
            res.append(ex.sub(ex.differentiate(emb.y1[a], sp.group(1)[al]), B[a, al]))
            res.append(ex.sub(ex.differentiate(emb.y2[a], sp.group(1)[al]), B0[a, al]))
            res.append(ex.sub(ex.differentiate(emb.y2[a], sp.group(2)[al]), B[a, al]))
    return res


def check_pivot_degeneracy(fr: MovingFrame,
                           points: Sequence[Mapping[str, float]]) -> None:
    """Raise when a chosen pivot direction falls into the tangent space at a
    sample point (Gram-Schmidt normalizer below 1e-8)."""
    if not points or not fr.pivot_norm_sq:
        return
    fn = ex.compile_exprs(list(fr.pivot_norm_sq))
    for p in points:
        for k, v in enumerate(fn(p)):
            if v < 1e-16:
                raise FrameError(
                    f"normal frame degenerate: pivot direction {fr.chosen_dirs[k] + 1} "
                    f"falls into the tangent space (norm {math.sqrt(max(v, 0.0)):.3e}) "
                    f"at {p}")


def jacobian_min_singular_values(fr: MovingFrame,
                                 points: Sequence[Mapping[str, float]]) -> list[float]:
    """Smallest singular value of B at each point (embedding rank check)."""
    run = ex.compile_exprs(list(fr.B.ravel()))
    out = []
    for p in points:
        mat = np.array(run(p), dtype=float).reshape(fr.B.shape)
        out.append(float(np.linalg.svd(mat, compute_uv=False)[-1]))
    return out
