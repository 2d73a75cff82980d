"""Geometry induced along the prolonged submanifold: restricted ambient data,
induced nonlinear connection, mixed tensors, coupling, tangent and normal
connections, and the relative covariant derivative over mixed d-tensors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import CoordSpace, Expr, ZERO, ONE
from .frame import MovingFrame, ProlongedEmbedding
from .osc2 import (AMBIENT, NORMAL, TANGENT, AdaptedFrame, AmbientGeometry,
                   DTensor, GeometryError, Slot, covariant_derivative,
                   dual_to_primal, earray, emap)


@dataclass(frozen=True)
class RestrictedAmbient:
    """Ambient fields composed with the prolonged embedding."""

    n: int
    space: CoordSpace          # submanifold chart
    g: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray
    L: np.ndarray              # (3, n, n, n)
    C1: np.ndarray
    C2: np.ndarray

    def block(self, family: int) -> np.ndarray:
        return (self.L, self.C1, self.C2)[family]


def restrict_ambient(geom: AmbientGeometry, emb: ProlongedEmbedding) -> RestrictedAmbient:
    """Substitute the prolongation into every ambient coefficient.

    Substitution is symbolic so that later chart derivatives of the
    restricted coefficients stay exact.
    """
    if geom.n != emb.n:
        raise GeometryError(f"embedding target dimension {emb.n} != ambient {geom.n}")
    sub = emb.substitution(geom.space)
    r = lambda e: ex.substitute(e, sub)  # noqa: E731
    return RestrictedAmbient(
        n=geom.n,
        space=emb.space,
        g=emap(r, geom.g),
        M1=emap(r, geom.nl.M1),
        M2=emap(r, geom.nl.M2),
        N1=emap(r, geom.nl.N1),
        N2=emap(r, geom.nl.N2),
        L=emap(r, geom.conn.L),
        C1=emap(r, geom.conn.C1),
        C2=emap(r, geom.conn.C2),
    )


# ---------------------------------------------------------------------------
# induced nonlinear connection and mixed tensors

def _lift_sources(fr: MovingFrame, amb: RestrictedAmbient):
    """The two recurring contractions of the prolongation data.

    psi[a,be] = B0 + M1 B   (drives both the induced connection and K1)
    phi[a,be] = (1/2) dBsec/du v1 v1 + Bsec v2 + M1 B0 + M2 B
    """
    m, n = fr.m, fr.n
    sp = fr.emb.space
    psi = earray(n, m)
    phi = earray(n, m)
    for a in range(n):
        for be in range(m):
            acc = fr.B0[a, be]
            for b in range(n):
                acc = ex.add(acc, ex.mul(amb.M1[a, b], fr.B[b, be]))
            psi[a, be] = acc
    for a in range(n):
        for be in range(m):
            acc = ZERO
            for de in range(m):
                for ga in range(m):
                    term = ex.mul(fr.Bthird[a, de, ga, be],
                                  ex.mul(sp.lift1(de + 1), sp.lift1(ga + 1)))
                    acc = ex.add(acc, ex.mul(ex.num(0.5), term))
                acc = ex.add(acc, ex.mul(fr.Bsec[a, de, be], sp.lift2(de + 1)))
            for b in range(n):
                acc = ex.add(acc, ex.mul(amb.M1[a, b], fr.B0[b, be]))
                acc = ex.add(acc, ex.mul(amb.M2[a, b], fr.B[b, be]))
            phi[a, be] = acc
    return psi, phi


@dataclass(frozen=True)
class InducedNL:
    M1: np.ndarray
    M2: np.ndarray
    N1: np.ndarray
    N2: np.ndarray

    def frame(self, space: CoordSpace) -> AdaptedFrame:
        return AdaptedFrame(space, self.N1, self.N2)


def induced_nl(fr: MovingFrame, amb: RestrictedAmbient) -> InducedNL:
    """Dual coefficients of the induced connection: the tangent projection of
    the lifted connection data through the dual frame."""
    m, n = fr.m, fr.n
    psi, phi = _lift_sources(fr, amb)
    M1c = earray(m, m)
    M2c = earray(m, m)
    for al in range(m):
        for be in range(m):
            acc1, acc2 = ZERO, ZERO
            for a in range(n):
                acc1 = ex.add(acc1, ex.mul(fr.Bd[al, a], psi[a, be]))
                acc2 = ex.add(acc2, ex.mul(fr.Bd[al, a], phi[a, be]))
            M1c[al, be] = acc1
            M2c[al, be] = acc2
    N1c, N2c = dual_to_primal(M1c, M2c)
    return InducedNL(M1c, M2c, N1c, N2c)


@dataclass(frozen=True)
class MixedK:
    K1: np.ndarray             # (n-m, m)
    K2: np.ndarray


def mixed_K(fr: MovingFrame, amb: RestrictedAmbient, inl: InducedNL) -> MixedK:
    """Normal projections closing the cobasis decomposition.

    K2 carries the -K1 M1c correction; without it the second-lift line of
    the decomposition does not close.
    """
    m, n, k = fr.m, fr.n, fr.n - fr.m
    psi, phi = _lift_sources(fr, amb)
    K1 = earray(k, m)
    K2 = earray(k, m)
    for al in range(k):
        for be in range(m):
            acc1, acc2 = ZERO, ZERO
            for a in range(n):
                acc1 = ex.add(acc1, ex.mul(fr.Bnd[al, a], psi[a, be]))
                acc2 = ex.add(acc2, ex.mul(fr.Bnd[al, a], phi[a, be]))
            K1[al, be] = acc1
            K2[al, be] = acc2
    for al in range(k):
        for be in range(m):
            acc = K2[al, be]
            for ga in range(m):
                acc = ex.sub(acc, ex.mul(K1[al, ga], inl.M1[ga, be]))
            K2[al, be] = acc
    return MixedK(K1, K2)


# ---------------------------------------------------------------------------
# cobasis pullback components and decomposition residuals

def _cobasis_pullback(fr: MovingFrame, amb: RestrictedAmbient):
    """Components of the restricted cobasis over (du, dv1, dv2).

    Returns three (n, 3, m) arrays: the pullbacks of dx, of the first-lift
    form dy1 + M1 dx, and of the second-lift form dy2 + M1 dy1 + M2 dx.
    """
    emb = fr.emb
    sp = emb.space
    m, n = fr.m, fr.n
    jac = {}
    for level, comps in ((0, emb.x), (1, emb.y1), (2, emb.y2)):
        arr = earray(n, 3, m)
        for a in range(n):
            for grp in range(3):
                for be in range(m):
                    arr[a, grp, be] = ex.differentiate(comps[a], sp.group(grp)[be])
        jac[level] = arr
    dx = jac[0]
    dy1 = earray(n, 3, m)
    dy2 = earray(n, 3, m)
    for a in range(n):
        for grp in range(3):
            for be in range(m):
                acc1 = jac[1][a, grp, be]
                acc2 = jac[2][a, grp, be]
                for b in range(n):
                    acc1 = ex.add(acc1, ex.mul(amb.M1[a, b], jac[0][b, grp, be]))
                    acc2 = ex.add(acc2, ex.mul(amb.M1[a, b], jac[1][b, grp, be]))
                    acc2 = ex.add(acc2, ex.mul(amb.M2[a, b], jac[0][b, grp, be]))
                dy1[a, grp, be] = acc1
                dy2[a, grp, be] = acc2
    return dx, dy1, dy2


def cobasis_decomposition_residuals(fr: MovingFrame, amb: RestrictedAmbient,
                                    inl: InducedNL, K: MixedK) -> list[Expr]:
    """Moving-frame representation of the restricted cobasis.

    Both sides of the three-line decomposition are expanded over
    (du, dv1, dv2) and subtracted componentwise.
    """
    m, n, k = fr.m, fr.n, fr.n - fr.m
    dx, dy1, dy2 = _cobasis_pullback(fr, amb)
    res: list[Expr] = []
    for a in range(n):
        for be in range(m):
            # position line: dx = B du
            res.append(ex.sub(dx[a, 0, be], fr.B[a, be]))
            res.append(dx[a, 1, be])
            res.append(dx[a, 2, be])
            # first-lift line: B dv1-part, (B M1c + Bn K1) du-part
            rhs_du = ZERO
            for al in range(m):
                rhs_du = ex.add(rhs_du, ex.mul(fr.B[a, al], inl.M1[al, be]))
            for al in range(k):
                rhs_du = ex.add(rhs_du, ex.mul(fr.Bn[a, al], K.K1[al, be]))
            res.append(ex.sub(dy1[a, 0, be], rhs_du))
            res.append(ex.sub(dy1[a, 1, be], fr.B[a, be]))
            res.append(dy1[a, 2, be])
            # second-lift line
            rhs_du = ZERO
            for al in range(m):
                rhs_du = ex.add(rhs_du, ex.mul(fr.B[a, al], inl.M2[al, be]))
            for al in range(k):
                acc = K.K2[al, be]
                for ga in range(m):
                    acc = ex.add(acc, ex.mul(K.K1[al, ga], inl.M1[ga, be]))
                rhs_du = ex.add(rhs_du, ex.mul(fr.Bn[a, al], acc))
            rhs_dv1 = ZERO
            for al in range(m):
                rhs_dv1 = ex.add(rhs_dv1, ex.mul(fr.B[a, al], inl.M1[al, be]))
            for al in range(k):
                rhs_dv1 = ex.add(rhs_dv1, ex.mul(fr.Bn[a, al], K.K1[al, be]))
            res.append(ex.sub(dy2[a, 0, be], rhs_du))
            res.append(ex.sub(dy2[a, 1, be], rhs_dv1))
            res.append(ex.sub(dy2[a, 2, be], fr.B[a, be]))
    return res


def induced_nl_definition_residuals(fr: MovingFrame, amb: RestrictedAmbient,
                                    inl: InducedNL) -> list[Expr]:
    """Projection characterization of the induced connection: the induced
    lift forms must equal the dual-frame contraction of the restricted ones."""
    m, n = fr.m, fr.n
    _, dy1, dy2 = _cobasis_pullback(fr, amb)
    res: list[Expr] = []
    for al in range(m):
        for be in range(m):
            for grp, target1 in ((0, inl.M1[al, be]),
                                 (1, ONE if al == be else ZERO),
                                 (2, ZERO)):
                acc = ZERO
                for a in range(n):
                    acc = ex.add(acc, ex.mul(fr.Bd[al, a], dy1[a, grp, be]))
                res.append(ex.sub(acc, target1))
            for grp, target2 in ((0, inl.M2[al, be]),
                                 (1, inl.M1[al, be]),
                                 (2, ONE if al == be else ZERO)):
                acc = ZERO
                for a in range(n):
                    acc = ex.add(acc, ex.mul(fr.Bd[al, a], dy2[a, grp, be]))
                res.append(ex.sub(acc, target2))
    return res


# ---------------------------------------------------------------------------
# coupling, tangent and normal connections

@dataclass(frozen=True)
class InducedConnections:
    """Coefficient blocks over the submanifold chart, indexed [i][...][delta]."""

    Lc: np.ndarray             # coupling, (3, n, n, m)
    Cc1: np.ndarray
    Cc2: np.ndarray
    Lt: np.ndarray             # tangent, (3, m, m, m)
    Ct1: np.ndarray
    Ct2: np.ndarray
    Ln: np.ndarray             # normal, (3, n-m, n-m, m)
    Cn1: np.ndarray
    Cn2: np.ndarray

    def coupling_block(self, family: int) -> np.ndarray:
        return (self.Lc, self.Cc1, self.Cc2)[family]

    def tangent_block(self, family: int) -> np.ndarray:
        return (self.Lt, self.Ct1, self.Ct2)[family]

    def normal_block(self, family: int) -> np.ndarray:
        return (self.Ln, self.Cn1, self.Cn2)[family]


def coupling(amb: RestrictedAmbient, fr: MovingFrame, K: MixedK):
    """Ambient connection re-expressed against the induced cobasis."""
    m, n, k = fr.m, fr.n, fr.n - fr.m
    Lc = earray(3, n, n, m)
    Cc1 = earray(3, n, n, m)
    Cc2 = earray(3, n, n, m)
    for i in range(3):
        for a in range(n):
            for b in range(n):
                for de in range(m):
                    accL, acc1, acc2 = ZERO, ZERO, ZERO
                    for d in range(n):
                        accL = ex.add(accL, ex.mul(amb.L[i, a, b, d], fr.B[d, de]))
                        acc1 = ex.add(acc1, ex.mul(amb.C1[i, a, b, d], fr.B[d, de]))
                        acc2 = ex.add(acc2, ex.mul(amb.C2[i, a, b, d], fr.B[d, de]))
                        for db in range(k):
                            accL = ex.add(accL, ex.mul(amb.C1[i, a, b, d],
                                                       ex.mul(fr.Bn[d, db], K.K1[db, de])))
                            accL = ex.add(accL, ex.mul(amb.C2[i, a, b, d],
                                                       ex.mul(fr.Bn[d, db], K.K2[db, de])))
                            acc1 = ex.add(acc1, ex.mul(amb.C2[i, a, b, d],
                                                       ex.mul(fr.Bn[d, db], K.K1[db, de])))
                    Lc[i, a, b, de] = accL
                    Cc1[i, a, b, de] = acc1
                    Cc2[i, a, b, de] = acc2
    return Lc, Cc1, Cc2


def tangent_connection(fr: MovingFrame, Lc, Cc1, Cc2):
    m, n = fr.m, fr.n
    Lt = earray(3, m, m, m)
    Ct1 = earray(3, m, m, m)
    Ct2 = earray(3, m, m, m)
    for i in range(3):
        for al in range(m):
            for be in range(m):
                for de in range(m):
                    accL, acc1, acc2 = ZERO, ZERO, ZERO
                    for d in range(n):
                        inner = fr.Bsec[d, be, de]
                        for f in range(n):
                            inner = ex.add(inner, ex.mul(fr.B[f, be], Lc[i, d, f, de]))
                        accL = ex.add(accL, ex.mul(fr.Bd[al, d], inner))
                        for f in range(n):
                            acc1 = ex.add(acc1, ex.mul(fr.Bd[al, d],
                                                       ex.mul(fr.B[f, be], Cc1[i, d, f, de])))
                            acc2 = ex.add(acc2, ex.mul(fr.Bd[al, d],
                                                       ex.mul(fr.B[f, be], Cc2[i, d, f, de])))
                    Lt[i, al, be, de] = accL
                    Ct1[i, al, be, de] = acc1
                    Ct2[i, al, be, de] = acc2
    return Lt, Ct1, Ct2


def normal_connection(fr: MovingFrame, inl: InducedNL, Lc, Cc1, Cc2):
    """Normal projection; the frame derivative of Bn uses the induced
    adapted derivations, not plain partials."""
    m, n, k = fr.m, fr.n, fr.n - fr.m
    ops = inl.frame(fr.emb.space)
    Ln = earray(3, k, k, m)
    Cn1 = earray(3, k, k, m)
    Cn2 = earray(3, k, k, m)
    dBn = {family: earray(n, k, m) for family in (0, 1, 2)}
    for family in (0, 1, 2):
        for d in range(n):
            for bb in range(k):
                for de in range(m):
                    dBn[family][d, bb, de] = ops.apply(family, de, fr.Bn[d, bb])
    for i in range(3):
        for al in range(k):
            for bb in range(k):
                for de in range(m):
                    accs = []
                    for family, block in ((0, Lc), (1, Cc1), (2, Cc2)):
                        acc = ZERO
                        for d in range(n):
                            inner = dBn[family][d, bb, de]
                            for f in range(n):
                                inner = ex.add(inner, ex.mul(fr.Bn[f, bb], block[i, d, f, de]))
                            acc = ex.add(acc, ex.mul(fr.Bnd[al, d], inner))
                        accs.append(acc)
                    Ln[i, al, bb, de] = accs[0]
                    Cn1[i, al, bb, de] = accs[1]
                    Cn2[i, al, bb, de] = accs[2]
    return Ln, Cn1, Cn2


# ---------------------------------------------------------------------------
# assembled bundle and the relative covariant derivative

@dataclass(frozen=True)
class SubGeometry:
    ambient: AmbientGeometry
    emb: ProlongedEmbedding
    fr: MovingFrame
    amb: RestrictedAmbient
    inl: InducedNL
    K: MixedK
    conn: InducedConnections

    @property
    def space(self) -> CoordSpace:
        return self.emb.space

    @property
    def m(self) -> int:
        return self.emb.m

    def frame_ops(self) -> AdaptedFrame:
        return self.inl.frame(self.space)

    def nabla(self, T: DTensor, i: int, family: int) -> DTensor:
        """One relative covariant derivative; appends a tangent-lower slot."""
        coeffs = {
            AMBIENT: self.conn.coupling_block(family)[i],
            TANGENT: self.conn.tangent_block(family)[i],
            NORMAL: self.conn.normal_block(family)[i],
        }
        return covariant_derivative(T, self.frame_ops(), family, coeffs, TANGENT)

    def relative_nabla(self, T: DTensor, i: int) -> tuple[DTensor, DTensor, DTensor]:
        """The three derivative components for connection set i."""
        return (self.nabla(T, i, 0), self.nabla(T, i, 1), self.nabla(T, i, 2))

    def tangent_vector(self, comps) -> DTensor:
        return DTensor(self.space, (Slot(TANGENT, True),), np.array(comps, dtype=object))

    def ambient_vector(self, comps) -> DTensor:
        return DTensor(self.space, (Slot(AMBIENT, True),), np.array(comps, dtype=object))

    def normal_vector(self, comps) -> DTensor:
        return DTensor(self.space, (Slot(NORMAL, True),), np.array(comps, dtype=object))


def build_subgeometry(ambient: AmbientGeometry, emb: ProlongedEmbedding,
                      fr: MovingFrame) -> SubGeometry:
    amb = restrict_ambient(ambient, emb)
    inl = induced_nl(fr, amb)
    K = mixed_K(fr, amb, inl)
    Lc, Cc1, Cc2 = coupling(amb, fr, K)
    Lt, Ct1, Ct2 = tangent_connection(fr, Lc, Cc1, Cc2)
    Ln, Cn1, Cn2 = normal_connection(fr, inl, Lc, Cc1, Cc2)
    conn = InducedConnections(Lc, Cc1, Cc2, Lt, Ct1, Ct2, Ln, Cn1, Cn2)
    return SubGeometry(ambient, emb, fr, amb, inl, K, conn)


# ---------------------------------------------------------------------------
# operator-compatibility residuals through the frame

def tangent_compat_residuals(geo: SubGeometry, X_comps) -> list[Expr]:
    """For X^a = B^a_ga X^ga the tangent derivative must project the coupling
    derivative back through the dual frame."""
    m, n = geo.m, geo.fr.n
    Xt = geo.tangent_vector(X_comps)
    amb_comps = earray(n)
    for a in range(n):
        acc = ZERO
        for ga in range(m):
            acc = ex.add(acc, ex.mul(geo.fr.B[a, ga], X_comps[ga]))
        amb_comps[a] = acc
    Xa = geo.ambient_vector(amb_comps)
    res: list[Expr] = []
    for i in range(3):
        for family in range(3):
            lhs = geo.nabla(Xt, i, family).comps
            rhs_src = geo.nabla(Xa, i, family).comps
            for al in range(m):
                for de in range(m):
                    acc = ZERO
                    for b in range(n):
                        acc = ex.add(acc, ex.mul(geo.fr.Bd[al, b], rhs_src[b, de]))
                    res.append(ex.sub(lhs[al, de], acc))
    return res


def normal_compat_residuals(geo: SubGeometry, X_comps) -> list[Expr]:
    """Same compatibility through the normal frame for X^a = Bn^a_ga X^ga."""
    m, n, k = geo.m, geo.fr.n, geo.fr.n - geo.fr.m
    Xn = geo.normal_vector(X_comps)
    amb_comps = earray(n)
    for a in range(n):
        acc = ZERO
        for ga in range(k):
            acc = ex.add(acc, ex.mul(geo.fr.Bn[a, ga], X_comps[ga]))
        amb_comps[a] = acc
    Xa = geo.ambient_vector(amb_comps)
    res: list[Expr] = []
    for i in range(3):
        for family in range(3):
            lhs = geo.nabla(Xn, i, family).comps
            rhs_src = geo.nabla(Xa, i, family).comps
            for al in range(k):
                for de in range(m):
                    acc = ZERO
                    for b in range(n):
                        acc = ex.add(acc, ex.mul(geo.fr.Bnd[al, b], rhs_src[b, de]))
                    res.append(ex.sub(lhs[al, de], acc))
    return res
