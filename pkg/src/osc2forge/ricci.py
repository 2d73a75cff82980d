"""Liouville fields, deflection tensors, commutators of relative covariant
derivatives, and operational extraction of the curvature/torsion arrays.

The commutation rules all share one shape: for derivative families A, B the
commutator of the two covariant derivatives on a tangent d-vector equals a
curvature contraction minus torsion-weighted first derivatives. The
torsion-side arrays come from the nonholonomy of the induced adapted frame
plus connection antisymmetrizations; the curvature arrays are then solved by
running the commutator over the coordinate basis vectors, for which every
derivative term is explicit. Plugging random polynomial fields back in
validates the whole extraction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .expr import Expr, ZERO, ONE
from .induced import SubGeometry
from .osc2 import DTensor, Slot, TANGENT, earray
from .sampling import SplitMix64

# identity families: (first derivative family, second derivative family)
FAMILY_PAIRS: dict[str, tuple[int, int]] = {
    "hh": (0, 0),
    "hv1": (0, 1),
    "hv2": (0, 2),
    "v1v2": (1, 2),
    "v1v1": (1, 1),
    "v2v2": (2, 2),
}


# ---------------------------------------------------------------------------
# Liouville d-vectors and deflections

@dataclass(frozen=True)
class LiouvilleFields:
    z1: np.ndarray             # (m,) the first-lift coordinate field
    z2: np.ndarray             # (m,) second lift corrected by the connection


def liouville(geo: SubGeometry) -> LiouvilleFields:
    m = geo.m
    sp = geo.space
    z1 = np.array([sp.lift1(al + 1) for al in range(m)], dtype=object)
    z2 = earray(m)
    for al in range(m):
        acc = sp.lift2(al + 1)
        for be in range(m):
            acc = ex.add(acc, ex.mul(ex.num(0.5), ex.mul(geo.inl.M1[al, be], sp.lift1(be + 1))))
        z2[al] = acc
    return LiouvilleFields(z1, z2)


@dataclass(frozen=True)
class DeflectionSet:
    """Covariant derivatives of the Liouville fields.

    ``arrays[fam][j][i]`` is the (m, m) block for derivative family fam,
    Liouville field j (0 or 1), connection set i.
    """

    arrays: tuple[np.ndarray, np.ndarray, np.ndarray]

    def block(self, fam: int, j: int, i: int) -> np.ndarray:
        return self.arrays[fam][j][i]


def deflections_direct(geo: SubGeometry, z: LiouvilleFields) -> DeflectionSet:
    m = geo.m
    out = [earray(2, 3, m, m) for _ in range(3)]
    for j, field in enumerate((z.z1, z.z2)):
        vec = geo.tangent_vector(field)
        for i in range(3):
            for fam in range(3):
                comps = geo.nabla(vec, i, fam).comps
                for al in range(m):
                    for be in range(m):
                        out[fam][j, i, al, be] = comps[al, be]
    return DeflectionSet(tuple(out))


def deflections_closed_v1(geo: SubGeometry, z: LiouvilleFields):
    """Closed forms of the first-field deflections: -N1 + z L, delta + z C1,
    z C2. Returned in the same (3, m, m) layout per family."""
    m = geo.m
    h = earray(3, m, m)
    v1 = earray(3, m, m)
    v2 = earray(3, m, m)
    for i in range(3):
        for al in range(m):
            for be in range(m):
                acc_h = ex.neg(geo.inl.N1[al, be])
                acc_1 = ONE if al == be else ZERO
                acc_2 = ZERO
                for ga in range(m):
                    acc_h = ex.add(acc_h, ex.mul(z.z1[ga], geo.conn.Lt[i, al, ga, be]))
                    acc_1 = ex.add(acc_1, ex.mul(z.z1[ga], geo.conn.Ct1[i, al, ga, be]))
                    acc_2 = ex.add(acc_2, ex.mul(z.z1[ga], geo.conn.Ct2[i, al, ga, be]))
                h[i, al, be] = acc_h
                v1[i, al, be] = acc_1
                v2[i, al, be] = acc_2
    return h, v1, v2


def deflections_closed_v2_printed(geo: SubGeometry, z: LiouvilleFields):
    """Second-field closed forms as printed, with the two undefined frame
    coefficients read as lift derivatives of the induced connection. Reported
    only; the definitional route is authoritative."""
    m = geo.m
    ops = geo.frame_ops()
    sp = geo.space
    h = earray(3, m, m)
    v1 = earray(3, m, m)
    v2 = earray(3, m, m)
    for i in range(3):
        for al in range(m):
            for be in range(m):
                acc_h = ex.mul(ex.num(0.5), ex.add(geo.inl.N2[al, be], geo.inl.M2[al, be]))
                acc_1 = ex.mul(ex.num(-0.5), ex.sub(ex.mul(ex.num(2.0), geo.inl.N2[al, be]),
                                                    geo.inl.N1[al, be]))
                acc_2 = ONE if al == be else ZERO
                for ga in range(m):
                    half_z1 = ex.mul(ex.num(0.5), z.z1[ga])
                    acc_h = ex.add(acc_h, ex.mul(half_z1, ops.apply(0, be, geo.inl.N1[al, ga])))
                    acc_1 = ex.add(acc_1, ex.mul(half_z1, ops.apply(1, be, geo.inl.M1[al, ga])))
                    acc_2 = ex.add(acc_2, ex.mul(half_z1,
                                                 ex.differentiate(geo.inl.M1[al, ga],
                                                                  sp.group(2)[be])))
                    acc_h = ex.add(acc_h, ex.mul(z.z2[ga], geo.conn.Lt[i, al, ga, be]))
                    acc_1 = ex.add(acc_1, ex.mul(z.z2[ga], geo.conn.Ct1[i, al, ga, be]))
                    acc_2 = ex.add(acc_2, ex.mul(z.z2[ga], geo.conn.Ct2[i, al, ga, be]))
                h[i, al, be] = acc_h
                v1[i, al, be] = acc_1
                v2[i, al, be] = acc_2
    return h, v1, v2


# ---------------------------------------------------------------------------
# frame nonholonomy

def nonholonomy(geo: SubGeometry) -> dict[tuple[int, int], tuple[np.ndarray, ...]]:
    """Adapted-frame components of every frame-field commutator.

    For each family pair (A, B) the commutator [E_A beta, E_B gamma] is
    applied to the coordinate functions, giving natural components, which the
    dual cobasis converts into adapted ones. Result arrays are indexed
    [sigma][beta][gamma].
    """
    m = geo.m
    sp = geo.space
    ops = geo.frame_ops()
    out: dict[tuple[int, int], tuple[np.ndarray, ...]] = {}
    for pair in ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)):
        A, B = pair
        W0 = earray(m, m, m)
        W1 = earray(m, m, m)
        W2 = earray(m, m, m)
        for be in range(m):
            for ga in range(m):
                c_nat = []
                for grp in range(3):
                    row = []
                    for sg in range(m):
                        coord = ex.var(sp.group(grp)[sg])
                        first = ops.apply(A, be, ops.apply(B, ga, coord))
                        second = ops.apply(B, ga, ops.apply(A, be, coord))
                        row.append(ex.sub(first, second))
                    c_nat.append(row)
                w0, w1, w2 = ops.natural_to_adapted(c_nat[0], c_nat[1], c_nat[2],
                                                    geo.inl.M1, geo.inl.M2)
                for sg in range(m):
                    W0[sg, be, ga] = w0[sg]
                    W1[sg, be, ga] = w1[sg]
                    W2[sg, be, ga] = w2[sg]
        out[pair] = (W0, W1, W2)
    return out


# ---------------------------------------------------------------------------
# commutators and the curvature pack

def commutator_lhs(geo: SubGeometry, X: DTensor, i: int, famA: int, famB: int) -> np.ndarray:
    """Second covariant derivatives in both orders, subtracted; [al][be][ga]."""
    m = geo.m
    dA = geo.nabla(X, i, famA)
    dAB = geo.nabla(dA, i, famB).comps
    dB = geo.nabla(X, i, famB)
    dBA = geo.nabla(dB, i, famA).comps
    out = earray(*dAB.shape)
    for idx in np.ndindex(dAB.shape[:-2]):
        for be in range(m):
            for ga in range(m):
                out[idx + (be, ga)] = ex.sub(dAB[idx + (be, ga)], dBA[idx + (ga, be)])
    return out


@dataclass(frozen=True)
class IdentityFamily:
    key: str
    famA: int
    famB: int
    curv: np.ndarray           # (3, m, m, m, m) [i][delta][alpha][beta][gamma]
    coef: np.ndarray           # (3, 3, m, m, m) [i][fam][sigma][beta][gamma]
    nonh: tuple[np.ndarray, np.ndarray, np.ndarray]   # raw frame commutator parts


@dataclass(frozen=True)
class CurvaturePack:
    m: int
    families: dict[str, IdentityFamily]

    def curvature(self, key: str, i: int) -> np.ndarray:
        return self.families[key].curv[i]

    def torsion(self, key: str, i: int, fam: int) -> np.ndarray:
        return self.families[key].coef[i, fam]


def extract_curvatures(geo: SubGeometry) -> CurvaturePack:
    """Operational extraction of all curvature and torsion-side arrays.

    Torsion side: nonholonomy components of the frame-pair commutator plus
    the connection antisymmetrization attached to each derivative family.
    Curvature side: the commutator run over the coordinate basis d-vectors,
    for which the first-derivative terms are the bare connection blocks.
    """
    m = geo.m
    nonh = nonholonomy(geo)
    blocks = [geo.conn.tangent_block(f) for f in range(3)]
    families: dict[str, IdentityFamily] = {}
    for key, (A, B) in FAMILY_PAIRS.items():
        W = nonh[(A, B)]
        coef = earray(3, 3, m, m, m)
        curv = earray(3, m, m, m, m)
        for i in range(3):
            CA = blocks[A][i]
            CB = blocks[B][i]
            for sg in range(m):
                for be in range(m):
                    for ga in range(m):
                        for fam in range(3):
                            coef[i, fam, sg, be, ga] = W[fam][sg, be, ga]
                        coef[i, A, sg, be, ga] = ex.add(coef[i, A, sg, be, ga],
                                                        CB[sg, be, ga])
                        coef[i, B, sg, be, ga] = ex.sub(coef[i, B, sg, be, ga],
                                                        CA[sg, ga, be])
            for de in range(m):
                basis = earray(m)
                basis[de] = ONE
                e_vec = geo.tangent_vector(basis)
                lhs = commutator_lhs(geo, e_vec, i, A, B)
                for al in range(m):
                    for be in range(m):
                        for ga in range(m):
                            acc = lhs[al, be, ga]
                            for fam in range(3):
                                for sg in range(m):
                                    acc = ex.add(acc, ex.mul(coef[i, fam, sg, be, ga],
                                                             blocks[fam][i][al, de, sg]))
                            curv[i, de, al, be, ga] = acc
        families[key] = IdentityFamily(key, A, B, curv, coef, W)
    return CurvaturePack(m, families)


def identity_residuals(geo: SubGeometry, pack: CurvaturePack, key: str, i: int,
                       X_comps: np.ndarray) -> list[Expr]:
    """Commutation rule for one family and one tangent field, as residuals."""
    m = geo.m
    fam_data = pack.families[key]
    X = geo.tangent_vector(X_comps)
    lhs = commutator_lhs(geo, X, i, fam_data.famA, fam_data.famB)
    DX = [geo.nabla(X, i, fam).comps for fam in range(3)]
    res = []
    for al in range(m):
        for be in range(m):
            for ga in range(m):
                rhs = ZERO
                for de in range(m):
                    rhs = ex.add(rhs, ex.mul(X_comps[de], fam_data.curv[i, de, al, be, ga]))
                for fam in range(3):
                    for sg in range(m):
                        rhs = ex.sub(rhs, ex.mul(fam_data.coef[i, fam, sg, be, ga],
                                                 DX[fam][al, sg]))
                res.append(ex.sub(lhs[al, be, ga], rhs))
    return res


def deflection_identity_residuals(geo: SubGeometry, pack: CurvaturePack,
                                  defl: DeflectionSet, z: LiouvilleFields,
                                  key: str, i: int, j: int) -> list[Expr]:
    """The commutation rule instantiated at a Liouville field: derivative
    terms become deflection blocks on both sides."""
    m = geo.m
    fam_data = pack.families[key]
    A, B = fam_data.famA, fam_data.famB
    zfield = (z.z1, z.z2)[j]
    TA = DTensor(geo.space, (Slot(TANGENT, True), Slot(TANGENT, False)),
                 defl.block(A, j, i))
    TB = DTensor(geo.space, (Slot(TANGENT, True), Slot(TANGENT, False)),
                 defl.block(B, j, i))
    dAB = geo.nabla(TA, i, B).comps
    dBA = geo.nabla(TB, i, A).comps
    res = []
    for al in range(m):
        for be in range(m):
            for ga in range(m):
                lhs = ex.sub(dAB[al, be, ga], dBA[al, ga, be])
                rhs = ZERO
                for de in range(m):
                    rhs = ex.add(rhs, ex.mul(zfield[de], fam_data.curv[i, de, al, be, ga]))
                for fam in range(3):
                    for sg in range(m):
                        rhs = ex.sub(rhs, ex.mul(fam_data.coef[i, fam, sg, be, ga],
                                                 defl.block(fam, j, i)[al, sg]))
                res.append(ex.sub(lhs, rhs))
    return res


def curvature_antisymmetry_residuals(pack: CurvaturePack) -> list[Expr]:
    """Same-family curvature arrays must be antisymmetric in the last pair."""
    res = []
    for key in ("hh", "v1v1", "v2v2"):
        curv = pack.families[key].curv
        for idx in np.ndindex(curv.shape):
            i, de, al, be, ga = idx
            if be < ga:
                res.append(ex.add(curv[i, de, al, be, ga], curv[i, de, al, ga, be]))
            elif be == ga:
                res.append(curv[i, de, al, be, ga])
    return res


def second_vertical_flatness_residuals(pack: CurvaturePack) -> list[Expr]:
    """The second-lift frame fields commute, so every nonholonomy part of the
    v2v2 commutator vanishes identically."""
    res = []
    for W in pack.families["v2v2"].nonh:
        res.extend(W.ravel())
    return res


def tensoriality_residuals(geo: SubGeometry, pack: CurvaturePack, key: str, i: int,
                           f: Expr, X_comps: np.ndarray) -> list[Expr]:
    """The torsion-corrected commutator defect must be pointwise linear over
    functions: defect(f X) = f defect(X)."""
    m = geo.m

    def defect(comps: np.ndarray) -> np.ndarray:
        fam_data = pack.families[key]
        X = geo.tangent_vector(comps)
        lhs = commutator_lhs(geo, X, i, fam_data.famA, fam_data.famB)
        DX = [geo.nabla(X, i, fam).comps for fam in range(3)]
        out = earray(m, m, m)
        for al in range(m):
            for be in range(m):
                for ga in range(m):
                    acc = lhs[al, be, ga]
                    for fam in range(3):
                        for sg in range(m):
                            acc = ex.add(acc, ex.mul(fam_data.coef[i, fam, sg, be, ga],
                                                     DX[fam][al, sg]))
                    out[al, be, ga] = acc
        return out

    fX = np.array([ex.mul(f, c) for c in X_comps], dtype=object)
    d_fx = defect(fX)
    d_x = defect(X_comps)
    res = []
    for idx in np.ndindex(m, m, m):
        res.append(ex.sub(d_fx[idx], ex.mul(f, d_x[idx])))
    return res


# ---------------------------------------------------------------------------
# particular deflection form and its consequences

def special_form_residuals(geo: SubGeometry, defl: DeflectionSet) -> list[Expr]:
    """Deviation from the adapted particular form: first field (0, delta, 0),
    second field (0, 0, delta)."""
    m = geo.m
    res = []
    targets = {
        (0, 0): lambda al, be: ZERO,
        (1, 0): lambda al, be: ONE if al == be else ZERO,
        (2, 0): lambda al, be: ZERO,
        (0, 1): lambda al, be: ZERO,
        (1, 1): lambda al, be: ZERO,
        (2, 1): lambda al, be: ONE if al == be else ZERO,
    }
    for (fam, j), target in targets.items():
        for i in range(3):
            block = defl.block(fam, j, i)
            for al in range(m):
                for be in range(m):
                    res.append(ex.sub(block[al, be], target(al, be)))
    return res


def special_consequence_residuals(geo: SubGeometry, pack: CurvaturePack,
                                  z: LiouvilleFields) -> list[tuple[str, Expr]]:
    """Contractions of the Liouville fields with the curvature arrays that
    must reduce to torsion-side arrays when the particular form holds."""
    m = geo.m
    zf = (z.z1, z.z2)

    def contract(key: str, i: int, j: int) -> np.ndarray:
        curv = pack.families[key].curv
        out = earray(m, m, m)
        for al in range(m):
            for be in range(m):
                for ga in range(m):
                    acc = ZERO
                    for de in range(m):
                        acc = ex.add(acc, ex.mul(zf[j][de], curv[i, de, al, be, ga]))
                    out[al, be, ga] = acc
        return out

    rows: list[tuple[str, Expr]] = []

    def emit(label: str, arr: np.ndarray, target: np.ndarray | None):
        for idx in np.ndindex(m, m, m):
            rhs = target[idx] if target is not None else ZERO
            rows.append((label, ex.sub(arr[idx], rhs)))

    for i in range(3):
        hh = pack.families["hh"]
        emit(f"z1.R0[{i}]=R01", contract("hh", i, 0), hh.coef[i, 1])
        emit(f"z2.R0[{i}]=R02", contract("hh", i, 1), hh.coef[i, 2])
        hv1 = pack.families["hv1"]
        emit(f"z1.P1[{i}]=P11", contract("hv1", i, 0), hv1.coef[i, 1])
        emit(f"z2.P1[{i}]=P12", contract("hv1", i, 1), hv1.coef[i, 2])
        hv2 = pack.families["hv2"]
        emit(f"z1.P2[{i}]=P21", contract("hv2", i, 0), hv2.coef[i, 1])
        emit(f"z2.P2[{i}]=P22", contract("hv2", i, 1), hv2.coef[i, 2])
        v1v2 = pack.families["v1v2"]
        emit(f"z1.Q2[{i}]=C2", contract("v1v2", i, 0), geo.conn.Ct2[i])
        emit(f"z2.Q2[{i}]=Q22", contract("v1v2", i, 1), v1v2.coef[i, 2])
        v1v1 = pack.families["v1v1"]
        v2v2 = pack.families["v2v2"]
        emit(f"z1.S1[{i}]=S1", contract("v1v1", i, 0), v1v1.coef[i, 1])
        emit(f"z2.S2[{i}]=S2", contract("v2v2", i, 1), v2v2.coef[i, 2])
        emit(f"z1.S2[{i}]=0", contract("v2v2", i, 0), None)
        emit(f"z2.S1[{i}]=R12", contract("v1v1", i, 1), v1v1.coef[i, 2])
    return rows


# ---------------------------------------------------------------------------
# seeded polynomial test fields

def random_polynomial(space, rng: SplitMix64, degree: int = 2) -> Expr:
    """Dense polynomial with coefficients uniform in [-1, 1)."""
    names = space.names
    e: Expr = ex.num(rng.uniform(-1.0, 1.0))
    if degree >= 1:
        for nm in names:
            e = ex.add(e, ex.mul(ex.num(rng.uniform(-1.0, 1.0)), ex.var(nm)))
    if degree >= 2:
        for a, nm_a in enumerate(names):
            for nm_b in names[a:]:
                term = ex.mul(ex.var(nm_a), ex.var(nm_b))
                e = ex.add(e, ex.mul(ex.num(rng.uniform(-1.0, 1.0)), term))
    return e


def random_vector_field(space, rng: SplitMix64, dim: int, degree: int = 2) -> np.ndarray:
    return np.array([random_polynomial(space, rng, degree) for _ in range(dim)],
                    dtype=object)
