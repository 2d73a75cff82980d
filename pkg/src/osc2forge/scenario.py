"""Scenario files: schema validation, expression parsing and the load-time
rank / metric-compatibility gates."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import expr as ex
from .expr import CoordSpace, Expr, ParseError
from .frame import FrameError, ProlongedEmbedding, prolong_embedding
from .osc2 import (AmbientGeometry, DConnection, NLConnection, earray,
                   metric_compatibility_residuals)
from .sampling import sample_points

_D_KEYS = ("L00", "L10", "L20", "C01", "C11", "C21", "C02", "C12", "C22")

# report layout: every run emits exactly these ids, in this order
KNOWN_CHECK_IDS = (
    "embedding_rank", "chain_rule_identities", "differential_pullback",
    "metric_nondegenerate", "ambient_cobasis_duality", "metric_compatibility",
    "frame_orthonormality", "frame_duality", "frame_completeness",
    "frame_raising", "induced_cobasis_duality", "induced_nl_projection",
    "cobasis_decomposition", "tangent_compatibility", "normal_compatibility",
    "deflection_definitions", "deflection_closed_form_first",
    "deflection_closed_form_second_report",
    "curvature_antisymmetry", "second_vertical_flatness",
    "ricci_hh", "ricci_hv1", "ricci_hv2", "ricci_v1v2", "ricci_vv",
    "deflection_identity_hh", "deflection_identity_hv1",
    "deflection_identity_hv2", "deflection_identity_v1v2",
    "deflection_identity_vv",
    "tensoriality", "special_form", "special_form_consequences",
    "gauge_invariance", "derivative_fd_oracle",
)


class ScenarioError(Exception):
    """Schema violation, parse failure or a load-time gate failure."""


@dataclass
class Scenario:
    name: str
    n: int
    m: int
    base_space: CoordSpace
    sub_space: CoordSpace
    metric: np.ndarray
    embedding: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    D: dict[str, np.ndarray]
    declared_metrical: bool
    seed: int
    count: int
    ranges: dict[str, tuple[float, float]]
    tolerances: dict[str, float] = field(default_factory=dict)

    def ambient(self) -> AmbientGeometry:
        nl = NLConnection.from_dual(self.base_space, self.M1, self.M2)
        n = self.n
        L = earray(3, n, n, n)
        C1 = earray(3, n, n, n)
        C2 = earray(3, n, n, n)
        for i in range(3):
            L[i] = self.D[f"L{i}0"]
            C1[i] = self.D[f"C{i}1"]
            C2[i] = self.D[f"C{i}2"]
        return AmbientGeometry(n, self.base_space, self.metric, nl, DConnection(L, C1, C2))

    def prolong(self) -> ProlongedEmbedding:
        return prolong_embedding(list(self.embedding), self.m, self.n, self.sub_space)

    def base_point(self) -> dict[str, float]:
        return {nm: 0.5 * (lo + hi) for nm, (lo, hi) in self.ranges.items()}

    def points(self) -> list[dict[str, float]]:
        return sample_points(self.ranges, self.count, self.seed)

    def tolerance(self, check_id: str, default: float) -> float:
        return float(self.tolerances.get(check_id, default))


def _require(cond: bool, path: str, reason: str):
    if not cond:
        raise ScenarioError(f"{path}: {reason}")


def _parse_entry(text, space: CoordSpace, path: str) -> Expr:
    _require(isinstance(text, str), path, f"expected an expression string, got {type(text).__name__}")
    try:
        return ex.parse(text, space)
    except ParseError as err:
        raise ScenarioError(f"{path}: {err}") from None


def _parse_matrix(data, n: int, space: CoordSpace, path: str) -> np.ndarray:
    _require(isinstance(data, list) and len(data) == n, path, f"expected {n} rows")
    out = earray(n, n)
    for a, row in enumerate(data):
        _require(isinstance(row, list) and len(row) == n, f"{path}[{a}]", f"expected {n} entries")
        for b, entry in enumerate(row):
            out[a, b] = _parse_entry(entry, space, f"{path}[{a}][{b}]")
    return out


def _parse_cube(data, n: int, space: CoordSpace, path: str) -> np.ndarray:
    _require(isinstance(data, list) and len(data) == n, path, f"expected {n} blocks")
    out = earray(n, n, n)
    for a, block in enumerate(data):
        _require(isinstance(block, list) and len(block) == n, f"{path}[{a}]", f"expected {n} rows")
        for b, row in enumerate(block):
            _require(isinstance(row, list) and len(row) == n, f"{path}[{a}][{b}]", f"expected {n} entries")
            for d, entry in enumerate(row):
                out[a, b, d] = _parse_entry(entry, space, f"{path}[{a}][{b}][{d}]")
    return out


def parse_scenario(raw: dict, name_hint: str = "scenario") -> Scenario:
    _require(isinstance(raw, dict), "$", "top level must be an object")
    name = raw.get("name", name_hint)
    _require(isinstance(name, str) and name, "name", "must be a non-empty string")

    n = raw.get("n")
    m = raw.get("m")
    _require(isinstance(n, int) and n >= 2, "n", "must be an integer >= 2")
    _require(isinstance(m, int) and m >= 1, "m", "must be an integer >= 1")
    _require(m < n, "m", f"require m < n, got m={m}, n={n}")

    base_space = CoordSpace.base(n)
    sub_space = CoordSpace.submanifold(m)

    _require("metric" in raw, "metric", "missing")
    metric = _parse_matrix(raw["metric"], n, base_space, "metric")
    for a in range(n):
        for b in range(a + 1, n):
            _require(metric[a, b] is metric[b, a], f"metric[{a}][{b}]",
                     "metric entries must be symmetric (mirror the expression strings)")

    _require("embedding" in raw, "embedding", "missing")
    emb_raw = raw["embedding"]
    _require(isinstance(emb_raw, list) and len(emb_raw) == n, "embedding", f"expected {n} entries")
    u_names = set(sub_space.group(0))
    embedding = earray(n)
    for a, entry in enumerate(emb_raw):
        e = _parse_entry(entry, sub_space, f"embedding[{a}]")
        extra = ex.free_vars(e) - u_names
        _require(not extra, f"embedding[{a}]",
                 f"may depend on position coordinates only, found {sorted(extra)}")
        embedding[a] = e

    def matrix_or_zero(key: str) -> np.ndarray:
        if key not in raw or raw[key] is None:
            return earray(n, n)
        return _parse_matrix(raw[key], n, base_space, key)

    M1 = matrix_or_zero("M1")
    M2 = matrix_or_zero("M2")

    D: dict[str, np.ndarray] = {}
    d_raw = raw.get("D") or {}
    _require(isinstance(d_raw, dict), "D", "must be an object of coefficient blocks")
    for key in d_raw:
        _require(key in _D_KEYS, f"D.{key}", f"unknown block, expected one of {_D_KEYS}")
    for key in _D_KEYS:
        if key in d_raw and d_raw[key] is not None:
            D[key] = _parse_cube(d_raw[key], n, base_space, f"D.{key}")
        else:
            D[key] = earray(n, n, n)

    declared_metrical = raw.get("declared_metrical", False)
    _require(isinstance(declared_metrical, bool), "declared_metrical", "must be a boolean")

    _require("sampling" in raw and isinstance(raw["sampling"], dict), "sampling", "missing object")
    samp = raw["sampling"]
    seed = samp.get("seed")
    count = samp.get("count")
    _require(isinstance(seed, int) and 0 <= seed < 2 ** 64, "sampling.seed",
             "must be an unsigned 64-bit integer")
    _require(isinstance(count, int) and count >= 0, "sampling.count", "must be >= 0")
    ranges_raw = samp.get("ranges")
    _require(isinstance(ranges_raw, dict), "sampling.ranges", "must map variable names to [lo, hi]")
    ranges: dict[str, tuple[float, float]] = {}
    for nm, pair in ranges_raw.items():
        _require(sub_space.has(nm), f"sampling.ranges.{nm}", "not a submanifold coordinate")
        _require(isinstance(pair, list) and len(pair) == 2, f"sampling.ranges.{nm}",
                 "expected [lo, hi]")
        lo, hi = float(pair[0]), float(pair[1])
        _require(math.isfinite(lo) and math.isfinite(hi) and lo < hi,
                 f"sampling.ranges.{nm}", "require finite lo < hi")
        ranges[nm] = (lo, hi)
    for nm in sub_space.names:
        _require(nm in ranges, f"sampling.ranges.{nm}", "missing range")

    tolerances_raw = raw.get("tolerances") or {}
    _require(isinstance(tolerances_raw, dict), "tolerances", "must be an object")
    tolerances: dict[str, float] = {}
    for key, value in tolerances_raw.items():
        _require(key in KNOWN_CHECK_IDS, f"tolerances.{key}", "unknown check id")
        tolerances[key] = float(value)

    return Scenario(name, n, m, base_space, sub_space, metric, embedding,
                    M1, M2, D, declared_metrical, seed, count, ranges, tolerances)


def _rank_gate(sc: Scenario):
    emb = sc.prolong()
    B = earray(sc.n, sc.m)
    for a in range(sc.n):
        for al in range(sc.m):
            B[a, al] = ex.differentiate(emb.x[a], sc.sub_space.group(0)[al])
    fn = ex.compile_exprs(list(B.ravel()))
    for p in sc.points():
        mat = np.array(fn(p), dtype=float).reshape(sc.n, sc.m)
        sv = float(np.linalg.svd(mat, compute_uv=False)[-1])
        if sv <= 1e-10:
            raise ScenarioError(
                f"embedding: rank deficient (smallest singular value {sv:.3e}) at {p}")


def _metrical_gate(sc: Scenario):
    geom = sc.ambient()
    emb = sc.prolong()
    sub_map = emb.substitution(sc.base_space)
    worst = (0.0, "", None)
    points = sc.points()
    for label, comps in metric_compatibility_residuals(geom):
        restricted = [ex.substitute(e, sub_map) for e in comps.ravel()]
        fn = ex.compile_exprs(restricted)
        for p in points:
            vals = fn(p)
            for k, v in enumerate(vals):
                if abs(v) > worst[0]:
                    worst = (abs(v), f"{label} entry {k}", p)
    if worst[0] > 1e-9:
        raise ScenarioError(
            "declared_metrical: the supplied linear connection is not compatible "
            f"with the metric; worst residual {worst[0]:.3e} in derivative "
            f"{worst[1]} at {worst[2]}")


def load_scenario(path: str | Path, *, seed: int | None = None,
                  count: int | None = None,
                  tolerance: float | None = None) -> Scenario:
    """Load, validate and gate a scenario file.

    Optional overrides replace the sampling seed, point count, or every
    check tolerance before the gates run.
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"{path}: no such file")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ScenarioError(f"{path}: invalid JSON ({err})") from None
    sc = parse_scenario(raw, name_hint=path.stem)
    if seed is not None:
        sc.seed = seed
    if count is not None:
        sc.count = count
    if tolerance is not None:
        sc.tolerances = {check_id: tolerance for check_id in KNOWN_CHECK_IDS}
    try:
        _rank_gate(sc)
    except FrameError as err:
        raise ScenarioError(f"embedding: {err}") from None
    if sc.declared_metrical:
        _metrical_gate(sc)
    return sc
