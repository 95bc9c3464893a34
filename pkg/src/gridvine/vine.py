"""Simplified vine copulas assembled from grid edges.

An edge ``(j, k | D)`` stores a grid whose u-axis is ``U_{j|D}`` and whose
v-axis is ``U_{k|D}``.  Conditional pseudo-observations are cached under the
key ``(variable, frozenset(D))``; each edge turns its two inputs into
``U_{j|D+k}`` and ``U_{k|D+j}`` for the next tree.
"""

from __future__ import annotations

import io
import json
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import gridio
from .edge import EdgeConfig, EdgeModel, fit_edge
from .errors import (
    DataError,
    DegenerateDataError,
    DimensionMismatchError,
    DomainError,
    InsufficientDataError,
    MalformedFileError,
)
from .hfunc import HTables
from .ipfp import DensityGrid
from .kendall import kendall_matrix, kendall_tau
from .transform import pseudo_observations_matrix

FORMAT_VERSION = 1
_SAMPLE_EPS = 2.0**-53

Key = tuple[int, frozenset]


class StructureKind(str, Enum):
    DVINE = "dvine"
    RVINE = "rvine"


@dataclass(frozen=True)
class FitConfig:
    structure: str = "dvine"
    m: int = 64
    estimator: str = "kde"
    alpha: float | str | None = "auto"
    bandwidth: float | None = None
    k_ipfp: int = 15
    interpolation: str = "bilinear"
    truncation: int | None = None
    min_samples: int = 100
    threads: int = 1
    grid_dir: str | None = None

    def __post_init__(self):
        StructureKind(self.structure)
        if self.truncation is not None and self.truncation < 0:
            raise DataError("truncation level must be non-negative")
        if self.min_samples < 2:
            raise DataError("min_samples must be at least 2")
        if self.threads < 1:
            raise DataError("threads must be at least 1")
        self.edge_config()

    def edge_config(self) -> EdgeConfig:
        return EdgeConfig(
            m=self.m,
            estimator=self.estimator,
            alpha=self.alpha,
            bandwidth=self.bandwidth,
            k_ipfp=self.k_ipfp,
            interpolation=self.interpolation,
            grid_dir=self.grid_dir,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "FitConfig":
        return cls(**data)


@dataclass(frozen=True)
class FitStats:
    tau_hat: float
    n_used: int
    mean_log_density: float


@dataclass(frozen=True)
class VineEdge:
    conditioned: tuple[int, int]
    conditioning: tuple[int, ...]
    tree_level: int
    model: EdgeModel
    fit_stats: FitStats | None = None

    def __post_init__(self):
        j, k = self.conditioned
        if j == k or j in self.conditioning or k in self.conditioning:
            raise DataError(f"edge {self.label} repeats a variable")
        if len(self.conditioning) != self.tree_level - 1:
            raise DataError(f"edge {self.label} at tree {self.tree_level} needs |D| = {self.tree_level - 1}")

    @property
    def grid(self) -> DensityGrid:
        return self.model.grid

    @property
    def htables(self) -> HTables:
        return self.model.htables

    @property
    def label(self) -> str:
        return edge_label(self.conditioned, self.conditioning)

    @property
    def full_set(self) -> frozenset:
        return frozenset(self.conditioned) | frozenset(self.conditioning)

    def input_keys(self) -> tuple[Key, Key]:
        d = frozenset(self.conditioning)
        j, k = self.conditioned
        return (j, d), (k, d)

    def output_keys(self) -> tuple[Key, Key]:
        d = frozenset(self.conditioning)
        j, k = self.conditioned
        return (j, d | {k}), (k, d | {j})


@dataclass(frozen=True)
class VineModel:
    d: int
    m: int
    structure_kind: StructureKind
    trees: tuple[tuple[VineEdge, ...], ...]
    order: tuple[int, ...] | None = None
    config: FitConfig = field(default_factory=FitConfig)

    @property
    def edges(self) -> tuple[VineEdge, ...]:
        return tuple(e for tree in self.trees for e in tree)

    @property
    def interpolation(self) -> str:
        return self.config.interpolation


# structure -----------------------------------------------------------------


def _edge_rank(weight: float, pair: tuple[int, int], cond: tuple[int, ...] = ()):
    return (-abs(weight), min(pair), max(pair), cond)


def dvine_order(tau: np.ndarray) -> tuple[int, ...]:
    """Greedy Hamiltonian path on ``|tau|``.

    Start from the strongest pair and repeatedly attach, at either end, the
    unused variable most dependent on that end.
    """
    d = tau.shape[0]
    if d == 1:
        return (0,)
    w = np.abs(tau)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    a, b = min(pairs, key=lambda p: _edge_rank(w[p], p))
    path = [a, b]
    unused = set(range(d)) - {a, b}
    while unused:
        best = None
        for side, end in ((0, path[0]), (1, path[-1])):
            for v in sorted(unused):
                cand = (-w[end, v], side, v)
                if best is None or cand < best:
                    best = cand
        _, side, v = best
        if side == 0:
            path.insert(0, v)
        else:
            path.append(v)
        unused.remove(v)
    return tuple(path)


def max_spanning_tree(n_nodes: int, candidates: dict) -> list:
    """Kruskal on ``{(a, b): (weight, tiebreak)}``; returns chosen keys in selection order."""
    parent = list(range(n_nodes))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    ranked = sorted(candidates, key=lambda key: (-abs(candidates[key][0]), candidates[key][1]))
    chosen = []
    for a, b in ranked:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            chosen.append((a, b))
            if len(chosen) == n_nodes - 1:
                break
    if len(chosen) != n_nodes - 1:
        raise DataError("candidate graph is not connected")
    return chosen


def edge_label(pair, cond=()) -> str:
    j, k = pair
    if not cond:
        return f"{j},{k}"
    return f"{j},{k}|{','.join(str(c) for c in cond)}"


def _join(e1: VineEdge, e2: VineEdge) -> tuple[tuple[int, int], tuple[int, ...]]:
    """Conditioned pair and conditioning set of the edge joining two adjacent tree edges."""
    f1, f2 = e1.full_set, e2.full_set
    common = f1 & f2
    (x,), (y,) = tuple(f1 - common), tuple(f2 - common)
    pair = (x, y) if x < y else (y, x)
    return pair, tuple(sorted(common))


def check_proximity(model: VineModel) -> bool:
    """True iff every tree has ``d - l`` edges, each tree is a spanning tree of
    the previous one, and every edge satisfies the proximity condition."""
    d = model.d
    if len(model.trees) != d - 1:
        return False
    prev_nodes: list[frozenset] = [frozenset({i}) for i in range(d)]
    for level, tree in enumerate(model.trees, start=1):
        if len(tree) != d - level:
            return False
        index = {s: i for i, s in enumerate(prev_nodes)}
        links = []
        for e in tree:
            if e.tree_level != level:
                return False
            pair, cond = e.conditioned, frozenset(e.conditioning)
            # the edge joins the previous-tree nodes holding each conditioned variable with D
            ends = [index.get(cond | {var}) for var in pair]
            if None in ends or ends[0] == ends[1]:
                return False
            links.append(tuple(ends))
        try:
            max_spanning_tree(len(prev_nodes), {lk: (1.0, lk) for lk in links})
        except DataError:
            return False
        prev_nodes = [e.full_set for e in tree]
    return True


# recursion -----------------------------------------------------------------


def _initial_cache(u: np.ndarray) -> dict:
    return {(i, frozenset()): u[:, i] for i in range(u.shape[1])}


def _advance(edge: VineEdge, cache: dict, interpolation: str, want_outputs: bool):
    ka, kb = edge.input_keys()
    a, b = cache[ka], cache[kb]
    logd = edge.model.log_density(a, b, interpolation)
    outputs = None
    if want_outputs:
        outputs = (edge.model.h_u_given_v(a, b), edge.model.h_v_given_u(b, a))
    return np.atleast_1d(logd), outputs


def edge_log_densities(model: VineModel, u: np.ndarray) -> list[np.ndarray]:
    """Per-edge log-density columns, tree by tree, for copula-scale rows ``u``."""
    cache = _initial_cache(u)
    out = []
    for level, tree in enumerate(model.trees, start=1):
        want = level < len(model.trees)
        for edge in tree:
            logd, outputs = _advance(edge, cache, model.interpolation, want)
            out.append(logd)
            if want:
                ku, kv = edge.output_keys()
                cache[ku], cache[kv] = outputs
    return out


def _check_copula_input(model: VineModel, u) -> tuple[np.ndarray, bool]:
    arr = np.asarray(u, dtype=float)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.shape[1] != model.d:
        raise DimensionMismatchError(f"expected {model.d} columns, got {arr.shape[1]}")
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError("copula-scale inputs must lie strictly inside (0, 1)")
    return arr, single


def log_likelihood(model: VineModel, u):
    """Log copula density (nats) of one row or of every row of ``u``."""
    arr, single = _check_copula_input(model, u)
    if not model.trees:
        total = np.zeros(arr.shape[0])
    else:
        total = np.sum(np.vstack(edge_log_densities(model, arr)), axis=0)
    return float(total[0]) if single else total


# fitting -------------------------------------------------------------------


def _validate_data(data, cfg: FitConfig) -> np.ndarray:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise DimensionMismatchError("data must be an (n, d) matrix")
    n, d = x.shape
    if d < 2:
        raise DimensionMismatchError("a vine needs at least two variables")
    if n < cfg.min_samples:
        raise InsufficientDataError(f"{n} rows is below the minimum of {cfg.min_samples}")
    if not np.all(np.isfinite(x)):
        raise DataError("data contain non-finite values")
    const = [j for j in range(d) if np.all(x[:, j] == x[0, j])]
    if const:
        raise DegenerateDataError(f"constant column(s): {const}")
    return x


def _fit_one(pair, cond, level, cache, cfg: FitConfig, truncated: bool, tau: float) -> VineEdge:
    j, k = pair
    key_d = frozenset(cond)
    a, b = cache[(j, key_d)], cache[(k, key_d)]
    if truncated:
        model = EdgeModel.independence(cfg.m)
    else:
        model = fit_edge(a, b, cfg.edge_config(), edge_label(pair, cond))
    mean_ld = float(np.mean(model.log_density(a, b, cfg.interpolation)))
    return VineEdge((j, k), cond, level, model, FitStats(float(tau), int(a.size), mean_ld))


def _pair_tau(cache, pair, cond) -> float:
    d = frozenset(cond)
    try:
        return kendall_tau(cache[(pair[0], d)], cache[(pair[1], d)])
    except DegenerateDataError:
        return 0.0


def _level_specs(kind: StructureKind, level: int, d: int, order, prev: tuple[VineEdge, ...], cache, tau1):
    """Edges (pair, conditioning, tau) of tree ``level``."""
    if kind is StructureKind.DVINE:
        specs = []
        for i in range(d - level):
            pair = (order[i], order[i + level])
            cond = tuple(sorted(order[i + 1 : i + level]))
            tau = tau1[pair] if level == 1 else _pair_tau(cache, pair, cond)
            specs.append((pair, cond, tau))
        return specs
    if level == 1:
        cands = {(i, j): (tau1[i, j], (i, j, ())) for i in range(d) for j in range(i + 1, d)}
        chosen = max_spanning_tree(d, cands)
        return [((a, b), (), tau1[a, b]) for a, b in chosen]
    cands, joins = {}, {}
    for x in range(len(prev)):
        for y in range(x + 1, len(prev)):
            # proximity: only edges sharing a node of the previous tree may join
            if not _share_node(prev[x], prev[y]):
                continue
            pair, cond = _join(prev[x], prev[y])
            tau = _pair_tau(cache, pair, cond)
            cands[(x, y)] = (tau, (pair[0], pair[1], cond))
            joins[(x, y)] = (pair, cond, tau)
    chosen = max_spanning_tree(len(prev), cands)
    return [joins[c] for c in chosen]


def _share_node(e1: VineEdge, e2: VineEdge) -> bool:
    """Edges of tree l >= 2 are adjacent when they share a tree-(l-1) node."""
    nodes1 = {frozenset(e1.conditioning) | {v} for v in e1.conditioned}
    nodes2 = {frozenset(e2.conditioning) | {v} for v in e2.conditioned}
    return bool(nodes1 & nodes2)


def fit(data, cfg: FitConfig = FitConfig()) -> VineModel:
    """Fit a simplified vine on raw data (columns are rank-transformed first)."""
    x = _validate_data(data, cfg)
    n, d = x.shape
    u = pseudo_observations_matrix(x)
    kind = StructureKind(cfg.structure)
    tau1 = kendall_matrix(u)
    order = dvine_order(tau1) if kind is StructureKind.DVINE else None
    cache = _initial_cache(u)
    trees: list[tuple[VineEdge, ...]] = []
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        prev: tuple[VineEdge, ...] = ()
        for level in range(1, d):
            specs = _level_specs(kind, level, d, order, prev, cache, tau1)
            truncated = cfg.truncation is not None and level > cfg.truncation
            jobs = [(pair, cond, level, cache, cfg, truncated, tau) for pair, cond, tau in specs]
            if pool is None:
                tree = tuple(_fit_one(*job) for job in jobs)
            else:
                tree = tuple(pool.map(lambda job: _fit_one(*job), jobs))
            if level < d - 1:
                for edge in tree:
                    ka, kb = edge.input_keys()
                    a, b = cache[ka], cache[kb]
                    ku, kv = edge.output_keys()
                    cache[ku] = edge.model.h_u_given_v(a, b)
                    cache[kv] = edge.model.h_v_given_u(b, a)
            trees.append(tree)
            prev = tree
    finally:
        if pool is not None:
            pool.shutdown()
    return VineModel(d, cfg.m, kind, tuple(trees), order, cfg)


def from_edges(d: int, trees, kind: StructureKind | str = StructureKind.RVINE, order=None, cfg=None) -> VineModel:
    """Assemble a model from prebuilt edges (e.g. analytic grids)."""
    trees = tuple(tuple(t) for t in trees)
    m = trees[0][0].model.m if trees else (cfg.m if cfg else 64)
    cfg = cfg or FitConfig(structure=StructureKind(kind).value, m=m)
    model = VineModel(d, m, StructureKind(kind), trees, tuple(order) if order else None, cfg)
    if not check_proximity(model):
        raise DataError("edges do not form a regular vine")
    return model


def dvine_from_grids(order, grids_by_level) -> VineModel:
    """D-vine on ``order`` whose tree-l edges use ``grids_by_level[l-1][i]``."""
    d = len(order)
    trees = []
    for level in range(1, d):
        tree = []
        for i in range(d - level):
            pair = (order[i], order[i + level])
            cond = tuple(sorted(order[i + 1 : i + level]))
            tree.append(VineEdge(pair, cond, level, EdgeModel.from_grid(grids_by_level[level - 1][i])))
        trees.append(tuple(tree))
    return from_edges(d, trees, StructureKind.DVINE, order)


# interventions -------------------------------------------------------------


def remove_trees(model: VineModel, levels) -> VineModel:
    """Replace the densities of the given trees by the independence grid.

    h-tables are kept, so the conditional pseudo-observations feeding later
    trees are unchanged and only the removed trees' terms drop out.
    """
    levels = set(levels)
    trees = []
    for level, tree in enumerate(model.trees, start=1):
        if level in levels:
            tree = tuple(
                replace(e, model=EdgeModel(DensityGrid.uniform(e.model.m), e.model.htables, None)) for e in tree
            )
        trees.append(tree)
    return replace(model, trees=tuple(trees))


# sampling ------------------------------------------------------------------


def _peel_order(model: VineModel) -> list[tuple[int, list[VineEdge]]]:
    """Variables in reverse sampling order with the edges that condition them.

    The removed variable is conditioned in exactly one edge per remaining tree
    and appears in no conditioning set, so dropping its edges leaves a vine on
    the other variables.
    """
    trees = [list(t) for t in model.trees]
    remaining = set(range(model.d))
    peeled = []
    while len(remaining) > 1:
        top = trees[len(remaining) - 2]
        if len(top) != 1:
            raise DataError("malformed vine: top tree must hold one edge")
        chosen = None
        for var in reversed(top[0].conditioned):
            own = []
            ok = True
            for tree in trees[: len(remaining) - 1]:
                hits = [e for e in tree if var in e.conditioned]
                if len(hits) != 1 or any(var in e.conditioning for e in tree):
                    ok = False
                    break
                own.append(hits[0])
            if ok:
                chosen = (var, own)
                break
        if chosen is None:
            raise DataError("could not derive a sampling order for this vine")
        var, own = chosen
        peeled.append(chosen)
        for level, e in enumerate(own):
            trees[level].remove(e)
        remaining.remove(var)
    peeled.append((remaining.pop(), []))
    return peeled


def sample(model: VineModel, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` rows from the model by inverting h-functions tree by tree."""
    if n < 1:
        raise DataError("sample size must be positive")
    rng = np.random.default_rng(seed)
    w = rng.random((n, model.d))
    edges_by_full = {}
    for e in model.edges:
        for var in e.conditioned:
            edges_by_full[(var, e.full_set)] = e
    values: dict[Key, np.ndarray] = {}

    def resolve(var: int, cond: frozenset) -> np.ndarray:
        key = (var, cond)
        if key not in values:
            e = edges_by_full[(var, cond | {var})]
            ka, kb = e.input_keys()
            a, b = resolve(*ka), resolve(*kb)
            values[key] = e.model.h_u_given_v(a, b) if var == e.conditioned[0] else e.model.h_v_given_u(b, a)
        return values[key]

    for var, own in reversed(_peel_order(model)):
        cur = w[:, var]
        for e in sorted(own, key=lambda e: -e.tree_level):
            j, k = e.conditioned
            cond = frozenset(e.conditioning)
            values[(var, cond | {k if var == j else j})] = cur
            if var == j:
                cur = e.model.hinv_u_given_v(cur, resolve(k, cond))
            else:
                cur = e.model.hinv_v_given_u(cur, resolve(j, cond))
        values[(var, frozenset())] = cur
    out = np.column_stack([values[(i, frozenset())] for i in range(model.d)])
    return np.clip(out, _SAMPLE_EPS, 1.0 - _SAMPLE_EPS)


# serialization -------------------------------------------------------------


def _put(zf: zipfile.ZipFile, name: str, payload) -> None:
    # fixed timestamps keep the container bytes a function of the model alone
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    zf.writestr(info, payload)


def save(model: VineModel, path) -> None:
    """Write a ``.vdc`` container: ``model.json`` plus raw per-edge payloads."""
    meta = {
        "format": "gridvine-vdc",
        "version": FORMAT_VERSION,
        "d": model.d,
        "m": model.m,
        "structure_kind": model.structure_kind.value,
        "order": list(model.order) if model.order else None,
        "config": model.config.to_dict(),
        "edges": [],
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for idx, e in enumerate(model.edges):
            stem = f"edges/{idx:04d}"
            entry = {
                "conditioned": list(e.conditioned),
                "conditioning": list(e.conditioning),
                "tree_level": e.tree_level,
                "fit_stats": asdict(e.fit_stats) if e.fit_stats else None,
                "grid": f"{stem}_grid.bin",
                "h_u_given_v": f"{stem}_hu.bin",
                "h_v_given_u": f"{stem}_hv.bin",
            }
            _put(zf, entry["grid"], gridio.grid_to_bytes(e.grid.values))
            _put(zf, entry["h_u_given_v"], gridio.grid_to_bytes(e.htables.h_u_given_v))
            _put(zf, entry["h_v_given_u"], gridio.grid_to_bytes(e.htables.h_v_given_u))
            meta["edges"].append(entry)
        _put(zf, "model.json", json.dumps(meta, indent=2))


def load(path) -> VineModel:
    try:
        zf = zipfile.ZipFile(path)
    except (zipfile.BadZipFile, OSError) as exc:
        raise MalformedFileError(f"{path}: not a model container ({exc})") from exc
    with zf:
        try:
            meta = json.loads(zf.read("model.json"))
        except (KeyError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"{path}: missing or invalid model.json") from exc
        if meta.get("format") != "gridvine-vdc":
            raise MalformedFileError(f"{path}: unknown container format")
        d, m = int(meta["d"]), int(meta["m"])
        by_level: dict[int, list[VineEdge]] = {}
        for entry in meta["edges"]:
            try:
                grid = gridio.grid_from_bytes(zf.read(entry["grid"]), (m, m))
                hu = gridio.grid_from_bytes(zf.read(entry["h_u_given_v"]), (m + 1, m))
                hv = gridio.grid_from_bytes(zf.read(entry["h_v_given_u"]), (m + 1, m))
            except KeyError as exc:
                raise MalformedFileError(f"{path}: missing payload {exc}") from exc
            stats = FitStats(**entry["fit_stats"]) if entry["fit_stats"] else None
            edge = VineEdge(
                tuple(entry["conditioned"]),
                tuple(entry["conditioning"]),
                int(entry["tree_level"]),
                EdgeModel(DensityGrid(grid), HTables(hu, hv)),
                stats,
            )
            by_level.setdefault(edge.tree_level, []).append(edge)
    trees = tuple(tuple(by_level[lv]) for lv in sorted(by_level))
    order = tuple(meta["order"]) if meta["order"] else None
    model = VineModel(d, m, StructureKind(meta["structure_kind"]), trees, order, FitConfig.from_dict(meta["config"]))
    if not check_proximity(model):
        raise MalformedFileError(f"{path}: stored edges do not form a regular vine")
    return model


def to_bytes(model: VineModel) -> bytes:
    buf = io.BytesIO()
    save(model, buf)
    return buf.getvalue()
