"""Exact squared-Euclidean optimal transport between uniform point clouds.

The transportation problem between ``N_a`` and ``N_b`` uniform atoms is
rescaled to integer supplies ``L / N_a`` and demands ``L / N_b`` with
``L = lcm(N_a, N_b)`` and solved as a min-cost flow on a sparse candidate
graph:

* Node potentials come from the Gaussian optimal map between the two
  clouds' moments, or for large clouds from an exact solve on a subsample.
* The candidate arcs are the k smallest reduced costs of every atom (a
  k-d tree query after lifting the potentials into an extra coordinate)
  plus the monotone coupling along the principal axis, which guarantees a
  feasible plan.
* An epsilon-scaling auction prices the sinks, and successive shortest
  paths with Dijkstra finish the flow exactly in integers.
* The potentials are then checked against *every* pair. Violated pairs and
  their neighbourhoods join the graph and the solve resumes.

The returned value therefore carries a full dual-feasibility certificate
rather than a heuristic bound. Small problems use all arcs directly.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from ..errors import InvalidInputError, SolverError
from . import _backend

DENSE_LIMIT = 250_000
DEFAULT_NEIGHBOURS = 16
MAX_ROUNDS = 50
# Violations collected per certificate scan, as a multiple of N_a + N_b.
SCAN_LIMIT = 4
# Large problems are seeded from an exact solve on every COARSEN-th atom.
COARSEN = 4
COARSEN_MIN = 64
MAX_AUCTION_CAP = 64
# Auction epsilon schedule, relative to the mean arc cost.
AUCTION_EPS_START = 0.1
AUCTION_EPS_END = 1e-4
AUCTION_FACTOR = 8.0
AUCTION_BIDS = 5000
RELEASE_FRACTION = 0.02


@dataclass(frozen=True)
class PointCloud:
    """Uniformly weighted atoms, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInputError(f"point cloud must be a non-empty (N, dim) array, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point cloud has non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class W2Result:
    distance: float
    squared_cost: float
    # (rows, cols, mass) of the nonzero entries of an optimal coupling
    plan: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None


def as_cloud(x) -> PointCloud:
    return x if isinstance(x, PointCloud) else PointCloud(x)


def _check_pair(a, b):
    a, b = as_cloud(a), as_cloud(b)
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    return a, b


def w2_exact(a, b, *, return_plan=False, method="auto", backend=None, neighbours=DEFAULT_NEIGHBOURS):
    """Exact 2-Wasserstein distance between two uniform point clouds.

    Parameters
    ----------
    a, b : PointCloud or array_like, shape (N, dim)
    return_plan : bool
        Attach the optimal coupling as sparse ``(rows, cols, mass)`` triples.
    method : {"auto", "flow", "quantile"}
        ``"quantile"`` uses the monotone coupling and is only valid in one
        dimension; ``"auto"`` selects it there and the flow solver otherwise.
    backend : {"compiled", "python"}, optional
        Kernel implementation for the flow solver.
    """
    a, b = _check_pair(a, b)
    if method == "auto":
        method = "quantile" if a.dim == 1 else "flow"
    if method == "quantile":
        if a.dim != 1:
            raise InvalidInputError("quantile method requires one-dimensional clouds")
        sq, plan = _quantile_1d(a.points[:, 0], b.points[:, 0], return_plan)
    elif method == "flow":
        sq, plan = _flow(a.points, b.points, return_plan, backend, neighbours)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    sq = max(sq, 0.0)
    return W2Result(distance=math.sqrt(sq), squared_cost=sq, plan=plan)


def _quantile_1d(x, y, return_plan):
    na, nb = x.size, y.size
    lcm = na * nb // math.gcd(na, nb)
    ox = np.argsort(x, kind="stable")
    oy = np.argsort(y, kind="stable")
    # Breakpoints of both quantile functions on the integer grid 0..lcm.
    ends_x = np.arange(1, na + 1, dtype=np.int64) * (lcm // na)
    ends_y = np.arange(1, nb + 1, dtype=np.int64) * (lcm // nb)
    ends = np.union1d(ends_x, ends_y)
    widths = np.diff(ends, prepend=0)
    ix = np.searchsorted(ends_x, ends)
    iy = np.searchsorted(ends_y, ends)
    diff = x[ox[ix]] - y[oy[iy]]
    sq = math.fsum((widths * diff * diff).tolist()) / lcm
    plan = None
    if return_plan:
        plan = (ox[ix].astype(np.int64), oy[iy].astype(np.int64), widths / lcm)
    return sq, plan


def _build_csr(keys, nb, a, b):
    arc_src = keys // nb
    arc_sink = keys % nb
    d = a[arc_src] - b[arc_sink]
    cost = np.einsum("ij,ij->i", d, d)
    arc_ptr = np.searchsorted(arc_src, np.arange(a.shape[0] + 1)).astype(np.int64)
    order = np.argsort(arc_sink, kind="stable").astype(np.int64)
    sink_ptr = np.concatenate(([0], np.cumsum(np.bincount(arc_sink, minlength=nb)))).astype(np.int64)
    return {
        "keys": keys,
        "arc_src": np.ascontiguousarray(arc_src, dtype=np.int64),
        "arc_sink": np.ascontiguousarray(arc_sink, dtype=np.int64),
        "arc_cost": np.ascontiguousarray(cost, dtype=np.float64),
        "arc_ptr": arc_ptr,
        "sink_ptr": sink_ptr,
        "sink_arcs": order,
    }


def _affine_seed(a, b):
    """Gaussian optimal transport between the two clouds' moments.

    Returns the Kantorovich potentials of the affine map
    ``x -> mb + A (x - ma)``. They are globally dual feasible because the map
    is the gradient of a convex quadratic.
    """
    dim = a.shape[1]
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    sa = np.atleast_2d(np.cov(a, rowvar=False, bias=True))
    sb = np.atleast_2d(np.cov(b, rowvar=False, bias=True))
    ridge = 1e-9 * max(1.0, float(np.trace(sa)), float(np.trace(sb)))
    sa = sa + ridge * np.eye(dim)
    sb = sb + ridge * np.eye(dim)
    w, v = np.linalg.eigh(sa)
    ra = (v * np.sqrt(w)) @ v.T
    ra_inv = (v / np.sqrt(w)) @ v.T
    w2, v2 = np.linalg.eigh(ra @ sb @ ra)
    mid = (v2 * np.sqrt(np.clip(w2, 0.0, None))) @ v2.T
    mat = ra_inv @ mid @ ra_inv
    mat = 0.5 * (mat + mat.T)
    w3, v3 = np.linalg.eigh(mat)
    if w3.min() <= 1e-12 * max(1.0, w3.max()):
        mat = np.eye(dim)
        mat_inv = np.eye(dim)
    else:
        mat_inv = (v3 / w3) @ v3.T
    da = a - ma
    db = b - mb
    phi = 0.5 * np.einsum("ij,jk,ik->i", da, mat, da) + a @ mb
    phi_star = 0.5 * np.einsum("ij,jk,ik->i", db, mat_inv, db) + b @ ma - ma @ mb
    pot_a = 2.0 * phi - np.einsum("ij,ij->i", a, a)
    pot_b = np.einsum("ij,ij->i", b, b) - 2.0 * phi_star
    return np.concatenate((pot_a, pot_b))


def _lifted_neighbours(a, b, pot, rows, k_rows, cols, k_cols):
    """Arcs of smallest reduced cost ``|a_i - b_j|^2 + pot_i - pot_j``.

    Appending ``sqrt(W - pot_j)`` to the sinks (and ``sqrt(pot_i - w)`` to
    the sources) turns the reduced cost into a squared Euclidean distance
    up to a constant, so a k-d tree query is exact.
    """
    na, nb = a.shape[0], b.shape[0]
    out = []
    if rows.size and k_rows:
        k = min(nb, k_rows)
        hb = pot[na:]
        lift = np.sqrt(np.maximum(hb.max() - hb, 0.0))
        tree = cKDTree(np.column_stack((b, lift)))
        _, idx = tree.query(np.column_stack((a[rows], np.zeros(rows.size))), k=k)
        idx = np.asarray(idx, dtype=np.int64).reshape(rows.size, k)
        out.append((rows[:, None] * nb + idx).ravel())
    if cols.size and k_cols:
        k = min(na, k_cols)
        ha = pot[:na]
        lift = np.sqrt(np.maximum(ha - ha.min(), 0.0))
        tree = cKDTree(np.column_stack((a, lift)))
        _, idx = tree.query(np.column_stack((b[cols], np.zeros(cols.size))), k=k)
        idx = np.asarray(idx, dtype=np.int64).reshape(cols.size, k)
        out.append((idx * nb + cols[:, None]).ravel())
    if not out:
        return np.empty(0, dtype=np.int64)
    return np.unique(np.concatenate(out))


def _monotone_keys(a, b):
    """Support of the monotone coupling along the principal axis.

    It is a feasible plan, so a graph containing these arcs always admits a
    complete transport.
    """
    pts = np.vstack((a, b))
    centred = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    axis = vt[0]
    _, (ia, ib, _) = _quantile_1d(a @ axis, b @ axis, True)
    return ia * b.shape[0] + ib


def _degrees(na, nb, neighbours):
    k_rows = min(nb, max(neighbours, -(-neighbours * nb // na)))
    k_cols = min(na, max(neighbours, -(-neighbours * na // nb)))
    return k_rows, k_cols


def _flow(a, b, return_plan, backend, neighbours):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    # Searches start from the side with more atoms (smaller unit supplies).
    if a.shape[0] < b.shape[0]:
        sq, plan = _flow_oriented(b, a, return_plan, backend, neighbours)
        if plan is not None:
            plan = (plan[1], plan[0], plan[2])
        return sq, plan
    return _flow_oriented(a, b, return_plan, backend, neighbours)


def _flow_oriented(a, b, return_plan, backend, neighbours):
    kern = _backend.get_kernels(backend)
    na, nb = a.shape[0], b.shape[0]
    lcm = na // math.gcd(na, nb) * nb
    g_, flow, _ = _solve(kern, a, b, neighbours)
    used = np.nonzero(flow)[0]
    sq = math.fsum((flow[used] * g_["arc_cost"][used]).tolist()) / lcm
    plan = None
    if return_plan:
        plan = (g_["arc_src"][used].copy(), g_["arc_sink"][used].copy(), flow[used] / lcm)
    return sq, plan


class _State:
    """Graph, flow, residual supplies and potentials of one solve."""

    def __init__(self, kern, a, b, keys):
        na, nb = a.shape[0], b.shape[0]
        g = math.gcd(na, nb)
        self.kern, self.a, self.b = kern, a, b
        self.supply, self.demand = nb // g, na // g
        self.graph = _build_csr(keys, nb, a, b)
        self.flow = np.zeros(keys.size, dtype=np.int64)
        self.excess = np.full(na, self.supply, dtype=np.int64)
        self.deficit = np.full(nb, self.demand, dtype=np.int64)

    def add(self, new):
        g_ = self.graph
        keys = np.union1d(g_["keys"], new)
        flow = np.zeros(keys.size, dtype=np.int64)
        flow[np.searchsorted(keys, g_["keys"])] = self.flow
        self.graph = _build_csr(keys, self.b.shape[0], self.a, self.b)
        self.flow = flow

    def restart(self, pot):
        """Drop the flow and re-solve from the given sink potentials."""
        na = self.a.shape[0]
        self.flow[:] = 0
        self.excess[:] = self.supply
        self.deficit[:] = self.demand
        if self.supply == 1 and self.demand <= MAX_AUCTION_CAP:
            self.auction(pot)
        g_ = self.graph
        self.kern.init_sources(np.arange(na, dtype=np.int64), g_["arc_ptr"], g_["arc_sink"],
                               g_["arc_cost"], self.flow, self.excess, self.deficit, pot)
        self.augment(pot)

    def auction(self, pot):
        # Near-optimal sink prices make the shortest-path phase short. The
        # result does not depend on them, so a stalled auction is ignored.
        na = self.a.shape[0]
        g_ = self.graph
        scale = max(float(g_["arc_cost"].mean()), 1e-300)
        price = -pot[na:].copy()
        ok = self.kern.auction_prices(
            g_["arc_ptr"], g_["arc_sink"], g_["arc_cost"], self.demand, price,
            AUCTION_EPS_START * scale, AUCTION_EPS_END * scale, AUCTION_FACTOR,
            AUCTION_BIDS * na)
        if ok:
            pot[na:] = -price

    def augment(self, pot):
        g_ = self.graph
        failed = np.empty(self.a.shape[0], dtype=np.int64)
        n_failed = self.kern.successive_shortest_paths(
            g_["arc_ptr"], g_["arc_sink"], g_["arc_src"], g_["arc_cost"], self.flow,
            g_["sink_ptr"], g_["sink_arcs"], self.excess, self.deficit, pot, failed)
        if n_failed:  # pragma: no cover - the graph always holds a feasible plan
            raise SolverError("transport graph is infeasible")

    def release(self, pot, new, tol):
        """Unassign every source with a violated arc among ``new`` and
        re-price it; all residual reduced costs are then non-negative."""
        g_ = self.graph
        na = self.a.shape[0]
        pos = np.searchsorted(g_["keys"], new)
        src = g_["arc_src"][pos]
        rc = g_["arc_cost"][pos] + pot[src] - pot[na + g_["arc_sink"][pos]]
        rows = np.unique(src[rc < -tol])
        if rows.size > RELEASE_FRACTION * na:
            # A global reshuffle; the auction handles it faster.
            self.restart(pot)
            return
        held = np.isin(g_["arc_src"], rows) & (self.flow > 0)
        np.add.at(self.excess, g_["arc_src"][held], self.flow[held])
        np.add.at(self.deficit, g_["arc_sink"][held], self.flow[held])
        self.flow[held] = 0
        self.kern.init_sources(rows.astype(np.int64), g_["arc_ptr"], g_["arc_sink"],
                               g_["arc_cost"], self.flow, self.excess, self.deficit, pot)

    def repair(self, pot, seeds, tol):
        g_ = self.graph
        return self.kern.repair_potentials(
            g_["arc_ptr"], g_["arc_sink"], g_["arc_src"], g_["arc_cost"], self.flow,
            g_["sink_ptr"], g_["sink_arcs"], pot, seeds, tol, 4 * pot.size)


def _coarse_potentials(kern, a, b, neighbours):
    """Potentials for all atoms from an exact solve on every
    ``COARSEN``-th atom, extended by c-transforms.

    They capture the large-scale structure of the optimal plan (which
    clusters exchange mass), so the candidate graph built from them needs
    few repair rounds.
    """
    na = a.shape[0]
    sa = np.ascontiguousarray(a[::COARSEN])
    sb = np.ascontiguousarray(b[::COARSEN])
    _, _, coarse = _solve(kern, sa, sb, neighbours)
    h_src = coarse[:sa.shape[0]]
    pot = np.empty(na + b.shape[0])
    # pot_j = min_i |a_i - b_j|^2 + pot_i, then pot_i = max_j pot_j - |a_i - b_j|^2
    lift = np.sqrt(h_src - h_src.min())
    dist, _ = cKDTree(np.column_stack((sa, lift))).query(np.column_stack((b, np.zeros(b.shape[0]))))
    pot[na:] = dist * dist + h_src.min()
    hb = pot[na:]
    lift = np.sqrt(np.maximum(hb.max() - hb, 0.0))
    dist, _ = cKDTree(np.column_stack((b, lift))).query(np.column_stack((a, np.zeros(na))))
    pot[:na] = hb.max() - dist * dist
    return pot


def _dual_value(pot, na):
    return float(pot[na:].mean() - pot[:na].mean())


def _solve(kern, a, b, neighbours):
    na, nb = a.shape[0], b.shape[0]
    complete = na * nb <= DENSE_LIMIT
    pot = _affine_seed(a, b)
    if not complete and min(na, nb) >= COARSEN * COARSEN_MIN:
        # Both seeds are dual feasible; keep the one with the larger dual value.
        coarse = _coarse_potentials(kern, a, b, neighbours)
        if _dual_value(coarse, na) > _dual_value(pot, na):
            pot = coarse
    k_rows, k_cols = _degrees(na, nb, neighbours)
    if complete:
        keys = np.arange(na * nb, dtype=np.int64)
    else:
        keys = np.union1d(
            _lifted_neighbours(a, b, pot, np.arange(na), k_rows, np.arange(nb), k_cols),
            _monotone_keys(a, b))
    st = _State(kern, a, b, keys)
    st.restart(pot)
    if complete:
        return st.graph, st.flow, pot

    lo = np.minimum(a.min(axis=0), b.min(axis=0))
    hi = np.maximum(a.max(axis=0), b.max(axis=0))
    tol = 1e-12 * max(1.0, float(np.sum((hi - lo) ** 2)))
    limit = max(SCAN_LIMIT * (na + nb), 100_000)
    for _ in range(MAX_ROUNDS):
        rows, cols, _, _ = kern.scan_violations(a, b, pot, tol, limit)
        if rows.size == 0:
            break
        # Violated pairs plus fresh neighbours of every atom they touch.
        new = np.union1d(rows * nb + cols, _lifted_neighbours(
            a, b, pot, np.unique(rows), k_rows, np.unique(cols), k_cols))
        st.add(new)
        saved = pot.copy()
        if not st.repair(pot, np.unique(new // nb), tol):
            pot[:] = saved
            st.release(pot, new, tol)
        if st.excess.any():
            st.augment(pot)
    else:
        raise SolverError(f"no optimality certificate after {MAX_ROUNDS} rounds")
    if st.excess.any() or st.deficit.any():  # pragma: no cover
        raise SolverError("flow does not meet the marginals")
    return st.graph, st.flow, pot


def w2_bruteforce(a, b):
    """Reference optimum by enumeration; only for tiny clouds.

    Equal sizes up to 8 enumerate permutations (the vertices of the Birkhoff
    polytope); otherwise ``N_a * N_b <= 12`` enumerates every basic feasible
    solution of the transportation polytope.
    """
    a, b = _check_pair(a, b)
    x, y = a.points, b.points
    na, nb = x.shape[0], y.shape[0]
    cost = ((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2)
    if na == nb and na <= 8:
        perms = np.array(list(itertools.permutations(range(na))), dtype=np.int64)
        totals = cost[np.arange(na), perms].sum(axis=1) / na
        best = int(np.argmin(totals))
        sq = float(totals[best])
        plan = (np.arange(na), perms[best], np.full(na, 1.0 / na))
    elif na * nb <= 12:
        sq, plan = _vertex_enumeration(cost)
    else:
        raise InvalidInputError(f"brute force limited to equal sizes <= 8 or N_a*N_b <= 12, got {na}x{nb}")
    sq = max(sq, 0.0)
    return W2Result(distance=math.sqrt(sq), squared_cost=sq, plan=plan)


def _vertex_enumeration(cost):
    na, nb = cost.shape
    cells = [(i, j) for i in range(na) for j in range(nb)]
    rhs = np.concatenate((np.full(na, 1.0 / na), np.full(nb, 1.0 / nb)))
    best, best_plan = math.inf, None
    for basis in itertools.combinations(range(len(cells)), na + nb - 1):
        mat = np.zeros((na + nb, len(basis)))
        for col, c in enumerate(basis):
            i, j = cells[c]
            mat[i, col] = 1.0
            mat[na + j, col] = 1.0
        if np.linalg.matrix_rank(mat) < len(basis):
            continue
        sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        if np.abs(mat @ sol - rhs).max() > 1e-12 or sol.min() < -1e-12:
            continue
        val = sum(sol[col] * cost[cells[c]] for col, c in enumerate(basis))
        if val < best:
            best = val
            keep = sol > 1e-15
            rows = np.array([cells[c][0] for c in basis])[keep]
            cols = np.array([cells[c][1] for c in basis])[keep]
            best_plan = (rows, cols, sol[keep])
    return float(best), best_plan
