"""Exact active-set refinement of the unregularized LET problem.

The discrete problem

    min_{pi >= 0}  sum_i a_i F(p_i/a_i) + sum_j b_j F(q_j/b_j) + <C, pi>,
    p = pi 1, q = pi^T 1,

has convex separable node costs and linear edge costs, so an optimal coupling
supported on a forest of the bipartite graph always exists. On a fixed forest
the stationarity conditions phi_i + psi_j = C_ij, p_i = a_i exp(-phi_i),
q_j = b_j exp(-psi_j) determine the potentials up to one shift per tree, and
mass balance fixes that shift in closed form. The loop below is a primal
active-set method over forests: step towards the forest optimum (dropping the
first edge whose flow hits zero), then add the most violated dual constraint,
pivoting flow around a cycle when the new edge closes one.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import spsolve


def _grouped_logsumexp(values, labels, ngroups):
    """log-sum-exp of ``values`` within each label; empty groups give -inf."""
    top = np.full(ngroups, -np.inf)
    np.maximum.at(top, labels, values)
    safe = np.where(np.isfinite(top), top, 0.0)
    sums = np.bincount(labels, weights=np.exp(values - safe[labels]), minlength=ngroups)
    with np.errstate(divide="ignore"):
        return np.log(sums) + safe


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, u):
        parent = self.parent
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    def union(self, u, v) -> bool:
        ru, rv = self.find(u), self.find(v)
        if ru == rv:
            return False
        self.parent[ru] = rv
        return True


def spanning_forest(n0, n1, rows, cols, order=None):
    """Kruskal-style forest: keep candidate edges in ``order`` unless they close a cycle."""
    uf = _UnionFind(n0 + n1)
    idx = range(len(rows)) if order is None else order
    keep = []
    for e in idx:
        if uf.union(int(rows[e]), n0 + int(cols[e])):
            keep.append(e)
    return np.asarray(keep, dtype=int)


class _Forest:
    """Stationary solution of the LET problem restricted to a forest."""

    def __init__(self, C, a, b, rows, cols):
        n0, n1 = a.size, b.size
        n = n0 + n1
        m = rows.size
        self.n0, self.n1 = n0, n1
        u = rows
        v = n0 + cols
        adj = sparse.coo_matrix((np.ones(m), (u, v)), shape=(n, n))
        adj = (adj + adj.T).tocsr()
        ncomp, labels = csgraph.connected_components(adj, directed=False)
        _, roots = np.unique(labels, return_index=True)
        self.labels = labels
        self.adj = adj
        self.ncomp = ncomp
        self.roots = roots

        edge_cost = C[rows, cols]
        # potentials theta: theta_i = phi_i for sources, theta_j = -psi_j for targets
        eq_rows = np.concatenate([np.arange(m), np.arange(m), m + np.arange(ncomp)])
        eq_cols = np.concatenate([u, v, roots])
        eq_vals = np.concatenate([np.ones(m), -np.ones(m), np.ones(ncomp)])
        A = sparse.csc_matrix((eq_vals, (eq_rows, eq_cols)), shape=(m + ncomp, n))
        rhs = np.concatenate([edge_cost, np.zeros(ncomp)])
        theta = np.atleast_1d(spsolve(A, rhs)) if n > 0 else np.zeros(0)

        lab0, lab1 = labels[:n0], labels[n0:]
        with np.errstate(divide="ignore"):
            la = _grouped_logsumexp(np.log(a) - theta[:n0], lab0, ncomp)
            lb = _grouped_logsumexp(np.log(b) + theta[n0:], lab1, ncomp)
        kappa = 0.5 * (la - lb)
        degree = np.diff(adj.indptr)
        isolated = degree == 0
        phi = theta[:n0] + kappa[lab0]
        psi = -theta[n0:] - kappa[lab1]
        phi[isolated[:n0]] = np.inf
        psi[isolated[n0:]] = np.inf
        self.phi, self.psi = phi, psi
        self.p = a * np.exp(-phi)
        self.q = b * np.exp(-psi)

        # flows: node balance equations, one redundant row per tree removed
        supply = np.concatenate([self.p, self.q])
        keep_node = np.ones(n, dtype=bool)
        keep_node[roots] = False
        new_index = np.cumsum(keep_node) - 1
        fr = np.concatenate([u, v])
        fc = np.concatenate([np.arange(m), np.arange(m)])
        sel = keep_node[fr]
        B = sparse.csc_matrix((np.ones(sel.sum()), (new_index[fr[sel]], fc[sel])),
                              shape=(int(keep_node.sum()), m))
        if m > 0:
            self.flow = np.atleast_1d(spsolve(B, supply[keep_node]))
        else:
            self.flow = np.zeros(0)

    def tree_path(self, s, t):
        """Node path from s to t inside their common tree."""
        _, pred = csgraph.breadth_first_order(self.adj, s, directed=False,
                                              return_predecessors=True)
        path = [t]
        while path[-1] != s:
            nxt = pred[path[-1]]
            if nxt < 0:
                raise RuntimeError("nodes are not in the same tree")
            path.append(nxt)
        return path[::-1]


def _price(C, finite, phi, psi, tol, cursor, block):
    """Block pricing: scan row blocks from ``cursor`` for a violated dual constraint.

    Returns ``(i, j, next_cursor)`` for the most violated entry of the first
    violating block, or None when every reduced cost is >= -tol.
    """
    n0 = C.shape[0]
    nblocks = -(-n0 // block)
    for step in range(nblocks):
        lo = ((cursor // block + step) % nblocks) * block
        hi = min(lo + block, n0)
        with np.errstate(invalid="ignore"):
            red = C[lo:hi] - phi[lo:hi, None] - psi[None, :]
        red = np.where(finite[lo:hi] & ~np.isnan(red), red, np.inf)
        k = int(np.argmin(red))
        ii, jj = divmod(k, C.shape[1])
        if red[ii, jj] < -tol:
            return lo + ii, jj, lo
    return None


def refine(C, a, b, rows, cols, flow, tol=1e-11, max_pivots=None):
    """Run the active-set loop from a feasible forest.

    Parameters
    ----------
    C : (n0, n1) array
        Cost with ``inf`` on forbidden pairs.
    a, b : arrays
        Source and target masses.
    rows, cols, flow : arrays
        Initial forest edges and nonnegative flows on them.
    tol : float
        Dual feasibility tolerance on reduced costs.

    Returns
    -------
    rows, cols, flow, phi, psi, certified, pivots
    """
    n0, n1 = a.size, b.size
    finite = np.isfinite(C)
    if max_pivots is None:
        max_pivots = 50 * (n0 + n1) + 100
    rows = np.asarray(rows, dtype=int).copy()
    cols = np.asarray(cols, dtype=int).copy()
    flow = np.maximum(np.asarray(flow, dtype=float), 0.0)
    pivots = 0
    cursor = 0
    block = max(1, min(n0, 200_000 // max(n1, 1)))
    certified = False
    forest = None
    while pivots <= max_pivots:
        forest = _Forest(C, a, b, rows, cols)
        star = forest.flow
        if np.any(star < 0):
            down = star < 0
            ratios = flow[down] / (flow[down] - star[down])
            alpha = ratios.min()
            flow = flow + alpha * (star - flow)
            hit = np.nonzero(down)[0][np.argmin(ratios)]
            flow[hit] = 0.0
            keep = flow > 1e-300
            rows, cols, flow = rows[keep], cols[keep], flow[keep]
            pivots += 1
            continue
        flow = star
        zero = flow <= 0.0
        if zero.any():
            rows, cols, flow = rows[~zero], cols[~zero], flow[~zero]
            pivots += 1
            continue
        found = _price(C, finite, forest.phi, forest.psi, tol, cursor, block)
        if found is None:
            certified = True
            break
        i, j, cursor = found
        pivots += 1
        if forest.labels[i] != forest.labels[n0 + j] or not np.isfinite(forest.phi[i] + forest.psi[j]):
            rows = np.append(rows, i)
            cols = np.append(cols, j)
            flow = np.append(flow, 0.0)
            continue
        # close a cycle: new edge +delta, tree path edges alternate -delta, +delta
        path = forest.tree_path(n0 + j, i)
        edge_id = {(int(r), int(c)): e for e, (r, c) in enumerate(zip(rows, cols))}
        minus, plus = [], []
        for m_, (x, y) in enumerate(zip(path[:-1], path[1:])):
            key = (x, y - n0) if x < n0 else (y, x - n0)
            (minus if m_ % 2 == 0 else plus).append(edge_id[key])
        minus = np.asarray(minus, dtype=int)
        plus = np.asarray(plus, dtype=int)
        leave = minus[np.argmin(flow[minus])]
        delta = flow[leave]
        flow[minus] -= delta
        flow[plus] += delta
        flow[leave] = 0.0
        keep = np.ones(rows.size, dtype=bool)
        keep[leave] = False
        rows = np.append(rows[keep], i)
        cols = np.append(cols[keep], j)
        flow = np.append(flow[keep], delta)
    phi = forest.phi if forest is not None else np.full(n0, np.inf)
    psi = forest.psi if forest is not None else np.full(n1, np.inf)
    return rows, cols, flow, phi, psi, certified, pivots
