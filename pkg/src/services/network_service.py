"""
Network service for the linearized radial network model.

Builds the tree layout and the matrices M, X, B, R, D and X̃ from a
RadialNetwork, and evaluates bus voltages either through the linear map
v = Xq + v̄ or through a nonlinear backward/forward sweep.

All functions are pure; results are immutable and may be shared between
threads.
"""

import numpy as np
import networkx as nx
import structlog
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse.linalg import eigsh, splu

from src.config.settings import SimulationSettings
from src.models.control import ScalingMode
from src.models.network import NetworkMatrices, RadialNetwork, TreeLayout

logger = structlog.get_logger(__name__)


class NetworkError(Exception):
    """Base exception for network model errors."""

    pass


class TopologyError(NetworkError):
    """Raised when the line set does not form a tree rooted at bus 0."""

    pass


class DimensionError(NetworkError):
    """Raised when a vector does not match the network size."""

    pass


class SweepDivergenceError(NetworkError):
    """Raised when the nonlinear sweep does not reach a fixed point."""

    def __init__(self, message: str, iterations: int, last_delta: float) -> None:
        super().__init__(message)
        self.iterations = iterations
        self.last_delta = last_delta


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def check_length(name: str, vector: NDArray[np.float64], n: int) -> NDArray[np.float64]:
    """
    Ensure a vector has exactly n entries.

    Raises:
        DimensionError: On any other shape
    """
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (n,):
        raise DimensionError(f"{name} has shape {vector.shape}, expected ({n},)")
    return vector


# =============================================================================
# Topology
# =============================================================================


def analyze_topology(net: RadialNetwork) -> TreeLayout:
    """
    Check that the lines form a tree rooted at bus 0 and orient it.

    Args:
        net: Network description

    Returns:
        TreeLayout with parent array, BFS order, depths and root-path matrix

    Raises:
        TopologyError: Parallel lines, a cycle, or buses unreachable from the root
    """
    graph = nx.Graph()
    graph.add_nodes_from(range(net.buses))

    for idx, line in enumerate(net.lines):
        u, v = line.from_bus, line.to_bus
        if graph.has_edge(u, v):
            first = graph.edges[u, v]["line"]
            raise TopologyError(f"Line {idx} ({u}-{v}) duplicates line {first}")
        graph.add_edge(u, v, line=idx)

    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle is not None:
        offending = max(graph.edges[u, v]["line"] for u, v in cycle)
        line = net.lines[offending]
        buses = sorted({u for u, _ in cycle})
        raise TopologyError(
            f"Line {offending} ({line.from_bus}-{line.to_bus}) closes a cycle through buses {buses}"
        )

    reachable = nx.node_connected_component(graph, 0)
    if len(reachable) != net.buses:
        missing = sorted(set(range(net.buses)) - reachable)
        raise TopologyError(f"Buses unreachable from the root: {missing}")

    n = net.n
    parent = np.full(net.buses, -1, dtype=np.int64)
    depth = np.zeros(net.buses, dtype=np.int64)
    line_of_bus = np.full(net.buses, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    r = np.empty(n)
    x = np.empty(n)

    for pos, (u, v) in enumerate(nx.bfs_edges(graph, 0)):
        idx = graph.edges[u, v]["line"]
        parent[v] = u
        depth[v] = depth[u] + 1
        line_of_bus[v] = idx
        order[pos] = v
        r[v - 1] = net.lines[idx].r
        x[v - 1] = net.lines[idx].x

    # Row of bus j = row of its parent plus the line feeding j
    rows: list[int] = []
    cols: list[int] = []
    members: dict[int, list[int]] = {0: []}
    for v in order:
        path = [*members[int(parent[v])], int(v) - 1]
        members[int(v)] = path
        rows.extend([int(v) - 1] * len(path))
        cols.extend(path)
    path_matrix = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n, n), dtype=np.float64
    )

    return TreeLayout(
        parent=_frozen(parent),
        order=_frozen(order),
        depth=_frozen(depth),
        line_of_bus=_frozen(line_of_bus),
        r=_frozen(r),
        x=_frozen(x),
        path=path_matrix,
    )


def incidence_matrix(layout: TreeLayout) -> sparse.csc_matrix:
    """
    Reduced incidence matrix M (root row removed).

    Column j is the line feeding bus j+1: +1 at its parent (unless the parent
    is the root) and −1 at bus j+1.
    """
    n = layout.n
    parents = layout.parent_reduced
    rows = [*range(n)]
    cols = [*range(n)]
    vals = [-1.0] * n
    for j in range(n):
        if parents[j] >= 0:
            rows.append(int(parents[j]))
            cols.append(j)
            vals.append(1.0)
    return sparse.csc_matrix((vals, (rows, cols)), shape=(n, n))


def reactance_matrix_path(layout: TreeLayout) -> NDArray[np.float64]:
    """
    Reactance matrix from shared root paths, in O(N²).

    X[i, j] is the summed reactance of the lines common to the root paths
    of buses i+1 and j+1. Buses are filled in BFS order: a bus inherits its
    parent's row against every earlier bus and adds its own line on the
    diagonal.
    """
    n = layout.n
    parents = layout.parent_reduced
    X = np.zeros((n, n))
    done: list[int] = []
    for bus in layout.order:
        j = int(bus) - 1
        p = int(parents[j])
        if p >= 0:
            X[j, done] = X[p, done]
            X[done, j] = X[p, done]
            X[j, j] = X[p, p] + layout.x[j]
        else:
            X[j, j] = layout.x[j]
        done.append(j)
    return X


def _congruence(m_inv: np.ndarray, weights: NDArray[np.float64]) -> NDArray[np.float64]:
    """(M⁻¹)ᵀ diag(weights) M⁻¹, symmetrized."""
    out = m_inv.T @ (weights[:, None] * m_inv)
    return 0.5 * (out + out.T)


def eigen_extremes(
    xtilde: NDArray[np.float64],
    btilde: sparse.spmatrix,
    settings: SimulationSettings | None = None,
) -> tuple[float, float]:
    """
    Smallest and largest eigenvalues of the scaled reactance matrix.

    Dense symmetric eigendecomposition up to settings.dense_eig_limit buses;
    above that, Lanczos on X̃ for the largest eigenvalue and on the sparse
    inverse D^{-½} B D^{-½} for the smallest.

    Args:
        xtilde: X̃ = D^½ X D^½
        btilde: D^{-½} B D^{-½}, the sparse inverse of X̃
        settings: Numerical settings

    Returns:
        (C, M)
    """
    settings = settings or SimulationSettings()
    n = xtilde.shape[0]
    if n <= settings.dense_eig_limit:
        w = linalg.eigh(xtilde, eigvals_only=True)
        return float(w[0]), float(w[-1])

    m_lip = eigsh(xtilde, k=1, which="LA", tol=settings.eig_tol, return_eigenvectors=False)[0]
    inv_c = eigsh(btilde, k=1, which="LA", tol=settings.eig_tol, return_eigenvectors=False)[0]
    return 1.0 / float(inv_c), float(m_lip)


def build_matrices(
    net: RadialNetwork,
    scaling: ScalingMode = ScalingMode.NEWTON_DIAG,
    settings: SimulationSettings | None = None,
) -> NetworkMatrices:
    """
    Build the linearized network matrices.

    X = (Mᵀ)⁻¹ D_x M⁻¹ via a sparse LU of M, cross-checked against the
    shared-path formula; B = M D_x⁻¹ Mᵀ; R = (Mᵀ)⁻¹ D_r M⁻¹;
    D = diag(X)⁻¹ (or identity); X̃ = D^½ X D^½.

    Args:
        net: Network description
        scaling: Choice of D
        settings: Numerical settings

    Returns:
        NetworkMatrices

    Raises:
        TopologyError: If the lines do not form a tree rooted at bus 0
        NetworkError: If the two reactance constructions disagree
    """
    layout = analyze_topology(net)
    n = layout.n
    M = incidence_matrix(layout)

    m_inv = splu(M).solve(np.eye(n))
    X = _congruence(m_inv, layout.x)
    R = _congruence(m_inv, layout.r)

    X_path = reactance_matrix_path(layout)
    gap = float(np.max(np.abs(X - X_path)) / np.max(np.abs(X_path)))
    if gap > 1e-10:
        raise NetworkError(f"Reactance matrix constructions disagree (relative gap {gap:.3e})")

    B_sparse = (M @ sparse.diags(1.0 / layout.x) @ M.T).tocsr()
    B = B_sparse.toarray()

    if scaling == ScalingMode.NEWTON_DIAG:
        d = 1.0 / np.diag(X)
    else:
        d = np.ones(n)
    sqrt_d = np.sqrt(d)
    xtilde = sqrt_d[:, None] * X * sqrt_d[None, :]
    inv_sqrt_d = sparse.diags(1.0 / sqrt_d)
    btilde = (inv_sqrt_d @ B_sparse @ inv_sqrt_d).tocsr()

    c_min, m_lip = eigen_extremes(xtilde, btilde, settings)

    logger.info(
        "network_matrices_built",
        buses=n,
        scaling=scaling.value,
        c_min=c_min,
        m_lip=m_lip,
        condition=m_lip / c_min,
    )

    return NetworkMatrices(
        incidence=M,
        X=_frozen(X),
        B=_frozen(B),
        R=_frozen(R),
        d=_frozen(d),
        xtilde=_frozen(xtilde),
        c_min=c_min,
        m_lip=m_lip,
        scaling=scaling,
        v0=net.v0,
        layout=layout,
    )


# =============================================================================
# Voltages
# =============================================================================


def linear_voltage(
    mat: NetworkMatrices,
    q: NDArray[np.float64],
    vbar: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Linear voltage map v = Xq + v̄.

    Raises:
        DimensionError: If q or vbar does not have N entries
    """
    q = check_length("q", q, mat.n)
    vbar = check_length("vbar", vbar, mat.n)
    return mat.X @ q + vbar


def nominal_voltage(mat: NetworkMatrices, p: NDArray[np.float64]) -> NDArray[np.float64]:
    """
    Nominal voltage produced by real injections p with q = 0: v0·1 + Rp.

    Raises:
        DimensionError: If p does not have N entries
    """
    p = check_length("p", p, mat.n)
    return mat.v0 + mat.R @ p


def sweep_voltage(
    net: RadialNetwork,
    p: NDArray[np.float64],
    q: NDArray[np.float64],
    layout: TreeLayout | None = None,
    settings: SimulationSettings | None = None,
) -> NDArray[np.float64]:
    """
    Voltage magnitudes from the nonlinear DistFlow equations.

    Backward pass accumulates sending-end line flows including losses,
    forward pass updates squared magnitudes from the root:

        P = Pathᵀ(−p + r∘ℓ),  Q = Pathᵀ(−q + x∘ℓ)
        V² = v0² − Path(2(rP + xQ) − (r² + x²)∘ℓ)
        ℓ = (P² + Q²) / V²_parent

    Iterates until successive magnitudes differ by less than
    settings.sweep_tol in max-norm.

    Args:
        net: Network description
        p: Real power injections (per-unit, generation positive)
        q: Reactive power injections (per-unit)
        layout: Pre-computed layout of net
        settings: Numerical settings

    Returns:
        Voltage magnitudes of buses 1..N

    Raises:
        DimensionError: If p or q does not have N entries
        SweepDivergenceError: On non-convergence or a non-physical voltage
    """
    settings = settings or SimulationSettings()
    layout = layout or analyze_topology(net)
    n = layout.n
    p = check_length("p", p, n)
    q = check_length("q", q, n)

    path = layout.path
    path_t = path.T.tocsr()
    r, x = layout.r, layout.x
    z2 = r**2 + x**2
    parents = layout.parent_reduced
    has_parent = parents >= 0
    v0_sq = net.v0**2

    loss = np.zeros(n)
    v_mag = np.full(n, net.v0)
    delta = np.inf
    for iteration in range(1, settings.sweep_max_iter + 1):
        P = path_t @ (-p + r * loss)
        Q = path_t @ (-q + x * loss)
        v_sq = v0_sq - path @ (2.0 * (r * P + x * Q) - z2 * loss)

        if not np.all(np.isfinite(v_sq)) or np.any(v_sq <= 0):
            raise SweepDivergenceError(
                f"Sweep produced a non-physical voltage at iteration {iteration}",
                iterations=iteration,
                last_delta=delta,
            )

        v_new = np.sqrt(v_sq)
        delta = float(np.max(np.abs(v_new - v_mag)))
        v_mag = v_new

        parent_sq = np.where(has_parent, v_sq[np.maximum(parents, 0)], v0_sq)
        loss = (P**2 + Q**2) / parent_sq

        if delta < settings.sweep_tol:
            logger.debug("sweep_converged", iterations=iteration, delta=delta)
            return v_mag

    raise SweepDivergenceError(
        f"Sweep did not converge in {settings.sweep_max_iter} iterations (last delta {delta:.3e})",
        iterations=settings.sweep_max_iter,
        last_delta=delta,
    )


def chain_network(n: int, r: float, x: float, v0: float = 1.0) -> RadialNetwork:
    """A single feeder 0-1-…-n with identical lines."""
    return RadialNetwork(
        buses=n + 1,
        lines=[{"from": j, "to": j + 1, "r": r, "x": x} for j in range(n)],
        v0=v0,
    )
