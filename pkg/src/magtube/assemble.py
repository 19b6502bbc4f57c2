"""Sparse self-adjoint operators: container, eigensolvers, export format.

All quadratic-form terms are assembled as F* diag(w) F from first-order
difference factors, so Hermiticity is exact by construction.  Covariant
derivatives use link phases (e^{i h a} on the lattice edge), which makes
discrete gauge transforms exact unitary conjugations and preserves the
diamagnetic inequality at the matrix level.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.sparse.linalg import ArpackNoConvergence

from .errors import EigensolverDiverged


@dataclass
class RegimeParams:
    """Scaling regime: cross-section scale eps, field intensity b = eps^-delta.

    delta <= 1 is the supported range; eps*b >> 1 is out of scope.
    An explicit b overrides the eps^-delta coupling (used at eps = 1).
    """

    eps: float = 1.0
    delta: float = 1.0
    b: float | None = None
    K: float | None = None

    def __post_init__(self):
        if self.delta > 1.0 + 1e-12:
            raise ValueError("delta <= 1 required (eps*b >> 1 regime unsupported)")
        if self.b is None:
            self.b = self.eps ** (-self.delta)

    def as_dict(self):
        return {"eps": self.eps, "delta": self.delta, "b": self.b, "K": self.K}


@dataclass
class AssembledOperator:
    """Sparse Hermitian operator plus grid/regime bookkeeping.

    shift is the energy shift already applied to ``matrix`` (e.g.
    -eps^-2 lam1 + K); bc tags the boundary condition per face.
    """

    matrix: sp.spmatrix
    grid: dict
    bc: dict
    shift: float = 0.0
    regime: RegimeParams | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.matrix)

    def hermiticity_defect(self) -> float:
        d = self.matrix - self.matrix.getH()
        scale = max(1.0, abs(self.matrix).max())
        return float(abs(d).max() / scale) if d.nnz else 0.0

    def shifted(self, delta_shift: float) -> "AssembledOperator":
        return AssembledOperator(
            matrix=(self.matrix + delta_shift * sp.eye(self.n, format="csr")).tocsr(),
            grid=self.grid,
            bc=self.bc,
            shift=self.shift + delta_shift,
            regime=self.regime,
            meta=dict(self.meta),
        )


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    ess_threshold: float | None = None

    @property
    def discrete_flags(self) -> np.ndarray:
        if self.ess_threshold is None:
            return np.zeros(len(self.eigenvalues), dtype=bool)
        return self.eigenvalues < self.ess_threshold


def cov_link_matrix(n_cols, idx_l, idx_r, h, phases=None):
    """Covariant forward difference on lattice links.

    With phases: row per link (D u)_link = (-i/h)(e^{i phi} u_right - u_left),
    the first-order factor of (-i d/dx + a)^2 with phi = h * a(midpoint).
    Without phases: the plain forward difference (u_right - u_left)/h.
    Dirichlet endpoints (index -1) contribute zero.
    """
    idx_l = np.asarray(idx_l)
    idx_r = np.asarray(idx_r)
    nlinks = len(idx_l)
    if phases is None:
        coef_r = np.full(nlinks, 1.0 / h)
        coef_l = np.full(nlinks, -1.0 / h)
    else:
        coef_r = (-1j / h) * np.exp(1j * np.asarray(phases))
        coef_l = np.full(nlinks, 1j / h, dtype=complex)
    rows, cols, vals = [], [], []
    for idx, coef in ((idx_r, coef_r), (idx_l, coef_l)):
        sel = idx >= 0
        rows.append(np.nonzero(sel)[0])
        cols.append(idx[sel])
        vals.append(coef[sel])
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nlinks, n_cols),
    )


def form_term(factor: sp.spmatrix, weights=None) -> sp.csr_matrix:
    """F* diag(w) F, exactly Hermitian."""
    if weights is None:
        return (factor.getH() @ factor).tocsr()
    W = sp.diags(np.asarray(weights))
    return (factor.getH() @ (W @ factor)).tocsr()


def dirichlet_second_difference(n_nodes: int, h: float) -> sp.csr_matrix:
    """-d^2/dx^2 on n interior nodes, Dirichlet ends, via D^T D on links."""
    idx = np.arange(-1, n_nodes + 1)
    idx[0] = idx[-1] = -1
    idx_l, idx_r = idx[:-1], idx[1:]
    D = cov_link_matrix(n_nodes, idx_l, idx_r, h)
    return form_term(D)


def lowest_eigenpairs(
    matrix: sp.spmatrix,
    k: int = 1,
    sigma: float | None = 0.0,
    seed: int = 7,
    tol: float = 0.0,
    dense_threshold: int = 3000,
    maxiter: int | None = None,
):
    """k lowest eigenpairs of a Hermitian sparse matrix.

    Shift-invert Lanczos with sparse factorization; dense fallback below
    ``dense_threshold`` unknowns.  Deterministic given the seed.
    """
    n = matrix.shape[0]
    if k >= n:
        raise ValueError("k must be below the matrix dimension")
    if n <= dense_threshold:
        dense = matrix.toarray()
        vals, vecs = np.linalg.eigh(dense)
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        if np.iscomplexobj(matrix):
            v0 = v0 + 1j * rng.standard_normal(n)
        try:
            vals, vecs = sla.eigsh(
                matrix.tocsc(),
                k=k,
                sigma=sigma,
                which="LM",
                v0=v0,
                tol=tol,
                maxiter=maxiter,
            )
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise EigensolverDiverged(
                f"shift-invert Lanczos converged {got}/{k} pairs "
                f"(sigma={sigma}); increase maxiter or adjust the shift",
                residuals=exc.eigenvalues,
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    residuals = np.array(
        [
            np.linalg.norm(matrix @ vecs[:, j] - vals[j] * vecs[:, j])
            for j in range(k)
        ]
    )
    return vals, vecs, residuals


def spectrum_of(op: AssembledOperator, k: int, sigma: float | None = 0.0,
                seed: int = 7, ess_threshold: float | None = None) -> Spectrum:
    vals, vecs, res = lowest_eigenpairs(op.matrix, k=k, sigma=sigma, seed=seed)
    return Spectrum(vals, vecs, res, ess_threshold=ess_threshold)


# -- sparse triplet text export ------------------------------------------------


def save_triplets(op: AssembledOperator, path) -> None:
    """Documented text format: header then one 'i j re im' line per entry.

    Header line: ``rows cols nnz shift`` followed by ``key=value`` regime
    metadata tokens.
    """
    coo = op.matrix.tocoo()
    meta = dict(op.meta)
    if op.regime is not None:
        meta.update(op.regime.as_dict())
    tokens = " ".join(
        f"{k}={v}" for k, v in sorted(meta.items()) if np.isscalar(v) and v is not None
    )
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz} {op.shift:.17g} {tokens}\n")
        data = coo.data.astype(complex)
        for i, j, v in zip(coo.row, coo.col, data):
            f.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def load_triplets(path):
    """Inverse of :func:`save_triplets`; returns (matrix, shift, meta)."""
    with open(path, "r", encoding="utf-8") as f:
        head = f.readline().split()
        rows, cols, nnz = int(head[0]), int(head[1]), int(head[2])
        shift = float(head[3])
        meta = {}
        for tok in head[4:]:
            k, _, v = tok.partition("=")
            meta[k] = v
        I = np.empty(nnz, dtype=np.int64)
        J = np.empty(nnz, dtype=np.int64)
        V = np.empty(nnz, dtype=complex)
        for m in range(nnz):
            parts = f.readline().split()
            I[m], J[m] = int(parts[0]), int(parts[1])
            V[m] = float(parts[2]) + 1j * float(parts[3])
    if np.abs(V.imag).max(initial=0.0) == 0.0:
        V = V.real
    return sp.csr_matrix((V, (I, J)), shape=(rows, cols)), shift, meta
