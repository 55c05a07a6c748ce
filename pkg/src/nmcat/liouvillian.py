"""Model parameters, Liouvillian assembly, symmetry blocks, steady states,
and the ordered biorthonormal eigenspectrum.

Vectorization is column-stacking: ``vec(X)[a + D b] = X[a, b]``, so
``vec(A X B) = (B^T kron A) vec(X)`` and

    L = -i (I kron H  -  H^T kron I)
        + sum_c gamma_c [ conj(O_c) kron O_c
                          - 1/2 I kron O_c^+ O_c
                          - 1/2 (O_c^+ O_c)^T kron I ].

Symmetry structure: every term conserves the Fock-level difference
``(a - b) mod n`` (weak Z_n symmetry), giving n independent blocks.  With
gamma1 = 0 and p = gcd(n, m) > 1, the residues ``a mod p`` and ``b mod p``
are conserved separately (strong symmetry), giving p^2 blocks; the p steady
states live in the diagonal blocks B_{mu,mu}.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from math import gcd

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fock
from .errors import SolverFailure

#: blocks up to this dimension are eigendecomposed densely
DENSE_BLOCK_DIM = 700


@dataclass(frozen=True)
class ModelParams:
    """Oscillator with n-photon drive and m-photon dissipation.

    Rates are in units of the linear loss rate; the defaults reproduce the
    parameter set used throughout the analysis (gamma1 = 1, gamma_m = 0.2,
    delta = 0.4).
    """

    n: int
    m: int
    eta_n: float
    dim: int
    gamma1: float = 1.0
    gamma_m: float = 0.2
    delta: float = 0.4
    theta0: float = 0.0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("drive and dissipation degrees must be >= 1")
        if self.gamma1 < 0 or self.gamma_m <= 0 or self.eta_n < 0:
            raise ValueError("rates must satisfy gamma1 >= 0, gamma_m > 0, eta_n >= 0")
        if self.dim < 2:
            raise ValueError("Fock dimension must be >= 2")

    @property
    def p(self) -> int:
        return gcd(self.n, self.m)

    @property
    def strong_symmetry(self) -> bool:
        return self.gamma1 == 0.0 and self.p > 1

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


def vec(mat: np.ndarray) -> np.ndarray:
    """Column-stacked vectorization."""
    return np.asarray(mat).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    return np.asarray(v).reshape((dim, dim), order="F")


def hamiltonian(params: ModelParams) -> np.ndarray:
    """H = delta n + i eta (a^n e^{i n theta0} - (a^+)^n e^{-i n theta0})."""
    a = fock.annihilation(params.dim)
    an = np.linalg.matrix_power(a, params.n)
    drive = 1j * params.eta_n * (
        an * np.exp(1j * params.n * params.theta0)
        - an.conj().T * np.exp(-1j * params.n * params.theta0)
    )
    return params.delta * fock.number_op(params.dim) + drive


def dissipator(jump: np.ndarray) -> sp.csr_matrix:
    """Vectorized D[O] = O . O^+ - 1/2 {O^+ O, .}."""
    O = sp.csr_matrix(jump)
    if O.shape[0] != O.shape[1]:
        raise ValueError("jump operator must be square")
    OdO = (O.conj().T @ O).tocsr()
    I = sp.identity(O.shape[0], format="csr", dtype=complex)
    return (
        sp.kron(O.conj(), O)
        - 0.5 * sp.kron(I, OdO)
        - 0.5 * sp.kron(OdO.T, I)
    ).tocsr()


def build_liouvillian(params: ModelParams) -> sp.csr_matrix:
    """Full vectorized generator of the master equation (sparse)."""
    H = sp.csr_matrix(hamiltonian(params))
    I = sp.identity(params.dim, format="csr", dtype=complex)
    L = -1j * (sp.kron(I, H) - sp.kron(H.T, I))
    a = fock.annihilation(params.dim)
    if params.gamma1 > 0:
        L = L + params.gamma1 * dissipator(a)
    L = L + params.gamma_m * dissipator(np.linalg.matrix_power(a, params.m))
    return L.tocsr()


# ---------------------------------------------------------------------------
# symmetry blocks

def difference_sectors(dim: int, n: int) -> np.ndarray:
    """(a - b) mod n for every column-stacked index."""
    idx = np.arange(dim * dim)
    return ((idx % dim) - (idx // dim)) % n


def residue_pairs(dim: int, p: int) -> tuple[np.ndarray, np.ndarray]:
    """(a mod p, b mod p) for every column-stacked index."""
    idx = np.arange(dim * dim)
    return (idx % dim) % p, (idx // dim) % p


def extract_block(L: sp.spmatrix, idx: np.ndarray) -> sp.csr_matrix:
    return L.tocsr()[idx, :].tocsc()[:, idx].tocsr()


def block_decompose(params: ModelParams, L: sp.spmatrix | None = None):
    """Split the Liouvillian into symmetry blocks.

    Returns a list of ``(label, indices, block)``; labels are the weak-sector
    integer mu = (a - b) mod n, or (mu, nu) residue pairs mod p in the strong
    regime.
    """
    if L is None:
        L = build_liouvillian(params)
    dim = params.dim
    out = []
    if params.strong_symmetry:
        p = params.p
        ra, rb = residue_pairs(dim, p)
        for mu in range(p):
            for nu in range(p):
                idx = np.where((ra == mu) & (rb == nu))[0]
                out.append(((mu, nu), idx, extract_block(L, idx)))
    else:
        d = difference_sectors(dim, params.n)
        for mu in range(params.n):
            idx = np.where(d == mu)[0]
            out.append((mu, idx, extract_block(L, idx)))
    return out


def _diag_positions(idx: np.ndarray, dim: int) -> np.ndarray:
    """Positions within a block index list that sit on the matrix diagonal."""
    return np.where(idx % dim == idx // dim)[0]


# ---------------------------------------------------------------------------
# steady states

def psd_project(rho: np.ndarray, floor: float = -1e-8) -> np.ndarray:
    """Rotate away the global eigenvector phase, symmetrize, clip spurious
    negative eigenvalues, renormalize.

    Numerical null vectors carry an arbitrary complex phase; symmetrizing
    without removing it first can cancel the state entirely (e.g. phase i
    makes rho + rho^+ vanish), so the trace phase is divided out up front.
    """
    t = np.trace(rho)
    if abs(t) < 1e-10 * max(1.0, np.max(np.abs(rho))):
        raise SolverFailure("state candidate is traceless; cannot normalize")
    rho = rho * (np.conj(t) / abs(t))
    rho = 0.5 * (rho + rho.conj().T)
    w, V = np.linalg.eigh(rho)
    scale = max(1.0, w.max())
    if w.min() < floor * scale:
        warnings.warn(
            f"steady-state candidate has eigenvalue {w.min():.2e}; "
            "PSD projection is not a small correction",
            stacklevel=2,
        )
    w = np.clip(w, 0.0, None)
    rho = (V * w) @ V.conj().T
    return rho / np.trace(rho).real


def _solve_block_null(block: sp.csr_matrix, idx: np.ndarray, dim: int) -> np.ndarray:
    """Null vector of a diagonal symmetry block, normalized to unit trace.

    Replaces the first row with the trace functional, which removes the
    known null direction and pins Tr rho = 1.
    """
    diag_pos = _diag_positions(idx, dim)
    B = block.tolil(copy=True)
    B[0, :] = 0.0
    B[0, diag_pos] = 1.0
    rhs = np.zeros(block.shape[0], dtype=complex)
    rhs[0] = 1.0
    v = spla.spsolve(B.tocsr(), rhs)
    rho = np.zeros((dim, dim), complex)
    rho[idx % dim, idx // dim] = v
    return rho


def _zero_cluster_size(block: sp.csr_matrix, tol_abs: float = 1e-9) -> int:
    """Number of eigenvalues in the zero cluster of a diagonal block.

    Cluster rule: |Re lambda| < max(tol_abs, 1e-3 |Re lambda_next|).
    """
    k = min(4, block.shape[0] - 2)
    v0 = np.full(block.shape[0], 1.0 / np.sqrt(block.shape[0]))
    w = spla.eigs(block, k=k, sigma=1e-6, return_eigenvectors=False, v0=v0)
    w = w[np.argsort(-w.real)]
    size = 0
    for j in range(len(w) - 1):
        thresh = max(tol_abs, 1e-3 * abs(w[j + 1].real))
        if abs(w[j].real) < thresh:
            size += 1
        else:
            break
    return max(size, 1)


def steady_states(params: ModelParams, *, check: bool = True,
                  residual_tol: float = 1e-9) -> list[np.ndarray]:
    """All steady states, one per zero eigenvalue.

    Weak symmetry: the single state in the mu = 0 difference block.  Strong
    symmetry: one state per diagonal residue block B_{mu,mu}, each with a
    definite Z_p eigenvalue.
    """
    L = build_liouvillian(params)
    dim = params.dim
    states = []
    if params.strong_symmetry:
        p = params.p
        ra, rb = residue_pairs(dim, p)
        for mu in range(p):
            idx = np.where((ra == mu) & (rb == mu))[0]
            block = extract_block(L, idx)
            if check and _zero_cluster_size(block) != 1:
                raise SolverFailure(
                    f"zero cluster in block B_{mu}{mu} is not a single mode"
                )
            states.append(psd_project(_solve_block_null(block, idx, dim)))
    else:
        d = difference_sectors(dim, params.n)
        idx = np.where(d == 0)[0]
        block = extract_block(L, idx)
        if check and _zero_cluster_size(block) != 1:
            raise SolverFailure("zero cluster in the mu = 0 block is degenerate")
        states.append(psd_project(_solve_block_null(block, idx, dim)))
    for rho in states:
        res = np.max(np.abs(L @ vec(rho)))
        if res > residual_tol * max(1.0, _liouv_scale(L)):
            raise SolverFailure(f"steady-state residual {res:.2e} too large")
    return states


def _liouv_scale(L: sp.spmatrix) -> float:
    return float(np.max(np.abs(L.data))) if L.nnz else 1.0


# ---------------------------------------------------------------------------
# spectrum

@dataclass
class Spectrum:
    """First k eigentriples of the Liouvillian, ordered by descending real
    part, with Tr[L_j^+ R_k] = delta_jk.

    ``sectors[j]`` records the symmetry block each mode came from (the weak
    difference sector, or a residue pair in the strong regime).
    """

    dim: int
    eigenvalues: np.ndarray          # (k,) complex
    right_modes: np.ndarray          # (k, D, D)
    left_modes: np.ndarray           # (k, D, D)
    sectors: list

    @property
    def lifetimes(self) -> np.ndarray:
        """tau_j = -1 / Re lambda_j (inf for the steady state)."""
        re = self.eigenvalues.real
        with np.errstate(divide="ignore"):
            return np.where(re < 0, -1.0 / re, np.inf)

    @property
    def frequencies(self) -> np.ndarray:
        return self.eigenvalues.imag

    def coefficient(self, j: int, rho0: np.ndarray) -> complex:
        """Expansion coefficient Tr[L_j^+ rho0]."""
        return complex(np.vdot(vec(self.left_modes[j]), vec(rho0)))


def _eig_block(block: sp.csr_matrix, k: int, is_diag_block: bool):
    """Right and left eigenpairs of one block, slowest k modes."""
    nb = block.shape[0]
    if nb <= DENSE_BLOCK_DIM or k >= nb - 2:
        Bd = block.toarray()
        w, VL, VR = sla.eig(Bd, left=True, right=True)
        order = np.argsort(-w.real)[: min(k, nb)]
        return w[order], VR[:, order], VL[:, order]
    sigma = 1e-6 if is_diag_block else 0.0
    v0 = np.full(nb, 1.0 / np.sqrt(nb))  # deterministic ARPACK start vector
    try:
        w, VR = spla.eigs(block, k=k, sigma=sigma, v0=v0)
        wl, VL = spla.eigs(block.conj().T, k=k, sigma=np.conj(sigma), v0=v0)
    except spla.ArpackNoConvergence:
        Bd = block.toarray()
        w, VL, VR = sla.eig(Bd, left=True, right=True)
        order = np.argsort(-w.real)[: min(k, nb)]
        return w[order], VR[:, order], VL[:, order]
    # pair left vectors with right ones by biorthogonal overlap (the true
    # partner dominates), then re-biorthonormalize exactly across the
    # computed subspace; this absorbs near-degenerate clusters where the
    # one-to-one pairing is ambiguous
    order = np.argsort(-w.real)
    w, VR = w[order], VR[:, order]
    M = np.abs(VL.conj().T @ VR)
    VL_m = np.zeros_like(VR)
    used = set()
    for j in range(len(w)):
        ranked = [c for c in np.argsort(-M[:, j]) if c not in used]
        if not ranked:
            raise SolverFailure("ran out of left eigenvectors while pairing")
        VL_m[:, j] = VL[:, ranked[0]]
        used.add(ranked[0])
    G = VL_m.conj().T @ VR
    if np.linalg.cond(G) > 1e8:
        raise SolverFailure(
            f"left/right overlap matrix is ill-conditioned "
            f"(cond = {np.linalg.cond(G):.2e})"
        )
    VL_m = VL_m @ np.linalg.inv(G).conj().T
    return w, VR, VL_m


def _embed(vecs: np.ndarray, idx: np.ndarray, dim: int) -> np.ndarray:
    out = np.zeros((vecs.shape[1], dim, dim), complex)
    rows, cols = idx % dim, idx // dim
    for j in range(vecs.shape[1]):
        out[j][rows, cols] = vecs[:, j]
    return out


def spectrum(params: ModelParams, k: int, *, use_blocks: bool = True,
              rho_ss: np.ndarray | None = None) -> Spectrum:
    """Ordered biorthonormal eigentriples (lambda_j, R_j, L_j), j = 1..k.

    The steady-state mode is fixed to R_1 = rho_ss (unit trace), L_1 = I,
    so Tr[L_1^+ R_1] = 1 exactly.  Remaining right modes carry unit
    Frobenius norm with a deterministic phase; left modes are rescaled so
    that Tr[L_j^+ R_j] = 1.
    """
    if k > params.dim ** 2:
        raise ValueError("cannot request more modes than dim^2")
    L = build_liouvillian(params)
    dim = params.dim
    entries = []  # (lam, R, Lmat, sector)
    if use_blocks:
        for label, idx, block in block_decompose(params, L):
            is_diag = (label == 0) or (
                isinstance(label, tuple) and label[0] == label[1]
            )
            kb = min(k, block.shape[0])
            w, VR, VL = _eig_block(block, kb, is_diag)
            R = _embed(VR, idx, dim)
            Lm = _embed(VL, idx, dim)
            entries.extend(
                (w[j], R[j], Lm[j], label) for j in range(len(w))
            )
    else:
        w, VL, VR = sla.eig(L.toarray(), left=True, right=True)
        order = np.argsort(-w.real)
        w, VL, VR = w[order], VL[:, order], VR[:, order]
        all_idx = np.arange(dim * dim)
        R = _embed(VR, all_idx, dim)
        Lm = _embed(VL, all_idx, dim)
        entries = [(w[j], R[j], Lm[j], None) for j in range(len(w))]

    entries.sort(key=lambda e: (-e[0].real, abs(e[0].imag), -e[0].imag))
    entries = entries[:k]

    lams = np.array([e[0] for e in entries])
    R = np.array([e[1] for e in entries])
    Lm = np.array([e[2] for e in entries])
    sectors = [e[3] for e in entries]

    scale = max(1.0, _liouv_scale(L))
    if abs(lams[0]) > 1e-8 * scale:
        raise SolverFailure(f"largest eigenvalue {lams[0]} is not ~0")
    n_zero = params.p if params.strong_symmetry else 1
    for j in range(n_zero):
        # physical zero modes: R = state (unit trace), L = conserved quantity
        if abs(lams[j].real) > 1e-8 * scale:
            raise SolverFailure(
                f"expected {n_zero} zero modes, eigenvalue {j} is {lams[j]}"
            )
        lams[j] = 0.0
        if params.strong_symmetry and isinstance(sectors[j], tuple):
            mu = sectors[j][0]
            R[j] = psd_project(R[j])
            Lm[j] = fock.sector_projector(mu, params.p, dim)
        else:
            R[j] = psd_project(R[j]) if rho_ss is None else rho_ss
            Lm[j] = np.eye(dim)

    for j in range(n_zero, len(lams)):
        # conjugate-pair coherence: tie the lambda* partner to the dagger
        partner = None
        if lams[j].imag < -1e-10:
            for i in range(n_zero, j):
                if abs(lams[i] - np.conj(lams[j])) < 1e-8 * max(1.0, abs(lams[j])):
                    partner = i
                    break
        if partner is not None:
            R[j] = R[partner].conj().T
            Lm[j] = Lm[partner].conj().T
            continue
        nrm = np.linalg.norm(R[j])
        R[j] = R[j] / nrm
        flat = R[j].ravel()
        pivot = flat[np.argmax(np.abs(flat))]
        R[j] = R[j] * (abs(pivot) / pivot)
        c = np.vdot(vec(Lm[j]), vec(R[j]))
        if abs(c) < 1e-12:
            raise SolverFailure(f"mode {j}: left/right overlap is singular")
        Lm[j] = Lm[j] / np.conj(c)

    return Spectrum(dim=dim, eigenvalues=lams, right_modes=R,
                    left_modes=Lm, sectors=sectors)


def zero_cluster(spec: Spectrum, tol_abs: float = 1e-9) -> int:
    """Size of the zero-eigenvalue cluster in an ordered spectrum."""
    lams = spec.eigenvalues
    size = 1
    for j in range(1, len(lams) - 1):
        thresh = max(tol_abs, 1e-3 * abs(lams[j + 1].real))
        if abs(lams[j].real) < thresh:
            size += 1
        else:
            break
    return size
