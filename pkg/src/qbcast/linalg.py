"""Dense Hermitian matrix kernel.

Every spectral routine symmetrizes its input as (m + m^H)/2 first. Supports
are determined with a tolerance relative to the largest eigenvalue magnitude.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, NegativeEigenvalue, NonFinite, NonHermitian

SUPPORT_TOL = 1e-10
HERMITIAN_TOL = 1e-8
PSD_TOL = 1e-8


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues sorted descending with matching eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m):
    """Return ``m`` as a square complex array, checking finiteness."""
    a = np.asarray(getattr(m, "matrix", m), dtype=complex)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("matrix has NaN or Inf entries")
    return a


def hermitian_part(m, check=True):
    a = as_matrix(m)
    if check and a.size:
        asym = np.max(np.abs(a - a.conj().T))
        scale = max(1.0, np.max(np.abs(a)))
        if asym > HERMITIAN_TOL * scale:
            raise NonHermitian(f"asymmetry {asym:.3e} exceeds {HERMITIAN_TOL:g}")
    return 0.5 * (a + a.conj().T)


def eig_hermitian(m):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending."""
    h = hermitian_part(m)
    w, v = np.linalg.eigh(h)
    return Spectrum(w[::-1].copy(), v[:, ::-1].copy())


def eigvalsh(m):
    return np.linalg.eigvalsh(hermitian_part(m))


def support_mask(w, support_tol=SUPPORT_TOL):
    """Boolean mask of eigenvalues counted as nonzero."""
    if w.size == 0:
        return np.zeros(0, dtype=bool)
    scale = np.max(np.abs(w))
    if scale == 0:
        return np.zeros(w.shape, dtype=bool)
    return w > support_tol * scale


def check_psd(m, tol=PSD_TOL):
    w = eigvalsh(m)
    if w.size and w[0] < -tol:
        raise NegativeEigenvalue(f"minimum eigenvalue {w[0]:.3e} below -{tol:g}")
    return w


def mat_fn_on_support(m, f, support_tol=SUPPORT_TOL):
    """Apply ``f`` to the eigenvalues of PSD ``m`` on its support.

    Eigenvalues at or below ``support_tol`` times the largest one are mapped
    to zero, so ``f=lambda x: 1/x`` gives the Moore-Penrose pseudo-inverse.
    """
    sp = eig_hermitian(m)
    w, v = sp.eigenvalues, sp.eigenvectors
    if w.size and w[-1] < -PSD_TOL * max(1.0, abs(w[0])):
        raise NegativeEigenvalue(f"minimum eigenvalue {w[-1]:.3e} below -{PSD_TOL:g}")
    keep = support_mask(w, support_tol)
    fw = np.zeros_like(w)
    fw[keep] = f(w[keep])
    return (v * fw) @ v.conj().T


def sqrtm_psd(m):
    return mat_fn_on_support(m, np.sqrt)


def inv_sqrt_on_support(m):
    return mat_fn_on_support(m, lambda x: 1.0 / np.sqrt(x))


def pinv_psd(m):
    return mat_fn_on_support(m, lambda x: 1.0 / x)


def log2_on_support(m):
    return mat_fn_on_support(m, np.log2)


def support_projector(m, support_tol=SUPPORT_TOL):
    return mat_fn_on_support(m, np.ones_like, support_tol)


def kron(*ms):
    out = np.ones((1, 1), dtype=complex)
    for m in ms:
        out = np.kron(out, np.asarray(getattr(m, "matrix", m), dtype=complex))
    return out


def partial_trace(m, dims, keep):
    """Trace out every subsystem of ``m`` not listed in ``keep``.

    Parameters
    ----------
    m : array_like
        Square matrix on the tensor product of ``dims``.
    dims : sequence of int
        Subsystem dimensions.
    keep : iterable of int
        Indices of subsystems to keep, output ordered as in ``dims``.
    """
    a = as_matrix(m)
    dims = [int(d) for d in dims]
    n = int(np.prod(dims)) if dims else 1
    if a.shape[0] != n:
        raise DimMismatch(f"dims {dims} multiply to {n}, matrix is {a.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimMismatch(f"keep indices {keep} out of range for {len(dims)} systems")
    drop = [i for i in range(len(dims)) if i not in keep]
    k = len(dims)
    t = a.reshape(dims + dims)
    perm = keep + drop
    t = t.transpose(perm + [p + k for p in perm])
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dd = int(np.prod([dims[i] for i in drop])) if drop else 1
    t = t.reshape(dk, dd, dk, dd)
    return np.einsum("ajbj->ab", t)


def permute_systems(m, dims, order):
    """Reorder tensor factors: output system i is input system ``order[i]``."""
    a = as_matrix(m)
    dims = list(dims)
    k = len(dims)
    t = a.reshape(dims + dims).transpose(list(order) + [o + k for o in order])
    n = a.shape[0]
    return t.reshape(n, n)


def trace_norm_hermitian(m):
    return float(np.sum(np.abs(eigvalsh(m))))


def random_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_density(d, rng, rank=None):
    """Random density matrix from the induced (Hilbert-Schmidt) measure."""
    r = d if rank is None else rank
    g = rng.standard_normal((d, r)) + 1j * rng.standard_normal((d, r))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_pure(d, rng):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    v /= np.linalg.norm(v)
    return np.outer(v, v.conj())


def random_diagonal_density(d, rng, alpha=1.0):
    p = rng.dirichlet(np.full(d, alpha))
    return np.diag(p).astype(complex)


def random_kraus(d_in, d_out, rng, n_ops=None):
    """Kraus operators of a random channel from a Haar isometry."""
    k = n_ops or d_in * d_out
    z = rng.standard_normal((d_out * k, d_in)) + 1j * rng.standard_normal((d_out * k, d_in))
    q, _ = np.linalg.qr(z)
    return [q[i * d_out:(i + 1) * d_out, :] for i in range(k)]
