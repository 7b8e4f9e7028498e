"""Dense float64 kernels shared by the numeric modules.

Matrices are plain C-ordered (row-major) ``numpy.float64`` arrays.  The
helpers here add the shape checks the rest of the package relies on and a
cyclic Jacobi eigensolver for the small symmetric matrices PCA needs.
"""

import numpy as np


def as_matrix(A, name="matrix"):
    A = np.ascontiguousarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    return A


def matmul(A, B):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"shape mismatch: {A.shape} @ {B.shape}")
    return A @ B


def relu(A):
    return np.maximum(A, 0.0)


def rowwise_softmax(A):
    A = as_matrix(A)
    shifted = A - A.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sym_eig(S, max_sweeps=100):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues in descending
    order and eigenvectors as orthonormal columns.

    Raises ValueError when ``S`` is not square or deviates from symmetry by
    more than ``1e-9 * max(1, max|S|)``.
    """
    S = as_matrix(S, "S")
    n, m = S.shape
    if n != m:
        raise ValueError(f"sym_eig needs a square matrix, got {S.shape}")
    scale = max(1.0, float(np.max(np.abs(S)))) if S.size else 1.0
    asym = float(np.max(np.abs(S - S.T))) if S.size else 0.0
    if asym > 1e-9 * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")

    A = 0.5 * (S + S.T)
    V = np.eye(n)
    floor = 1e-20 * np.sqrt(np.sum(A * A))
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                # off-diagonal entry below the resolution of the diagonal
                g = 100.0 * abs(apq)
                if abs(apq) <= floor or (
                    abs(A[p, p]) + g == abs(A[p, p]) and abs(A[q, q]) + g == abs(A[q, q])
                ):
                    A[p, q] = A[q, p] = 0.0
                    continue
                rotated = True
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J applied to rows/cols p and q
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise RuntimeError("Jacobi iteration did not converge")

    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], np.ascontiguousarray(V[:, order])
