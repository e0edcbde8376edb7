"""
KESTREL Dense Oracle
Brute-force dense references used as ground truth for the optimized kernels.
Single-threaded, no shared code with kestrel_mttkrp.
"""

import numpy as np

from kestrel_config import get_logger
from kestrel_errors import CapacityError, DimensionMismatchError, ModeError, ZeroNormError
from kestrel_ktensor import check_compatible

logger = get_logger(__name__, 'ORACLE')

DENSE_CAP_DEFAULT = 10 ** 6


class DenseTensor:
    """Row-major dense tensor; refuses to exist above the entry cap"""

    def __init__(self, dims, data=None, cap=DENSE_CAP_DEFAULT):
        self.dims = tuple(int(n) for n in dims)
        size = _checked_size(self.dims, cap)
        if data is None:
            data = np.zeros(size)
        data = np.ascontiguousarray(data, dtype=np.float64).reshape(-1)
        if data.shape[0] != size:
            raise DimensionMismatchError(f"dense data has {data.shape[0]} entries, dims need {size}")
        self.data = data

    @property
    def array(self):
        """d-way view of data"""
        return self.data.reshape(self.dims)

    def norm(self):
        return float(np.sqrt(np.dot(self.data, self.data)))

    def __repr__(self):
        return f"DenseTensor({' x '.join(str(n) for n in self.dims)})"


def _checked_size(dims, cap):
    size = 1
    for n in dims:
        size *= int(n)
    if size > cap:
        raise CapacityError(f"dense tensor of {size} entries exceeds the cap of {cap}")
    return size


def densify(X, cap=DENSE_CAP_DEFAULT):
    """Scatter the nonzeros of X into a dense tensor"""
    dense = DenseTensor(X.dims, cap=cap)
    if X.nnz:
        flat = np.ravel_multi_index(tuple(X.coords.T.astype(np.intp)), X.dims)
        np.add.at(dense.data, flat, X.values.astype(np.float64))
    return dense


def mttkrp_oracle(X, M, n):
    """Direct elementwise transcription, nonzeros in input order"""
    if not 0 <= int(n) < X.ndims:
        raise ModeError(f"mode {n} out of range for a {X.ndims}-way tensor")
    check_compatible(X, M)
    V = np.zeros((X.dims[n], M.rank))
    weights = M.weights.astype(np.float64)
    factors = [A.astype(np.float64) for A in M.factors]
    for i in range(X.nnz):
        index = X.coords[i]
        row = weights * float(X.values[i])
        for m in range(X.ndims):
            if m != n:
                row = row * factors[m][index[m], :]
        V[index[n], :] += row
    return V


def reconstruct(M, cap=DENSE_CAP_DEFAULT):
    """Sum of the R weighted outer products"""
    dims = M.dims
    _checked_size(dims, cap)
    total = np.zeros(dims)
    for j in range(M.rank):
        term = np.array(float(M.weights[j]))
        for A in M.factors:
            term = np.multiply.outer(term, A[:, j].astype(np.float64))
        total += term
    return DenseTensor(dims, total, cap=cap)


def dense_fit(X, M, cap=DENSE_CAP_DEFAULT):
    """1 - ||X - M|| / ||X|| from the dense residual"""
    check_compatible(X, M)
    dense = densify(X, cap)
    norm_x = dense.norm()
    if norm_x == 0:
        raise ZeroNormError("fit is undefined for a zero-norm tensor")
    residual = dense.data - reconstruct(M, cap).data
    return 1.0 - float(np.linalg.norm(residual)) / norm_x
