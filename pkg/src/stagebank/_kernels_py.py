"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Layout shared with the extension: per-stage logits are packed into a
``(S, N, Cmax)`` float64 array and ``counts[s]`` gives the number of valid
columns for stage ``s``. Columns past ``counts[s]`` are ignored.
"""
import numpy as np

_CHUNK_ELEMS = 4_000_000


def _masked(logits, counts):
    cmax = logits.shape[2]
    valid = np.arange(cmax)[None, :] < np.asarray(counts)[:, None]
    return np.where(valid[:, None, :], logits, -np.inf)


def row_logsumexp(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    m = x.max(axis=1)
    return m + np.log(np.exp(x - m[:, None]).sum(axis=1))


def confidences(logits, counts, T):
    """Confidence ``T * logsumexp(l / T)`` for every (stage, sample); shape (S, N)."""
    z = _masked(logits, counts) / T
    m = z.max(axis=2)
    return T * (m + np.log(np.exp(z - m[..., None]).sum(axis=2)))


def stage_winners(logits, counts, temps):
    """Index of the most confident stage for each temperature and sample.

    Returns an int64 array of shape (len(temps), N). Ties go to the lowest
    stage index.
    """
    temps = np.asarray(temps, dtype=np.float64)
    masked = _masked(logits, counts)
    out = np.empty((temps.size, logits.shape[1]), dtype=np.int64)
    chunk = max(1, _CHUNK_ELEMS // max(1, masked.size))
    for lo in range(0, temps.size, chunk):
        ts = temps[lo:lo + chunk]
        z = masked[None] / ts[:, None, None, None]
        m = z.max(axis=3)
        conf = ts[:, None, None] * (m + np.log(np.exp(z - m[..., None]).sum(axis=3)))
        out[lo:lo + ts.size] = conf.argmax(axis=1)
    return out
