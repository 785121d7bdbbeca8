"""WAV reading and writing."""
import numpy as np
from scipy.io import wavfile

from .errors import InvalidInput


def read_wav(path):
    """Return ``(sample_rate, float64 samples (n, channels))``; integer PCM is scaled to [-1, 1)."""
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from exc
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(np.iinfo(data.dtype).max + 1)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    return int(rate), data


def write_wav(path, data, sample_rate):
    wavfile.write(path, int(sample_rate), np.asarray(data, dtype=np.float32))
