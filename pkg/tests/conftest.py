import numpy as np
import pytest


def natural_images(n, height=32, width=32, channels=3, seed=0, lo=40.0, hi=215.0):
    """Random fields with a 1/f amplitude spectrum, rescaled per image into [lo, hi].

    Stand-ins for natural photographs: most energy at low frequencies, values
    far enough from 0 and 255 that small perturbations are never clipped.
    """
    rng = np.random.default_rng(seed)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    radius = np.hypot(fy, fx)
    radius[0, 0] = 1.0
    amplitude = 1.0 / radius
    amplitude[0, 0] = 0.0
    out = np.empty((n, height, width, channels))
    for i in range(n):
        phase = rng.uniform(0, 2 * np.pi, size=(height, width, channels))
        spec = amplitude[:, :, None] * np.exp(1j * phase)
        field = np.real(np.fft.ifft2(spec, axes=(0, 1)))
        field -= field.min()
        field /= field.max()
        out[i] = lo + (hi - lo) * field
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def natural():
    return natural_images(64, seed=7)
