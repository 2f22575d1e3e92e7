import numpy as np
import pytest

from handrig.geometry import CameraView


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish proper rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_camera(rng: np.random.Generator, view_id: str = "cam",
                  target=None) -> CameraView:
    """Camera at a random position on a shell, aimed near the target."""
    if target is None:
        target = np.zeros(3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    campos = np.asarray(target) + direction * rng.uniform(800.0, 1500.0)
    forward = np.asarray(target) - campos
    forward /= np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    if abs(forward @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(up, forward)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return CameraView(
        view_id=view_id,
        campos=campos,
        camrot=np.stack([right, down, forward]),
        focal=(rng.uniform(2000.0, 5000.0), rng.uniform(2000.0, 5000.0)),
        princpt=(2048.0, 1334.0),
        image_size=(4096, 2668),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)
