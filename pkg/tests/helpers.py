import numpy as np
from scipy.spatial.transform import Rotation

from app.models.sim3 import Sim3


def random_sim3(rng: np.random.Generator, scale_sigma: float = 0.5, trans_sigma: float = 5.0) -> Sim3:
    rotation = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    return Sim3(float(np.exp(rng.normal() * scale_sigma)), rotation, rng.normal(size=3) * trans_sigma)


def small_sim3(rng: np.random.Generator, rot_max: float, scale_sigma: float, trans_sigma: float) -> Sim3:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, rot_max)
    return Sim3(
        float(np.exp(rng.normal() * scale_sigma)),
        Rotation.from_rotvec(axis * angle).as_matrix(),
        rng.normal(size=3) * trans_sigma,
    )
