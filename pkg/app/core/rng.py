"""
Per-path random streams.

The stream of path j is a pure function of (seed, j). Every chain step
consumes 2d + 1 uniforms in a fixed order: chain coordinates 1..d, coupling
coordinates 1..d, then the fair coin zeta. They are consumed whether or not
the state sits on the hyperplane, so path j's numbers never depend on how
paths are grouped into batches or workers.
"""
import numpy as np


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """
    Generator for a single path.

    Args:
        seed: Run seed in [0, 2**64)
        path_index: Index of the path in the ensemble

    Returns:
        numpy.random.Generator seeded from SeedSequence(seed, spawn_key=(path_index,))
    """
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.PCG64(sequence))


def draws_per_step(dimension: int) -> int:
    return 2 * dimension + 1


def step_uniforms(generators, steps: int, dimension: int) -> np.ndarray:
    """
    Draw the next `steps` steps worth of uniforms for each generator.

    Returns:
        np.ndarray: shape (len(generators), steps, 2d + 1)
    """
    width = draws_per_step(dimension)
    out = np.empty((len(generators), steps, width))
    for row, generator in enumerate(generators):
        out[row] = generator.random((steps, width))
    return out
