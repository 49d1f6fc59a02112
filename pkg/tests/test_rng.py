import numpy as np

from uiprice.rng import BLOCK, block_generator, child_seed, standard_normals


def test_reproducible_and_thread_independent():
    a = standard_normals(7, 10000, (3,), threads=1)
    b = standard_normals(7, 10000, (3,), threads=4)
    assert np.array_equal(a, b)
    assert np.array_equal(a, standard_normals(7, 10000, (3,)))


def test_blocks_are_prefix_stable():
    small = standard_normals(3, BLOCK, (2,))
    big = standard_normals(3, 3 * BLOCK, (2,))
    assert np.array_equal(small, big[:BLOCK])


def test_antithetic_pairs():
    z = standard_normals(1, 100, (2,), antithetic=True, block=100)
    assert np.allclose(z[:50], -z[50:])


def test_seeds_differ():
    assert not np.allclose(standard_normals(1, 100, (1,)), standard_normals(2, 100, (1,)))
    assert child_seed(1, 2) != child_seed(1, 3)
    g1, g2 = block_generator(5, 0), block_generator(5, 1)
    assert g1.standard_normal() != g2.standard_normal()


def test_moments():
    z = standard_normals(11, 200000, (1,))
    assert abs(z.mean()) < 4 / np.sqrt(200000)
    assert abs(z.var() - 1) < 0.02
