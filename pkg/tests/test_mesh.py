import numpy as np
import pytest

from pxbound.mesh import Disc, Interval, MeshError, Rectangle, generate_mesh, read_mesh, write_mesh


def test_interval_counts():
    m = generate_mesh(Interval(0, 1), 0.25)
    assert (m.n_vertices, m.n_cells, m.n_facets) == (5, 4, 2)
    assert m.measure == pytest.approx(1.0)
    assert m.boundary_measure == 2.0


def test_square_counts_and_normals():
    m = generate_mesh(Rectangle(0, 1, 0, 1), 0.5)
    assert (m.n_vertices, m.n_cells, m.n_facets) == (9, 8, 8)
    assert m.measure == pytest.approx(1.0)
    assert m.boundary_measure == pytest.approx(4.0)
    # outward unit normals along the axes
    mids = m.vertices[m.bfacets].mean(axis=1)
    expect = np.where(mids[:, :1] == 0, [-1, 0], 0) + np.where(mids[:, :1] == 1, [1, 0], 0)
    expect = expect + np.where(mids[:, 1:] == 0, [0, -1], 0) + np.where(mids[:, 1:] == 1, [0, 1], 0)
    assert np.allclose(m.normals, expect)


def test_disc_area_converges():
    m = generate_mesh(Disc(0, 0, 1), 0.1)
    assert m.measure == pytest.approx(np.pi, rel=5e-3)
    assert np.all(m.volumes > 0)


@pytest.mark.parametrize("h", [0.0, -1.0, 5.0])
def test_bad_h_rejected(h):
    with pytest.raises(MeshError):
        generate_mesh(Interval(0, 1), h)


def test_quadrature_weights_sum_to_measures(unit_square):
    q = unit_square.cell_quadrature(4)
    assert q.weights.sum() == pytest.approx(1.0, abs=1e-13)
    fq = unit_square.facet_quadrature(4)
    assert fq.weights.sum() == pytest.approx(4.0, abs=1e-13)


def test_locate_and_contains(unit_square):
    pts = np.array([[0.3, 0.7], [0.95, 0.05]])
    cells, bary = unit_square.locate(pts)
    rebuilt = np.einsum("sa,sad->sd", bary, unit_square.vertices[unit_square.cells[cells]])
    assert np.allclose(rebuilt, pts)
    assert unit_square.contains(np.array([[0.5, 0.5], [1.5, 0.5]])).tolist() == [True, False]


def test_mesh_round_trip(tmp_path, unit_square):
    path = tmp_path / "m.txt"
    write_mesh(unit_square, path)
    m2 = read_mesh(path)
    assert np.allclose(m2.vertices, unit_square.vertices)
    assert m2.n_cells == unit_square.n_cells
    assert m2.n_facets == unit_square.n_facets
    assert m2.measure == pytest.approx(1.0)
