from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from maxsurf.config import load_solve_config, parse_solve_config
from maxsurf.errors import PreconditionError
from maxsurf.io import InputError, fmt, grid_triangles, read_csv, read_json, read_toml, write_csv, write_json, write_obj
from maxsurf.pde import Dirichlet, Ellipse, PlanarRobin

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@given(st.lists(st.floats(allow_nan=False), min_size=1, max_size=30))
def test_csv_round_trip(tmp_path_factory, vals):
    p = tmp_path_factory.mktemp("csv") / "a.csv"
    write_csv(p, ["a", "b"], [vals, vals[::-1]])
    header, cols = read_csv(p, ["a", "b"])
    assert header == ["a", "b"]
    assert np.array_equal(cols["a"], np.array(vals)) and np.array_equal(cols["b"], np.array(vals[::-1]))


def test_fmt():
    assert fmt(0.1) == "0.10000000000000001"
    assert (fmt(np.nan), fmt(np.inf), fmt(-np.inf)) == ("nan", "inf", "-inf")
    assert float(fmt(np.pi)) == np.pi


def test_csv_layout(tmp_path):
    p = write_csv(tmp_path / "a.csv", ["x"], [[1.0, 2.5]])
    assert p.read_bytes() == b"x\n1\n2.5\n"
    with pytest.raises(PreconditionError):
        write_csv(tmp_path / "b.csv", ["x", "y"], [[1.0], [1.0, 2.0]])


@pytest.mark.parametrize("text, msg", [
    ("", "empty"),
    ("a,b\n1,2", "truncated"),
    ("a,b\n1\n", "expected 2 fields"),
    ("a,b\n1,x\n", "could not convert"),
    ("a,c\n1,2\n", "header"),
])
def test_csv_errors(tmp_path, text, msg):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(InputError, match=msg):
        read_csv(p, ["a", "b"])


def test_missing_files(tmp_path):
    for reader in (read_csv, read_json, read_toml):
        with pytest.raises(InputError):
            reader(tmp_path / "nope")


def test_json_layout(tmp_path):
    p = write_json(tmp_path / "r.json", {"a": 1.0, "b": [np.float64(0.1), 2], "c": {"z": 1 + 2j, "w": np.complex128(3j)},
                                         "d": np.nan, "e": np.True_, "f": []})
    d = read_json(p)
    assert d == {"a": 1.0, "b": [0.1, 2], "c": {"z": [1.0, 2.0], "w": [0.0, 3.0]}, "d": "nan", "e": True, "f": []}
    assert p.read_text().startswith('{\n  "a": 1.0,\n  "b": [0.10000000000000001, 2]')


def test_obj_and_triangles(tmp_path):
    present = np.ones((3, 4), bool)
    present[1, 1] = False
    idx, tris = grid_triangles(present)
    assert idx[1, 1] == -1 and idx.max() == 10 and len(tris) == 2 * 2
    idx, tris = grid_triangles(np.ones((2, 4), bool), periodic=True)
    assert len(tris) == 8 and tris.max() == 7
    p = write_obj(tmp_path / "m.obj", [[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]], comment="t")
    assert p.read_text() == "# t\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"


# -- configurations -----------------------------------------------------------------


def base_config():
    return {"name": "x", "domain": {"R": 2.0, "h": 0.1, "center": [0.0, 0.0],
                                    "holes": [{"shape": "circle", "center": [0.0, 0.0], "radius": 1.0, "phi": 0.0}]},
            "far_field": {"mode": "dirichlet", "value": 0.5}}


def test_shipped_configs():
    cfg = load_solve_config(CONFIGS / "theorem52.toml")
    dom = cfg.build_domain()
    assert isinstance(dom.far_field, PlanarRobin) and dom.R == 40.0
    assert isinstance(dom.holes[1].curve, Ellipse) and dom.holes[1].phi == -1.0
    assert cfg.levels.end_offsets and cfg.perron.cover == "whitney"
    ann = load_solve_config(CONFIGS / "radial_annulus.toml")
    assert isinstance(ann.build_domain().far_field, Dirichlet)
    assert ann.closed_form.shift == pytest.approx(-np.arcsinh(1.0))


def test_parse_minimal():
    cfg = parse_solve_config(base_config())
    assert cfg.name == "x" and cfg.domain.holes[0].radius == 1.0
    assert cfg.build_domain().far_field == Dirichlet(0.5)


def mutate(path, value):
    d = base_config()
    node = d
    for k in path[:-1]:
        node = node[k]
    if value is KeyError:
        del node[path[-1]]
    else:
        node[path[-1]] = value
    return d


@pytest.mark.parametrize("path, value, msg", [
    (("domain",), KeyError, "missing"),
    (("extra",), {}, "unknown sections"),
    (("domain", "holes"), [], "at least one"),
    (("domain", "bogus"), 1, "unknown keys"),
    (("domain", "h"), -0.1, "positive"),
    (("domain", "R"), float("inf"), "finite"),
    (("far_field", "mode"), "neumann", "unknown far-field"),
    (("far_field", "value"), KeyError, "needs 'value'"),
    (("far_field",), 3, "must be a table"),
    (("perron",), {"tol": 0.0}, "perron"),
    (("oracle",), {"agreement_tol": -1.0}, "tolerances"),
])
def test_config_errors(path, value, msg):
    with pytest.raises(InputError, match=msg):
        parse_solve_config(mutate(path, value)).build_domain()


def test_hole_errors():
    d = base_config()
    d["domain"]["holes"][0] = {"shape": "square", "center": [0, 0], "phi": 0}
    with pytest.raises(InputError, match="unknown shape"):
        parse_solve_config(d).build_domain()
    d["domain"]["holes"][0] = {"shape": "ellipse", "center": [0, 0], "phi": 0, "a": 1.0}
    with pytest.raises(InputError, match="needs 'a' and 'b'"):
        parse_solve_config(d).build_domain()
    d["domain"]["holes"][0] = {"shape": "circle", "center": [0, 0], "phi": 0}
    with pytest.raises(InputError, match="needs 'radius'"):
        parse_solve_config(d).build_domain()
