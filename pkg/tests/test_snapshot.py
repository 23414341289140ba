import numpy as np
import pytest

from gkflow.errors import ConfigError
from gkflow.grid import FULL, GridSpec, ScalarField
from gkflow.snapshot import decode, emit_heatmap, encode, read_snapshot, write_snapshot

from conftest import field


@pytest.mark.parametrize(
    "spec,complex_",
    [(GridSpec.reduced(16, 8), False), (GridSpec.reduced(8, 8), True), (GridSpec(FULL, (8, 8, 8, 8)), False)],
)
def test_round_trip_is_exact(spec, complex_):
    rng = np.random.default_rng(0)
    v = rng.normal(size=spec.shape)
    if complex_:
        v = v + 1j * rng.normal(size=spec.shape)
    f = ScalarField(spec, v)
    g = decode(encode(f))
    assert g.spec == f.spec and g.kind == f.kind
    assert np.array_equal(g.values, f.values)


def test_decode_rejects_garbage():
    with pytest.raises(ConfigError):
        decode(b"NOPE" + bytes(40))


def test_snapshot_directory(tmp_path, spec32):
    f = field(spec32, lambda x1, x2, x3, x4: np.sin(x1))
    write_snapshot(tmp_path / "s", {"f": f, "g": f * 2})
    back = read_snapshot(tmp_path / "s")
    assert sorted(back) == ["f", "g"]
    assert np.array_equal(back["g"].values, (f * 2).values)


def _read_pgm(path):
    data = path.read_bytes()
    parts = data.split(b"\n", 4)
    cols, rows = map(int, parts[2].split())
    return parts[1].decode(), np.frombuffer(parts[4], dtype=np.uint8).reshape(rows, cols)


def test_heatmap_constant_field(tmp_path, spec32):
    lo, hi = emit_heatmap({"c": ScalarField.constant(spec32, 2.5)}, "c", tmp_path / "c.pgm")
    comment, pix = _read_pgm(tmp_path / "c.pgm")
    assert lo == hi == 2.5 and "min=2.5 max=2.5" in comment
    assert np.all(pix == pix[0, 0])


def test_heatmap_extremes_of_f2_gplus(tmp_path, spec64, f2):
    from gkflow.flow import assemble_metric

    m = assemble_metric(f2.background, f2.initial)
    emit_heatmap({"gplus": m.gplus}, "gplus", tmp_path / "g.pgm")
    _, pix = _read_pgm(tmp_path / "g.pgm")
    # gplus = 1 - 0.05 sin x1 sin x3: minima at (pi/2, pi/2), (3pi/2, 3pi/2), maxima at the other two
    q = 16
    assert pix[q, q] == 0 and pix[3 * q, 3 * q] == 0
    assert pix[q, 3 * q] == 255 and pix[3 * q, q] == 255


def test_heatmap_errors(tmp_path, spec32):
    with pytest.raises(ConfigError):
        emit_heatmap({"f": ScalarField.constant(spec32, 1.0)}, "missing", tmp_path / "x.pgm")
    s4 = GridSpec(FULL, (8, 8, 8, 8))
    with pytest.raises(ConfigError):
        emit_heatmap({"f": ScalarField.constant(s4, 1.0)}, "f", tmp_path / "x.pgm")
