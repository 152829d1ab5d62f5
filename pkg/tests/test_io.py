import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from superrad.coherence import G2Curve, G2Kind
from superrad.errors import ValidationError
from superrad.fitting import DecayTrace, FitResult, uniform_edges
from superrad.io import (
    ScatterRecord,
    emit_results,
    ingest_decay_csv,
    read_kv,
    read_scatter_csv,
    scatter_analysis,
    write_decay_csv,
)
from superrad.propagate import FluorescenceTrace, IrfShape, IrfSpec


def test_ingest_basic(tmp_path):
    p = tmp_path / "t.csv"
    rows = "\n".join(f"{k * 0.016!r},{k % 7}" for k in range(4096))
    p.write_text("# irf_fwhm_ps=110\n# background=2.5\ntime_ns,counts\n" + rows + "\n")
    tr = ingest_decay_csv(p)
    assert len(tr) == 4096
    assert tr.irf.shape is IrfShape.GAUSSIAN and tr.irf.fwhm == pytest.approx(110e-12)
    assert tr.background == 2.5
    assert tr.dt == pytest.approx(16e-12)
    assert tr.source_id == "t"


@pytest.mark.parametrize(
    "body, match",
    [
        ("time_ns,counts\n0,1\n0.016,-1\n", "line 3: negative"),
        ("time_ns,counts\n0,1\n0.016,x\n", "line 3: non-numeric"),
        ("time_ns,counts\n0,1\n0.016,1,2\n", "line 3: expected 2 columns"),
        ("time_ns,counts\n0,1\n0,1\n", "line 3: time column"),
        ("t,c\n0,1\n", "line 1: expected header"),
        ("time_ns,counts\n0,1\n", "two bins"),
        ("0,1\n", "header"),
        ("", "header"),
    ],
)
def test_ingest_errors(tmp_path, body, match):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(ValidationError, match=match):
        ingest_decay_csv(p)


times = st.lists(st.floats(-1e-8, 1e-6, allow_nan=False), min_size=3, max_size=40, unique=True).map(sorted)


@given(times, st.integers(0, 2**31))
def test_round_trip_bit_identical(tmp_path_factory, edges, seed):
    edges = np.asarray(edges)
    counts = np.random.default_rng(seed).integers(0, 10**6, edges.size - 1).astype(float)
    counts[0] = 0.5  # non-integer counts survive too
    tr = DecayTrace(edges, counts, IrfSpec.gaussian(87.3e-12), 1.25, "rt")
    path = write_decay_csv(tr, tmp_path_factory.mktemp("rt") / "trace.csv")
    back = ingest_decay_csv(path)
    assert np.array_equal(back.bin_edges, tr.bin_edges)
    assert np.array_equal(back.counts, tr.counts)
    assert back.irf.fwhm == tr.irf.fwhm and back.background == 1.25 and back.source_id == "rt"


def test_round_trip_uniform_grid(tmp_path):
    edges = uniform_edges(-2e-9, 200e-9, 16e-12)
    tr = DecayTrace(edges, np.arange(edges.size - 1, dtype=float))
    back = ingest_decay_csv(write_decay_csv(tr, tmp_path / "u.csv"))
    assert np.array_equal(back.bin_edges, edges)


def test_emit_fit_result(tmp_path):
    edges = uniform_edges(0, 2e-9, 1e-11)
    tr = DecayTrace(edges, np.exp(-np.arange(200) / 50) * 100)
    res = FitResult("superradiant", 1.0, 2.0, n_max=3, gamma=1e7, gamma_d_0=1e8, gamma_d_1=1e9, p0=0.5, model_counts=tr.counts)
    files = emit_results(res, tmp_path / "out", "fit", tr)
    names = {f.name for f in files}
    assert {"fit.txt", "fit.csv", "fit_decay.svg", "fit_decay.csv"} <= names
    kv = read_kv(tmp_path / "out" / "fit.txt")
    assert kv["n_max"] == 3 and kv["model"] == "superradiant"
    plotted = np.loadtxt(tmp_path / "out" / "fit_decay.csv", delimiter=",", skiprows=1)
    assert plotted.shape == (200, 3)


def test_emit_other_results(tmp_path):
    curve = G2Curve(np.array([1e-9, 2e-9]), np.array([1.1, 1.0]), G2Kind.TIME_INTEGRATED)
    files = emit_results(curve, tmp_path, "g2")
    assert (tmp_path / "g2.csv").exists() and any(f.suffix == ".svg" for f in files)
    emit_results(FluorescenceTrace(np.arange(3.0), np.ones(3)), tmp_path, "fl")
    emit_results({"a": 1}, tmp_path, "d")
    assert read_kv(tmp_path / "d.txt") == {"a": 1.0}
    with pytest.raises(ValidationError):
        emit_results(object(), tmp_path)


def test_emit_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_results({"a": 1}, blocker / "sub")


def _records(points):
    return [ScatterRecord(f"d{k}", size, rate, 1.0 + k, 0.5 * k) for k, (size, rate) in enumerate(points)]


def test_scatter_analysis(tmp_path):
    clean = scatter_analysis(_records([(100, 0.1), (150, 0.3), (200, 1.2)]))
    assert clean.forbidden_fraction == 0.0 and clean.flagged == ()
    flagged = scatter_analysis(_records([(50, 1.0), (150, 0.3)]), out_dir=tmp_path)
    assert flagged.flagged == ("d0",) and flagged.forbidden_fraction == 0.5
    assert (tmp_path / "rate_vs_size.svg").exists() and (tmp_path / "rate_vs_density.csv").exists()
    with pytest.raises(ValidationError):
        scatter_analysis(_records([(50, 1.0)]))
    with pytest.raises(ValidationError):
        scatter_analysis([])
    with pytest.raises(ValidationError):
        ScatterRecord("x", 0.0, 1.0, 1.0, 1.0)


def test_read_scatter_csv(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("diamond_id,diameter_nm,decay_rate_per_ns,peak_brightness,nv_density\na,50,1,1,1\nb,90,x,1,1\n")
    with pytest.raises(ValidationError, match="line 3"):
        read_scatter_csv(p)
