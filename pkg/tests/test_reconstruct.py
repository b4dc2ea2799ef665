"""Histogram fitting and maximum-likelihood reconstruction."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heraldyne.errors import (
    DegenerateDataError,
    InputFormatError,
    ReconstructionError,
)
from heraldyne.fock import PhotonNumberDistribution, fock_quadrature_pdf, mixture_pdf
from heraldyne.pipeline import QuadratureDataset
from heraldyne.reconstruct import (
    EM_DEFAULT_MAX_ITER,
    EM_DEFAULT_TOL,
    EmResult,
    HistogramModel,
    _em_engine_py,
    _pdf_matrix,
    _project_simplex,
    build_histogram,
    em_reconstruct,
    em_step,
    fit_mixture_ls,
    log_likelihood,
    read_reconstruction_json,
    reconstruction_record,
    write_reconstruction_json,
)
from heraldyne.simulate import sample_quadrature

from helpers import BENCHMARK_P, benchmark_distribution, random_simplex

try:
    from heraldyne.reconstruct import _em_engine_jit, _em_engine_jit6

    HAVE_JIT = True
except ImportError:  # pragma: no cover
    HAVE_JIT = False


@pytest.fixture(scope="module")
def benchmark_data():
    """5e4 quadratures drawn from the benchmark mixture."""
    p = benchmark_distribution()
    rng = np.random.default_rng(123)
    xs = np.array([sample_quadrature(p, rng) for _ in range(50_000)])
    return QuadratureDataset(xs, 1.0, "heralded")


@pytest.fixture(scope="module")
def benchmark_em(benchmark_data):
    return em_reconstruct(benchmark_data, 5)


@pytest.fixture(scope="module")
def vacuum_data():
    rng = np.random.default_rng(21)
    return QuadratureDataset(
        rng.normal(0.0, math.sqrt(0.5), 50_000), 1.0, "vacuum"
    )


# ---------------------------------------------------------------------------
# histograms


def test_vacuum_histogram_density_at_origin(vacuum_data):
    hist = build_histogram(vacuum_data)
    center = np.searchsorted(hist.bin_edges, 0.0)  # bin starting at 0.0
    assert hist.densities[center] == pytest.approx(1.0 / math.sqrt(math.pi), rel=0.05)
    assert float(hist.densities @ hist.bin_widths) == pytest.approx(1.0, abs=1e-12)


def test_histogram_single_point():
    ds = QuadratureDataset(np.array([0.0]), 1.0, "heralded")
    hist = build_histogram(ds)
    assert hist.counts.sum() == 1
    assert hist.n_outside == 0
    assert float(hist.densities.max()) == pytest.approx(10.0)  # 1 / bin width


def test_histogram_counts_outside_range():
    ds = QuadratureDataset(np.array([0.3, -0.2, 100.0]), 1.0, "heralded")
    hist = build_histogram(ds)
    assert hist.n_outside == 1
    assert hist.counts.sum() == 2
    assert float(hist.densities @ hist.bin_widths) == pytest.approx(1.0)


def test_histogram_all_points_outside():
    ds = QuadratureDataset(np.array([50.0, -60.0]), 1.0, "heralded")
    with pytest.raises(DegenerateDataError):
        build_histogram(ds)


def test_histogram_mirror_symmetry(benchmark_data):
    hist = build_histogram(benchmark_data)
    flipped = build_histogram(
        QuadratureDataset(-benchmark_data.values, 1.0, "heralded")
    )
    assert np.array_equal(flipped.counts, hist.counts[::-1])


def test_histogram_argument_validation(vacuum_data):
    with pytest.raises(ValueError, match="bins"):
        build_histogram(vacuum_data, bins=5)
    with pytest.raises(ValueError, match="range"):
        build_histogram(vacuum_data, range=(2.0, -2.0))


def test_histogram_model_validation():
    edges = np.array([0.0, 1.0, 2.0])
    ok = dict(densities=np.array([0.7, 0.3]), counts=np.array([7, 3]))
    HistogramModel(bin_edges=edges, **ok)
    with pytest.raises(ValueError, match="ascending"):
        HistogramModel(bin_edges=edges[::-1], **ok)
    with pytest.raises(ValueError, match="must be 1"):
        HistogramModel(
            bin_edges=edges, densities=np.array([0.7, 0.7]), counts=np.array([1, 1])
        )
    with pytest.raises(ValueError, match="one entry per bin"):
        HistogramModel(
            bin_edges=edges, densities=np.array([1.0]), counts=np.array([1])
        )


# ---------------------------------------------------------------------------
# simplex projection


def test_simplex_projection_known_values():
    out = _project_simplex(np.array([0.8, 0.6]))
    assert np.allclose(out, [0.6, 0.4], atol=1e-15)
    out = _project_simplex(np.array([1.5, -0.5]))
    assert np.array_equal(out, [1.0, 0.0])


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), size=st.integers(1, 12))
def test_simplex_projection_properties(seed, size):
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, 2.0, size)
    out = _project_simplex(v)
    assert np.all(out >= 0.0)
    assert float(out.sum()) == pytest.approx(1.0, abs=1e-12)
    # projecting a simplex point is the identity
    p = random_simplex(rng, size)
    assert np.allclose(_project_simplex(p), p, atol=1e-12)


# ---------------------------------------------------------------------------
# least squares


def _averaged_density(p, edges, nodes=16):
    """Independent bin average of the mixture density (high-order quadrature)."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    lo, hi = edges[:-1], edges[1:]
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    grid = mid[:, None] + half[:, None] * x[None, :]
    return mixture_pdf(p, grid.ravel()).reshape(grid.shape) @ w / 2.0


def test_ls_recovers_exact_model():
    p = benchmark_distribution()
    edges = np.linspace(-5.0, 5.0, 201)
    density = _averaged_density(p, edges)
    density /= float(density @ np.diff(edges))  # fold tail mass back in
    hist = HistogramModel(
        bin_edges=edges,
        densities=density,
        counts=np.rint(density * 1e7 * np.diff(edges)).astype(np.int64),
    )
    fit = fit_mixture_ls(hist, 5)
    assert fit.converged
    assert np.max(np.abs(fit.p_hat.probs - p.probs)) < 1e-4


def test_ls_on_benchmark_data(benchmark_data, benchmark_em):
    fit = fit_mixture_ls(build_histogram(benchmark_data), 5)
    assert fit.converged
    assert fit.gradient_norm < 1e-10
    assert fit.iterations < 100_000
    assert np.max(np.abs(fit.p_hat.probs - np.asarray(BENCHMARK_P))) < 0.02
    # the two estimators agree on well-sampled data
    assert np.max(np.abs(fit.p_hat.probs - benchmark_em.p_hat.probs)) < 0.02
    # the simplex projection lands on faces: small components hit exact zero
    assert float(fit.p_hat.probs.min()) == 0.0


def test_ls_vacuum_concentrates_on_ground_state(vacuum_data):
    fit = fit_mixture_ls(build_histogram(vacuum_data), 5)
    assert fit.p_hat.probs[0] > 0.99


def test_ls_rejects_bad_cutoff(vacuum_data):
    with pytest.raises(ValueError, match="cutoff"):
        fit_mixture_ls(build_histogram(vacuum_data), 0)


# ---------------------------------------------------------------------------
# log likelihood


def test_log_likelihood_frozen_value():
    ds = QuadratureDataset(np.array([0.0]), 1.0, "heralded")
    p = PhotonNumberDistribution(np.array([1.0]))
    assert log_likelihood(p, ds) == pytest.approx(-0.5 * math.log(math.pi), rel=1e-12)


def test_log_likelihood_zero_density_raises():
    ds = QuadratureDataset(np.array([0.0]), 1.0, "heralded")
    p = PhotonNumberDistribution(np.array([0.0, 1.0]))  # Q_1(0) = 0
    with pytest.raises(ReconstructionError, match="index 0"):
        log_likelihood(p, ds)


def test_log_likelihood_order_independent(benchmark_data):
    p = benchmark_distribution()
    base = log_likelihood(p, benchmark_data)
    rng = np.random.default_rng(5)
    shuffled = QuadratureDataset(
        rng.permutation(benchmark_data.values), 1.0, "heralded"
    )
    assert log_likelihood(p, shuffled) == base  # fsum is exactly rounded


def test_em_final_log_likelihood_matches_direct(benchmark_data, benchmark_em):
    direct = log_likelihood(benchmark_em.p_hat, benchmark_data)
    assert benchmark_em.final_log_likelihood == pytest.approx(direct, rel=1e-9)


# ---------------------------------------------------------------------------
# EM update


def test_em_step_fixed_point(benchmark_data, benchmark_em):
    stepped = em_step(benchmark_em.p_hat, benchmark_data)
    assert np.max(np.abs(stepped.probs - benchmark_em.p_hat.probs)) < 1e-5


def test_em_step_vertex_is_absorbing(vacuum_data):
    p = PhotonNumberDistribution(np.array([1.0]))
    stepped = em_step(p, vacuum_data)
    assert stepped.probs[0] == 1.0


def test_em_step_zero_density_raises():
    ds = QuadratureDataset(np.array([0.0]), 1.0, "heralded")
    with pytest.raises(ReconstructionError, match="vanished"):
        em_step(PhotonNumberDistribution(np.array([0.0, 1.0])), ds)


@settings(max_examples=40)
@given(
    seed=st.integers(0, 2**32 - 1),
    cutoff=st.integers(1, 6),
    count=st.integers(20, 400),
)
def test_em_step_never_decreases_likelihood(seed, cutoff, count):
    rng = np.random.default_rng(seed)
    data = QuadratureDataset(rng.normal(0.0, 1.0, count), 1.0, "heralded")
    p = PhotonNumberDistribution(random_simplex(rng, cutoff + 1))
    before = log_likelihood(p, data)
    after = log_likelihood(em_step(p, data), data)
    assert after >= before - 1e-10 * (1.0 + abs(after))


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), cutoff=st.integers(1, 6))
def test_em_step_stays_on_simplex(seed, cutoff):
    rng = np.random.default_rng(seed)
    data = QuadratureDataset(rng.normal(0.0, 1.2, 200), 1.0, "heralded")
    p = PhotonNumberDistribution(random_simplex(rng, cutoff + 1))
    stepped = em_step(p, data)
    assert np.all(stepped.probs >= 0.0)
    assert float(stepped.probs.sum()) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# full EM runs


def test_em_reconstructs_benchmark_weights(benchmark_em):
    assert benchmark_em.converged
    assert benchmark_em.iterations < EM_DEFAULT_MAX_ITER
    assert np.max(np.abs(benchmark_em.p_hat.probs - np.asarray(BENCHMARK_P))) < 0.02
    assert benchmark_em.pinned_components == ()
    assert not benchmark_em.fisher_near_singular
    assert math.isfinite(benchmark_em.fisher_condition)
    # trajectory sanity: monotone (validated on construction) and consistent
    traj = benchmark_em.log_likelihood_trajectory
    assert traj.size == benchmark_em.iterations + 1
    assert traj[-1] == benchmark_em.final_log_likelihood
    assert float(benchmark_em.p_hat.probs.sum()) == pytest.approx(1.0, abs=1e-12)


def test_em_matches_single_weight_grid_search():
    # cutoff 1: maximize the likelihood of (1-q, q) by brute force and
    # compare against the EM answer
    for seed in range(6):
        rng = np.random.default_rng(900 + seed)
        q_true = rng.uniform(0.2, 0.8)
        p = PhotonNumberDistribution(np.array([1.0 - q_true, q_true]))
        xs = np.array([sample_quadrature(p, rng) for _ in range(3000)])
        matrix = _pdf_matrix(xs, 1)
        qs = np.linspace(0.0, 1.0, 10_001)
        best_q, best_ll = 0.0, -np.inf
        for block in np.array_split(qs, 10):
            dens = matrix[:, 0, None] * (1.0 - block) + matrix[:, 1, None] * block
            lls = np.log(dens).sum(axis=0)
            j = int(np.argmax(lls))
            if lls[j] > best_ll:
                best_ll, best_q = float(lls[j]), float(block[j])
        ds = QuadratureDataset(xs, 1.0, "heralded")
        result = em_reconstruct(ds, 1)
        assert abs(result.p_hat.probs[1] - best_q) <= 2e-4


def test_em_permutation_invariance(benchmark_data):
    short = QuadratureDataset(benchmark_data.values[:5000], 1.0, "heralded")
    base = em_reconstruct(short, 5)
    rng = np.random.default_rng(17)
    shuffled = QuadratureDataset(
        rng.permutation(short.values), 1.0, "heralded"
    )
    other = em_reconstruct(shuffled, 5)
    assert np.max(np.abs(base.p_hat.probs - other.p_hat.probs)) < 1e-9


def test_em_argument_validation(vacuum_data):
    with pytest.raises(ValueError, match="cutoff"):
        em_reconstruct(vacuum_data, 0)
    with pytest.raises(ValueError, match="tol"):
        em_reconstruct(vacuum_data, 2, tol=0.0)
    with pytest.raises(ValueError, match="max_iter"):
        em_reconstruct(vacuum_data, 2, max_iter=0)


def test_em_rejects_impossible_point():
    values = np.concatenate([np.random.default_rng(3).normal(0, 0.7, 50), [40.0]])
    ds = QuadratureDataset(values, 1.0, "heralded")
    with pytest.raises(ReconstructionError, match="zero density"):
        em_reconstruct(ds, 5)


def test_em_iteration_cap_reports_not_converged(benchmark_data):
    short = QuadratureDataset(benchmark_data.values[:2000], 1.0, "heralded")
    result = em_reconstruct(short, 5, max_iter=3)
    assert not result.converged
    assert result.iterations == 3
    assert result.log_likelihood_trajectory.size == 4


def test_em_engines_pin_underflowing_components():
    rng = np.random.default_rng(8)
    matrix = _pdf_matrix(rng.normal(0.0, 0.8, 200), 2)
    start = np.array([0.7, 0.3 - 1e-305, 1e-305])
    p, traj, converged, iterations, dead = _em_engine_py(matrix, start, 1e-8, 50)
    assert dead == -1
    assert p[2] == 0.0
    if HAVE_JIT:
        pj, trajj, *_ = _em_engine_jit(matrix, start, 1e-8, 50)
        assert pj[2] == 0.0


@pytest.mark.skipif(not HAVE_JIT, reason="compiled engine unavailable")
def test_em_engines_agree(benchmark_data):
    matrix = _pdf_matrix(benchmark_data.values[:4000], 5)
    start = np.full(6, 1.0 / 6.0)
    p_py, t_py, c_py, i_py, d_py = _em_engine_py(matrix, start, 1e-10, 4000)
    p6, t6, c6, i6, d6 = _em_engine_jit6(matrix, start, 1e-10, 4000)
    pg, tg, cg, ig, dg = _em_engine_jit(matrix, start, 1e-10, 4000)
    # the six-component specialization is a pure re-rolling of the generic
    # kernel: identical arithmetic, identical results
    assert np.array_equal(p6, pg) and np.array_equal(t6, tg)
    assert (i_py, c_py, d_py) == (i6, c6, d6) == (ig, cg, dg)
    assert np.max(np.abs(p_py - p6)) < 1e-12
    assert np.max(np.abs(t_py - t6) / np.abs(t_py)) < 1e-9


def test_em_result_rejects_decreasing_trajectory():
    p = PhotonNumberDistribution(np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="decreased"):
        EmResult(
            p_hat=p,
            iterations=1,
            final_log_likelihood=-11.0,
            converged=True,
            log_likelihood_trajectory=np.array([-10.0, -11.0]),
        )
    with pytest.raises(ValueError, match="last trajectory entry"):
        EmResult(
            p_hat=p,
            iterations=1,
            final_log_likelihood=-9.0,
            converged=True,
            log_likelihood_trajectory=np.array([-11.0, -10.0]),
        )


def test_fisher_flag_threshold():
    p = PhotonNumberDistribution(np.array([0.5, 0.5]))
    result = EmResult(
        p_hat=p,
        iterations=1,
        final_log_likelihood=-10.0,
        converged=True,
        log_likelihood_trajectory=np.array([-11.0, -10.0]),
        fisher_condition=1e12,
    )
    assert result.fisher_near_singular


# ---------------------------------------------------------------------------
# JSON records


def test_reconstruction_record_schema(benchmark_data, benchmark_em):
    hist = build_histogram(benchmark_data)
    record = reconstruction_record(
        "em",
        5,
        benchmark_em.p_hat,
        benchmark_em.final_log_likelihood,
        benchmark_em.iterations,
        benchmark_em.converged,
        hist,
    )
    assert set(record) == {
        "method",
        "cutoff",
        "p",
        "log_likelihood",
        "iterations",
        "converged",
        "histogram",
    }
    assert set(record["histogram"]) == {"edges", "densities"}
    assert record["p"] == [float(v) for v in benchmark_em.p_hat.probs]

    ls_record = reconstruction_record(
        "ls", 5, benchmark_em.p_hat, None, 10, True, hist
    )
    assert ls_record["log_likelihood"] is None


def test_reconstruction_json_roundtrip(tmp_path, benchmark_data, benchmark_em):
    hist = build_histogram(benchmark_data)
    record = reconstruction_record(
        "em", 5, benchmark_em.p_hat, -1.0, 3, True, hist
    )
    path = tmp_path / "recon.json"
    write_reconstruction_json(
        path, {"ls": record, "em": record}, metadata={"samples": 50_000}
    )
    payload = read_reconstruction_json(path)
    assert payload["samples"] == 50_000
    assert payload["em"]["p"] == record["p"]
    assert payload["ls"]["cutoff"] == 5


def test_reconstruction_json_requires_both_methods(tmp_path):
    path = tmp_path / "partial.json"
    path.write_text(json.dumps({"em": {"p": [1.0]}}))
    with pytest.raises(InputFormatError, match="'ls'"):
        read_reconstruction_json(path)


def test_reconstruction_json_bad_input(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(InputFormatError, match="invalid JSON"):
        read_reconstruction_json(path)
    with pytest.raises(InputFormatError, match="cannot read"):
        read_reconstruction_json(tmp_path / "missing.json")
