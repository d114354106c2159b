"""Tests for the F_delta filter, scale selection and lemma instrumentation."""

import json
import math

import numpy as np
import pytest

from conftest import cantor, unit_segment
from rieszlab.diagnostics import (DiagnosticsReport, EmptyFDeltaError, FDeltaParams, GrowthAnomalyError,
                                  PipelineError, PipelineSettings, f_delta_filter, lemma3_check, lemma4_check,
                                  lemma5_check, pv_classify, run_pipeline, sample_atoms, select_scale,
                                  u_annuli_decomposition)
from rieszlab.geometry import AffineFrame, orthonormalize, select_spread_points
from rieszlab.measure import DiscreteMeasure, DensityGridError, ball_mass_brute, radial_power_measure
from rieszlab.riesz import PreconditionError, pv_scan, smoothed_riesz, u_functional
from rieszlab.smoothing import build_profile

S_CANTOR = 0.5
P05 = build_profile(S_CANTOR, 0.05)


def theta(mu, x, r, s):
    return ball_mass_brute(mu, x, r) / r**s


# ---------------------------------------------------------------- F_delta


def test_single_atom_is_retained():
    mu = DiscreteMeasure([[0.0]], [0.01], resolution=2**-10)
    params = FDeltaParams.with_dyadic_grid(0.1, 2**-2, 2**-4, 10.0, eps_min=2**-6)
    res = f_delta_filter(mu, params, P05, S_CANTOR)
    assert res.oscillation[0] == 0.0
    assert res.growth_ratio[0] == pytest.approx(1.0)
    assert res.indices.tolist() == [0]
    with pytest.raises(EmptyFDeltaError):
        f_delta_filter(mu, FDeltaParams(0.1, 2**-2, 2**-4, 1e-3, (2**-4,)), P05, S_CANTOR)


def test_segment_generous_parameters_keep_interior_atoms():
    mu = unit_segment(2**14)
    p = build_profile(1.0, 0.05)
    params = FDeltaParams.with_dyadic_grid(0.2, 2**-4, 2**-6, 10.0, eps_min=2**-10, per_octave=4)
    t = mu.positions[:, 0]
    interior = np.flatnonzero((t > 0.1) & (t < 0.9))
    subset = interior[np.linspace(0, interior.size - 1, 200).round().astype(int)]
    res = f_delta_filter(mu, params, p, 1.0, subset=subset)
    assert res.retention() >= 0.9


@pytest.fixture(scope="module")
def cantor_filter():
    mu = cantor(0.25, 12)
    params = FDeltaParams.with_dyadic_grid(0.9, 2**-4, 2**-8, 10.0, eps_min=2**-12, per_octave=4)
    return mu, f_delta_filter(mu, params, P05, S_CANTOR, subset=sample_atoms(mu, 64, 0), allow_empty=True)


def test_retention_is_monotone_in_delta_and_cap(cantor_filter):
    _, res = cantor_filter
    deltas = [0.01, 0.05, 0.1, 0.3, 0.6, 0.9, 2.0]
    kept = [res.mask(d).sum() for d in deltas]
    assert all(a <= b for a, b in zip(kept, kept[1:]))
    assert kept[0] < kept[-1]
    caps = [0.5, 1, 2, 5, 10]
    kept_c = [res.mask(C0=c).sum() for c in caps]
    assert all(a <= b for a, b in zip(kept_c, kept_c[1:]))
    for d in deltas:
        assert set(res.retained(d)) <= set(res.retained(max(deltas)))


def test_shrinking_the_eps_grid_never_removes_atoms(cantor_filter):
    mu, res = cantor_filter
    params = res.params
    coarse = FDeltaParams(params.delta, params.r0, params.eps0, params.C0, params.eps_grid[::3],
                          per_octave=params.per_octave)
    res2 = f_delta_filter(mu, coarse, P05, S_CANTOR, subset=res.candidates, allow_empty=True)
    assert set(res.retained()) <= set(res2.retained())
    assert np.all(res2.oscillation <= res.oscillation)


def test_empty_filter_reports_dominant_condition():
    mu = cantor(0.25, 10)
    params = FDeltaParams.with_dyadic_grid(1e-9, 2**-4, 2**-6, 10.0, eps_min=2**-9)
    with pytest.raises(EmptyFDeltaError) as info:
        f_delta_filter(mu, params, P05, S_CANTOR, subset=range(0, 1024, 64))
    assert info.value.histogram["dominant"] == "oscillation"
    assert info.value.histogram["candidates"] == 16


def test_filter_refuses_grids_below_the_floor():
    mu = cantor(0.25, 6)
    params = FDeltaParams(0.5, 2**-2, 2**-4, 10.0, (2**-4, mu.radius_floor / 2))
    with pytest.raises(DensityGridError):
        f_delta_filter(mu, params, P05, S_CANTOR)


def test_filter_params_validation():
    with pytest.raises(ValueError):
        FDeltaParams(1.5, 1, 1, 1, (0.5,))
    with pytest.raises(ValueError):
        FDeltaParams(0.5, 1, 0.1, 1, (0.5,))


# ---------------------------------------------------------- scale choice


def test_homogeneous_measure_selects_first_scale():
    mu = radial_power_measure([0.0], 0.5, 2**-14, 1.0, per_octave=16)
    sel = select_scale(mu, [0.0], 2**-10, 0.05, 0.5, max_k=3)
    assert sel.k == 1
    assert sel.chosen_eps == 2**-10
    assert max(sel.delta_k) == pytest.approx(min(sel.delta_k), rel=1e-12)
    assert sel.omega0 == 4.0**3


def test_scale_postcondition_against_brute_force():
    mu = cantor(0.25, 12)
    rho = 0.05
    for i in (0, 1000, 2222, 4095):
        y0 = mu.positions[i]
        sel = select_scale(mu, y0, 2**-14 * 1.5, rho, S_CANTOR, max_k=6)
        eps = sel.chosen_eps
        ts = eps * 2.0 ** (np.arange(33) / 16)
        th = np.array([theta(mu, y0, t, S_CANTOR) for t in ts])
        assert th.max() <= (1 + rho**2) * th[0] * (1 + 1e-12)
        assert sel.delta_k[sel.k - 1] <= th[0] * (1 + rho**2 / 4) * (1 + 1e-12)
        assert sel.eps1 <= eps <= 4.0**sel.k * sel.eps1


def test_growing_density_is_an_anomaly():
    mu = radial_power_measure([0.0], 1.5, 2**-14, 2.0**6, per_octave=16)
    with pytest.raises(GrowthAnomalyError) as info:
        select_scale(mu, [0.0], 2**-10, 0.05, 0.5, max_k=4)
    dk = info.value.delta_k
    assert all(b / a == pytest.approx(4.0, rel=0.02) for a, b in zip(dk, dk[1:]))


def test_select_scale_rejects_bad_inputs():
    mu = cantor(0.25, 6)
    with pytest.raises(DensityGridError):
        select_scale(mu, [0.0], mu.radius_floor / 2, 0.05, 0.5)
    with pytest.raises(ValueError):
        select_scale(mu, [0.0], 0.1, 0.05, 0.5, max_k=0)


# ------------------------------------------------------------ annuli / U


def test_annuli_sum_to_u(rng):
    for m, s in ((1, 0.5), (2, 1.5), (3, 2.5)):
        mu = DiscreteMeasure(rng.uniform(-1, 1, size=(500, m)), rng.uniform(0.1, 1, 500))
        y0 = mu.positions[7]
        frame = orthonormalize(mu.positions[[7, 8]])
        p = build_profile(s, 0.25)
        ann = u_annuli_decomposition(mu, y0, frame, 0.3, p)
        assert ann.total == pytest.approx(u_functional(mu, y0, frame, 0.3, p), rel=1e-12)
        assert sum(ann.masses) == pytest.approx(
            ball_mass_brute(mu, y0, 0.3 * p.support_radius_factor * (1 + 1e-15)), rel=1e-12)


def test_annuli_when_support_is_inside_the_unit_ball():
    mu = cantor(0.25, 8)
    y0 = mu.positions[0]
    eps = 2.0
    frame = AffineFrame(y0, np.eye(1))
    ann = u_annuli_decomposition(mu, y0, frame, eps, P05)
    # the base atom contributes the continuous extension of the linear kernel
    th = mu.total_mass / eps**S_CANTOR
    assert ann.I1 == pytest.approx(1 * th / eps, rel=1e-12)
    assert ann.I2 == ann.I3 == ann.I4 == 0.0
    assert ann.masses[1:] == (0.0, 0.0, 0.0)


def test_annuli_outer_terms_stay_within_budget():
    mu = cantor(0.25, 12)
    n = 0
    for i in (5, 1234, 3000):
        y0 = mu.positions[i]
        sel = select_scale(mu, y0, 2**-12, 0.05, S_CANTOR)
        frame = AffineFrame(y0, np.eye(1))
        ann = u_annuli_decomposition(mu, y0, frame, sel.chosen_eps, P05)
        budget = 0.3 * (n + 1 - S_CANTOR) * theta(mu, y0, sel.chosen_eps, S_CANTOR) / sel.chosen_eps
        assert abs(ann.I2) + abs(ann.I3) + abs(ann.I4) <= budget * 1.1


# ---------------------------------------------------------------- Lemma 3


def test_lemma3_with_no_mass_near_the_points():
    mu = DiscreteMeasure([[100.0, 0.0]], [1.0], resolution=1.0)
    sel = select_spread_points([[0, 0], [0.01, 0], [0, 0.01]], [0, 0], 0.02, 3)
    res = lemma3_check(mu, sel, 1.0, build_profile(1.5, 0.05))
    assert res.lhs == res.rhs == 0.0
    assert res.empirical_c4 is None and not res.anomaly


def test_lemma3_precondition():
    mu = cantor(0.25, 8)
    sel = select_spread_points(mu.positions, mu.positions[0], 0.1, 2)
    with pytest.raises(PreconditionError):
        lemma3_check(mu, sel, 1.0, P05)


def _cantor_c4(depth):
    mu = cantor(0.25, depth)
    r = 2.0**-10
    vals = []
    for x0 in (0.0, 0.75, 0.1875):
        sel = select_spread_points(mu.positions, [x0], r, 2)
        vals.append(lemma3_check(mu, sel, 20 * r, P05).empirical_c4)
    return np.array(vals)


def test_lemma3_constant_is_depth_stable():
    c = [_cantor_c4(d) for d in (10, 12, 14)]
    for a, b in zip(c, c[1:]):
        assert np.all(np.isfinite(a)) and np.all(np.isfinite(b))
        assert np.all((b / a >= 1 / 1.5) & (b / a <= 1.5))


def test_lemma3_on_segment_is_finite():
    mu = unit_segment(2**14)
    sel = select_spread_points(mu.positions, [0.5], 2**-8, 2)
    res = lemma3_check(mu, sel, 20 * 2**-8, build_profile(1.0, 0.05))
    assert math.isfinite(res.empirical_c4) and res.empirical_c4 > 0


# ---------------------------------------------------------------- Lemma 4


def test_lemma4_vacuous_at_integer_s():
    mu = unit_segment(2**12)
    frame = AffineFrame(np.array([0.5]), np.eye(1))
    res = lemma4_check(mu, [0.5], frame, 2**-6, build_profile(1.0, 0.05))
    assert res.lower_bound == 0.0 and res.passed


def test_lemma4_support_in_ball():
    mu = cantor(0.25, 8)
    y0 = mu.positions[0]
    res = lemma4_check(mu, y0, AffineFrame(y0, np.eye(1)), 2.0, P05)
    th = mu.total_mass / 2.0**0.5
    assert res.U == pytest.approx(th / 2.0, rel=1e-12)
    assert res.passed
    assert res.to_dict()["pass"] is True


def test_lemma4_passes_on_cantor_at_selected_scales():
    mu = cantor(0.25, 12)
    outcomes = []
    for i in sample_atoms(mu, 24, 3):
        y0 = mu.positions[i]
        sel = select_scale(mu, y0, 2**-12, 0.05, S_CANTOR)
        outcomes.append(lemma4_check(mu, y0, AffineFrame(y0, np.eye(1)), sel, P05).passed)
    assert all(outcomes)


# ---------------------------------------------------------------- Lemma 5


def test_lemma5_two_points_match_direct_evaluation():
    mu = DiscreteMeasure([[0.0], [0.1], [0.35]], [1.0, 2.0, 0.5])
    res = lemma5_check(mu, [0, 1], [0.05], 0.1, 0.2, 0.1, 0.5, P05)
    direct = abs(smoothed_riesz(mu, [0.0], 0.2, P05).value[0] - smoothed_riesz(mu, [0.1], 0.2, P05).value[0])
    assert res.max_pair_osc == pytest.approx(direct, rel=1e-15)
    assert res.points == 2
    assert res.preconditions == {"eps_below_eps0": True, "r_over_delta_below_eps0": False}


def test_lemma5_needs_two_points():
    mu = DiscreteMeasure([[0.0], [0.1]], [1.0, 2.0])
    with pytest.raises(ValueError):
        lemma5_check(mu, [0, 0], [0.0], 0.05, 0.2, 0.1, 0.5, P05)


def _lemma5_sweep(mu, x0):
    p = build_profile(1.0, 0.05)
    eps0 = 2**-5
    out = []
    for delta in (0.2, 0.1, 0.05):
        params = FDeltaParams.with_dyadic_grid(delta, 2**-4, eps0, 10.0, eps_min=2**-9, per_octave=2)
        r = 0.5 * delta * eps0
        fd = f_delta_filter(mu, params, p, 1.0, subset=mu.ball_indices(x0, r))
        out.append(lemma5_check(mu, fd.retained(), x0, r, 2**-6, delta, eps0, p))
    return out


def test_lemma5_on_uniform_segment_vanishes():
    """The compactly supported kernel sees a symmetric lattice around every interior atom."""
    for res in _lemma5_sweep(unit_segment(2**14), [0.5]):
        assert res.max_pair_osc <= 1e-12
        assert all(res.preconditions.values())


def test_lemma5_ratio_is_stable_across_delta_on_weighted_segment():
    u = unit_segment(2**14)
    t = u.positions[:, 0]
    mu = DiscreteMeasure(u.positions, u.weights * (1 + t * t), resolution=u.resolution)
    ratios = [res.ratio for res in _lemma5_sweep(mu, [0.5])]
    assert min(ratios) > 0
    assert max(ratios) / min(ratios) < 3


# ------------------------------------------------------------ PV verdicts


def test_pv_classify_rules():
    assert pv_classify(np.ones((6, 1))).verdict == "converging"
    alt = np.array([0.1, -0.1] * 4)
    assert pv_classify(alt, tol_osc=0.1).verdict == "oscillating"
    assert pv_classify(alt, tol_osc=0.5).verdict == "inconclusive"
    assert pv_classify(np.ones(3)).verdict == "inconclusive"
    decaying = 2.0 ** -np.arange(8) * (-1) ** np.arange(8)
    assert pv_classify(decaying, tol_conv=1e-3, tol_osc=1e-3).verdict == "inconclusive"


def test_pv_verdicts_on_reference_measures():
    seg = unit_segment()
    scan = pv_scan(seg, [0.75], 2.0 ** -np.arange(4, 11), build_profile(1.0, 0.05), kind="truncated")
    assert pv_classify(scan).verdict == "converging"
    mu = cantor(0.25, 14)
    x = mu.positions[5000]
    theta_hat = max(theta(mu, x, r, S_CANTOR) for r in 2.0 ** -np.arange(4, 20))
    scan = pv_scan(mu, x, 2.0 ** -np.arange(4, 20, 0.5), P05)
    assert pv_classify(scan, 1e-2, 0.05 * theta_hat).verdict == "oscillating"


# ------------------------------------------------------------ pipeline


def _small_settings(**kw):
    fd = FDeltaParams.with_dyadic_grid(kw.pop("delta", 0.9), 2**-4, 2**-8, kw.pop("C0", 10.0),
                                       eps_min=2**-10, per_octave=4)
    return PipelineSettings(fdelta=fd, taus=(0.25,), eps1=2.0**-8, max_k=6, sample=32, lemma1_bases=4, **kw)


def test_pipeline_empty_filter_names_the_stage():
    mu = cantor(0.25, 10)
    with pytest.raises(PipelineError) as info:
        run_pipeline(mu, P05, _small_settings(C0=1e-6))
    assert info.value.stage == "f_delta_filter"


def test_pipeline_is_reproducible_and_serializable():
    mu = cantor(0.25, 10)
    st = _small_settings(pv_eps=tuple(2.0 ** -np.arange(4, 10)))
    a = [r.to_dict() for r in run_pipeline(mu, P05, st)]
    b = [r.to_dict() for r in run_pipeline(mu, P05, st, threads=4)]
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    rep = a[0]
    assert rep["schema_version"] == 1
    for key in ("fdelta", "base_ball", "selection", "scale", "lemma1", "lemma3", "lemma4", "section3", "pvClass"):
        assert rep[key] is not None
    assert rep["section3"]["ratio"] > 0


def test_segment_pipeline_produces_a_report():
    mu = unit_segment(2**14)
    fd = FDeltaParams.with_dyadic_grid(0.5, 2**-4, 2**-7, 10.0, eps_min=2**-10, per_octave=4)
    st = PipelineSettings(fdelta=fd, taus=(0.125,), eps1=2.0**-7, max_k=4, sample=32, lemma1_bases=4)
    rep = run_pipeline(mu, build_profile(1.0, 0.05), st)[0]
    assert rep.lemma4["lowerBound"] == 0.0
    assert "ratio" in rep.section3


def test_report_flattening():
    rep = DiagnosticsReport(0.5, 0.05, {"family": "cantor"}, lemma4={"U": 1.0, "pass": True},
                            section3={"ratio": float("inf")})
    flat = rep.flat()
    assert flat["lemma4.U"] == 1.0 and flat["measure.family"] == "cantor"
    assert flat["section3.ratio"] == "inf"
    json.dumps(rep.to_dict())
