import numpy as np
import pytest

from diamrisk.analysis import (
    FlatnessReport,
    Histogram,
    confidence_region_check,
    directions_digest,
    erm_drm_gap_table,
    excess,
    flatness_report,
    landscape_histogram,
    rate_study,
    sample_directions,
    write_confidence_csv,
    write_hist_csv,
    write_rate_csv,
)
from diamrisk.losses import LossModel, QuadraticLoss, ReciprocalLoss, Sample, TentLoss
from diamrisk.params import NormKind, ParamVector
from diamrisk.risk import label_risk_curves

KAPPA = 2.0
GAMMA_LOSS = 0.5


class ConstantLoss(LossModel):
    true_risk = None

    def __init__(self, c=2.0):
        self.c = c
        self.param_template = ParamVector([("w", np.zeros(3))])

    def eval(self, w, z):
        return self.c

    def grad(self, w, z):
        return ParamVector.zeros_like(self.param_template)


def test_excess_of_set_over_itself_is_zero():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((10, 3))
    assert excess(A, A) == 0.0


def test_excess_empty_conventions():
    assert excess([], []) == 0.0
    assert excess([], [0.0]) == 0.0
    assert excess([0.0], []) == float("inf")


def test_excess_brute_force_example():
    # max over a in A of min over b in B: max(|0-3|, |5-3|) = 3.
    assert excess([0.0, 5.0], [3.0]) == 3.0


def test_excess_matches_double_loop_oracle():
    rng = np.random.default_rng(1)
    for _ in range(50):
        A = rng.standard_normal((rng.integers(1, 8), 2))
        B = rng.standard_normal((rng.integers(1, 8), 2))
        oracle = max(min(float(np.linalg.norm(a - b)) for b in B) for a in A)
        assert excess(A, B) == pytest.approx(oracle, abs=1e-12)


def test_excess_dimension_mismatch():
    with pytest.raises(ValueError):
        excess(np.zeros((2, 2)), np.zeros((2, 3)))


def test_excess_triangle_monotonicity():
    # exs(A;B) <= exs(A;C) + exs(C;B) on 500 random finite-set triples.
    rng = np.random.default_rng(2)
    for _ in range(500):
        A = rng.standard_normal((rng.integers(1, 6), 2))
        B = rng.standard_normal((rng.integers(1, 6), 2))
        C = rng.standard_normal((rng.integers(1, 6), 2))
        assert excess(A, B) <= excess(A, C) + excess(C, B) + 1e-12


def test_rate_study_tent_gap_never_positive():
    # With the neighborhood radius at least the loss half-width, the sup-gap
    # is never positive in any trial.
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    result = rate_study(
        tent,
        interval=(-2.0, 2.0),
        gamma=GAMMA_LOSS,
        m_list=[100, 400],
        trials=60,
        alpha=0.05,
        grid_points=129,
        rng=0,
        inner_points=129,
    )
    assert result.all_nonpositive
    assert result.slope is None
    for rec in result.records:
        assert rec.q95 <= 0.0
        assert rec.n_positive == 0


def test_rate_study_reciprocal_quantiles_decrease_like_inverse_sqrt_m():
    recip = ReciprocalLoss()
    result = rate_study(
        recip,
        interval=(0.5, 2.0),
        gamma=0.5,
        m_list=[250, 1000, 4000],
        trials=80,
        alpha=0.05,
        grid_points=129,
        rng=1,
        inner_points=129,
    )
    qs = [rec.q_alpha for rec in result.records]
    assert all(q > 0 for q in qs)
    assert qs[0] > qs[1] > qs[2]
    assert result.slope == pytest.approx(-0.5, abs=0.2)


def test_rate_study_validates_inputs():
    tent = TentLoss()
    with pytest.raises(ValueError):
        rate_study(tent, (-1, 1), 0.5, [100], trials=10, alpha=0.05, grid_points=65, rng=0)
    with pytest.raises(ValueError):
        rate_study(tent, (-1, 1), 0.5, [100, 100], trials=30, alpha=0.05, grid_points=65, rng=0)


def test_rate_study_inverse_m_mode_shrinks_gamma():
    recip = ReciprocalLoss()
    result = rate_study(
        recip,
        interval=(0.5, 2.0),
        gamma=0.4,
        m_list=[100, 400],
        trials=30,
        alpha=0.05,
        grid_points=65,
        rng=2,
        inner_points=65,
        gamma_mode="inverse_m",
    )
    assert result.records[0].gamma == pytest.approx(0.4)
    assert result.records[1].gamma == pytest.approx(0.1)


def test_confidence_check_tent_passes_at_zero_epsilon():
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    result = confidence_region_check(
        tent,
        interval=(-2.0, 2.0),
        gamma=GAMMA_LOSS,
        delta_level=0.0,
        m=200,
        trials=50,
        grid_points=129,
        rng=3,
        epsilons=[0.0],
        inner_points=129,
    )
    assert result.pass_rates[0] == 1.0
    assert result.empty_level_sets == 0


def test_confidence_check_delta_above_max_risk_trivially_passes():
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    result = confidence_region_check(
        tent,
        interval=(-2.0, 2.0),
        gamma=GAMMA_LOSS,
        delta_level=10.0,
        m=100,
        trials=20,
        grid_points=65,
        rng=4,
        epsilons=[0.05],
        inner_points=65,
    )
    assert result.level_rates[0] == 1.0
    assert result.pass_rates[0] == 1.0


def test_confidence_check_gamma_at_least_diameter_trivially_passes():
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    result = confidence_region_check(
        tent,
        interval=(-2.0, 2.0),
        gamma=5.0,
        delta_level=0.0,
        m=100,
        trials=20,
        grid_points=65,
        rng=5,
        epsilons=[0.0],
        inner_points=65,
    )
    assert result.pass_rates[0] == 1.0


def test_confidence_check_pass_rate_monotone_in_epsilon():
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    result = confidence_region_check(
        tent,
        interval=(-2.0, 2.0),
        gamma=0.3,  # tighter than the loss half-width: nontrivial conditions
        delta_level=0.0,
        m=60,
        trials=40,
        grid_points=65,
        rng=6,
        epsilons=[0.0, 0.01, 0.05, 0.5],
        inner_points=65,
    )
    rates = result.pass_rates
    for a, b in zip(rates, rates[1:]):
        assert a <= b + 1e-12


def test_level_set_nesting_frequency():
    # Wherever the neighborhood sup is at most delta, the true risk should be
    # at most delta + q in at least a (1 - alpha) fraction of trials, with q
    # the empirical (1 - alpha) quantile of the sup-gap.
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    alpha = 0.05
    study = rate_study(
        tent, (-2.0, 2.0), GAMMA_LOSS, [200], trials=60, alpha=alpha,
        grid_points=65, rng=7, inner_points=65,
    )
    q = study.records[0].q_alpha
    delta = 0.1
    from diamrisk.analysis import _neighborhood_matrix, _neighborhood_sup_curve, _window_grid

    w_grid = _window_grid(tent, -2.0, 2.0, GAMMA_LOSS, 65)
    X = _neighborhood_matrix(tent, w_grid, GAMMA_LOSS, 65)
    r_true = tent.true_risk_curve(w_grid)
    hits = 0
    trials = 60
    for trial in range(trials):
        labels = tent.sample_labels(np.random.default_rng([70, trial]), 200)
        sup_curve = _neighborhood_sup_curve(tent, X, labels)
        inside = sup_curve <= delta
        if np.all(r_true[inside] <= delta + q):
            hits += 1
    assert hits / trials >= 1 - alpha


def test_gap_table_tent_matches_closed_form_bound():
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    m = 500
    table = erm_drm_gap_table(
        tent, (-2.0, 2.0), GAMMA_LOSS, m=m, trials=100, grid_points=257, rng=8,
        inner_points=129,
    )
    assert len(table) == 100
    saw_positive = False
    for rec in table:
        bound = max(0, -rec.rho) * KAPPA / m
        assert rec.erm_gap == pytest.approx(bound, abs=1e-12)
        assert rec.drm_gap <= 1e-15
        saw_positive = saw_positive or rec.erm_gap > 0
    assert saw_positive


def test_landscape_histogram_constant_loss():
    model = ConstantLoss(c=2.0)
    w = ParamVector([("w", np.array([0.5, -0.5, 1.0]))])
    hist = landscape_histogram(
        model, w, 1.0, NormKind.EUCLIDEAN, 200, [Sample()], rng=9
    )
    assert np.all(hist.values == 2.0)
    assert hist.reference == 2.0
    assert int(hist.counts.sum()) == 200


def test_landscape_histogram_counts_sum_to_n():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.3)]
    hist = landscape_histogram(quad, quad.wrap(0.1), 0.5, NormKind.EUCLIDEAN, 10000, S, rng=10)
    assert int(hist.counts.sum()) == 10000
    assert len(hist.values) == 10000


def test_landscape_histogram_1d_quadratic_sphere_is_two_points():
    # In one dimension the norm-1 sphere is {-1, +1}, so every neighborhood
    # value equals 0.5.
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    hist = landscape_histogram(quad, quad.wrap(0.0), 1.0, NormKind.EUCLIDEAN, 500, S, rng=11)
    assert np.allclose(hist.values, 0.5, rtol=1e-12)


def test_landscape_histogram_shared_directions_reuse():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    dirs = sample_directions(quad.param_template, 0.7, NormKind.EUCLIDEAN, 50, rng=12)
    h1 = landscape_histogram(
        quad, quad.wrap(0.0), 0.7, NormKind.EUCLIDEAN, 50, S, shared_directions=dirs
    )
    h2 = landscape_histogram(
        quad, quad.wrap(1.0), 0.7, NormKind.EUCLIDEAN, 50, S, shared_directions=dirs
    )
    assert h1.direction_digest == h2.direction_digest == directions_digest(dirs)
    with pytest.raises(ValueError):
        landscape_histogram(
            quad, quad.wrap(0.0), 0.7, NormKind.EUCLIDEAN, 49, S, shared_directions=dirs
        )


def test_landscape_histogram_threaded_matches_serial():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.3]), target=0.2)]
    dirs = sample_directions(quad.param_template, 0.4, NormKind.EUCLIDEAN, 64, rng=13)
    serial = landscape_histogram(
        quad, quad.wrap(0.2), 0.4, NormKind.EUCLIDEAN, 64, S, shared_directions=dirs
    )
    threaded = landscape_histogram(
        quad, quad.wrap(0.2), 0.4, NormKind.EUCLIDEAN, 64, S,
        shared_directions=dirs, max_workers=4,
    )
    assert np.array_equal(serial.values, threaded.values)


def test_sup_dominance_with_zero_direction_appended():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.4)]
    dirs = sample_directions(quad.param_template, 0.5, NormKind.EUCLIDEAN, 20, rng=14)
    dirs.append(ParamVector.zeros_like(quad.param_template))
    hist = landscape_histogram(
        quad, quad.wrap(0.9), 0.5, NormKind.EUCLIDEAN, 21, S, shared_directions=dirs
    )
    assert hist.values.max() >= hist.reference


def test_flatness_report_identical_inputs_tie():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    dirs = sample_directions(quad.param_template, 0.3, NormKind.EUCLIDEAN, 30, rng=15)
    hist = landscape_histogram(
        quad, quad.wrap(0.5), 0.3, NormKind.EUCLIDEAN, 30, S, shared_directions=dirs
    )
    report = flatness_report(hist, hist)
    assert report.erm_gap == report.drm_gap
    assert report.flatter is None


def test_flatness_report_constant_loss_zero_gap():
    model = ConstantLoss()
    w = ParamVector([("w", np.zeros(3))])
    dirs = sample_directions(w, 1.0, NormKind.EUCLIDEAN, 25, rng=16)
    hist = landscape_histogram(
        model, w, 1.0, NormKind.EUCLIDEAN, 25, [Sample()], shared_directions=dirs
    )
    report = flatness_report(hist, hist)
    assert report.erm_gap == 0.0 and report.drm_gap == 0.0


def test_flatness_report_flags_flatter_center():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    dirs = sample_directions(quad.param_template, 0.5, NormKind.EUCLIDEAN, 40, rng=17)
    sharp = landscape_histogram(
        quad, quad.wrap(2.0), 0.5, NormKind.EUCLIDEAN, 40, S, shared_directions=dirs
    )
    flat = landscape_histogram(
        quad, quad.wrap(0.0), 0.5, NormKind.EUCLIDEAN, 40, S, shared_directions=dirs
    )
    report = flatness_report(sharp, flat)
    assert report.flatter == "drm"


def test_flatness_report_rejects_mismatched_directions():
    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    h1 = landscape_histogram(quad, quad.wrap(0.0), 0.5, NormKind.EUCLIDEAN, 10, S, rng=18)
    h2 = landscape_histogram(quad, quad.wrap(0.0), 0.5, NormKind.EUCLIDEAN, 10, S, rng=19)
    with pytest.raises(ValueError):
        flatness_report(h1, h2)


def test_csv_writers_roundtrip_shapes(tmp_path):
    tent = TentLoss(KAPPA, GAMMA_LOSS)
    study = rate_study(
        tent, (-2.0, 2.0), GAMMA_LOSS, [50, 100], trials=30, alpha=0.05,
        grid_points=65, rng=20, inner_points=65,
    )
    rate_path = tmp_path / "rate.csv"
    write_rate_csv(study, rate_path)
    lines = rate_path.read_text().splitlines()
    header_idx = next(i for i, ln in enumerate(lines) if not ln.startswith("#"))
    assert lines[header_idx] == "m,trials,q05,q50,q95,slope"
    assert len(lines) == header_idx + 1 + 2

    conf = confidence_region_check(
        tent, (-2.0, 2.0), GAMMA_LOSS, 0.0, m=50, trials=10, grid_points=65,
        rng=21, epsilons=[0.0, 0.1], inner_points=65,
    )
    conf_path = tmp_path / "confidence.csv"
    write_confidence_csv(conf, conf_path)
    lines = conf_path.read_text().splitlines()
    assert "epsilon,pass_rate" in lines
    assert lines[-1].count(",") == 1

    quad = QuadraticLoss(dim=1)
    S = [Sample(features=np.array([1.0]), target=0.0)]
    hist = landscape_histogram(quad, quad.wrap(0.0), 1.0, NormKind.EUCLIDEAN, 25, S, rng=22)
    hist_path = tmp_path / "hist.csv"
    write_hist_csv(hist, hist_path)
    lines = hist_path.read_text().splitlines()
    values = [float(x) for x in lines if not x.startswith("#")]
    assert len(values) == 25
