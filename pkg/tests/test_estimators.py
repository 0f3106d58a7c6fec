"""Estimator tests: phase-ramp model, both cost functions, the lattice
search, refinement, and the two residual diagnostics."""

import numpy as np
import numpy.testing as npt
import pytest

from ofdm_sync_lab import (
    DegenerateObservationError,
    GridEvaluator,
    GridSpec,
    ImpairmentParams,
    PreambleObservation,
    TrainingSymbols,
    derive_rng,
    demodulate_frame,
    estimate_nguyenle,
    estimate_proposed,
    generate_training_symbols,
    grid_search,
    make_config,
    make_grid,
    nguyenle_cost,
    nguyenle_observable,
    noise_variance_from_snr,
    pair_residual,
    proposed_cost,
    ratio_residual,
    sample_channel,
    symbol_phase_ramp,
    synthesize_frame,
)

CFG = make_config(64, 52, 16)
GRID = make_grid()


def observation(seed, cfo, sfo, snr_db=None):
    """Seeded demodulated preamble; noiseless when snr_db is None."""
    training = generate_training_symbols(derive_rng(seed, "training"), CFG)
    channel = sample_channel(derive_rng(seed, "channel"))
    noise_var = 0.0 if snr_db is None \
        else noise_variance_from_snr(CFG, snr_db)
    rngs = (None, None) if snr_db is None \
        else (derive_rng(seed, "noise0"), derive_rng(seed, "noise1"))
    frame = synthesize_frame(CFG, training, channel,
                             ImpairmentParams(cfo, sfo, noise_var), rngs)
    return demodulate_frame(frame, CFG, training)


# -------------------------------------------------------------------- grid


def test_default_grid_axes():
    assert GRID.shape == (101, 101)
    npt.assert_array_equal(GRID.cfo_values, 0.01 * np.arange(-50, 51))
    npt.assert_array_equal(GRID.sfo_values, 1e-5 * np.arange(-50, 51))
    assert GRID.cfo_values[50] == 0.0
    assert GRID.sfo_values[50] == 0.0
    assert GRID.cfo_values[0] == pytest.approx(-0.5, rel=1e-15)
    assert GRID.cfo_values[-1] == pytest.approx(0.5, rel=1e-15)
    assert GRID.sfo_values[0] == pytest.approx(-5e-4, rel=1e-15)


def test_zero_max_pins_axis():
    grid = make_grid(cfo_max=0.0)
    npt.assert_array_equal(grid.cfo_values, [0.0])
    assert grid.sfo_values.size == 101
    grid2 = make_grid(sfo_max=0.0)
    npt.assert_array_equal(grid2.sfo_values, [0.0])


def test_make_grid_rejects_bad_steps():
    with pytest.raises(ValueError):
        make_grid(cfo_step=0.0)
    with pytest.raises(ValueError):
        make_grid(sfo_step=-1e-5)
    with pytest.raises(ValueError):
        make_grid(cfo_max=-0.1)


def test_grid_spec_validation():
    with pytest.raises(ValueError, match="ascending"):
        GridSpec(np.array([0.1, 0.0]), np.array([0.0]))
    with pytest.raises(ValueError, match="non-empty"):
        GridSpec(np.array([]), np.array([0.0]))
    with pytest.raises(ValueError, match="non-finite"):
        GridSpec(np.array([0.0, np.nan]), np.array([0.0]))
    assert GridSpec(np.array([0.0]), np.array([-1.0, 1.0])).shape == (1, 2)


# -------------------------------------------------------------------- ramp


def test_ramp_is_one_at_zero_offsets():
    ks = CFG.subcarrier_indices
    npt.assert_array_equal(symbol_phase_ramp(ks, 0.0, 0.0, CFG),
                           np.ones(52))


def test_ramp_unit_modulus():
    ks = CFG.subcarrier_indices
    for cfo, sfo in ((0.212, 0.000112), (-0.5, 5e-4), (0.37, -2e-4)):
        ramp = symbol_phase_ramp(ks, cfo, sfo, CFG)
        npt.assert_allclose(np.abs(ramp), 1.0, rtol=0, atol=1e-14)


def test_ramp_frozen_phase():
    """k=0, cfo=0.25, sfo=0: phase is 2 pi (N+N_g) 0.25 / N = 2 pi 20/64."""
    ramp = symbol_phase_ramp(0, 0.25, 0.0, CFG)
    assert np.angle(ramp) == pytest.approx(1.9634954084936207, rel=1e-12)


def test_ramp_sfo_phase_scales_with_subcarrier():
    sfo = 3e-4
    for k in (-26, -1, 10, 25):
        ramp = symbol_phase_ramp(k, 0.0, sfo, CFG)
        expected = 2 * np.pi * 80.0 / 64.0 * k * sfo
        assert np.angle(ramp) == pytest.approx(expected, abs=1e-13)


# ----------------------------------------------------------- proposed cost


def test_proposed_cost_zero_at_exact_model_match():
    rng = np.random.default_rng(2)
    tr = generate_training_symbols(derive_rng(2, "training"), CFG)
    r0 = rng.standard_normal(52) + 1j * rng.standard_normal(52)
    cfo, sfo = 0.17, -3e-5
    r1 = symbol_phase_ramp(CFG.subcarrier_indices, cfo, sfo, CFG) * r0
    obs = PreambleObservation(r0, r1, tr)
    assert proposed_cost(obs, cfo, sfo, CFG) < 1e-25


def test_proposed_cost_nonnegative_and_scalar():
    obs = observation(4, 0.212, 0.000112, snr_db=10.0)
    value = proposed_cost(obs, -0.3, 2e-4, CFG)
    assert isinstance(value, float)
    assert value >= 0.0


def test_proposed_cost_matches_direct_formula():
    obs = observation(5, 0.212, 0.000112, snr_db=10.0)
    ks = CFG.subcarrier_indices
    for cfo, sfo in ((0.0, 0.0), (0.212, 0.000112), (-0.41, -4.7e-4)):
        ramp = np.exp(1j * 2 * np.pi * 80.0 / 64.0
                      * (ks * sfo + cfo * (1.0 + sfo)))
        direct = float(np.sum(np.abs(obs.r1 - ramp * obs.r0) ** 2))
        assert proposed_cost(obs, cfo, sfo, CFG) == pytest.approx(
            direct, rel=1e-12)


def test_proposed_cost_broadcasts_like_scalar_calls():
    obs = observation(6, 0.1, 1e-4, snr_db=15.0)
    cfos = np.array([-0.2, 0.0, 0.1])
    sfos = np.array([-1e-4, 0.0, 1e-4, 3e-4])
    surface = proposed_cost(obs, cfos[:, None], sfos[None, :], CFG)
    assert surface.shape == (3, 4)
    for i, cfo in enumerate(cfos):
        for j, sfo in enumerate(sfos):
            assert surface[i, j] == pytest.approx(
                proposed_cost(obs, float(cfo), float(sfo), CFG), rel=1e-12)


def test_noiseless_truth_is_strict_surface_minimum():
    """eta=0, eps*=0.21: the truth lattice point beats every other point of
    the full default surface (its +/-0.8 CFO alias falls outside the grid)."""
    eps_true = float(GRID.cfo_values[71])
    obs = observation(7, eps_true, 0.0)
    surface = GridEvaluator(GRID, CFG).proposed_surface(obs)
    i, j = np.unravel_index(np.argmin(surface), surface.shape)
    assert (i, j) == (71, 50)
    flat = np.sort(surface.ravel())
    assert flat[0] < 1e-25
    assert flat[1] > 1e-6


# ------------------------------------------------------------ ratio branch


def test_observable_is_one_for_identical_symbols():
    obs = observation(8, 0.0, 0.0)
    npt.assert_allclose(nguyenle_observable(obs, CFG), 1.0,
                        rtol=0, atol=1e-12)


def test_observable_constant_ramp_when_sfo_is_zero():
    cfo = 0.21
    obs = observation(9, cfo, 0.0)
    y = nguyenle_observable(obs, CFG)
    expected = np.exp(1j * 2 * np.pi * 80.0 * cfo / 64.0)
    npt.assert_allclose(y, expected, rtol=0, atol=1e-12)
    # and the ratio residual at the truth is zero to the same tolerance
    npt.assert_allclose(ratio_residual(obs, cfo, 0.0, CFG), 0.0,
                        rtol=0, atol=1e-12)


def test_observable_flags_degenerate_bins():
    obs = observation(10, 0.1, 1e-4, snr_db=20.0)
    r0 = obs.r0.copy()
    r0[3] = 0.0
    broken = PreambleObservation(r0, obs.r1, obs.training)
    with pytest.raises(DegenerateObservationError) as excinfo:
        nguyenle_observable(broken, CFG)
    assert excinfo.value.subcarriers == (-23,)
    with pytest.raises(DegenerateObservationError):
        ratio_residual(broken, 0.1, 1e-4, CFG)
    # the pair residual does not divide, so it stays usable
    assert np.all(np.isfinite(pair_residual(broken, 0.1, 1e-4, CFG)))


def test_nguyenle_cost_zeros():
    tr = generate_training_symbols(derive_rng(11, "training"), CFG)
    ones = np.ones(52, dtype=complex)
    assert nguyenle_cost(ones, 0.0, 0.0, CFG) == 0.0
    eps = float(GRID.cfo_values[71])
    y = np.full(52, np.exp(1j * 2 * np.pi * 80.0 * eps / 64.0))
    assert nguyenle_cost(y, eps, 0.0, CFG) < 1e-25
    obs = observation(11, 0.2, 2e-4, snr_db=5.0)
    assert nguyenle_cost(nguyenle_observable(obs, CFG), -0.1, 1e-4,
                         CFG) >= 0.0


def test_nguyenle_cost_matches_direct_formula():
    obs = observation(12, 0.212, 0.000112, snr_db=10.0)
    y = nguyenle_observable(obs, CFG)
    ks = CFG.subcarrier_indices
    cfo, sfo = -0.07, 2.3e-4
    ramp = np.exp(1j * 2 * np.pi * 80.0 / 64.0
                  * (ks * sfo + cfo * (1.0 + sfo)))
    direct = float(np.sum(np.abs(y - ramp) ** 2))
    assert nguyenle_cost(y, cfo, sfo, CFG) == pytest.approx(direct,
                                                            rel=1e-12)


# ------------------------------------------------------------- grid search


def bowl(cfo, sfo):
    return (cfo - 0.21) ** 2 + (sfo * 1e4) ** 2


def test_grid_search_finds_separable_bowl_minimum():
    result = grid_search(bowl, GRID)
    assert result.cfo == 0.21
    assert result.sfo == 0.0
    assert result.cost == pytest.approx(0.0, abs=1e-20)
    assert result.method == "grid"


def test_grid_search_tie_breaks_to_first_lattice_point():
    result = grid_search(lambda e, h: np.broadcast_to(
        1.0, np.broadcast(e, h).shape), GRID)
    assert result.cfo == GRID.cfo_values[0]
    assert result.sfo == GRID.sfo_values[0]


def test_grid_search_scalar_only_callable_falls_back():
    calls = {"n": 0}

    def scalar_bowl(cfo, sfo):
        if np.ndim(cfo) or np.ndim(sfo):
            raise TypeError("scalar inputs only")
        calls["n"] += 1
        return bowl(cfo, sfo)

    result = grid_search(scalar_bowl, GRID)
    assert calls["n"] >= GRID.shape[0] * GRID.shape[1]
    assert (result.cfo, result.sfo) == (0.21, 0.0)


def test_grid_search_rejects_non_finite_cost():
    def poisoned(cfo, sfo):
        value = bowl(np.asarray(cfo), np.asarray(sfo))
        return np.where(np.asarray(cfo) == GRID.cfo_values[3],
                        np.nan, value)

    with pytest.raises(ValueError, match="non-finite cost"):
        grid_search(poisoned, GRID)


def test_grid_search_single_point_grid():
    grid = GridSpec(np.array([0.3]), np.array([0.0]))
    result = grid_search(bowl, grid, method="proposed")
    assert (result.cfo, result.sfo) == (0.3, 0.0)
    assert result.method == "proposed"


def test_degenerate_grid_collapses_to_cfo_only_search():
    """Pinning the SFO axis turns the joint search into the classic
    one-dimensional CFO ramp fit."""
    grid = make_grid(sfo_max=0.0)
    obs = observation(13, 0.21, 0.0, snr_db=25.0)
    result = estimate_proposed(obs, grid, CFG)
    assert result.sfo == 0.0
    line = proposed_cost(obs, grid.cfo_values, 0.0, CFG)
    assert result.cfo == grid.cfo_values[np.argmin(line)]


def test_fully_pinned_grid_returns_pair_mismatch_energy():
    grid = make_grid(cfo_max=0.0, sfo_max=0.0)
    obs = observation(14, 0.1, 1e-4, snr_db=10.0)
    result = estimate_proposed(obs, grid, CFG)
    assert (result.cfo, result.sfo) == (0.0, 0.0)
    assert result.cost == pytest.approx(
        float(np.sum(np.abs(obs.r1 - obs.r0) ** 2)), rel=1e-12)


# ------------------------------------------------- evaluator and estimates


def test_evaluator_matches_generic_grid_search():
    obs = observation(15, 0.212, 0.000112, snr_db=10.0)
    ev = GridEvaluator(GRID, CFG)

    got = ev.search_proposed(obs)
    ref = grid_search(lambda e, h: proposed_cost(obs, e, h, CFG), GRID,
                      method="proposed")
    assert (got.cfo, got.sfo) == (ref.cfo, ref.sfo)
    assert got.cost == pytest.approx(ref.cost, rel=1e-12)

    got_nl = ev.search_nguyenle(obs)
    y = nguyenle_observable(obs, CFG)
    ref_nl = grid_search(lambda e, h: nguyenle_cost(y, e, h, CFG), GRID,
                         method="nguyen_le")
    assert (got_nl.cfo, got_nl.sfo) == (ref_nl.cfo, ref_nl.sfo)
    assert got_nl.cost == pytest.approx(ref_nl.cost, rel=1e-12)


def test_estimates_at_zero_offsets():
    obs = observation(16, 0.0, 0.0)
    prop = estimate_proposed(obs, GRID, CFG)
    nl = estimate_nguyenle(obs, GRID, CFG)
    assert (prop.cfo, prop.sfo) == (0.0, 0.0)
    assert (nl.cfo, nl.sfo) == (0.0, 0.0)
    assert prop.method == "proposed"
    assert nl.method == "nguyen_le"


@pytest.mark.parametrize("lattice_index", [21, 38, 50, 71, 79])
def test_noiseless_on_lattice_recovery_is_exact(lattice_index):
    """eta=0, |eps*| < 0.3: the unique zero-cost lattice point is the truth
    and both estimators return it exactly."""
    eps_true = float(GRID.cfo_values[lattice_index])
    assert abs(eps_true) < 0.3
    obs = observation(17, eps_true, 0.0)
    prop = estimate_proposed(obs, GRID, CFG)
    nl = estimate_nguyenle(obs, GRID, CFG)
    assert (prop.cfo, prop.sfo) == (eps_true, 0.0)
    assert (nl.cfo, nl.sfo) == (eps_true, 0.0)
    assert prop.cost < 1e-25
    assert nl.cost < 1e-25


def test_cfo_alias_beyond_0p3_is_a_cost_tie():
    """The eta=0 cost is periodic in eps with period N/(N+N_g) = 0.8, so
    eps* = 0.35 and its in-grid alias -0.45 are analytically tied; the
    search lands on one of the two with (numerically) zero cost."""
    eps_true = float(GRID.cfo_values[85])   # 0.35
    alias = float(GRID.cfo_values[5])       # -0.45
    obs = observation(19, eps_true, 0.0)
    result = estimate_proposed(obs, GRID, CFG)
    assert result.cfo in (eps_true, alias)
    assert result.sfo == 0.0
    assert result.cost < 1e-25
    assert proposed_cost(obs, eps_true, 0.0, CFG) < 1e-25
    assert proposed_cost(obs, alias, 0.0, CFG) < 1e-25


def test_estimate_nguyenle_propagates_degenerate_error():
    obs = observation(20, 0.1, 1e-4, snr_db=15.0)
    r0 = obs.r0.copy()
    r0[0] = 0.0
    broken = PreambleObservation(r0, obs.r1, obs.training)
    with pytest.raises(DegenerateObservationError):
        estimate_nguyenle(broken, GRID, CFG)
    # the pair fit is division-free and survives the same observation
    result = estimate_proposed(broken, GRID, CFG)
    assert np.isfinite(result.cost)


# ------------------------------------------------------------- invariances


def test_costs_invariant_under_common_rotation():
    obs = observation(21, 0.212, 0.000112, snr_db=10.0)
    phase = np.exp(1j * 1.234)
    rotated = PreambleObservation(phase * obs.r0, phase * obs.r1,
                                  obs.training)
    a = estimate_proposed(obs, GRID, CFG)
    b = estimate_proposed(rotated, GRID, CFG)
    assert (a.cfo, a.sfo) == (b.cfo, b.sfo)
    assert b.cost == pytest.approx(a.cost, rel=1e-12)
    for cfo, sfo in ((0.0, 0.0), (-0.2, 3e-4)):
        assert proposed_cost(rotated, cfo, sfo, CFG) == pytest.approx(
            proposed_cost(obs, cfo, sfo, CFG), rel=1e-12)


def test_proposed_cost_scales_quadratically_with_amplitude():
    obs = observation(22, 0.212, 0.000112, snr_db=10.0)
    scale = 3.7
    scaled = PreambleObservation(scale * obs.r0, scale * obs.r1,
                                 obs.training)
    a = estimate_proposed(obs, GRID, CFG)
    b = estimate_proposed(scaled, GRID, CFG)
    assert (a.cfo, a.sfo) == (b.cfo, b.sfo)
    assert b.cost == pytest.approx(scale ** 2 * a.cost, rel=1e-12)


# -------------------------------------------------------------- refinement


def test_refine_moves_toward_off_lattice_truth():
    eps_true, eta_true = 0.212, 0.000112
    obs = observation(23, eps_true, eta_true)
    lattice = estimate_proposed(obs, GRID, CFG)
    refined = estimate_proposed(obs, GRID, CFG, refine=True)
    assert abs(refined.cfo - lattice.cfo) <= 0.005 + 1e-12
    assert abs(refined.sfo - lattice.sfo) <= 5e-6 + 1e-15
    assert abs(refined.cfo - eps_true) < abs(lattice.cfo - eps_true)
    assert abs(refined.sfo - eta_true) < abs(lattice.sfo - eta_true)


def test_refine_keeps_lattice_point_at_grid_edge():
    obs = observation(24, -0.5, 0.0)
    refined = estimate_proposed(obs, GRID, CFG, refine=True)
    assert refined.cfo == -0.5


def test_default_estimate_is_a_lattice_point():
    obs = observation(25, 0.212, 0.000112, snr_db=10.0)
    result = estimate_proposed(obs, GRID, CFG)
    assert result.cfo in GRID.cfo_values
    assert result.sfo in GRID.sfo_values


# --------------------------------------------------------------- residuals


def test_pair_residual_vanishes_without_sfo():
    obs = observation(26, 0.37, 0.0)
    npt.assert_allclose(pair_residual(obs, 0.37, 0.0, CFG), 0.0,
                        rtol=0, atol=1e-12)


def test_pair_residual_zero_offsets_noiseless():
    obs = observation(27, 0.0, 0.0)
    npt.assert_allclose(pair_residual(obs, 0.0, 0.0, CFG), 0.0,
                        rtol=0, atol=1e-13)


def test_pair_residual_noise_only_power():
    """Signal-free preamble: E ||N||^2 = 2 K sigma_w^2 (the ramp is unit
    modulus, so the two noise spectra add in power)."""
    zeros = np.zeros(52, dtype=complex)
    tr = TrainingSymbols(zeros, zeros)
    channel = sample_channel(derive_rng(28, "channel"))
    noise_var = 0.1
    rng0 = derive_rng(28, "noise0")
    rng1 = derive_rng(28, "noise1")
    total = 0.0
    n_trials = 2000
    for _ in range(n_trials):
        frame = synthesize_frame(CFG, tr, channel,
                                 ImpairmentParams(0.212, 0.000112,
                                                  noise_var),
                                 rngs=(rng0, rng1))
        obs = demodulate_frame(frame, CFG, tr)
        n_vec = pair_residual(obs, 0.212, 0.000112, CFG)
        total += float(np.sum(np.abs(n_vec) ** 2))
    mean = total / n_trials
    assert mean == pytest.approx(2 * 52 * noise_var, rel=0.05)
