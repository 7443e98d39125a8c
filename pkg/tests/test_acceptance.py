"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Lines are written to the real stdout (bypassing capture) so the criterion
status is always visible in the run log. Measured values are included so a
failing tolerance shows exactly how far off it is.
"""

import json
import math
import sys
import time

import pytest
from click.testing import CliRunner

from uvol import (
    AffineOf,
    Call,
    ConstantControl,
    PdeGrid,
    TimeGrid,
    VolatilityBand,
    default_control_family,
    estimate_g_expectation,
    extract_strategy,
    g_apply,
    girsanov_qv_check,
    compare_sdes,
    hedging_prices,
    price_at,
    replicate,
    representation_check,
    solve_bsb,
    solve_g_heat,
)
from uvol.cli import main as cli_main
from uvol.scenario import (
    CoefficientField,
    SdeSpec,
    discounted_terminal_payoff,
    terminal_quadratic_variation,
)
from tests.conftest import constant_model
from tests.test_closedform import BS_CALL_ATM_10, BS_CALL_ATM_20, BS_CALL_ATM_30, BFLY_10, BFLY_30


def report(criterion: str, passed: bool, detail: str) -> None:
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {criterion}: {status} | {detail}", file=sys.__stdout__, flush=True)


def pde_prices(payoff, model, band, n_x):
    grid = PdeGrid(anchor_spot=100.0, n_x=n_x)
    hi = price_at(solve_bsb(payoff, model, band, grid, side="super"), 0.0, 100.0)
    lo = price_at(solve_bsb(payoff, model, band, grid, side="sub"), 0.0, 100.0)
    return hi, lo


class TestCriterion1ConvexReduction:
    def test_default_grid(self, model_ex, band_wide, call100):
        start = time.perf_counter()
        hi, lo = pde_prices(call100, model_ex, band_wide, 400)
        elapsed = time.perf_counter() - start
        rel_hi = abs(hi - BS_CALL_ATM_30) / BS_CALL_ATM_30
        rel_lo = abs(lo - BS_CALL_ATM_10) / BS_CALL_ATM_10
        ok = rel_hi <= 0.005 and rel_lo <= 0.005 and elapsed < 10.0
        report(
            "1a (n_x=400)",
            ok,
            f"super rel err {rel_hi:.2e}, sub rel err {rel_lo:.2e} (tol 5e-3), {elapsed:.2f}s",
        )
        assert rel_hi <= 0.005 and rel_lo <= 0.005
        assert elapsed < 10.0

    def test_fine_grid(self, model_ex, band_wide, call100):
        start = time.perf_counter()
        hi, lo = pde_prices(call100, model_ex, band_wide, 1600)
        elapsed = time.perf_counter() - start
        rel_hi = abs(hi - BS_CALL_ATM_30) / BS_CALL_ATM_30
        rel_lo = abs(lo - BS_CALL_ATM_10) / BS_CALL_ATM_10
        ok = rel_hi <= 0.001 and rel_lo <= 0.001 and elapsed < 120.0
        report(
            "1b (n_x=1600)",
            ok,
            f"super rel err {rel_hi:.2e}, sub rel err {rel_lo:.2e} (tol 1e-3), {elapsed:.2f}s",
        )
        assert rel_hi <= 0.001 and rel_lo <= 0.001
        assert elapsed < 120.0


class TestCriterion2DegenerateBand:
    def test_sides_collapse(self, model_ex, call100):
        band = VolatilityBand(0.04, 0.04)
        hi, lo = pde_prices(call100, model_ex, band, 400)
        gap_rel = abs(hi - lo) / hi
        rel_hi = abs(hi - BS_CALL_ATM_20) / BS_CALL_ATM_20
        rel_lo = abs(lo - BS_CALL_ATM_20) / BS_CALL_ATM_20
        ok = gap_rel <= 0.001 and rel_hi <= 0.005 and rel_lo <= 0.005
        report(
            "2 (degenerate band)",
            ok,
            f"side gap {gap_rel:.2e} (tol 1e-3), errs vs closed form {rel_hi:.2e}/{rel_lo:.2e} (tol 5e-3)",
        )
        assert ok


class TestCriterion3NonConvexGap:
    def test_butterfly_margins_stable(self, model_ex, band_wide, butterfly):
        margins = {}
        for n_x in (400, 800):
            hi, lo = pde_prices(butterfly, model_ex, band_wide, n_x)
            margins[n_x] = (hi - max(BFLY_10, BFLY_30), min(BFLY_10, BFLY_30) - lo)
        sup_change = abs(margins[800][0] - margins[400][0]) / margins[400][0]
        sub_change = abs(margins[800][1] - margins[400][1]) / margins[400][1]
        ok = (
            margins[400][0] > 0
            and margins[400][1] > 0
            and sup_change < 0.10
            and sub_change < 0.10
        )
        report(
            "3 (butterfly gap)",
            ok,
            f"margins@400 super {margins[400][0]:.4f} sub {margins[400][1]:.4f}, "
            f"grid drift {sup_change:.2%}/{sub_change:.2%} (tol 10%)",
        )
        assert ok


class TestCriterion4Sandwich:
    @pytest.mark.parametrize("name", ["call", "butterfly"])
    def test_mc_below_pde(self, name, model_ex, band_wide, call100, butterfly):
        payoff = call100 if name == "call" else butterfly
        rep = representation_check(
            payoff,
            model_ex,
            band_wide,
            TimeGrid(0.0, 1.0, 512),
            100_000,
            default_control_family(band_wide, 100.0),
            1,
            100.0,
        )
        bound = rep.pde_price + 3.0 * rep.stderr + rep.bias_allowance
        ok = rep.mc_value <= bound
        report(
            f"4 ({name})",
            ok,
            f"mc sup {rep.mc_value:.5f} <= pde {rep.pde_price:.5f} + 3se+bias {bound - rep.pde_price:.5f} "
            f"(argmax {rep.argmax_label})",
        )
        assert ok


class TestCriterion5Representation:
    def test_state_price_representation_and_invariance(self, call100, band_wide):
        grid = TimeGrid(0.0, 1.0, 512)
        fam = (ConstantControl(0.01), ConstantControl(0.09))
        runs = {}
        for tag, eta, mu in (("premium", 0.07, 0.5), ("neutral", 0.02, 0.0)):
            rep = representation_check(
                call100,
                constant_model(r=0.02, eta=eta, mu=mu),
                band_wide,
                grid,
                100_000,
                fam,
                1,
                100.0,
            )
            runs[tag] = rep
        tol = {t: 3.0 * r.stderr + r.bias_allowance for t, r in runs.items()}
        agree = {t: abs(r.gap) <= tol[t] for t, r in runs.items()}
        drift_gap = abs(runs["premium"].mc_value - runs["neutral"].mc_value)
        combined = tol["premium"] + tol["neutral"]
        ok = all(agree.values()) and drift_gap <= combined
        report(
            "5 (state-price representation)",
            ok,
            f"gaps {runs['premium'].gap:.4f}/{runs['neutral'].gap:.4f} within {tol['premium']:.4f}/{tol['neutral']:.4f}; "
            f"growth-coefficient sensitivity {drift_gap:.4f} <= {combined:.4f}",
        )
        assert ok


class TestCriterion6BandHeat:
    def test_quadratic_profiles(self, band_wide):
        grid = PdeGrid(anchor_spot=0.0, n_x=399, x_mode="arithmetic", x_min=-2.0, x_max=2.0)
        up = price_at(solve_g_heat(lambda x: x**2, band_wide, 1.0, grid), 1.0, 0.0)
        down = price_at(solve_g_heat(lambda x: -(x**2), band_wide, 1.0, grid), 1.0, 0.0)
        rel_up = abs(up - band_wide.v_high) / band_wide.v_high
        rel_down = abs(down + band_wide.v_low) / band_wide.v_low
        ok = rel_up <= 0.005 and rel_down <= 0.005
        report(
            "6 (band heat equation)",
            ok,
            f"u(1,0)={up:.6f} vs {band_wide.v_high} ({rel_up:.2e}); "
            f"{down:.6f} vs {-band_wide.v_low} ({rel_down:.2e}); tol 5e-3",
        )
        assert ok


class TestCriterion7Comparison:
    def test_shifted_pairs_ordered(self, band_wide):
        start = time.perf_counter()
        c = CoefficientField.constant
        sigma = CoefficientField.affine(0.1, 0.05)
        base = SdeSpec(b=c(0.05), h=c(0.1), sigma=sigma, initial=1.0)
        drift_up = SdeSpec(b=c(1.05), h=c(0.1), sigma=sigma, initial=1.0)
        init_up = SdeSpec(b=c(0.05), h=c(0.1), sigma=sigma, initial=2.0)
        grid = TimeGrid(0.0, 1.0, 64)
        reps = [
            compare_sdes(drift_up, base, ConstantControl(0.09), band_wide, grid, 1000, 7),
            compare_sdes(init_up, base, ConstantControl(0.09), band_wide, grid, 1000, 7),
        ]
        elapsed = time.perf_counter() - start
        ok = all(r.certified and r.violation_count == 0 for r in reps) and elapsed < 5.0
        report(
            "7 (comparison harness)",
            ok,
            f"violations {[r.violation_count for r in reps]}, max {max(r.max_violation for r in reps):.2e}, "
            f"{elapsed:.2f}s (<5s)",
        )
        assert ok


class TestCriterion8Girsanov:
    def test_cross_variation_and_qv_rate(self, model_ex, band_wide):
        g1 = girsanov_qv_check(model_ex, ConstantControl(0.04), band_wide, TimeGrid(0.0, 1.0, 256), 1000, 7)
        g2 = girsanov_qv_check(model_ex, ConstantControl(0.04), band_wide, TimeGrid(0.0, 1.0, 512), 1000, 7)
        ratio = g1.max_qv_gap / g2.max_qv_gap
        ok = g1.cross_variation_gap == 0.0 and 1.5 <= ratio <= 3.0
        report(
            "8 (drift-shift checks)",
            ok,
            f"cross-variation gap {g1.cross_variation_gap!r} (bit-exact zero), qv-gap ratio {ratio:.3f} in [1.5, 3.0]",
        )
        assert ok


class TestCriterion9Replication:
    def test_worst_case_hedge_accuracy(self, model_ex, band_wide, call100):
        results = {}
        for n_x, n_steps in ((400, 512), (800, 1024)):
            sol = solve_bsb(call100, model_ex, band_wide, PdeGrid(anchor_spot=100.0, n_x=n_x), side="super")
            strat = extract_strategy(sol, model_ex)
            initial = price_at(sol, 0.0, 100.0)
            rep = replicate(
                strat,
                initial,
                call100,
                model_ex,
                ConstantControl(band_wide.v_high),
                TimeGrid(0.0, 1.0, n_steps),
                4096,
                17,
                band=band_wide,
            )
            results[(n_x, n_steps)] = (rep.mean_abs_surplus, initial)
        coarse, initial = results[(400, 512)]
        fine = results[(800, 1024)][0]
        decreases = fine < coarse
        within = coarse <= 0.01 * initial
        report(
            "9a (worst-case replication)",
            within and decreases,
            f"mean|surplus| {coarse:.4f} = {coarse / initial:.2%} of price (tol 1%), "
            f"refined {fine:.4f} ({'decreases' if decreases else 'does not decrease'})",
        )
        assert decreases
        assert within  # noise floor of discrete hedging sits near 4%; see ledger

    def test_low_variance_superreplication(self, model_ex, band_wide, call100):
        sol = solve_bsb(call100, model_ex, band_wide, PdeGrid(anchor_spot=100.0, n_x=400), side="super")
        strat = extract_strategy(sol, model_ex)
        initial = price_at(sol, 0.0, 100.0)
        rep = replicate(
            strat,
            initial,
            call100,
            model_ex,
            ConstantControl(band_wide.v_low),
            TimeGrid(0.0, 1.0, 512),
            4096,
            17,
            band=band_wide,
        )
        eps = 0.005 * initial
        min_ok = rep.min_surplus >= -eps
        runup_ok = rep.residual_max_runup <= eps
        report(
            "9b (low-variance superreplication)",
            min_ok and runup_ok,
            f"min surplus {rep.min_surplus:.4f} >= {-eps:.4f}; residual run-up "
            f"{rep.residual_max_runup:.4f} vs eps {eps:.4f}",
        )
        assert min_ok
        assert runup_ok  # terminal-kink hedge noise exceeds eps at 512 steps; see ledger


class TestCriterion10Properties:
    def test_selector_identity_exact(self):
        band = VolatilityBand(0.01, 0.09)
        alphas = [0.0, 1.0, -1.0, 0.3333333333333333, -17.25, 1e12, -1e-12]
        ok = True
        for a in alphas:
            lhs = g_apply(a, band) + g_apply(-a, band)
            mag = abs(a)
            rhs = 0.5 * band.v_high * mag - 0.5 * band.v_low * mag
            ok = ok and (lhs == rhs)
        report("10a (selector identity)", ok, f"exact over {len(alphas)} probes")
        assert ok

    def test_translation_and_homogeneity(self, model_ex, band_wide, butterfly):
        c = 2.0
        base = hedging_prices(butterfly, model_ex, band_wide, 0.0, 100.0, PdeGrid(anchor_spot=100.0, n_x=128))
        moved = hedging_prices(
            AffineOf(butterfly, shift=c), model_ex, band_wide, 0.0, 100.0, PdeGrid(anchor_spot=100.0, n_x=128)
        )
        doubled = hedging_prices(
            AffineOf(butterfly, scale=2.0), model_ex, band_wide, 0.0, 100.0, PdeGrid(anchor_spot=100.0, n_x=128)
        )
        bond = c * math.exp(-0.02)
        shift_err = abs((moved.super_price - base.super_price) - bond)
        homog_exact = doubled.super_price == 2.0 * base.super_price and doubled.sub_price == 2.0 * base.sub_price
        ok = shift_err <= 1e-4 and homog_exact
        report(
            "10b (translation/homogeneity)",
            ok,
            f"bond-shift error {shift_err:.2e} (tol 1e-4), doubling exact {homog_exact}",
        )
        assert ok

    def test_estimator_properties(self, model_ex, band_wide):
        grid = TimeGrid(0.0, 1.0, 64)
        functional = discounted_terminal_payoff(Call(100.0), model_ex, grid)
        small = [ConstantControl(band_wide.v_low), ConstantControl(band_wide.v_high)]
        big = list(default_control_family(band_wide, 100.0))
        e_small = estimate_g_expectation(functional, small, model_ex, grid, 4000, 3, 100.0)
        e_big = estimate_g_expectation(functional, big, model_ex, grid, 4000, 3, 100.0)
        qv = terminal_quadratic_variation()
        e_pos = estimate_g_expectation(qv, small, model_ex, grid, 400, 5, 100.0)
        e_neg = estimate_g_expectation(lambda b: -qv(b), small, model_ex, grid, 400, 5, 100.0)
        asym = e_pos.value + e_neg.value
        ok = e_big.value >= e_small.value and asym > 0.0
        report(
            "10c (estimator properties)",
            ok,
            f"family monotone {e_big.value >= e_small.value}, sign-flip asymmetry {asym:.4f} > 0",
        )
        assert ok

    def test_cli_byte_determinism(self, tmp_path):
        cfg = {
            "model": {"r": 0.02, "eta": 0.07, "mu": 0.5, "sigma": 1.0, "T": 1.0},
            "band": {"v_low": 0.01, "v_high": 0.09},
            "payoff": {"kind": "call", "strike": 100.0},
            "query": {"tau": 0.0, "spot": 100.0},
            "mc": {"n_paths": 4000, "n_steps": 64, "seed": 5},
            "grid": {"n_x": 64},
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(cfg))
        runner = CliRunner()
        outputs = {}
        for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
            out = tmp_path / tag
            res = runner.invoke(
                cli_main,
                ["mc-bound", "--config", str(cfg_path), "--out", str(out), "--threads", threads],
            )
            assert res.exit_code == 0, res.output
            outputs[tag] = (out / "mc-bound.json").read_bytes()
        ok = outputs["a"] == outputs["b"] == outputs["c"]
        report("10d (byte-identical CLI)", ok, "rerun and --threads 1 vs 4 produce identical bytes")
        assert ok
