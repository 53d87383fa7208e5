from dataclasses import replace

import numpy as np
import pandas as pd
from django.test import SimpleTestCase
from scipy import integrate, stats

from djesg.emotions import EMOTIONS, POLARITY, Polarity
from djesg.errors import DataError, DesignError
from djesg.panel import ALL_FIRMS, ESG_COLUMNS, RETURN_COLUMN, FirmYearPanel, NormalizationState
from djesg.regress import (
    GRID_COLUMNS,
    GridResult,
    ModelSpec,
    RegressionFit,
    Verdict,
    build_design,
    classify_h3,
    fit_ols,
    grid_frame,
    grid_specs,
    run_grid,
    summarize,
    triple_filter,
    weighted_average,
)
from djesg.scoring import SentimentFamily, sentiment_columns

RETRO = SentimentFamily.RETRO
TRUST = "InpageTitle_Retro_trust_similarity"


def normalized_panel(rng, years=None):
    years = years or {"AAA": 13, "BBB": 13}
    rows = []
    for ticker, count in years.items():
        for year in range(2010, 2010 + count):
            row = {"ticker": ticker, "year": year}
            row.update({column: float(rng.uniform()) for column in ESG_COLUMNS})
            row.update({column: float(rng.uniform()) for column in sentiment_columns(RETRO)})
            row[RETURN_COLUMN] = float(rng.uniform())
            rows.append(row)
    return FirmYearPanel(frame=pd.DataFrame(rows), normalization_state=NormalizationState.NORMALIZED)


def random_design(rng, n):
    esg, sentiment = rng.uniform(size=n), rng.uniform(size=n)
    return np.column_stack([np.ones(n), esg, sentiment, esg * sentiment])


def fit_with(beta3=0.5, p_values=(0.5, 0.01, 0.01, 0.01)):
    return RegressionFit(
        n=13,
        coefficients=(0.1, 0.2, 0.3, beta3),
        standard_errors=(0.1,) * 4,
        t_stats=(1.0, 2.0, 3.0, beta3 / 0.1),
        p_values=p_values,
        r_squared=0.5,
        adj_r_squared=0.33,
        residuals=(0.0,) * 13,
    )


def spec_for(emotion, ticker="AAA"):
    return ModelSpec(
        ticker=ticker,
        esg_column="overall_score",
        sentiment_column=f"InpageTitle_Retro_{emotion}_similarity",
        sentiment_family=RETRO,
    )


class DesignTestCase(SimpleTestCase):
    def test_design_columns(self):
        panel = normalized_panel(np.random.default_rng(0))
        spec = spec_for("trust")
        y, X = build_design(panel, spec)
        self.assertEqual(X.shape, (13, 4))
        rows = panel.rows_for("AAA")
        np.testing.assert_array_equal(X[:, 0], 1.0)
        np.testing.assert_array_equal(X[:, 3], rows["overall_score"] * rows[TRUST])
        np.testing.assert_array_equal(y, rows[RETURN_COLUMN])

    def test_interaction_is_product(self):
        frame = normalized_panel(np.random.default_rng(1)).frame
        frame["overall_score"] = 0.5
        frame[TRUST] = 0.5
        _, X = build_design(FirmYearPanel(frame, NormalizationState.NORMALIZED), spec_for("trust"))
        self.assertTrue((X[:, 3] == 0.25).all())

    def test_all_firms_pools_rows(self):
        panel = normalized_panel(np.random.default_rng(2))
        _, X = build_design(panel, spec_for("trust", ticker=ALL_FIRMS))
        self.assertEqual(len(X), 26)

    def test_guards(self):
        panel = normalized_panel(np.random.default_rng(3), years={"AAA": 4})
        with self.assertRaises(DesignError) as cm:
            build_design(panel, spec_for("trust"))
        self.assertEqual(cm.exception.code, "too_few_rows")

        with self.assertRaises(DesignError) as cm:
            build_design(panel.with_frame(panel.frame.drop(columns=[TRUST])), spec_for("trust"))
        self.assertEqual(cm.exception.code, "missing_column")

        with self.assertRaises(DataError):
            build_design(panel.with_frame(panel.frame, NormalizationState.RAW), spec_for("trust"))

    def test_spec_validation(self):
        with self.assertRaises(ValueError):
            ModelSpec("AAA", "esg_total", TRUST, RETRO)
        with self.assertRaises(ValueError):
            ModelSpec("AAA", "overall_score", TRUST, SentimentFamily.NRC)
        spec = ModelSpec("AAA", "overall_score", TRUST + "_DAvg", RETRO)
        self.assertEqual(spec.emotion, "trust")
        self.assertTrue(spec.davg)


class FitTestCase(SimpleTestCase):
    def test_noiseless_recovery(self):
        rng = np.random.default_rng(4)
        X = random_design(rng, 13)
        beta = np.array([0.1, 0.5, 0.2, -0.3])
        fit = fit_ols(X @ beta, X)
        np.testing.assert_allclose(fit.coefficients, beta, rtol=0, atol=1e-8)
        self.assertAlmostEqual(fit.r_squared, 1.0, delta=1e-9)
        self.assertEqual(fit.df_resid, 9)

    def test_constant_response(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(8, 40))
            value = float(rng.choice([0.0, 1.0, rng.uniform()]))
            fit = fit_ols(np.full(n, value), random_design(rng, n))
            self.assertEqual(fit.r_squared, 0.0)
            self.assertEqual(fit.alpha, value)
            self.assertEqual(fit.coefficients[1:], (0.0, 0.0, 0.0))
            self.assertEqual(fit.p_values, (1.0,) * 4)
            self.assertFalse(triple_filter(fit, level=0.99))

        spec = spec_for("trust")
        frame = grid_frame([GridResult(spec=spec, fit=fit_ols(np.full(13, 0.4), random_design(rng, 13)))])
        self.assertFalse(frame["interaction_significant"].iloc[0])
        self.assertTrue(pd.isna(frame["h3_verdict"].iloc[0]))

    def test_matches_normal_equations(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            n = int(rng.integers(6, 16))
            X = random_design(rng, n)
            y = rng.uniform(size=n)
            fit = fit_ols(y, X)

            gram = X.T @ X
            beta = np.linalg.solve(gram, X.T @ y)
            residuals = y - X @ beta
            sigma2 = residuals @ residuals / (n - 4)
            se = np.sqrt(np.diag(np.linalg.inv(gram)) * sigma2)
            np.testing.assert_allclose(fit.coefficients, beta, rtol=0, atol=1e-9)
            np.testing.assert_allclose(fit.standard_errors, se, rtol=1e-7, atol=1e-9)
            np.testing.assert_allclose(fit.residuals, residuals, rtol=0, atol=1e-9)

    def test_p_values_match_t_tail_integral(self):
        rng = np.random.default_rng(7)
        for df in range(5, 31):
            n = df + 4
            X = random_design(rng, n)
            fit = fit_ols(rng.normal(size=n), X)
            for t, p in zip(fit.t_stats, fit.p_values):
                tail, _ = integrate.quad(stats.t.pdf, abs(t), np.inf, args=(df,))
                self.assertAlmostEqual(p, 2 * tail, delta=1e-6)

    def test_response_scale_contract(self):
        rng = np.random.default_rng(8)
        X = random_design(rng, 13)
        y = rng.uniform(size=13)
        fit = fit_ols(y, X)
        scaled = fit_ols(3.0 * y, X)
        np.testing.assert_allclose(scaled.coefficients, 3.0 * np.array(fit.coefficients), rtol=1e-9)
        np.testing.assert_allclose(scaled.t_stats, fit.t_stats, rtol=1e-9)
        self.assertAlmostEqual(scaled.r_squared, fit.r_squared)

    def test_rank_deficient_and_short_designs(self):
        rng = np.random.default_rng(9)
        X = random_design(rng, 13)
        X[:, 1] = 0.5
        X[:, 3] = 0.5 * X[:, 2]
        with self.assertRaises(DesignError) as cm:
            fit_ols(rng.uniform(size=13), X)
        self.assertEqual(cm.exception.code, "rank_deficient")

        with self.assertRaises(DesignError) as cm:
            fit_ols(np.zeros(4), random_design(rng, 4))
        self.assertEqual(cm.exception.code, "too_few_rows")

    def test_confidence_interval_covers_coefficient(self):
        low, high = fit_with().confidence_interval(3)
        self.assertLess(low, 0.5)
        self.assertGreater(high, 0.5)
        self.assertAlmostEqual(0.5 - low, high - 0.5)

    def test_interaction_interval_coverage(self):
        rng = np.random.default_rng(19)
        beta = np.array([0.1, 0.5, 0.2, -0.3])
        covered = 0
        for _ in range(100):
            X = random_design(rng, 13)
            fit = fit_ols(X @ beta + rng.normal(0, 0.02, size=13), X)
            low, high = fit.confidence_interval(3)
            covered += low <= beta[3] <= high
        self.assertGreaterEqual(covered, 90)

    def test_false_positive_rate_is_calibrated(self):
        rng = np.random.default_rng(10)
        trials, level = 1000, 0.1
        hits = 0
        for _ in range(trials):
            X = random_design(rng, 13)
            hits += fit_ols(rng.normal(size=13), X).p_values[3] < level
        sd = np.sqrt(trials * level * (1 - level))
        self.assertLessEqual(abs(hits - trials * level), 3 * sd)


class FilterTestCase(SimpleTestCase):
    def test_triple_filter(self):
        self.assertTrue(triple_filter(fit_with(p_values=(0.9, 0.01, 0.05, 0.09)), 0.1))
        self.assertFalse(triple_filter(fit_with(p_values=(0.0, 0.01, 0.05, 0.1)), 0.1))
        self.assertFalse(triple_filter(fit_with(p_values=(0.0, 0.2, 0.01, 0.01)), 0.1))

    def test_triple_filter_is_monotone_in_level(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            fit = fit_with(p_values=(0.5, *rng.uniform(size=3)))
            passing = [triple_filter(fit, level) for level in (0.01, 0.05, 0.1, 0.5, 1.0)]
            self.assertEqual(passing, sorted(passing))


class H3TestCase(SimpleTestCase):
    def test_truth_table(self):
        for emotion in EMOTIONS:
            for beta3 in (0.5, -0.5):
                result = classify_h3(spec_for(emotion), fit_with(beta3=beta3))
                polarity = POLARITY[emotion]
                self.assertIs(result.polarity, polarity)
                if polarity is Polarity.NEUTRAL:
                    expected = Verdict.EXCLUDED_NEUTRAL
                elif (beta3 > 0) == (polarity is Polarity.POSITIVE):
                    expected = Verdict.CORRECT
                else:
                    expected = Verdict.CONTRADICTORY
                self.assertIs(result.verdict, expected, (emotion, beta3))

    def test_examples(self):
        self.assertIs(classify_h3(spec_for("trust"), fit_with(beta3=0.8)).verdict, Verdict.CORRECT)
        self.assertIs(classify_h3(spec_for("fear"), fit_with(beta3=0.8)).verdict, Verdict.CONTRADICTORY)
        self.assertIs(classify_h3(spec_for("surprise"), fit_with(beta3=-0.8)).verdict, Verdict.EXCLUDED_NEUTRAL)


class WeightedAverageTestCase(SimpleTestCase):
    def test_equal_weights(self):
        effect = weighted_average([(0.2, 0.1), (0.4, 0.1)], label="correct")
        self.assertAlmostEqual(effect.weighted_average, 0.3)
        self.assertAlmostEqual(effect.standard_error, np.sqrt(1 / 200))
        self.assertAlmostEqual(effect.z_stat, 0.3 / np.sqrt(1 / 200))
        self.assertAlmostEqual(effect.p_value, 2 * stats.norm.sf(effect.z_stat))
        self.assertEqual(effect.count, 2)

    def test_precise_effects_dominate(self):
        self.assertAlmostEqual(weighted_average([(0.2, 0.1), (0.6, 0.2)]).weighted_average, 0.28)
        self.assertAlmostEqual(weighted_average([(0.1, 0.1), (0.4, 0.05)]).weighted_average, 0.34)
        self.assertAlmostEqual(weighted_average([(0.7, 1e-8), (0.1, 1.0)]).weighted_average, 0.7, delta=1e-6)

    def test_average_is_bounded(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            effects = [(float(b), float(s)) for b, s in zip(rng.normal(size=5), rng.uniform(0.01, 1, size=5))]
            average = weighted_average(effects).weighted_average
            betas = [beta for beta, _ in effects]
            self.assertGreaterEqual(average, min(betas) - 1e-12)
            self.assertLessEqual(average, max(betas) + 1e-12)

    def test_errors(self):
        with self.assertRaises(DataError):
            weighted_average([])
        with self.assertRaises(DataError):
            weighted_average([(0.1, 0.0)])


class GridTestCase(SimpleTestCase):
    def test_spec_order_and_size(self):
        panel = normalized_panel(np.random.default_rng(13), years={"BBB": 13, "AAA": 13, "CCC": 3})
        specs = grid_specs(panel, RETRO)
        self.assertEqual(len(specs), 80 * 4)
        self.assertEqual([spec.ticker for spec in specs[::80]], ["AAA", "BBB", "CCC", ALL_FIRMS])
        self.assertEqual(specs[0].esg_column, ESG_COLUMNS[0])
        self.assertEqual(specs[0].sentiment_column, sentiment_columns(RETRO)[0])
        self.assertEqual(specs[16].esg_column, ESG_COLUMNS[1])

    def test_short_firm_is_skipped(self):
        panel = normalized_panel(np.random.default_rng(14), years={"AAA": 13, "CCC": 3})
        results = run_grid(panel, RETRO)
        short = [result for result in results if result.spec.ticker == "CCC"]
        self.assertEqual(len(short), 80)
        self.assertTrue(all(result.fit is None for result in short))
        self.assertTrue(all(result.skip_reason.startswith("too_few_rows") for result in short))
        pooled = [result for result in results if result.spec.ticker == ALL_FIRMS]
        self.assertTrue(all(result.fit is not None and result.fit.n == 16 for result in pooled))

    def test_deterministic_and_jobs_independent(self):
        panel = normalized_panel(np.random.default_rng(15))
        serial = grid_frame(run_grid(panel, RETRO, jobs=1))
        again = grid_frame(run_grid(panel, RETRO, jobs=1))
        threaded = grid_frame(run_grid(panel, RETRO, jobs=4))
        pd.testing.assert_frame_equal(serial, again, check_exact=True)
        pd.testing.assert_frame_equal(serial, threaded, check_exact=True)

    def test_grid_frame_classifies_significant_interactions(self):
        results = [
            GridResult(spec=spec_for("trust"), fit=fit_with(beta3=0.8)),
            GridResult(spec=spec_for("fear"), fit=fit_with(beta3=0.8, p_values=(0.5, 0.5, 0.5, 0.5))),
            GridResult(spec=spec_for("sad"), skip_reason="rank_deficient: singular"),
        ]
        frame = grid_frame(results, level=0.1)
        self.assertEqual(list(frame.columns), list(GRID_COLUMNS))
        self.assertEqual(list(frame["triple_significant"]), [True, False, False])
        self.assertEqual(frame["h3_verdict"].iloc[0], "correct")
        self.assertTrue(pd.isna(frame["h3_verdict"].iloc[1]))
        self.assertTrue(pd.isna(frame["n"].iloc[2]))
        self.assertEqual(len(frame["residuals"].iloc[0].split()), 13)

    def test_requires_normalized_panel(self):
        panel = normalized_panel(np.random.default_rng(16))
        with self.assertRaises(DataError):
            run_grid(panel.with_frame(panel.frame, NormalizationState.RAW), RETRO)


class SummaryTestCase(SimpleTestCase):
    def test_counts_add_up(self):
        panel = normalized_panel(np.random.default_rng(17), years={"AAA": 13, "BBB": 13, "CCC": 3})
        grid = grid_frame(run_grid(panel, RETRO), level=0.5)
        summary = summarize(grid, panel, level=0.5)
        report = summary.to_json()

        self.assertEqual(
            sorted(report),
            ["aggregation_comparison", "expected_false_positives", "h3_alignment", "method_comparison", "significance_level"],
        )
        metrics = report["method_comparison"]["retro"]
        self.assertEqual(metrics["attempted"], 320)
        self.assertEqual(metrics["skipped"], 80)
        self.assertEqual(metrics["fitted"], 240)
        self.assertEqual(metrics["triple_significant_count"], int(grid["triple_significant"].sum()))

        split = report["aggregation_comparison"]["retro"]
        self.assertEqual(split["davg"]["attempted"] + split["non_davg"]["attempted"], metrics["attempted"])
        self.assertEqual(
            split["davg"]["triple_significant_count"] + split["non_davg"]["triple_significant_count"],
            metrics["triple_significant_count"],
        )

        h3 = report["h3_alignment"]["retro"]
        self.assertEqual(h3["significant_interactions"], int(grid["interaction_significant"].sum()))
        subsets = {subset["subset"]: subset["count"] for subset in h3["subsets"]}
        self.assertEqual(subsets["correct"] + subsets["contradictory"], subsets["all_significant"])
        self.assertEqual(subsets["all_significant"] + h3["excluded_neutral"], h3["significant_interactions"])

        counts = summary.tables["per_ticker_counts"]
        self.assertEqual(int(counts["total"].sum()), metrics["triple_significant_count"])
        self.assertEqual(report["expected_false_positives"]["expected_significant_per_term"], 240 * 0.5)
        self.assertEqual(list(summary.tables["correlation_matrix"].columns), panel.numeric_columns)

    def test_no_fitted_models(self):
        panel = normalized_panel(np.random.default_rng(18), years={"AAA": 3})
        grid = grid_frame(run_grid(panel, RETRO))
        summary = summarize(grid, panel)
        metrics = summary.families["retro"]
        self.assertEqual(metrics["fitted"], 0)
        self.assertIsNone(metrics["mean_r_squared_all"])
        self.assertTrue(all(subset["count"] == 0 for subset in summary.h3["retro"]["subsets"]))
        for name in ("per_ticker_counts", "r2_heatmap_esg_by_emotion", "r2_by_esg", "h3_counts_per_ticker"):
            self.assertTrue(summary.tables[name].empty, name)
        for name in ("r2_by_ticker", "r2_by_sentiment", "emotion_by_esg_counts"):
            self.assertTrue(summary.tables[name].empty, name)
            self.assertIn("family", summary.tables[name].columns)

    def test_figure_tables_separate_variants(self):
        def spec(emotion="trust", ticker="AAA", esg_column="overall_score", davg=False):
            column = f"InpageTitle_Retro_{emotion}_similarity" + ("_DAvg" if davg else "")
            return ModelSpec(ticker, esg_column, column, RETRO)

        results = [
            GridResult(spec=spec(), fit=replace(fit_with(), r_squared=0.5)),
            GridResult(spec=spec(davg=True), fit=replace(fit_with(), r_squared=0.9)),
            GridResult(spec=spec("fear", ticker="BBB"), fit=replace(fit_with(), r_squared=0.7)),
            GridResult(spec=spec(esg_column="social_score"), fit=replace(fit_with(), r_squared=0.3)),
            GridResult(spec=spec("sad", ticker="BBB"), fit=fit_with(p_values=(0.5,) * 4)),
        ]
        grid = grid_frame(results, level=0.1)
        tables = summarize(grid, normalized_panel(np.random.default_rng(19)), level=0.1).tables

        counts = tables["per_ticker_counts"]
        self.assertEqual(list(counts.columns), ["family", "ticker", "variant", *EMOTIONS, "total"])
        rows = {(row.ticker, row.variant): row for row in counts.itertuples()}
        self.assertEqual(sorted(rows), [("AAA", "davg"), ("AAA", "yearly"), ("BBB", "yearly")])
        self.assertEqual(rows[("AAA", "davg")].trust, 1)
        self.assertEqual(rows[("AAA", "yearly")].trust, 2)
        self.assertEqual(rows[("BBB", "yearly")].fear, 1)
        self.assertEqual(int(counts["total"].sum()), 4)

        emotion_counts = tables["emotion_by_esg_counts"]
        self.assertEqual(list(emotion_counts.columns), ["family", "emotion", "variant", *ESG_COLUMNS, "total"])
        trust = emotion_counts[emotion_counts["emotion"] == "trust"].set_index("variant")
        self.assertEqual(trust.loc["yearly", "overall_score"], 1)
        self.assertEqual(trust.loc["yearly", "social_score"], 1)
        self.assertEqual(trust.loc["davg", "total"], 1)

        heatmap = tables["r2_heatmap_esg_by_emotion"].set_index(["variant", "esg_column"])
        self.assertEqual(list(heatmap.columns), ["family", *EMOTIONS])
        self.assertAlmostEqual(heatmap.loc[("yearly", "overall_score"), "trust"], 0.5)
        self.assertAlmostEqual(heatmap.loc[("davg", "overall_score"), "trust"], 0.9)
        self.assertAlmostEqual(heatmap.loc[("yearly", "overall_score"), "fear"], 0.7)
        self.assertTrue(pd.isna(heatmap.loc[("davg", "overall_score"), "fear"]))

        by_ticker = tables["r2_by_ticker"]
        self.assertEqual(
            list(by_ticker.columns),
            ["family", "ticker", "esg_column", "triple_significant_count", "mean_r_squared", "mean_adj_r_squared"],
        )
        by_ticker = by_ticker.set_index(["ticker", "esg_column"])
        self.assertEqual(by_ticker.loc[("AAA", "overall_score"), "triple_significant_count"], 2)
        self.assertAlmostEqual(by_ticker.loc[("AAA", "overall_score"), "mean_r_squared"], 0.7)
        self.assertAlmostEqual(by_ticker.loc[("AAA", "social_score"), "mean_r_squared"], 0.3)
        self.assertAlmostEqual(by_ticker.loc[("BBB", "overall_score"), "mean_r_squared"], 0.7)

        by_sentiment = tables["r2_by_sentiment"].set_index("sentiment_column")
        self.assertEqual(len(by_sentiment), 3)
        self.assertEqual(by_sentiment.loc[TRUST, "variant"], "yearly")
        self.assertAlmostEqual(by_sentiment.loc[TRUST, "mean_r_squared"], 0.4)
        self.assertEqual(by_sentiment.loc[TRUST + "_DAvg", "variant"], "davg")
        self.assertAlmostEqual(by_sentiment.loc[TRUST + "_DAvg", "mean_r_squared"], 0.9)

        by_esg = tables["r2_by_esg"].set_index("esg_column")
        self.assertEqual(by_esg.loc["overall_score", "triple_significant_count"], 3)
        self.assertAlmostEqual(by_esg.loc["overall_score", "mean_r_squared"], 0.7)
