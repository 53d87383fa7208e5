import logging
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd

from djesg.artifacts import read_csv, write_csv, write_embeddings, write_json
from djesg.context import Context
from djesg.embeddings import (
    default_synonyms,
    load_embeddings_file,
    load_synonyms_file,
    retrofit,
)
from djesg.emotions import EMOTIONS
from djesg.errors import EXIT_OK, ConfigError, DataError
from djesg.panel import (
    FirmYearPanel,
    FxLookup,
    NormalizationState,
    TickerAliases,
    describe_panel,
    drop_overmissing,
    impute_mice_pmm,
    join_sources,
    load_ticker_aliases,
    min_max_normalize,
    read_esg_csv,
    yearly_returns,
)
from djesg.regress import GridResult, grid_frame, run_grid, summarize
from djesg.scoring import (
    SentimentFamily,
    load_headlines,
    load_nrc_lexicon_file,
    load_stopwords,
    read_headlines_csv,
    score_firm_years,
)
from djesg.stages import case_layer, chain, exception_layer, layers, ok_stage, run_context, timed_layer
from djesg.synth import generate_dataset

logger = logging.getLogger(__name__)

# Stages hand off through these files only, so the subcommands run one after
# another write the same bytes as run_all.
RETROFITTED_FILE = "retrofitted_embeddings.txt"
SENTIMENT_FILE = "sentiment.csv"
JOINED_PANEL_FILE = "panel_joined.csv"
PANEL_FILE = "panel.csv"
PANEL_REPORT_FILE = "panel_report.json"
DESCRIBE_RAW_FILE = "describe_raw.csv"
DESCRIBE_NORMALIZED_FILE = "describe_normalized.csv"
GRID_FILE = "grid_results.csv"
SUMMARY_FILE = "summary.json"

HEADLINE_COLUMNS = ("ticker", "date", "title")
PRICE_COLUMNS = ("ticker", "date", "adj_close")


def _require_artifact(ctx: Context, name: str, producer: str) -> Path:
    path = ctx.config.output_dir / name
    if not path.exists():
        raise DataError(f"{path} not found; run {producer} first", code="missing_artifact")
    return path


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], source: Path) -> None:
    missing = [column for column in columns if column not in frame.columns]
    if missing:
        raise DataError(f"{source} lacks columns {missing}")


def retrofit_stage(ctx: Context) -> int:
    config, manifest = ctx.config, ctx.manifest
    if config.embeddings is None:
        raise ConfigError("retrofitting needs an embedding file")

    table = load_embeddings_file(config.embeddings)
    manifest.record_input("embeddings", config.embeddings)
    if config.synonyms is not None:
        lexicon = load_synonyms_file(config.synonyms)
        manifest.record_input("synonyms", config.synonyms)
    else:
        lexicon = default_synonyms()

    retrofitted = retrofit(table, lexicon, config.retrofit)
    path = write_embeddings(retrofitted, config.output_dir / RETROFITTED_FILE)
    manifest.record_output(RETROFITTED_FILE, path)
    manifest.record_counts(
        "retrofit",
        {"words": len(table), "emotions": len(EMOTIONS), "cycles": config.retrofit.iterations},
    )
    return EXIT_OK


def score_stage(ctx: Context) -> int:
    config, manifest = ctx.config, ctx.manifest
    table = nrc = None
    vocabulary = set()
    if SentimentFamily.RETRO in config.families:
        table = load_embeddings_file(_require_artifact(ctx, RETROFITTED_FILE, "retrofit"))
        vocabulary |= table.vocabulary
    if SentimentFamily.NRC in config.families:
        nrc = load_nrc_lexicon_file(config.nrc_lexicon)
        manifest.record_input("nrc_lexicon", config.nrc_lexicon)
        vocabulary |= nrc.vocabulary

    stopwords = load_stopwords(config.stopwords)
    if config.stopwords is not None:
        manifest.record_input("stopwords", config.stopwords)

    frame = read_headlines_csv(config.headlines)
    _require_columns(frame, HEADLINE_COLUMNS, config.headlines)
    manifest.record_input("headlines", config.headlines)

    headlines, tally = load_headlines(frame, config.window, stopwords, vocabulary)
    manifest.record_counts("score.headlines", tally)
    sentiment, tallies = score_firm_years(headlines, table=table, nrc=nrc)
    for name, counts in tallies.items():
        manifest.record_counts(f"score.{name}", counts)
    manifest.record_counts("score", {"firm_years": len(sentiment)})

    path = write_csv(sentiment, config.output_dir / SENTIMENT_FILE)
    manifest.record_output(SENTIMENT_FILE, path)
    return EXIT_OK


def _aliases(ctx: Context) -> TickerAliases:
    config = ctx.config
    if config.ticker_aliases is None:
        return TickerAliases()

    ctx.manifest.record_input("ticker_aliases", config.ticker_aliases)
    return load_ticker_aliases(pd.read_csv(config.ticker_aliases, dtype=str, keep_default_na=False))


def _fx(ctx: Context) -> FxLookup:
    config = ctx.config
    if config.fx is None:
        return FxLookup([])

    ctx.manifest.record_input("fx", config.fx)
    frame = pd.read_csv(config.fx, dtype={"date": str, "pair": str}, encoding="utf-8")
    _require_columns(frame, ("date", "pair", "rate"), config.fx)
    return FxLookup.from_frame(frame)


def panel_stage(ctx: Context) -> int:
    config, manifest = ctx.config, ctx.manifest
    sentiment = read_csv(_require_artifact(ctx, SENTIMENT_FILE, "score"), dtype={"ticker": str})
    esg = read_esg_csv(config.esg)
    manifest.record_input("esg", config.esg)
    aliases = _aliases(ctx)

    prices = pd.read_csv(config.prices, dtype={"ticker": str, "date": str, "currency": str}, encoding="utf-8")
    _require_columns(prices, PRICE_COLUMNS, config.prices)
    manifest.record_input("prices", config.prices)
    returns, tally = yearly_returns(prices, _fx(ctx), aliases)
    manifest.record_counts("panel.prices", tally)

    panel, join_report = join_sources(esg, sentiment, returns, aliases.metadata)
    manifest.record_counts("panel.join", join_report)
    outputs = {
        JOINED_PANEL_FILE: write_csv(panel.frame, config.output_dir / JOINED_PANEL_FILE),
        DESCRIBE_RAW_FILE: write_csv(describe_panel(panel), config.output_dir / DESCRIBE_RAW_FILE, index=True),
    }

    panel, dropped = drop_overmissing(panel)
    panel, imputed = impute_mice_pmm(
        panel, sweeps=config.imputation_sweeps, donors=config.imputation_donors, seed=config.seed
    )
    panel, constant = min_max_normalize(panel)
    manifest.record_counts(
        "panel",
        {
            "rows": len(panel),
            "dropped_columns": len(dropped),
            "imputed_cells": sum(imputed.values()),
            "constant_columns": len(constant),
        },
    )

    outputs[PANEL_FILE] = write_csv(panel.frame, config.output_dir / PANEL_FILE)
    outputs[DESCRIBE_NORMALIZED_FILE] = write_csv(
        describe_panel(panel), config.output_dir / DESCRIBE_NORMALIZED_FILE, index=True
    )
    outputs[PANEL_REPORT_FILE] = write_json(
        {
            "join": join_report,
            "dropped_columns": dropped,
            "imputed_cells": imputed,
            "constant_columns": constant,
        },
        config.output_dir / PANEL_REPORT_FILE,
    )
    for name, path in outputs.items():
        manifest.record_output(name, path)
    return EXIT_OK


def read_normalized_panel(ctx: Context) -> FirmYearPanel:
    frame = read_csv(_require_artifact(ctx, PANEL_FILE, "panel"), dtype={"ticker": str})
    panel = FirmYearPanel(frame=frame, normalization_state=NormalizationState.NORMALIZED)
    values = frame[panel.numeric_columns].to_numpy(dtype=np.float64)
    if np.isnan(values).any() or values.min() < 0 or values.max() > 1:
        raise DataError(f"{PANEL_FILE} is not a complete panel normalized to [0, 1]")
    return panel


def regress_stage(ctx: Context) -> int:
    config, manifest = ctx.config, ctx.manifest
    panel = read_normalized_panel(ctx)
    results: List[GridResult] = []
    for family in config.families:
        family_results = run_grid(panel, family, jobs=config.jobs)
        results.extend(family_results)
        manifest.record_counts(
            f"regress.{family.value}",
            {
                "attempted": len(family_results),
                "skipped": sum(result.fit is None for result in family_results),
            },
        )

    grid = grid_frame(results, config.significance_level)
    summary = summarize(grid, panel, config.significance_level)
    outputs = {
        GRID_FILE: write_csv(grid, config.output_dir / GRID_FILE),
        SUMMARY_FILE: write_json(summary.to_json(), config.output_dir / SUMMARY_FILE),
    }
    for name, table in summary.tables.items():
        filename = f"{name}.csv"
        outputs[filename] = write_csv(table, config.output_dir / filename, index=name == "correlation_matrix")

    triple: Dict[str, int] = {
        family: metrics["triple_significant_count"] for family, metrics in summary.families.items()
    }
    manifest.record_counts("regress.triple_significant", triple)
    for name, path in outputs.items():
        manifest.record_output(name, path)
    return EXIT_OK


def _without_retro(ctx: Context) -> bool:
    return SentimentFamily.RETRO not in ctx.config.families


@run_context()
@layers(exception_layer(), timed_layer("retrofit"))
def retrofit_command(ctx: Context) -> int:
    return retrofit_stage(ctx)


@run_context()
@layers(exception_layer(), timed_layer("score"))
def score_command(ctx: Context) -> int:
    return score_stage(ctx)


@run_context()
@layers(exception_layer(), timed_layer("panel"))
def panel_command(ctx: Context) -> int:
    return panel_stage(ctx)


@run_context()
@layers(exception_layer(), timed_layer("regress"))
def regress_command(ctx: Context) -> int:
    return regress_stage(ctx)


@run_context()
@layers(exception_layer(), timed_layer("run_all"))
def run_all_command(ctx: Context) -> int:
    return chain(
        layers(case_layer(_without_retro, stage=ok_stage), timed_layer("retrofit"))(retrofit_stage),
        timed_layer("score")(score_stage),
        timed_layer("panel")(panel_stage),
        timed_layer("regress")(regress_stage),
    )(ctx)


@run_context()
@layers(exception_layer(), timed_layer("synth"))
def synth_command(ctx: Context) -> int:
    for path in generate_dataset(ctx.config, ctx["output_dir"]).values():
        ctx.manifest.record_output(path.name, path)
    return EXIT_OK
