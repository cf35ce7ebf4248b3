"""Bundled sample data: parent->child call counts captured from a small
storefront microservice demo, before and after a workload change.

The two tables cover the same nine services and are deliberately similar,
which makes them a good stress test: the drift is real but subtle.  The
most frequent pairs in both are frontend->productcatalogservice and
frontend->currencyservice.
"""

from __future__ import annotations

from .ingest import FrequencyTable
from .simulate import ExperimentConfig
from .space import PAIR, CategorySpace, build_space

DEMO_APIS = (
    "adservice",
    "cartservice",
    "checkoutservice",
    "currencyservice",
    "frontend",
    "loadgenerator",
    "productcatalogservice",
    "recommendationservice",
    "shippingservice",
)

# 89 observed calls in the baseline capture.
DEMO_BASELINE_PAIRS = {
    ("checkoutservice", "currencyservice"): 2,
    ("checkoutservice", "productcatalogservice"): 1,
    ("frontend", "adservice"): 2,
    ("frontend", "cartservice"): 9,
    ("frontend", "currencyservice"): 17,
    ("frontend", "productcatalogservice"): 38,
    ("frontend", "shippingservice"): 2,
    ("loadgenerator", "frontend"): 10,
    ("recommendationservice", "productcatalogservice"): 8,
}

# 88 observed calls after the workload change.
DEMO_DRIFTED_PAIRS = {
    ("checkoutservice", "cartservice"): 1,
    ("checkoutservice", "shippingservice"): 1,
    ("frontend", "adservice"): 5,
    ("frontend", "cartservice"): 6,
    ("frontend", "currencyservice"): 22,
    ("frontend", "productcatalogservice"): 34,
    ("frontend", "recommendationservice"): 2,
    ("frontend", "shippingservice"): 3,
    ("loadgenerator", "frontend"): 7,
    ("recommendationservice", "productcatalogservice"): 7,
}


def demo_space() -> CategorySpace:
    return build_space(DEMO_APIS, PAIR)


def demo_baseline(space: CategorySpace = None) -> FrequencyTable:
    return FrequencyTable.from_pairs(space or demo_space(), DEMO_BASELINE_PAIRS)


def demo_drifted(space: CategorySpace = None) -> FrequencyTable:
    space = space or demo_space()
    return FrequencyTable.from_pairs(space, DEMO_DRIFTED_PAIRS)


def demo_experiment(master_seed: int = 20260810, reps: int = 500, draws: int = 1000) -> ExperimentConfig:
    """The stock detection-rate experiment over the demo tables."""
    space = demo_space()
    return ExperimentConfig(
        baseline=demo_baseline(space),
        alternate=demo_drifted(space),
        master_seed=master_seed,
        reps=reps,
        draws=draws,
    )
