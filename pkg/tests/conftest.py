import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from portalloc.market_data import PriceFrame


def weekday_dates(start: str, count: int) -> np.ndarray:
    span = np.arange(np.datetime64(start, "D"),
                     np.datetime64(start, "D") + np.timedelta64(2 * count + 10, "D"))
    return span[np.is_busday(span)][:count]


def make_price_frame(prices, start="2020-01-06", assets=None) -> PriceFrame:
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    if prices.shape[0] == 1 and prices.shape[1] > 1 and assets is None:
        prices = prices.T
    names = tuple(assets or (f"A{i + 1}" for i in range(prices.shape[1])))
    return PriceFrame(weekday_dates(start, prices.shape[0]), names, prices)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
