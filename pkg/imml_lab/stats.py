from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import stats

from imml_lab.errors import DegenerateVariance

CONSTANT_DIFF_ATOL = 1e-12


@dataclass
class SignificanceResult:
    t_statistic: Optional[float]
    p_value: float
    mean_diff: float
    n: int
    degenerate: bool = False

    def to_dict(self) -> Dict:
        return asdict(self)


def significance_test(
        run_a: Sequence[float], run_b: Sequence[float], raise_on_degenerate: bool = True,
    ) -> SignificanceResult:
    """
    Two-sided paired t-test of ``run_a`` against ``run_b``.

    When every paired difference is the same (up to ``CONSTANT_DIFF_ATOL``)
    the statistic is undefined: a zero difference reports p = 1, any other
    raises ``DegenerateVariance``, or with ``raise_on_degenerate=False``
    returns p = 0 flagged ``degenerate`` with no t statistic.
    """
    a = np.asarray(run_a, dtype=np.float64)
    b = np.asarray(run_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"Paired runs must be flat lists of equal length, got {a.shape} and {b.shape}.")
    if len(a) < 2:
        raise ValueError(f"A paired t-test needs at least two pairs, got {len(a)}.")
    diffs = a - b
    mean_diff = float(diffs.mean())
    if np.allclose(diffs, mean_diff, rtol=0.0, atol=CONSTANT_DIFF_ATOL):
        if abs(mean_diff) <= CONSTANT_DIFF_ATOL:
            return SignificanceResult(0.0, 1.0, 0.0, len(a), degenerate=True)
        logger.warning(f"paired differences are all {mean_diff}; t statistic is unbounded")
        if raise_on_degenerate:
            raise DegenerateVariance(mean_diff)
        return SignificanceResult(None, 0.0, mean_diff, len(a), degenerate=True)
    result = stats.ttest_rel(a, b)
    return SignificanceResult(float(result.statistic), float(result.pvalue), mean_diff, len(a))
