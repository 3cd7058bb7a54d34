"""Published village counts and reference parameter sets.

The village data are household final-size counts ``(n_0, n_1, n_2)`` for
four villages of 500 two-person households. Reference values are the
published final-size summaries used by ``threelevel reproduce``.
"""

from __future__ import annotations

import numpy as np

from .simulate import EpidemicParams

__all__ = [
    "DATASET_1_1",
    "DATASET_1_2",
    "PARAMS",
    "REFERENCE",
    "village_counts",
]

DATASET_1_1 = np.array([[70, 157, 273], [65, 178, 257], [500, 0, 0], [500, 0, 0]])
DATASET_1_2 = np.array([[137, 180, 183], [114, 182, 204], [128, 177, 195], [126, 188, 186]])

#: True contact rates ``(lambda_H, lambda_G per class, lambda_C)``, mean
#: infectious period 1.
PARAMS = {
    "1.1": EpidemicParams(0.3, (1.4,), 0.001),
    "1.2": EpidemicParams(0.3, (0.6,), 0.6),
    "2.1": EpidemicParams(0.3, (1.2, 0.6), 0.05),
    "2.2": EpidemicParams(0.3, (1.2, 0.6), 0.005),
}

# Published final-size summaries: per parameter (mean, sd, median, MLE).
REFERENCE = {
    "1.1": {
        "summary": {
            "p_H": (0.277, 0.037, 0.278, 0.279),
            "pi_G": (0.238, 0.014, 0.238, 0.238),
            "pi_C": (0.999, 0.001, 0.999, 1.000),
            "R_star": (1.836, 0.062, 1.835, 1.836),
        },
        "corr": {("p_H", "pi_G"): 0.57, ("p_H", "pi_C"): 0.0014, ("pi_G", "pi_C"): -0.0080},
    },
    "1.2": {
        "summary": {
            "p_H": (0.272, 0.021, 0.272, 0.272),
            "pi_G": (0.498, 0.173, 0.451, 0.260),
            "pi_C": (0.658, 0.195, 0.656, 1.000),
            "R_star": (1.550, 0.040, 1.549, 1.713),
        },
        "corr": {("p_H", "pi_G"): 0.025, ("p_H", "pi_C"): 0.012, ("pi_G", "pi_C"): -0.95},
    },
}


def village_counts(name: str) -> np.ndarray:
    """Counts for ``"1.1"`` or ``"1.2"`` as a fresh ``(4, 3)`` array."""
    try:
        return {"1.1": DATASET_1_1, "1.2": DATASET_1_2}[name].copy()
    except KeyError:
        raise ValueError(f"unknown village dataset {name!r}") from None
