"""Black-box query interface to a trained model, with optional defenses applied.

The access mode decides what a caller can see:

- ``posterior``: full probability vectors (possibly computed from noisy logits),
- ``label_only``: the top-1 label only (argmax defense),
- ``rr_label``: the top-1 label passed through randomized response.

Posterior requests in the label modes fail closed with :class:`DefenseError`.
"""

from __future__ import annotations

import hashlib
import threading
from collections import Counter
from typing import Callable, Literal

import numpy as np

from mi_guard.errors import DefenseError, QueryBudgetExceededError
from mi_guard.models.mlp import ModelParams, logits_batch
from mi_guard.numeric import argmax_rows, softmax

AccessMode = Literal["posterior", "label_only", "rr_label"]

# Noise/response transforms injected by the defenses (batch in, batch out)
LogitTransform = Callable[[np.ndarray], np.ndarray]
LabelTransform = Callable[[np.ndarray], np.ndarray]


class QueryBudget:
    """At most ``limit`` queries in total or per distinct input."""

    def __init__(self, limit: int, scope: Literal["per_record", "total"] = "total"):
        self.limit = limit
        self.scope = scope
        self._per_input: Counter[str] = Counter()
        self._total = 0

    def charge(self, batch: np.ndarray) -> None:
        if self.scope == "total":
            if self._total + len(batch) > self.limit:
                raise QueryBudgetExceededError(
                    f"query budget of {self.limit} exhausted ({self._total} used)"
                )
            self._total += len(batch)
            return
        keys = [hashlib.sha1(np.ascontiguousarray(row).tobytes()).hexdigest() for row in batch]
        pending = Counter(keys)
        for key, count in pending.items():
            if self._per_input[key] + count > self.limit:
                raise QueryBudgetExceededError(
                    f"input queried more than the per-record budget of {self.limit}"
                )
        self._per_input.update(pending)
        self._total += len(batch)


class VictimAccess:
    """Thread-safe query counter around a model's public interface."""

    def __init__(
        self,
        params: ModelParams,
        mode: AccessMode = "posterior",
        *,
        logit_transform: LogitTransform | None = None,
        label_transform: LabelTransform | None = None,
        budget: QueryBudget | None = None,
        name: str = "victim",
    ):
        if mode == "rr_label" and label_transform is None:
            raise ValueError("rr_label access needs a label transform")
        self._params = params
        self.mode: AccessMode = mode
        self.name = name
        self._logit_transform = logit_transform
        self._label_transform = label_transform
        self._budget = budget
        self._lock = threading.Lock()
        self._queries = 0

    @property
    def queries(self) -> int:
        return self._queries

    @property
    def num_classes(self) -> int:
        return self._params.architecture.num_classes

    @property
    def input_dim(self) -> int:
        return self._params.architecture.input_dim

    def _logits(self, batch: np.ndarray) -> np.ndarray:
        logits = logits_batch(self._params, batch)
        return self._logit_transform(logits) if self._logit_transform else logits

    def _charge(self, batch: np.ndarray) -> None:
        if self._budget is not None:
            self._budget.charge(batch)
        self._queries += len(batch)

    def posterior(self, x: np.ndarray) -> np.ndarray:
        """Posterior vector(s); only in ``posterior`` mode."""
        if self.mode != "posterior":
            raise DefenseError(f"{self.name} publishes labels only ({self.mode}); no posteriors")
        x = np.asarray(x, dtype=np.float64)
        batch = x.reshape(1, -1) if x.ndim == 1 else x
        with self._lock:
            self._charge(batch)
            probs = softmax(self._logits(batch))
        return probs[0] if x.ndim == 1 else probs

    def label(self, x: np.ndarray) -> int | np.ndarray:
        """Released label(s): top-1, then randomized response in ``rr_label`` mode."""
        x = np.asarray(x, dtype=np.float64)
        batch = x.reshape(1, -1) if x.ndim == 1 else x
        with self._lock:
            self._charge(batch)
            labels = argmax_rows(softmax(self._logits(batch)))
            if self.mode == "rr_label":
                labels = self._label_transform(labels)
        labels = np.asarray(labels, dtype=np.int64)
        return int(labels[0]) if x.ndim == 1 else labels
