"""Named error kinds raised by the training lab. Every kind is a ``ValueError``."""


class ShapeMismatch(ValueError):
    pass


class DegenerateNorm(ValueError):
    pass


class NonFiniteValue(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class NonPositiveInput(ValueError):
    pass


class NonSimplexInput(ValueError):
    pass


class BatchTooSmall(ValueError):
    def __init__(self, batch_size: int, n_unpaired: int):
        self.batch_size = batch_size
        self.n_unpaired = n_unpaired
        super().__init__(
            f"Batch of size {batch_size} cannot provide {n_unpaired} unpaired partners per sample; "
            f"the batch must be strictly larger than N."
        )


class NonFiniteLoss(ValueError):
    def __init__(self, epoch: int, step: int, value: float):
        self.epoch = epoch
        self.step = step
        self.value = value
        super().__init__(f"Training diverged at epoch {epoch}, step {step}: loss = {value}")


class DegenerateVariance(ValueError):
    def __init__(self, mean_diff: float):
        self.mean_diff = mean_diff
        self.p_value = 0.0
        super().__init__(
            f"All paired differences equal {mean_diff}; the t statistic is unbounded (p -> 0)."
        )
