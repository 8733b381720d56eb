from typing import Any, Callable, Dict

ADJUSTMENT_REGISTRY: Dict[str, Callable[..., Any]] = {}


def register_adjustment(adjustment_name: str):
    """
    a decorator for adjustment-formula registry

    Example:
        @register_adjustment("backdoor")
        def backdoor_adjust(scm, x, x_val, y, z_set, ...):
            ...
    """
    def decorator(func: Callable[..., Any]) -> Callable[..., Any]:
        if adjustment_name in ADJUSTMENT_REGISTRY:
            raise ValueError(f"Adjustment '{adjustment_name}' has already been registered")
        ADJUSTMENT_REGISTRY[adjustment_name] = func
        return func
    return decorator


def call_adjustment(adjustment_name: str, **kwargs: Any) -> Any:
    """
    Looks up an adjustment evaluator by name and calls it with the passed keyword arguments.

    Parameters:
        adjustment_name: The unique identifier of the registered evaluator.
        kwargs: Arguments of the evaluator (scm, x, x_val, y, z_set, ...).

    Returns:
        The ProbTable produced by the evaluator.
    """
    func = ADJUSTMENT_REGISTRY.get(adjustment_name)
    if func is None:
        raise ValueError(
            f"Adjustment '{adjustment_name}' can not be found in the registry.\n\n"
            f"Available adjustments:\n{sorted(ADJUSTMENT_REGISTRY.keys())}"
        )
    return func(**kwargs)
