"""
Backprop vs central finite differences.
"""
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np

import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

import config
from nn.network import MeanSquaredError, Sequential, SoftmaxCrossEntropy, create_loss


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: int
    per_param: Dict[str, float]


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)


def grad_check(network: Sequential, loss: Union[str, SoftmaxCrossEntropy, MeanSquaredError],
               x: np.ndarray, y: np.ndarray,
               fraction: float = config.GRAD_CHECK_FRACTION,
               step: float = config.GRAD_CHECK_STEP,
               seed: int = 0) -> GradCheckResult:
    """Compare backprop gradients with (L(w+h) − L(w−h)) / 2h on a random weight sample.

    A sampled weight is skipped when nudging it by ±h changes any ReLU sign or
    pooling argmax, since the loss is not differentiable across such a kink.
    """
    loss = create_loss(loss) if isinstance(loss, str) else loss
    rng = np.random.default_rng(seed)

    out = network.forward(x, training=True)
    loss.forward(out, y)
    network.backward(loss.backward())
    analytic = {name: g.copy() for name, g in network.named_grads()}
    base_pattern = network.pattern()

    def probe():
        value = loss.forward(network.forward(x, training=True), y)
        return value, network.pattern()

    worst, checked, skipped = 0.0, 0, 0
    per_param: Dict[str, float] = {}
    for name, param in network.named_params():
        flat = param.reshape(-1)
        k = max(1, int(round(fraction * flat.size)))
        picks = rng.choice(flat.size, size=k, replace=False)
        param_worst = 0.0
        for j in picks:
            saved = flat[j]
            flat[j] = saved + step
            plus, pat_plus = probe()
            flat[j] = saved - step
            minus, pat_minus = probe()
            flat[j] = saved
            if not (np.array_equal(pat_plus, base_pattern) and np.array_equal(pat_minus, base_pattern)):
                skipped += 1
                continue
            numeric = (plus - minus) / (2.0 * step)
            err = relative_error(float(analytic[name].reshape(-1)[j]), numeric)
            param_worst = max(param_worst, err)
            checked += 1
        per_param[name] = param_worst
        worst = max(worst, param_worst)

    network.forward(x, training=True)
    return GradCheckResult(max_rel_error=worst, checked=checked, skipped=skipped, per_param=per_param)
