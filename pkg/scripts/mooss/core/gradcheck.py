"""
Central finite-difference gradient checking.

The closure must rebuild the loss from the current parameter values on every
call. Entries whose +eps and -eps evaluations cross a relu kink (different
relu sign patterns) are skipped and counted, since the one-sided slopes
differ there and no finite difference can agree with the analytic value.
"""

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Sequence

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core import tensor as T
from mooss.core.tensor import REGISTERED_OPS, Parameter, Tensor, no_grad, trace_relu_signs
from utils.constants import GRADCHECK_ABS_FLOOR, GRADCHECK_EPS, GRADCHECK_TOL

logger = logging.getLogger(__name__)


@dataclass
class ParamCheck:
    name: str
    shape: tuple
    max_rel_err: float
    n_checked: int
    kinks_skipped: int


@dataclass
class GradCheckReport:
    """Per-parameter maximum relative error between analytic and numeric gradients."""
    tol: float
    eps: float
    params: List[ParamCheck] = field(default_factory=list)

    @property
    def max_rel_err(self) -> float:
        return max((p.max_rel_err for p in self.params), default=0.0)

    @property
    def failures(self) -> List[ParamCheck]:
        return [p for p in self.params if p.max_rel_err > self.tol]

    @property
    def passed(self) -> bool:
        return not self.failures

    def by_name(self) -> Dict[str, ParamCheck]:
        return {p.name: p for p in self.params}

    def summary(self) -> str:
        lines = [f"{'parameter':<32} {'shape':<16} {'max_rel_err':>12} {'checked':>8} {'kinks':>6}"]
        for p in self.params:
            flag = '' if p.max_rel_err <= self.tol else '  FAIL'
            lines.append(
                f"{p.name:<32} {str(p.shape):<16} {p.max_rel_err:>12.3e} {p.n_checked:>8} {p.kinks_skipped:>6}{flag}"
            )
        lines.append(f"overall max relative error {self.max_rel_err:.3e} (tol {self.tol:.0e})")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, abs_floor: float = GRADCHECK_ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), abs_floor)


def _evaluate(closure: Callable[[], Tensor]):
    with no_grad(), trace_relu_signs() as signs:
        value = closure().item()
    return value, signs


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def grad_check(
    closure: Callable[[], Tensor],
    params: Sequence[Parameter],
    eps: float = GRADCHECK_EPS,
    tol: float = GRADCHECK_TOL,
    abs_floor: float = GRADCHECK_ABS_FLOOR,
) -> GradCheckReport:
    """
    Compare analytic gradients of closure() against central differences.

    Args:
        closure: Deterministic function of the parameters returning a scalar Tensor
        params: Parameters to check; frozen ones (requires_grad=False) are skipped
        eps: Finite-difference step
        tol: Relative error tolerance used for pass/fail
        abs_floor: Denominator floor in the relative error

    Returns:
        GradCheckReport (never raises on mismatch)
    """
    checked = [p for p in params if p.requires_grad]
    for p in checked:
        p.zero_grad()
    closure().backward()
    analytic = {id(p): p.grad.copy() for p in checked}
    for p in checked:
        p.zero_grad()

    report = GradCheckReport(tol=tol, eps=eps)
    for p in checked:
        worst = 0.0
        kinks = 0
        grad = analytic[id(p)]
        for idx in np.ndindex(p.data.shape):
            original = p.data[idx]
            p.data[idx] = original + eps
            loss_plus, signs_plus = _evaluate(closure)
            p.data[idx] = original - eps
            loss_minus, signs_minus = _evaluate(closure)
            p.data[idx] = original
            if not _same_pattern(signs_plus, signs_minus):
                kinks += 1
                continue
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            worst = max(worst, relative_error(float(grad[idx]), numeric, abs_floor))
        report.params.append(ParamCheck(p.name, tuple(p.shape), worst, p.data.size - kinks, kinks))
        logger.debug(f"gradcheck {p.name}: max rel err {worst:.3e} ({kinks} kinks skipped)")
    return report


# ==============================================================================
# OPERATOR SWEEP
# ==============================================================================

def _away_from_zero(rng: np.random.Generator, shape, low: float = 0.2) -> np.ndarray:
    """Random values with |v| >= low, keeping relu and division well away from kinks and poles."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, 1.0, size=shape)


def operator_cases(rng: np.random.Generator) -> Dict[str, tuple]:
    """
    One (closure, params) case per registered operator, every tensor <= 64 entries.

    Each closure contracts the operator output with a fixed random weight so
    that every output entry contributes to the checked scalar.
    """
    def weighted(out: Tensor, weight: np.ndarray) -> Tensor:
        return T.tensor_sum(T.mul(out, weight))

    def param(name, shape, values=None):
        return Parameter(rng.normal(size=shape) if values is None else values, name)

    a, b = param('a', (3, 4)), param('b', (4,))
    w34, w3 = rng.normal(size=(3, 4)), rng.normal(size=(3,))
    m1, m2 = param('m1', (2, 3, 4)), param('m2', (4, 2))
    w232 = rng.normal(size=(2, 3, 2))
    den = param('den', (4,), _away_from_zero(rng, (4,), 0.5))
    pos = param('pos', (3, 4), rng.uniform(0.5, 2.0, size=(3, 4)))
    kinked = param('kinked', (3, 4), _away_from_zero(rng, (3, 4)))
    image = param('image', (1, 2, 5, 5))
    kernel, bias = param('kernel', (3, 2, 3, 3)), param('bias', (3,))
    w_conv = rng.normal(size=(1, 3, 2, 2))
    ln_x, gamma, beta = param('ln_x', (2, 3, 5)), param('gamma', (5,)), param('beta', (5,))
    w235 = rng.normal(size=(2, 3, 5))
    lse_mask = rng.random((3, 4)) < 0.6
    lse_mask[0] = False
    lse_mask[1, 0] = True
    index = np.array([2, 0, 2, 1])

    return {
        'add': (lambda: weighted(T.add(a, b), w34), [a, b]),
        'sub': (lambda: weighted(T.sub(a, b), w34), [a, b]),
        'neg': (lambda: weighted(T.neg(a), w34), [a]),
        'mul': (lambda: weighted(T.mul(a, b), w34), [a, b]),
        'div': (lambda: weighted(T.div(a, den), w34), [a, den]),
        'exp': (lambda: weighted(T.exp(a), w34), [a]),
        'log': (lambda: weighted(T.log(pos), w34), [pos]),
        'relu': (lambda: weighted(T.relu(kinked), w34), [kinked]),
        'sum': (lambda: weighted(T.tensor_sum(a, axis=1), w3), [a]),
        'mean': (lambda: weighted(T.mean(a, axis=1), w3), [a]),
        'reshape': (lambda: weighted(T.reshape(a, (4, 3)), w34.reshape(4, 3)), [a]),
        'transpose': (lambda: weighted(T.transpose(a), w34.T), [a]),
        'gather': (lambda: weighted(T.gather(a, index, axis=1), w34), [a]),
        'concat': (lambda: weighted(T.concat([a, T.reshape(b, (1, 4))], axis=0),
                                    np.vstack([w34, w34[:1]])), [a, b]),
        'stack': (lambda: weighted(T.stack([a, a * 2.0], axis=1), np.stack([w34, w34], axis=1)), [a]),
        'matmul': (lambda: weighted(T.matmul(m1, m2), w232), [m1, m2]),
        'conv2d': (lambda: weighted(T.conv2d(image, kernel, bias, stride=2), w_conv), [image, kernel, bias]),
        'layer_norm': (lambda: weighted(T.layer_norm(ln_x, gamma, beta), w235), [ln_x, gamma, beta]),
        'softmax': (lambda: weighted(T.softmax(a, axis=-1), w34), [a]),
        'logsumexp': (lambda: weighted(T.logsumexp(a, axis=-1, mask=lse_mask), w3), [a]),
    }


def check_operators(seeds=range(10), eps: float = GRADCHECK_EPS) -> Dict[str, float]:
    """Worst relative error per registered operator over the given seeds."""
    worst: Dict[str, float] = {}
    for seed in seeds:
        cases = operator_cases(np.random.default_rng(seed))
        missing = sorted(set(REGISTERED_OPS) - set(cases))
        if missing:
            raise KeyError(f"no gradient-check case for operator(s): {', '.join(missing)}")
        for name, (closure, params) in cases.items():
            report = grad_check(closure, params, eps=eps)
            worst[name] = max(worst.get(name, 0.0), report.max_rel_err)
    return worst
