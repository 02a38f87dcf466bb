"""
Adam optimizer with parameter groups and linear learning-rate warmup.
"""

import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# Add scripts directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from mooss.core.tensor import Parameter
from utils.constants import DEFAULT_ADAM_BETAS, DEFAULT_ADAM_EPS
from utils.validation import ConfigError, UsageError, validate_range

logger = logging.getLogger(__name__)


@dataclass
class ParamGroup:
    """Parameters sharing a learning rate and warmup length."""
    name: str
    params: List[Parameter]
    lr: float
    warmup_steps: int = 0

    def lr_at(self, step: int) -> float:
        """Learning rate for the 1-based step (linear ramp over warmup_steps)."""
        if self.warmup_steps <= 0:
            return self.lr
        return self.lr * min(1.0, step / self.warmup_steps)


class Adam:
    """
    Adam with bias correction.

    Moment buffers are allocated per parameter at construction. Parameters with
    requires_grad=False are rejected so that frozen tensors never move.
    """

    def __init__(
        self,
        groups: Sequence[ParamGroup],
        betas: Tuple[float, float] = DEFAULT_ADAM_BETAS,
        eps: float = DEFAULT_ADAM_EPS,
    ):
        self.groups = list(groups)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.step_count = 0

        validate_range(self.beta1, 'adam.beta1', 0.0, 1.0, high_inclusive=False)
        validate_range(self.beta2, 'adam.beta2', 0.0, 1.0, high_inclusive=False)
        if self.eps <= 0:
            raise ConfigError(f"adam.eps must be > 0, got {self.eps}")

        self.first_moment: Dict[int, np.ndarray] = {}
        self.second_moment: Dict[int, np.ndarray] = {}
        seen = set()
        for group in self.groups:
            if group.lr <= 0:
                raise ConfigError(f"learning rate for group '{group.name}' must be > 0, got {group.lr}")
            for p in group.params:
                if not p.requires_grad:
                    raise ConfigError(f"parameter '{p.name}' is frozen and cannot be optimized")
                if id(p) in seen:
                    raise ConfigError(f"parameter '{p.name}' appears in more than one group")
                seen.add(id(p))
                self.first_moment[id(p)] = np.zeros_like(p.data)
                self.second_moment[id(p)] = np.zeros_like(p.data)

    @property
    def params(self) -> List[Parameter]:
        return [p for group in self.groups for p in group.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        """Apply one Adam update to every parameter and advance the step counter."""
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t

        for group in self.groups:
            lr = group.lr_at(t)
            for p in group.params:
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                m = self.first_moment[id(p)]
                v = self.second_moment[id(p)]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * g * g
                m_hat = m / correction1
                v_hat = v / correction2
                p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(
    params: Sequence[Parameter],
    lr: float,
    beta1: float = DEFAULT_ADAM_BETAS[0],
    beta2: float = DEFAULT_ADAM_BETAS[1],
    eps: float = DEFAULT_ADAM_EPS,
    optimizer: Optional[Adam] = None,
) -> Adam:
    """
    Apply one Adam step to a flat parameter list.

    Pass the returned optimizer back in to continue the same moment buffers;
    params and lr must then match the single group it was built with.

    Raises:
        ConfigError: If lr <= 0
        UsageError: If params or lr disagree with the optimizer passed in
    """
    if optimizer is None:
        if lr <= 0:
            raise ConfigError(f"learning rate must be > 0, got {lr}")
        optimizer = Adam([ParamGroup('all', list(params), lr)], betas=(beta1, beta2), eps=eps)
    else:
        held = [p for group in optimizer.groups for p in group.params]
        if [id(p) for p in held] != [id(p) for p in params]:
            raise UsageError("adam_step: params differ from the ones the optimizer was built with")
        if any(group.lr != lr for group in optimizer.groups):
            raise UsageError(f"adam_step: lr={lr} differs from the optimizer learning rate")
    optimizer.step()
    return optimizer


def grad_global_norm(params: Sequence[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))
