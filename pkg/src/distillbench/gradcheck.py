"""Central finite-difference checks of the autodiff engine."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .datasets import seed_stream
from .losses import composite, cross_entropy, kl_distill, mse_distill

OPS_COVERED = ("matmul", "bias_add", "add", "sub", "mul", "scale", "relu", "log", "exp", "mean", "sum",
               "softmax_rows", "log_softmax_rows", "pick")


@dataclass(frozen=True)
class GradcheckResult:
    max_rel_err: float
    checked: int
    skipped: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err < tol


def numeric_grad(fn: Callable[[list[Tensor]], Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5
                 ) -> list[np.ndarray]:
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    out = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            hi = fn([Tensor(x) for x in arrays]).item()
            flat[j] = orig - h
            lo = fn([Tensor(x) for x in arrays]).item()
            flat[j] = orig
            g.reshape(-1)[j] = (hi - lo) / (2 * h)
        out.append(g)
    return out


def analytic_grad(fn: Callable[[list[Tensor]], Tensor], arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    fn(leaves).backward()
    return [t.grad if t.grad is not None else np.zeros(t.shape) for t in leaves]


def gradcheck(fn: Callable[[list[Tensor]], Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5,
              floor: float = 1e-8) -> GradcheckResult:
    """Max relative error between analytic and central-difference gradients.

    Components whose analytic gradient magnitude is at most ``floor`` are skipped.
    """
    analytic = analytic_grad(fn, arrays)
    numeric = numeric_grad(fn, arrays, h)
    worst, checked, skipped = 0.0, 0, 0
    for a, n in zip(analytic, numeric):
        for ga, gn in zip(a.reshape(-1), n.reshape(-1)):
            if abs(ga) <= floor:
                skipped += 1
                continue
            checked += 1
            worst = max(worst, abs(ga - gn) / max(abs(ga), abs(gn)))
    return GradcheckResult(worst, checked, skipped)


@dataclass
class GraphCase:
    name: str
    fn: Callable[[list[Tensor]], Tensor]
    arrays: list[np.ndarray]
    temperature: float
    loss_kind: str


def random_case(rng: np.random.Generator, index: int = 0) -> GraphCase:
    """A random composite graph ending in the distillation objective.

    Pre-activations are kept at least 1e-3 away from the ReLU kink so central
    differences with h=1e-5 never straddle it.
    """
    b = int(rng.integers(1, 5))
    d = int(rng.integers(2, 5))
    c = int(rng.integers(2, 6))
    temperature = float(rng.choice([1.0, 2.0, 4.0]))
    loss_kind = "kl" if index % 2 == 0 else "mse"
    lam = float(rng.uniform(0.1, 2.0))
    labels = rng.integers(0, c, size=b)
    teacher = rng.normal(0, 2, size=(b, c))
    mix = rng.normal(size=(b, c))
    use_exp = bool(rng.integers(0, 2))

    while True:
        x = rng.normal(size=(b, d))
        w = rng.normal(size=(d, c))
        bias = rng.normal(size=c)
        if np.min(np.abs(x @ w + bias)) > 1e-3:
            break

    def fn(ts: list[Tensor]) -> Tensor:
        x, w, bias, s = ts
        pre = ad.bias_add(ad.matmul(x, w), bias)
        hidden = ad.add(ad.relu(pre), ad.scale(pre, 0.3))
        logits = ad.sub(ad.mul(hidden, s), ad.scale(s, 0.5))
        ce = cross_entropy(logits, labels)
        kd = kl_distill(logits, teacher, temperature) if loss_kind == "kl" else mse_distill(logits, teacher)
        total = composite(ce, kd, lam, True)
        soft = ad.softmax_rows(logits, temperature)
        total = ad.add(total, ad.sum(ad.mul(soft, mix)))
        positive = ad.add(ad.mul(pre, pre), 1.0)
        total = ad.add(total, ad.scale(ad.mean(ad.log(positive)), 0.1))
        if use_exp:
            total = ad.add(total, ad.mean(ad.exp(ad.scale(logits, 0.2))))
        return total

    s = rng.uniform(0.5, 1.5, size=(b, c))
    return GraphCase(f"case{index}_{loss_kind}_T{temperature:g}", fn, [x, w, bias, s], temperature, loss_kind)


@dataclass(frozen=True)
class SuiteReport:
    cases: int
    failures: list[str]
    max_rel_err: float
    seconds: float

    @property
    def passed(self) -> bool:
        return not self.failures


def run_suite(n_cases: int = 100, seed: int = 0, tol: float = 1e-4) -> SuiteReport:
    rng = seed_stream(seed, 0xAD)
    t0 = time.perf_counter()
    failures, worst = [], 0.0
    for i in range(n_cases):
        case = random_case(rng, i)
        res = gradcheck(case.fn, case.arrays)
        worst = max(worst, res.max_rel_err)
        if not res.ok(tol):
            failures.append(f"{case.name}: rel err {res.max_rel_err:.3g}")
    return SuiteReport(n_cases, failures, worst, time.perf_counter() - t0)
