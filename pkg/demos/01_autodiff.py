"""A tour of the tape-based autodiff core.

We build a tiny two-layer network by hand, differentiate it on a tape, check
the result against central differences and take a few Adam steps.
"""
import numpy as np

from adamo.numerics import AdamState, GradTape, Tensor, adam_step, cross_entropy, gelu, grad_check, matmul

rng = np.random.default_rng(0)
x = rng.normal(size=(6, 4))
labels = np.array([0, 1, 2, 0, 1, 2])
w1 = Tensor(rng.normal(size=(4, 8)) * 0.5, requires_grad=True, name="w1")
w2 = Tensor(rng.normal(size=(8, 3)) * 0.5, requires_grad=True, name="w2")


def loss_fn(w1, w2):
    return cross_entropy(matmul(gelu(matmul(x, w1)), w2), labels)


# Operations record onto the tape only while it is active.
with GradTape() as tape:
    loss = loss_fn(w1, w2)
tape.backward(loss)
print(f"loss {loss.item():.4f}; |dL/dw1| = {np.abs(w1.grad).max():.4f}")

# The same gradients, verified numerically.
report = grad_check(loss_fn, [w1, w2])
print(f"grad check: max relative error {report.max_rel_error:.2e} -> {'ok' if report.passed else 'MISMATCH'}")

# A handful of optimizer steps.
state = AdamState(lr=0.05)
for step in range(50):
    with GradTape() as tape:
        loss = loss_fn(w1, w2)
    tape.backward(loss)
    adam_step([w1, w2], state)
    if step % 10 == 0:
        print(f"step {step:2d}  loss {loss.item():.4f}")
