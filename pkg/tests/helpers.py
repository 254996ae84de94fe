import numpy as np


def jitter(module, seed=0, scale=0.1):
    """Perturb every parameter so no ReLU input sits exactly on its kink (zero biases do)."""
    r = np.random.default_rng(seed)
    for p in module.parameters():
        p.data = p.data + r.normal(scale=scale, size=p.shape)
    return module


# Acceptance verdict lines, echoed in the pytest terminal summary by conftest.
ACCEPTANCE_LINES: list[str] = []


def verdict(criterion: int, ok: bool, detail: str, seconds: float) -> str:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({seconds:.1f}s) {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line
