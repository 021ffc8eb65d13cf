"""Regenerate the bundled TFIM(10) checkpoint used by the noise histogram config.

Exact gradient descent from the fixed seed-0 start, stopped at the first
step that crosses fidelity 0.883, then bisected along that step.
"""
from pathlib import Path

import numpy as np

from vqopt.ansatz import build_qaoa_like_tfim
from vqopt.estimator import CostFunction
from vqopt.hamiltonians import FidelityTarget, build_tfim
from vqopt.quantum import init_basis_state

N, LAYERS, TARGET, RATE = 10, 18, 0.883, 0.0049
OUT = Path(__file__).resolve().parents[1] / "src" / "vqopt" / "data" / "tfim10_f0883.txt"


def main():
    obs = build_tfim(N)
    target = FidelityTarget.ground_of(obs)
    cf = CostFunction(obs, build_qaoa_like_tfim(N, LAYERS), init_basis_state(N, "0" * N))
    theta = np.random.default_rng(0).uniform(-np.pi, np.pi, cf.d)
    fidelity = lambda t: float(target.fidelities(cf.state(t).amplitudes)[0])
    for k in range(20000):
        step = theta - RATE * cf.exact_gradient(theta)
        if fidelity(step) >= TARGET:
            break
        theta = step
    else:
        raise SystemExit("fidelity target not reached")
    lo, hi = 0.0, 1.0
    for _ in range(50):
        mid = (lo + hi) / 2
        lo, hi = (lo, mid) if fidelity(theta + mid * (step - theta)) >= TARGET else (mid, hi)
    theta = theta + hi * (step - theta)
    fid = fidelity(theta)
    lines = [f"# TFIM N={N} layers={LAYERS}; exact GD a={RATE} from seed-0 uniform start; step {k}; fidelity {fid:.6f}"]
    lines += [repr(float(t)) for t in theta]
    OUT.write_text("\n".join(lines) + "\n")
    print(OUT, k, fid)


if __name__ == "__main__":
    main()
