"""Regenerate the bundled synthetic stand-in for the bone-density data.

Two body-circumference covariates correlated at about 0.81 and a binary
outcome drawn from a two-component logistic mixture.  Run from the
repository root::

    python3 scripts/make_standin.py
"""

from pathlib import Path

import numpy as np

N = 182
CORR = 0.81
PI = (0.6, 0.4)
# Coefficients on the standardized covariates (intercept, arm, bottom).
BETAS = ((-1.0, -1.5, -0.5), (1.0, 0.5, -2.0))


def main(path=Path("src/mixshrink/data/bone_standin.csv"), seed=20240182):
    rng = np.random.default_rng(seed)
    # Whiten the draws so the sample correlation equals CORR exactly.
    w = rng.standard_normal((N, 2))
    w -= w.mean(axis=0)
    w = w @ np.linalg.inv(np.linalg.cholesky(np.cov(w, rowvar=False)).T)
    z = w @ np.linalg.cholesky(np.array([[1.0, CORR], [CORR, 1.0]])).T
    arm = 31.0 + 4.0 * z[:, 0]
    bottom = 105.0 + 10.0 * z[:, 1]
    label = rng.choice(2, size=N, p=PI)
    X = np.column_stack([np.ones(N), z])
    eta = np.einsum("ij,ij->i", X, np.asarray(BETAS)[label])
    y = (rng.random(N) < 1.0 / (1.0 + np.exp(-eta))).astype(int)
    lines = ["osteoporosis,arm_circumference,bottom_circumference"]
    lines += [f"{yi},{a:.1f},{b:.1f}" for yi, a, b in zip(y, arm, bottom)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {path}: n={N}, corr={np.corrcoef(arm, bottom)[0, 1]:.3f}, mean y={y.mean():.2f}")


if __name__ == "__main__":
    main()
