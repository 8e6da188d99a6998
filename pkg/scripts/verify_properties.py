"""Full-size numerical property checks (decay rate, STV gap, step sigma, gradients, importance sampling)."""

import sys

from stvlearn.verify import check_decay_rate, check_gradients, check_importance_vs_exact, check_step_stv, check_stv_gap


def main():
    results = [
        check_decay_rate(),
        check_stv_gap(pairs=20),
        check_step_stv(pairs=10),
        check_gradients(points=20),
        check_importance_vs_exact(reps=20, ell=100_000),
    ]
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


if __name__ == "__main__":
    sys.exit(main())
