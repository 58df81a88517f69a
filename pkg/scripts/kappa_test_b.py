"""Test B: unit versus normal-diffusivity penalty scaling at lambda = 1e-3, k = 1, n = 32."""
import argparse

from hipdg.harness import RunConfig, ablation_csv, run_kappa_ablation


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--lam", type=float, default=1e-3)
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--out", default=None)
    args = p.parse_args()
    rows = run_kappa_ablation(RunConfig(test="b", k=1, delta=0.0, lam=args.lam, levels=(args.n,), out=args.out))
    print(ablation_csv(rows), end="")
    for scheme in ("nip", "iip", "sip"):
        unit, normal = (r for r in rows if r.scheme == scheme)
        better = normal.err_l2 < unit.err_l2 and normal.min_value > unit.min_value
        print(f"{scheme}: normal scaling {'improves' if better else 'does not improve'} both diagnostics")


if __name__ == "__main__":
    main()
