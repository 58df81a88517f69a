"""Test C: H-SIP on square meshes.  L2 error versus alpha0 on h = 1/32, then the
refinement history at alpha0 = 2.  L2 errors use the degree-2k Gauss rule."""
import argparse
import os

from hipdg.harness import RunConfig, convergence_csv, run_alpha_sweep, run_convergence, sweep_csv, write_text


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="results/test_c")
    p.add_argument("--sweep", default="1:6:0.02")
    args = p.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    lo, hi, step = (float(v) for v in args.sweep.split(":"))
    for k in (1, 2):
        for lam in (1.0, 0.1):
            base = RunConfig(test="c", scheme="sip", k=k, lam=lam, l2_rule="gauss", deterministic=True)
            sweep = run_alpha_sweep(base.replace(levels=(32,), alpha0_sweep=(lo, hi, step)))
            write_text(os.path.join(args.out_dir, f"sweep_k{k}_lam{lam:g}.csv"), sweep_csv(sweep))
            rep = run_convergence(base)
            write_text(os.path.join(args.out_dir, f"history_k{k}_lam{lam:g}.csv"), convergence_csv(rep, base))
            errs = ", ".join(f"{lv.err_l2:.2e}" for lv in rep.levels)
            rates = ", ".join(f"{r:.2f}" for r in rep.rates("l2"))
            print(f"k={k} lambda={lam:g}: argmin alpha0 {sweep.argmin:g}; L2 {errs}; ECR {rates}", flush=True)


if __name__ == "__main__":
    main()
