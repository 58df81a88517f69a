"""Test A refinement studies: every scheme, k in {2, 3}, delta in {-1, -1/2, 0, 2}.

Writes one CSV per configuration to results/test_a/ and prints the finest-pair rates.
"""
import argparse
import itertools
import os

from hipdg.harness import RunConfig, convergence_csv, run_convergence, write_text


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="results/test_a")
    p.add_argument("--levels", default="16,32,64,128")
    p.add_argument("--degrees", default="2,3")
    p.add_argument("--deltas", default="-1,-0.5,0,2")
    args = p.parse_args()
    os.makedirs(args.out_dir, exist_ok=True)
    levels = tuple(int(n) for n in args.levels.split(","))
    degrees = [int(k) for k in args.degrees.split(",")]
    deltas = [float(d) for d in args.deltas.split(",")]
    for scheme, k, delta in itertools.product(("sip", "nip", "iip"), degrees, deltas):
        cfg = RunConfig(test="a", scheme=scheme, k=k, delta=delta, levels=levels, deterministic=True)
        rep = run_convergence(cfg)
        write_text(os.path.join(args.out_dir, f"{scheme}_k{k}_d{delta:+g}.csv"), convergence_csv(rep, cfg))
        print(
            f"{scheme} k={k} delta={delta:+g}: enriched {rep.rates('enriched')[-1]:.2f} "
            f"(expected {rep.expected.energy_rate:g}), l2 {rep.rates('l2')[-1]:.2f} (expected {rep.expected.l2_rate:g})",
            flush=True,
        )


if __name__ == "__main__":
    main()
