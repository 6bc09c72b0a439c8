"""Compare diffuse and Zellner priors over a grid of g on simulated data.

    python3 scripts/prior_sensitivity.py --seed 0
"""
import argparse

from tvpdma import DmaConfig, PriorSpec, SimSpec, backtest, run_dma, simulate_dlm


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--burn", type=int, default=50)
    ap.add_argument("--g", type=float, nargs="+", default=[0.1, 1.0, 10.0, 100.0, 500.0])
    args = ap.parse_args()

    y, F, _ = simulate_dlm(SimSpec(state_var=(0.01, 0.01, 0.01, 0.01, 0.0, 0.0), seed=args.seed))
    print(f"{'prior':>8} {'g':>7} {'MSE':>7} {'MAD':>7} {'logPL':>9} {'E[size]':>8}")
    for kind in ("diffuse", "zellner"):
        for g in args.g:
            out = run_dma(y, F, DmaConfig(prior=PriorSpec(kind=kind, g=g), burn=args.burn))
            sc = backtest(out, y, args.burn)["DMA"]
            print(f"{kind:>8} {g:7g} {sc['MSE']:7.3f} {sc['MAD']:7.3f} {sc['logPL']:9.2f} "
                  f"{out.size[args.burn:].mean():8.2f}")


if __name__ == "__main__":
    main()
